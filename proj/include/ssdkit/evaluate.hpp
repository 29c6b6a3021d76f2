#pragma once

#include <span>
#include <vector>

#include "ssdkit/multibox.hpp"
#include "ssdkit/postprocess.hpp"

namespace ssdkit {

struct ApResult {
  /// Indexed by class; entry 0 (background) is unused.
  std::vector<double> per_class;
  std::vector<std::size_t> gt_count;
  /// Mean over classes that have at least one ground-truth box.
  double mean = 0;
};

/// AP at an IOU threshold: detections of a class are ranked by score
/// (ties: image, then list order), each is matched to its best-overlapping
/// ground truth of that class (a repeat hit on a claimed box is a false
/// positive, as in VOC), and AP is the area under the
/// precision envelope of the resulting PR curve (all points, no 11-point
/// sampling).
ApResult average_precision(std::span<const FrameDetections> dets, std::span<const GroundTruth> gts,
                           int num_classes, double iou_threshold = 0.5);

/// Ground truth JSONL: {"frame": int, "gt": [{"box": [x1,y1,x2,y2], "label": int}]}.
std::string gt_to_jsonl(const GroundTruth& gt, std::int64_t frame);
GroundTruth gt_from_jsonl(const std::string& line, std::int64_t* frame = nullptr);

}  // namespace ssdkit
