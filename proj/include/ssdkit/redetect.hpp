#pragma once

#include <cstdint>
#include <vector>

#include "ssdkit/postprocess.hpp"

namespace ssdkit {

struct TrackerConfig {
  double candidate_floor = 0.2;
  double display_threshold = 0.5;
  double match_iou_min = 0.3;
};

/// Throws ValidationError unless 0 < floor <= display < 1 and 0 < match < 1.
void validate(const TrackerConfig& cfg);

/// Re-detection smoothing state for one video stream. Low-confidence
/// detections survive only when they overlap something emitted on the
/// previous frame; nothing is ever emitted that the detector did not produce.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {});

  FrameDetections step(const FrameDetections& current);
  void reset();

  const TrackerConfig& config() const { return cfg_; }
  const FrameDetections& previous() const { return prev_; }
  std::int64_t frame_index() const { return frame_index_; }

 private:
  struct Pair {
    double iou;
    std::size_t cur;
    std::size_t prev;
  };

  TrackerConfig cfg_;
  FrameDetections prev_;
  std::int64_t frame_index_ = 0;
  // Scratch buffers reused across frames.
  std::vector<Pair> pairs_;
  std::vector<char> cur_taken_;
  std::vector<char> prev_taken_;
};

std::vector<FrameDetections> run_sequence(const std::vector<FrameDetections>& frames,
                                          const TrackerConfig& cfg = {});

}  // namespace ssdkit
