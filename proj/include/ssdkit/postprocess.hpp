#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssdkit/geometry.hpp"
#include "ssdkit/priorgrid.hpp"

namespace ssdkit {

using Offsets = std::array<double, 4>;
using Variances = std::array<double, 4>;

inline constexpr Variances kDefaultVariances{0.1, 0.1, 0.2, 0.2};

/// Flat per-prior head outputs: loc is P x 4 (tx, ty, tw, th), logits is
/// P x classes with class 0 the background.
struct RawPrediction {
  std::vector<double> loc;
  std::vector<double> logits;
  int num_classes = 0;

  std::size_t prior_count() const { return num_classes > 0 ? logits.size() / num_classes : 0; }
};

struct Detection {
  BBox box;
  int label = 1;
  double score = 0;
  bool retained = false;
  /// Prior that produced the box; only used for deterministic ordering.
  std::size_t prior_index = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct FrameDetections {
  std::int64_t frame = 0;
  std::vector<Detection> dets;

  friend bool operator==(const FrameDetections&, const FrameDetections&) = default;
};

/// Returns nullopt when the decoded box is not finite (the detection is skipped).
std::optional<BBox> decode(const CenterBox& prior, const Offsets& offsets,
                           const Variances& variances = kDefaultVariances);

/// Inverse of decode (without clipping). Throws ValidationError for a
/// zero-width or zero-height ground truth.
Offsets encode(const BBox& gt, const CenterBox& prior, const Variances& variances = kDefaultVariances);

/// Numerically stable softmax of one prior's logits.
std::vector<double> softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

/// Greedy per-label NMS. Input order does not matter: candidates are ranked by
/// score descending, then prior index ascending.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, int top_k);

struct PostprocessParams {
  double conf_floor = 0.2;
  double nms_threshold = 0.45;
  int top_k = 200;
  Variances variances = kDefaultVariances;
};

/// decode -> softmax -> drop background and scores below conf_floor ->
/// per-class NMS -> merged list sorted by score.
FrameDetections postprocess_frame(const RawPrediction& raw, const PriorGrid& priors,
                                  const PostprocessParams& params = {}, std::int64_t frame = 0);

/// One JSONL record: {"frame": int, "dets": [{"box": [...], "label", "score", "retained"}]}.
std::string to_jsonl(const FrameDetections& fd);
FrameDetections frame_from_jsonl(const std::string& line);

/// Raw head output record: {"frame": int, "num_classes": int, "loc": [...], "logits": [...]}.
std::string raw_to_jsonl(const RawPrediction& raw, std::int64_t frame);
RawPrediction raw_from_jsonl(const std::string& line, std::int64_t* frame = nullptr);

}  // namespace ssdkit
