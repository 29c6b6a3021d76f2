#pragma once

#include <cstddef>
#include <vector>

#include "ssdkit/geometry.hpp"
#include "ssdkit/postprocess.hpp"
#include "ssdkit/priorgrid.hpp"

namespace ssdkit {

struct GroundTruthBox {
  BBox box;
  int label = 1;
  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

using GroundTruth = std::vector<GroundTruthBox>;

struct LossConfig {
  double match_threshold = 0.5;
  int neg_pos_ratio = 3;
  /// Let images without any matched prior contribute a negatives-only term.
  bool empty_frame_mode = false;
  int empty_frame_neg_count = 16;
  double loc_weight = 1.0;
  Variances variances = kDefaultVariances;
};

void validate(const LossConfig& cfg);

struct MatchResult {
  /// Per prior: matched class (0 = background) and gt index (-1 if none).
  std::vector<int> label;
  std::vector<int> gt_index;

  bool positive(std::size_t p) const { return label[p] > 0; }
  std::size_t num_positives() const;
};

/// Bipartite step first (repeatedly pair the globally best remaining
/// gt/prior), then every other prior with IOU >= match_threshold to some gt
/// takes its best gt. A gt that overlaps no prior at all stays unmatched.
MatchResult match(std::span<const CenterBox> priors, const GroundTruth& gts, const LossConfig& cfg);
inline MatchResult match(const PriorGrid& priors, const GroundTruth& gts, const LossConfig& cfg) {
  return match(std::span<const CenterBox>(priors.priors), gts, cfg);
}

struct SmoothL1 {
  double value;
  double grad;
};

/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
SmoothL1 smooth_l1(double x);

struct LossResult {
  double loss = 0;
  double conf_loss = 0;
  double loc_loss = 0;
  std::size_t num_positives = 0;
  /// Background priors that entered the confidence term, in selection order.
  std::vector<std::size_t> negatives;
  /// d loss / d raw, laid out like RawPrediction::loc and ::logits.
  std::vector<double> grad_loc;
  std::vector<double> grad_logits;
};

/// Multibox loss for one image with analytic gradients.
/// With N positives: (conf + loc_weight * loc) / N, where conf covers the
/// positives plus the neg_pos_ratio * N hardest negatives. With N = 0 the loss
/// is 0 unless empty_frame_mode is on, in which case it is the mean
/// cross-entropy of the empty_frame_neg_count hardest negatives.
/// Throws NumericError naming the prior if a non-finite term appears.
LossResult multibox_loss(const RawPrediction& raw, const MatchResult& m, std::span<const CenterBox> priors,
                         const GroundTruth& gts, const LossConfig& cfg);
inline LossResult multibox_loss(const RawPrediction& raw, const MatchResult& m, const PriorGrid& priors,
                                const GroundTruth& gts, const LossConfig& cfg) {
  return multibox_loss(raw, m, std::span<const CenterBox>(priors.priors), gts, cfg);
}

}  // namespace ssdkit
