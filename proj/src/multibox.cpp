#include "ssdkit/multibox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssdkit/error.hpp"

namespace ssdkit {

void validate(const LossConfig& c) {
  if (!(c.match_threshold > 0 && c.match_threshold <= 1)) throw ValidationError("loss: match_threshold must lie in (0, 1]");
  if (c.neg_pos_ratio <= 0) throw ValidationError("loss: neg_pos_ratio must be positive");
  if (c.empty_frame_neg_count <= 0) throw ValidationError("loss: empty_frame_neg_count must be positive");
  if (!(c.loc_weight > 0)) throw ValidationError("loss: loc_weight must be positive");
  for (double v : c.variances)
    if (!(v > 0)) throw ValidationError("loss: variances must be positive");
}

std::size_t MatchResult::num_positives() const {
  return static_cast<std::size_t>(std::count_if(label.begin(), label.end(), [](int l) { return l > 0; }));
}

MatchResult match(std::span<const CenterBox> priors, const GroundTruth& gts, const LossConfig& cfg) {
  const std::size_t np = priors.size();
  const std::size_t ng = gts.size();
  MatchResult m;
  m.label.assign(np, 0);
  m.gt_index.assign(np, -1);
  if (np == 0 || ng == 0) return m;

  std::vector<double> overlap(np * ng);
  for (std::size_t p = 0; p < np; ++p) {
    const BBox pb = to_corner(priors[p]);
    for (std::size_t g = 0; g < ng; ++g) overlap[p * ng + g] = iou(pb, gts[g].box);
  }

  std::vector<char> gt_done(ng, 0);
  for (std::size_t round = 0; round < ng; ++round) {
    double best = 0;
    std::size_t bp = np, bg = ng;
    for (std::size_t g = 0; g < ng; ++g) {
      if (gt_done[g]) continue;
      for (std::size_t p = 0; p < np; ++p) {
        if (m.gt_index[p] >= 0) continue;
        if (overlap[p * ng + g] > best) {
          best = overlap[p * ng + g];
          bp = p;
          bg = g;
        }
      }
    }
    if (bp == np) break;
    gt_done[bg] = 1;
    m.gt_index[bp] = static_cast<int>(bg);
    m.label[bp] = gts[bg].label;
  }

  for (std::size_t p = 0; p < np; ++p) {
    if (m.gt_index[p] >= 0) continue;
    double best = -1;
    std::size_t bg = ng;
    for (std::size_t g = 0; g < ng; ++g) {
      if (overlap[p * ng + g] > best) {
        best = overlap[p * ng + g];
        bg = g;
      }
    }
    if (best >= cfg.match_threshold) {
      m.gt_index[p] = static_cast<int>(bg);
      m.label[p] = gts[bg].label;
    }
  }
  return m;
}

SmoothL1 smooth_l1(double x) {
  const double a = std::abs(x);
  if (a < 1) return {0.5 * x * x, x};
  return {a - 0.5, x > 0 ? 1.0 : -1.0};
}

LossResult multibox_loss(const RawPrediction& raw, const MatchResult& m, std::span<const CenterBox> priors,
                         const GroundTruth& gts, const LossConfig& cfg) {
  const std::size_t np = priors.size();
  const int nc = raw.num_classes;
  if (nc < 2) throw ValidationError("loss: need at least 2 classes");
  if (raw.loc.size() != 4 * np || raw.logits.size() != np * static_cast<std::size_t>(nc) ||
      m.label.size() != np || m.gt_index.size() != np)
    throw ValidationError("loss: prediction, match and prior sizes disagree");

  LossResult r;
  r.grad_loc.assign(raw.loc.size(), 0.0);
  r.grad_logits.assign(raw.logits.size(), 0.0);

  // Per-prior log-sum-exp, softmax and background cross-entropy.
  std::vector<double> lse(np);
  std::vector<double> bg_loss(np);
  for (std::size_t p = 0; p < np; ++p) {
    const double* lg = raw.logits.data() + p * nc;
    const double mx = *std::max_element(lg, lg + nc);
    double s = 0;
    for (int c = 0; c < nc; ++c) s += std::exp(lg[c] - mx);
    lse[p] = mx + std::log(s);
    bg_loss[p] = lse[p] - lg[0];
    if (!std::isfinite(bg_loss[p])) throw NumericError("loss: non-finite confidence term at prior " + std::to_string(p));
  }

  std::vector<std::size_t> pos;
  for (std::size_t p = 0; p < np; ++p)
    if (m.positive(p)) pos.push_back(p);
  r.num_positives = pos.size();

  std::size_t want_neg;
  if (!pos.empty()) {
    want_neg = static_cast<std::size_t>(cfg.neg_pos_ratio) * pos.size();
  } else if (cfg.empty_frame_mode) {
    want_neg = static_cast<std::size_t>(cfg.empty_frame_neg_count);
  } else {
    return r;
  }

  std::vector<std::size_t> negs;
  for (std::size_t p = 0; p < np; ++p)
    if (!m.positive(p)) negs.push_back(p);
  const std::size_t k = std::min(want_neg, negs.size());
  std::partial_sort(negs.begin(), negs.begin() + static_cast<std::ptrdiff_t>(k), negs.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (bg_loss[a] != bg_loss[b]) return bg_loss[a] > bg_loss[b];
                      return a < b;
                    });
  negs.resize(k);
  r.negatives = negs;

  const double norm = !pos.empty() ? static_cast<double>(pos.size()) : static_cast<double>(k);
  if (norm == 0) return r;

  auto add_ce = [&](std::size_t p, int target) {
    const double* lg = raw.logits.data() + p * nc;
    double* gl = r.grad_logits.data() + p * nc;
    r.conf_loss += lse[p] - lg[target];
    for (int c = 0; c < nc; ++c) gl[c] = std::exp(lg[c] - lse[p]) / norm;
    gl[target] -= 1.0 / norm;
  };

  for (std::size_t p : pos) {
    add_ce(p, m.label[p]);
    const auto& gt = gts.at(static_cast<std::size_t>(m.gt_index[p])).box;
    const Offsets target = encode(gt, priors[p], cfg.variances);
    for (int j = 0; j < 4; ++j) {
      const auto s = smooth_l1(raw.loc[4 * p + j] - target[j]);
      r.loc_loss += s.value;
      r.grad_loc[4 * p + j] = cfg.loc_weight * s.grad / norm;
    }
    if (!std::isfinite(r.loc_loss)) throw NumericError("loss: non-finite localization term at prior " + std::to_string(p));
  }
  for (std::size_t p : negs) add_ce(p, 0);

  r.loss = (r.conf_loss + cfg.loc_weight * r.loc_loss) / norm;
  if (!std::isfinite(r.loss)) throw NumericError("loss: non-finite total loss");
  return r;
}

}  // namespace ssdkit
