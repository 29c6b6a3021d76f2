#include "ssdkit/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "ssdkit/error.hpp"

namespace ssdkit {

using ordered_json = nlohmann::ordered_json;

std::optional<BBox> decode(const CenterBox& prior, const Offsets& t, const Variances& v) {
  const double cx = prior.cx + t[0] * v[0] * prior.w;
  const double cy = prior.cy + t[1] * v[1] * prior.h;
  const double w = prior.w * std::exp(t[2] * v[2]);
  const double h = prior.h * std::exp(t[3] * v[3]);
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) || !std::isfinite(h))
    return std::nullopt;
  BBox b = clip_unit(to_corner({cx, cy, w, h}));
  if (!is_valid(b)) return std::nullopt;
  return b;
}

Offsets encode(const BBox& gt, const CenterBox& prior, const Variances& v) {
  if (!(gt.width() > 0) || !(gt.height() > 0))
    throw ValidationError("encode: ground truth box has zero width or height");
  const CenterBox g = to_center(gt);
  return {(g.cx - prior.cx) / (prior.w * v[0]), (g.cy - prior.cy) / (prior.h * v[1]),
          std::log(g.w / prior.w) / v[2], std::log(g.h / prior.h) / v[3]};
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) return;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return out;
}

namespace {

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.prior_index < b.prior_index;
}

}  // namespace

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, int top_k) {
  if (!(iou_threshold > 0 && iou_threshold < 1))
    throw ValidationError("nms: iou_threshold must lie in (0, 1)");
  std::stable_sort(dets.begin(), dets.end(), ranks_before);
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    if (top_k >= 0 && static_cast<int>(kept.size()) >= top_k) break;
    bool keep = true;
    for (const auto& k : kept) {
      if (k.label == d.label && iou(k.box, d.box) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  return kept;
}

FrameDetections postprocess_frame(const RawPrediction& raw, const PriorGrid& priors,
                                  const PostprocessParams& params, std::int64_t frame) {
  FrameDetections out;
  out.frame = frame;
  const std::size_t n = priors.size();
  if (n == 0 && raw.loc.empty() && raw.logits.empty()) return out;
  if (raw.num_classes < 2) throw ValidationError("postprocess: need at least 2 classes");
  if (raw.loc.size() != 4 * n || raw.logits.size() != static_cast<std::size_t>(raw.num_classes) * n)
    throw ValidationError("postprocess: raw prediction shape does not match the prior count");
  const int nc = raw.num_classes;
  std::vector<std::vector<Detection>> per_class(nc);
  std::vector<double> prob(nc);
  for (std::size_t p = 0; p < n; ++p) {
    std::span<const double> lg(raw.logits.data() + p * nc, nc);
    for (double v : lg)
      if (!std::isfinite(v)) throw ValidationError("postprocess: non-finite logit at prior " + std::to_string(p));
    softmax_into(lg, prob);
    bool any = false;
    for (int c = 1; c < nc; ++c) any = any || prob[c] >= params.conf_floor;
    if (!any) continue;
    const Offsets t{raw.loc[4 * p], raw.loc[4 * p + 1], raw.loc[4 * p + 2], raw.loc[4 * p + 3]};
    auto box = decode(priors.priors[p], t, params.variances);
    if (!box) continue;
    for (int c = 1; c < nc; ++c) {
      if (prob[c] >= params.conf_floor && prob[c] > 0)
        per_class[c].push_back({*box, c, prob[c], false, p});
    }
  }
  for (int c = 1; c < nc; ++c) {
    auto kept = nms(std::move(per_class[c]), params.nms_threshold, params.top_k);
    out.dets.insert(out.dets.end(), kept.begin(), kept.end());
  }
  std::stable_sort(out.dets.begin(), out.dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.prior_index != b.prior_index) return a.prior_index < b.prior_index;
    return a.label < b.label;
  });
  return out;
}

std::string to_jsonl(const FrameDetections& fd) {
  ordered_json root;
  root["frame"] = fd.frame;
  ordered_json dets = ordered_json::array();
  for (const auto& d : fd.dets) {
    ordered_json j;
    j["box"] = {d.box.x1, d.box.y1, d.box.x2, d.box.y2};
    j["label"] = d.label;
    j["score"] = d.score;
    j["retained"] = d.retained;
    dets.push_back(std::move(j));
  }
  root["dets"] = std::move(dets);
  return root.dump();
}

FrameDetections frame_from_jsonl(const std::string& line) {
  try {
    const auto root = ordered_json::parse(line);
    FrameDetections fd;
    fd.frame = root.at("frame").get<std::int64_t>();
    std::size_t idx = 0;
    for (const auto& j : root.at("dets")) {
      const auto& b = j.at("box");
      if (!b.is_array() || b.size() != 4) throw ValidationError("detections: box must have 4 coordinates");
      Detection d;
      d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      d.label = j.at("label").get<int>();
      d.score = j.at("score").get<double>();
      d.retained = j.value("retained", false);
      d.prior_index = idx++;
      if (!is_valid(d.box)) throw ValidationError("detections: invalid box in frame " + std::to_string(fd.frame));
      if (d.label < 1) throw ValidationError("detections: label must be >= 1");
      if (!(d.score > 0 && d.score <= 1)) throw ValidationError("detections: score must lie in (0, 1]");
      fd.dets.push_back(d);
    }
    return fd;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("detections: ") + e.what());
  }
}

std::string raw_to_jsonl(const RawPrediction& raw, std::int64_t frame) {
  ordered_json root;
  root["frame"] = frame;
  root["num_classes"] = raw.num_classes;
  root["loc"] = raw.loc;
  root["logits"] = raw.logits;
  return root.dump();
}

RawPrediction raw_from_jsonl(const std::string& line, std::int64_t* frame) {
  try {
    const auto root = ordered_json::parse(line);
    RawPrediction r;
    if (frame) *frame = root.at("frame").get<std::int64_t>();
    r.num_classes = root.at("num_classes").get<int>();
    r.loc = root.at("loc").get<std::vector<double>>();
    r.logits = root.at("logits").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("raw predictions: ") + e.what());
  }
}

}  // namespace ssdkit
