#include "ssdkit/evaluate.hpp"

#include <algorithm>
#include <json.hpp>

#include "ssdkit/error.hpp"

namespace ssdkit {

ApResult average_precision(std::span<const FrameDetections> dets, std::span<const GroundTruth> gts,
                           int num_classes, double iou_threshold) {
  if (num_classes < 2) throw ValidationError("evaluate: need at least 2 classes");
  if (dets.size() != gts.size()) throw ValidationError("evaluate: detection and ground-truth frame counts differ");
  ApResult r;
  r.per_class.assign(static_cast<std::size_t>(num_classes), 0.0);
  r.gt_count.assign(static_cast<std::size_t>(num_classes), 0);
  for (const auto& g : gts) {
    for (const auto& b : g) {
      if (b.label < 1 || b.label >= num_classes)
        throw ValidationError("evaluate: ground-truth label " + std::to_string(b.label) + " out of range");
      ++r.gt_count[static_cast<std::size_t>(b.label)];
    }
  }

  struct Ranked {
    double score;
    std::size_t image;
    std::size_t order;
  };
  int classes_with_gt = 0;
  double sum = 0;
  for (int c = 1; c < num_classes; ++c) {
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < dets.size(); ++i)
      for (std::size_t k = 0; k < dets[i].dets.size(); ++k)
        if (dets[i].dets[k].label == c) ranked.push_back({dets[i].dets[k].score, i, k});
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image != b.image) return a.image < b.image;
      return a.order < b.order;
    });
    const std::size_t npos = r.gt_count[static_cast<std::size_t>(c)];
    if (npos == 0) continue;
    ++classes_with_gt;

    std::vector<std::vector<char>> claimed(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) claimed[i].assign(gts[i].size(), 0);
    std::vector<double> precision, recall;
    std::size_t tp = 0, fp = 0;
    for (const auto& d : ranked) {
      const BBox& box = dets[d.image].dets[d.order].box;
      double best = -1;
      std::size_t best_g = 0;
      const auto& g = gts[d.image];
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (g[j].label != c) continue;
        const double o = iou(box, g[j].box);
        if (o > best) {
          best = o;
          best_g = j;
        }
      }
      if (best >= iou_threshold && !claimed[d.image][best_g]) {
        claimed[d.image][best_g] = 1;
        ++tp;
      } else {
        ++fp;
      }
      precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
      recall.push_back(static_cast<double>(tp) / static_cast<double>(npos));
    }
    // Precision envelope, then area over recall steps.
    for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0;
    double prev_recall = 0;
    for (std::size_t k = 0; k < precision.size(); ++k) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
    r.per_class[static_cast<std::size_t>(c)] = ap;
    sum += ap;
  }
  r.mean = classes_with_gt > 0 ? sum / classes_with_gt : 0.0;
  return r;
}

std::string gt_to_jsonl(const GroundTruth& gt, std::int64_t frame) {
  nlohmann::ordered_json root;
  root["frame"] = frame;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& g : gt) {
    nlohmann::ordered_json j;
    j["box"] = {g.box.x1, g.box.y1, g.box.x2, g.box.y2};
    j["label"] = g.label;
    arr.push_back(std::move(j));
  }
  root["gt"] = std::move(arr);
  return root.dump();
}

GroundTruth gt_from_jsonl(const std::string& line, std::int64_t* frame) {
  try {
    const auto root = nlohmann::json::parse(line);
    if (frame) *frame = root.at("frame").get<std::int64_t>();
    GroundTruth gt;
    for (const auto& j : root.at("gt")) {
      const auto& b = j.at("box");
      if (!b.is_array() || b.size() != 4) throw ValidationError("ground truth: box must have 4 coordinates");
      GroundTruthBox g{{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                       j.at("label").get<int>()};
      if (!is_valid(g.box) || !(g.box.area() > 0)) throw ValidationError("ground truth: invalid box");
      if (g.label < 1) throw ValidationError("ground truth: label must be >= 1");
      gt.push_back(g);
    }
    return gt;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("ground truth: ") + e.what());
  }
}

}  // namespace ssdkit
