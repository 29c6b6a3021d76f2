// End-to-end toy pipeline: pretrain, prune, recover, mine, split branch.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "ssdkit/pruner.hpp"
#include "ssdkit/toytrain.hpp"

using namespace ssdkit;

namespace {

struct Trained {
  ToyModel model;
  ToyData data;
};

Trained& pretrained() {
  static Trained t = [] {
    Trained r{make_toy_model(mix_seed(5, 7)), make_toy_data(5, kLowResW, kLowResH)};
    TrainOptions opts;
    opts.evaluate_each_epoch = false;
    train(r.model, r.data.train, {}, default_schedule(Stage::pretrain_lowres, 5), opts);
    return r;
  }();
  return t;
}

}  // namespace

TEST_CASE("post-prune fine-tuning recovers at least 90% of AP at ratio 0.25") {
  auto& t = pretrained();
  const double ap_before = evaluate_ap(t.model, t.data.val).mean;
  MESSAGE("pretrained mean AP " << ap_before);
  CHECK(ap_before > 0.5);

  PruneReport report;
  ToyModel pruned = prune_model(t.model, {0.25, 9, {}}, &report);
  CHECK(report.after.total_macs < report.before.total_macs);
  const double ap_pruned = evaluate_ap(pruned, t.data.val).mean;
  TrainOptions opts;
  opts.evaluate_each_epoch = false;
  train(pruned, t.data.train, {}, default_schedule(Stage::post_prune, 9), opts);
  const double ap_after = evaluate_ap(pruned, t.data.val).mean;
  MESSAGE("pruned AP " << ap_pruned << " -> fine-tuned AP " << ap_after);
  CHECK(ap_after >= 0.9 * ap_before);
}

TEST_CASE("mined false positives are positive-free scenes that fire above 0.3") {
  auto& t = pretrained();
  ToyModel m = t.model;
  const auto mined = mine_false_positives(m, t.data.distractors, 0.3);
  MESSAGE("mined " << mined.size() << " of " << t.data.distractors.size());
  for (const auto& s : mined) {
    CHECK(s.gt.empty());
    const auto fd = detect(m, {s}, 0.3);
    bool fires = false;
    for (const auto& d : fd[0].dets) fires = fires || d.score > 0.3;
    CHECK(fires);
  }
}

TEST_CASE("split first branch trains end to end at the wide resolution") {
  StageRequest req;
  req.seed = 2;
  req.epochs = 2;
  req.split_first_branch = true;
  req.data = {128, 32, 16, 16};
  const auto pre = run_stage(req);
  int heads = 0;
  for (const auto& l : pre.graph.layers) heads += l.kind == LayerKind::detect_head;
  CHECK(heads == 3);

  StageRequest fine;
  fine.stage = Stage::finetune_highres;
  fine.seed = 2;
  fine.epochs = 1;
  fine.init = pre.weights;
  fine.graph = pre.graph;
  fine.data = req.data;
  const auto out = run_stage(fine);
  CHECK(out.graph.input_w == kHighResW);
  CHECK(out.graph.input_h == kHighResH);
  CHECK(out.log.epochs.size() == 1);
}
