#include "ssdkit/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "ssdkit/error.hpp"
#include "ssdkit/random.hpp"

namespace ssdkit {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::pretrain_lowres: return "pretrain";
    case Stage::finetune_highres: return "finetune";
    case Stage::fp_suppress: return "fp-suppress";
    case Stage::post_prune: return "post-prune";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : {Stage::pretrain_lowres, Stage::finetune_highres, Stage::fp_suppress, Stage::post_prune})
    if (to_string(st) == s) return st;
  throw ValidationError("unknown stage '" + std::string(s) + "'");
}

void validate(const TrainSchedule& s) {
  if (s.epochs < 0) throw ValidationError("schedule: epochs must be non-negative");
  if (s.batch_size <= 0) throw ValidationError("schedule: batch size must be positive");
  if (!(s.learning_rate > 0)) throw ValidationError("schedule: learning rate must be positive");
  if (!(s.momentum >= 0 && s.momentum < 1)) throw ValidationError("schedule: momentum must lie in [0, 1)");
  if (!(s.weight_decay >= 0)) throw ValidationError("schedule: weight decay must be non-negative");
}

std::vector<PriorSpec> toy_prior_specs(bool split_first_branch) {
  PriorSpec a;
  a.feature_map_w = a.feature_map_h = 16;
  a.min_size = 8;
  a.max_size = 20;
  a.aspect_ratios = {2};
  a.input_w = kLowResW;
  a.input_h = kLowResH;
  PriorSpec b = a;
  b.feature_map_w = b.feature_map_h = 8;
  b.min_size = 20;
  b.max_size = 44;
  if (split_first_branch) {
    auto [lo, hi] = split_branch(a);
    return {lo, hi, b};
  }
  return {a, b};
}

namespace {

ToyModel assemble(ToyNet net, std::vector<PriorSpec> specs) {
  net.check_priors(specs);
  PriorGrid priors = generate(specs);
  return ToyModel{std::move(net), std::move(specs), std::move(priors)};
}

}  // namespace

ToyModel make_toy_model(std::uint64_t init_seed, bool split_first_branch) {
  auto specs = toy_prior_specs(split_first_branch);
  NetGraph g = toy_graph(kLowResW, kLowResH, kToyClasses, specs.front().boxes_per_location(), split_first_branch);
  return assemble(ToyNet(std::move(g), kToyClasses, init_seed), std::move(specs));
}

ToyModel make_toy_model(const NetGraph& graph, const WeightStore& weights, std::vector<PriorSpec> specs) {
  return assemble(ToyNet(graph, kToyClasses, weights), std::move(specs));
}

void retarget(ToyModel& m, int width, int height) {
  m.net.set_input_size(width, height);
  for (auto& s : m.specs) s = rescale(s, width, height);
  m.net.check_priors(m.specs);
  m.priors = generate(m.specs);
}

std::vector<double> scene_input(const SynthScene& s) {
  std::vector<double> x(s.image.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = s.image[i] - 0.5;
  return x;
}

std::string to_jsonl(const TrainLog& log) {
  std::string out;
  for (const auto& e : log.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["ap_disc"] = e.ap_disc;
    j["ap_bar"] = e.ap_bar;
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

void check_scene(const ToyModel& m, const SynthScene& s) {
  if (s.width != m.net.input_w() || s.height != m.net.input_h())
    throw ValidationError("toy train: scene resolution " + std::to_string(s.width) + "x" + std::to_string(s.height) +
                          " does not match the model input " + std::to_string(m.net.input_w()) + "x" +
                          std::to_string(m.net.input_h()));
}

double image_step(ToyModel& m, const SynthScene& s, const MatchResult& match, const LossConfig& cfg) {
  const RawPrediction raw = m.net.forward(scene_input(s));
  const LossResult lr = multibox_loss(raw, match, m.priors, s.gt, cfg);
  if (lr.num_positives > 0 || !lr.negatives.empty()) m.net.backward(lr.grad_loc, lr.grad_logits);
  return lr.loss;
}

}  // namespace

TrainLog train(ToyModel& m, const std::vector<SynthScene>& train_set, const std::vector<SynthScene>& val_set,
               const TrainSchedule& schedule, const TrainOptions& options) {
  validate(schedule);
  validate(options.loss);
  for (const auto& s : train_set) check_scene(m, s);
  for (const auto& s : val_set) check_scene(m, s);
  const bool use_extra = options.extra && !options.extra->empty() && options.extra_fraction > 0;
  if (use_extra)
    for (const auto& s : *options.extra) check_scene(m, s);

  std::vector<MatchResult> matches;
  matches.reserve(train_set.size());
  for (const auto& s : train_set) matches.push_back(match(m.priors, s.gt, options.loss));
  std::vector<MatchResult> extra_matches;
  if (use_extra)
    for (const auto& s : *options.extra) extra_matches.push_back(match(m.priors, s.gt, options.loss));

  TrainLog log;
  if (train_set.empty()) return log;
  Rng rng(schedule.seed);
  std::vector<std::size_t> order(train_set.size());
  std::vector<std::size_t> extra_order(use_extra ? options.extra->size() : 0);
  std::iota(extra_order.begin(), extra_order.end(), 0);
  std::size_t extra_cursor = extra_order.size();
  const std::size_t bs = static_cast<std::size_t>(schedule.batch_size);
  const std::size_t extra_per_batch =
      use_extra ? static_cast<std::size_t>(std::lround(options.extra_fraction * static_cast<double>(bs))) : 0;

  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0;
    std::size_t images = 0;
    std::size_t step_in_epoch = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      if (options.max_steps && log.steps >= options.max_steps) break;
      const std::size_t end = std::min(order.size(), start + bs);
      m.net.zero_grad();
      std::size_t batch_images = 0;
      try {
        for (std::size_t k = start; k < end; ++k) {
          loss_sum += image_step(m, train_set[order[k]], matches[order[k]], options.loss);
          ++batch_images;
        }
        for (std::size_t e = 0; e < extra_per_batch; ++e) {
          if (extra_cursor >= extra_order.size()) {
            for (std::size_t i = extra_order.size(); i > 1; --i) std::swap(extra_order[i - 1], extra_order[rng.below(i)]);
            extra_cursor = 0;
          }
          const std::size_t idx = extra_order[extra_cursor++];
          loss_sum += image_step(m, (*options.extra)[idx], extra_matches[idx], options.loss);
          ++batch_images;
        }
      } catch (const NumericError& e) {
        throw NumericError("toy train: diverged at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step_in_epoch) + ": " + e.what());
      }
      images += batch_images;
      m.net.sgd_step(schedule.learning_rate, schedule.momentum, schedule.weight_decay,
                     static_cast<double>(batch_images));
      if (!m.net.all_finite())
        throw NumericError("toy train: diverged at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step_in_epoch) + ": non-finite weights");
      ++step_in_epoch;
      ++log.steps;
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.loss = images ? loss_sum / static_cast<double>(images) : 0.0;
    if (!std::isfinite(em.loss))
      throw NumericError("toy train: diverged at epoch " + std::to_string(epoch) + ": non-finite loss");
    if (options.evaluate_each_epoch && !val_set.empty()) {
      em.val_loss = validation_loss(m, val_set, options.loss);
      const ApResult ap = evaluate_ap(m, val_set);
      em.ap_disc = ap.per_class[kDisc];
      em.ap_bar = ap.per_class[kBar];
    }
    log.epochs.push_back(em);
  }
  return log;
}

double validation_loss(ToyModel& m, const std::vector<SynthScene>& scenes, const LossConfig& cfg) {
  if (scenes.empty()) return 0.0;
  LossConfig c = cfg;
  c.empty_frame_mode = false;
  double sum = 0;
  for (const auto& s : scenes) {
    check_scene(m, s);
    const RawPrediction raw = m.net.forward(scene_input(s));
    sum += multibox_loss(raw, match(m.priors, s.gt, c), m.priors, s.gt, c).loss;
  }
  return sum / static_cast<double>(scenes.size());
}

std::vector<FrameDetections> detect(ToyModel& m, const std::vector<SynthScene>& scenes, double conf_floor) {
  PostprocessParams pp;
  pp.conf_floor = conf_floor;
  std::vector<FrameDetections> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    check_scene(m, scenes[i]);
    out.push_back(postprocess_frame(m.net.forward(scene_input(scenes[i])), m.priors, pp, static_cast<std::int64_t>(i)));
  }
  return out;
}

ApResult evaluate_ap(ToyModel& m, const std::vector<SynthScene>& scenes) {
  const auto dets = detect(m, scenes);
  std::vector<GroundTruth> gts;
  gts.reserve(scenes.size());
  for (const auto& s : scenes) gts.push_back(s.gt);
  return average_precision(dets, gts, kToyClasses);
}

double mean_max_score(ToyModel& m, const std::vector<SynthScene>& scenes) {
  if (scenes.empty()) return 0.0;
  double sum = 0;
  std::vector<double> prob(kToyClasses);
  for (const auto& s : scenes) {
    check_scene(m, s);
    const RawPrediction raw = m.net.forward(scene_input(s));
    double best = 0;
    for (std::size_t p = 0; p < raw.prior_count(); ++p) {
      softmax_into(std::span<const double>(raw.logits.data() + p * kToyClasses, kToyClasses), prob);
      for (int c = 1; c < kToyClasses; ++c) best = std::max(best, prob[c]);
    }
    sum += best;
  }
  return sum / static_cast<double>(scenes.size());
}

std::vector<SynthScene> mine_false_positives(ToyModel& m, const std::vector<SynthScene>& scenes, double threshold) {
  std::vector<SynthScene> mined;
  PostprocessParams pp;
  pp.conf_floor = threshold;
  for (const auto& s : scenes) {
    if (!s.gt.empty()) continue;
    check_scene(m, s);
    const auto fd = postprocess_frame(m.net.forward(scene_input(s)), m.priors, pp);
    if (std::any_of(fd.dets.begin(), fd.dets.end(), [&](const Detection& d) { return d.score > threshold; }))
      mined.push_back(s);
  }
  return mined;
}

FpSuppressResult fp_suppress(ToyModel& m, const std::vector<SynthScene>& base, const std::vector<SynthScene>& distractors,
                             const std::vector<SynthScene>& val, const FpSuppressOptions& o) {
  if (!(o.batch_expansion > 0) || !(o.lr_factor > 0) || o.epochs < 0)
    throw ValidationError("fp suppress: expansion, lr factor and epochs must be positive");
  FpSuppressResult r;
  const auto mined = mine_false_positives(m, distractors, o.mine_threshold);
  r.mined = mined.size();
  if (mined.empty()) {
    r.nothing_to_suppress = true;
    return r;
  }
  TrainSchedule s = o.base;
  s.stage = Stage::fp_suppress;
  s.epochs = o.epochs;
  s.learning_rate = o.base.learning_rate * o.lr_factor;
  TrainOptions to;
  to.loss.empty_frame_mode = true;
  to.extra = &mined;
  to.extra_fraction = o.batch_expansion;
  r.log = train(m, base, val, s, to);
  return r;
}

ToyModel prune_model(const ToyModel& m, const PruneSpec& spec, PruneReport* report) {
  const WeightStore w = m.net.to_weights();
  PruneResult pr = prune(m.net.graph(), &w, spec);
  if (report) *report = pr.report;
  return make_toy_model(pr.graph, *pr.weights, m.specs);
}

ToyData make_toy_data(std::uint64_t seed, int width, int height, const ToyDataSizes& sizes) {
  ToyData d;
  d.train = generate_corpus(mix_seed(seed, 1), sizes.train, width, height, false);
  d.val = generate_corpus(mix_seed(seed, 2), sizes.val, width, height, false);
  d.distractors = generate_corpus(mix_seed(seed, 3), sizes.distractors, width, height, true);
  d.distractors_holdout = generate_corpus(mix_seed(seed, 4), sizes.distractors_holdout, width, height, true);
  return d;
}

TrainSchedule default_schedule(Stage stage, std::uint64_t seed) {
  TrainSchedule s;
  s.stage = stage;
  s.seed = seed;
  switch (stage) {
    case Stage::pretrain_lowres:
      s.epochs = 12;
      s.batch_size = 32;
      s.learning_rate = 0.02;
      break;
    case Stage::finetune_highres:
      s.epochs = 4;
      s.batch_size = 16;
      s.learning_rate = 0.01;
      break;
    case Stage::fp_suppress:
      s.epochs = 5;
      s.batch_size = 16;
      s.learning_rate = 0.01;
      break;
    case Stage::post_prune:
      s.epochs = 2;
      s.batch_size = 16;
      s.learning_rate = 0.01;
      break;
  }
  return s;
}

namespace {

int head_count(const NetGraph& g) {
  return static_cast<int>(std::count_if(g.layers.begin(), g.layers.end(),
                                        [](const Layer& l) { return l.kind == LayerKind::detect_head; }));
}

}  // namespace

StageOutcome run_stage(const StageRequest& req) {
  TrainSchedule sched = default_schedule(req.stage, req.seed);
  if (req.epochs >= 0) sched.epochs = req.epochs;
  if (req.batch_size > 0) sched.batch_size = req.batch_size;
  if (req.learning_rate > 0) sched.learning_rate = req.learning_rate;
  validate(sched);

  const bool low = req.stage == Stage::pretrain_lowres;
  int w = low ? kLowResW : kHighResW;
  int h = low ? kLowResH : kHighResH;
  if (req.stage == Stage::post_prune && !req.graph)
    throw ValidationError("post-prune: a pruned graph is required");
  if ((req.stage == Stage::fp_suppress || req.stage == Stage::post_prune) && !req.init)
    throw ValidationError(std::string(to_string(req.stage)) + ": initial weights are required");
  if (req.stage == Stage::pretrain_lowres && req.init)
    throw ValidationError("pretrain: starts from random weights; initial weights are not accepted");

  NetGraph graph;
  bool split = req.split_first_branch;
  if (req.graph) {
    graph = *req.graph;
    const int heads = head_count(graph);
    if (heads != 2 && heads != 3) throw ValidationError("toy train: graph must have 2 or 3 detection heads");
    split = heads == 3;
    if (req.stage == Stage::post_prune) {
      w = graph.input_w;
      h = graph.input_h;
    }
  } else {
    graph = toy_graph(kLowResW, kLowResH, kToyClasses, toy_prior_specs(split).front().boxes_per_location(), split);
  }
  graph = with_input(std::move(graph), kLowResW, kLowResH);

  ToyModel m = req.init ? make_toy_model(graph, *req.init, toy_prior_specs(split))
                        : assemble(ToyNet(graph, kToyClasses, mix_seed(req.seed, 7)), toy_prior_specs(split));
  if (w != kLowResW || h != kLowResH) retarget(m, w, h);

  const ToyData data = make_toy_data(mix_seed(req.seed, static_cast<std::uint64_t>(req.stage)), w, h, req.data);
  StageOutcome out;
  if (req.init) out.initial_ap = evaluate_ap(m, data.val);
  if (req.stage == Stage::fp_suppress) {
    out.distractor_score_before = mean_max_score(m, data.distractors_holdout);
    FpSuppressOptions fo;
    fo.base = sched;
    fo.epochs = sched.epochs;
    const auto r = fp_suppress(m, data.train, data.distractors, data.val, fo);
    out.mined = r.mined;
    out.nothing_to_suppress = r.nothing_to_suppress;
    out.log = r.log;
    out.distractor_score_after = mean_max_score(m, data.distractors_holdout);
  } else {
    out.log = train(m, data.train, data.val, sched);
  }
  out.final_ap = evaluate_ap(m, data.val);
  out.graph = m.net.graph();
  out.weights = m.net.to_weights();
  return out;
}

}  // namespace ssdkit
