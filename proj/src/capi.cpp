#include "ssdkit/ssdkit.h"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <json.hpp>
#include <memory>
#include <sstream>
#include <string>

#include "ssdkit/error.hpp"
#include "ssdkit/evaluate.hpp"
#include "ssdkit/netgraph.hpp"
#include "ssdkit/postprocess.hpp"
#include "ssdkit/priorgrid.hpp"
#include "ssdkit/pruner.hpp"
#include "ssdkit/random.hpp"
#include "ssdkit/redetect.hpp"
#include "ssdkit/toytrain.hpp"
#include "ssdkit/weights.hpp"

struct ssdkit_graph {
  ssdkit::NetGraph rep;
};

struct ssdkit_weights {
  ssdkit::WeightStore rep;
};

struct ssdkit_priors {
  ssdkit::PriorGrid rep;
};

struct ssdkit_tracker {
  ssdkit::Tracker rep;
  ssdkit::FrameDetections scratch;
};

namespace {

thread_local std::string g_last_error;

ssdkit_status fail(ssdkit_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs fn, mapping exceptions onto status codes.
template <typename Fn>
ssdkit_status guarded(Fn&& fn) {
  try {
    fn();
    return SSDKIT_OK;
  } catch (const ssdkit::IoError& e) {
    return fail(SSDKIT_ERR_IO, e.what());
  } catch (const ssdkit::ValidationError& e) {
    return fail(SSDKIT_ERR_INVALID, e.what());
  } catch (const ssdkit::NumericError& e) {
    return fail(SSDKIT_ERR_NUMERIC, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SSDKIT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SSDKIT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SSDKIT_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw ssdkit::ValidationError(std::string(what) + " must not be NULL");
}

ssdkit_complexity to_c(const ssdkit::ComplexityReport& r) {
  return {r.total_macs, r.total_params, r.gmac(), r.mparams()};
}

ssdkit::Detection to_cpp(const ssdkit_detection& d, std::size_t index) {
  ssdkit::Detection out;
  out.box = {d.box.x1, d.box.y1, d.box.x2, d.box.y2};
  out.label = d.label;
  out.score = d.score;
  out.retained = d.retained != 0;
  out.prior_index = index;
  return out;
}

ssdkit_detection to_c(const ssdkit::Detection& d) {
  return {{d.box.x1, d.box.y1, d.box.x2, d.box.y2}, d.label, d.score, d.retained ? 1 : 0};
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
  return out;
}

std::string ap_json(const ssdkit::ApResult& r) {
  nlohmann::ordered_json j;
  j["ap"] = r.per_class;
  j["gt_count"] = r.gt_count;
  j["mean"] = r.mean;
  return j.dump();
}

}  // namespace

extern "C" {

const char* ssdkit_version(void) { return "0.1.0"; }

const char* ssdkit_last_error(void) { return g_last_error.c_str(); }

void ssdkit_free_string(char* s) { std::free(s); }

double ssdkit_iou(const ssdkit_box* a, const ssdkit_box* b) {
  if (!a || !b) return 0.0;
  return ssdkit::iou({a->x1, a->y1, a->x2, a->y2}, {b->x1, b->y1, b->x2, b->y2});
}

ssdkit_status ssdkit_graph_load(const char* path, ssdkit_graph** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ssdkit_graph{ssdkit::load_graph(path)};
  });
}

ssdkit_status ssdkit_graph_from_json(const char* json, ssdkit_graph** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new ssdkit_graph{ssdkit::graph_from_json(json)};
  });
}

ssdkit_status ssdkit_graph_save(const ssdkit_graph* g, const char* path) {
  return guarded([&] {
    require(g, "graph");
    require(path, "path");
    ssdkit::save_graph(g->rep, path);
  });
}

ssdkit_status ssdkit_graph_to_json(const ssdkit_graph* g, char** out_json) {
  return guarded([&] {
    require(g, "graph");
    require(out_json, "out_json");
    *out_json = dup_string(ssdkit::graph_to_json(g->rep));
  });
}

ssdkit_status ssdkit_graph_set_input(ssdkit_graph* g, int width, int height) {
  return guarded([&] {
    require(g, "graph");
    ssdkit::NetGraph next = ssdkit::with_input(g->rep, width, height);
    ssdkit::infer_shapes(next);
    g->rep = std::move(next);
  });
}

void ssdkit_graph_free(ssdkit_graph* g) { delete g; }

ssdkit_status ssdkit_graph_analyze(const ssdkit_graph* g, ssdkit_complexity* totals, char** table) {
  return guarded([&] {
    require(g, "graph");
    require(totals, "totals");
    const auto r = ssdkit::analyze(g->rep);
    *totals = to_c(r);
    if (table) *table = dup_string(ssdkit::format_report(r));
  });
}

ssdkit_status ssdkit_weights_load(const char* path, ssdkit_weights** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ssdkit_weights{ssdkit::load_weights(path)};
  });
}

ssdkit_status ssdkit_weights_save(const ssdkit_weights* w, const char* path) {
  return guarded([&] {
    require(w, "weights");
    require(path, "path");
    ssdkit::save_weights(w->rep, path);
  });
}

size_t ssdkit_weights_tensor_count(const ssdkit_weights* w) { return w ? w->rep.size() : 0; }

void ssdkit_weights_free(ssdkit_weights* w) { delete w; }

ssdkit_status ssdkit_prune(const ssdkit_graph* g, const ssdkit_weights* weights, const ssdkit_prune_options* options,
                           ssdkit_graph** out_graph, ssdkit_weights** out_weights, ssdkit_complexity* before,
                           ssdkit_complexity* after, char** report) {
  return guarded([&] {
    require(g, "graph");
    require(options, "options");
    require(out_graph, "out_graph");
    ssdkit::PruneSpec spec;
    spec.ratio = options->ratio;
    spec.seed = options->seed;
    for (size_t i = 0; i < options->exempt_count; ++i) {
      require(options->exempt, "exempt");
      require(options->exempt[i], "exempt entry");
      spec.exempt.insert(options->exempt[i]);
    }
    auto res = ssdkit::prune(g->rep, weights ? &weights->rep : nullptr, spec);
    auto graph = std::make_unique<ssdkit_graph>(ssdkit_graph{std::move(res.graph)});
    std::unique_ptr<ssdkit_weights> w;
    if (weights && out_weights) w = std::make_unique<ssdkit_weights>(ssdkit_weights{std::move(*res.weights)});
    char* text = report ? dup_string(ssdkit::format_report(res.report)) : nullptr;
    if (before) *before = to_c(res.report.before);
    if (after) *after = to_c(res.report.after);
    if (report) *report = text;
    *out_graph = graph.release();
    if (out_weights) *out_weights = w.release();
  });
}

ssdkit_status ssdkit_priors_preset(const char* name, char** config_json) {
  return guarded([&] {
    require(name, "name");
    require(config_json, "config_json");
    const std::string n = name;
    if (n == "ssd300") {
      *config_json = dup_string(ssdkit::specs_to_json(ssdkit::ssd300_specs()));
    } else if (n == "toy") {
      *config_json = dup_string(ssdkit::specs_to_json(ssdkit::toy_prior_specs()));
    } else {
      throw ssdkit::ValidationError("unknown prior preset '" + n + "' (expected ssd300 or toy)");
    }
  });
}

ssdkit_status ssdkit_priors_generate(const char* config_json, const int* split, size_t split_count, int rescale_w,
                                     int rescale_h, char** priors_json, size_t* prior_count) {
  return guarded([&] {
    require(config_json, "config_json");
    require(priors_json, "priors_json");
    const auto specs = ssdkit::specs_from_json(config_json);
    std::vector<char> to_split(specs.size(), 0);
    for (size_t i = 0; i < split_count; ++i) {
      require(split, "split");
      if (split[i] < 0 || static_cast<size_t>(split[i]) >= specs.size())
        throw ssdkit::ValidationError("split: branch index " + std::to_string(split[i]) + " out of range");
      to_split[static_cast<size_t>(split[i])] = 1;
    }
    std::vector<ssdkit::PriorSpec> final_specs;
    for (size_t b = 0; b < specs.size(); ++b) {
      if (to_split[b]) {
        auto [lo, hi] = ssdkit::split_branch(specs[b]);
        final_specs.push_back(lo);
        final_specs.push_back(hi);
      } else {
        final_specs.push_back(specs[b]);
      }
    }
    if (rescale_w > 0 || rescale_h > 0)
      for (auto& s : final_specs) s = ssdkit::rescale(s, rescale_w, rescale_h);
    const auto grid = ssdkit::generate(final_specs);
    *priors_json = dup_string(ssdkit::priors_to_json(grid));
    if (prior_count) *prior_count = grid.size();
  });
}

ssdkit_status ssdkit_priors_parse(const char* priors_json, ssdkit_priors** out) {
  return guarded([&] {
    require(priors_json, "priors_json");
    require(out, "out");
    *out = new ssdkit_priors{ssdkit::priors_from_json(priors_json)};
  });
}

size_t ssdkit_priors_count(const ssdkit_priors* p) { return p ? p->rep.size() : 0; }

void ssdkit_priors_free(ssdkit_priors* p) { delete p; }

void ssdkit_postprocess_defaults(ssdkit_postprocess_params* p) {
  if (!p) return;
  const ssdkit::PostprocessParams d;
  *p = {d.conf_floor, d.nms_threshold, d.top_k};
}

ssdkit_status ssdkit_postprocess_line(const ssdkit_priors* priors, const char* raw_line,
                                      const ssdkit_postprocess_params* params, char** dets_line) {
  return guarded([&] {
    require(priors, "priors");
    require(raw_line, "raw_line");
    require(dets_line, "dets_line");
    ssdkit::PostprocessParams pp;
    if (params) {
      pp.conf_floor = params->conf_floor;
      pp.nms_threshold = params->nms_threshold;
      pp.top_k = params->top_k;
    }
    if (!(pp.conf_floor > 0 && pp.conf_floor <= 1)) throw ssdkit::ValidationError("conf_floor must lie in (0, 1]");
    if (pp.top_k <= 0) throw ssdkit::ValidationError("top_k must be positive");
    std::int64_t frame = 0;
    const auto raw = ssdkit::raw_from_jsonl(raw_line, &frame);
    *dets_line = dup_string(ssdkit::to_jsonl(ssdkit::postprocess_frame(raw, priors->rep, pp, frame)));
  });
}

void ssdkit_tracker_config_defaults(ssdkit_tracker_config* c) {
  if (!c) return;
  const ssdkit::TrackerConfig d;
  *c = {d.candidate_floor, d.display_threshold, d.match_iou_min};
}

ssdkit_status ssdkit_tracker_create(const ssdkit_tracker_config* c, ssdkit_tracker** out) {
  return guarded([&] {
    require(out, "out");
    ssdkit::TrackerConfig cfg;
    if (c) cfg = {c->candidate_floor, c->display_threshold, c->match_iou_min};
    *out = new ssdkit_tracker{ssdkit::Tracker(cfg), {}};
  });
}

void ssdkit_tracker_reset(ssdkit_tracker* t) {
  if (t) t->rep.reset();
}

void ssdkit_tracker_free(ssdkit_tracker* t) { delete t; }

ssdkit_status ssdkit_tracker_step(ssdkit_tracker* t, const ssdkit_detection* in, size_t n, ssdkit_detection* out,
                                  size_t* n_out) {
  return guarded([&] {
    require(t, "tracker");
    require(n_out, "n_out");
    if (n > 0) {
      require(in, "in");
      require(out, "out");
    }
    auto& cur = t->scratch;
    cur.frame = t->rep.frame_index();
    cur.dets.clear();
    for (size_t i = 0; i < n; ++i) cur.dets.push_back(to_cpp(in[i], i));
    const auto emitted = t->rep.step(cur);
    for (size_t i = 0; i < emitted.dets.size(); ++i) out[i] = to_c(emitted.dets[i]);
    *n_out = emitted.dets.size();
  });
}

ssdkit_status ssdkit_tracker_step_line(ssdkit_tracker* t, const char* dets_line, char** out_line) {
  return guarded([&] {
    require(t, "tracker");
    require(dets_line, "dets_line");
    require(out_line, "out_line");
    *out_line = dup_string(ssdkit::to_jsonl(t->rep.step(ssdkit::frame_from_jsonl(dets_line))));
  });
}

ssdkit_status ssdkit_bench_track(size_t frames, size_t objects, uint64_t seed, ssdkit_bench_result* out) {
  return guarded([&] {
    require(out, "out");
    if (frames == 0) throw ssdkit::ValidationError("bench: frames must be positive");
    // Objects drift slowly; confidences wander across the display threshold.
    ssdkit::Rng rng(seed);
    std::vector<ssdkit::Detection> tracks(objects);
    for (auto& d : tracks) {
      const double x = rng.uniform(0, 0.9), y = rng.uniform(0, 0.8);
      d.box = {x, y, x + rng.uniform(0.03, 0.1), y + rng.uniform(0.05, 0.2)};
      d.label = 1 + static_cast<int>(rng.below(2));
    }
    std::vector<ssdkit::FrameDetections> seq(frames);
    for (size_t f = 0; f < frames; ++f) {
      seq[f].frame = static_cast<std::int64_t>(f);
      for (size_t k = 0; k < objects; ++k) {
        auto& d = tracks[k];
        const double dx = rng.uniform(-0.004, 0.004), dy = rng.uniform(-0.004, 0.004);
        d.box = ssdkit::clip_unit({d.box.x1 + dx, d.box.y1 + dy, d.box.x2 + dx, d.box.y2 + dy});
        d.score = rng.uniform(0.2, 1.0);
        d.prior_index = k;
        seq[f].dets.push_back(d);
      }
    }
    ssdkit::Tracker tracker;
    using clock = std::chrono::steady_clock;
    double total = 0, worst = 0;
    size_t emitted = 0;
    for (const auto& fd : seq) {
      const auto a = clock::now();
      const auto r = tracker.step(fd);
      const auto b = clock::now();
      const double ms = std::chrono::duration<double, std::milli>(b - a).count();
      total += ms;
      worst = std::max(worst, ms);
      emitted += r.dets.size();
    }
    *out = {frames, objects, emitted, total / static_cast<double>(frames), worst, total};
  });
}

ssdkit_status ssdkit_evaluate_jsonl(const char* dets_jsonl, const char* gt_jsonl, int num_classes, char** result_json) {
  return guarded([&] {
    require(dets_jsonl, "dets_jsonl");
    require(gt_jsonl, "gt_jsonl");
    require(result_json, "result_json");
    if (num_classes < 2) throw ssdkit::ValidationError("num_classes must be at least 2");
    std::vector<ssdkit::FrameDetections> dets;
    std::vector<ssdkit::GroundTruth> gts;
    for (const auto& l : split_lines(dets_jsonl)) dets.push_back(ssdkit::frame_from_jsonl(l));
    for (const auto& l : split_lines(gt_jsonl)) gts.push_back(ssdkit::gt_from_jsonl(l));
    *result_json = dup_string(ap_json(ssdkit::average_precision(dets, gts, num_classes)));
  });
}

void ssdkit_train_defaults(ssdkit_train_options* o) {
  if (!o) return;
  *o = {"pretrain", 0, -1, -1, -1.0, nullptr, nullptr, 0, 0, 0};
}

ssdkit_status ssdkit_train_toy(const ssdkit_train_options* o, const char* out_weights, const char* out_graph,
                               char** metrics_jsonl, char** summary_json) {
  return guarded([&] {
    require(o, "options");
    require(o->stage, "stage");
    require(out_weights, "out_weights");
    ssdkit::StageRequest req;
    req.stage = ssdkit::stage_from_string(o->stage);
    req.seed = o->seed;
    req.epochs = o->epochs;
    req.batch_size = o->batch_size;
    req.learning_rate = o->learning_rate;
    req.split_first_branch = o->split_first_branch != 0;
    if (o->train_scenes) req.data.train = o->train_scenes;
    if (o->val_scenes) req.data.val = o->val_scenes;
    if (o->init_weights) req.init = ssdkit::load_weights(o->init_weights);
    if (o->graph) req.graph = ssdkit::load_graph(o->graph);
    const auto res = ssdkit::run_stage(req);
    ssdkit::save_weights(res.weights, out_weights);
    if (out_graph) ssdkit::save_graph(res.graph, out_graph);
    char* metrics = metrics_jsonl ? dup_string(ssdkit::to_jsonl(res.log)) : nullptr;
    if (summary_json) {
      nlohmann::ordered_json j;
      j["stage"] = std::string(ssdkit::to_string(req.stage));
      j["epochs"] = res.log.epochs.size();
      j["steps"] = res.log.steps;
      j["ap"] = res.final_ap.per_class;
      j["mean_ap"] = res.final_ap.mean;
      if (res.initial_ap) j["initial_mean_ap"] = res.initial_ap->mean;
      if (req.stage == ssdkit::Stage::fp_suppress) {
        j["mined"] = res.mined;
        j["nothing_to_suppress"] = res.nothing_to_suppress;
        j["distractor_score_before"] = res.distractor_score_before;
        j["distractor_score_after"] = res.distractor_score_after;
      }
      try {
        *summary_json = dup_string(j.dump());
      } catch (...) {
        std::free(metrics);
        throw;
      }
    }
    if (metrics_jsonl) *metrics_jsonl = metrics;
  });
}

ssdkit_status ssdkit_evaluate_toy(const ssdkit_toy_eval_options* o, char** result_json, char** raw_jsonl,
                                  char** gt_jsonl) {
  return guarded([&] {
    require(o, "options");
    require(o->weights, "weights");
    require(result_json, "result_json");
    const auto weights = ssdkit::load_weights(o->weights);
    ssdkit::NetGraph graph;
    bool split = false;
    if (o->graph) {
      graph = ssdkit::load_graph(o->graph);
      int heads = 0;
      for (const auto& l : graph.layers) heads += l.kind == ssdkit::LayerKind::detect_head;
      split = heads == 3;
    } else {
      graph = ssdkit::toy_graph(ssdkit::kHighResW, ssdkit::kHighResH, ssdkit::kToyClasses,
                                ssdkit::toy_prior_specs().front().boxes_per_location());
    }
    const int w = graph.input_w, h = graph.input_h;
    ssdkit::ToyModel m = ssdkit::make_toy_model(ssdkit::with_input(graph, ssdkit::kLowResW, ssdkit::kLowResH), weights,
                                                ssdkit::toy_prior_specs(split));
    if (w != ssdkit::kLowResW || h != ssdkit::kLowResH) ssdkit::retarget(m, w, h);
    const auto scenes = ssdkit::generate_corpus(ssdkit::mix_seed(o->seed, 99), o->scenes ? o->scenes : 128, w, h, false);
    std::string raw_text, gt_text;
    if (raw_jsonl || gt_jsonl) {
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (raw_jsonl)
          raw_text += ssdkit::raw_to_jsonl(m.net.forward(ssdkit::scene_input(scenes[i])), static_cast<std::int64_t>(i)) + "\n";
        if (gt_jsonl) gt_text += ssdkit::gt_to_jsonl(scenes[i].gt, static_cast<std::int64_t>(i)) + "\n";
      }
    }
    const std::string result = ap_json(ssdkit::evaluate_ap(m, scenes));
    char* r = dup_string(result);
    char* raw = nullptr;
    char* gt = nullptr;
    try {
      if (raw_jsonl) raw = dup_string(raw_text);
      if (gt_jsonl) gt = dup_string(gt_text);
    } catch (...) {
      std::free(r);
      std::free(raw);
      throw;
    }
    *result_json = r;
    if (raw_jsonl) *raw_jsonl = raw;
    if (gt_jsonl) *gt_jsonl = gt;
  });
}

}  // extern "C"
