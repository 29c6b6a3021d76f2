// Command-line front end. Talks to the library only through the C API.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssdkit/ssdkit.h"

namespace {

enum Exit { kOk = 0, kInvalid = 1, kIo = 2, kNumeric = 3, kInternal = 4 };

struct Failure {
  int code;
  std::string msg;
};

[[noreturn]] void raise(int code, std::string msg) { throw Failure{code, std::move(msg)}; }

void check(ssdkit_status s) {
  if (s != SSDKIT_OK) raise(static_cast<int>(s), ssdkit_last_error());
}

struct CString {
  char* p = nullptr;
  ~CString() { ssdkit_free_string(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};
using Graph = Handle<ssdkit_graph, ssdkit_graph_free>;
using Weights = Handle<ssdkit_weights, ssdkit_weights_free>;
using Priors = Handle<ssdkit_priors, ssdkit_priors_free>;
using Tracker = Handle<ssdkit_tracker, ssdkit_tracker_free>;

std::string read_input(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), {}};
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(kIo, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) raise(kIo, "error reading '" + path + "'");
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text << std::flush;
    if (!std::cout) raise(kIo, "error writing standard output");
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(kIo, "cannot open '" + path + "' for writing");
  out << text;
  out.close();
  if (!out) raise(kIo, "error writing '" + path + "'");
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
  return out;
}

std::pair<int, int> parse_size(const std::string& s, const char* flag) {
  int w = 0, h = 0;
  char x = 0, extra = 0;
  if (std::sscanf(s.c_str(), "%d%c%d%c", &w, &x, &h, &extra) != 3 || (x != 'x' && x != 'X') || w <= 0 || h <= 0)
    raise(kInvalid, std::string(flag) + ": expected WxH with positive integers, got '" + s + "'");
  return {w, h};
}

// ---- commands --------------------------------------------------------------

struct AnalyzeArgs {
  std::string graph;
  std::string input;
};

void run_analyze(const AnalyzeArgs& a) {
  Graph g;
  check(ssdkit_graph_load(a.graph.c_str(), &g.p));
  if (!a.input.empty()) {
    auto [w, h] = parse_size(a.input, "--input");
    check(ssdkit_graph_set_input(g.p, w, h));
  }
  ssdkit_complexity totals{};
  CString table;
  check(ssdkit_graph_analyze(g.p, &totals, &table.p));
  std::cout << table.str();
}

struct PruneArgs {
  std::string graph;
  double ratio = 0;
  uint64_t seed = 0;
  std::string weights;
  std::string out_graph;
  std::string out_weights;
  std::vector<std::string> exempt;
};

void run_prune(const PruneArgs& a) {
  if (!a.out_weights.empty() && a.weights.empty()) raise(kInvalid, "-w/--weights-out requires --weights");
  Graph g;
  check(ssdkit_graph_load(a.graph.c_str(), &g.p));
  Weights w;
  if (!a.weights.empty()) check(ssdkit_weights_load(a.weights.c_str(), &w.p));
  std::vector<const char*> exempt;
  for (const auto& e : a.exempt) exempt.push_back(e.c_str());
  ssdkit_prune_options opts{a.ratio, a.seed, exempt.data(), exempt.size()};
  Graph pg;
  Weights pw;
  ssdkit_complexity before{}, after{};
  CString report;
  check(ssdkit_prune(g.p, w.p, &opts, &pg.p, a.out_weights.empty() ? nullptr : &pw.p, &before, &after, &report.p));
  if (!a.out_graph.empty()) check(ssdkit_graph_save(pg.p, a.out_graph.c_str()));
  if (pw.p) check(ssdkit_weights_save(pw.p, a.out_weights.c_str()));
  std::cout << report.str();
}

struct PriorsArgs {
  std::string preset;
  std::string config;
  std::vector<int> split;
  std::string rescale;
  std::string out = "-";
};

void run_priors(const PriorsArgs& a) {
  if (a.preset.empty() == a.config.empty()) raise(kInvalid, "exactly one of --preset or --config is required");
  int rw = 0, rh = 0;
  if (!a.rescale.empty()) std::tie(rw, rh) = parse_size(a.rescale, "--rescale");
  std::string config;
  if (!a.preset.empty()) {
    CString c;
    check(ssdkit_priors_preset(a.preset.c_str(), &c.p));
    config = c.str();
  } else {
    config = read_input(a.config);
  }
  CString json;
  size_t count = 0;
  check(ssdkit_priors_generate(config.c_str(), a.split.data(), a.split.size(), rw, rh, &json.p, &count));
  write_output(a.out, json.str() + "\n");
  std::cerr << count << " priors\n";
}

struct PostprocessArgs {
  std::string priors;
  std::string in = "-";
  std::string out = "-";
  ssdkit_postprocess_params params{};
};

void run_postprocess(const PostprocessArgs& a) {
  Priors p;
  check(ssdkit_priors_parse(read_input(a.priors).c_str(), &p.p));
  std::string result;
  for (const auto& line : lines_of(read_input(a.in))) {
    CString det;
    check(ssdkit_postprocess_line(p.p, line.c_str(), &a.params, &det.p));
    result += det.str() + "\n";
  }
  write_output(a.out, result);
}

struct TrackArgs {
  std::string in = "-";
  std::string out = "-";
  ssdkit_tracker_config cfg{};
};

void run_track(const TrackArgs& a) {
  const std::string text = read_input(a.in);
  Tracker t;
  check(ssdkit_tracker_create(&a.cfg, &t.p));
  std::string result;
  for (const auto& line : lines_of(text)) {
    CString o;
    check(ssdkit_tracker_step_line(t.p, line.c_str(), &o.p));
    result += o.str() + "\n";
  }
  write_output(a.out, result);
}

struct TrainArgs {
  std::string stage;
  uint64_t seed = 0;
  std::string out;
  std::string log;
  std::string init;
  std::string graph;
  std::string graph_out;
  int epochs = -1;
  double lr = -1;
  int batch = -1;
  bool split = false;
  size_t train_scenes = 0;
  size_t val_scenes = 0;
};

void run_train(const TrainArgs& a) {
  ssdkit_train_options o;
  ssdkit_train_defaults(&o);
  o.stage = a.stage.c_str();
  o.seed = a.seed;
  o.epochs = a.epochs;
  o.batch_size = a.batch;
  o.learning_rate = a.lr;
  o.init_weights = a.init.empty() ? nullptr : a.init.c_str();
  o.graph = a.graph.empty() ? nullptr : a.graph.c_str();
  o.split_first_branch = a.split ? 1 : 0;
  o.train_scenes = a.train_scenes;
  o.val_scenes = a.val_scenes;
  CString metrics, summary;
  check(ssdkit_train_toy(&o, a.out.c_str(), a.graph_out.empty() ? nullptr : a.graph_out.c_str(), &metrics.p,
                         &summary.p));
  if (!a.log.empty()) write_output(a.log, metrics.str());
  std::cout << summary.str() << "\n";
}

struct EvaluateArgs {
  std::string dets;
  std::string gt;
  int classes = 3;
  std::string weights;
  std::string graph;
  uint64_t seed = 0;
  size_t scenes = 128;
  std::string dump_raw;
  std::string dump_gt;
};

void run_evaluate(const EvaluateArgs& a) {
  CString result;
  if (!a.weights.empty()) {
    if (!a.dets.empty() || !a.gt.empty()) raise(kInvalid, "--weights cannot be combined with --dets/--gt");
    ssdkit_toy_eval_options o{a.weights.c_str(), a.graph.empty() ? nullptr : a.graph.c_str(), a.seed, a.scenes};
    CString raw, gt;
    check(ssdkit_evaluate_toy(&o, &result.p, a.dump_raw.empty() ? nullptr : &raw.p,
                              a.dump_gt.empty() ? nullptr : &gt.p));
    if (!a.dump_raw.empty()) write_output(a.dump_raw, raw.str());
    if (!a.dump_gt.empty()) write_output(a.dump_gt, gt.str());
  } else {
    if (a.dets.empty() || a.gt.empty()) raise(kInvalid, "either --weights or both --dets and --gt are required");
    if (!a.dump_raw.empty() || !a.dump_gt.empty()) raise(kInvalid, "--dump-raw/--dump-gt require --weights");
    const std::string dets = read_input(a.dets);
    const std::string gt = read_input(a.gt);
    check(ssdkit_evaluate_jsonl(dets.c_str(), gt.c_str(), a.classes, &result.p));
  }
  std::cout << result.str() << "\n";
}

struct BenchArgs {
  size_t frames = 1000;
  size_t objects = 12;
  uint64_t seed = 0;
};

void run_bench(const BenchArgs& a) {
  ssdkit_bench_result r{};
  check(ssdkit_bench_track(a.frames, a.objects, a.seed, &r));
  std::printf("frames %zu objects %zu emitted %zu\n", r.frames, r.objects, r.emitted);
  std::printf("mean step %.6f ms, max step %.6f ms, total %.3f ms\n", r.mean_ms, r.max_ms, r.total_ms);
  std::printf("budget 0.1 ms per step: %s\n", r.mean_ms < 0.1 ? "met" : "missed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssdkit: SSD deployment toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ssdkit_version()));

  AnalyzeArgs analyze;
  auto* c_analyze = app.add_subcommand("analyze", "Per-layer MACs and parameters of a graph");
  c_analyze->add_option("graph", analyze.graph, "Graph JSON")->required();
  c_analyze->add_option("--input", analyze.input, "Override input resolution, WxH");

  PruneArgs prune;
  auto* c_prune = app.add_subcommand("prune", "Random structured filter pruning");
  c_prune->add_option("graph", prune.graph, "Graph JSON")->required();
  c_prune->add_option("--ratio", prune.ratio, "Fraction of filters removed per layer, in [0,1)")->required();
  c_prune->add_option("--seed", prune.seed, "Sampling seed")->required();
  c_prune->add_option("--weights", prune.weights, "Weight store to prune alongside");
  c_prune->add_option("-o,--out", prune.out_graph, "Pruned graph JSON");
  c_prune->add_option("-w,--weights-out", prune.out_weights, "Pruned weight store");
  c_prune->add_option("--exempt", prune.exempt, "Additional layers never pruned");

  PriorsArgs priors;
  auto* c_priors = app.add_subcommand("priors", "Generate prior boxes");
  c_priors->add_option("--preset", priors.preset, "ssd300 or toy");
  c_priors->add_option("--config", priors.config, "Branch configuration JSON");
  c_priors->add_option("--split", priors.split, "Branch indices to split into two");
  c_priors->add_option("--rescale", priors.rescale, "Target input resolution, WxH");
  c_priors->add_option("-o,--out", priors.out, "Output priors JSON ('-' for stdout)");

  PostprocessArgs post;
  ssdkit_postprocess_defaults(&post.params);
  auto* c_post = app.add_subcommand("postprocess", "Decode, threshold and NMS raw predictions");
  c_post->add_option("--priors", post.priors, "Priors JSON from the priors command")->required();
  c_post->add_option("--in", post.in, "Raw prediction JSONL ('-' for stdin)");
  c_post->add_option("--out", post.out, "Detections JSONL ('-' for stdout)");
  c_post->add_option("--conf-floor", post.params.conf_floor, "Minimum class score")->capture_default_str();
  c_post->add_option("--nms", post.params.nms_threshold, "NMS IOU threshold")->capture_default_str();
  c_post->add_option("--top-k", post.params.top_k, "Maximum detections per frame")->capture_default_str();

  TrackArgs track;
  ssdkit_tracker_config_defaults(&track.cfg);
  auto* c_track = app.add_subcommand("track", "Re-detection temporal smoothing");
  c_track->add_option("--in", track.in, "Detections JSONL ('-' for stdin)");
  c_track->add_option("--out", track.out, "Smoothed detections JSONL ('-' for stdout)");
  c_track->add_option("--candidate-floor", track.cfg.candidate_floor, "Lowest score considered")->capture_default_str();
  c_track->add_option("--display-threshold", track.cfg.display_threshold, "Score shown without a match")
      ->capture_default_str();
  c_track->add_option("--match-iou", track.cfg.match_iou_min, "Minimum IOU to the previous frame")
      ->capture_default_str();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train-toy", "Train the toy detector on synthetic scenes");
  c_train->add_option("--stage", train.stage, "pretrain, finetune, fp-suppress or post-prune")
      ->required()
      ->check(CLI::IsMember({"pretrain", "finetune", "fp-suppress", "post-prune"}));
  c_train->add_option("--seed", train.seed, "Seed for data and initialization")->required();
  c_train->add_option("--out", train.out, "Output weight store")->required();
  c_train->add_option("--log", train.log, "Per-epoch metrics JSONL");
  c_train->add_option("--init", train.init, "Initial weight store");
  c_train->add_option("--graph", train.graph, "Network graph JSON (e.g. a pruned graph)");
  c_train->add_option("--graph-out", train.graph_out, "Write the trained network's graph JSON");
  c_train->add_option("--epochs", train.epochs, "Override the stage's epoch count");
  c_train->add_option("--lr", train.lr, "Override the stage's learning rate");
  c_train->add_option("--batch", train.batch, "Override the stage's batch size");
  c_train->add_flag("--split-first-branch", train.split, "Split the first prior branch in two");
  c_train->add_option("--train-scenes", train.train_scenes, "Training corpus size");
  c_train->add_option("--val-scenes", train.val_scenes, "Validation corpus size");

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "AP@0.5 of detections or of a toy detector");
  c_eval->add_option("--dets", eval.dets, "Detections JSONL");
  c_eval->add_option("--gt", eval.gt, "Ground truth JSONL");
  c_eval->add_option("--classes", eval.classes, "Class count including background")->capture_default_str();
  c_eval->add_option("--weights", eval.weights, "Toy detector weight store");
  c_eval->add_option("--graph", eval.graph, "Toy detector graph JSON");
  c_eval->add_option("--seed", eval.seed, "Seed of the evaluation scenes")->capture_default_str();
  c_eval->add_option("--scenes", eval.scenes, "Number of evaluation scenes")->capture_default_str();
  c_eval->add_option("--dump-raw", eval.dump_raw, "Write raw head outputs as JSONL");
  c_eval->add_option("--dump-gt", eval.dump_gt, "Write scene ground truth as JSONL");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench-track", "Tracker step latency on synthetic frames");
  c_bench->add_option("--frames", bench.frames, "Frame count")->capture_default_str();
  c_bench->add_option("--objects", bench.objects, "Detections per frame")->capture_default_str();
  c_bench->add_option("--seed", bench.seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }

  try {
    if (*c_analyze) run_analyze(analyze);
    else if (*c_prune) run_prune(prune);
    else if (*c_priors) run_priors(priors);
    else if (*c_post) run_postprocess(post);
    else if (*c_track) run_track(track);
    else if (*c_train) run_train(train);
    else if (*c_eval) run_evaluate(eval);
    else if (*c_bench) run_bench(bench);
  } catch (const Failure& f) {
    std::string msg = f.msg;
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return f.code;
  }
  return kOk;
}
