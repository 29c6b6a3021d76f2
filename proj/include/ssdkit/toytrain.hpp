#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssdkit/evaluate.hpp"
#include "ssdkit/multibox.hpp"
#include "ssdkit/pruner.hpp"
#include "ssdkit/synth.hpp"
#include "ssdkit/toynet.hpp"

namespace ssdkit {

enum class Stage { pretrain_lowres, finetune_highres, fp_suppress, post_prune };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct TrainSchedule {
  Stage stage = Stage::pretrain_lowres;
  int epochs = 1;
  int batch_size = 16;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

void validate(const TrainSchedule& s);

/// Stage-1 square resolution and the wide stage-2 target.
inline constexpr int kLowResW = 64;
inline constexpr int kLowResH = 64;
inline constexpr int kHighResW = 96;
inline constexpr int kHighResH = 64;

/// Network plus the prior branches its heads predict against.
struct ToyModel {
  ToyNet net;
  std::vector<PriorSpec> specs;
  PriorGrid priors;
};

/// Two branches at 64x64: 16x16 map (sizes 8-20 px) and 8x8 map (20-44 px),
/// aspect ratio {2}. With split_first_branch the first is split in two.
std::vector<PriorSpec> toy_prior_specs(bool split_first_branch = false);

ToyModel make_toy_model(std::uint64_t init_seed, bool split_first_branch = false);
ToyModel make_toy_model(const NetGraph& graph, const WeightStore& weights, std::vector<PriorSpec> specs);

/// Moves the model to a new input size: the same weights, priors rescaled.
void retarget(ToyModel& m, int width, int height);

/// Network input for a scene (intensities centered on 0).
std::vector<double> scene_input(const SynthScene& s);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0;
  double val_loss = 0;
  double ap_disc = 0;
  double ap_bar = 0;
};

struct TrainLog {
  std::vector<EpochMetrics> epochs;
  std::size_t steps = 0;
};

/// {"epoch", "loss", "ap_disc", "ap_bar"} per line.
std::string to_jsonl(const TrainLog& log);

struct TrainOptions {
  LossConfig loss;
  /// Extra positive-free scenes appended to every batch (fp suppression).
  const std::vector<SynthScene>* extra = nullptr;
  /// Extra scenes per batch as a fraction of the batch size.
  double extra_fraction = 0.0;
  /// Stop after this many optimizer steps (0 = no limit).
  std::size_t max_steps = 0;
  /// Compute val loss / AP after each epoch.
  bool evaluate_each_epoch = true;
};

/// Momentum SGD over shuffled mini-batches; the batch loss is the mean of the
/// per-image multibox losses. Throws NumericError (with epoch and step) if the
/// loss or weights stop being finite.
TrainLog train(ToyModel& m, const std::vector<SynthScene>& train_set, const std::vector<SynthScene>& val_set,
               const TrainSchedule& schedule, const TrainOptions& options = {});

/// Mean per-image multibox loss (no positive-free contribution).
double validation_loss(ToyModel& m, const std::vector<SynthScene>& scenes, const LossConfig& cfg = {});

/// Post-processed detections (floor 0.01) for every scene.
std::vector<FrameDetections> detect(ToyModel& m, const std::vector<SynthScene>& scenes, double conf_floor = 0.01);

ApResult evaluate_ap(ToyModel& m, const std::vector<SynthScene>& scenes);

/// Mean over scenes of the highest positive-class probability on any prior.
double mean_max_score(ToyModel& m, const std::vector<SynthScene>& scenes);

/// Positive-free scenes on which the model reports a detection scoring above
/// the threshold.
std::vector<SynthScene> mine_false_positives(ToyModel& m, const std::vector<SynthScene>& scenes,
                                             double threshold = 0.3);

struct FpSuppressOptions {
  /// Schedule of the base training; its learning rate is scaled by lr_factor.
  TrainSchedule base;
  int epochs = 5;
  double batch_expansion = 0.3;
  double lr_factor = 0.5;
  double mine_threshold = 0.3;
};

struct FpSuppressResult {
  std::size_t mined = 0;
  bool nothing_to_suppress = false;
  TrainLog log;
};

/// Mines firing distractor scenes, then continues training with each batch
/// expanded by the mined scenes, positive-free loss enabled and a reduced
/// learning rate. Leaves the model untouched if nothing fires.
FpSuppressResult fp_suppress(ToyModel& m, const std::vector<SynthScene>& base, const std::vector<SynthScene>& distractors,
                             const std::vector<SynthScene>& val, const FpSuppressOptions& options);

/// Applies the pruner to the model's graph and weights.
ToyModel prune_model(const ToyModel& m, const PruneSpec& spec, PruneReport* report = nullptr);

/// Corpora derived from one seed.
struct ToyData {
  std::vector<SynthScene> train;
  std::vector<SynthScene> val;
  std::vector<SynthScene> distractors;
  std::vector<SynthScene> distractors_holdout;
};

struct ToyDataSizes {
  std::size_t train = 512;
  std::size_t val = 128;
  std::size_t distractors = 256;
  std::size_t distractors_holdout = 128;
};

ToyData make_toy_data(std::uint64_t seed, int width, int height, const ToyDataSizes& sizes = {});

/// Default schedule of each stage.
TrainSchedule default_schedule(Stage stage, std::uint64_t seed);

}  // namespace ssdkit

namespace ssdkit {

/// One `train-toy` invocation.
struct StageRequest {
  Stage stage = Stage::pretrain_lowres;
  std::uint64_t seed = 0;
  /// Overrides of the stage defaults. Negative epochs and non-positive batch
  /// size or learning rate keep the default; 0 epochs trains nothing.
  int epochs = -1;
  int batch_size = -1;
  double learning_rate = -1;
  /// Start weights (required for fp-suppress and post-prune).
  std::optional<WeightStore> init;
  /// Network structure (required for post-prune; defaults to the toy graph).
  std::optional<NetGraph> graph;
  bool split_first_branch = false;
  ToyDataSizes data;
};

struct StageOutcome {
  NetGraph graph;
  WeightStore weights;
  TrainLog log;
  std::size_t mined = 0;
  bool nothing_to_suppress = false;
  double distractor_score_before = 0;
  double distractor_score_after = 0;
  /// Validation AP of the starting weights (only when initial weights are given).
  std::optional<ApResult> initial_ap;
  ApResult final_ap;
};

/// Runs a training stage end to end on synthetic data derived from the seed.
StageOutcome run_stage(const StageRequest& request);

}  // namespace ssdkit
