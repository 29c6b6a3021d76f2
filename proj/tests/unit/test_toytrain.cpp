#include <doctest.h>

#include <cmath>

#include "ssdkit/error.hpp"
#include "ssdkit/toytrain.hpp"
#include "ssdkit/weights.hpp"

using namespace ssdkit;

namespace {

ToyDataSizes small_sizes() { return {48, 16, 16, 16}; }

}  // namespace

TEST_CASE("schedules and stage names") {
  for (Stage s : {Stage::pretrain_lowres, Stage::finetune_highres, Stage::fp_suppress, Stage::post_prune}) {
    CHECK(stage_from_string(to_string(s)) == s);
    CHECK_NOTHROW(validate(default_schedule(s, 1)));
  }
  CHECK_THROWS_AS(stage_from_string("warmup"), ValidationError);
  const auto fp = default_schedule(Stage::fp_suppress, 1);
  CHECK(fp.epochs == 5);
  TrainSchedule bad;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
}

TEST_CASE("toy priors line up with the toy heads at both resolutions") {
  for (bool split : {false, true}) {
    auto m = make_toy_model(3, split);
    CHECK(m.priors.size() == static_cast<std::size_t>(m.net.forward(std::vector<double>(64 * 64)).prior_count()));
    retarget(m, kHighResW, kHighResH);
    CHECK(m.specs.front().feature_map_w == 24);
    CHECK(m.specs.front().feature_map_h == 16);
    CHECK(m.specs.front().min_size == doctest::Approx(8 * std::sqrt(1.5)));
    CHECK(m.priors.size() ==
          static_cast<std::size_t>(m.net.forward(std::vector<double>(kHighResW * kHighResH)).prior_count()));
  }
}

TEST_CASE("zero epochs leave the network unchanged") {
  auto m = make_toy_model(4);
  const auto before = serialize_weights(m.net.to_weights());
  const auto data = make_toy_data(1, kLowResW, kLowResH, small_sizes());
  auto s = default_schedule(Stage::pretrain_lowres, 1);
  s.epochs = 0;
  const auto log = train(m, data.train, data.val, s);
  CHECK(log.epochs.empty());
  CHECK(log.steps == 0);
  CHECK(serialize_weights(m.net.to_weights()) == before);
}

TEST_CASE("training is bit-reproducible and reduces the loss") {
  auto run = [] {
    StageRequest req;
    req.seed = 11;
    req.epochs = 3;
    req.batch_size = 8;
    req.data = small_sizes();
    return run_stage(req);
  };
  const auto a = run();
  const auto b = run();
  CHECK(to_jsonl(a.log) == to_jsonl(b.log));
  CHECK(serialize_weights(a.weights) == serialize_weights(b.weights));
  REQUIRE(a.log.epochs.size() == 3);
  CHECK(a.log.epochs.back().loss < a.log.epochs.front().loss);
  CHECK(a.log.steps == 18);
  const auto line = to_jsonl(a.log).substr(0, to_jsonl(a.log).find('\n'));
  CHECK(line.rfind("{\"epoch\":1,\"loss\":", 0) == 0);
  CHECK(line.find("\"ap_disc\"") != std::string::npos);
  CHECK(line.find("\"ap_bar\"") != std::string::npos);
}

TEST_CASE("stage requests are validated") {
  StageRequest fp;
  fp.stage = Stage::fp_suppress;
  CHECK_THROWS_AS(run_stage(fp), ValidationError);
  StageRequest pp;
  pp.stage = Stage::post_prune;
  pp.init = WeightStore{};
  CHECK_THROWS_AS(run_stage(pp), ValidationError);
  StageRequest pre;
  pre.init = make_toy_model(1).net.to_weights();
  CHECK_THROWS_AS(run_stage(pre), ValidationError);
  StageRequest neg;
  neg.learning_rate = -1;
  neg.epochs = 0;
  neg.data = small_sizes();
  CHECK_NOTHROW(run_stage(neg));
}

TEST_CASE("fp suppression on an untrained net with nothing firing") {
  auto m = make_toy_model(4);
  const auto data = make_toy_data(2, kLowResW, kLowResH, small_sizes());
  const auto before = serialize_weights(m.net.to_weights());
  FpSuppressOptions o;
  o.base = default_schedule(Stage::fp_suppress, 2);
  o.mine_threshold = 0.99;
  const auto r = fp_suppress(m, data.train, data.distractors, data.val, o);
  CHECK(r.nothing_to_suppress);
  CHECK(r.mined == 0);
  CHECK(serialize_weights(m.net.to_weights()) == before);
}

TEST_CASE("resolution mismatch is rejected") {
  auto m = make_toy_model(4);
  const auto wide = make_toy_data(2, kHighResW, kHighResH, small_sizes());
  CHECK_THROWS_AS(train(m, wide.train, {}, default_schedule(Stage::pretrain_lowres, 1)), ValidationError);
}
