#include <doctest.h>

#include <algorithm>

#include "ssdkit/error.hpp"
#include "ssdkit/random.hpp"
#include "ssdkit/redetect.hpp"

using namespace ssdkit;

namespace {

Detection det(BBox b, double score, int label = 1, std::size_t idx = 0) {
  Detection d;
  d.box = b;
  d.score = score;
  d.label = label;
  d.prior_index = idx;
  return d;
}

FrameDetections frame(std::int64_t f, std::vector<Detection> dets) { return {f, std::move(dets)}; }

const BBox X{.2, .2, .4, .4};
const BBox X_shift{.22, .2, .42, .4};  // IOU with X = .18/.22 ~ .818

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(validate(TrackerConfig{}));
  CHECK_THROWS_AS(validate(TrackerConfig{0.6, 0.5, 0.3}), ValidationError);
  CHECK_THROWS_AS(validate(TrackerConfig{0.0, 0.5, 0.3}), ValidationError);
  CHECK_THROWS_AS(validate(TrackerConfig{0.2, 1.0, 0.3}), ValidationError);
  CHECK_THROWS_AS(validate(TrackerConfig{0.2, 0.5, 1.0}), ValidationError);
  CHECK_THROWS_AS(Tracker(TrackerConfig{0.2, 0.5, 0.0}), ValidationError);
}

TEST_CASE("low-confidence detection retained through an IOU match") {
  Tracker t;
  auto a = t.step(frame(0, {det(X, .8)}));
  REQUIRE(a.dets.size() == 1);
  CHECK_FALSE(a.dets[0].retained);
  auto b = t.step(frame(1, {det(X_shift, .25)}));
  REQUIRE(b.dets.size() == 1);
  CHECK(b.dets[0].retained);
  CHECK(b.dets[0].score == .25);
  CHECK(b.dets[0].box == X_shift);
}

TEST_CASE("no history, gaps and label mismatch") {
  Tracker t;
  CHECK(t.step(frame(0, {det(X, .25)})).dets.empty());
  t.reset();
  t.step(frame(0, {det(X, .9)}));
  CHECK(t.step(frame(1, {})).dets.empty());
  CHECK(t.step(frame(2, {det(X, .3)})).dets.empty());
  t.step(frame(3, {det(X, .9, 1)}));
  CHECK(t.step(frame(4, {det(X, .3, 2)})).dets.empty());
}

TEST_CASE("below the floor or too far away is dropped") {
  Tracker t;
  t.step(frame(0, {det(X, .9)}));
  CHECK(t.step(frame(1, {det(X, .15)})).dets.empty());
  t.reset();
  t.step(frame(0, {det(X, .9)}));
  CHECK(t.step(frame(1, {det({.6, .6, .8, .8}, .4)})).dets.empty());
}

TEST_CASE("one previous detection sustains at most one candidate") {
  Tracker t;
  t.step(frame(0, {det(X, .9)}));
  const auto out = t.step(frame(1, {det(X_shift, .3, 1, 0), det(X, .35, 1, 1)}));
  REQUIRE(out.dets.size() == 1);
  CHECK(out.dets[0].box == X);  // the better overlap wins
}

TEST_CASE("run_sequence: blink sequence and single frame") {
  CHECK(run_sequence({}).empty());
  const auto single = run_sequence({frame(0, {det(X, .9), det({.6, .6, .7, .7}, .4)})});
  REQUIRE(single.size() == 1);
  CHECK(single[0].dets.size() == 1);

  const auto seq = run_sequence({frame(0, {det(X, .8)}), frame(1, {det(X, .3)}), frame(2, {det(X, .8)})});
  for (const auto& f : seq) CHECK(f.dets.size() == 1);
  CHECK(seq[1].dets[0].retained);
}

TEST_CASE("properties over random streams") {
  Rng rng(77);
  std::vector<FrameDetections> frames;
  for (int f = 0; f < 200; ++f) {
    FrameDetections fd;
    fd.frame = f;
    const int n = static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) {
      const double x = rng.uniform(0, .3), y = rng.uniform(0, .3);
      fd.dets.push_back(det({x, y, x + .5, y + .5}, rng.uniform(.2, 1.0), 1 + static_cast<int>(rng.below(2)),
                            static_cast<std::size_t>(i)));
    }
    frames.push_back(fd);
  }
  const TrackerConfig cfg;
  const auto out = run_sequence(frames, cfg);
  CHECK(out == run_sequence(frames, cfg));
  FrameDetections prev;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const auto& d : out[f].dets) {
      Detection plain = d;
      plain.retained = false;
      CHECK(std::find(frames[f].dets.begin(), frames[f].dets.end(), plain) != frames[f].dets.end());
      if (d.retained) {
        CHECK(d.score < cfg.display_threshold);
        double best = 0;
        for (const auto& p : prev.dets)
          if (p.label == d.label) best = std::max(best, iou(p.box, d.box));
        CHECK(best >= cfg.match_iou_min);
      } else {
        CHECK(d.score >= cfg.display_threshold);
      }
    }
    prev = out[f];
  }

  // display == floor: plain filter
  const auto id = run_sequence(frames, TrackerConfig{0.2, 0.2, 0.3});
  for (std::size_t f = 0; f < frames.size(); ++f) CHECK(id[f].dets.size() == frames[f].dets.size());
}
