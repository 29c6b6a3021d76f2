#include <doctest.h>

#include <cmath>

#include "ssdkit/error.hpp"
#include "ssdkit/random.hpp"
#include "ssdkit/synth.hpp"
#include "ssdkit/toytrain.hpp"

using namespace ssdkit;

TEST_CASE("scenes are deterministic and well formed") {
  Rng a(5), b(5);
  CHECK(generate_scene(a, 64, 64, false) == generate_scene(b, 64, 64, false));
  CHECK(generate_corpus(9, 20, 96, 64, false) == generate_corpus(9, 20, 96, 64, false));
  CHECK_FALSE(generate_corpus(9, 5, 64, 64, false) == generate_corpus(10, 5, 64, 64, false));

  for (const auto& s : generate_corpus(3, 300, 96, 64, false)) {
    CHECK(s.image.size() == 96u * 64u);
    CHECK_FALSE(s.distractor);
    CHECK(s.gt.size() >= 1);
    CHECK(s.gt.size() <= 5);
    for (const auto& g : s.gt) {
      CHECK(is_valid(g.box));
      CHECK(g.box.area() > 0);
      CHECK(g.box.x1 >= 0);
      CHECK(g.box.y2 <= 1);
      CHECK((g.label == kDisc || g.label == kBar));
    }
    for (double px : s.image) {
      CHECK(px >= 0);
      CHECK(px <= 1);
    }
  }
  for (const auto& s : generate_corpus(4, 100, 64, 64, true)) {
    CHECK(s.distractor);
    CHECK(s.gt.empty());
  }
  Rng r(1);
  CHECK_THROWS_AS(generate_scene(r, 8, 64, false), ValidationError);
}

TEST_CASE("object sizes cover both halves of the split first branch") {
  const auto specs = toy_prior_specs(true);
  REQUIRE(specs.size() == 3);
  int in_lo = 0, in_hi = 0, in_b = 0, total = 0;
  for (const auto& s : generate_corpus(17, 10000, 64, 64, false)) {
    for (const auto& g : s.gt) {
      const double px = std::sqrt(g.box.width() * 64 * g.box.height() * 64);
      in_lo += px >= specs[0].min_size && px < specs[0].max_size;
      in_hi += px >= specs[1].min_size && px < specs[1].max_size;
      in_b += px >= specs[2].min_size && px <= specs[2].max_size;
      ++total;
    }
  }
  CHECK(total > 10000);
  // each interval holds a real share of the objects
  CHECK(in_lo > total / 20);
  CHECK(in_hi > total / 20);
  CHECK(in_b > total / 20);
}

TEST_CASE("mix_seed separates streams") {
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
}
