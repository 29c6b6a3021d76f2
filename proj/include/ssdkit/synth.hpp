#pragma once

#include <cstdint>
#include <vector>

#include "ssdkit/multibox.hpp"
#include "ssdkit/random.hpp"

namespace ssdkit {

/// Toy classes: 1 = disc (vehicle stand-in), 2 = bar (pedestrian stand-in).
inline constexpr int kDisc = 1;
inline constexpr int kBar = 2;
inline constexpr int kToyClasses = 3;

/// Single-channel scene with intensities in [0, 1].
struct SynthScene {
  int width = 0;
  int height = 0;
  std::vector<double> image;
  GroundTruth gt;
  /// Only unlabeled thin vertical stripes (pole-like hard negatives).
  bool distractor = false;

  friend bool operator==(const SynthScene&, const SynthScene&) = default;
};

/// 1-5 bright discs/bars (or 1-5 stripes when distractor_only) on a noisy
/// background. Object sizes are in pixels and independent of resolution.
SynthScene generate_scene(Rng& rng, int width, int height, bool distractor_only);

/// Scene i is drawn from its own stream derived from (seed, i).
std::vector<SynthScene> generate_corpus(std::uint64_t seed, std::size_t count, int width, int height,
                                        bool distractor_only);

/// splitmix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace ssdkit
