#include "ssdkit/synth.hpp"

#include <algorithm>
#include <cmath>

#include "ssdkit/error.hpp"

namespace ssdkit {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e5f5ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

struct PixelBox {
  double x1, y1, x2, y2;
};

bool overlaps(const PixelBox& a, const PixelBox& b, double margin) {
  return a.x1 < b.x2 + margin && b.x1 < a.x2 + margin && a.y1 < b.y2 + margin && b.y1 < a.y2 + margin;
}

void fill_rect(SynthScene& s, const PixelBox& b, double value) {
  const int x0 = std::max(0, static_cast<int>(std::floor(b.x1)));
  const int x1 = std::min(s.width - 1, static_cast<int>(std::ceil(b.x2)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.y1)));
  const int y1 = std::min(s.height - 1, static_cast<int>(std::ceil(b.y2)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      // Coverage-weighted edges keep thin shapes visible.
      const double cx = std::max(0.0, std::min(x + 1.0, b.x2) - std::max(static_cast<double>(x), b.x1));
      const double cy = std::max(0.0, std::min(y + 1.0, b.y2) - std::max(static_cast<double>(y), b.y1));
      const double cov = cx * cy;
      if (cov <= 0) continue;
      double& px = s.image[static_cast<std::size_t>(y) * s.width + x];
      px = px * (1 - cov) + value * cov;
    }
}

void fill_disc(SynthScene& s, double cx, double cy, double r, double value) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(s.width - 1, static_cast<int>(std::ceil(cx + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(s.height - 1, static_cast<int>(std::ceil(cy + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r * r) s.image[static_cast<std::size_t>(y) * s.width + x] = value;
    }
}

}  // namespace

SynthScene generate_scene(Rng& rng, int width, int height, bool distractor_only) {
  if (width < 16 || height < 16) throw ValidationError("synth: scene must be at least 16x16");
  SynthScene s;
  s.width = width;
  s.height = height;
  s.distractor = distractor_only;
  s.image.resize(static_cast<std::size_t>(width) * height);
  const double base = rng.uniform(0.15, 0.4);
  for (double& px : s.image) px = base + rng.uniform(-0.06, 0.06);

  const int count = rng.range(1, 5);
  std::vector<PixelBox> placed;
  const double W = width;
  const double H = height;
  for (int n = 0; n < count; ++n) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double value = rng.uniform(0.65, 1.0);
      if (distractor_only) {
        const double sw = rng.uniform(1.0, 2.5);
        const double sh = rng.uniform(0.5, 1.0) * H;
        const double x = rng.uniform(0, W - sw);
        const double y = rng.uniform(0, H - sh);
        const PixelBox b{x, y, x + sw, y + sh};
        if (std::any_of(placed.begin(), placed.end(), [&](const PixelBox& o) { return overlaps(b, o, 2); })) continue;
        placed.push_back(b);
        fill_rect(s, b, value);
        break;
      }
      const int label = rng.below(2) == 0 ? kDisc : kBar;
      PixelBox b{};
      if (label == kDisc) {
        const double d = rng.uniform(6, 34);
        const double x = rng.uniform(0, W - d);
        const double y = rng.uniform(0, H - d);
        b = {x, y, x + d, y + d};
      } else {
        const double bh = rng.uniform(10, 36);
        const double bw = bh * rng.uniform(0.35, 0.5);
        const double x = rng.uniform(0, W - bw);
        const double y = rng.uniform(0, H - bh);
        b = {x, y, x + bw, y + bh};
      }
      if (std::any_of(placed.begin(), placed.end(), [&](const PixelBox& o) { return overlaps(b, o, 1); })) continue;
      placed.push_back(b);
      if (label == kDisc)
        fill_disc(s, (b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2, (b.x2 - b.x1) / 2, value);
      else
        fill_rect(s, b, value);
      s.gt.push_back({{b.x1 / W, b.y1 / H, b.x2 / W, b.y2 / H}, label});
      break;
    }
  }
  return s;
}

std::vector<SynthScene> generate_corpus(std::uint64_t seed, std::size_t count, int width, int height,
                                        bool distractor_only) {
  std::vector<SynthScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, i));
    out.push_back(generate_scene(rng, width, height, distractor_only));
  }
  return out;
}

}  // namespace ssdkit
