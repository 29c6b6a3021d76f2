#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ssdkit/geometry.hpp"

namespace ssdkit {

/// Parameters of one prediction branch's prior boxes. Sizes are in pixels of
/// the reference input; aspect ratio 1 is implied and must not be listed.
struct PriorSpec {
  int feature_map_w = 1;
  int feature_map_h = 1;
  double min_size = 0;
  double max_size = 0;
  std::vector<double> aspect_ratios;
  int input_w = 300;
  int input_h = 300;
  bool clip = false;

  /// 2 squares plus each extra ratio and its reciprocal.
  int boxes_per_location() const { return 2 + 2 * static_cast<int>(aspect_ratios.size()); }
  std::size_t prior_count() const {
    return static_cast<std::size_t>(feature_map_w) * feature_map_h * boxes_per_location();
  }

  friend bool operator==(const PriorSpec&, const PriorSpec&) = default;
};

/// Throws ValidationError naming the violated invariant.
void validate(const PriorSpec& spec);

struct BranchRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct PriorGrid {
  std::vector<CenterBox> priors;
  std::vector<BranchRange> branch_offsets;
  std::vector<PriorSpec> specs;

  std::size_t size() const { return priors.size(); }
};

/// Priors for one branch, row-major over cells, then per-location box order:
/// min square, sqrt(min*max) square, then (ar, 1/ar) pairs.
PriorGrid generate(const PriorSpec& spec);

/// Concatenation of the per-branch grids in branch order.
PriorGrid generate(const std::vector<PriorSpec>& specs);

/// Splits one branch into (min, mid) and (mid, max) on the same feature map.
std::pair<PriorSpec, PriorSpec> split_branch(const PriorSpec& spec);

/// Scales sizes by the geometric mean of the per-axis ratios and feature-map
/// dims by the per-axis ratio (rounded, at least 1).
PriorSpec rescale(const PriorSpec& spec, int new_input_w, int new_input_h);

/// Six-branch SSD300 layout (38,19,10,5,3,1).
std::vector<PriorSpec> ssd300_specs();

/// Priors JSON: {"branches": [...], "priors": [{"cx","cy","w","h"}, ...]}.
std::string priors_to_json(const PriorGrid& grid);
PriorGrid priors_from_json(const std::string& text);

/// Branch config JSON: {"input":[W,H], "clip":bool,
/// "branches":[{"feature_map":[w,h],"min_size","max_size","aspect_ratios"}]}.
std::vector<PriorSpec> specs_from_json(const std::string& text);
std::string specs_to_json(const std::vector<PriorSpec>& specs);

}  // namespace ssdkit
