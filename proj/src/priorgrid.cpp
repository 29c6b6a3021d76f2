#include "ssdkit/priorgrid.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "ssdkit/error.hpp"

namespace ssdkit {

using ordered_json = nlohmann::ordered_json;

void validate(const PriorSpec& s) {
  if (s.feature_map_w <= 0 || s.feature_map_h <= 0)
    throw ValidationError("prior spec: feature map dims must be positive");
  if (s.input_w <= 0 || s.input_h <= 0)
    throw ValidationError("prior spec: input dims must be positive");
  if (!(s.min_size > 0) || !(s.min_size < s.max_size))
    throw ValidationError("prior spec: need 0 < min_size < max_size");
  for (std::size_t i = 0; i < s.aspect_ratios.size(); ++i) {
    const double ar = s.aspect_ratios[i];
    if (!(ar > 0) || !std::isfinite(ar))
      throw ValidationError("prior spec: aspect ratios must be positive");
    if (std::abs(ar - 1.0) < 1e-6)
      throw ValidationError("prior spec: aspect ratio 1 is implied and must not be listed");
    for (std::size_t j = 0; j < i; ++j) {
      const double other = s.aspect_ratios[j];
      if (std::abs(ar - other) < 1e-6 || std::abs(ar * other - 1.0) < 1e-6)
        throw ValidationError("prior spec: duplicate aspect ratio");
    }
  }
}

namespace {

CenterBox finish(const CenterBox& c, bool clip) {
  if (!clip) return c;
  return to_center(clip_unit(to_corner(c)));
}

}  // namespace

PriorGrid generate(const PriorSpec& spec) {
  validate(spec);
  PriorGrid grid;
  grid.priors.reserve(spec.prior_count());
  const double in_w = spec.input_w;
  const double in_h = spec.input_h;
  const double big = std::sqrt(spec.min_size * spec.max_size);
  for (int i = 0; i < spec.feature_map_h; ++i) {
    for (int j = 0; j < spec.feature_map_w; ++j) {
      const double cx = (j + 0.5) / spec.feature_map_w;
      const double cy = (i + 0.5) / spec.feature_map_h;
      grid.priors.push_back(finish({cx, cy, spec.min_size / in_w, spec.min_size / in_h}, spec.clip));
      grid.priors.push_back(finish({cx, cy, big / in_w, big / in_h}, spec.clip));
      for (double ar : spec.aspect_ratios) {
        const double r = std::sqrt(ar);
        grid.priors.push_back(
            finish({cx, cy, spec.min_size * r / in_w, spec.min_size / r / in_h}, spec.clip));
        grid.priors.push_back(
            finish({cx, cy, spec.min_size / r / in_w, spec.min_size * r / in_h}, spec.clip));
      }
    }
  }
  grid.branch_offsets.push_back({0, grid.priors.size()});
  grid.specs.push_back(spec);
  return grid;
}

PriorGrid generate(const std::vector<PriorSpec>& specs) {
  PriorGrid all;
  for (const auto& s : specs) {
    PriorGrid g = generate(s);
    const std::size_t begin = all.priors.size();
    all.priors.insert(all.priors.end(), g.priors.begin(), g.priors.end());
    all.branch_offsets.push_back({begin, all.priors.size()});
    all.specs.push_back(s);
  }
  return all;
}

std::pair<PriorSpec, PriorSpec> split_branch(const PriorSpec& spec) {
  validate(spec);
  const double mid = (spec.min_size + spec.max_size) / 2;
  PriorSpec lo = spec;
  PriorSpec hi = spec;
  lo.max_size = mid;
  hi.min_size = mid;
  return {lo, hi};
}

PriorSpec rescale(const PriorSpec& spec, int new_input_w, int new_input_h) {
  if (new_input_w <= 0 || new_input_h <= 0)
    throw ValidationError("rescale: new input dims must be positive");
  if (new_input_w == spec.input_w && new_input_h == spec.input_h) return spec;
  const double rw = static_cast<double>(new_input_w) / spec.input_w;
  const double rh = static_cast<double>(new_input_h) / spec.input_h;
  const double s = std::sqrt(rw * rh);
  PriorSpec out = spec;
  out.min_size = spec.min_size * s;
  out.max_size = spec.max_size * s;
  out.feature_map_w = std::max(1, static_cast<int>(std::lround(spec.feature_map_w * rw)));
  out.feature_map_h = std::max(1, static_cast<int>(std::lround(spec.feature_map_h * rh)));
  out.input_w = new_input_w;
  out.input_h = new_input_h;
  return out;
}

std::vector<PriorSpec> ssd300_specs() {
  const int fm[] = {38, 19, 10, 5, 3, 1};
  const double mins[] = {30, 60, 111, 162, 213, 264};
  const double maxs[] = {60, 111, 162, 213, 264, 315};
  std::vector<PriorSpec> out;
  for (int b = 0; b < 6; ++b) {
    PriorSpec s;
    s.feature_map_w = s.feature_map_h = fm[b];
    s.min_size = mins[b];
    s.max_size = maxs[b];
    s.aspect_ratios = (b == 0 || b >= 4) ? std::vector<double>{2} : std::vector<double>{2, 3};
    s.input_w = s.input_h = 300;
    s.clip = false;
    out.push_back(s);
  }
  return out;
}

namespace {

ordered_json spec_to_json(const PriorSpec& s) {
  ordered_json j;
  j["feature_map"] = {s.feature_map_w, s.feature_map_h};
  j["min_size"] = s.min_size;
  j["max_size"] = s.max_size;
  j["aspect_ratios"] = s.aspect_ratios;
  return j;
}

template <typename Json>
const Json& require(const Json& j, const char* key, const char* where) {
  auto it = j.find(key);
  if (it == j.end())
    throw ValidationError(std::string(where) + ": missing key '" + key + "'");
  return *it;
}

template <typename Json>
void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }))
      throw ValidationError(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

template <typename Json>
PriorSpec spec_from_json(const Json& b, int in_w, int in_h, bool clip) {
  if (!b.is_object()) throw ValidationError("priors config: branch must be an object");
  reject_unknown(b, {"feature_map", "min_size", "max_size", "aspect_ratios"}, "priors config branch");
  PriorSpec s;
  const auto& fm = require(b, "feature_map", "priors config branch");
  if (!fm.is_array() || fm.size() != 2)
    throw ValidationError("priors config: feature_map must be [w, h]");
  s.feature_map_w = fm[0].template get<int>();
  s.feature_map_h = fm[1].template get<int>();
  s.min_size = require(b, "min_size", "priors config branch").template get<double>();
  s.max_size = require(b, "max_size", "priors config branch").template get<double>();
  if (b.contains("aspect_ratios"))
    s.aspect_ratios = b["aspect_ratios"].template get<std::vector<double>>();
  s.input_w = in_w;
  s.input_h = in_h;
  s.clip = clip;
  validate(s);
  return s;
}

}  // namespace

std::string priors_to_json(const PriorGrid& grid) {
  ordered_json root;
  ordered_json branches = ordered_json::array();
  for (std::size_t b = 0; b < grid.branch_offsets.size(); ++b) {
    ordered_json j;
    j["index"] = b;
    j["offset"] = grid.branch_offsets[b].begin;
    j["count"] = grid.branch_offsets[b].size();
    if (b < grid.specs.size()) {
      const auto& s = grid.specs[b];
      const ordered_json sj = spec_to_json(s);
      for (auto& [k, v] : sj.items()) j[k] = v;
      j["input"] = {s.input_w, s.input_h};
      j["clip"] = s.clip;
    }
    branches.push_back(std::move(j));
  }
  root["branches"] = std::move(branches);
  ordered_json priors = ordered_json::array();
  for (const auto& p : grid.priors) {
    ordered_json j;
    j["cx"] = p.cx;
    j["cy"] = p.cy;
    j["w"] = p.w;
    j["h"] = p.h;
    priors.push_back(std::move(j));
  }
  root["priors"] = std::move(priors);
  return root.dump();
}

PriorGrid priors_from_json(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("priors json: ") + e.what());
  }
  try {
    PriorGrid g;
    for (const auto& p : require(root, "priors", "priors json")) {
      CenterBox c{p.at("cx").get<double>(), p.at("cy").get<double>(), p.at("w").get<double>(),
                  p.at("h").get<double>()};
      if (!is_valid(c)) throw ValidationError("priors json: invalid prior box");
      g.priors.push_back(c);
    }
    for (const auto& b : require(root, "branches", "priors json")) {
      const std::size_t off = b.at("offset").get<std::size_t>();
      const std::size_t cnt = b.at("count").get<std::size_t>();
      if (off + cnt > g.priors.size()) throw ValidationError("priors json: branch range out of bounds");
      g.branch_offsets.push_back({off, off + cnt});
      if (b.contains("feature_map")) {
        const auto& in = b.at("input");
        g.specs.push_back(spec_from_json(ordered_json{{"feature_map", b["feature_map"]},
                                                      {"min_size", b["min_size"]},
                                                      {"max_size", b["max_size"]},
                                                      {"aspect_ratios", b["aspect_ratios"]}},
                                         in[0].get<int>(), in[1].get<int>(),
                                         b.value("clip", false)));
      }
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("priors json: ") + e.what());
  }
}

std::vector<PriorSpec> specs_from_json(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
    if (!root.is_object()) throw ValidationError("priors config: top level must be an object");
    reject_unknown(root, {"input", "clip", "branches"}, "priors config");
    const auto& in = require(root, "input", "priors config");
    if (!in.is_array() || in.size() != 2) throw ValidationError("priors config: input must be [W, H]");
    const int w = in[0].get<int>();
    const int h = in[1].get<int>();
    const bool clip = root.value("clip", false);
    std::vector<PriorSpec> out;
    for (const auto& b : require(root, "branches", "priors config")) out.push_back(spec_from_json(b, w, h, clip));
    if (out.empty()) throw ValidationError("priors config: no branches");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("priors config: ") + e.what());
  }
}

std::string specs_to_json(const std::vector<PriorSpec>& specs) {
  if (specs.empty()) throw ValidationError("priors config: no branches");
  ordered_json root;
  root["input"] = {specs.front().input_w, specs.front().input_h};
  root["clip"] = specs.front().clip;
  ordered_json branches = ordered_json::array();
  for (const auto& s : specs) branches.push_back(spec_to_json(s));
  root["branches"] = std::move(branches);
  return root.dump(2);
}

}  // namespace ssdkit
