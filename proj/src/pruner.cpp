#include "ssdkit/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ssdkit/error.hpp"
#include "ssdkit/random.hpp"

namespace ssdkit {

std::set<std::string> default_exempt(const NetGraph& g) {
  std::set<std::string> out;
  for (const auto& l : g.layers) {
    if (l.kind == LayerKind::detect_head) out.insert(l.name);
    if (l.kind == LayerKind::conv &&
        std::find(l.inputs.begin(), l.inputs.end(), kGraphInput) != l.inputs.end())
      out.insert(l.name);
  }
  return out;
}

void check_weights(const NetGraph& g, const WeightStore& w) {
  const auto shapes = infer_shapes(g);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    if (!has_weights(l.kind)) continue;
    const int cin = l.kind == LayerKind::dwconv ? 1 : input_shapes(g, shapes, i).front().c;
    const std::vector<int> expect{shapes[i].c, cin, l.kernel_h, l.kernel_w};
    auto it = w.find(l.name);
    if (it == w.end()) throw ValidationError("weights: no tensor for layer '" + l.name + "'");
    if (it->second.shape != expect || it->second.data.size() != it->second.numel())
      throw ValidationError("weights: tensor for layer '" + l.name + "' does not match the graph shape");
    auto b = w.find(bias_key(l.name));
    if (b != w.end() && (b->second.shape != std::vector<int>{shapes[i].c} || b->second.data.size() != b->second.numel()))
      throw ValidationError("weights: bias for layer '" + l.name + "' does not match the graph shape");
  }
}

namespace {

std::vector<int> iota_vec(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

/// Sorted survivors after removing `remove` of `n` channels uniformly at random.
std::vector<int> sample_kept(int n, int remove, Rng& rng) {
  std::vector<int> idx = iota_vec(n);
  for (int i = 0; i < remove; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<int> kept(idx.begin() + remove, idx.end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

Tensor slice(const Tensor& t, const std::vector<int>& rows, const std::vector<int>* cols) {
  const int ci = t.shape[1];
  const std::size_t inner = static_cast<std::size_t>(t.shape[2]) * t.shape[3];
  const std::vector<int> all_cols = iota_vec(ci);
  const auto& cs = cols ? *cols : all_cols;
  Tensor out;
  out.shape = {static_cast<int>(rows.size()), static_cast<int>(cs.size()), t.shape[2], t.shape[3]};
  out.data.reserve(out.numel());
  for (int r : rows)
    for (int c : cs) {
      const auto* src = t.data.data() + (static_cast<std::size_t>(r) * ci + c) * inner;
      out.data.insert(out.data.end(), src, src + inner);
    }
  return out;
}

Tensor slice_bias(const Tensor& t, const std::vector<int>& rows) {
  Tensor out;
  out.shape = {static_cast<int>(rows.size())};
  for (int r : rows) out.data.push_back(t.data[static_cast<std::size_t>(r)]);
  return out;
}

}  // namespace

PruneResult prune(const NetGraph& g, const WeightStore* weights, const PruneSpec& spec) {
  if (!(spec.ratio >= 0 && spec.ratio < 1)) throw ValidationError("prune: ratio must lie in [0, 1)");
  for (const auto& name : spec.exempt)
    if (g.find(name) < 0) throw ValidationError("prune: exempt layer '" + name + "' is not in the graph");
  const auto shapes = infer_shapes(g);
  if (weights) check_weights(g, *weights);

  std::set<std::string> exempt = default_exempt(g);
  exempt.insert(spec.exempt.begin(), spec.exempt.end());

  PruneResult res;
  res.report.before = analyze(g);
  if (spec.ratio == 0) {
    res.graph = g;
    if (weights) res.weights = *weights;
    for (std::size_t i = 0; i < g.layers.size(); ++i)
      res.report.layers.push_back({g.layers[i].name, g.layers[i].kind, shapes[i].c, iota_vec(shapes[i].c), false});
    res.report.after = res.report.before;
    return res;
  }

  Rng rng(spec.seed);
  const std::size_t n = g.layers.size();
  std::vector<std::vector<int>> kept(n);
  NetGraph out = g;
  std::optional<WeightStore> w;
  if (weights) w = *weights;

  auto kept_of = [&](const std::string& producer) -> std::vector<int> {
    if (producer == kGraphInput) return iota_vec(g.input_c);
    return kept[static_cast<std::size_t>(g.find(producer))];
  };

  std::vector<char> sampled(n, 0);
  for (std::size_t i : topo_order(g)) {
    const Layer& l = g.layers[i];
    const std::vector<int> in_kept = kept_of(l.inputs.front());
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::detect_head: {
        const int c = shapes[i].c;
        const bool prunable = l.kind == LayerKind::conv && !exempt.contains(l.name);
        if (prunable) {
          const int remove = static_cast<int>(std::ceil(spec.ratio * c - 1e-9));
          if (remove >= c)
            throw ValidationError("prune: layer '" + l.name + "' would be left with 0 channels");
          kept[i] = sample_kept(c, remove, rng);
          sampled[i] = 1;
        } else {
          kept[i] = iota_vec(c);
        }
        out.layers[i].out_channels = static_cast<int>(kept[i].size());
        if (w) {
          auto& t = (*w)[l.name];
          t = slice(t, kept[i], &in_kept);
          auto b = w->find(bias_key(l.name));
          if (b != w->end()) b->second = slice_bias(b->second, kept[i]);
        }
        break;
      }
      case LayerKind::dwconv:
        kept[i] = in_kept;
        if (out.layers[i].out_channels != 0) out.layers[i].out_channels = static_cast<int>(in_kept.size());
        if (w) {
          auto& t = (*w)[l.name];
          t = slice(t, in_kept, nullptr);
          auto b = w->find(bias_key(l.name));
          if (b != w->end()) b->second = slice_bias(b->second, in_kept);
        }
        break;
      case LayerKind::concat: {
        int offset = 0;
        for (const auto& in : l.inputs) {
          for (int k : kept_of(in)) kept[i].push_back(offset + k);
          offset += in == kGraphInput ? g.input_c : shapes[static_cast<std::size_t>(g.find(in))].c;
        }
        break;
      }
      default:
        kept[i] = in_kept;
        break;
    }
    if (kept[i].empty()) throw ValidationError("prune: layer '" + l.name + "' would be left with 0 channels");
  }

  infer_shapes(out);
  if (w) check_weights(out, *w);
  for (std::size_t i = 0; i < n; ++i)
    res.report.layers.push_back({g.layers[i].name, g.layers[i].kind, shapes[i].c, kept[i], sampled[i] != 0});
  res.report.after = analyze(out);
  res.graph = std::move(out);
  res.weights = std::move(w);
  return res;
}

std::string format_report(const PruneReport& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-12s %8s %8s %8s\n", "layer", "kind", "before", "kept", "removed");
  os << line;
  for (const auto& l : r.layers) {
    if (!has_weights(l.kind)) continue;
    const int k = static_cast<int>(l.kept.size());
    std::snprintf(line, sizeof line, "%-24s %-12s %8d %8d %8d\n", l.name.c_str(),
                  std::string(to_string(l.kind)).c_str(), l.channels_before, k, l.channels_before - k);
    os << line;
  }
  std::snprintf(line, sizeof line, "GMAC: %.4f -> %.4f\nparams (M): %.4f -> %.4f\n", r.before.gmac(),
                r.after.gmac(), r.before.mparams(), r.after.mparams());
  os << line;
  return os.str();
}

}  // namespace ssdkit
