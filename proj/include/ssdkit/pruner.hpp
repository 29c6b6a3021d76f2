#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ssdkit/netgraph.hpp"
#include "ssdkit/weights.hpp"

namespace ssdkit {

struct PruneSpec {
  /// Fraction of output channels removed from every prunable conv, in [0, 1).
  double ratio = 0.0;
  std::uint64_t seed = 0;
  /// Extra layers never pruned. Detection heads and convs reading the graph
  /// input are always exempt.
  std::set<std::string> exempt;
};

/// Layers that are exempt no matter what the spec lists.
std::set<std::string> default_exempt(const NetGraph& g);

struct LayerPrune {
  std::string name;
  LayerKind kind = LayerKind::conv;
  int channels_before = 0;
  /// Surviving original output-channel indices, ascending.
  std::vector<int> kept;
  bool sampled = false;
};

struct PruneReport {
  std::vector<LayerPrune> layers;
  ComplexityReport before;
  ComplexityReport after;
};

struct PruneResult {
  NetGraph graph;
  std::optional<WeightStore> weights;
  PruneReport report;
};

/// Random structured filter pruning: each non-exempt conv loses a seeded,
/// uniformly sampled ceil(ratio * C_out) filters, and every consumer is cut to
/// match (dwconv follows its producer, concat re-indexes across its inputs).
PruneResult prune(const NetGraph& g, const WeightStore* weights, const PruneSpec& spec);

/// Checks that every weighted layer has tensors of the expected shape.
void check_weights(const NetGraph& g, const WeightStore& w);

std::string format_report(const PruneReport& r);

}  // namespace ssdkit
