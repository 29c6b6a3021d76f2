#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ssdkit {

enum class LayerKind { conv, dwconv, relu, maxpool, avgpool, detect_head, concat };

std::string_view to_string(LayerKind k);
LayerKind layer_kind_from_string(std::string_view s);

/// conv, dwconv and detect_head carry weights.
bool has_weights(LayerKind k);
/// Kinds that use kernel/stride/pad.
bool is_windowed(LayerKind k);

/// Name of the pseudo-producer that stands for the graph input.
inline constexpr std::string_view kGraphInput = "input";

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::conv;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int pad = 0;
  /// Required for conv and detect_head; optional for dwconv (0 = unset).
  int out_channels = 0;
  std::vector<std::string> inputs;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct NetGraph {
  int input_c = 3;
  int input_h = 300;
  int input_w = 300;
  std::vector<Layer> layers;

  /// Index of the named layer, or -1.
  int find(std::string_view name) const;

  friend bool operator==(const NetGraph&, const NetGraph&) = default;
};

struct Shape {
  int c = 0, h = 0, w = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Layer indices in dependency order (stable w.r.t. declaration order).
/// Throws ValidationError on unresolved inputs or cycles.
std::vector<std::size_t> topo_order(const NetGraph& g);

/// Output shape of every layer, indexed like g.layers.
std::vector<Shape> infer_shapes(const NetGraph& g);

/// Input shapes seen by layer i (one per entry of layers[i].inputs).
std::vector<Shape> input_shapes(const NetGraph& g, const std::vector<Shape>& shapes, std::size_t i);

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::conv;
  Shape out;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
};

struct ComplexityReport {
  std::vector<LayerCost> layers;
  std::uint64_t total_macs = 0;
  std::uint64_t total_params = 0;

  double gmac() const { return static_cast<double>(total_macs) * 1e-9; }
  double mparams() const { return static_cast<double>(total_params) * 1e-6; }
};

ComplexityReport analyze(const NetGraph& g);

/// Per-layer table followed by totals.
std::string format_report(const ComplexityReport& r);

/// Graph JSON: {"input": [C,H,W], "layers": [{"name","kind","kernel","stride",
/// "pad","out_channels","inputs"}]}. Unknown keys are rejected.
NetGraph graph_from_json(const std::string& text);
std::string graph_to_json(const NetGraph& g);

NetGraph load_graph(const std::filesystem::path& path);
void save_graph(const NetGraph& g, const std::filesystem::path& path);

/// Same graph with a different input resolution.
NetGraph with_input(NetGraph g, int w, int h);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ssdkit
