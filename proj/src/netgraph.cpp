#include "ssdkit/netgraph.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unordered_map>

#include "ssdkit/error.hpp"

namespace ssdkit {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::conv, "conv"},       {LayerKind::dwconv, "dwconv"},
    {LayerKind::relu, "relu"},       {LayerKind::maxpool, "maxpool"},
    {LayerKind::avgpool, "avgpool"}, {LayerKind::detect_head, "detect_head"},
    {LayerKind::concat, "concat"},
};

}  // namespace

std::string_view to_string(LayerKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "?";
}

LayerKind layer_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (name == s) return kind;
  throw ValidationError("graph: unknown layer kind '" + std::string(s) + "'");
}

bool has_weights(LayerKind k) {
  return k == LayerKind::conv || k == LayerKind::dwconv || k == LayerKind::detect_head;
}

bool is_windowed(LayerKind k) {
  return has_weights(k) || k == LayerKind::maxpool || k == LayerKind::avgpool;
}

int NetGraph::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::size_t> topo_order(const NetGraph& g) {
  const std::size_t n = g.layers.size();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& name = g.layers[i].name;
    if (name.empty()) throw ValidationError("graph: layer with empty name");
    if (name == kGraphInput) throw ValidationError("graph: layer name 'input' is reserved");
    if (!index.emplace(name, i).second) throw ValidationError("graph: duplicate layer name '" + name + "'");
  }
  std::vector<int> pending(n, 0);
  std::vector<std::vector<std::size_t>> consumers(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& in : g.layers[i].inputs) {
      if (in == kGraphInput) continue;
      auto it = index.find(in);
      if (it == index.end())
        throw ValidationError("graph: layer '" + g.layers[i].name + "' has unresolved input '" + in + "'");
      ++pending[i];
      consumers[it->second].push_back(i);
    }
  }
  // Kahn's algorithm, always taking the lowest ready index for stability.
  std::vector<std::size_t> order;
  std::vector<char> done(n, 0);
  order.reserve(n);
  while (order.size() < n) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i] && pending[i] == 0) {
        pick = i;
        break;
      }
    }
    if (pick == n) {
      std::string names;
      for (std::size_t i = 0; i < n; ++i)
        if (!done[i]) names += (names.empty() ? "" : ", ") + g.layers[i].name;
      throw ValidationError("graph: cycle detected among layers: " + names);
    }
    done[pick] = 1;
    order.push_back(pick);
    for (std::size_t c : consumers[pick]) --pending[c];
  }
  return order;
}

std::vector<Shape> input_shapes(const NetGraph& g, const std::vector<Shape>& shapes, std::size_t i) {
  std::vector<Shape> out;
  for (const auto& in : g.layers[i].inputs) {
    if (in == kGraphInput) {
      out.push_back({g.input_c, g.input_h, g.input_w});
    } else {
      out.push_back(shapes[static_cast<std::size_t>(g.find(in))]);
    }
  }
  return out;
}

std::vector<Shape> infer_shapes(const NetGraph& g) {
  if (g.input_c <= 0 || g.input_h <= 0 || g.input_w <= 0)
    throw ValidationError("graph: input dims must be positive");
  const auto order = topo_order(g);
  std::vector<Shape> shapes(g.layers.size());
  for (std::size_t i : order) {
    const Layer& l = g.layers[i];
    const auto ins = input_shapes(g, shapes, i);
    auto fail = [&](const std::string& why) -> ValidationError {
      return ValidationError("graph: layer '" + l.name + "': " + why);
    };
    if (ins.empty()) throw fail("no inputs");
    if (l.kind != LayerKind::concat && ins.size() != 1) throw fail("expects exactly one input");
    const Shape in = ins.front();
    Shape out = in;
    if (is_windowed(l.kind)) {
      if (l.kernel_h <= 0 || l.kernel_w <= 0) throw fail("kernel must be positive");
      if (l.stride <= 0) throw fail("stride must be positive");
      if (l.pad < 0) throw fail("pad must be non-negative");
      const int hn = in.h + 2 * l.pad - l.kernel_h;
      const int wn = in.w + 2 * l.pad - l.kernel_w;
      if (hn < 0 || wn < 0) throw fail("non-positive output dimension");
      out.h = hn / l.stride + 1;
      out.w = wn / l.stride + 1;
    }
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::detect_head:
        if (l.out_channels <= 0) throw fail("out_channels must be positive");
        out.c = l.out_channels;
        break;
      case LayerKind::dwconv:
        if (l.out_channels != 0 && l.out_channels != in.c)
          throw fail("dwconv out_channels must equal its input channels");
        break;
      case LayerKind::concat:
        out.c = 0;
        for (const auto& s : ins) {
          if (s.h != in.h || s.w != in.w) throw fail("concat inputs differ in spatial size");
          out.c += s.c;
        }
        break;
      default:
        break;
    }
    if (out.c <= 0 || out.h <= 0 || out.w <= 0) throw fail("non-positive output dimension");
    shapes[i] = out;
  }
  return shapes;
}

ComplexityReport analyze(const NetGraph& g) {
  const auto shapes = infer_shapes(g);
  ComplexityReport r;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    const Shape out = shapes[i];
    LayerCost c{l.name, l.kind, out, 0, 0};
    const std::uint64_t k = static_cast<std::uint64_t>(l.kernel_h) * l.kernel_w;
    const std::uint64_t spatial = static_cast<std::uint64_t>(out.h) * out.w;
    if (l.kind == LayerKind::conv || l.kind == LayerKind::detect_head) {
      const std::uint64_t cin = static_cast<std::uint64_t>(input_shapes(g, shapes, i).front().c);
      c.macs = k * cin * out.c * spatial;
      c.params = k * cin * out.c + out.c;
    } else if (l.kind == LayerKind::dwconv) {
      c.macs = k * out.c * spatial;
      c.params = k * out.c + out.c;
    }
    r.total_macs += c.macs;
    r.total_params += c.params;
    r.layers.push_back(std::move(c));
  }
  return r;
}

std::string format_report(const ComplexityReport& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-12s %16s %14s %12s\n", "layer", "kind", "output", "MACs", "params");
  os << line;
  for (const auto& c : r.layers) {
    char shape[48];
    std::snprintf(shape, sizeof shape, "%dx%dx%d", c.out.c, c.out.h, c.out.w);
    std::snprintf(line, sizeof line, "%-24s %-12s %16s %14llu %12llu\n", c.name.c_str(),
                  std::string(to_string(c.kind)).c_str(), shape, static_cast<unsigned long long>(c.macs),
                  static_cast<unsigned long long>(c.params));
    os << line;
  }
  std::snprintf(line, sizeof line, "total: %llu MACs (%.4f GMAC), %llu params (%.4f M)\n",
                static_cast<unsigned long long>(r.total_macs), r.gmac(),
                static_cast<unsigned long long>(r.total_params), r.mparams());
  os << line;
  return os.str();
}

namespace {

int json_int(const ordered_json& j, const std::string& what) {
  if (!j.is_number_integer()) throw ValidationError("graph: " + what + " must be an integer");
  return j.get<int>();
}

Layer layer_from_json(const ordered_json& j) {
  if (!j.is_object()) throw ValidationError("graph: layer must be an object");
  Layer l;
  if (!j.contains("name") || !j["name"].is_string()) throw ValidationError("graph: layer without a name");
  l.name = j["name"].get<std::string>();
  if (!j.contains("kind") || !j["kind"].is_string())
    throw ValidationError("graph: layer '" + l.name + "' has no kind");
  l.kind = layer_kind_from_string(j["kind"].get<std::string>());
  const std::string where = "layer '" + l.name + "'";
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    const bool known = key == "name" || key == "kind" || key == "inputs" ||
                       ((key == "kernel" || key == "stride" || key == "pad") && is_windowed(l.kind)) ||
                       (key == "out_channels" && has_weights(l.kind));
    if (!known) throw ValidationError("graph: " + where + ": unknown key '" + key + "'");
  }
  if (!j.contains("inputs") || !j["inputs"].is_array())
    throw ValidationError("graph: " + where + ": inputs must be a list");
  for (const auto& in : j["inputs"]) {
    if (!in.is_string()) throw ValidationError("graph: " + where + ": input names must be strings");
    l.inputs.push_back(in.get<std::string>());
  }
  if (is_windowed(l.kind)) {
    if (!j.contains("kernel")) throw ValidationError("graph: " + where + ": missing kernel");
    const auto& k = j["kernel"];
    if (k.is_array()) {
      if (k.size() != 2) throw ValidationError("graph: " + where + ": kernel must be int or [kh, kw]");
      l.kernel_h = json_int(k[0], where + " kernel");
      l.kernel_w = json_int(k[1], where + " kernel");
    } else {
      l.kernel_h = l.kernel_w = json_int(k, where + " kernel");
    }
    if (j.contains("stride")) l.stride = json_int(j["stride"], where + " stride");
    if (j.contains("pad")) l.pad = json_int(j["pad"], where + " pad");
  }
  if (j.contains("out_channels")) l.out_channels = json_int(j["out_channels"], where + " out_channels");
  return l;
}

}  // namespace

NetGraph graph_from_json(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("graph: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("graph: top level must be an object");
  for (auto it = root.begin(); it != root.end(); ++it)
    if (it.key() != "input" && it.key() != "layers")
      throw ValidationError("graph: unknown key '" + it.key() + "'");
  if (!root.contains("input") || !root["input"].is_array() || root["input"].size() != 3)
    throw ValidationError("graph: input must be [C, H, W]");
  NetGraph g;
  g.input_c = json_int(root["input"][0], "input C");
  g.input_h = json_int(root["input"][1], "input H");
  g.input_w = json_int(root["input"][2], "input W");
  if (!root.contains("layers") || !root["layers"].is_array()) throw ValidationError("graph: layers must be a list");
  for (const auto& j : root["layers"]) g.layers.push_back(layer_from_json(j));
  infer_shapes(g);
  return g;
}

std::string graph_to_json(const NetGraph& g) {
  ordered_json root;
  root["input"] = {g.input_c, g.input_h, g.input_w};
  ordered_json layers = ordered_json::array();
  for (const auto& l : g.layers) {
    ordered_json j;
    j["name"] = l.name;
    j["kind"] = std::string(to_string(l.kind));
    if (is_windowed(l.kind)) {
      if (l.kernel_h == l.kernel_w)
        j["kernel"] = l.kernel_h;
      else
        j["kernel"] = {l.kernel_h, l.kernel_w};
      j["stride"] = l.stride;
      j["pad"] = l.pad;
    }
    if (has_weights(l.kind) && l.out_channels > 0) j["out_channels"] = l.out_channels;
    j["inputs"] = l.inputs;
    layers.push_back(std::move(j));
  }
  root["layers"] = std::move(layers);
  return root.dump(2) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

NetGraph load_graph(const std::filesystem::path& path) { return graph_from_json(read_text_file(path)); }

void save_graph(const NetGraph& g, const std::filesystem::path& path) { write_text_file(path, graph_to_json(g)); }

NetGraph with_input(NetGraph g, int w, int h) {
  if (w <= 0 || h <= 0) throw ValidationError("graph: input dims must be positive");
  g.input_w = w;
  g.input_h = h;
  return g;
}

}  // namespace ssdkit
