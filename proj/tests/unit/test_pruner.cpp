#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ssdkit/error.hpp"
#include "ssdkit/pruner.hpp"
#include "ssdkit/weights.hpp"

using namespace ssdkit;

namespace {

Layer conv(std::string name, std::string in, int k, int out) {
  return {std::move(name), LayerKind::conv, k, k, 1, k / 2, out, {std::move(in)}};
}

// stem (exempt) -> a -> dw -> b -> concat(b, c) -> head; c reads a.
NetGraph sample_graph() {
  NetGraph g{3, 8, 8, {}};
  g.layers = {conv("stem", "input", 3, 8),
              conv("a", "stem", 1, 8),
              {"a_relu", LayerKind::relu, 0, 0, 1, 0, 0, {"a"}},
              {"dw", LayerKind::dwconv, 3, 3, 1, 1, 0, {"a_relu"}},
              conv("b", "dw", 1, 6),
              conv("c", "a_relu", 1, 4),
              {"cat", LayerKind::concat, 0, 0, 1, 0, 0, {"b", "c"}},
              {"head", LayerKind::detect_head, 3, 3, 1, 1, 14, {"cat"}}};
  return g;
}

// Every weight encodes its coordinates so slices can be traced.
WeightStore coded_weights(const NetGraph& g) {
  WeightStore w;
  const auto shapes = infer_shapes(g);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    if (!has_weights(l.kind)) continue;
    const int cin = l.kind == LayerKind::dwconv ? 1 : input_shapes(g, shapes, i)[0].c;
    const int cout = shapes[i].c;
    Tensor t{{cout, cin, l.kernel_h, l.kernel_w}, {}};
    for (int o = 0; o < cout; ++o)
      for (int c = 0; c < cin; ++c)
        for (int k = 0; k < l.kernel_h * l.kernel_w; ++k) t.data.push_back(static_cast<float>(o * 1000 + c * 10 + k % 10));
    Tensor b{{cout}, {}};
    for (int o = 0; o < cout; ++o) b.data.push_back(static_cast<float>(o));
    w[l.name] = t;
    w[bias_key(l.name)] = b;
  }
  return w;
}

const LayerPrune& entry(const PruneReport& r, const std::string& name) {
  for (const auto& l : r.layers)
    if (l.name == name) return l;
  FAIL("no report entry for " << name);
  return r.layers.front();
}

}  // namespace

TEST_CASE("weights binary round trip and validation") {
  const auto g = sample_graph();
  const auto w = coded_weights(g);
  CHECK_NOTHROW(check_weights(g, w));
  const auto bytes = serialize_weights(w);
  CHECK(bytes.substr(0, 4) == "SSDW");
  CHECK(deserialize_weights(bytes) == w);
  CHECK_THROWS_AS(deserialize_weights(bytes.substr(0, bytes.size() - 3)), ValidationError);
  CHECK_THROWS_AS(deserialize_weights(bytes + "x"), ValidationError);
  CHECK_THROWS_AS(deserialize_weights("SSDX"), ValidationError);

  const auto tmp = std::filesystem::temp_directory_path() / "ssdkit_weights_roundtrip.bin";
  save_weights(w, tmp);
  CHECK(load_weights(tmp) == w);
  std::filesystem::remove(tmp);
  CHECK_THROWS_AS(load_weights("/nonexistent/w.bin"), IoError);

  auto broken = w;
  broken["b"].shape[1] += 1;
  CHECK_THROWS_AS(check_weights(g, broken), ValidationError);
}

TEST_CASE("ratio 0 is the identity") {
  const auto g = sample_graph();
  const auto w = coded_weights(g);
  const auto r = prune(g, &w, {0.0, 9, {}});
  CHECK(r.graph == g);
  REQUIRE(r.weights);
  CHECK(serialize_weights(*r.weights) == serialize_weights(w));
}

TEST_CASE("ratio 0.5 halves filters and slices consumers") {
  const auto g = sample_graph();
  const auto w = coded_weights(g);
  const auto r = prune(g, &w, {0.5, 7, {}});
  CHECK_NOTHROW(infer_shapes(r.graph));
  REQUIRE(r.weights);
  CHECK_NOTHROW(check_weights(r.graph, *r.weights));

  const auto& a = entry(r.report, "a");
  REQUIRE(a.kept.size() == 4);
  CHECK(std::is_sorted(a.kept.begin(), a.kept.end()));
  CHECK(r.graph.layers[r.graph.find("a")].out_channels == 4);
  CHECK(entry(r.report, "stem").kept.size() == 8);  // reads the input
  CHECK(r.graph.layers[r.graph.find("head")].out_channels == 14);

  // a's own filters and bias follow kept
  const auto& wa = r.weights->at("a");
  for (std::size_t i = 0; i < a.kept.size(); ++i) {
    CHECK(wa.data[i * 8] == static_cast<float>(a.kept[i] * 1000));
    CHECK(r.weights->at(bias_key("a")).data[i] == static_cast<float>(a.kept[i]));
  }
  // dwconv follows its producer
  const auto& wd = r.weights->at("dw");
  CHECK(wd.shape == std::vector<int>{4, 1, 3, 3});
  for (std::size_t i = 0; i < a.kept.size(); ++i) CHECK(wd.data[i * 9] == static_cast<float>(a.kept[i] * 1000));
  // c reads a directly: input slices follow a.kept
  const auto& wc = r.weights->at("c");
  CHECK(wc.shape[1] == 4);
  const int c0 = entry(r.report, "c").kept[0];
  for (std::size_t i = 0; i < a.kept.size(); ++i) CHECK(wc.data[i] == static_cast<float>(c0 * 1000 + a.kept[i] * 10));

  // head reads concat(b, c): 3 of b's 6 and 2 of c's 4 survive
  const auto& b = entry(r.report, "b");
  const auto& c = entry(r.report, "c");
  CHECK(b.kept.size() == 3);
  CHECK(c.kept.size() == 2);
  const auto& wh = r.weights->at("head");
  CHECK(wh.shape == std::vector<int>{14, 5, 3, 3});
  std::vector<int> expect;
  for (int k : b.kept) expect.push_back(k);
  for (int k : c.kept) expect.push_back(6 + k);
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(wh.data[i * 9] == static_cast<float>(expect[i] * 10));
}

TEST_CASE("determinism, monotonicity and ceil rounding") {
  const auto g = sample_graph();
  for (double ratio : {0.1, 0.25, 0.5, 0.75}) {
    const auto r1 = prune(g, nullptr, {ratio, 3, {}});
    const auto r2 = prune(g, nullptr, {ratio, 3, {}});
    CHECK(r1.graph == r2.graph);
    for (std::size_t i = 0; i < r1.report.layers.size(); ++i) CHECK(r1.report.layers[i].kept == r2.report.layers[i].kept);
    CHECK(r1.report.after.total_macs < r1.report.before.total_macs);
    CHECK(r1.report.after.total_params < r1.report.before.total_params);
    const int removed = 8 - static_cast<int>(entry(r1.report, "a").kept.size());
    CHECK(removed == static_cast<int>(std::ceil(ratio * 8 - 1e-9)));
  }
  auto kept_of = [](const PruneReport& r) {
    std::vector<std::vector<int>> k;
    for (const auto& l : r.layers) k.push_back(l.kept);
    return k;
  };
  CHECK(kept_of(prune(g, nullptr, {0.5, 1, {}}).report) != kept_of(prune(g, nullptr, {0.5, 2, {}}).report));
}

TEST_CASE("exemptions and errors") {
  const auto g = sample_graph();
  const auto r = prune(g, nullptr, {0.5, 1, {"a"}});
  CHECK(entry(r.report, "a").kept.size() == 8);
  CHECK(entry(r.report, "b").kept.size() == 3);
  CHECK_THROWS_AS(prune(g, nullptr, {0.5, 1, {"nope"}}), ValidationError);
  CHECK_THROWS_AS(prune(g, nullptr, {1.0, 1, {}}), ValidationError);
  CHECK_THROWS_AS(prune(g, nullptr, {-0.1, 1, {}}), ValidationError);

  NetGraph tiny{3, 4, 4, {conv("stem", "input", 3, 4), conv("one", "stem", 1, 1)}};
  CHECK_THROWS_AS(prune(tiny, nullptr, {0.5, 1, {}}), ValidationError);

  auto w = coded_weights(g);
  w.erase("b");
  CHECK_THROWS_AS(prune(g, &w, {0.5, 1, {}}), ValidationError);
}
