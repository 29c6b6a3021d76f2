#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ssdkit/error.hpp"
#include "ssdkit/netgraph.hpp"

using namespace ssdkit;

#ifndef SSDKIT_FIXTURE_DIR
#error "SSDKIT_FIXTURE_DIR must be defined"
#endif

namespace {

Layer conv(std::string name, std::string in, int k, int out, int stride = 1, int pad = -1) {
  return {std::move(name), LayerKind::conv, k, k, stride, pad < 0 ? k / 2 : pad, out, {std::move(in)}};
}

Layer dw(std::string name, std::string in, int k = 3, int stride = 1) {
  return {std::move(name), LayerKind::dwconv, k, k, stride, k / 2, 0, {std::move(in)}};
}

NetGraph graph(int c, int h, int w, std::vector<Layer> layers) { return {c, h, w, std::move(layers)}; }

const std::string kRefnet = std::string(SSDKIT_FIXTURE_DIR) + "/refnet.json";

}  // namespace

TEST_CASE("infer_shapes: conv arithmetic") {
  auto g = graph(3, 300, 300, {conv("a", "input", 3, 8), conv("b", "input", 3, 8, 2)});
  const auto s = infer_shapes(g);
  CHECK(s[0] == Shape{8, 300, 300});
  CHECK(s[1] == Shape{8, 150, 150});  // floor((300 + 2 - 3) / 2) + 1

  auto cat = graph(3, 10, 10, {conv("a", "input", 1, 8), conv("b", "input", 1, 8),
                               Layer{"c", LayerKind::concat, 0, 0, 1, 0, 0, {"a", "b"}}});
  CHECK(infer_shapes(cat)[2] == Shape{16, 10, 10});

  auto pool = graph(4, 10, 10, {Layer{"p", LayerKind::maxpool, 2, 2, 2, 0, 0, {"input"}}});
  CHECK(infer_shapes(pool)[0] == Shape{4, 5, 5});
}

TEST_CASE("infer_shapes: errors name the layer") {
  auto g = graph(3, 4, 4, {conv("ok", "input", 3, 8), conv("too_big", "ok", 7, 8, 1, 0)});
  try {
    infer_shapes(g);
    FAIL("expected a rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("too_big") != std::string::npos);
  }
  auto bad_cat = graph(3, 10, 10, {conv("a", "input", 1, 8), conv("b", "input", 1, 8, 2),
                                   Layer{"c", LayerKind::concat, 0, 0, 1, 0, 0, {"a", "b"}}});
  CHECK_THROWS_AS(infer_shapes(bad_cat), ValidationError);
  auto dw_mismatch = graph(3, 10, 10, {conv("a", "input", 1, 8), Layer{"d", LayerKind::dwconv, 3, 3, 1, 1, 4, {"a"}}});
  CHECK_THROWS_AS(infer_shapes(dw_mismatch), ValidationError);
  CHECK_THROWS_AS(infer_shapes(graph(3, 10, 10, {conv("a", "nowhere", 1, 8)})), ValidationError);
}

TEST_CASE("topo_order: cycles are diagnosed") {
  auto g = graph(3, 10, 10, {conv("a", "c", 1, 8), conv("b", "a", 1, 8), conv("c", "b", 1, 8)});
  try {
    topo_order(g);
    FAIL("expected a cycle diagnostic");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("cycle") != std::string::npos);
  }
  // declaration order need not be topological
  auto h = graph(3, 10, 10, {conv("b", "a", 1, 8), conv("a", "input", 1, 8)});
  CHECK(topo_order(h) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("analyze: per-kind formulas") {
  auto g = graph(3, 10, 10, {conv("c", "input", 3, 8), dw("d", "c")});
  const auto r = analyze(g);
  CHECK(r.layers[0].macs == 21600);
  CHECK(r.layers[0].params == 224);
  CHECK(r.layers[1].macs == 7200);
  CHECK(r.layers[1].params == 80);
  CHECK(r.total_macs == 28800);
  CHECK(r.total_params == 304);

  auto h = graph(8, 10, 10, {Layer{"h", LayerKind::detect_head, 3, 3, 1, 1, 12, {"input"}},
                             Layer{"r", LayerKind::relu, 0, 0, 1, 0, 0, {"input"}}});
  const auto hr = analyze(h);
  CHECK(hr.layers[0].macs == 3ull * 3 * 8 * 12 * 100);
  CHECK(hr.layers[0].params == 3ull * 3 * 8 * 12 + 12);
  CHECK(hr.layers[1].macs == 0);
}

TEST_CASE("analyze: depth-wise separable identity") {
  const int c = 64, k = 3;
  auto full = graph(c, 32, 32, {conv("f", "input", k, c)});
  auto sep = graph(c, 32, 32, {dw("d", "input", k), conv("p", "d", 1, c)});
  const double ratio = static_cast<double>(analyze(sep).total_macs) / static_cast<double>(analyze(full).total_macs);
  CHECK(ratio == doctest::Approx(1.0 / c + 1.0 / (k * k)).epsilon(1e-12));
}

TEST_CASE("analyze: spatial scaling and monotonicity") {
  const auto g = load_graph(kRefnet);
  const auto base = analyze(g);
  CHECK(base.total_macs > 0);
  std::uint64_t sum = 0;
  for (const auto& l : base.layers) sum += l.macs;
  CHECK(sum == base.total_macs);

  // fully convolutional toy: exact 4x
  auto fc = graph(3, 64, 64, {conv("a", "input", 3, 8, 2), dw("b", "a"), conv("c", "b", 1, 16)});
  CHECK(analyze(with_input(fc, 128, 128)).total_macs == 4 * analyze(fc).total_macs);

  const double wide = static_cast<double>(analyze(with_input(g, 672, 384)).total_macs);
  const double r = wide / static_cast<double>(base.total_macs);
  CHECK(r >= 2.5);
  CHECK(r <= 2.9);

  auto narrower = g;
  for (auto& l : narrower.layers)
    if (l.name == "conv5") l.out_channels -= 1;
  const auto nr = analyze(narrower);
  CHECK(nr.total_macs < base.total_macs);
  CHECK(nr.total_params < base.total_params);
}

TEST_CASE("JSON: round trip, kernel forms, rejection") {
  const auto g = load_graph(kRefnet);
  CHECK(graph_from_json(graph_to_json(g)) == g);
  CHECK(graph_to_json(g) == read_text_file(kRefnet));

  const auto rect = graph_from_json(R"({"input":[1,10,10],"layers":[
      {"name":"a","kind":"conv","kernel":[3,1],"stride":1,"pad":0,"out_channels":2,"inputs":["input"]}]})");
  CHECK(rect.layers[0].kernel_h == 3);
  CHECK(rect.layers[0].kernel_w == 1);
  CHECK(infer_shapes(rect)[0] == Shape{2, 8, 10});

  CHECK_THROWS_AS(graph_from_json(R"({"input":[1,10,10],"layers":[],"extra":1})"), ValidationError);
  CHECK_THROWS_AS(graph_from_json(R"({"input":[1,10,10],"layers":[
      {"name":"a","kind":"conv","kernel":3,"out_channels":2,"inputs":["input"],"colour":"red"}]})"),
                  ValidationError);
  CHECK_THROWS_AS(graph_from_json(R"({"input":[1,10,10],"layers":[
      {"name":"a","kind":"warp","inputs":["input"]}]})"),
                  ValidationError);
  CHECK_THROWS_AS(graph_from_json(R"({"input":[1,10,10],"layers":[
      {"name":"a","kind":"relu","inputs":["input"]},{"name":"a","kind":"relu","inputs":["input"]}]})"),
                  ValidationError);
  CHECK_THROWS_AS(graph_from_json("[1,2"), ValidationError);
  CHECK_THROWS_AS(load_graph("/nonexistent/graph.json"), IoError);

  const auto tmp = std::filesystem::temp_directory_path() / "ssdkit_netgraph_roundtrip.json";
  save_graph(g, tmp);
  CHECK(load_graph(tmp) == g);
  std::filesystem::remove(tmp);
}
