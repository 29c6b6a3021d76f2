#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <string>

#include "ssdkit/ssdkit.h"

#ifndef SSDKIT_FIXTURE_DIR
#error "SSDKIT_FIXTURE_DIR must be defined"
#endif

namespace {

const std::string kRefnet = std::string(SSDKIT_FIXTURE_DIR) + "/refnet.json";

std::string take(char* s) {
  std::string out = s ? s : "";
  ssdkit_free_string(s);
  return out;
}

}  // namespace

TEST_CASE("version, iou and errors") {
  CHECK(std::strlen(ssdkit_version()) > 0);
  const ssdkit_box a{0, 0, .2, .2}, b{.1, 0, .3, .2};
  CHECK(ssdkit_iou(&a, &b) == doctest::Approx(1.0 / 3));
  CHECK(ssdkit_iou(&a, nullptr) == 0.0);

  ssdkit_graph* g = nullptr;
  CHECK(ssdkit_graph_load("/nonexistent/graph.json", &g) == SSDKIT_ERR_IO);
  CHECK(g == nullptr);
  CHECK(std::string(ssdkit_last_error()).find("/nonexistent/graph.json") != std::string::npos);
  CHECK(ssdkit_graph_from_json("{\"input\":[3,10,10]}", &g) == SSDKIT_ERR_INVALID);
  CHECK(ssdkit_graph_load(nullptr, &g) == SSDKIT_ERR_INVALID);
}

TEST_CASE("graph analyze, resize and prune") {
  ssdkit_graph* g = nullptr;
  REQUIRE(ssdkit_graph_load(kRefnet.c_str(), &g) == SSDKIT_OK);
  ssdkit_complexity base{}, wide{};
  char* table = nullptr;
  REQUIRE(ssdkit_graph_analyze(g, &base, &table) == SSDKIT_OK);
  CHECK(take(table).find("total:") != std::string::npos);

  ssdkit_graph* g2 = nullptr;
  char* json = nullptr;
  REQUIRE(ssdkit_graph_to_json(g, &json) == SSDKIT_OK);
  REQUIRE(ssdkit_graph_from_json(json, &g2) == SSDKIT_OK);
  ssdkit_free_string(json);
  REQUIRE(ssdkit_graph_set_input(g2, 672, 384) == SSDKIT_OK);
  REQUIRE(ssdkit_graph_analyze(g2, &wide, nullptr) == SSDKIT_OK);
  CHECK(wide.gmac / base.gmac > 2.5);
  CHECK(wide.gmac / base.gmac < 2.9);
  CHECK(ssdkit_graph_set_input(g2, 0, 5) == SSDKIT_ERR_INVALID);
  ssdkit_graph_free(g2);

  ssdkit_prune_options opts{0.5, 7, nullptr, 0};
  ssdkit_graph* pg = nullptr;
  ssdkit_complexity before{}, after{};
  char* report = nullptr;
  REQUIRE(ssdkit_prune(g, nullptr, &opts, &pg, nullptr, &before, &after, &report) == SSDKIT_OK);
  CHECK(after.macs < before.macs);
  CHECK(after.params < before.params);
  CHECK(before.macs == base.macs);
  CHECK(take(report).find("GMAC") != std::string::npos);
  ssdkit_graph_free(pg);

  const char* exempt[] = {"no_such_layer"};
  ssdkit_prune_options bad{0.5, 7, exempt, 1};
  CHECK(ssdkit_prune(g, nullptr, &bad, &pg, nullptr, nullptr, nullptr, nullptr) == SSDKIT_ERR_INVALID);
  ssdkit_graph_free(g);
}

TEST_CASE("priors, postprocess and tracking") {
  char* cfg = nullptr;
  REQUIRE(ssdkit_priors_preset("ssd300", &cfg) == SSDKIT_OK);
  char* pj = nullptr;
  size_t count = 0;
  REQUIRE(ssdkit_priors_generate(cfg, nullptr, 0, 0, 0, &pj, &count) == SSDKIT_OK);
  CHECK(count == 8732);
  ssdkit_free_string(pj);
  const int split[] = {0, 1};
  REQUIRE(ssdkit_priors_generate(cfg, split, 2, 0, 0, &pj, &count) == SSDKIT_OK);
  CHECK(count == 8732 + 5776 + 2166);
  ssdkit_free_string(pj);
  const int bad_split[] = {6};
  CHECK(ssdkit_priors_generate(cfg, bad_split, 1, 0, 0, &pj, &count) == SSDKIT_ERR_INVALID);
  ssdkit_free_string(cfg);
  CHECK(ssdkit_priors_preset("yolo", &cfg) == SSDKIT_ERR_INVALID);

  const char* one = R"({"input":[100,100],"clip":false,"branches":[{"feature_map":[1,1],"min_size":20,"max_size":40,"aspect_ratios":[]}]})";
  REQUIRE(ssdkit_priors_generate(one, nullptr, 0, 0, 0, &pj, &count) == SSDKIT_OK);
  CHECK(count == 2);
  ssdkit_priors* priors = nullptr;
  REQUIRE(ssdkit_priors_parse(pj, &priors) == SSDKIT_OK);
  ssdkit_free_string(pj);
  CHECK(ssdkit_priors_count(priors) == 2);

  ssdkit_postprocess_params pp;
  ssdkit_postprocess_defaults(&pp);
  CHECK(pp.conf_floor == 0.2);
  char* dets = nullptr;
  const char* raw = R"({"frame":5,"num_classes":2,"loc":[0,0,0,0,0,0,0,0],"logits":[0,5,5,0]})";
  REQUIRE(ssdkit_postprocess_line(priors, raw, &pp, &dets) == SSDKIT_OK);
  const std::string line = take(dets);
  CHECK(line.rfind("{\"frame\":5,", 0) == 0);
  CHECK(line.find("\"label\":1") != std::string::npos);
  CHECK(ssdkit_postprocess_line(priors, R"({"frame":0,"num_classes":2,"loc":[],"logits":[]})", &pp, &dets) ==
        SSDKIT_ERR_INVALID);
  ssdkit_priors_free(priors);

  ssdkit_tracker_config tc;
  ssdkit_tracker_config_defaults(&tc);
  ssdkit_tracker* t = nullptr;
  REQUIRE(ssdkit_tracker_create(&tc, &t) == SSDKIT_OK);
  ssdkit_detection in[2] = {{{.1, .1, .3, .3}, 1, .9, 0}, {{.6, .6, .8, .8}, 2, .3, 0}};
  ssdkit_detection out[2];
  size_t n = 0;
  REQUIRE(ssdkit_tracker_step(t, in, 2, out, &n) == SSDKIT_OK);
  CHECK(n == 1);
  in[0].score = .3;
  REQUIRE(ssdkit_tracker_step(t, in, 2, out, &n) == SSDKIT_OK);
  REQUIRE(n == 1);
  CHECK(out[0].retained == 1);
  ssdkit_tracker_reset(t);
  REQUIRE(ssdkit_tracker_step(t, in, 2, out, &n) == SSDKIT_OK);
  CHECK(n == 0);
  char* o = nullptr;
  CHECK(ssdkit_tracker_step_line(t, "{\"frame\":1}", &o) == SSDKIT_ERR_INVALID);
  ssdkit_tracker_free(t);
  tc.display_threshold = 0.1;
  CHECK(ssdkit_tracker_create(&tc, &t) == SSDKIT_ERR_INVALID);

  ssdkit_bench_result br{};
  REQUIRE(ssdkit_bench_track(200, 12, 1, &br) == SSDKIT_OK);
  CHECK(br.frames == 200);
  CHECK(br.mean_ms > 0);
  CHECK(ssdkit_bench_track(0, 12, 1, &br) == SSDKIT_ERR_INVALID);
}

TEST_CASE("evaluate JSONL") {
  const char* dets = "{\"frame\":0,\"dets\":[{\"box\":[0.1,0.1,0.2,0.2],\"label\":1,\"score\":0.9,\"retained\":false}]}\n";
  const char* gt = "{\"frame\":0,\"gt\":[{\"box\":[0.1,0.1,0.2,0.2],\"label\":1}]}\n";
  char* res = nullptr;
  REQUIRE(ssdkit_evaluate_jsonl(dets, gt, 3, &res) == SSDKIT_OK);
  const std::string r = take(res);
  CHECK(r.find("\"mean\":1.0") != std::string::npos);
  CHECK(ssdkit_evaluate_jsonl(dets, "", 3, &res) == SSDKIT_ERR_INVALID);
}

TEST_CASE("toy training, weights and evaluation") {
  const std::string wpath = "capi_test_weights.bin";
  ssdkit_train_options o;
  ssdkit_train_defaults(&o);
  o.seed = 3;
  o.epochs = 1;
  o.batch_size = 8;
  o.train_scenes = 16;
  o.val_scenes = 8;
  char* metrics = nullptr;
  char* summary = nullptr;
  REQUIRE(ssdkit_train_toy(&o, wpath.c_str(), nullptr, &metrics, &summary) == SSDKIT_OK);
  CHECK(take(metrics).rfind("{\"epoch\":1,", 0) == 0);
  CHECK(take(summary).find("\"stage\":\"pretrain\"") != std::string::npos);

  ssdkit_weights* w = nullptr;
  REQUIRE(ssdkit_weights_load(wpath.c_str(), &w) == SSDKIT_OK);
  CHECK(ssdkit_weights_tensor_count(w) > 0);
  ssdkit_weights_free(w);

  ssdkit_toy_eval_options eo{wpath.c_str(), nullptr, 1, 4};
  char* res = nullptr;
  char* raw = nullptr;
  char* gt = nullptr;
  REQUIRE(ssdkit_evaluate_toy(&eo, &res, &raw, &gt) == SSDKIT_OK);
  CHECK(take(res).find("\"ap\"") != std::string::npos);
  const std::string raws = take(raw);
  CHECK(std::count(raws.begin(), raws.end(), '\n') == 4);
  CHECK(take(gt).find("\"gt\"") != std::string::npos);

  o.stage = "fp-suppress";
  o.init_weights = nullptr;
  CHECK(ssdkit_train_toy(&o, wpath.c_str(), nullptr, nullptr, nullptr) == SSDKIT_ERR_INVALID);
  o.stage = "bogus";
  CHECK(ssdkit_train_toy(&o, wpath.c_str(), nullptr, nullptr, nullptr) == SSDKIT_ERR_INVALID);
  std::remove(wpath.c_str());
}
