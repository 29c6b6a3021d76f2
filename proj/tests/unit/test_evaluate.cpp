#include <doctest.h>

#include "ssdkit/error.hpp"
#include "ssdkit/evaluate.hpp"

using namespace ssdkit;

namespace {

Detection det(BBox b, double score, int label = 1) {
  Detection d;
  d.box = b;
  d.score = score;
  d.label = label;
  return d;
}

const BBox A{.1, .1, .2, .2}, B{.4, .4, .5, .5}, C{.7, .7, .8, .8}, Far{.0, .8, .05, .85};

}  // namespace

TEST_CASE("perfect and empty detections") {
  const std::vector<GroundTruth> gts{{{A, 1}, {B, 2}}, {{C, 1}}};
  const std::vector<FrameDetections> perfect{{0, {det(A, .9), det(B, .8, 2)}}, {1, {det(C, .7)}}};
  const auto r = average_precision(perfect, gts, 3);
  CHECK(r.per_class[1] == doctest::Approx(1.0));
  CHECK(r.per_class[2] == doctest::Approx(1.0));
  CHECK(r.mean == doctest::Approx(1.0));
  CHECK(r.gt_count[1] == 2);

  const std::vector<FrameDetections> none{{0, {}}, {1, {}}};
  CHECK(average_precision(none, gts, 3).mean == 0.0);
}

TEST_CASE("hand-computed five-detection PR curve") {
  // 3 gts; ranked hits: TP FP TP FP TP
  // precision 1, 1/2, 2/3, 2/4, 3/5 at recall 1/3, 1/3, 2/3, 2/3, 1
  // envelope: 1 on (0,1/3], 2/3 on (1/3,2/3], 3/5 on (2/3,1]
  const std::vector<GroundTruth> gts{{{A, 1}, {B, 1}, {C, 1}}};
  const std::vector<FrameDetections> dets{
      {0, {det(A, .9), det(Far, .8), det(B, .7), det(Far, .6), det(C, .5)}}};
  const double expect = 1.0 / 3 + (2.0 / 3) / 3 + 0.6 / 3;
  CHECK(average_precision(dets, gts, 2).per_class[1] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(0.755555555));
}

TEST_CASE("duplicates are false positives; classes without gt are skipped") {
  const std::vector<GroundTruth> gts{{{A, 1}}};
  const std::vector<FrameDetections> dup{{0, {det(A, .9), det(A, .8), det(B, .7, 2)}}};
  const auto r = average_precision(dup, gts, 3);
  CHECK(r.per_class[1] == doctest::Approx(1.0));
  CHECK(r.gt_count[2] == 0);
  CHECK(r.mean == doctest::Approx(1.0));

  // a duplicate ranked above the true hit lowers AP
  const std::vector<GroundTruth> two{{{A, 1}, {B, 1}}};
  const std::vector<FrameDetections> d2{{0, {det(A, .9), det(A, .8), det(B, .7)}}};
  CHECK(average_precision(d2, two, 2).per_class[1] == doctest::Approx(0.5 + 0.5 * 2.0 / 3));
  CHECK_THROWS_AS(average_precision(d2, gts, 1), ValidationError);
  CHECK_THROWS_AS(average_precision(std::vector<FrameDetections>{}, gts, 2), ValidationError);
}

TEST_CASE("ground truth JSONL") {
  const GroundTruth g{{A, 1}, {B, 2}};
  const auto line = gt_to_jsonl(g, 4);
  std::int64_t frame = 0;
  CHECK(gt_from_jsonl(line, &frame) == g);
  CHECK(frame == 4);
  CHECK_THROWS_AS(gt_from_jsonl(R"({"frame":0,"gt":[{"box":[0.5,0,0.4,1],"label":1}]})"), ValidationError);
  CHECK_THROWS_AS(gt_from_jsonl(R"({"frame":0,"gt":[{"box":[0,0,1,1],"label":0}]})"), ValidationError);
}
