#include "ssdkit/redetect.hpp"

#include <algorithm>

#include "ssdkit/error.hpp"

namespace ssdkit {

void validate(const TrackerConfig& c) {
  if (!(c.candidate_floor > 0 && c.candidate_floor <= c.display_threshold && c.display_threshold < 1))
    throw ValidationError("tracker: need 0 < candidate_floor <= display_threshold < 1");
  if (!(c.match_iou_min > 0 && c.match_iou_min < 1))
    throw ValidationError("tracker: need 0 < match_iou_min < 1");
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(cfg) { validate(cfg_); }

void Tracker::reset() {
  prev_ = {};
  frame_index_ = 0;
}

FrameDetections Tracker::step(const FrameDetections& current) {
  const auto& cur = current.dets;
  const auto& prev = prev_.dets;
  cur_taken_.assign(cur.size(), 0);
  prev_taken_.assign(prev.size(), 0);

  // Candidate pairs: low-confidence current vs same-label previous.
  pairs_.clear();
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const auto& d = cur[i];
    if (d.score >= cfg_.display_threshold || d.score < cfg_.candidate_floor) continue;
    for (std::size_t j = 0; j < prev.size(); ++j) {
      if (prev[j].label != d.label) continue;
      const double o = iou(d.box, prev[j].box);
      if (o >= cfg_.match_iou_min) pairs_.push_back({o, i, j});
    }
  }
  std::sort(pairs_.begin(), pairs_.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.cur != b.cur) return a.cur < b.cur;
    return a.prev < b.prev;
  });
  for (const auto& p : pairs_) {
    if (cur_taken_[p.cur] || prev_taken_[p.prev]) continue;
    cur_taken_[p.cur] = 1;
    prev_taken_[p.prev] = 1;
  }

  FrameDetections out;
  out.frame = current.frame;
  out.dets.reserve(cur.size());
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const auto& d = cur[i];
    if (d.score >= cfg_.display_threshold) {
      out.dets.push_back(d);
    } else if (cur_taken_[i]) {
      Detection r = d;
      r.retained = true;
      out.dets.push_back(r);
    }
  }
  prev_ = out;
  ++frame_index_;
  return out;
}

std::vector<FrameDetections> run_sequence(const std::vector<FrameDetections>& frames,
                                          const TrackerConfig& cfg) {
  Tracker t(cfg);
  std::vector<FrameDetections> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(t.step(f));
  return out;
}

}  // namespace ssdkit
