// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "bikvil/trajdata.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Absolute motion saliency: static/moving labels from average point speeds in
// the global camera frame, thresholded relative to scene scale per demo
// duration.
// ---------------------------------------------------------------------------

struct ObjectSaliency {
  std::string object_id;
  double mean_point_speed = 0.0;  // m/s
  bool moving = false;
};

struct SaliencyReport {
  std::vector<ObjectSaliency> objects;
  double scene_scale = 0.0;    // bounding-box diagonal of first-frame points
  double demo_duration = 0.0;  // seconds (mean over demos)
  double speed_threshold = 0.0;

  bool is_moving(const std::string& id) const {
    for (const auto& o : objects)
      if (o.object_id == id) return o.moving;
    throw PreconditionError("saliency: unknown object '" + id + "'");
  }

  json to_json() const {
    json j;
    j["scene_scale"] = scene_scale;
    j["demo_duration"] = demo_duration;
    j["speed_threshold"] = speed_threshold;
    json objs = json::array();
    for (const auto& o : objects)
      objs.push_back({{"object_id", o.object_id},
                      {"mean_point_speed", o.mean_point_speed},
                      {"label", o.moving ? "moving" : "static"}});
    j["objects"] = std::move(objs);
    return j;
  }
};

inline SaliencyReport motion_saliency(const DemonstrationSet& set, double rel_thresh = 0.05) {
  if (set.demos.empty()) throw PreconditionError("motion_saliency: empty set");
  SaliencyReport report;

  double scale_acc = 0.0, duration_acc = 0.0;
  for (const auto& demo : set.demos) {
    if (demo.num_frames() < 2) throw PreconditionError("motion_saliency: demo has fewer than 2 frames");
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& tr : demo.tracks) {
      lo = lo.cwiseMin(tr.frames.front().rowwise().minCoeff());
      hi = hi.cwiseMax(tr.frames.front().rowwise().maxCoeff());
    }
    scale_acc += (hi - lo).norm();
    duration_acc += demo.duration();
  }
  report.scene_scale = scale_acc / set.num_demos();
  report.demo_duration = duration_acc / set.num_demos();
  report.speed_threshold = rel_thresh * report.scene_scale / report.demo_duration;

  for (const auto& ref : set.demos.front().tracks) {
    double speed_acc = 0.0;
    long samples = 0;
    for (const auto& demo : set.demos) {
      const ObjectTrack* tr = demo.find_track(ref.object_id);
      // velocities over a short stride; per-frame differences would be
      // dominated by sensor noise on static objects
      const int stride = std::clamp(tr->num_frames() / 20, 1, 10);
      for (int t = 0; t + stride < tr->num_frames(); ++t) {
        speed_acc +=
            (tr->frames[t + stride] - tr->frames[t]).colwise().norm().sum() / (stride * demo.dt);
        samples += tr->num_points();
      }
    }
    ObjectSaliency s;
    s.object_id = ref.object_id;
    s.mean_point_speed = speed_acc / static_cast<double>(samples);
    s.moving = s.mean_point_speed >= report.speed_threshold;
    report.objects.push_back(std::move(s));
  }
  return report;
}

/// Adds one time-constant virtual track per moving non-hand object: id "v" +
/// object id, points frozen at the object's first frame. Virtual objects act
/// as static anchors when no real static master exists.
inline DemonstrationSet create_virtual_objects(const DemonstrationSet& set,
                                               const SaliencyReport& report) {
  DemonstrationSet out = set;
  for (const auto& o : report.objects) {
    if (!o.moving) continue;
    bool is_hand_track = false;
    for (auto& demo : out.demos) {
      const ObjectTrack* src = demo.find_track(o.object_id);
      if (src->kind != TrackKind::RigidObject) {
        is_hand_track = true;
        break;
      }
    }
    if (is_hand_track) continue;
    for (auto& demo : out.demos) {
      const ObjectTrack* src = demo.find_track(o.object_id);
      ObjectTrack v;
      v.object_id = "v" + src->object_id;
      v.category = src->category;
      v.kind = TrackKind::Virtual;
      v.canonical_points = src->canonical_points;
      v.frames.assign(src->num_frames(), src->frames.front());
      demo.tracks.push_back(std::move(v));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contact and grasp detection
// ---------------------------------------------------------------------------

struct GraspDetectorConfig {
  int q_neighbors = 50;            // object points tracked around the hand
  double contact_dist = 0.02;      // meters
  double firm_rate_thresh = 0.005; // m/s
  int min_duration = 5;            // frames
};

struct GraspEvent {
  std::string hand_id;
  std::string object_id;
  int t_begin = 0;
  int t_end = 0;  // inclusive
  double mean_change_rate = 0.0;
  bool firm = false;
};

/// Frames where the minimum pairwise point distance drops below contact_dist,
/// merged into maximal intervals of at least min_duration frames.
inline std::vector<std::pair<int, int>> detect_contacts(const Demonstration& demo,
                                                        const std::string& id_a,
                                                        const std::string& id_b,
                                                        double contact_dist, int min_duration) {
  const ObjectTrack* a = demo.find_track(id_a);
  const ObjectTrack* b = demo.find_track(id_b);
  if (!a || !b) throw PreconditionError("detect_contacts: unknown track");
  const int T = demo.num_frames();
  std::vector<std::pair<int, int>> intervals;
  int run_start = -1;
  for (int t = 0; t < T; ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < a->num_points() && best >= contact_dist; ++i) {
      const Vec3 p = a->frames[t].col(i);
      best = std::min(best, ((b->frames[t]).colwise() - p).colwise().norm().minCoeff());
    }
    const bool touching = best < contact_dist;
    if (touching && run_start < 0) run_start = t;
    if (!touching && run_start >= 0) {
      if (t - run_start >= min_duration) intervals.emplace_back(run_start, t - 1);
      run_start = -1;
    }
  }
  if (run_start >= 0 && T - run_start >= min_duration) intervals.emplace_back(run_start, T - 1);
  return intervals;
}

/// Local frame of a hand at frame t: origin at the wrist, x toward the middle
/// finger MCP, z along the palm plane normal (wrist/index-MCP/pinky-MCP).
inline Pose hand_local_frame(const ObjectTrack& hand, int t) {
  const Vec3 wrist = hand.frames[t].col(kWrist);
  const Vec3 middle = hand.frames[t].col(kMiddleMcp);
  const Vec3 index = hand.frames[t].col(kIndexMcp);
  const Vec3 pinky = hand.frames[t].col(kPinkyMcp);
  Vec3 x = middle - wrist;
  if (x.norm() < 1e-9) throw DataError("hand_local_frame: degenerate hand at frame " + std::to_string(t));
  x.normalize();
  Vec3 z = (index - wrist).cross(pinky - wrist);
  if (z.norm() < 1e-9) throw DataError("hand_local_frame: collapsed palm plane");
  z.normalize();
  z = (z - z.dot(x) * x).normalized();
  const Vec3 y = z.cross(x);
  Pose f;
  f.R.col(0) = x;
  f.R.col(1) = y;
  f.R.col(2) = z;
  f.p = wrist;
  return f;
}

namespace detail {

/// Per-frame derivative estimate of a scalar series by local least-squares
/// slope (window clamped to the series), robust to sensor noise.
inline std::vector<double> series_rate(const std::vector<double>& d, double dt, int window = 11) {
  const int T = static_cast<int>(d.size());
  std::vector<double> rate(T, 0.0);
  if (T < 2) return rate;
  window = std::min(window | 1, T);  // odd, <= T
  const int h = window / 2;
  for (int t = 0; t < T; ++t) {
    int lo = std::clamp(t - h, 0, T - window);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int j = 0; j < window; ++j) {
      const double x = (lo + j) * dt;
      sx += x;
      sy += d[lo + j];
      sxx += x * x;
      sxy += x * d[lo + j];
    }
    const double denom = window * sxx - sx * sx;
    rate[t] = denom > 0 ? (window * sxy - sx * sy) / denom : 0.0;
  }
  return rate;
}

}  // namespace detail

/// Within each hand/object contact interval, tracks the q_neighbors object
/// points closest to the hand centroid at interval start, expressed in the
/// hand local frame; the grasp is firm when the mean absolute change rate of
/// their distances to the frame origin stays below firm_rate_thresh.
inline std::vector<GraspEvent> detect_grasps(const Demonstration& demo, const std::string& hand_id,
                                             const std::string& object_id,
                                             const GraspDetectorConfig& cfg) {
  const ObjectTrack* hand = demo.find_track(hand_id);
  if (!hand || !is_hand(hand->kind))
    throw PreconditionError("detect_grasps: '" + hand_id + "' is not a hand track");
  const ObjectTrack* obj = demo.find_track(object_id);
  if (!obj) throw PreconditionError("detect_grasps: unknown object '" + object_id + "'");

  std::vector<GraspEvent> events;
  for (const auto& [t0, t1] : detect_contacts(demo, hand_id, object_id, cfg.contact_dist, cfg.min_duration)) {
    const Vec3 hc = hand->centroid(t0);
    std::vector<std::pair<double, int>> order;
    for (int i = 0; i < obj->num_points(); ++i)
      order.emplace_back((obj->frames[t0].col(i) - hc).squaredNorm(), i);
    const int q = std::min<int>(cfg.q_neighbors, static_cast<int>(order.size()));
    std::partial_sort(order.begin(), order.begin() + q, order.end());

    const int len = t1 - t0 + 1;
    double rate_acc = 0.0;
    for (int sel = 0; sel < q; ++sel) {
      const int i = order[sel].second;
      std::vector<double> dist(len);
      for (int t = t0; t <= t1; ++t) {
        const Pose f = hand_local_frame(*hand, t);
        dist[t - t0] = (f.R.transpose() * (obj->frames[t].col(i) - f.p)).norm();
      }
      const auto rate = detail::series_rate(dist, demo.dt);
      for (double r : rate) rate_acc += std::abs(r);
    }
    GraspEvent ev;
    ev.hand_id = hand_id;
    ev.object_id = object_id;
    ev.t_begin = t0;
    ev.t_end = t1;
    ev.mean_change_rate = rate_acc / static_cast<double>(q * len);
    ev.firm = ev.mean_change_rate < cfg.firm_rate_thresh;
    events.push_back(std::move(ev));
  }
  return events;
}

// ---------------------------------------------------------------------------
// Set-level grasp aggregation: a hand is bound to the object it grasps firmly
// in at least two thirds of the demonstrations (ties broken by total firm
// duration). Intervals are averaged over the firm demos.
// ---------------------------------------------------------------------------

struct AggregatedGrasp {
  std::string hand_id;
  std::string object_id;
  int t_begin = 0;
  int t_end = 0;
};

inline std::vector<AggregatedGrasp> detect_grasps_set(const DemonstrationSet& set,
                                                      const GraspDetectorConfig& cfg) {
  std::vector<AggregatedGrasp> out;
  if (set.demos.empty()) return out;
  const int quorum = (2 * set.num_demos() + 2) / 3;
  for (const auto& hand : set.demos.front().tracks) {
    if (!is_hand(hand.kind)) continue;
    std::string best_obj;
    double best_duration = 0.0;
    int best_begin = 0, best_end = 0;
    for (const auto& obj : set.demos.front().tracks) {
      if (obj.kind != TrackKind::RigidObject) continue;
      double duration = 0.0;
      int b = 0, e = 0, firm_demos = 0;
      for (const auto& demo : set.demos) {
        const auto events = detect_grasps(demo, hand.object_id, obj.object_id, cfg);
        const GraspEvent* longest = nullptr;
        for (const auto& ev : events)
          if (ev.firm && (!longest || ev.t_end - ev.t_begin > longest->t_end - longest->t_begin))
            longest = &ev;
        if (!longest) continue;
        ++firm_demos;
        duration += longest->t_end - longest->t_begin;
        b += longest->t_begin;
        e += longest->t_end;
      }
      if (firm_demos >= quorum && duration > best_duration) {
        best_duration = duration;
        best_obj = obj.object_id;
        best_begin = b / firm_demos;
        best_end = e / firm_demos;
      }
    }
    if (!best_obj.empty()) {
      AggregatedGrasp g;
      g.hand_id = hand.object_id;
      g.object_id = best_obj;
      g.t_begin = best_begin;
      g.t_end = best_end;
      out.push_back(std::move(g));
    }
  }
  return out;
}

inline json grasps_to_json(const std::vector<AggregatedGrasp>& grasps) {
  json arr = json::array();
  for (const auto& g : grasps)
    arr.push_back({{"hand_id", g.hand_id},
                   {"object_id", g.object_id},
                   {"interval", {g.t_begin, g.t_end}}});
  return arr;
}

}  // namespace bikvil
