// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bikvil/common.hpp"

namespace bikvil {

using json = nlohmann::ordered_json;

enum class TrackKind { RigidObject, HandLeft, HandRight, Virtual };

inline std::string to_string(TrackKind k) {
  switch (k) {
    case TrackKind::RigidObject: return "rigid_object";
    case TrackKind::HandLeft: return "hand_left";
    case TrackKind::HandRight: return "hand_right";
    case TrackKind::Virtual: return "virtual";
  }
  return "rigid_object";
}

inline TrackKind track_kind_from_string(const std::string& s) {
  if (s == "rigid_object") return TrackKind::RigidObject;
  if (s == "hand_left") return TrackKind::HandLeft;
  if (s == "hand_right") return TrackKind::HandRight;
  if (s == "virtual") return TrackKind::Virtual;
  throw SchemaError("unknown track kind '" + s + "'");
}

inline bool is_hand(TrackKind k) { return k == TrackKind::HandLeft || k == TrackKind::HandRight; }

constexpr int kHandKeypointCount = 21;
// Hand keypoint layout (wrist + 4 points per finger, thumb first).
constexpr int kWrist = 0;
constexpr int kIndexMcp = 5;
constexpr int kMiddleMcp = 9;
constexpr int kPinkyMcp = 17;

// ---------------------------------------------------------------------------
// ObjectTrack: candidate points of one object over one demonstration.
// Point index i names the same surface point in every frame and every
// demonstration of the category.
// ---------------------------------------------------------------------------

struct ObjectTrack {
  std::string object_id;
  std::string category;
  TrackKind kind = TrackKind::RigidObject;
  Points3 canonical_points;     // 3 x N, category canonical space
  std::vector<Points3> frames;  // T entries of 3 x N, camera frame, meters

  int num_points() const { return static_cast<int>(canonical_points.cols()); }
  int num_frames() const { return static_cast<int>(frames.size()); }

  Vec3 point(int index, int t) const { return frames[t].col(index); }

  /// Centroid of the cloud at frame t.
  Vec3 centroid(int t) const { return frames[t].rowwise().mean(); }

  void validate() const {
    const int n = num_points();
    if (is_hand(kind)) {
      if (n != kHandKeypointCount)
        throw SchemaError("track '" + object_id + "': hands carry exactly 21 keypoints, got " +
                          std::to_string(n));
    } else if (n < 4) {
      throw SchemaError("track '" + object_id + "': needs at least 4 points, got " + std::to_string(n));
    }
    if (!all_finite(canonical_points))
      throw DataError("track '" + object_id + "': non-finite canonical point");
    for (int t = 0; t < num_frames(); ++t) {
      if (frames[t].cols() != n)
        throw SchemaError("track '" + object_id + "': frame " + std::to_string(t) +
                          " has inconsistent point count");
      if (!all_finite(frames[t]))
        throw DataError("track '" + object_id + "': non-finite value at frame " + std::to_string(t));
    }
  }
};

struct Demonstration {
  std::string demo_id;
  double dt = 1.0 / 30.0;  // seconds
  std::vector<ObjectTrack> tracks;

  int num_frames() const { return tracks.empty() ? 0 : tracks.front().num_frames(); }
  double duration() const { return dt * std::max(0, num_frames() - 1); }

  const ObjectTrack* find_track(const std::string& id) const {
    for (const auto& tr : tracks)
      if (tr.object_id == id) return &tr;
    return nullptr;
  }
  ObjectTrack* find_track(const std::string& id) {
    for (auto& tr : tracks)
      if (tr.object_id == id) return &tr;
    return nullptr;
  }

  void validate() const {
    if (dt <= 0) throw SchemaError("demo '" + demo_id + "': dt must be positive");
    if (tracks.empty()) throw SchemaError("demo '" + demo_id + "': no tracks");
    const int T = tracks.front().num_frames();
    bool has_non_hand = false;
    for (const auto& tr : tracks) {
      tr.validate();
      if (tr.num_frames() != T)
        throw SchemaError("demo '" + demo_id + "', object '" + tr.object_id +
                          "': track length " + std::to_string(tr.num_frames()) + " != " +
                          std::to_string(T));
      if (!is_hand(tr.kind)) has_non_hand = true;
    }
    if (!has_non_hand) throw SchemaError("demo '" + demo_id + "': needs at least one non-hand track");
  }
};

struct DemonstrationSet {
  std::string task_name;
  std::vector<std::string> categories;
  std::vector<Demonstration> demos;

  int num_demos() const { return static_cast<int>(demos.size()); }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& d : demos) {
      d.validate();
      if (!ids.insert(d.demo_id).second)
        throw SchemaError("duplicate demo id '" + d.demo_id + "'");
    }
    if (demos.empty()) return;
    // Every demo carries the same (object_id, category, kind) triples with
    // matching point counts.
    const auto& ref = demos.front();
    for (const auto& d : demos) {
      if (d.tracks.size() != ref.tracks.size())
        throw SchemaError("demo '" + d.demo_id + "': object set differs from '" + ref.demo_id + "'");
      for (const auto& tr : ref.tracks) {
        const ObjectTrack* other = d.find_track(tr.object_id);
        if (!other || other->category != tr.category || other->kind != tr.kind)
          throw SchemaError("demo '" + d.demo_id + "': missing or mismatched object '" +
                            tr.object_id + "'");
        if (other->num_points() != tr.num_points())
          throw SchemaError("demo '" + d.demo_id + "', object '" + tr.object_id +
                            "': point count differs across demos");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// File format: <dir>/manifest.json + one JSON file per demonstration.
// All numbers are plain decimals; NaN/Inf are rejected on both paths.
// ---------------------------------------------------------------------------

namespace detail {

inline json points_to_json(const Points3& pts) {
  json out = json::array();
  for (int i = 0; i < pts.cols(); ++i)
    out.push_back({pts(0, i), pts(1, i), pts(2, i)});
  return out;
}

inline Points3 points_from_json(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw SchemaError(where + ": expected array of points");
  Points3 pts(3, arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& p = arr[i];
    if (!p.is_array() || p.size() != 3) throw SchemaError(where + ": point must be [x,y,z]");
    for (int k = 0; k < 3; ++k) pts(k, i) = p[k].get<double>();
  }
  return pts;
}

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw SchemaError("parse error in '" + path.string() + "': " + e.what());
  }
  return j;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(1, '\t') << "\n";
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline json track_to_json(const ObjectTrack& tr) {
  json obj;
  obj["object_id"] = tr.object_id;
  obj["category"] = tr.category;
  obj["kind"] = to_string(tr.kind);
  obj["canonical_points"] = detail::points_to_json(tr.canonical_points);
  json pts = json::array();
  for (int i = 0; i < tr.num_points(); ++i) {
    json series = json::array();
    for (int t = 0; t < tr.num_frames(); ++t)
      series.push_back({tr.frames[t](0, i), tr.frames[t](1, i), tr.frames[t](2, i)});
    pts.push_back(std::move(series));
  }
  obj["points"] = std::move(pts);
  return obj;
}

inline ObjectTrack track_from_json(const json& obj, const std::string& demo_id) {
  ObjectTrack tr;
  tr.object_id = obj.at("object_id").get<std::string>();
  const std::string where = "demo '" + demo_id + "', object '" + tr.object_id + "'";
  tr.category = obj.at("category").get<std::string>();
  tr.kind = track_kind_from_string(obj.at("kind").get<std::string>());
  tr.canonical_points = detail::points_from_json(obj.at("canonical_points"), where);
  const auto& pts = obj.at("points");
  if (!pts.is_array() || pts.empty()) throw SchemaError(where + ": empty points");
  const int n = static_cast<int>(pts.size());
  if (n != tr.canonical_points.cols())
    throw SchemaError(where + ": points/canonical_points count mismatch");
  const int T = static_cast<int>(pts[0].size());
  tr.frames.assign(T, Points3(3, n));
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(pts[i].size()) != T)
      throw SchemaError(where + ": track length mismatch at point " + std::to_string(i));
    for (int t = 0; t < T; ++t) {
      const auto& p = pts[i][t];
      if (!p.is_array() || p.size() != 3) throw SchemaError(where + ": point must be [x,y,z]");
      for (int k = 0; k < 3; ++k) {
        const double v = p[k].get<double>();
        if (!std::isfinite(v))
          throw DataError(where + ": non-finite value at frame " + std::to_string(t));
        tr.frames[t](k, i) = v;
      }
    }
  }
  return tr;
}

inline void save_demonstration_set(const DemonstrationSet& set, const std::filesystem::path& dir) {
  set.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  json manifest;
  manifest["task_name"] = set.task_name;
  manifest["units"] = {{"length", "meters"}, {"time", "seconds"}};
  manifest["categories"] = set.categories;
  json demo_files = json::array();
  for (const auto& demo : set.demos) demo_files.push_back(demo.demo_id + ".json");
  manifest["demos"] = demo_files;
  detail::write_json_file(dir / "manifest.json", manifest);

  for (const auto& demo : set.demos) {
    json j;
    j["demo_id"] = demo.demo_id;
    j["dt"] = demo.dt;
    json objs = json::array();
    for (const auto& tr : demo.tracks) objs.push_back(track_to_json(tr));
    j["objects"] = std::move(objs);
    detail::write_json_file(dir / (demo.demo_id + ".json"), j);
  }
}

inline DemonstrationSet load_demonstration_set(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw SchemaError("missing manifest: '" + manifest_path.string() + "'");
  const json manifest = detail::load_json_file(manifest_path);

  DemonstrationSet set;
  set.task_name = manifest.at("task_name").get<std::string>();
  for (const auto& c : manifest.at("categories")) set.categories.push_back(c.get<std::string>());
  for (const auto& f : manifest.at("demos")) {
    const json j = detail::load_json_file(dir / f.get<std::string>());
    Demonstration demo;
    demo.demo_id = j.at("demo_id").get<std::string>();
    demo.dt = j.at("dt").get<double>();
    for (const auto& obj : j.at("objects")) demo.tracks.push_back(track_from_json(obj, demo.demo_id));
    set.demos.push_back(std::move(demo));
  }
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Savitzky-Golay smoothing. Interior samples use the classic symmetric
// least-squares convolution; near the boundaries the same-degree polynomial
// is fitted on the window anchored at the boundary and evaluated in place,
// so polynomials up to `polyorder` are reproduced exactly everywhere.
// ---------------------------------------------------------------------------

namespace detail {

/// Row of least-squares weights that evaluates the fitted polynomial at
/// `eval` given samples at positions `xs`.
inline VectorXd sg_weights(const std::vector<double>& xs, double eval, int degree) {
  const int n = static_cast<int>(xs.size());
  const int m = degree + 1;
  MatrixXd V(n, m);
  for (int i = 0; i < n; ++i) {
    double v = 1.0;
    for (int j = 0; j < m; ++j) {
      V(i, j) = v;
      v *= xs[i];
    }
  }
  VectorXd e(m);
  double v = 1.0;
  for (int j = 0; j < m; ++j) {
    e(j) = v;
    v *= eval;
  }
  // weights = V (V^T V)^-1 e, solved via QR for stability
  return V * (V.transpose() * V).ldlt().solve(e);
}

}  // namespace detail

inline ObjectTrack savitzky_golay_smooth(const ObjectTrack& track, int window, int polyorder) {
  const int T = track.num_frames();
  if (window < 3 || window % 2 == 0) throw PreconditionError("savitzky_golay_smooth: window must be odd and >= 3");
  if (polyorder < 0 || polyorder >= window)
    throw PreconditionError("savitzky_golay_smooth: polyorder must be < window");
  if (T < window) throw PreconditionError("savitzky_golay_smooth: track shorter than window");

  const int h = window / 2;
  std::vector<double> xs(window);
  for (int i = 0; i < window; ++i) xs[i] = i - h;
  const VectorXd center_w = detail::sg_weights(xs, 0.0, polyorder);

  // Boundary rows: window anchored at the edge, evaluated at offsets 0..h-1.
  std::vector<VectorXd> edge_w(h);
  std::vector<double> xs_edge(window);
  for (int i = 0; i < window; ++i) xs_edge[i] = i;
  for (int t = 0; t < h; ++t) edge_w[t] = detail::sg_weights(xs_edge, t, polyorder);

  ObjectTrack out = track;
  const int n = track.num_points();
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        if (t < h) {
          const VectorXd& w = edge_w[t];
          for (int j = 0; j < window; ++j) acc += w(j) * track.frames[j](k, i);
        } else if (t >= T - h) {
          // right edge: left-edge weights on time-reversed samples
          const VectorXd& w = edge_w[T - 1 - t];
          for (int j = 0; j < window; ++j) acc += w(j) * track.frames[T - 1 - j](k, i);
        } else {
          for (int j = 0; j < window; ++j) acc += center_w(j) * track.frames[t - h + j](k, i);
        }
        out.frames[t](k, i) = acc;
      }
    }
  }
  return out;
}

inline Demonstration savitzky_golay_smooth(const Demonstration& demo, int window, int polyorder) {
  Demonstration out = demo;
  for (auto& tr : out.tracks) tr = savitzky_golay_smooth(tr, window, polyorder);
  return out;
}

// ---------------------------------------------------------------------------
// Outlier rejection. Statistic: per-point median step speed; a point is
// dropped when its statistic exceeds median + z * 1.4826 * MAD of the
// object's per-point distribution (robust z-score convention).
// ---------------------------------------------------------------------------

struct OutlierResult {
  ObjectTrack track;
  std::vector<int> removed;    // original indices dropped
  std::vector<int> survivors;  // original indices kept, ascending
};

inline std::vector<double> per_point_median_speed(const ObjectTrack& track, double dt) {
  const int n = track.num_points();
  const int T = track.num_frames();
  std::vector<double> stat(n);
  std::vector<double> speeds(std::max(1, T - 1));
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t + 1 < T; ++t)
      speeds[t] = (track.frames[t + 1].col(i) - track.frames[t].col(i)).norm() / dt;
    stat[i] = T > 1 ? median(speeds) : 0.0;
  }
  return stat;
}

inline ObjectTrack select_points(const ObjectTrack& track, const std::vector<int>& indices) {
  ObjectTrack out;
  out.object_id = track.object_id;
  out.category = track.category;
  out.kind = track.kind;
  const int m = static_cast<int>(indices.size());
  out.canonical_points.resize(3, m);
  for (int j = 0; j < m; ++j) out.canonical_points.col(j) = track.canonical_points.col(indices[j]);
  out.frames.assign(track.num_frames(), Points3(3, m));
  for (int t = 0; t < track.num_frames(); ++t)
    for (int j = 0; j < m; ++j) out.frames[t].col(j) = track.frames[t].col(indices[j]);
  return out;
}

inline OutlierResult reject_outlier_points(const ObjectTrack& track, double z_thresh, double dt = 1.0) {
  if (track.num_points() < 8)
    throw PreconditionError("reject_outlier_points: needs at least 8 points");
  const auto stat = per_point_median_speed(track, dt);
  const double med = median(stat);
  const double mad = median_abs_deviation(stat, med);
  const double thresh = med + z_thresh * 1.4826 * mad;

  OutlierResult res;
  for (int i = 0; i < track.num_points(); ++i) {
    if (stat[i] > thresh && mad > 0.0)
      res.removed.push_back(i);
    else
      res.survivors.push_back(i);
  }
  if (res.survivors.size() < 4)
    throw DataError("reject_outlier_points: fewer than 4 survivors on '" + track.object_id + "'");
  res.track = select_points(track, res.survivors);
  return res;
}

/// Set-level rejection: survivor sets are intersected across demonstrations
/// so the dense-correspondence indexing stays aligned per object.
inline DemonstrationSet reject_outliers(const DemonstrationSet& set, double z_thresh) {
  if (set.demos.empty()) return set;
  std::map<std::string, std::set<int>> survivors;
  for (const auto& demo : set.demos) {
    for (const auto& tr : demo.tracks) {
      if (is_hand(tr.kind)) continue;  // hand keypoints are semantic, keep all
      const auto res = reject_outlier_points(tr, z_thresh, demo.dt);
      std::set<int> s(res.survivors.begin(), res.survivors.end());
      auto it = survivors.find(tr.object_id);
      if (it == survivors.end()) {
        survivors[tr.object_id] = std::move(s);
      } else {
        std::set<int> inter;
        std::set_intersection(it->second.begin(), it->second.end(), s.begin(), s.end(),
                              std::inserter(inter, inter.begin()));
        it->second = std::move(inter);
      }
    }
  }
  DemonstrationSet out = set;
  for (auto& demo : out.demos) {
    for (auto& tr : demo.tracks) {
      auto it = survivors.find(tr.object_id);
      if (it == survivors.end()) continue;
      if (it->second.size() < 4)
        throw DataError("reject_outliers: fewer than 4 shared survivors on '" + tr.object_id + "'");
      if (static_cast<int>(it->second.size()) == tr.num_points()) continue;
      tr = select_points(tr, std::vector<int>(it->second.begin(), it->second.end()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time resampling (uniform linear interpolation, endpoints preserved).
// ---------------------------------------------------------------------------

inline Demonstration resample_time(const Demonstration& demo, int T_out) {
  if (T_out < 2) throw PreconditionError("resample_time: T_out must be >= 2");
  const int T = demo.num_frames();
  if (T < 2) throw PreconditionError("resample_time: demo shorter than 2 frames");
  if (T_out == T) return demo;

  Demonstration out = demo;
  out.dt = demo.dt * static_cast<double>(T - 1) / static_cast<double>(T_out - 1);
  for (auto& tr : out.tracks) {
    const auto& src = demo.find_track(tr.object_id)->frames;
    tr.frames.assign(T_out, Points3(3, tr.num_points()));
    for (int t = 0; t < T_out; ++t) {
      const double x = static_cast<double>(t) * static_cast<double>(T - 1) /
                       static_cast<double>(T_out - 1);
      int lo = std::min(static_cast<int>(x), T - 2);
      const double frac = x - lo;
      tr.frames[t] = (1.0 - frac) * src[lo] + frac * src[lo + 1];
    }
  }
  return out;
}

}  // namespace bikvil
