// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "bikvil/geomcon.hpp"
#include "bikvil/saliency.hpp"
#include "bikvil/vmp.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Bimanual coordination taxonomy (loosely- and tightly-coupled asymmetric
// coordination are merged: telling them apart needs force data).
// ---------------------------------------------------------------------------

enum class CoordinationKind {
  UncoordinatedUnimanual,
  UncoordinatedBimanual,
  LooselyCoupled,
  TightlyCoupledSymmetric,
};

inline std::string to_string(CoordinationKind k) {
  switch (k) {
    case CoordinationKind::UncoordinatedUnimanual: return "uncoordinated_unimanual";
    case CoordinationKind::UncoordinatedBimanual: return "uncoordinated_bimanual";
    case CoordinationKind::LooselyCoupled: return "loosely_coupled";
    case CoordinationKind::TightlyCoupledSymmetric: return "tightly_coupled_symmetric";
  }
  return "uncoordinated_unimanual";
}

inline CoordinationKind coordination_from_string(const std::string& s) {
  if (s == "uncoordinated_unimanual") return CoordinationKind::UncoordinatedUnimanual;
  if (s == "uncoordinated_bimanual") return CoordinationKind::UncoordinatedBimanual;
  if (s == "loosely_coupled") return CoordinationKind::LooselyCoupled;
  if (s == "tightly_coupled_symmetric") return CoordinationKind::TightlyCoupledSymmetric;
  throw SchemaError("unknown coordination strategy '" + s + "'");
}

struct CoordinationStrategy {
  CoordinationKind value = CoordinationKind::UncoordinatedUnimanual;
  std::string evidence;
};

// ---------------------------------------------------------------------------
// HMSR graph
// ---------------------------------------------------------------------------

struct HmsrNode {
  std::string id;
  TrackKind kind = TrackKind::RigidObject;
  std::string category;
  int level = 0;
  std::string source;  // for virtuals: the object they freeze
};

struct HmsrEdge {
  std::string master;
  std::string slave;
  std::vector<GeometricConstraint> constraints;
  std::vector<Vmp> vmps;  // vmps[i] belongs to constraints[i]
};

struct HmsrGraph {
  std::vector<HmsrNode> nodes;
  std::vector<HmsrEdge> edges;
  CoordinationStrategy coordination;
  json meta;

  const HmsrNode* find_node(const std::string& id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
  HmsrNode* find_node(const std::string& id) {
    for (auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
  const HmsrEdge* find_edge(const std::string& master, const std::string& slave) const {
    for (const auto& e : edges)
      if (e.master == master && e.slave == slave) return &e;
    return nullptr;
  }

  std::vector<std::string> masters_of(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& e : edges)
      if (e.slave == id) out.push_back(e.master);
    return out;
  }
};

/// Kahn topological order; throws std::logic_error on a cycle.
inline std::vector<std::string> topological_order(const HmsrGraph& g) {
  std::map<std::string, int> in_degree;
  for (const auto& n : g.nodes) in_degree[n.id] = 0;
  for (const auto& e : g.edges) in_degree[e.slave]++;
  std::vector<std::string> queue, out;
  for (const auto& n : g.nodes)
    if (in_degree[n.id] == 0) queue.push_back(n.id);
  while (!queue.empty()) {
    const std::string id = queue.front();
    queue.erase(queue.begin());
    out.push_back(id);
    for (const auto& e : g.edges)
      if (e.master == id && --in_degree[e.slave] == 0) queue.push_back(e.slave);
  }
  if (out.size() != g.nodes.size())
    throw std::logic_error("hmsr: cycle detected, master resolution violated");
  return out;
}

/// Longest-path layering from the in-degree-0 sources.
inline void compute_levels(HmsrGraph& g) {
  for (auto& n : g.nodes) n.level = 0;
  for (const auto& id : topological_order(g))
    for (const auto& e : g.edges)
      if (e.master == id)
        g.find_node(e.slave)->level = std::max(g.find_node(e.slave)->level,
                                               g.find_node(id)->level + 1);
}

// ---------------------------------------------------------------------------
// Pose invariance: normalized translational/orientational variability of a
// mover relative to each static anchor; the object showing the most salient
// invariance becomes the master of a bi-directional pair.
// ---------------------------------------------------------------------------

struct InvarianceRatios {
  struct Entry {
    std::string static_id;
    std::string mover_id;
    double r_p = 0.0;  // translational variability / scene scale
    double r_o = 0.0;  // orientational variability / pi
  };
  std::vector<Entry> entries;

  json to_json() const {
    json arr = json::array();
    for (const auto& e : entries)
      arr.push_back({{"static", e.static_id}, {"mover", e.mover_id}, {"r_p", e.r_p}, {"r_o", e.r_o}});
    return arr;
  }
};

/// Registered rigid pose of a track at one frame (scale discarded).
inline Pose registered_pose(const ObjectTrack& tr, int t) {
  const RigidFit fit = fit_rigid(tr.canonical_points, tr.frames[t], true);
  if (!fit.ok)
    throw PreconditionError("registration failed on '" + tr.object_id + "' at frame " +
                            std::to_string(t));
  return {fit.R, fit.t};
}

struct HmsrConfig {
  double end_segment_frac = 0.10;  // pose window for the invariance criterion
  double sym_window_frac = 0.30;   // noticeable-window length for symmetry
  double sym_rate_thresh = 0.005;  // m/s
  PairExtractConfig pair;
  int vmp_n_basis = 20;
  double vmp_ridge = 1e-8;
};

inline InvarianceRatios compute_invariance_ratios(const DemonstrationSet& set,
                                                  const std::string& mover_a,
                                                  const std::string& mover_b,
                                                  const std::vector<std::string>& statics,
                                                  double scene_scale,
                                                  double end_segment_frac = 0.10) {
  if (statics.empty()) throw PreconditionError("compute_invariance_ratios: no static anchor");
  InvarianceRatios out;
  for (const auto& s : statics) {
    for (const auto& l : {mover_a, mover_b}) {
      std::vector<Vec3> positions;
      std::vector<Mat3> rotations;
      for (const auto& demo : set.demos) {
        const ObjectTrack* anchor = demo.find_track(s);
        const ObjectTrack* mover = demo.find_track(l);
        if (!anchor || !mover) throw PreconditionError("compute_invariance_ratios: unknown track");
        const int T = demo.num_frames();
        const int seg = std::max(1, static_cast<int>(std::lround(end_segment_frac * T)));
        Vec3 p_acc = Vec3::Zero();
        std::vector<Mat3> frame_rots;
        for (int t = T - seg; t < T; ++t) {
          const Pose rel = registered_pose(*anchor, t).inverse().compose(registered_pose(*mover, t));
          p_acc += rel.p;
          frame_rots.push_back(rel.R);
        }
        positions.push_back(p_acc / seg);
        rotations.push_back(chordal_mean_rotation(frame_rots));
      }
      const int n = static_cast<int>(positions.size());
      Vec3 mean = Vec3::Zero();
      for (const auto& p : positions) mean += p;
      mean /= n;
      double var = 0.0;
      for (const auto& p : positions) var += (p - mean).squaredNorm();
      var /= std::max(1, n - 1);

      const Mat3 mean_rot = chordal_mean_rotation(rotations);
      double geo = 0.0;
      for (const auto& R : rotations) geo += geodesic_angle(R, mean_rot);
      geo /= n;

      InvarianceRatios::Entry e;
      e.static_id = s;
      e.mover_id = l;
      e.r_p = std::clamp(std::sqrt(var) / scene_scale, 0.0, 1.0);
      e.r_o = std::clamp(geo / M_PI, 0.0, 1.0);
      if (!std::isfinite(e.r_p) || !std::isfinite(e.r_o))
        throw PreconditionError("compute_invariance_ratios: non-finite ratio");
      out.entries.push_back(std::move(e));
    }
  }
  return out;
}

/// Argmin over every listed ratio; ties fall back to the smaller r_p + r_o of
/// the minimal entry, then to the lexicographically smaller id.
inline std::string resolve_master(const InvarianceRatios& ratios) {
  if (ratios.entries.empty()) throw PreconditionError("resolve_master: no ratios");
  std::string best_id;
  auto best = std::make_tuple(std::numeric_limits<double>::infinity(),
                              std::numeric_limits<double>::infinity(), std::string());
  for (const auto& e : ratios.entries) {
    for (double r : {e.r_p, e.r_o}) {
      const auto key = std::make_tuple(r, e.r_p + e.r_o, e.mover_id);
      if (key < best) {
        best = key;
        best_id = e.mover_id;
      }
    }
  }
  return best_id;
}

// ---------------------------------------------------------------------------
// Candidate graph: statics and virtuals at the top, movers below them, hands
// as slaves of their firmly grasped object.
// ---------------------------------------------------------------------------

struct PairRatios {
  std::string mover_a;
  std::string mover_b;
  InvarianceRatios ratios;
};

/// Ratios for every bi-directional moving pair, against all static anchors
/// (virtual objects included).
inline std::vector<PairRatios> compute_all_pair_ratios(const DemonstrationSet& set,
                                                       const SaliencyReport& saliency,
                                                       const HmsrConfig& cfg) {
  std::vector<std::string> movers, anchors;
  for (const auto& tr : set.demos.front().tracks) {
    if (tr.kind == TrackKind::Virtual)
      anchors.push_back(tr.object_id);
    else if (tr.kind == TrackKind::RigidObject && !saliency.is_moving(tr.object_id))
      anchors.push_back(tr.object_id);
    else if (tr.kind == TrackKind::RigidObject)
      movers.push_back(tr.object_id);
  }
  std::vector<PairRatios> out;
  for (std::size_t i = 0; i < movers.size(); ++i)
    for (std::size_t j = i + 1; j < movers.size(); ++j)
      out.push_back({movers[i], movers[j],
                     compute_invariance_ratios(set, movers[i], movers[j], anchors,
                                               saliency.scene_scale, cfg.end_segment_frac)});
  return out;
}

inline HmsrGraph build_candidate_graph(const DemonstrationSet& set, const SaliencyReport& saliency,
                                       const std::vector<AggregatedGrasp>& grasps,
                                       const std::vector<PairRatios>& pair_ratios) {
  HmsrGraph g;
  std::vector<std::string> statics, movers;
  for (const auto& tr : set.demos.front().tracks) {
    HmsrNode node;
    node.id = tr.object_id;
    node.kind = tr.kind;
    node.category = tr.category;
    if (tr.kind == TrackKind::Virtual) node.source = tr.object_id.substr(1);
    g.nodes.push_back(node);
    if (tr.kind == TrackKind::RigidObject && !saliency.is_moving(tr.object_id))
      statics.push_back(tr.object_id);
    else if (tr.kind == TrackKind::RigidObject)
      movers.push_back(tr.object_id);
  }

  for (const auto& m : movers) {
    for (const auto& s : statics) g.edges.push_back({s, m, {}, {}});
    const std::string vm = "v" + m;
    if (g.find_node(vm)) g.edges.push_back({vm, m, {}, {}});
  }

  // Bi-directional mover pairs resolved by the invariance criterion.
  for (std::size_t i = 0; i < movers.size(); ++i) {
    for (std::size_t j = i + 1; j < movers.size(); ++j) {
      const PairRatios* pr = nullptr;
      for (const auto& r : pair_ratios)
        if ((r.mover_a == movers[i] && r.mover_b == movers[j]) ||
            (r.mover_a == movers[j] && r.mover_b == movers[i]))
          pr = &r;
      if (!pr)
        throw PreconditionError("build_candidate_graph: missing ratios for pair " + movers[i] +
                                "/" + movers[j]);
      const std::string master = resolve_master(pr->ratios);
      const std::string slave = master == movers[i] ? movers[j] : movers[i];
      g.edges.push_back({master, slave, {}, {}});
    }
  }

  for (const auto& grasp : grasps) g.edges.push_back({grasp.object_id, grasp.hand_id, {}, {}});

  compute_levels(g);  // also verifies acyclicity
  return g;
}

// ---------------------------------------------------------------------------
// Truncation: keep only edges showing a constraint; free moving masters get a
// pose constraint anchored on their virtual object.
// ---------------------------------------------------------------------------

namespace detail {

/// Pose trajectory of `mover` expressed in `frame` on the anchor track,
/// rotation encoded relative to the demo's own start: rows [p(3), rotvec(3)].
inline MatrixXd relative_pose_trajectory(const Demonstration& demo, const std::string& anchor_id,
                                         const std::string& mover_id, const LocalFrame& frame,
                                         std::vector<Pose>* out_poses = nullptr) {
  const ObjectTrack* anchor = demo.find_track(anchor_id);
  const ObjectTrack* mover = demo.find_track(mover_id);
  const int T = demo.num_frames();
  MatrixXd traj(T, 6);
  Mat3 R0 = Mat3::Identity();
  for (int t = 0; t < T; ++t) {
    const FrameInstance fi = reconstruct_frame(frame, anchor->frames[t]);
    const Pose pose = registered_pose(*mover, t);
    const Mat3 R_f = fi.basis.transpose() * pose.R;
    const Vec3 p_f = fi.to_frame(pose.p);
    if (t == 0) R0 = R_f;
    traj.row(t).head<3>() = p_f.transpose();
    traj.row(t).tail<3>() = so3_log(Mat3(R_f * R0.transpose())).transpose();
    if (out_poses) out_poses->push_back({R_f, p_f});
  }
  return traj;
}

inline Vmp fit_keypoint_vmp(const DemonstrationSet& set, const GeometricConstraint& c,
                            const std::string& master_id, int n_basis, double ridge) {
  std::vector<MatrixXd> demos;
  for (const auto& demo : set.demos) {
    const ObjectTrack* master = demo.find_track(master_id);
    const ObjectTrack* slave = demo.find_track(c.slave_id);
    const int T = demo.num_frames();
    MatrixXd traj(T, 3);
    for (int t = 0; t < T; ++t) {
      const FrameInstance fi = reconstruct_frame(c.frame, master->frames[t]);
      traj.row(t) = fi.to_frame(slave->frames[t].col(c.keypoint_index)).transpose();
    }
    demos.push_back(std::move(traj));
  }
  return Vmp::fit(demos, n_basis, ridge);
}

}  // namespace detail

inline HmsrGraph truncate(const HmsrGraph& graph, const DemonstrationSet& set,
                          const std::vector<AggregatedGrasp>& grasps, const HmsrConfig& cfg) {
  HmsrGraph out;
  out.nodes = graph.nodes;
  out.coordination = graph.coordination;
  out.meta = graph.meta;

  for (const auto& e : graph.edges) {
    HmsrEdge kept = e;
    kept.constraints = extract_pair_constraints(set, e.master, e.slave, cfg.pair);
    if (kept.constraints.empty()) continue;
    kept.vmps.clear();
    for (const auto& c : kept.constraints)
      kept.vmps.push_back(detail::fit_keypoint_vmp(set, c, e.master, cfg.vmp_n_basis, cfg.vmp_ridge));
    out.edges.push_back(std::move(kept));
  }

  // Free moving masters: attach a pose-constraint edge from their virtual
  // object, carrying the end-pose distribution and a 6-D task-space primitive.
  std::set<std::string> grasped;
  for (const auto& g : grasps) grasped.insert(g.object_id);
  for (const auto& node : graph.nodes) {
    if (node.kind != TrackKind::RigidObject) continue;
    bool has_incoming = false, has_outgoing = false;
    for (const auto& e : out.edges) {
      has_incoming |= e.slave == node.id;
      has_outgoing |= e.master == node.id;
    }
    if (has_incoming || !(has_outgoing || grasped.count(node.id))) continue;
    const std::string vid = "v" + node.id;
    if (!graph.find_node(vid)) continue;  // not a mover

    const ObjectTrack* vtrack = set.demos.front().find_track(vid);
    const auto frames = candidate_local_frames(vtrack->canonical_points, vid,
                                               cfg.pair.n_frames, cfg.pair.k_neighbors);
    // first candidate frame that reconstructs on every demo's virtual cloud
    const LocalFrame* frame_ptr = nullptr;
    for (const auto& f : frames) {
      bool ok = true;
      for (const auto& demo : set.demos) {
        try {
          reconstruct_frame(f, demo.find_track(vid)->frames.front());
        } catch (const PreconditionError&) {
          ok = false;
          break;
        }
      }
      if (ok) {
        frame_ptr = &f;
        break;
      }
    }
    if (!frame_ptr)
      throw PreconditionError("truncate: no usable reference frame on '" + vid + "'");
    const LocalFrame& frame = *frame_ptr;

    std::vector<MatrixXd> trajs;
    std::vector<Vec3> end_positions;
    std::vector<Mat3> end_rotations;
    for (const auto& demo : set.demos) {
      std::vector<Pose> poses;
      trajs.push_back(detail::relative_pose_trajectory(demo, vid, node.id, frame, &poses));
      const int T = demo.num_frames();
      const int seg = std::max(1, static_cast<int>(std::lround(cfg.end_segment_frac * T)));
      Vec3 p = Vec3::Zero();
      std::vector<Mat3> rots;
      for (int t = T - seg; t < T; ++t) {
        p += poses[t].p;
        rots.push_back(poses[t].R);
      }
      end_positions.push_back(p / seg);
      end_rotations.push_back(chordal_mean_rotation(rots));
    }

    GeometricConstraint c;
    c.kind = ConstraintKind::Pose;
    c.slave_id = node.id;
    c.keypoint_index = -1;
    c.frame = frame;
    c.priority = constraint_priority(ConstraintKind::Pose);
    const int n = static_cast<int>(end_positions.size());
    Vec3 mean = Vec3::Zero();
    for (const auto& p : end_positions) mean += p;
    mean /= n;
    Mat3 cov = Mat3::Zero();
    for (const auto& p : end_positions) cov += (p - mean) * (p - mean).transpose();
    cov /= std::max(1, n - 1);
    c.pose.mean_position = mean;
    c.pose.position_cov = cov;
    c.pose.mean_rotation = chordal_mean_rotation(end_rotations);
    double acc = 0.0, maxdev = 0.0;
    for (const auto& R : end_rotations) {
      const double a = geodesic_angle(R, c.pose.mean_rotation);
      acc += a * a;
      maxdev = std::max(maxdev, a);
    }
    c.pose.rot_std = std::sqrt(acc / n);
    c.pose.rot_max_dev = maxdev;
    c.residual_scale = std::sqrt(cov.trace());

    HmsrEdge edge;
    edge.master = vid;
    edge.slave = node.id;
    edge.constraints.push_back(std::move(c));
    edge.vmps.push_back(Vmp::fit(trajs, cfg.vmp_n_basis, cfg.vmp_ridge));
    out.edges.push_back(std::move(edge));
  }

  // Drop virtual nodes that no longer anchor anything.
  std::vector<HmsrNode> nodes;
  for (const auto& node : out.nodes) {
    if (node.kind == TrackKind::Virtual) {
      bool used = false;
      for (const auto& e : out.edges) used |= e.master == node.id;
      if (!used) continue;
    }
    nodes.push_back(node);
  }
  out.nodes = std::move(nodes);
  compute_levels(out);
  return out;
}

// ---------------------------------------------------------------------------
// Coordination classification (rules checked from the most specific down).
// ---------------------------------------------------------------------------

inline CoordinationStrategy classify_coordination(const HmsrGraph& graph,
                                                  const std::vector<AggregatedGrasp>& grasps,
                                                  const DemonstrationSet& set,
                                                  const HmsrConfig& cfg) {
  if (grasps.empty()) throw PreconditionError("classify_coordination: no manipulation detected");
  CoordinationStrategy out;
  if (grasps.size() == 1) {
    out.value = CoordinationKind::UncoordinatedUnimanual;
    out.evidence = "single grasp: " + grasps[0].hand_id + " on " + grasps[0].object_id;
    return out;
  }

  const AggregatedGrasp& ga = grasps[0];
  const AggregatedGrasp& gb = grasps[1];

  if (ga.object_id == gb.object_id) {
    // Symmetric when the inter-hand distance holds still for a noticeable
    // window while both hands grasp the shared object.
    int symmetric_demos = 0;
    for (const auto& demo : set.demos) {
      const ObjectTrack* ha = demo.find_track(ga.hand_id);
      const ObjectTrack* hb = demo.find_track(gb.hand_id);
      const int t0 = std::max(ga.t_begin, gb.t_begin);
      const int t1 = std::min(ga.t_end, gb.t_end);
      if (t1 <= t0) continue;
      std::vector<double> dist(t1 - t0 + 1);
      for (int t = t0; t <= t1; ++t)
        dist[t - t0] = (ha->frames[t].col(kWrist) - hb->frames[t].col(kWrist)).norm();
      const auto rate = detail::series_rate(dist, demo.dt, 21);
      int run = 0, best_run = 0;
      for (double r : rate) {
        run = std::abs(r) < cfg.sym_rate_thresh ? run + 1 : 0;
        best_run = std::max(best_run, run);
      }
      if (best_run >= static_cast<int>(cfg.sym_window_frac * demo.num_frames())) ++symmetric_demos;
    }
    if (2 * symmetric_demos >= set.num_demos()) {
      out.value = CoordinationKind::TightlyCoupledSymmetric;
      out.evidence = "both hands grasp '" + ga.object_id + "' with steady inter-hand distance in " +
                     std::to_string(symmetric_demos) + "/" + std::to_string(set.num_demos()) +
                     " demos";
      return out;
    }
    out.value = CoordinationKind::LooselyCoupled;
    out.evidence = "both hands grasp '" + ga.object_id + "' without synchronized spacing";
    return out;
  }

  if (graph.find_edge(ga.object_id, gb.object_id) || graph.find_edge(gb.object_id, ga.object_id)) {
    out.value = CoordinationKind::LooselyCoupled;
    out.evidence = "constraint edge between grasped objects '" + ga.object_id + "' and '" +
                   gb.object_id + "'";
    return out;
  }
  const auto ma = graph.masters_of(ga.object_id);
  const auto mb = graph.masters_of(gb.object_id);
  for (const auto& m : ma) {
    if (std::find(mb.begin(), mb.end(), m) != mb.end()) {
      out.value = CoordinationKind::LooselyCoupled;
      out.evidence = "grasped objects share master '" + m + "'";
      return out;
    }
  }

  out.value = CoordinationKind::UncoordinatedBimanual;
  out.evidence = "hands grasp '" + ga.object_id + "' and '" + gb.object_id +
                 "' with unrelated masters";
  return out;
}

// ---------------------------------------------------------------------------
// Graph file (JSON): the contract between extraction and reproduction.
// ---------------------------------------------------------------------------

namespace detail {

inline json mat_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatrixXd mat_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(j[0].size());
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

inline json vec_to_json(const VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline VectorXd vec_from_json(const json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace detail

inline json frame_to_json(const LocalFrame& f) {
  json j;
  j["master_id"] = f.master_id;
  j["anchor_index"] = f.anchor_index;
  j["neighbor_indices"] = f.neighbor_indices;
  j["anchor_canonical"] = {f.anchor_canonical.x(), f.anchor_canonical.y(), f.anchor_canonical.z()};
  j["neighbors_canonical"] = detail::mat_to_json(f.neighbors_canonical);
  j["basis"] = detail::mat_to_json(f.basis);
  j["origin"] = {f.origin.x(), f.origin.y(), f.origin.z()};
  j["canonical_scale"] = f.canonical_scale;
  return j;
}

inline LocalFrame frame_from_json(const json& j) {
  LocalFrame f;
  f.master_id = j.at("master_id").get<std::string>();
  f.anchor_index = j.at("anchor_index").get<int>();
  f.neighbor_indices = j.at("neighbor_indices").get<std::vector<int>>();
  const auto& a = j.at("anchor_canonical");
  f.anchor_canonical = Vec3(a[0], a[1], a[2]);
  f.neighbors_canonical = detail::mat_from_json(j.at("neighbors_canonical"));
  f.basis = detail::mat_from_json(j.at("basis"));
  const auto& o = j.at("origin");
  f.origin = Vec3(o[0], o[1], o[2]);
  f.canonical_scale = j.at("canonical_scale").get<double>();
  return f;
}

inline json constraint_to_json(const GeometricConstraint& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["slave_id"] = c.slave_id;
  j["keypoint_index"] = c.keypoint_index;
  j["keypoint_canonical"] = {c.keypoint_canonical.x(), c.keypoint_canonical.y(),
                             c.keypoint_canonical.z()};
  j["frame"] = frame_to_json(c.frame);
  j["residual_scale"] = c.residual_scale;
  j["priority"] = c.priority;
  switch (c.kind) {
    case ConstraintKind::P2P:
      j["target"] = {c.target.x(), c.target.y(), c.target.z()};
      break;
    case ConstraintKind::P2L:
    case ConstraintKind::P2Plane:
      j["target"] = {c.target.x(), c.target.y(), c.target.z()};
      j["direction"] = {c.direction.x(), c.direction.y(), c.direction.z()};
      break;
    case ConstraintKind::P2C:
      j["curve"] = {{"coeffs", detail::mat_to_json(c.curve.coeffs)},
                    {"degree", c.curve.degree},
                    {"s_range", {c.curve.s_lo, c.curve.s_hi}}};
      break;
    case ConstraintKind::P2S:
      j["surface"] = {{"origin", {c.surface.origin.x(), c.surface.origin.y(), c.surface.origin.z()}},
                      {"axes", detail::mat_to_json(c.surface.axes)},
                      {"coeffs", detail::vec_to_json(c.surface.coeffs)},
                      {"degree", c.surface.degree},
                      {"u_range", {c.surface.u_lo, c.surface.u_hi}},
                      {"v_range", {c.surface.v_lo, c.surface.v_hi}}};
      break;
    case ConstraintKind::Pose:
      j["pose"] = {{"mean_position",
                    {c.pose.mean_position.x(), c.pose.mean_position.y(), c.pose.mean_position.z()}},
                   {"position_cov", detail::mat_to_json(c.pose.position_cov)},
                   {"mean_rotation", detail::mat_to_json(c.pose.mean_rotation)},
                   {"rot_std", c.pose.rot_std},
                   {"rot_max_dev", c.pose.rot_max_dev}};
      break;
  }
  return j;
}

inline GeometricConstraint constraint_from_json(const json& j) {
  GeometricConstraint c;
  c.kind = constraint_kind_from_string(j.at("kind").get<std::string>());
  c.slave_id = j.at("slave_id").get<std::string>();
  c.keypoint_index = j.at("keypoint_index").get<int>();
  const auto& kc = j.at("keypoint_canonical");
  c.keypoint_canonical = Vec3(kc[0], kc[1], kc[2]);
  c.frame = frame_from_json(j.at("frame"));
  c.residual_scale = j.at("residual_scale").get<double>();
  c.priority = j.at("priority").get<int>();
  if (j.contains("target")) {
    const auto& t = j["target"];
    c.target = Vec3(t[0], t[1], t[2]);
  }
  if (j.contains("direction")) {
    const auto& d = j["direction"];
    c.direction = Vec3(d[0], d[1], d[2]);
  }
  if (j.contains("curve")) {
    c.curve.coeffs = detail::mat_from_json(j["curve"]["coeffs"]);
    c.curve.degree = j["curve"]["degree"].get<int>();
    c.curve.s_lo = j["curve"]["s_range"][0].get<double>();
    c.curve.s_hi = j["curve"]["s_range"][1].get<double>();
  }
  if (j.contains("surface")) {
    const auto& s = j["surface"];
    const auto& o = s.at("origin");
    c.surface.origin = Vec3(o[0], o[1], o[2]);
    c.surface.axes = detail::mat_from_json(s.at("axes"));
    c.surface.coeffs = detail::vec_from_json(s.at("coeffs"));
    c.surface.degree = s.at("degree").get<int>();
    c.surface.u_lo = s.at("u_range")[0].get<double>();
    c.surface.u_hi = s.at("u_range")[1].get<double>();
    c.surface.v_lo = s.at("v_range")[0].get<double>();
    c.surface.v_hi = s.at("v_range")[1].get<double>();
  }
  if (j.contains("pose")) {
    const auto& p = j["pose"];
    const auto& mp = p.at("mean_position");
    c.pose.mean_position = Vec3(mp[0], mp[1], mp[2]);
    c.pose.position_cov = detail::mat_from_json(p.at("position_cov"));
    c.pose.mean_rotation = detail::mat_from_json(p.at("mean_rotation"));
    c.pose.rot_std = p.at("rot_std").get<double>();
    c.pose.rot_max_dev = p.at("rot_max_dev").get<double>();
  }
  return c;
}

inline json vmp_to_json(const Vmp& v) {
  json j;
  j["dim"] = v.dim();
  j["n_basis"] = v.n_basis();
  j["ridge"] = v.ridge();
  j["start"] = detail::vec_to_json(v.start());
  j["goal"] = detail::vec_to_json(v.goal());
  j["weights"] = detail::mat_to_json(v.weights());
  json vias = json::array();
  for (const auto& [x, val] : v.via_points())
    vias.push_back({{"phase", x}, {"value", detail::vec_to_json(val)}});
  j["via_points"] = std::move(vias);
  j["reconstruction_rms"] = v.reconstruction_rms();
  j["demo_variance_rms"] = v.demo_variance_rms();
  return j;
}

inline Vmp vmp_from_json(const json& j) {
  Vmp v(j.at("dim").get<int>(), j.at("n_basis").get<int>(), j.at("ridge").get<double>());
  std::vector<std::pair<double, VectorXd>> vias;
  for (const auto& vp : j.at("via_points"))
    vias.emplace_back(vp.at("phase").get<double>(), detail::vec_from_json(vp.at("value")));
  v.set_state(detail::vec_from_json(j.at("start")), detail::vec_from_json(j.at("goal")),
              detail::mat_from_json(j.at("weights")), std::move(vias),
              j.at("reconstruction_rms").get<double>(), j.at("demo_variance_rms").get<double>());
  return v;
}

inline json graph_to_json(const HmsrGraph& g) {
  json j;
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json node = {{"id", n.id}, {"kind", to_string(n.kind)}, {"category", n.category},
                 {"level", n.level}};
    if (!n.source.empty()) node["source"] = n.source;
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const auto& e : g.edges) {
    json edge;
    edge["master"] = e.master;
    edge["slave"] = e.slave;
    json cs = json::array();
    for (const auto& c : e.constraints) cs.push_back(constraint_to_json(c));
    edge["constraints"] = std::move(cs);
    json vs = json::array();
    for (const auto& v : e.vmps) vs.push_back(vmp_to_json(v));
    edge["vmps"] = std::move(vs);
    edges.push_back(std::move(edge));
  }
  j["edges"] = std::move(edges);
  j["coordination"] = {{"value", to_string(g.coordination.value)},
                       {"evidence", g.coordination.evidence}};
  j["meta"] = g.meta;
  return j;
}

inline HmsrGraph graph_from_json(const json& j) {
  HmsrGraph g;
  for (const auto& n : j.at("nodes")) {
    HmsrNode node;
    node.id = n.at("id").get<std::string>();
    node.kind = track_kind_from_string(n.at("kind").get<std::string>());
    node.category = n.at("category").get<std::string>();
    node.level = n.at("level").get<int>();
    if (n.contains("source")) node.source = n["source"].get<std::string>();
    g.nodes.push_back(std::move(node));
  }
  for (const auto& e : j.at("edges")) {
    HmsrEdge edge;
    edge.master = e.at("master").get<std::string>();
    edge.slave = e.at("slave").get<std::string>();
    for (const auto& c : e.at("constraints")) edge.constraints.push_back(constraint_from_json(c));
    for (const auto& v : e.at("vmps")) edge.vmps.push_back(vmp_from_json(v));
    g.edges.push_back(std::move(edge));
  }
  g.coordination.value = coordination_from_string(j.at("coordination").at("value").get<std::string>());
  g.coordination.evidence = j.at("coordination").at("evidence").get<std::string>();
  if (j.contains("meta")) g.meta = j["meta"];
  return g;
}

inline void save_graph(const HmsrGraph& g, const std::filesystem::path& path) {
  detail::write_json_file(path, graph_to_json(g));
}

inline HmsrGraph load_graph(const std::filesystem::path& path) {
  return graph_from_json(detail::load_json_file(path));
}

}  // namespace bikvil
