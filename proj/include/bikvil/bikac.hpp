// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "bikvil/hmsr.hpp"
#include "bikvil/scene.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Keypoint-based admittance control. Every constrained keypoint is driven by
// a spring-damper toward its attractor (the VMP reference during the approach
// phase, the constraint manifold afterwards); per-body wrenches integrate a
// kinematic rigid body. Masters update before their slaves each step, so
// attractors ride moving master frames.
// ---------------------------------------------------------------------------

struct KacParams {
  double stiffness = 200.0;  // N/m per constraint
  double damping = 0.0;      // N s/m; 0 selects critical damping 2*sqrt(k*m)
  double mass = 1.0;         // kg virtual mass
  double torque_arm = 1.0;   // dimensionless torque scaling
  double max_speed = 1.0;    // m/s
  double phase_rate = 0.35;  // 1/s
  double stall_error = 0.03; // m; phase freezes above this tracking error
  double conv_tol = 0.005;   // m residual for convergence
  double conv_rot_tol = 3.0 * M_PI / 180.0;  // rad
  double conv_hold = 0.5;    // s residuals must hold below tolerance
  std::uint64_t sample_seed = 0;

  double effective_damping() const {
    return damping > 0 ? damping : 2.0 * std::sqrt(stiffness * mass);
  }
  void validate() const {
    if (stiffness <= 0 || mass <= 0) throw PreconditionError("kac: stiffness and mass must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Scene-bound constraint
// ---------------------------------------------------------------------------

struct BoundConstraint {
  GeometricConstraint c;  // frame/keypoint indices rebound onto scene clouds
  Vmp vmp;                // re-targeted to the scene start
  bool has_vmp = false;
  int master_body = -1;
  int slave_body = -1;
  int slave_point = -1;  // instance column for geometric kinds

  // pose-kind extras (frame coordinates)
  Pose sampled_target;
  Mat3 start_rotation = Mat3::Identity();  // slave rotation in frame at adaptation
  std::vector<int> pose_anchors;           // shape columns carrying the pose springs
};

struct AdaptedScene {
  std::vector<BoundConstraint> constraints;
  std::vector<int> driven;  // body indices in topological master-first order
  std::map<std::string, int> node_body;
  struct Follower {
    int hand_body;
    int master_body;
    Pose offset;  // hand pose in the master body frame
  };
  std::vector<Follower> followers;
  std::vector<double> phase;      // per scene body
  std::vector<double> gyration;   // per scene body, meters
};

namespace detail {

inline int nearest_canonical_index(const Points3& canonical, const Vec3& query) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < canonical.cols(); ++i) {
    const double d = (canonical.col(i) - query).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// Remap stored frame/keypoint indices onto a (possibly re-indexed) canonical
/// cloud via the stored canonical coordinates.
inline void rebind_indices(GeometricConstraint& c, const Points3& master_canonical,
                           const Points3& slave_canonical) {
  c.frame.anchor_index = nearest_canonical_index(master_canonical, c.frame.anchor_canonical);
  for (std::size_t i = 0; i < c.frame.neighbor_indices.size(); ++i)
    c.frame.neighbor_indices[i] =
        nearest_canonical_index(master_canonical, c.frame.neighbors_canonical.col(i));
  if (c.keypoint_index >= 0)
    c.keypoint_index = nearest_canonical_index(slave_canonical, c.keypoint_canonical);
}

inline Pose sample_pose_target(const PoseTarget& target, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(target.position_cov);
  const Mat3 sqrt_cov = eig.eigenvectors() *
                        eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                        eig.eigenvectors().transpose();
  Pose out;
  out.p = target.mean_position + sqrt_cov * (rng.uniform(0, 1) * rng.unit_vector());
  out.R = rodrigues(rng.unit_vector() * rng.uniform(0.0, target.rot_std)) * target.mean_rotation;
  return out;
}

}  // namespace detail

/// Instantiate the learned graph on a novel scene: virtual bodies are frozen
/// copies of their source body's start state, frames are rebuilt on the scene
/// instances, VMPs are re-targeted, and pose targets are sampled from the
/// learned end-pose distributions.
inline AdaptedScene adapt_to_scene(const HmsrGraph& graph, SimScene& scene,
                                   const KacParams& params) {
  params.validate();
  AdaptedScene out;

  // bind graph nodes to scene bodies
  for (const auto& node : graph.nodes) {
    if (node.kind == TrackKind::Virtual) continue;
    const SimBody* body = scene.find_body(node.id);
    if (!body && node.kind == TrackKind::RigidObject) body = scene.find_category(node.category);
    if (!body && is_hand(node.kind)) {
      for (const auto& b : scene.bodies)
        if (b.kind == node.kind) body = &b;
    }
    if (!body)
      throw PreconditionError("adapt_to_scene: scene missing category '" + node.category + "'");
    out.node_body[node.id] = static_cast<int>(body - scene.bodies.data());
  }
  // virtual bodies: frozen start-state clones
  for (const auto& node : graph.nodes) {
    if (node.kind != TrackKind::Virtual) continue;
    const auto it = out.node_body.find(node.source);
    if (it == out.node_body.end())
      throw PreconditionError("adapt_to_scene: virtual '" + node.id + "' has no source body");
    SimBody v = scene.bodies[it->second];
    v.id = node.id;
    v.kind = TrackKind::Virtual;
    v.controlled_by.clear();
    scene.bodies.push_back(std::move(v));
    out.node_body[node.id] = static_cast<int>(scene.bodies.size()) - 1;
  }

  out.phase.assign(scene.bodies.size(), 0.0);
  out.gyration.assign(scene.bodies.size(), 0.05);
  for (std::size_t i = 0; i < scene.bodies.size(); ++i) {
    const Points3& shape = scene.bodies[i].shape_points;
    const Vec3 com = shape.rowwise().mean();
    out.gyration[i] =
        std::max(0.01, std::sqrt((shape.colwise() - com).squaredNorm() / shape.cols()));
  }

  // instantiate constraints
  Rng rng(Rng::mix(params.sample_seed, 0x5EEDULL));
  for (const auto& edge : graph.edges) {
    const HmsrNode* slave_node = graph.find_node(edge.slave);
    if (slave_node && is_hand(slave_node->kind)) continue;  // hands ride their grasped body
    for (std::size_t i = 0; i < edge.constraints.size(); ++i) {
      BoundConstraint bc;
      bc.c = edge.constraints[i];
      bc.master_body = out.node_body.at(edge.master);
      bc.slave_body = out.node_body.at(edge.slave);
      SimBody& master = scene.bodies[bc.master_body];
      SimBody& slave = scene.bodies[bc.slave_body];
      detail::rebind_indices(bc.c, master.canonical_points, slave.canonical_points);

      const FrameInstance fi = reconstruct_frame(bc.c.frame, master.world_points());
      if (bc.c.kind == ConstraintKind::Pose) {
        bc.sampled_target = detail::sample_pose_target(bc.c.pose, rng);
        bc.pose_anchors = farthest_point_indices(slave.shape_points, 4);
        const Vec3 p_now = fi.to_frame(slave.pose.p);
        bc.start_rotation = fi.basis.transpose() * slave.pose.R;
        if (i < edge.vmps.size()) {
          VectorXd new_start(6), new_goal(6);
          new_start << p_now, Vec3::Zero();
          new_goal << bc.sampled_target.p,
              so3_log(Mat3(bc.sampled_target.R * bc.start_rotation.transpose()));
          bc.vmp = edge.vmps[i].adapt(new_start, new_goal);
          bc.has_vmp = true;
        }
      } else {
        bc.slave_point = bc.c.keypoint_index;
        const Vec3 x_now = fi.to_frame(slave.pose.apply(slave.shape_points.col(bc.slave_point)));
        if (i < edge.vmps.size()) {
          const Vec3 goal = constraint_attractor_local(bc.c, edge.vmps[i].goal());
          bc.vmp = edge.vmps[i].adapt(x_now, goal);
          bc.has_vmp = true;
        }
      }
      out.constraints.push_back(std::move(bc));
    }
  }

  // driven bodies in master-first order
  std::map<int, bool> is_driven;
  for (const auto& bc : out.constraints) is_driven[bc.slave_body] = true;
  for (const auto& id : topological_order(graph)) {
    const auto it = out.node_body.find(id);
    if (it != out.node_body.end() && is_driven.count(it->second))
      out.driven.push_back(it->second);
  }

  // hands follow their grasped master rigidly
  for (const auto& edge : graph.edges) {
    const HmsrNode* slave_node = graph.find_node(edge.slave);
    if (!slave_node || !is_hand(slave_node->kind)) continue;
    AdaptedScene::Follower f;
    f.hand_body = out.node_body.at(edge.slave);
    f.master_body = out.node_body.at(edge.master);
    f.offset = scene.bodies[f.master_body].pose.inverse().compose(scene.bodies[f.hand_body].pose);
    out.followers.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forces
// ---------------------------------------------------------------------------

/// World-space attractor: VMP reference while the phase runs, blended into
/// the constraint manifold over the last 10% of phase.
inline Vec3 constraint_attractor_world(const BoundConstraint& bc, const FrameInstance& fi,
                                       const Vec3& x_world, double phase) {
  const Vec3 manifold = fi.to_world(constraint_attractor_local(bc.c, fi.to_frame(x_world)));
  if (!bc.has_vmp || phase >= 1.0) return manifold;
  const Vec3 vmp_ref = fi.to_world(bc.vmp.evaluate(phase).value.head<3>());
  if (phase < 0.9) return vmp_ref;
  const double a = (phase - 0.9) / 0.1;
  return (1.0 - a) * vmp_ref + a * manifold;
}

/// Spring-damper force on one keypoint.
inline Vec3 constraint_force(const BoundConstraint& bc, const FrameInstance& fi,
                             const Vec3& position, const Vec3& velocity, double phase,
                             const KacParams& params) {
  const Vec3 attractor = constraint_attractor_world(bc, fi, position, phase);
  return params.stiffness * (attractor - position) - params.effective_damping() * velocity;
}

/// Net force and torque (about `center`) of point forces.
inline std::pair<Vec3, Vec3> compose_body_wrench(const Points3& application_points,
                                                 const std::vector<Vec3>& forces,
                                                 const Vec3& center) {
  Vec3 f = Vec3::Zero(), tau = Vec3::Zero();
  for (std::size_t i = 0; i < forces.size(); ++i) {
    f += forces[i];
    tau += (Vec3(application_points.col(i)) - center).cross(forces[i]);
  }
  return {f, tau};
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

struct BodyState {
  std::string id;
  Vec3 position = Vec3::Zero();
  Vec3 rotvec = Vec3::Zero();
  double phase = 0.0;
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
};

struct StepEntry {
  double time = 0.0;
  std::vector<BodyState> bodies;
  std::vector<double> residuals;      // per constraint, meters
  std::vector<double> rot_residuals;  // per constraint, radians (pose kinds)
};

struct StepLog {
  std::vector<StepEntry> entries;
  bool converged = false;
  int steps = 0;
  json summary;
};

/// Final-target residual of one constraint in the current scene.
inline std::pair<double, double> constraint_residual(const BoundConstraint& bc,
                                                     const SimScene& scene) {
  const SimBody& master = scene.bodies[bc.master_body];
  const SimBody& slave = scene.bodies[bc.slave_body];
  const FrameInstance fi = reconstruct_frame(bc.c.frame, master.world_points());
  if (bc.c.kind == ConstraintKind::Pose) {
    const Vec3 p = fi.to_frame(slave.pose.p);
    const Mat3 R = fi.basis.transpose() * slave.pose.R;
    return {(p - bc.sampled_target.p).norm() * fi.scale,
            geodesic_angle(R, bc.sampled_target.R)};
  }
  const Vec3 local = fi.to_frame(slave.pose.apply(slave.shape_points.col(bc.slave_point)));
  return {constraint_residual_local(bc.c, local) * fi.scale, 0.0};
}

/// One controller step: slaves integrate after their masters so attractors
/// track moving master frames within the step.
inline StepEntry step(SimScene& scene, AdaptedScene& adapted, const KacParams& params,
                      int step_index = 0) {
  if (scene.dt <= 0) throw PreconditionError("step: dt must be positive");
  const double dt = scene.dt;
  const double d = params.effective_damping();

  StepEntry entry;
  entry.time = step_index * dt;
  entry.residuals.assign(adapted.constraints.size(), 0.0);
  entry.rot_residuals.assign(adapted.constraints.size(), 0.0);

  for (int body_idx : adapted.driven) {
    SimBody& body = scene.bodies[body_idx];
    const Vec3 com = body.pose.apply(body.shape_points.rowwise().mean());
    Vec3 f_total = Vec3::Zero(), tau_total = Vec3::Zero();
    double track_err = 0.0;
    int track_n = 0;
    const double phase = adapted.phase[body_idx];

    for (auto& bc : adapted.constraints) {
      if (bc.slave_body != body_idx) continue;
      const SimBody& master = scene.bodies[bc.master_body];
      const FrameInstance fi = reconstruct_frame(bc.c.frame, master.world_points());

      if (bc.c.kind == ConstraintKind::Pose) {
        // pose servo: springs on spread anchors toward the target pose,
        // following the task-space primitive through phase
        Pose target_frame;  // frame coords
        if (bc.has_vmp && phase < 1.0) {
          const VectorXd y = bc.vmp.evaluate(phase).value;
          target_frame.p = y.head<3>();
          target_frame.R = rodrigues(y.tail<3>()) * bc.start_rotation;
          if (phase >= 0.9) {
            const double a = (phase - 0.9) / 0.1;
            target_frame = Pose::interp(target_frame, bc.sampled_target, a);
          }
        } else {
          target_frame = bc.sampled_target;
        }
        const Pose target_world{fi.basis * target_frame.R,
                                fi.to_world(target_frame.p)};
        for (int anchor : bc.pose_anchors) {
          const Vec3 x = body.pose.apply(body.shape_points.col(anchor));
          const Vec3 goal = target_world.apply(body.shape_points.col(anchor));
          const Vec3 v = body.velocity + body.omega.cross(x - com);
          const Vec3 f = params.stiffness * (goal - x) - d * v;
          f_total += f;
          tau_total += (x - com).cross(f);
          track_err += (goal - x).norm();
          ++track_n;
        }
      } else {
        const Vec3 x = body.pose.apply(body.shape_points.col(bc.slave_point));
        const Vec3 v = body.velocity + body.omega.cross(x - com);
        const Vec3 attractor = constraint_attractor_world(bc, fi, x, phase);
        const Vec3 f = params.stiffness * (attractor - x) - d * v;
        f_total += f;
        tau_total += (x - com).cross(f);
        track_err += (attractor - x).norm();
        ++track_n;
      }
    }

    // admittance integration (semi-implicit Euler)
    body.velocity += dt * f_total / params.mass;
    if (body.velocity.norm() > params.max_speed)
      body.velocity *= params.max_speed / body.velocity.norm();
    body.pose.p += dt * body.velocity;

    const double inertia = params.mass * adapted.gyration[body_idx] * adapted.gyration[body_idx];
    body.omega += dt * params.torque_arm * tau_total / inertia;
    const double max_omega = params.max_speed / adapted.gyration[body_idx];
    if (body.omega.norm() > max_omega) body.omega *= max_omega / body.omega.norm();
    body.pose.R = rodrigues(body.omega * dt) * body.pose.R;
    if ((step_index & 127) == 0) body.pose.R = project_to_so3(body.pose.R);

    if (!body.pose.p.allFinite() || !body.velocity.allFinite())
      throw SimulationError("non-finite state for '" + body.id + "' at step " +
                            std::to_string(step_index));

    // time-driven phase, stalled while the tracking error is large
    if (track_n > 0 && track_err / track_n < params.stall_error)
      adapted.phase[body_idx] = std::min(1.0, phase + params.phase_rate * dt);

    BodyState st;
    st.id = body.id;
    st.position = body.pose.p;
    st.rotvec = so3_log(body.pose.R);
    st.phase = adapted.phase[body_idx];
    st.force = f_total;
    st.torque = tau_total;
    entry.bodies.push_back(std::move(st));
  }

  for (const auto& fol : adapted.followers) {
    SimBody& hand = scene.bodies[fol.hand_body];
    hand.pose = scene.bodies[fol.master_body].pose.compose(fol.offset);
  }

  // log non-driven bodies too (statics, virtuals, hands)
  for (std::size_t i = 0; i < scene.bodies.size(); ++i) {
    if (std::find(adapted.driven.begin(), adapted.driven.end(), static_cast<int>(i)) !=
        adapted.driven.end())
      continue;
    BodyState st;
    st.id = scene.bodies[i].id;
    st.position = scene.bodies[i].pose.p;
    st.rotvec = so3_log(scene.bodies[i].pose.R);
    entry.bodies.push_back(std::move(st));
  }

  for (std::size_t ci = 0; ci < adapted.constraints.size(); ++ci) {
    const auto [res, rot] = constraint_residual(adapted.constraints[ci], scene);
    entry.residuals[ci] = res;
    entry.rot_residuals[ci] = rot;
  }
  return entry;
}

// ---------------------------------------------------------------------------
// Reproduction driver
// ---------------------------------------------------------------------------

inline StepLog reproduce(const HmsrGraph& graph, SimScene scene, const KacParams& params,
                         double horizon_seconds, int log_stride = 1) {
  AdaptedScene adapted = adapt_to_scene(graph, scene, params);
  StepLog log;
  const int max_steps = static_cast<int>(std::ceil(horizon_seconds / scene.dt));
  const int hold_needed = std::max(1, static_cast<int>(std::ceil(params.conv_hold / scene.dt)));
  int hold = 0;

  StepEntry last_entry;
  for (int s = 0; s < max_steps; ++s) {
    last_entry = step(scene, adapted, params, s);
    if (s % log_stride == 0) log.entries.push_back(last_entry);
    log.steps = s + 1;

    bool all_ok = true;
    for (std::size_t ci = 0; ci < adapted.constraints.size(); ++ci) {
      const bool pose_kind = adapted.constraints[ci].c.kind == ConstraintKind::Pose;
      if (last_entry.residuals[ci] > params.conv_tol ||
          (pose_kind && last_entry.rot_residuals[ci] > params.conv_rot_tol)) {
        all_ok = false;
        break;
      }
    }
    hold = all_ok ? hold + 1 : 0;
    if (hold >= hold_needed) {
      log.converged = true;
      break;
    }
  }
  if (!log.entries.empty() && log.entries.back().time != last_entry.time && log.steps > 0)
    log.entries.push_back(last_entry);

  json verdict;
  verdict["converged"] = log.converged;
  json rows = json::array();
  for (std::size_t ci = 0; ci < adapted.constraints.size(); ++ci) {
    const auto& bc = adapted.constraints[ci];
    const bool pose_kind = bc.c.kind == ConstraintKind::Pose;
    const double res = log.steps > 0 ? last_entry.residuals[ci] : 1e9;
    const double rot = log.steps > 0 ? last_entry.rot_residuals[ci] : 1e9;
    json row;
    row["kind"] = to_string(bc.c.kind);
    row["master"] = scene.bodies[bc.master_body].id;
    row["slave"] = scene.bodies[bc.slave_body].id;
    row["keypoint_index"] = bc.c.keypoint_index;
    row["final_residual"] = res;
    if (pose_kind) row["final_rot_residual"] = rot;
    row["pass"] = res <= params.conv_tol && (!pose_kind || rot <= params.conv_rot_tol);
    rows.push_back(std::move(row));
  }
  verdict["constraints"] = std::move(rows);
  log.summary = std::move(verdict);
  return log;
}

// ---------------------------------------------------------------------------
// Step log file
// ---------------------------------------------------------------------------

inline json steplog_to_json(const StepLog& log) {
  json j;
  j["converged"] = log.converged;
  j["steps"] = log.steps;
  j["verdict"] = log.summary;
  json entries = json::array();
  for (const auto& e : log.entries) {
    json je;
    je["t"] = e.time;
    json bodies = json::array();
    for (const auto& b : e.bodies) {
      json jb;
      jb["id"] = b.id;
      jb["position"] = {b.position.x(), b.position.y(), b.position.z()};
      jb["rotvec"] = {b.rotvec.x(), b.rotvec.y(), b.rotvec.z()};
      jb["phase"] = b.phase;
      jb["force"] = {b.force.x(), b.force.y(), b.force.z()};
      jb["torque"] = {b.torque.x(), b.torque.y(), b.torque.z()};
      bodies.push_back(std::move(jb));
    }
    je["bodies"] = std::move(bodies);
    je["residuals"] = e.residuals;
    je["rot_residuals"] = e.rot_residuals;
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  return j;
}

inline void save_steplog(const StepLog& log, const std::filesystem::path& path) {
  detail::write_json_file(path, steplog_to_json(log));
}

}  // namespace bikvil
