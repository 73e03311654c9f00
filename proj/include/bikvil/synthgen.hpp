// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bikvil/hmsr.hpp"
#include "bikvil/scene.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Seeded generators of ground-truth-labeled demonstration sets. Object shapes
// are convex point clouds; motions are scripted pose tracks realizing one of
// the task families; hands are rigid 21-point clusters that approach, snap
// onto a grasp pose, and then ride the grasped object.
// ---------------------------------------------------------------------------

enum class TaskFamily { Pour, PlaceOn, PlaceArbitrary, UncoordinatedPair, SymmetricTransport, Unimanual };

inline std::string to_string(TaskFamily t) {
  switch (t) {
    case TaskFamily::Pour: return "pour";
    case TaskFamily::PlaceOn: return "place_on";
    case TaskFamily::PlaceArbitrary: return "place_arbitrary";
    case TaskFamily::UncoordinatedPair: return "uncoordinated_pair";
    case TaskFamily::SymmetricTransport: return "symmetric_transport";
    case TaskFamily::Unimanual: return "unimanual";
  }
  return "pour";
}

inline TaskFamily task_from_string(const std::string& s) {
  if (s == "pour") return TaskFamily::Pour;
  if (s == "place_on") return TaskFamily::PlaceOn;
  if (s == "place_arbitrary") return TaskFamily::PlaceArbitrary;
  if (s == "uncoordinated_pair") return TaskFamily::UncoordinatedPair;
  if (s == "symmetric_transport") return TaskFamily::SymmetricTransport;
  if (s == "unimanual") return TaskFamily::Unimanual;
  throw PreconditionError("unknown task '" + s + "'");
}

struct ScenarioConfig {
  TaskFamily task = TaskFamily::Pour;
  int n_demos = 7;
  std::uint64_t seed = 0;
  double pose_jitter = 0.05;   // meters
  double shape_jitter = 0.10;  // relative
  double noise_sigma = 0.001;  // meters
  int T = 100;
  double dt = 0.05;

  void validate() const {
    if (n_demos < 2) throw PreconditionError("scenario: n_demos must be >= 2");
    if (T < 20) throw PreconditionError("scenario: T must be >= 20");
    if (pose_jitter < 0 || shape_jitter < 0 || noise_sigma < 0)
      throw PreconditionError("scenario: jitters must be non-negative");
  }
};

struct GroundTruth {
  struct Edge {
    std::string master;
    std::string slave;
    std::vector<std::string> kinds;
  };
  struct Grasp {
    std::string hand_id;
    std::string object_id;
    int t_begin = 0;
    int t_end = 0;
  };
  std::vector<Edge> edges;
  std::vector<std::string> statics;
  std::vector<std::string> virtuals;
  std::vector<Grasp> grasps;
  CoordinationKind coordination = CoordinationKind::UncoordinatedUnimanual;

  json to_json() const {
    json j;
    json es = json::array();
    for (const auto& e : edges)
      es.push_back({{"master", e.master}, {"slave", e.slave}, {"kinds", e.kinds}});
    j["edges"] = std::move(es);
    j["statics"] = statics;
    j["virtuals"] = virtuals;
    json gs = json::array();
    for (const auto& g : grasps)
      gs.push_back({{"hand_id", g.hand_id},
                    {"object_id", g.object_id},
                    {"interval", {g.t_begin, g.t_end}}});
    j["grasps"] = std::move(gs);
    j["coordination"] = to_string(coordination);
    return j;
  }

  static GroundTruth from_json(const json& j) {
    GroundTruth gt;
    for (const auto& e : j.at("edges")) {
      Edge edge;
      edge.master = e.at("master").get<std::string>();
      edge.slave = e.at("slave").get<std::string>();
      edge.kinds = e.at("kinds").get<std::vector<std::string>>();
      gt.edges.push_back(std::move(edge));
    }
    gt.statics = j.at("statics").get<std::vector<std::string>>();
    gt.virtuals = j.at("virtuals").get<std::vector<std::string>>();
    for (const auto& g : j.at("grasps")) {
      Grasp grasp;
      grasp.hand_id = g.at("hand_id").get<std::string>();
      grasp.object_id = g.at("object_id").get<std::string>();
      grasp.t_begin = g.at("interval")[0].get<int>();
      grasp.t_end = g.at("interval")[1].get<int>();
      gt.grasps.push_back(std::move(grasp));
    }
    gt.coordination = coordination_from_string(j.at("coordination").get<std::string>());
    return gt;
  }
};

inline void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
  detail::write_json_file(path, gt.to_json());
}

inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
  return GroundTruth::from_json(detail::load_json_file(path));
}

// ---------------------------------------------------------------------------
// Object catalogue
// ---------------------------------------------------------------------------

namespace synth {

constexpr int kCloudPoints = 64;

struct CategorySpec {
  std::string category;
  Vec3 semi;                   // ellipsoid semi-axes
  std::vector<Vec3> keypoints; // semantic points occupying the first indices
  int grasp_keypoint = -1;     // index of the grasp patch, -1 if not grasped
};

inline CategorySpec category_spec(const std::string& category) {
  auto make = [](std::string cat, Vec3 semi, std::vector<Vec3> kps, int grasp) {
    CategorySpec s;
    s.category = std::move(cat);
    s.semi = semi;
    s.keypoints = std::move(kps);
    s.grasp_keypoint = grasp;
    return s;
  };
  if (category == "cup")
    return make("cup", {0.04, 0.04, 0.05},
                {{0.035, 0, 0.05}, {0, 0, -0.05}, {-0.04, 0, 0}}, 2);
  if (category == "kettle")
    return make("kettle", {0.07, 0.05, 0.06},
                {{0.11, 0, 0.03}, {-0.05, 0, 0.07}, {0, 0, -0.06}, {-0.07, 0, 0}}, 3);
  if (category == "plate")
    return make("plate", {0.09, 0.09, 0.01}, {{0, 0, 0.01}, {-0.09, 0, 0}}, 1);
  if (category == "spoon")
    return make("spoon", {0.10, 0.015, 0.008}, {{0.10, 0, 0}, {-0.10, 0, 0}}, 1);
  if (category == "board")
    return make("board", {0.08, 0.08, 0.012}, {{0, 0, 0.012}}, -1);
  if (category == "banana")
    return make("banana", {0.09, 0.02, 0.02}, {{0, 0, -0.02}, {-0.09, 0, 0}}, 1);
  if (category == "tray")
    return make("tray", {0.15, 0.10, 0.012},
                {{0, 0, -0.012}, {-0.15, 0, 0}, {0.15, 0, 0}}, 1);
  if (category == "mat")
    return make("mat", {0.12, 0.12, 0.005}, {{0, 0, 0.005}}, -1);
  if (category == "coaster")
    return make("coaster", {0.05, 0.05, 0.008}, {{0, 0, 0.008}}, -1);
  throw PreconditionError("unknown category '" + category + "'");
}

/// Canonical cloud: semantic keypoints first, then seeded samples on the
/// ellipsoid surface.
inline Points3 canonical_cloud(const CategorySpec& spec, std::uint64_t set_seed) {
  std::uint64_t salt = 0;
  for (char c : spec.category) salt = salt * 131 + static_cast<unsigned char>(c);
  Rng rng(Rng::mix(set_seed, salt));
  Points3 pts(3, kCloudPoints);
  int i = 0;
  for (const auto& kp : spec.keypoints) pts.col(i++) = kp;
  for (; i < kCloudPoints; ++i) {
    const Vec3 dir = rng.unit_vector();
    pts.col(i) = dir.cwiseProduct(spec.semi) * rng.uniform(0.97, 1.0);
  }
  return pts;
}

/// MANO-style 21-keypoint rigid hand: wrist at the origin, fingers along +x.
inline Points3 canonical_hand() {
  Points3 pts(3, kHandKeypointCount);
  const double p[21][3] = {
      {0, 0, 0},
      {0.030, 0.035, 0.005},  {0.055, 0.050, 0.010}, {0.075, 0.060, 0.012}, {0.090, 0.070, 0.012},
      {0.085, 0.030, 0.002},  {0.120, 0.032, 0.005}, {0.145, 0.033, 0.006}, {0.165, 0.034, 0.006},
      {0.090, 0.000, 0.000},  {0.125, 0.000, 0.004}, {0.150, 0.000, 0.006}, {0.175, 0.000, 0.006},
      {0.085, -0.025, 0.002}, {0.115, -0.027, 0.005}, {0.140, -0.029, 0.006}, {0.160, -0.030, 0.006},
      {0.075, -0.050, 0.004}, {0.100, -0.053, 0.006}, {0.120, -0.056, 0.007}, {0.135, -0.058, 0.007}};
  for (int i = 0; i < kHandKeypointCount; ++i) pts.col(i) = Vec3(p[i][0], p[i][1], p[i][2]);
  return pts;
}

constexpr double kFingerReach = 0.175;  // wrist-to-middle-fingertip, canonical hand

struct PoseKey {
  double u;  // normalized time
  Pose pose;
};

inline double min_jerk(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

inline Pose eval_keys(const std::vector<PoseKey>& keys, double u) {
  if (u <= keys.front().u) return keys.front().pose;
  if (u >= keys.back().u) return keys.back().pose;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (u <= keys[i + 1].u) {
      const double span = keys[i + 1].u - keys[i].u;
      const double s = span > 0 ? min_jerk((u - keys[i].u) / span) : 1.0;
      return Pose::interp(keys[i].pose, keys[i + 1].pose, s);
    }
  }
  return keys.back().pose;
}

struct ObjectScript {
  std::string id;
  CategorySpec spec;
  Vec3 scale = Vec3::Ones();  // per-axis instance scale
  std::vector<PoseKey> keys;
  Points3 canonical;  // shared canonical cloud
  Points3 shape() const { return scale.asDiagonal() * canonical; }
  Vec3 keypoint_scaled(int i) const { return scale.cwiseProduct(spec.keypoints[i]); }
};

struct HandScript {
  std::string hand_id;
  TrackKind kind = TrackKind::HandRight;
  std::string object_id;
  Pose grasp;  // wrist pose in the grasped object's body frame
  double u_grasp = 0.1;
  double hand_scale = 1.0;
};

/// Wrist pose placing the middle fingertip 8 mm outside the grasp keypoint,
/// approaching along the object-frame axis the keypoint sits on.
inline Pose grasp_pose_at(const ObjectScript& obj, int keypoint, double hand_scale, Rng& rng) {
  const Vec3 kp = obj.keypoint_scaled(keypoint);
  const double reach = kFingerReach * hand_scale + 0.008;
  Pose g;
  if (kp.x() >= 0) {  // +x grip: approach pointing toward -x
    g.R = rot_z(M_PI);
    g.p = kp + Vec3(reach, 0, 0);
  } else {
    g.R = Mat3::Identity();
    g.p = kp - Vec3(reach, 0, 0);
  }
  g.p += rng.in_ball(0.003);
  g.R = rodrigues(rng.unit_vector() * rng.uniform(0.0, 1.0 * M_PI / 180.0)) * g.R;
  return g;
}

inline Pose grasp_pose(const ObjectScript& obj, double hand_scale, Rng& rng) {
  if (obj.spec.grasp_keypoint < 0) throw PreconditionError("grasp_pose: category not graspable");
  return grasp_pose_at(obj, obj.spec.grasp_keypoint, hand_scale, rng);
}

struct DemoScript {
  std::vector<ObjectScript> objects;
  std::vector<HandScript> hands;
};

inline Pose pull_back(const Pose& grasp_world, double dist) {
  return {grasp_world.R, grasp_world.p - grasp_world.R.col(0) * dist};
}

/// Render a demo script into tracks with i.i.d. Gaussian point noise.
inline Demonstration render_demo(const DemoScript& script, const std::string& demo_id, int T,
                                 double dt, double noise_sigma, Rng& rng) {
  Demonstration demo;
  demo.demo_id = demo_id;
  demo.dt = dt;

  std::map<std::string, const ObjectScript*> by_id;
  for (const auto& obj : script.objects) by_id[obj.id] = &obj;

  for (const auto& obj : script.objects) {
    ObjectTrack tr;
    tr.object_id = obj.id;
    tr.category = obj.spec.category;
    tr.kind = TrackKind::RigidObject;
    tr.canonical_points = obj.canonical;
    const Points3 shape = obj.shape();
    tr.frames.reserve(T);
    for (int t = 0; t < T; ++t) {
      const double u = static_cast<double>(t) / (T - 1);
      Points3 pts = eval_keys(obj.keys, u).apply_cloud(shape);
      for (int i = 0; i < pts.cols(); ++i) pts.col(i) += rng.normal3(noise_sigma);
      tr.frames.push_back(std::move(pts));
    }
    demo.tracks.push_back(std::move(tr));
  }

  const Points3 hand_canon = canonical_hand();
  for (const auto& hand : script.hands) {
    const ObjectScript* obj = by_id.at(hand.object_id);
    ObjectTrack tr;
    tr.object_id = hand.hand_id;
    tr.category = hand.kind == TrackKind::HandLeft ? "hand_left" : "hand_right";
    tr.kind = hand.kind;
    tr.canonical_points = hand_canon;
    const Points3 shape = hand_canon * hand.hand_scale;
    const double u_pre = hand.u_grasp - 1.5 / (T - 1);
    const Pose grasp_world = eval_keys(obj->keys, hand.u_grasp).compose(hand.grasp);
    const Pose near = pull_back(grasp_world, 0.03);
    const Pose far = pull_back(grasp_world, 0.25);
    tr.frames.reserve(T);
    for (int t = 0; t < T; ++t) {
      const double u = static_cast<double>(t) / (T - 1);
      Pose hp;
      if (u >= hand.u_grasp) {
        hp = eval_keys(obj->keys, u).compose(hand.grasp);
      } else if (u <= 0.02) {
        hp = far;
      } else if (u >= u_pre) {
        hp = near;
      } else {
        hp = Pose::interp(far, near, min_jerk((u - 0.02) / (u_pre - 0.02)));
      }
      Points3 pts = hp.apply_cloud(shape);
      for (int i = 0; i < pts.cols(); ++i) pts.col(i) += rng.normal3(noise_sigma);
      tr.frames.push_back(std::move(pts));
    }
    demo.tracks.push_back(std::move(tr));
  }
  return demo;
}

inline Vec3 axis_scales(Rng& rng, double shape_jitter) {
  return Vec3(1 + shape_jitter * rng.uniform(-1, 1), 1 + shape_jitter * rng.uniform(-1, 1),
              1 + shape_jitter * rng.uniform(-1, 1));
}

inline ObjectScript make_object(const std::string& id, const std::string& category,
                                std::uint64_t set_seed, Rng& rng, double shape_jitter) {
  ObjectScript obj;
  obj.id = id;
  obj.spec = category_spec(category);
  obj.canonical = canonical_cloud(obj.spec, set_seed);
  obj.scale = axis_scales(rng, shape_jitter);
  return obj;
}

inline int grasp_frame(double u_grasp, int T) {
  return static_cast<int>(std::ceil(u_grasp * (T - 1) - 1e-9));
}

}  // namespace synth

// ---------------------------------------------------------------------------
// Scenario scripts
// ---------------------------------------------------------------------------

namespace synth {

/// Uniform jitter over a centered box; wide axis ranges keep unconstrained
/// relative poses far from the constraint tolerances.
inline Vec3 jitter_box(Rng& rng, double sx, double sy, double sz) {
  return {rng.uniform(-sx, sx), rng.uniform(-sy, sy), rng.uniform(-sz, sz)};
}

inline HandScript make_hand(const std::string& hand_id, TrackKind kind, const ObjectScript& obj,
                            int keypoint, double u_grasp, Rng& rng) {
  HandScript h;
  h.hand_id = hand_id;
  h.kind = kind;
  h.object_id = obj.id;
  h.u_grasp = u_grasp;
  h.hand_scale = 1 + 0.05 * rng.uniform(-1, 1);
  h.grasp = keypoint < 0 ? grasp_pose(obj, h.hand_scale, rng)
                         : grasp_pose_at(obj, keypoint, h.hand_scale, rng);
  return h;
}

/// Per-demo script builder; demo-local randomness comes exclusively from the
/// demo stream so prefixes are stable when n_demos grows.
inline DemoScript build_script(const ScenarioConfig& cfg, int demo_index, Rng& rng) {
  DemoScript script;
  const double pj = cfg.pose_jitter;
  auto deg = [](double d) { return d * M_PI / 180.0; };

  switch (cfg.task) {
    case TaskFamily::Pour: {
      ObjectScript cup = make_object("cup", "cup", cfg.seed, rng, cfg.shape_jitter);
      ObjectScript kettle = make_object("kettle", "kettle", cfg.seed, rng, cfg.shape_jitter);

      Pose cup_start{rot_z(rng.uniform(-deg(15), deg(15))),
                     Vec3(0.25, -0.18, 0.10) + jitter_box(rng, pj, pj, pj)};
      // the pour happens anywhere in a broad workspace region
      Pose cup_goal{cup_start.R, Vec3(0.0, 0.0, 0.14) + jitter_box(rng, 0.08, 0.08, 0.08)};
      Pose kettle_start{rot_z(rng.uniform(-deg(15), deg(15))),
                        Vec3(-0.30, 0.18, 0.12) + jitter_box(rng, 0.08, 0.08, 0.08)};

      // Kettle target relative to the cup: spout tip meets the rim, body
      // tilted about the rim axis by a per-demo pouring angle.
      const Vec3 rim = cup.keypoint_scaled(0);
      const Vec3 spout = kettle.keypoint_scaled(0);
      const double tilt = rng.uniform(deg(20), deg(110));
      Pose rel_base{Mat3::Identity(), rim - spout};
      Pose tilt_about_rim{rot_y(tilt), rim - rot_y(tilt) * rim};
      const Pose kettle_goal = cup_goal.compose(tilt_about_rim.compose(rel_base));

      cup.keys = {{0.0, cup_start}, {0.15, cup_start}, {0.45, cup_goal}, {1.0, cup_goal}};
      kettle.keys = {{0.0, kettle_start}, {0.50, kettle_start}, {0.85, kettle_goal}, {1.0, kettle_goal}};

      script.hands = {make_hand("hand_right", TrackKind::HandRight, cup, -1, 0.10, rng),
                      make_hand("hand_left", TrackKind::HandLeft, kettle, -1, 0.10, rng)};
      script.objects = {std::move(cup), std::move(kettle)};
      break;
    }

    case TaskFamily::PlaceOn:
    case TaskFamily::PlaceArbitrary: {
      ObjectScript plate = make_object("plate", "plate", cfg.seed, rng, cfg.shape_jitter);
      ObjectScript spoon = make_object("spoon", "spoon", cfg.seed, rng, cfg.shape_jitter);

      const double rest_z = plate.scale.z() * plate.spec.semi.z();
      // the first three demos start the plate on the support plane; later
      // demos lift it from varied heights
      const double lift = demo_index < 3 ? 0.0 : rng.uniform(0.05, 0.22);
      Pose plate_start{rot_z(rng.uniform(-deg(30), deg(30))),
                       Vec3(-0.22, -0.12, rest_z + lift) + jitter_box(rng, pj, pj, 0)};
      Pose spoon_start{rot_z(rng.uniform(-deg(30), deg(30))),
                       Vec3(0.18, 0.14, 0.18) + jitter_box(rng, pj, pj, 0.08)};

      const double ang = rng.uniform(0, 2 * M_PI);
      const double rad = 0.05 * std::sqrt(rng.uniform(0, 1));
      Pose plate_goal{plate_start.R,
                      Vec3(spoon_start.p.x() + rad * std::cos(ang),
                           spoon_start.p.y() + rad * std::sin(ang), rest_z)};

      // spoon lands tip-first on the plate: at the center for place_on, at a
      // uniformly random plate position otherwise
      Vec3 land_local = plate.keypoint_scaled(0);
      if (cfg.task == TaskFamily::PlaceArbitrary) {
        const double a2 = rng.uniform(0, 2 * M_PI);
        const double r2 = 0.055 * std::sqrt(rng.uniform(0, 1));
        land_local += Vec3(r2 * std::cos(a2), r2 * std::sin(a2), 0);
      }
      const Vec3 land_world = plate_goal.apply(land_local);
      Pose spoon_goal;
      spoon_goal.R = rot_z(rng.uniform(-deg(30), deg(30)));
      spoon_goal.p = land_world - spoon_goal.R * spoon.keypoint_scaled(0);

      plate.keys = {{0.0, plate_start}, {0.15, plate_start}, {0.45, plate_goal}, {1.0, plate_goal}};
      spoon.keys = {{0.0, spoon_start}, {0.50, spoon_start}, {0.80, spoon_goal}, {1.0, spoon_goal}};

      script.hands = {make_hand("hand_right", TrackKind::HandRight, plate, -1, 0.08, rng),
                      make_hand("hand_left", TrackKind::HandLeft, spoon, -1, 0.08, rng)};
      script.objects = {std::move(plate), std::move(spoon)};
      break;
    }

    case TaskFamily::UncoordinatedPair: {
      ObjectScript board_a = make_object("board_a", "board", cfg.seed, rng, cfg.shape_jitter);
      ObjectScript board_b = make_object("board_b", "board", cfg.seed, rng, cfg.shape_jitter);
      ObjectScript spoon = make_object("spoon", "spoon", cfg.seed, rng, cfg.shape_jitter);
      ObjectScript banana = make_object("banana", "banana", cfg.seed, rng, cfg.shape_jitter);

      Pose pa{rot_z(rng.uniform(-deg(20), deg(20))),
              Vec3(-0.25, 0.22, 0.08) + jitter_box(rng, pj, pj, 0.08)};
      Pose pb{rot_z(rng.uniform(-deg(20), deg(20))),
              Vec3(0.25, -0.22, 0.08) + jitter_box(rng, pj, pj, 0.08)};
      board_a.keys = {{0.0, pa}, {1.0, pa}};
      board_b.keys = {{0.0, pb}, {1.0, pb}};

      Pose spoon_start{rot_z(rng.uniform(-deg(30), deg(30))),
                       Vec3(0.02, 0.28, 0.20) + jitter_box(rng, pj, pj, 0.08)};
      Pose spoon_goal;
      spoon_goal.R = rot_z(rng.uniform(-deg(30), deg(30)));
      spoon_goal.p = pa.apply(board_a.keypoint_scaled(0)) - spoon_goal.R * spoon.keypoint_scaled(0);
      spoon.keys = {{0.0, spoon_start}, {0.20, spoon_start}, {0.55, spoon_goal}, {1.0, spoon_goal}};

      Pose banana_start{rot_z(rng.uniform(-deg(30), deg(30))),
                        Vec3(0.02, -0.30, 0.20) + jitter_box(rng, pj, pj, 0.08)};
      const double a2 = rng.uniform(0, 2 * M_PI);
      const double r2 = 0.05 * std::sqrt(rng.uniform(0, 1));
      const Vec3 land =
          pb.apply(board_b.keypoint_scaled(0) + Vec3(r2 * std::cos(a2), r2 * std::sin(a2), 0));
      Pose banana_goal;
      banana_goal.R = rot_z(rng.uniform(-deg(30), deg(30)));
      banana_goal.p = land - banana_goal.R * banana.keypoint_scaled(0);
      banana.keys = {{0.0, banana_start}, {0.30, banana_start}, {0.65, banana_goal}, {1.0, banana_goal}};

      script.hands = {make_hand("hand_left", TrackKind::HandLeft, spoon, -1, 0.08, rng),
                      make_hand("hand_right", TrackKind::HandRight, banana, -1, 0.08, rng)};
      script.objects = {std::move(board_a), std::move(board_b), std::move(spoon), std::move(banana)};
      break;
    }

    case TaskFamily::SymmetricTransport: {
      ObjectScript mat = make_object("mat", "mat", cfg.seed, rng, cfg.shape_jitter);
      ObjectScript tray = make_object("tray", "tray", cfg.seed, rng, cfg.shape_jitter);

      Pose mat_pose{rot_z(rng.uniform(-deg(20), deg(20))),
                    Vec3(0, 0, 0.05) + jitter_box(rng, pj, pj, 0.05)};
      mat.keys = {{0.0, mat_pose}, {1.0, mat_pose}};

      Pose tray_start{rot_z(rng.uniform(-deg(15), deg(15))),
                      Vec3(-0.32, -0.25, 0.18) + jitter_box(rng, pj, pj, 0.08)};
      Pose tray_goal;
      tray_goal.R = rot_z(rng.uniform(-deg(10), deg(10))) * mat_pose.R;
      tray_goal.p = mat_pose.apply(mat.keypoint_scaled(0)) - tray_goal.R * tray.keypoint_scaled(0);
      tray.keys = {{0.0, tray_start}, {0.20, tray_start}, {0.70, tray_goal}, {1.0, tray_goal}};

      script.hands = {make_hand("hand_left", TrackKind::HandLeft, tray, 1, 0.08, rng),
                      make_hand("hand_right", TrackKind::HandRight, tray, 2, 0.08, rng)};
      script.objects = {std::move(mat), std::move(tray)};
      break;
    }

    case TaskFamily::Unimanual: {
      ObjectScript coaster = make_object("coaster", "coaster", cfg.seed, rng, cfg.shape_jitter);
      ObjectScript cup = make_object("cup", "cup", cfg.seed, rng, cfg.shape_jitter);

      Pose cp{rot_z(rng.uniform(-deg(20), deg(20))),
              Vec3(0.05, 0, 0.05) + jitter_box(rng, pj, pj, 0.05)};
      coaster.keys = {{0.0, cp}, {1.0, cp}};

      Pose cup_start{rot_z(rng.uniform(-deg(15), deg(15))),
                     Vec3(0.32, -0.22, 0.16) + jitter_box(rng, pj, pj, 0.08)};
      Pose cup_goal;
      cup_goal.R = cup_start.R;
      cup_goal.p = cp.apply(coaster.keypoint_scaled(0)) - cup_goal.R * cup.keypoint_scaled(1);
      cup.keys = {{0.0, cup_start}, {0.20, cup_start}, {0.60, cup_goal}, {1.0, cup_goal}};

      script.hands = {make_hand("hand_right", TrackKind::HandRight, cup, -1, 0.08, rng)};
      script.objects = {std::move(coaster), std::move(cup)};
      break;
    }
  }
  return script;
}

inline GroundTruth ground_truth_for(const ScenarioConfig& cfg) {
  GroundTruth gt;
  const int t_g10 = grasp_frame(0.10, cfg.T);
  const int t_g08 = grasp_frame(0.08, cfg.T);
  const int last = cfg.T - 1;
  switch (cfg.task) {
    case TaskFamily::Pour:
      gt.edges = {{"cup", "kettle", {"p2p"}},
                  {"vcup", "cup", {"pose"}},
                  {"cup", "hand_right", {"p2p"}},
                  {"kettle", "hand_left", {"p2p"}}};
      gt.virtuals = {"vcup"};
      gt.grasps = {{"hand_right", "cup", t_g10, last}, {"hand_left", "kettle", t_g10, last}};
      gt.coordination = CoordinationKind::LooselyCoupled;
      break;
    case TaskFamily::PlaceOn:
    case TaskFamily::PlaceArbitrary: {
      const bool arbitrary = cfg.task == TaskFamily::PlaceArbitrary;
      const std::vector<std::string> spoon_kinds = arbitrary ? std::vector<std::string>{"p2P"}
                                                             : std::vector<std::string>{"p2p"};
      if (cfg.n_demos <= 3) {
        gt.edges = {{"plate", "spoon", spoon_kinds},
                    {"vplate", "plate", {"p2P"}},
                    {"vspoon", "spoon", {"p2P"}},
                    {"spoon", "hand_left", {"p2p"}},
                    {"plate", "hand_right", {"p2p"}}};
        gt.virtuals = {"vplate", "vspoon"};
      } else {
        gt.edges = {{"plate", "spoon", spoon_kinds},
                    {"vplate", "plate", {"pose"}},
                    {"spoon", "hand_left", {"p2p"}},
                    {"plate", "hand_right", {"p2p"}}};
        gt.virtuals = {"vplate"};
      }
      gt.grasps = {{"hand_left", "spoon", t_g08, last}, {"hand_right", "plate", t_g08, last}};
      gt.coordination = CoordinationKind::LooselyCoupled;
      break;
    }
    case TaskFamily::UncoordinatedPair:
      gt.edges = {{"board_a", "spoon", {"p2p"}},
                  {"board_b", "banana", {"p2P"}},
                  {"spoon", "hand_left", {"p2p"}},
                  {"banana", "hand_right", {"p2p"}}};
      gt.statics = {"board_a", "board_b"};
      gt.grasps = {{"hand_left", "spoon", t_g08, last}, {"hand_right", "banana", t_g08, last}};
      gt.coordination = CoordinationKind::UncoordinatedBimanual;
      break;
    case TaskFamily::SymmetricTransport:
      gt.edges = {{"mat", "tray", {"p2p"}},
                  {"tray", "hand_left", {"p2p"}},
                  {"tray", "hand_right", {"p2p"}}};
      gt.statics = {"mat"};
      gt.grasps = {{"hand_left", "tray", t_g08, last}, {"hand_right", "tray", t_g08, last}};
      gt.coordination = CoordinationKind::TightlyCoupledSymmetric;
      break;
    case TaskFamily::Unimanual:
      gt.edges = {{"coaster", "cup", {"p2p"}}, {"cup", "hand_right", {"p2p"}}};
      gt.statics = {"coaster"};
      gt.grasps = {{"hand_right", "cup", t_g08, last}};
      gt.coordination = CoordinationKind::UncoordinatedUnimanual;
      break;
  }
  return gt;
}

}  // namespace synth

// ---------------------------------------------------------------------------
// Public generator entry points
// ---------------------------------------------------------------------------

inline std::pair<DemonstrationSet, GroundTruth> generate(const ScenarioConfig& cfg) {
  cfg.validate();
  DemonstrationSet set;
  set.task_name = to_string(cfg.task);
  for (int d = 0; d < cfg.n_demos; ++d) {
    Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(d) + 1));
    const synth::DemoScript script = synth::build_script(cfg, d, rng);
    char demo_id[32];
    std::snprintf(demo_id, sizeof demo_id, "demo_%03d", d);
    set.demos.push_back(synth::render_demo(script, demo_id, cfg.T, cfg.dt, cfg.noise_sigma, rng));
  }
  std::set<std::string> cats;
  for (const auto& tr : set.demos.front().tracks) cats.insert(tr.category);
  set.categories.assign(cats.begin(), cats.end());
  set.validate();
  return {std::move(set), synth::ground_truth_for(cfg)};
}

/// Novel scene for reproduction: fresh instance shapes (scale shifted by at
/// least shape_jitter/3) and fresh start poses; hands already at their grasp
/// poses with the grasped body marked controlled_by.
inline SimScene generate_novel_scene(const ScenarioConfig& cfg, std::uint64_t scene_seed) {
  cfg.validate();
  Rng rng(Rng::mix(cfg.seed, 0xC0FFEEULL + scene_seed));
  synth::DemoScript script = synth::build_script(cfg, /*demo_index=*/4, rng);

  SimScene scene;
  scene.task = to_string(cfg.task);
  scene.dt = 0.01;
  std::map<std::string, int> body_index;
  for (auto& obj : script.objects) {
    SimBody b;
    b.id = obj.id;
    b.category = obj.spec.category;
    b.kind = TrackKind::RigidObject;
    b.canonical_points = obj.canonical;
    // isotropic out-of-distribution rescale
    const double mag = rng.uniform(cfg.shape_jitter / 3.0, std::max(cfg.shape_jitter, 1e-9));
    const double s = 1.0 + (rng.uniform() < 0.5 ? -mag : mag);
    obj.scale = Vec3::Constant(s);
    b.shape_points = obj.shape();
    b.pose = obj.keys.front().pose;
    scene.bodies.push_back(std::move(b));
    body_index[obj.id] = static_cast<int>(scene.bodies.size()) - 1;
  }
  for (const auto& hand : script.hands) {
    const synth::ObjectScript* obj = nullptr;
    for (const auto& o : script.objects)
      if (o.id == hand.object_id) obj = &o;
    SimBody b;
    b.id = hand.hand_id;
    b.category = hand.kind == TrackKind::HandLeft ? "hand_left" : "hand_right";
    b.kind = hand.kind;
    b.canonical_points = synth::canonical_hand();
    b.shape_points = b.canonical_points * hand.hand_scale;
    b.pose = obj->keys.front().pose.compose(hand.grasp);
    scene.bodies.push_back(std::move(b));
    scene.bodies[body_index[hand.object_id]].controlled_by = hand.hand_id;
  }
  scene.validate();
  return scene;
}

}  // namespace bikvil
