// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "bikvil/trajdata.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Kinematic scene: rigid bodies with dense point correspondences, stepped by
// the admittance controller during reproduction.
// ---------------------------------------------------------------------------

struct SimBody {
  std::string id;
  std::string category;
  TrackKind kind = TrackKind::RigidObject;
  Points3 canonical_points;  // category canonical space
  Points3 shape_points;      // instance geometry in the body frame
  Pose pose;
  std::string controlled_by;  // hand id when grasped

  // controller state
  Vec3 velocity = Vec3::Zero();
  Vec3 omega = Vec3::Zero();

  Points3 world_points() const { return pose.apply_cloud(shape_points); }

  void validate() const {
    if (shape_points.cols() != canonical_points.cols())
      throw SchemaError("body '" + id + "': shape/canonical point count mismatch");
    if (!all_finite(shape_points) || !all_finite(canonical_points) || !pose.p.allFinite())
      throw DataError("body '" + id + "': non-finite geometry");
    if ((pose.R.transpose() * pose.R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        pose.R.determinant() < 0)
      throw DataError("body '" + id + "': rotation not orthonormal");
  }
};

struct SimScene {
  std::string task;
  double dt = 0.01;
  std::vector<SimBody> bodies;

  const SimBody* find_body(const std::string& id) const {
    for (const auto& b : bodies)
      if (b.id == id) return &b;
    return nullptr;
  }
  SimBody* find_body(const std::string& id) {
    for (auto& b : bodies)
      if (b.id == id) return &b;
    return nullptr;
  }
  const SimBody* find_category(const std::string& category) const {
    for (const auto& b : bodies)
      if (b.category == category && b.kind == TrackKind::RigidObject) return &b;
    return nullptr;
  }

  void validate() const {
    if (dt <= 0) throw SchemaError("scene: dt must be positive");
    for (const auto& b : bodies) b.validate();
  }
};

inline json scene_to_json(const SimScene& scene) {
  json j;
  j["task"] = scene.task;
  j["dt"] = scene.dt;
  json bodies = json::array();
  for (const auto& b : scene.bodies) {
    json body;
    body["id"] = b.id;
    body["category"] = b.category;
    body["kind"] = to_string(b.kind);
    body["canonical_points"] = detail::points_to_json(b.canonical_points);
    body["shape_points"] = detail::points_to_json(b.shape_points);
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({b.pose.R(r, 0), b.pose.R(r, 1), b.pose.R(r, 2)});
    body["rotation"] = std::move(rot);
    body["translation"] = {b.pose.p.x(), b.pose.p.y(), b.pose.p.z()};
    if (!b.controlled_by.empty()) body["controlled_by"] = b.controlled_by;
    bodies.push_back(std::move(body));
  }
  j["bodies"] = std::move(bodies);
  return j;
}

inline SimScene scene_from_json(const json& j) {
  SimScene scene;
  scene.task = j.value("task", std::string());
  scene.dt = j.at("dt").get<double>();
  for (const auto& body : j.at("bodies")) {
    SimBody b;
    b.id = body.at("id").get<std::string>();
    b.category = body.at("category").get<std::string>();
    b.kind = track_kind_from_string(body.at("kind").get<std::string>());
    b.canonical_points = detail::points_from_json(body.at("canonical_points"), "body " + b.id);
    b.shape_points = detail::points_from_json(body.at("shape_points"), "body " + b.id);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) b.pose.R(r, c) = body.at("rotation")[r][c].get<double>();
    const auto& t = body.at("translation");
    b.pose.p = Vec3(t[0], t[1], t[2]);
    b.controlled_by = body.value("controlled_by", std::string());
    scene.bodies.push_back(std::move(b));
  }
  scene.validate();
  return scene;
}

inline void save_scene(const SimScene& scene, const std::filesystem::path& path) {
  detail::write_json_file(path, scene_to_json(scene));
}

inline SimScene load_scene(const std::filesystem::path& path) {
  return scene_from_json(detail::load_json_file(path));
}

}  // namespace bikvil
