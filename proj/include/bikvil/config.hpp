// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "bikvil/bikac.hpp"
#include "bikvil/hmsr.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Pipeline configuration: every tunable of the extraction/reproduction
// stack, loadable from a TOML file ([module] sections, key = value) and
// overridable per key. Unknown keys and out-of-range values are rejected with
// the owning module named.
// ---------------------------------------------------------------------------

struct PipelineConfig {
  struct Trajdata {
    int sg_window = 11;
    int sg_polyorder = 3;
    double outlier_z = 3.5;
    int resample_T = 0;  // 0 keeps the input length
  } trajdata;

  struct Saliency {
    double rel_thresh = 0.05;
    double contact_dist = 0.02;
    double firm_rate_thresh = 0.005;
    int min_duration = 5;
    int q_neighbors = 50;
  } saliency;

  struct Geomcon {
    double eps_abs = 0.01;
    double rho = 0.25;
    double eps_lin = 0.01;
    double eps_fit = 0.01;
    int max_degree = 4;
    double d_min = 0.03;
    int budget = 3;
    int n_frames = 12;
    int k_neighbors = 8;
  } geomcon;

  struct Hmsr {
    double end_segment_frac = 0.10;
    double sym_window_frac = 0.30;
    double sym_rate_thresh = 0.005;
  } hmsr;

  struct VmpCfg {
    int n_basis = 20;
    double ridge = 1e-8;
  } vmp;

  struct Bikac {
    double stiffness = 200.0;
    double damping = 0.0;  // 0 selects critical damping
    double mass = 1.0;
    double torque_arm = 1.0;
    double max_speed = 1.0;
    double phase_rate = 0.35;
    double stall_error = 0.03;
    double conv_tol = 0.005;
    double conv_rot_tol_deg = 3.0;
    double conv_hold = 0.5;
    double dt = 0.01;
    double horizon = 15.0;
  } bikac;

  void validate() const {
    auto fail = [](const std::string& module, const std::string& what) {
      throw SchemaError("config [" + module + "]: " + what);
    };
    if (trajdata.sg_window < 3 || trajdata.sg_window % 2 == 0)
      fail("trajdata", "sg_window must be odd and >= 3");
    if (trajdata.sg_polyorder < 0 || trajdata.sg_polyorder >= trajdata.sg_window)
      fail("trajdata", "sg_polyorder must be < sg_window");
    if (trajdata.outlier_z <= 0) fail("trajdata", "outlier_z must be > 0");
    if (saliency.rel_thresh <= 0) fail("saliency", "rel_thresh must be > 0");
    if (saliency.contact_dist <= 0) fail("saliency", "contact_dist must be > 0");
    if (saliency.firm_rate_thresh <= 0) fail("saliency", "firm_rate_thresh must be > 0");
    if (saliency.q_neighbors < 4) fail("saliency", "q_neighbors must be >= 4");
    if (geomcon.eps_abs <= 0 || geomcon.eps_lin <= 0 || geomcon.eps_fit <= 0)
      fail("geomcon", "tolerances must be > 0");
    if (geomcon.rho <= 0 || geomcon.rho >= 1) fail("geomcon", "rho must be in (0, 1)");
    if (geomcon.max_degree < 1) fail("geomcon", "max_degree must be >= 1");
    if (geomcon.budget < 1) fail("geomcon", "budget must be >= 1");
    if (geomcon.n_frames < 1) fail("geomcon", "n_frames must be >= 1");
    if (geomcon.k_neighbors < 3) fail("geomcon", "k_neighbors must be >= 3");
    if (hmsr.end_segment_frac <= 0 || hmsr.end_segment_frac > 1)
      fail("hmsr", "end_segment_frac must be in (0, 1]");
    if (hmsr.sym_window_frac <= 0 || hmsr.sym_window_frac > 1)
      fail("hmsr", "sym_window_frac must be in (0, 1]");
    if (vmp.n_basis < 2) fail("vmp", "n_basis must be >= 2");
    if (vmp.ridge < 0) fail("vmp", "ridge must be >= 0");
    if (bikac.stiffness <= 0 || bikac.mass <= 0) fail("bikac", "stiffness and mass must be > 0");
    if (bikac.dt <= 0) fail("bikac", "dt must be > 0");
    if (bikac.horizon < 0) fail("bikac", "horizon must be >= 0");
  }

  GraspDetectorConfig grasp_config() const {
    GraspDetectorConfig g;
    g.q_neighbors = saliency.q_neighbors;
    g.contact_dist = saliency.contact_dist;
    g.firm_rate_thresh = saliency.firm_rate_thresh;
    g.min_duration = saliency.min_duration;
    return g;
  }

  PairExtractConfig pair_config() const {
    PairExtractConfig p;
    p.tol.eps_abs = geomcon.eps_abs;
    p.tol.rho = geomcon.rho;
    p.tol.eps_lin = geomcon.eps_lin;
    p.tol.eps_fit = geomcon.eps_fit;
    p.tol.max_degree = geomcon.max_degree;
    p.n_frames = geomcon.n_frames;
    p.k_neighbors = geomcon.k_neighbors;
    p.budget = geomcon.budget;
    p.d_min = geomcon.d_min;
    return p;
  }

  HmsrConfig hmsr_config() const {
    HmsrConfig h;
    h.end_segment_frac = hmsr.end_segment_frac;
    h.sym_window_frac = hmsr.sym_window_frac;
    h.sym_rate_thresh = hmsr.sym_rate_thresh;
    h.pair = pair_config();
    h.vmp_n_basis = vmp.n_basis;
    h.vmp_ridge = vmp.ridge;
    return h;
  }

  KacParams kac_params(std::uint64_t sample_seed = 0) const {
    KacParams k;
    k.stiffness = bikac.stiffness;
    k.damping = bikac.damping;
    k.mass = bikac.mass;
    k.torque_arm = bikac.torque_arm;
    k.max_speed = bikac.max_speed;
    k.phase_rate = bikac.phase_rate;
    k.stall_error = bikac.stall_error;
    k.conv_tol = bikac.conv_tol;
    k.conv_rot_tol = bikac.conv_rot_tol_deg * M_PI / 180.0;
    k.conv_hold = bikac.conv_hold;
    k.sample_seed = sample_seed;
    return k;
  }

  json to_json() const {
    json j;
    j["trajdata"] = {{"sg_window", trajdata.sg_window},
                     {"sg_polyorder", trajdata.sg_polyorder},
                     {"outlier_z", trajdata.outlier_z},
                     {"resample_T", trajdata.resample_T}};
    j["saliency"] = {{"rel_thresh", saliency.rel_thresh},
                     {"contact_dist", saliency.contact_dist},
                     {"firm_rate_thresh", saliency.firm_rate_thresh},
                     {"min_duration", saliency.min_duration},
                     {"q_neighbors", saliency.q_neighbors}};
    j["geomcon"] = {{"eps_abs", geomcon.eps_abs},   {"rho", geomcon.rho},
                    {"eps_lin", geomcon.eps_lin},   {"eps_fit", geomcon.eps_fit},
                    {"max_degree", geomcon.max_degree}, {"d_min", geomcon.d_min},
                    {"budget", geomcon.budget},     {"n_frames", geomcon.n_frames},
                    {"k_neighbors", geomcon.k_neighbors}};
    j["hmsr"] = {{"end_segment_frac", hmsr.end_segment_frac},
                 {"sym_window_frac", hmsr.sym_window_frac},
                 {"sym_rate_thresh", hmsr.sym_rate_thresh}};
    j["vmp"] = {{"n_basis", vmp.n_basis}, {"ridge", vmp.ridge}};
    j["bikac"] = {{"stiffness", bikac.stiffness},
                  {"damping", bikac.damping},
                  {"mass", bikac.mass},
                  {"torque_arm", bikac.torque_arm},
                  {"max_speed", bikac.max_speed},
                  {"phase_rate", bikac.phase_rate},
                  {"stall_error", bikac.stall_error},
                  {"conv_tol", bikac.conv_tol},
                  {"conv_rot_tol_deg", bikac.conv_rot_tol_deg},
                  {"conv_hold", bikac.conv_hold},
                  {"dt", bikac.dt},
                  {"horizon", bikac.horizon}};
    return j;
  }

  /// Set one "section.key" to a value given as text. Throws SchemaError for
  /// unknown keys or unparsable values.
  void set_key(const std::string& dotted, const std::string& value) {
    const auto dot = dotted.find('.');
    if (dot == std::string::npos)
      throw SchemaError("config: key '" + dotted + "' must be section.key");
    const std::string section = dotted.substr(0, dot);
    const std::string key = dotted.substr(dot + 1);
    auto as_int = [&]() {
      try {
        std::size_t pos;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
      } catch (...) {
        throw SchemaError("config [" + section + "]: '" + key + "' expects an integer, got '" +
                          value + "'");
      }
    };
    auto as_double = [&]() {
      try {
        std::size_t pos;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
      } catch (...) {
        throw SchemaError("config [" + section + "]: '" + key + "' expects a number, got '" +
                          value + "'");
      }
    };
    auto unknown = [&]() {
      throw SchemaError("config [" + section + "]: unknown key '" + key + "'");
    };

    if (section == "trajdata") {
      if (key == "sg_window") trajdata.sg_window = as_int();
      else if (key == "sg_polyorder") trajdata.sg_polyorder = as_int();
      else if (key == "outlier_z") trajdata.outlier_z = as_double();
      else if (key == "resample_T") trajdata.resample_T = as_int();
      else unknown();
    } else if (section == "saliency") {
      if (key == "rel_thresh") saliency.rel_thresh = as_double();
      else if (key == "contact_dist") saliency.contact_dist = as_double();
      else if (key == "firm_rate_thresh") saliency.firm_rate_thresh = as_double();
      else if (key == "min_duration") saliency.min_duration = as_int();
      else if (key == "q_neighbors") saliency.q_neighbors = as_int();
      else unknown();
    } else if (section == "geomcon") {
      if (key == "eps_abs") geomcon.eps_abs = as_double();
      else if (key == "rho") geomcon.rho = as_double();
      else if (key == "eps_lin") geomcon.eps_lin = as_double();
      else if (key == "eps_fit") geomcon.eps_fit = as_double();
      else if (key == "max_degree") geomcon.max_degree = as_int();
      else if (key == "d_min") geomcon.d_min = as_double();
      else if (key == "budget") geomcon.budget = as_int();
      else if (key == "n_frames") geomcon.n_frames = as_int();
      else if (key == "k_neighbors") geomcon.k_neighbors = as_int();
      else unknown();
    } else if (section == "hmsr") {
      if (key == "end_segment_frac") hmsr.end_segment_frac = as_double();
      else if (key == "sym_window_frac") hmsr.sym_window_frac = as_double();
      else if (key == "sym_rate_thresh") hmsr.sym_rate_thresh = as_double();
      else unknown();
    } else if (section == "vmp") {
      if (key == "n_basis") vmp.n_basis = as_int();
      else if (key == "ridge") vmp.ridge = as_double();
      else unknown();
    } else if (section == "bikac") {
      if (key == "stiffness") bikac.stiffness = as_double();
      else if (key == "damping") bikac.damping = as_double();
      else if (key == "mass") bikac.mass = as_double();
      else if (key == "torque_arm") bikac.torque_arm = as_double();
      else if (key == "max_speed") bikac.max_speed = as_double();
      else if (key == "phase_rate") bikac.phase_rate = as_double();
      else if (key == "stall_error") bikac.stall_error = as_double();
      else if (key == "conv_tol") bikac.conv_tol = as_double();
      else if (key == "conv_rot_tol_deg") bikac.conv_rot_tol_deg = as_double();
      else if (key == "conv_hold") bikac.conv_hold = as_double();
      else if (key == "dt") bikac.dt = as_double();
      else if (key == "horizon") bikac.horizon = as_double();
      else unknown();
    } else {
      throw SchemaError("config: unknown module '" + section + "'");
    }
  }
};

// ---------------------------------------------------------------------------
// Minimal TOML reader covering this file's needs: [section] headers,
// key = value scalars (numbers, booleans, quoted strings), # comments.
// ---------------------------------------------------------------------------

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("config: cannot open '" + path.string() + "'");
  PipelineConfig cfg;
  std::string line, section;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw SchemaError("config: malformed section at line " + std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw SchemaError("config: expected key = value at line " + std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (section.empty())
      throw SchemaError("config: key '" + key + "' outside any [section]");
    cfg.set_key(section + "." + key, value);
  }
  cfg.validate();
  return cfg;
}

}  // namespace bikvil
