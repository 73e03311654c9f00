// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>
#include <vector>

#include "bikvil/config.hpp"
#include "bikvil/synthgen.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Full extraction pipeline: preprocessing, saliency, virtual objects, grasp
// detection, candidate graph, truncation (with VMP fitting), coordination.
// ---------------------------------------------------------------------------

struct ExtractionResult {
  HmsrGraph graph;
  SaliencyReport saliency;
  std::vector<AggregatedGrasp> grasps;
  std::vector<PairRatios> ratios;
  json report;
};

inline ExtractionResult run_extraction(DemonstrationSet set, const PipelineConfig& cfg) {
  cfg.validate();
  set.validate();

  // preprocessing: phase alignment, smoothing, outlier rejection
  if (cfg.trajdata.resample_T > 0) {
    for (auto& demo : set.demos)
      if (demo.num_frames() != cfg.trajdata.resample_T)
        demo = resample_time(demo, cfg.trajdata.resample_T);
  } else {
    int T_max = 0;
    for (const auto& demo : set.demos) T_max = std::max(T_max, demo.num_frames());
    for (auto& demo : set.demos)
      if (demo.num_frames() != T_max) demo = resample_time(demo, T_max);
  }
  for (auto& demo : set.demos)
    if (demo.num_frames() >= cfg.trajdata.sg_window)
      demo = savitzky_golay_smooth(demo, cfg.trajdata.sg_window, cfg.trajdata.sg_polyorder);
  set = reject_outliers(set, cfg.trajdata.outlier_z);

  ExtractionResult res;
  res.saliency = motion_saliency(set, cfg.saliency.rel_thresh);
  set = create_virtual_objects(set, res.saliency);
  res.grasps = detect_grasps_set(set, cfg.grasp_config());

  const HmsrConfig hcfg = cfg.hmsr_config();
  res.ratios = compute_all_pair_ratios(set, res.saliency, hcfg);
  HmsrGraph candidate = build_candidate_graph(set, res.saliency, res.grasps, res.ratios);
  res.graph = truncate(candidate, set, res.grasps, hcfg);
  res.graph.coordination = classify_coordination(res.graph, res.grasps, set, hcfg);

  res.graph.meta = json{{"task_name", set.task_name},
                        {"demo_count", set.num_demos()},
                        {"config", cfg.to_json()}};

  res.report = json{{"task_name", set.task_name},
                    {"saliency", res.saliency.to_json()},
                    {"grasps", grasps_to_json(res.grasps)},
                    {"coordination",
                     {{"value", to_string(res.graph.coordination.value)},
                      {"evidence", res.graph.coordination.evidence}}}};
  json ratio_rows = json::array();
  for (const auto& pr : res.ratios)
    ratio_rows.push_back({{"pair", {pr.mover_a, pr.mover_b}}, {"ratios", pr.ratios.to_json()}});
  res.report["invariance_ratios"] = std::move(ratio_rows);
  return res;
}

// ---------------------------------------------------------------------------
// Scoring a recovered graph against generator ground truth.
// ---------------------------------------------------------------------------

struct EvaluationResult {
  double precision = 0.0;
  double recall = 0.0;
  double kind_accuracy = 0.0;  // recall of expected constraint kinds on matched edges
  bool coordination_match = false;
  bool masters_correct = false;  // all mover-to-mover edges recovered with direction
  json detail;
};

inline EvaluationResult evaluate_graph(const HmsrGraph& graph, const GroundTruth& truth) {
  EvaluationResult res;
  std::set<std::pair<std::string, std::string>> found, expected;
  for (const auto& e : graph.edges) found.insert({e.master, e.slave});
  for (const auto& e : truth.edges) expected.insert({e.master, e.slave});

  int tp = 0;
  for (const auto& e : found)
    if (expected.count(e)) ++tp;
  res.precision = found.empty() ? (expected.empty() ? 1.0 : 0.0)
                                : static_cast<double>(tp) / found.size();
  res.recall = expected.empty() ? 1.0 : static_cast<double>(tp) / expected.size();

  std::set<std::string> hands, statics(truth.statics.begin(), truth.statics.end());
  for (const auto& g : truth.grasps) hands.insert(g.hand_id);

  double kind_acc = 0.0;
  int kind_n = 0;
  bool masters_ok = true;
  json rows = json::array();
  for (const auto& te : truth.edges) {
    const HmsrEdge* fe = graph.find_edge(te.master, te.slave);
    json row{{"master", te.master}, {"slave", te.slave}, {"expected_kinds", te.kinds}};
    const bool mover_pair = !hands.count(te.slave) && !statics.count(te.master) &&
                            te.master.front() != 'v';
    if (fe) {
      std::set<std::string> got;
      for (const auto& c : fe->constraints) got.insert(to_string(c.kind));
      int hit = 0;
      for (const auto& k : te.kinds)
        if (got.count(k)) ++hit;
      if (!te.kinds.empty()) {
        kind_acc += static_cast<double>(hit) / te.kinds.size();
        ++kind_n;
      }
      row["status"] = "matched";
      row["found_kinds"] = std::vector<std::string>(got.begin(), got.end());
    } else {
      row["status"] = "missing";
      if (mover_pair) masters_ok = false;
    }
    rows.push_back(std::move(row));
  }
  for (const auto& e : graph.edges) {
    if (!expected.count({e.master, e.slave}))
      rows.push_back({{"master", e.master}, {"slave", e.slave}, {"status", "spurious"}});
  }
  res.kind_accuracy = kind_n > 0 ? kind_acc / kind_n : 1.0;
  res.coordination_match = graph.coordination.value == truth.coordination;
  res.masters_correct = masters_ok;
  res.detail = json{{"edges", std::move(rows)},
                    {"precision", res.precision},
                    {"recall", res.recall},
                    {"kind_accuracy", res.kind_accuracy},
                    {"coordination_expected", to_string(truth.coordination)},
                    {"coordination_found", to_string(graph.coordination.value)},
                    {"coordination_match", res.coordination_match},
                    {"masters_correct", res.masters_correct}};
  return res;
}

}  // namespace bikvil
