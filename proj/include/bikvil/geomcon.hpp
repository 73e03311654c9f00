// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bikvil/trajdata.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Constraint ladder. Classification walks the ladder and keypoint selection
// prefers lower priority numbers.
// ---------------------------------------------------------------------------

enum class ConstraintKind { P2P, P2L, P2Plane, P2C, P2S, Pose };

inline int constraint_priority(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::P2P: return 1;
    case ConstraintKind::P2L: return 2;
    case ConstraintKind::P2Plane: return 3;
    case ConstraintKind::P2C: return 4;
    case ConstraintKind::P2S: return 5;
    case ConstraintKind::Pose: return 6;
  }
  return 6;
}

inline std::string to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::P2P: return "p2p";
    case ConstraintKind::P2L: return "p2l";
    case ConstraintKind::P2Plane: return "p2P";
    case ConstraintKind::P2C: return "p2c";
    case ConstraintKind::P2S: return "p2S";
    case ConstraintKind::Pose: return "pose";
  }
  return "pose";
}

inline ConstraintKind constraint_kind_from_string(const std::string& s) {
  if (s == "p2p") return ConstraintKind::P2P;
  if (s == "p2l") return ConstraintKind::P2L;
  if (s == "p2P") return ConstraintKind::P2Plane;
  if (s == "p2c") return ConstraintKind::P2C;
  if (s == "p2S") return ConstraintKind::P2S;
  if (s == "pose") return ConstraintKind::Pose;
  throw SchemaError("unknown constraint kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Candidate local frames on the master object. A frame is anchored at one
// candidate point and oriented by the principal directions of its canonical
// neighborhood; it can be rebuilt on any categorical instance from the same
// anchor/neighbor correspondences. Aligned coordinates are normalized by the
// neighborhood scale so constraints transfer across instance sizes.
// ---------------------------------------------------------------------------

struct LocalFrame {
  std::string master_id;
  int anchor_index = 0;
  std::vector<int> neighbor_indices;
  Vec3 anchor_canonical = Vec3::Zero();     // for index re-resolution on new instances
  Points3 neighbors_canonical;              // 3 x k
  Mat3 basis = Mat3::Identity();            // reference basis on the canonical cloud
  Vec3 origin = Vec3::Zero();               // reference origin (canonical anchor)
  double canonical_scale = 1.0;             // rms neighbor spread on the canonical cloud
};

/// Frame realized on a concrete point cloud.
struct FrameInstance {
  Mat3 basis = Mat3::Identity();
  Vec3 origin = Vec3::Zero();
  double scale = 1.0;  // instance neighborhood spread / canonical spread

  Vec3 to_frame(const Vec3& world) const { return basis.transpose() * (world - origin) / scale; }
  Vec3 to_world(const Vec3& local) const { return origin + basis * (scale * local); }
  /// Directions transform without the origin/scale.
  Vec3 dir_to_world(const Vec3& local) const { return basis * local; }
};

namespace detail {

/// Basis from the principal directions of `neighbors`: x along the largest
/// spread, z along the smallest, y completing a right-handed set. Signs are
/// fixed by the centroid-to-anchor direction; axes nearly perpendicular to it
/// (tangential axes usually are) fall back to the offset of a fixed neighbor,
/// which moves rigidly with the instance, so the convention stays consistent
/// across demos and rigid transforms.
inline std::optional<Mat3> neighborhood_basis(const Points3& neighbors, const Vec3& anchor,
                                              const Vec3& cloud_centroid) {
  const Vec3 mu = neighbors.rowwise().mean();
  const Points3 c = neighbors.colwise() - mu;
  const Mat3 cov = c * c.transpose() / static_cast<double>(neighbors.cols());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (ev(1) <= 1e-10 * std::max(ev(2), 1e-300)) return std::nullopt;  // collinear

  Vec3 x = eig.eigenvectors().col(2);
  Vec3 z = eig.eigenvectors().col(0);
  Vec3 d1 = anchor - cloud_centroid;
  if (d1.norm() > 1e-12) d1.normalize();
  Vec3 d2 = Vec3(neighbors.col(neighbors.cols() - 1)) - anchor;
  if (d2.norm() > 1e-12) d2.normalize();
  const Vec3 d3 = d1.cross(d2);
  auto orient = [&](Vec3& v) {
    for (const Vec3& ref : {d1, d2, d3}) {
      const double dot = v.dot(ref);
      if (std::abs(dot) > 0.05) {
        if (dot < 0) v = -v;
        return;
      }
    }
    int k;
    v.cwiseAbs().maxCoeff(&k);
    if (v(k) < 0) v = -v;
  };
  orient(x);
  orient(z);
  Mat3 B;
  B.col(0) = x;
  B.col(1) = z.cross(x);
  B.col(2) = z;
  return B;
}

inline double neighborhood_scale(const Points3& neighbors) {
  const Vec3 mu = neighbors.rowwise().mean();
  return std::sqrt((neighbors.colwise() - mu).squaredNorm() /
                   static_cast<double>(neighbors.cols()));
}

}  // namespace detail

/// Realize a local frame on an instance cloud (columns index-aligned with the
/// canonical cloud the frame was built on).
inline FrameInstance reconstruct_frame(const LocalFrame& frame, const Points3& cloud) {
  Points3 nb(3, frame.neighbor_indices.size());
  for (std::size_t i = 0; i < frame.neighbor_indices.size(); ++i)
    nb.col(i) = cloud.col(frame.neighbor_indices[i]);
  const Vec3 anchor = cloud.col(frame.anchor_index);
  const auto basis = detail::neighborhood_basis(nb, anchor, cloud.rowwise().mean());
  if (!basis)
    throw PreconditionError("reconstruct_frame: degenerate neighborhood on '" + frame.master_id + "'");
  FrameInstance fi;
  fi.basis = *basis;
  fi.origin = anchor;
  fi.scale = detail::neighborhood_scale(nb) / frame.canonical_scale;
  if (!(fi.scale > 1e-9) || !std::isfinite(fi.scale))
    throw PreconditionError("reconstruct_frame: collapsed neighborhood scale");
  return fi;
}

/// Candidate frames anchored at farthest-point samples of the canonical
/// cloud. Anchors with collinear neighborhoods are skipped.
inline std::vector<LocalFrame> candidate_local_frames(const Points3& canonical,
                                                      const std::string& master_id, int n_frames,
                                                      int k_neighbors = 8) {
  if (canonical.cols() < 4)
    throw PreconditionError("candidate_local_frames: needs at least 4 canonical points");
  const Vec3 centroid = canonical.rowwise().mean();
  std::vector<LocalFrame> frames;
  for (int anchor : farthest_point_indices(canonical, n_frames)) {
    LocalFrame f;
    f.master_id = master_id;
    f.anchor_index = anchor;
    f.neighbor_indices = nearest_neighbor_indices(canonical, anchor, k_neighbors);
    f.neighbors_canonical.resize(3, f.neighbor_indices.size());
    for (std::size_t i = 0; i < f.neighbor_indices.size(); ++i)
      f.neighbors_canonical.col(i) = canonical.col(f.neighbor_indices[i]);
    f.anchor_canonical = canonical.col(anchor);
    const auto basis = detail::neighborhood_basis(f.neighbors_canonical, f.anchor_canonical, centroid);
    if (!basis) continue;
    f.basis = *basis;
    f.origin = f.anchor_canonical;
    f.canonical_scale = detail::neighborhood_scale(f.neighbors_canonical);
    if (f.canonical_scale < 1e-9) continue;
    frames.push_back(std::move(f));
  }
  if (frames.empty())
    throw PreconditionError("candidate_local_frames: all neighborhoods degenerate on '" +
                            master_id + "'");
  return frames;
}

// ---------------------------------------------------------------------------
// Demonstration alignment into a frame.
// ---------------------------------------------------------------------------

struct AlignedSamples {
  /// trajectories[demo][t] holds all slave points in frame coordinates.
  std::vector<std::vector<Points3>> trajectories;

  /// Final-time positions of one keypoint across demos (n_demos x 3).
  Eigen::Matrix<double, Eigen::Dynamic, 3> final_positions(int keypoint) const {
    Eigen::Matrix<double, Eigen::Dynamic, 3> out(trajectories.size(), 3);
    for (std::size_t d = 0; d < trajectories.size(); ++d)
      out.row(d) = trajectories[d].back().col(keypoint).transpose();
    return out;
  }

  /// One keypoint's trajectory in one demo as a T x 3 matrix.
  MatrixXd keypoint_trajectory(int demo, int keypoint) const {
    const auto& frames = trajectories[demo];
    MatrixXd out(frames.size(), 3);
    for (std::size_t t = 0; t < frames.size(); ++t) out.row(t) = frames[t].col(keypoint).transpose();
    return out;
  }
};

/// Express the slave's points in the master frame rebuilt per demo and per
/// time step, so constraints become visible as cross-demo invariances.
inline AlignedSamples align_to_frame(const DemonstrationSet& set, const std::string& master_id,
                                     const std::string& slave_id, const LocalFrame& frame) {
  if (set.num_demos() < 1) throw PreconditionError("align_to_frame: empty set");
  AlignedSamples out;
  out.trajectories.resize(set.num_demos());
  for (int d = 0; d < set.num_demos(); ++d) {
    const ObjectTrack* master = set.demos[d].find_track(master_id);
    const ObjectTrack* slave = set.demos[d].find_track(slave_id);
    if (!master || !slave) throw PreconditionError("align_to_frame: unknown track");
    const int T = master->num_frames();
    out.trajectories[d].reserve(T);
    for (int t = 0; t < T; ++t) {
      const FrameInstance fi = reconstruct_frame(frame, master->frames[t]);
      Points3 local = fi.basis.transpose() * (slave->frames[t].colwise() - fi.origin);
      out.trajectories[d].push_back(local / fi.scale);
    }
  }
  return out;
}

/// Final-frame-only variant used by the classification sweep.
inline Eigen::Matrix<double, Eigen::Dynamic, 3> align_final_positions(
    const DemonstrationSet& set, const std::string& master_id, const std::string& slave_id,
    const LocalFrame& frame, int keypoint) {
  Eigen::Matrix<double, Eigen::Dynamic, 3> out(set.num_demos(), 3);
  for (int d = 0; d < set.num_demos(); ++d) {
    const ObjectTrack* master = set.demos[d].find_track(master_id);
    const ObjectTrack* slave = set.demos[d].find_track(slave_id);
    const int t = master->num_frames() - 1;
    const FrameInstance fi = reconstruct_frame(frame, master->frames[t]);
    out.row(d) = fi.to_frame(slave->frames[t].col(keypoint)).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Principal manifold fits: polynomial curve (1-D) and height-field surface
// (2-D) with leave-one-out model complexity selection.
// ---------------------------------------------------------------------------

struct CurveModel {
  MatrixXd coeffs;  // 3 x (degree+1), position(s) = sum_j coeffs.col(j) s^j
  int degree = 1;
  double s_lo = 0.0, s_hi = 1.0;  // observed parameter range

  Vec3 eval(double s) const {
    Vec3 p = Vec3::Zero();
    double pw = 1.0;
    for (int j = 0; j <= degree; ++j) {
      p += coeffs.col(j) * pw;
      pw *= s;
    }
    return p;
  }
  Vec3 deriv(double s) const {
    Vec3 p = Vec3::Zero();
    double pw = 1.0;
    for (int j = 1; j <= degree; ++j) {
      p += coeffs.col(j) * (j * pw);
      pw *= s;
    }
    return p;
  }
  Vec3 second_deriv(double s) const {
    Vec3 p = Vec3::Zero();
    double pw = 1.0;
    for (int j = 2; j <= degree; ++j) {
      p += coeffs.col(j) * (j * (j - 1) * pw);
      pw *= s;
    }
    return p;
  }
};

/// Nearest point on the curve within its parameter range: dense sampling
/// followed by Newton refinement on the squared distance.
inline Vec3 nearest_on_curve(const CurveModel& m, const Vec3& q, int samples = 256,
                             int newton_iters = 10) {
  double best_s = m.s_lo;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const double s = m.s_lo + (m.s_hi - m.s_lo) * i / (samples - 1);
    const double d = (m.eval(s) - q).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best_s = s;
    }
  }
  double s = best_s;
  for (int it = 0; it < newton_iters; ++it) {
    const Vec3 r = m.eval(s) - q;
    const Vec3 d1 = m.deriv(s);
    const Vec3 d2 = m.second_deriv(s);
    const double g = r.dot(d1);
    const double h = d1.squaredNorm() + r.dot(d2);
    if (std::abs(h) < 1e-14) break;
    const double step = g / h;
    s = std::clamp(s - step, m.s_lo, m.s_hi);
    if (std::abs(step) < 1e-9) break;
  }
  if ((m.eval(s) - q).squaredNorm() <= best_d) return m.eval(s);
  return m.eval(best_s);  // refinement did not improve; keep the dense minimum
}

struct SurfaceModel {
  Vec3 origin = Vec3::Zero();
  Mat3 axes = Mat3::Identity();  // columns u, v, normal
  VectorXd coeffs;               // bivariate monomials, total degree <= degree
  int degree = 1;
  double u_lo = 0, u_hi = 0, v_lo = 0, v_hi = 0;

  double height(double u, double v) const {
    double hsum = 0.0;
    int idx = 0;
    for (int d = 0; d <= degree; ++d)
      for (int a = d; a >= 0; --a)
        hsum += coeffs(idx++) * std::pow(u, a) * std::pow(v, d - a);
    return hsum;
  }
  Vec3 eval(double u, double v) const {
    return origin + u * axes.col(0) + v * axes.col(1) + height(u, v) * axes.col(2);
  }
};

inline int surface_term_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

inline Vec3 nearest_on_surface(const SurfaceModel& m, const Vec3& q, int grid = 32,
                               int iters = 10) {
  double bu = m.u_lo, bv = m.v_lo;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const double u = m.u_lo + (m.u_hi - m.u_lo) * i / (grid - 1);
      const double v = m.v_lo + (m.v_hi - m.v_lo) * j / (grid - 1);
      const double d = (m.eval(u, v) - q).squaredNorm();
      if (d < best) {
        best = d;
        bu = u;
        bv = v;
      }
    }
  }
  // Gauss-Newton on (u, v)
  double u = bu, v = bv;
  const double eps = 1e-6;
  for (int it = 0; it < iters; ++it) {
    const Vec3 r = m.eval(u, v) - q;
    const Vec3 du = (m.eval(u + eps, v) - m.eval(u - eps, v)) / (2 * eps);
    const Vec3 dv = (m.eval(u, v + eps) - m.eval(u, v - eps)) / (2 * eps);
    Eigen::Matrix2d JtJ;
    JtJ << du.dot(du), du.dot(dv), du.dot(dv), dv.dot(dv);
    Eigen::Vector2d g(du.dot(r), dv.dot(r));
    if (std::abs(JtJ.determinant()) < 1e-14) break;
    const Eigen::Vector2d step = JtJ.inverse() * g;
    u = std::clamp(u - step(0), m.u_lo, m.u_hi);
    v = std::clamp(v - step(1), m.v_lo, m.v_hi);
    if (step.norm() < 1e-9) break;
  }
  if ((m.eval(u, v) - q).squaredNorm() <= best) return m.eval(u, v);
  return m.eval(bu, bv);
}

struct CurveFit {
  CurveModel model;
  double residual = 0.0;   // RMS orthogonal distance of the fit points
  double loocv_rms = 0.0;  // leave-one-out prediction RMS
};

/// Polynomial space-curve fit over an arc-length parameterization along the
/// principal axis. The degree minimizing leave-one-out error wins.
inline CurveFit fit_manifold_curve(const Eigen::Matrix<double, Eigen::Dynamic, 3>& points,
                                   int max_degree) {
  const int n = static_cast<int>(points.rows());
  if (n < 3) throw PreconditionError("fit_manifold_curve: needs at least 3 points");
  max_degree = std::min(max_degree, n - 2);
  if (max_degree < 1) throw PreconditionError("fit_manifold_curve: too few points");

  const Eigen::RowVector3d mu = points.colwise().mean();
  const MatrixXd centered = points.rowwise() - mu;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(centered.transpose() * centered);
  const Vec3 axis = eig.eigenvectors().col(2);

  // order points along the principal axis, then accumulate chord length
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return centered.row(a).dot(axis) < centered.row(b).dot(axis);
  });
  VectorXd s(n);
  s(order[0]) = 0.0;
  for (int i = 1; i < n; ++i)
    s(order[i]) = s(order[i - 1]) + (points.row(order[i]) - points.row(order[i - 1])).norm();
  const double total = s(order[n - 1]);
  if (total < 1e-12) throw PreconditionError("fit_manifold_curve: degenerate point set");
  s /= total;

  auto fit_degree = [&](int deg, const std::vector<int>& skip_mask_idx) -> std::optional<MatrixXd> {
    std::vector<int> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i)
      if (skip_mask_idx.empty() || i != skip_mask_idx[0]) rows.push_back(i);
    MatrixXd V(rows.size(), deg + 1);
    MatrixXd Y(rows.size(), 3);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double pw = 1.0;
      for (int j = 0; j <= deg; ++j) {
        V(r, j) = pw;
        pw *= s(rows[r]);
      }
      Y.row(r) = points.row(rows[r]);
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(V);
    if (qr.rank() < deg + 1) return std::nullopt;
    return qr.solve(Y);
  };

  int best_deg = -1;
  double best_cv = std::numeric_limits<double>::infinity();
  for (int deg = 1; deg <= max_degree; ++deg) {
    double acc = 0.0;
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      const auto W = fit_degree(deg, {i});
      if (!W) {
        ok = false;
        break;
      }
      Eigen::RowVector3d pred = Eigen::RowVector3d::Zero();
      double pw = 1.0;
      for (int j = 0; j <= deg; ++j) {
        pred += W->row(j) * pw;
        pw *= s(i);
      }
      acc += (pred - points.row(i)).squaredNorm();
    }
    if (!ok) continue;
    const double cv = std::sqrt(acc / n);
    if (cv < best_cv - 1e-15) {
      best_cv = cv;
      best_deg = deg;
    }
  }
  if (best_deg < 0) throw PreconditionError("fit_manifold_curve: rank-deficient at every degree");

  const auto W = fit_degree(best_deg, {});
  if (!W) throw PreconditionError("fit_manifold_curve: final fit rank-deficient");
  CurveFit fit;
  fit.model.coeffs = W->transpose();
  fit.model.degree = best_deg;
  fit.model.s_lo = 0.0;
  fit.model.s_hi = 1.0;
  fit.loocv_rms = best_cv;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += (nearest_on_curve(fit.model, points.row(i).transpose()) - points.row(i).transpose())
               .squaredNorm();
  fit.residual = std::sqrt(acc / n);
  return fit;
}

struct SurfaceFit {
  SurfaceModel model;
  double residual = 0.0;
  double loocv_rms = 0.0;
};

/// Height-field polynomial over the best-fit plane, degree by leave-one-out.
inline SurfaceFit fit_manifold_surface(const Eigen::Matrix<double, Eigen::Dynamic, 3>& points,
                                       int max_degree) {
  const int n = static_cast<int>(points.rows());
  if (n < 6) throw PreconditionError("fit_manifold_surface: needs at least 6 points");

  const Eigen::RowVector3d mu = points.colwise().mean();
  const MatrixXd centered = points.rowwise() - mu;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(centered.transpose() * centered);
  if (eig.eigenvalues()(1) <= 1e-10 * std::max(eig.eigenvalues()(2), 1e-300))
    throw PreconditionError("fit_manifold_surface: collinear points");

  SurfaceModel model;
  model.origin = mu.transpose();
  model.axes.col(0) = eig.eigenvectors().col(2);
  model.axes.col(1) = eig.eigenvectors().col(1);
  model.axes.col(2) = eig.eigenvectors().col(0);

  VectorXd u = centered * model.axes.col(0);
  VectorXd v = centered * model.axes.col(1);
  VectorXd h = centered * model.axes.col(2);
  model.u_lo = u.minCoeff();
  model.u_hi = u.maxCoeff();
  model.v_lo = v.minCoeff();
  model.v_hi = v.maxCoeff();

  auto design_row = [&](double uu, double vv, int deg) {
    VectorXd row(surface_term_count(deg));
    int idx = 0;
    for (int d = 0; d <= deg; ++d)
      for (int a = d; a >= 0; --a) row(idx++) = std::pow(uu, a) * std::pow(vv, d - a);
    return row;
  };
  auto fit_degree = [&](int deg, int skip) -> std::optional<VectorXd> {
    const int m = surface_term_count(deg);
    const int rows = skip >= 0 ? n - 1 : n;
    MatrixXd V(rows, m);
    VectorXd Y(rows);
    int r = 0;
    for (int i = 0; i < n; ++i) {
      if (i == skip) continue;
      V.row(r) = design_row(u(i), v(i), deg).transpose();
      Y(r) = h(i);
      ++r;
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(V);
    if (qr.rank() < m) return std::nullopt;
    return qr.solve(Y);
  };

  int best_deg = -1;
  double best_cv = std::numeric_limits<double>::infinity();
  for (int deg = 1; deg <= max_degree && surface_term_count(deg) <= n - 1; ++deg) {
    double acc = 0.0;
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      const auto c = fit_degree(deg, i);
      if (!c) {
        ok = false;
        break;
      }
      const double pred = design_row(u(i), v(i), deg).dot(*c);
      acc += (pred - h(i)) * (pred - h(i));
    }
    if (!ok) continue;
    const double cv = std::sqrt(acc / n);
    if (cv < best_cv - 1e-15) {
      best_cv = cv;
      best_deg = deg;
    }
  }
  if (best_deg < 0) throw PreconditionError("fit_manifold_surface: rank-deficient at every degree");

  const auto c = fit_degree(best_deg, -1);
  if (!c) throw PreconditionError("fit_manifold_surface: final fit rank-deficient");
  SurfaceFit fit;
  model.coeffs = *c;
  model.degree = best_deg;
  fit.model = model;
  fit.loocv_rms = best_cv;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = fit.model.height(u(i), v(i)) - h(i);
    acc += d * d;
  }
  fit.residual = std::sqrt(acc / n);
  return fit;
}

// ---------------------------------------------------------------------------
// Constraint classification over the ladder.
// ---------------------------------------------------------------------------

struct ConstraintTolerances {
  double eps_abs = 0.01;  // p2p spread floor (meters)
  double rho = 0.25;      // eigenvalue-ratio gate for dimension collapse
  double eps_lin = 0.01;  // line/plane residual gate
  double eps_fit = 0.01;  // curve/surface residual gate (fit and LOO)
  int max_degree = 4;
};

struct ClassifiedConstraint {
  ConstraintKind kind = ConstraintKind::P2P;
  Vec3 target = Vec3::Zero();     // p2p target / p2l point / p2P point
  Vec3 direction = Vec3::Zero();  // p2l direction / p2P normal (unit)
  CurveModel curve;
  SurfaceModel surface;
  double residual = 0.0;
};

namespace detail {

inline Vec3 canonical_sign(Vec3 v) {
  int k;
  v.cwiseAbs().maxCoeff(&k);
  return v(k) < 0 ? Vec3(-v) : v;
}

}  // namespace detail

/// Walks the ladder on cross-demo final positions: p2p, p2l, p2c, p2P, p2S.
/// Returns nothing when no rung holds, which is the truncation signal.
inline std::optional<ClassifiedConstraint> classify_constraint(
    const Eigen::Matrix<double, Eigen::Dynamic, 3>& finals, const ConstraintTolerances& tol) {
  const int n = static_cast<int>(finals.rows());
  if (n < 3) throw PreconditionError("classify_constraint: needs at least 3 samples");

  const Eigen::RowVector3d mu = finals.colwise().mean();
  const MatrixXd centered = finals.rowwise() - mu;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(centered.transpose() * centered /
                                          static_cast<double>(n - 1));
  const Vec3 ev = eig.eigenvalues().cwiseMax(0.0);  // ascending
  const double s1 = std::sqrt(ev(2));
  const double s2 = std::sqrt(ev(1));
  const double s3 = std::sqrt(ev(0));

  ClassifiedConstraint out;
  if (s1 < tol.eps_abs) {
    out.kind = ConstraintKind::P2P;
    out.target = mu.transpose();
    out.residual = std::sqrt(centered.rowwise().squaredNorm().mean());
    return out;
  }

  const Vec3 line_dir = eig.eigenvectors().col(2);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 r = centered.row(i).transpose();
    acc += (r - r.dot(line_dir) * line_dir).squaredNorm();
  }
  const double line_res = std::sqrt(acc / n);
  if (s2 < tol.rho * s1 && line_res < tol.eps_lin) {
    out.kind = ConstraintKind::P2L;
    out.target = mu.transpose();
    out.direction = detail::canonical_sign(line_dir);
    out.residual = line_res;
    return out;
  }

  // Curved fits demand residual degrees of freedom: leave-one-out on a model
  // that nearly interpolates the samples says nothing.
  const int curve_cap = std::min(tol.max_degree, n - 4);
  if (line_res >= tol.eps_lin && curve_cap >= 2) {
    try {
      const CurveFit fit = fit_manifold_curve(finals, curve_cap);
      if (fit.residual < tol.eps_fit && fit.loocv_rms < tol.eps_fit && fit.model.degree >= 2) {
        out.kind = ConstraintKind::P2C;
        out.curve = fit.model;
        out.residual = fit.residual;
        return out;
      }
    } catch (const PreconditionError&) {
    }
  }

  const Vec3 normal = eig.eigenvectors().col(0);
  const double plane_res = std::sqrt((centered * normal).squaredNorm() / n);
  if (s3 < tol.rho * s2 && plane_res < tol.eps_lin) {
    out.kind = ConstraintKind::P2Plane;
    out.target = mu.transpose();
    out.direction = detail::canonical_sign(normal);
    out.residual = plane_res;
    return out;
  }

  int surface_cap = tol.max_degree;
  while (surface_cap >= 2 && surface_term_count(surface_cap) > n - 3) --surface_cap;
  if (surface_cap >= 2) {
    try {
      const SurfaceFit fit = fit_manifold_surface(finals, surface_cap);
      if (fit.residual < tol.eps_fit && fit.loocv_rms < tol.eps_fit && fit.model.degree >= 2) {
        out.kind = ConstraintKind::P2S;
        out.surface = fit.model;
        out.residual = fit.residual;
        return out;
      }
    } catch (const PreconditionError&) {
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Pose target distribution (for constraints on free-moving masters).
// ---------------------------------------------------------------------------

struct PoseTarget {
  Vec3 mean_position = Vec3::Zero();  // frame coordinates
  Mat3 position_cov = Mat3::Zero();
  Mat3 mean_rotation = Mat3::Identity();
  double rot_std = 0.0;      // radians
  double rot_max_dev = 0.0;  // radians
};

// ---------------------------------------------------------------------------
// GeometricConstraint: one keypoint bound to one manifold in one master frame.
// ---------------------------------------------------------------------------

struct GeometricConstraint {
  ConstraintKind kind = ConstraintKind::P2P;
  std::string slave_id;
  int keypoint_index = -1;                 // -1 for pose constraints
  Vec3 keypoint_canonical = Vec3::Zero();  // canonical-space location of the keypoint
  LocalFrame frame;
  Vec3 target = Vec3::Zero();
  Vec3 direction = Vec3::Zero();
  CurveModel curve;
  SurfaceModel surface;
  PoseTarget pose;
  double residual_scale = 0.0;
  int priority = 1;
};

/// Attractor for a keypoint at `local` (frame coordinates): the nearest point
/// of the constraint manifold.
inline Vec3 constraint_attractor_local(const GeometricConstraint& c, const Vec3& local) {
  switch (c.kind) {
    case ConstraintKind::P2P: return c.target;
    case ConstraintKind::P2L: return c.target + (local - c.target).dot(c.direction) * c.direction;
    case ConstraintKind::P2Plane: return local - (local - c.target).dot(c.direction) * c.direction;
    case ConstraintKind::P2C: return nearest_on_curve(c.curve, local);
    case ConstraintKind::P2S: return nearest_on_surface(c.surface, local);
    case ConstraintKind::Pose: return local;  // handled at the body level
  }
  return local;
}

inline double constraint_residual_local(const GeometricConstraint& c, const Vec3& local) {
  return (local - constraint_attractor_local(c, local)).norm();
}

// ---------------------------------------------------------------------------
// Pair extraction: sweep candidate frames x slave keypoints, classify final
// positions, keep the best constraint per keypoint, then select a spread-out
// keypoint subset.
// ---------------------------------------------------------------------------

struct PairExtractConfig {
  ConstraintTolerances tol;
  int n_frames = 12;
  int k_neighbors = 8;
  int budget = 3;       // max keypoints kept
  double d_min = 0.03;  // canonical separation between kept keypoints
};

inline std::vector<GeometricConstraint> extract_pair_constraints(const DemonstrationSet& set,
                                                                 const std::string& master_id,
                                                                 const std::string& slave_id,
                                                                 const PairExtractConfig& cfg) {
  if (set.num_demos() < 2) throw PreconditionError("extract_pair_constraints: needs >= 2 demos");
  const ObjectTrack* master0 = set.demos.front().find_track(master_id);
  const ObjectTrack* slave0 = set.demos.front().find_track(slave_id);
  if (!master0 || !slave0) throw PreconditionError("extract_pair_constraints: unknown track");

  std::vector<LocalFrame> frames;
  try {
    frames = candidate_local_frames(master0->canonical_points, master_id, cfg.n_frames,
                                    cfg.k_neighbors);
  } catch (const PreconditionError&) {
    return {};
  }

  struct Best {
    int frame = -1;
    ClassifiedConstraint c;
  };
  const int n_kp = slave0->num_points();
  std::vector<Best> best(n_kp);

  for (std::size_t fidx = 0; fidx < frames.size(); ++fidx) {
    // Reconstruct once per demo at final time; skip frames that degenerate.
    std::vector<FrameInstance> instances;
    bool usable = true;
    for (const auto& demo : set.demos) {
      const ObjectTrack* master = demo.find_track(master_id);
      try {
        instances.push_back(reconstruct_frame(frames[fidx], master->frames.back()));
      } catch (const PreconditionError&) {
        usable = false;
        break;
      }
    }
    if (!usable) continue;

    for (int kp = 0; kp < n_kp; ++kp) {
      Eigen::Matrix<double, Eigen::Dynamic, 3> finals(set.num_demos(), 3);
      for (int d = 0; d < set.num_demos(); ++d) {
        const ObjectTrack* slave = set.demos[d].find_track(slave_id);
        finals.row(d) = instances[d].to_frame(slave->frames.back().col(kp)).transpose();
      }
      const auto cls = classify_constraint(finals, cfg.tol);
      if (!cls) continue;
      Best& b = best[kp];
      const bool take =
          b.frame < 0 ||
          std::make_tuple(constraint_priority(cls->kind), cls->residual,
                          frames[fidx].anchor_index) <
              std::make_tuple(constraint_priority(b.c.kind), b.c.residual,
                              frames[b.frame].anchor_index);
      if (take) {
        b.frame = static_cast<int>(fidx);
        b.c = *cls;
      }
    }
  }

  // Greedy keypoint selection: best priority first, enforcing canonical
  // separation so the budget spans the slave's geometry.
  std::vector<int> order;
  for (int kp = 0; kp < n_kp; ++kp)
    if (best[kp].frame >= 0) order.push_back(kp);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::make_tuple(constraint_priority(best[a].c.kind), best[a].c.residual, a) <
           std::make_tuple(constraint_priority(best[b].c.kind), best[b].c.residual, b);
  });

  std::vector<GeometricConstraint> out;
  std::vector<int> picked;
  for (int kp : order) {
    if (static_cast<int>(out.size()) >= cfg.budget) break;
    bool spaced = true;
    for (int other : picked) {
      if ((slave0->canonical_points.col(kp) - slave0->canonical_points.col(other)).norm() <
          cfg.d_min) {
        spaced = false;
        break;
      }
    }
    if (!spaced) continue;
    picked.push_back(kp);

    const Best& b = best[kp];
    GeometricConstraint gc;
    gc.kind = b.c.kind;
    gc.slave_id = slave_id;
    gc.keypoint_index = kp;
    gc.keypoint_canonical = slave0->canonical_points.col(kp);
    gc.frame = frames[b.frame];
    gc.target = b.c.target;
    gc.direction = b.c.direction;
    gc.curve = b.c.curve;
    gc.surface = b.c.surface;
    gc.residual_scale = b.c.residual;
    gc.priority = constraint_priority(b.c.kind);
    out.push_back(std::move(gc));
  }
  return out;
}

}  // namespace bikvil
