// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bikvil {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points3 = Eigen::Matrix3Xd;  // one column per point
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto exit codes.
// ---------------------------------------------------------------------------

/// Malformed or inconsistent input files (manifest, demo, graph, scene).
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid data with invalid content (non-finite values, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// An operation was called outside its contract.
struct PreconditionError : std::runtime_error {
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

/// The kinematic simulation reached a non-finite or impossible state.
struct SimulationError : std::runtime_error {
  explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Deterministic random numbers. Distributions are written out explicitly so
// generated datasets do not depend on the standard library in use.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1).
  double uniform() {
    return (eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  /// Standard normal via Box-Muller (always consumes two uniforms).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    u1 = std::max(u1, 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  Vec3 normal3(double sigma) { return {normal(0, sigma), normal(0, sigma), normal(0, sigma)}; }

  /// Uniform in the closed ball of radius r.
  Vec3 in_ball(double r) {
    while (true) {
      Vec3 v{uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)};
      if (v.squaredNorm() <= 1.0) return r * v;
    }
  }

  Vec3 unit_vector() {
    while (true) {
      Vec3 v{uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)};
      double n = v.norm();
      if (n > 1e-6 && n <= 1.0) return v / n;
    }
  }

  /// Sub-stream derivation (splitmix64 of seed ^ salt).
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed ^ (salt + 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Rotations
// ---------------------------------------------------------------------------

/// Exponential map so(3) -> SO(3).
inline Mat3 rodrigues(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    Mat3 K;
    K << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return Mat3::Identity() + K;  // first order
  }
  const Vec3 a = w / theta;
  Mat3 K;
  K << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Mat3::Identity() + std::sin(theta) * K + (1.0 - std::cos(theta)) * K * K;
}

/// Log map SO(3) -> so(3), angle in [0, pi].
inline Vec3 so3_log(const Mat3& R) {
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta < 1e-9) {
    return 0.5 * Vec3(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the skew part vanishes; recover the axis from R + I.
    Mat3 A = 0.5 * (R + Mat3::Identity());
    int k;
    A.diagonal().maxCoeff(&k);
    Vec3 axis = A.col(k) / std::sqrt(std::max(A(k, k), 1e-12));
    axis.normalize();
    return theta * axis;
  }
  Vec3 v(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return (theta / (2.0 * std::sin(theta))) * v;
}

/// Nearest rotation matrix in Frobenius norm.
inline Mat3 project_to_so3(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) {
    Mat3 D = Mat3::Identity();
    D(2, 2) = -1;
    R = svd.matrixU() * D * svd.matrixV().transpose();
  }
  return R;
}

inline double geodesic_angle(const Mat3& Ra, const Mat3& Rb) {
  return so3_log(Mat3(Ra.transpose() * Rb)).norm();
}

/// Chordal mean: projection of the Euclidean mean onto SO(3).
inline Mat3 chordal_mean_rotation(const std::vector<Mat3>& rotations) {
  if (rotations.empty()) throw PreconditionError("chordal_mean_rotation: empty input");
  Mat3 sum = Mat3::Zero();
  for (const Mat3& R : rotations) sum += R;
  return project_to_so3(sum);
}

inline Mat3 rot_z(double yaw) { return rodrigues(Vec3(0, 0, yaw)); }
inline Mat3 rot_y(double a) { return rodrigues(Vec3(0, a, 0)); }
inline Mat3 rot_x(double a) { return rodrigues(Vec3(a, 0, 0)); }

// ---------------------------------------------------------------------------
// Rigid poses
// ---------------------------------------------------------------------------

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();

  Vec3 apply(const Vec3& v) const { return R * v + p; }
  Points3 apply_cloud(const Points3& pts) const { return (R * pts).colwise() + p; }

  Pose compose(const Pose& other) const { return {R * other.R, R * other.p + p}; }
  Pose inverse() const { return {R.transpose(), -(R.transpose() * p)}; }

  /// Screw-free interpolation: linear position, geodesic rotation.
  static Pose interp(const Pose& a, const Pose& b, double s) {
    Pose out;
    out.p = (1.0 - s) * a.p + s * b.p;
    out.R = rodrigues(s * so3_log(Mat3(b.R * a.R.transpose()))) * a.R;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Rigid registration (Umeyama). Used to express instance point clouds as a
// pose of the category canonical cloud.
// ---------------------------------------------------------------------------

struct RigidFit {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double scale = 1.0;
  double rms = 0.0;        // residual after alignment
  double condition = 1.0;  // singular value ratio of the cross-covariance
  bool ok = false;
};

/// Least-squares src -> dst alignment: dst ~ scale * R * src + t.
inline RigidFit fit_rigid(const Points3& src, const Points3& dst, bool with_scale = true,
                          double max_condition = 1e8) {
  RigidFit fit;
  const auto n = src.cols();
  if (n < 3 || dst.cols() != n) return fit;

  const Vec3 mu_s = src.rowwise().mean();
  const Vec3 mu_d = dst.rowwise().mean();
  const Points3 cs = src.colwise() - mu_s;
  const Points3 cd = dst.colwise() - mu_d;

  const Mat3 H = cd * cs.transpose() / static_cast<double>(n);
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (sv(0) < 1e-15) return fit;
  fit.condition = sv(0) / std::max(sv(2), 1e-300);
  if (fit.condition > max_condition) return fit;

  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) D(2, 2) = -1;
  fit.R = svd.matrixU() * D * svd.matrixV().transpose();

  if (with_scale) {
    const double var_s = cs.squaredNorm() / static_cast<double>(n);
    fit.scale = (sv.head<2>().sum() + D(2, 2) * sv(2)) / std::max(var_s, 1e-300);
  }
  fit.t = mu_d - fit.scale * fit.R * mu_s;

  const Points3 res = dst - ((fit.scale * fit.R * src).colwise() + fit.t);
  fit.rms = std::sqrt(res.squaredNorm() / static_cast<double>(n));
  fit.ok = true;
  return fit;
}

// ---------------------------------------------------------------------------
// Small statistics helpers
// ---------------------------------------------------------------------------

inline double median(std::vector<double> v) {
  if (v.empty()) throw PreconditionError("median: empty input");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (v[mid - 1] + hi);
}

inline double median_abs_deviation(const std::vector<double>& v, double med) {
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
  return median(std::move(dev));
}

// ---------------------------------------------------------------------------
// Point cloud index helpers
// ---------------------------------------------------------------------------

/// Farthest-point sampling; the first pick is the point farthest from the
/// centroid, later picks maximize the distance to the already picked set.
inline std::vector<int> farthest_point_indices(const Points3& pts, int k) {
  const int n = static_cast<int>(pts.cols());
  if (n == 0 || k <= 0) return {};
  k = std::min(k, n);
  const Vec3 c = pts.rowwise().mean();
  std::vector<int> picked;
  picked.reserve(k);
  int first = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double d = (pts.col(i) - c).squaredNorm();
    if (d > best) {
      best = d;
      first = i;
    }
  }
  picked.push_back(first);
  std::vector<double> min_d(n);
  for (int i = 0; i < n; ++i) min_d[i] = (pts.col(i) - pts.col(first)).squaredNorm();
  while (static_cast<int>(picked.size()) < k) {
    int arg = 0;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_d[i] > best) {
        best = min_d[i];
        arg = i;
      }
    }
    picked.push_back(arg);
    for (int i = 0; i < n; ++i) min_d[i] = std::min(min_d[i], (pts.col(i) - pts.col(arg)).squaredNorm());
  }
  return picked;
}

/// Indices of the k nearest neighbors of pts[anchor] (anchor excluded).
inline std::vector<int> nearest_neighbor_indices(const Points3& pts, int anchor, int k) {
  const int n = static_cast<int>(pts.cols());
  std::vector<std::pair<double, int>> d;
  d.reserve(n - 1);
  for (int i = 0; i < n; ++i) {
    if (i == anchor) continue;
    d.emplace_back((pts.col(i) - pts.col(anchor)).squaredNorm(), i);
  }
  k = std::min<int>(k, static_cast<int>(d.size()));
  std::partial_sort(d.begin(), d.begin() + k, d.end());
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

inline bool all_finite(const Points3& pts) { return pts.allFinite(); }

}  // namespace bikvil
