// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "bikvil/common.hpp"

namespace bikvil {

// ---------------------------------------------------------------------------
// Via-point movement primitive.
//
// A trajectory over canonical phase x in [0,1] is decomposed into a quintic
// elementary trajectory h(x) from start to goal (zero boundary velocity and
// acceleration) plus a shape modulation f(x) carried by normalized
// squared-exponential basis functions. Boundary conditions and via-points are
// enforced exactly by minimum-norm corrections of the basis weights, so the
// primitive can be re-targeted to new starts/goals/via-points after fitting.
// ---------------------------------------------------------------------------

class Vmp {
 public:
  Vmp() = default;
  Vmp(int dim, int n_basis, double ridge = 1e-8)
      : dim_(dim),
        n_basis_(n_basis),
        width_(1.0 / n_basis),
        ridge_(ridge),
        start_(VectorXd::Zero(dim)),
        goal_(VectorXd::Zero(dim)),
        weights_(MatrixXd::Zero(n_basis, dim)) {}

  int dim() const { return dim_; }
  int n_basis() const { return n_basis_; }
  double width() const { return width_; }
  double ridge() const { return ridge_; }
  const VectorXd& start() const { return start_; }
  const VectorXd& goal() const { return goal_; }
  const MatrixXd& weights() const { return weights_; }
  const std::vector<std::pair<double, VectorXd>>& via_points() const { return via_points_; }
  double reconstruction_rms() const { return reconstruction_rms_; }
  double demo_variance_rms() const { return demo_variance_rms_; }

  struct Sample {
    VectorXd value;
    VectorXd derivative;  // w.r.t. phase
    bool clamped = false;
  };

  /// Evaluate position and phase-derivative at phase x (clamped to [0,1]).
  Sample evaluate(double x) const {
    Sample out;
    out.clamped = x < 0.0 || x > 1.0;
    x = std::clamp(x, 0.0, 1.0);

    const double s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
    const double ds = 30.0 * x * x * (1.0 + x * (-2.0 + x));
    VectorXd h = start_ + s * (goal_ - start_);
    VectorXd dh = ds * (goal_ - start_);

    VectorXd psi(n_basis_), dpsi(n_basis_);
    basis_raw(x, psi, dpsi);
    const double sum = psi.sum();
    const double dsum = dpsi.sum();
    // normalized activations phi = psi / sum, d(phi) via quotient rule
    VectorXd phi = psi / sum;
    VectorXd dphi = (dpsi - phi * dsum) / sum;

    out.value = h + weights_.transpose() * phi;
    out.derivative = dh + weights_.transpose() * dphi;
    return out;
  }

  /// Re-target to a new start/goal and optional extra via-points. The shape
  /// weights receive the minimum-norm change satisfying all interpolation
  /// conditions, so the learned modulation is preserved where unconstrained.
  Vmp adapt(const VectorXd& new_start, const VectorXd& new_goal,
            const std::vector<std::pair<double, VectorXd>>& extra_via = {}) const {
    Vmp out = *this;
    out.start_ = new_start;
    out.goal_ = new_goal;
    out.via_points_ = extra_via;
    for (std::size_t i = 0; i < extra_via.size(); ++i)
      for (std::size_t j = i + 1; j < extra_via.size(); ++j)
        if (std::abs(extra_via[i].first - extra_via[j].first) < 1e-9 &&
            (extra_via[i].second - extra_via[j].second).norm() > 1e-12)
          throw PreconditionError("vmp: conflicting via-points at the same phase");
    out.enforce_conditions();
    return out;
  }

  /// Fit from one or more demos sampled on uniform phase grids (rows = time,
  /// cols = dimensions). Multi-demo fits encode the mean trajectory.
  static Vmp fit(const std::vector<MatrixXd>& demos, int n_basis = 20, double ridge = 1e-8) {
    if (demos.empty()) throw PreconditionError("vmp: no demos");
    const int dim = static_cast<int>(demos.front().cols());
    int grid = 0;
    for (const auto& d : demos) {
      if (d.cols() != dim) throw PreconditionError("vmp: demo dimension mismatch");
      if (d.rows() < n_basis) throw PreconditionError("vmp: demo shorter than basis count");
      grid = std::max(grid, static_cast<int>(d.rows()));
    }

    // mean trajectory on the common phase grid
    MatrixXd mean = MatrixXd::Zero(grid, dim);
    MatrixXd sq = MatrixXd::Zero(grid, dim);
    for (const auto& d : demos) {
      for (int t = 0; t < grid; ++t) {
        const double x = grid == 1 ? 0.0 : static_cast<double>(t) / (grid - 1);
        VectorXd y = sample_linear(d, x);
        mean.row(t) += y.transpose();
        sq.row(t) += y.array().square().matrix().transpose();
      }
    }
    mean /= static_cast<double>(demos.size());
    sq /= static_cast<double>(demos.size());

    Vmp vmp(dim, n_basis, ridge);
    vmp.start_ = mean.row(0).transpose();
    vmp.goal_ = mean.row(grid - 1).transpose();

    // shape residual after removing the elementary trajectory
    MatrixXd Phi(grid, n_basis);
    MatrixXd R(grid, dim);
    for (int t = 0; t < grid; ++t) {
      const double x = static_cast<double>(t) / (grid - 1);
      VectorXd psi(n_basis), dpsi(n_basis);
      vmp.basis_raw(x, psi, dpsi);
      Phi.row(t) = (psi / psi.sum()).transpose();
      const double s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
      R.row(t) = mean.row(t) - (vmp.start_ + s * (vmp.goal_ - vmp.start_)).transpose();
    }
    MatrixXd gram = Phi.transpose() * Phi;
    gram.diagonal().array() += ridge;
    vmp.weights_ = gram.ldlt().solve(Phi.transpose() * R);
    vmp.enforce_conditions();

    double acc = 0.0;
    for (int t = 0; t < grid; ++t) {
      const double x = static_cast<double>(t) / (grid - 1);
      acc += (vmp.evaluate(x).value.transpose() - mean.row(t)).squaredNorm();
    }
    vmp.reconstruction_rms_ = std::sqrt(acc / grid);
    vmp.demo_variance_rms_ =
        std::sqrt(std::max(0.0, (sq - mean.array().square().matrix()).sum() / (grid * dim)));
    return vmp;
  }

  // Raw (de)serialization access for the graph file.
  void set_state(const VectorXd& start, const VectorXd& goal, const MatrixXd& weights,
                 std::vector<std::pair<double, VectorXd>> vias, double recon_rms, double var_rms) {
    start_ = start;
    goal_ = goal;
    weights_ = weights;
    via_points_ = std::move(vias);
    reconstruction_rms_ = recon_rms;
    demo_variance_rms_ = var_rms;
  }

 private:
  void basis_raw(double x, VectorXd& psi, VectorXd& dpsi) const {
    for (int i = 0; i < n_basis_; ++i) {
      const double c = n_basis_ == 1 ? 0.5 : static_cast<double>(i) / (n_basis_ - 1);
      const double z = (x - c) / width_;
      psi(i) = std::exp(-0.5 * z * z);
      dpsi(i) = psi(i) * (c - x) / (width_ * width_);
    }
  }

  /// Shape value f(x) must vanish at the boundaries (the elementary part owns
  /// them) and match each via-point; apply the minimum-norm weight update.
  void enforce_conditions() {
    const int m = 2 + static_cast<int>(via_points_.size());
    MatrixXd A(m, n_basis_);
    MatrixXd B(m, dim_);
    VectorXd psi(n_basis_), dpsi(n_basis_);
    auto row = [&](double x) {
      basis_raw(x, psi, dpsi);
      return (psi / psi.sum()).transpose();
    };
    A.row(0) = row(0.0);
    B.row(0).setZero();
    A.row(1) = row(1.0);
    B.row(1).setZero();
    for (int i = 0; i < static_cast<int>(via_points_.size()); ++i) {
      const double x = std::clamp(via_points_[i].first, 0.0, 1.0);
      A.row(2 + i) = row(x);
      const double s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
      const VectorXd h = start_ + s * (goal_ - start_);
      B.row(2 + i) = (via_points_[i].second - h).transpose();
    }
    const MatrixXd gap = B - A * weights_;
    weights_ += A.transpose() * (A * A.transpose()).fullPivLu().solve(gap);
  }

  static VectorXd sample_linear(const MatrixXd& demo, double x) {
    const int T = static_cast<int>(demo.rows());
    if (T == 1) return demo.row(0).transpose();
    const double pos = x * (T - 1);
    const int lo = std::min(static_cast<int>(pos), T - 2);
    const double frac = pos - lo;
    return ((1.0 - frac) * demo.row(lo) + frac * demo.row(lo + 1)).transpose();
  }

  int dim_ = 0;
  int n_basis_ = 0;
  double width_ = 0.05;
  double ridge_ = 1e-8;
  VectorXd start_, goal_;
  MatrixXd weights_;  // n_basis x dim
  std::vector<std::pair<double, VectorXd>> via_points_;
  double reconstruction_rms_ = 0.0;
  double demo_variance_rms_ = 0.0;
};

}  // namespace bikvil
