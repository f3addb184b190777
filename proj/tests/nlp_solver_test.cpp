// Copyright 2026 The TDR-OBCA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tdr_obca/nlp_solver.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace tdr_obca {
namespace {

using Eigen::VectorXd;

constexpr double kInf = 1e20;

// Hock-Schittkowski 71.
class Hs071 : public NlpProblem {
 public:
  Eigen::Index num_variables() const override { return 4; }
  Eigen::Index num_constraints() const override { return 2; }
  void bounds(VectorXd& xl, VectorXd& xu, VectorXd& cl, VectorXd& cu) const override {
    xl = VectorXd::Constant(4, 1.0);
    xu = VectorXd::Constant(4, 5.0);
    cl = VectorXd(2);
    cu = VectorXd(2);
    cl << 25.0, 40.0;
    cu << kInf, 40.0;
  }
  VectorXd initial_point() const override { return (VectorXd(4) << 1, 5, 5, 1).finished(); }
  double objective(const VectorXd& x) const override {
    return x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2];
  }
  void gradient(const VectorXd& x, VectorXd& g) const override {
    g.resize(4);
    g[0] = x[3] * (2 * x[0] + x[1] + x[2]);
    g[1] = x[0] * x[3];
    g[2] = x[0] * x[3] + 1;
    g[3] = x[0] * (x[0] + x[1] + x[2]);
  }
  void constraints(const VectorXd& x, VectorXd& c) const override {
    c.resize(2);
    c[0] = x.prod();
    c[1] = x.squaredNorm();
  }
  void jacobian_structure(std::vector<int>& r, std::vector<int>& c) const override {
    r.clear();
    c.clear();
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 4; ++j) {
        r.push_back(i);
        c.push_back(j);
      }
    }
  }
  void jacobian_values(const VectorXd& x, std::vector<double>& v) const override {
    v = {x[1] * x[2] * x[3], x[0] * x[2] * x[3], x[0] * x[1] * x[3], x[0] * x[1] * x[2],
         2 * x[0], 2 * x[1], 2 * x[2], 2 * x[3]};
  }
  void hessian_structure(std::vector<int>& r, std::vector<int>& c) const override {
    r.clear();
    c.clear();
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j <= i; ++j) {
        r.push_back(i);
        c.push_back(j);
      }
    }
  }
  void hessian_values(const VectorXd& x, double s, const VectorXd& y,
                      std::vector<double>& v) const override {
    Eigen::Matrix4d H = Eigen::Matrix4d::Zero();
    H(0, 0) = s * 2 * x[3];
    H(1, 0) = s * x[3];
    H(2, 0) = s * x[3];
    H(3, 0) = s * (2 * x[0] + x[1] + x[2]);
    H(3, 1) = s * x[0];
    H(3, 2) = s * x[0];
    H(1, 0) += y[0] * x[2] * x[3];
    H(2, 0) += y[0] * x[1] * x[3];
    H(3, 0) += y[0] * x[1] * x[2];
    H(2, 1) += y[0] * x[0] * x[3];
    H(3, 1) += y[0] * x[0] * x[2];
    H(3, 2) += y[0] * x[0] * x[1];
    for (int i = 0; i < 4; ++i) H(i, i) += 2 * y[1];
    v.clear();
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j <= i; ++j) v.push_back(H(i, j));
    }
  }
};

TEST(NlpSolver, Hs071) {
  Hs071 p;
  const NlpResult r = solve_nlp(p);
  ASSERT_EQ(r.report.status, NlpStatus::kOptimal) << r.report.iterations;
  EXPECT_NEAR(r.report.objective, 17.0140173, 1e-6);
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], 4.7429994, 1e-6);
  EXPECT_NEAR(r.x[2], 3.8211503, 1e-6);
  EXPECT_NEAR(r.x[3], 1.3794082, 1e-6);
  EXPECT_LT(r.report.iterations, 30);
}

// min (x0 - 1)^2 + 100 (x1 - x0^2)^2 + free-form constraint, optionally
// infeasible: x0^2 + x1^2 = -1 has no solution.
class Rosenbrock : public NlpProblem {
 public:
  explicit Rosenbrock(double rhs, VectorXd start) : rhs_(rhs), start_(std::move(start)) {}
  Eigen::Index num_variables() const override { return 2; }
  Eigen::Index num_constraints() const override { return 1; }
  void bounds(VectorXd& xl, VectorXd& xu, VectorXd& cl, VectorXd& cu) const override {
    xl = VectorXd::Constant(2, -kInf);
    xu = VectorXd::Constant(2, kInf);
    cl = VectorXd::Constant(1, rhs_);
    cu = VectorXd::Constant(1, rhs_);
  }
  VectorXd initial_point() const override { return start_; }
  double objective(const VectorXd& x) const override {
    return std::pow(x[0] - 1, 2) + 100 * std::pow(x[1] - x[0] * x[0], 2);
  }
  void gradient(const VectorXd& x, VectorXd& g) const override {
    g.resize(2);
    g[0] = 2 * (x[0] - 1) - 400 * x[0] * (x[1] - x[0] * x[0]);
    g[1] = 200 * (x[1] - x[0] * x[0]);
  }
  void constraints(const VectorXd& x, VectorXd& c) const override {
    c.resize(1);
    c[0] = x.squaredNorm();
  }
  void jacobian_structure(std::vector<int>& r, std::vector<int>& c) const override {
    r = {0, 0};
    c = {0, 1};
  }
  void jacobian_values(const VectorXd& x, std::vector<double>& v) const override {
    v = {2 * x[0], 2 * x[1]};
  }
  void hessian_structure(std::vector<int>& r, std::vector<int>& c) const override {
    r = {0, 1, 1};
    c = {0, 0, 1};
  }
  void hessian_values(const VectorXd& x, double s, const VectorXd& y,
                      std::vector<double>& v) const override {
    v = {s * (2 - 400 * x[1] + 1200 * x[0] * x[0]) + 2 * y[0], s * (-400 * x[0]),
         s * 200 + 2 * y[0]};
  }

 private:
  double rhs_;
  VectorXd start_;
};

TEST(NlpSolver, NonconvexNeedsInertiaCorrection) {
  // The start sits where the Hessian is indefinite.
  Rosenbrock p(1.0, (VectorXd(2) << -0.8, 0.6).finished());
  const NlpResult r = solve_nlp(p);
  ASSERT_EQ(r.report.status, NlpStatus::kOptimal);
  EXPECT_NEAR(r.x.squaredNorm(), 1.0, 1e-7);
  // A local minimizer on the unit circle: no lower point along the arc.
  const double t0 = std::atan2(r.x[1], r.x[0]);
  for (double dt : {-1e-2, -1e-3, 1e-3, 1e-2}) {
    const VectorXd q = (VectorXd(2) << std::cos(t0 + dt), std::sin(t0 + dt)).finished();
    EXPECT_GE(p.objective(q), r.report.objective - 1e-9);
  }
}

TEST(NlpSolver, InfeasibleIsReportedNotThrown) {
  Rosenbrock p(-1.0, (VectorXd(2) << 0.5, 0.5).finished());
  NlpSettings s;
  s.max_iter = 200;
  const NlpResult r = solve_nlp(p, s);
  EXPECT_NE(r.report.status, NlpStatus::kOptimal);
  EXPECT_GT(r.report.primal_infeasibility, 0.5);
}

TEST(NlpSolver, IterationCapIsHonoured) {
  Hs071 p;
  NlpSettings s;
  s.max_iter = 2;
  const NlpResult r = solve_nlp(p, s);
  EXPECT_EQ(r.report.status, NlpStatus::kMaxIterations);
  EXPECT_EQ(r.report.iterations, 2);
}

TEST(NlpSolver, KktResidualsAtReportedOptimum) {
  Hs071 p;
  const NlpResult r = solve_nlp(p);
  ASSERT_EQ(r.report.status, NlpStatus::kOptimal);
  VectorXd g;
  p.gradient(r.x, g);
  std::vector<int> jr, jc;
  std::vector<double> jv;
  p.jacobian_structure(jr, jc);
  p.jacobian_values(r.x, jv);
  VectorXd gl = g - r.z_l + r.z_u;
  // Slack rows contribute -y_i to the slack's own stationarity, not to x.
  for (std::size_t i = 0; i < jr.size(); ++i) gl[jc[i]] += jv[i] * r.y[jr[i]];
  EXPECT_LT(gl.lpNorm<Eigen::Infinity>(), 1e-5);
  EXPECT_LT(r.report.complementarity, 1e-6);
}

}  // namespace
}  // namespace tdr_obca
