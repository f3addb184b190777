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

// Operator-splitting (ADMM) solver for convex quadratic programs
//
//   minimize    1/2 x'Px + q'x
//   subject to  A_eq x  = b_eq
//               lower <= A_in x <= upper
//
// The iteration follows the OSQP splitting: a regularized KKT solve for x,
// projection of the constraint copy z onto [l, u], and a dual ascent step on
// y. Ruiz equilibration is applied before iterating. Once the ADMM
// residuals are moderately small the active set is guessed from (z, y) and
// an equality-constrained KKT system is solved with iterative refinement
// ("polishing"); this is what brings residuals down to ~1e-10.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "tdr_obca/common.hpp"

namespace tdr_obca {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct QuadraticProgram {
  SparseMatrix P;  // full symmetric storage
  Eigen::VectorXd q;
  SparseMatrix A_eq;
  Eigen::VectorXd b_eq;
  SparseMatrix A_in;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index num_variables() const { return q.size(); }

  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(P * x) + q.dot(x); }

  void validate() const {
    const Eigen::Index n = q.size();
    auto bad = [](const char* what) { detail::fail(ErrorCode::kDimensionMismatch, what); };
    if (P.rows() != n || P.cols() != n) bad("P must be n x n");
    if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) bad("A_eq / b_eq shape");
    if (A_in.cols() != n || A_in.rows() != lower.size() || lower.size() != upper.size()) {
      bad("A_in / bounds shape");
    }
    const SparseMatrix asym = SparseMatrix(P.transpose()) - P;
    for (Eigen::Index k = 0; k < asym.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(asym, k); it; ++it) {
        if (std::abs(it.value()) > 1e-9) {
          detail::fail(ErrorCode::kInvalidArgument, "P must be symmetric");
        }
      }
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (lower[i] > upper[i]) detail::fail(ErrorCode::kInvalidArgument, "lower > upper");
    }
  }
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations };

constexpr std::string_view to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal: return "Optimal";
    case QpStatus::kInfeasible: return "Infeasible";
    case QpStatus::kMaxIterations: return "MaxIterations";
  }
  return "Unknown";
}

struct QpReport {
  QpStatus status = QpStatus::kMaxIterations;
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double objective = std::numeric_limits<double>::quiet_NaN();
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
  bool polished = false;
};

/// Multipliers follow the sign convention of P x + q + A_eq' y_eq + A_in' y_in = 0,
/// with y_in > 0 on active upper bounds and y_in < 0 on active lower bounds.
struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
  QpReport report;
};

struct QpSettings {
  double tol = 1e-8;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int scaling_iterations = 10;
  int adaptive_rho_interval = 25;
  double polish_trigger = 1e-4;  // ADMM residual below which polishing is tried
  double infeasibility_tol = 1e-7;
};

namespace qp_detail {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBoundInf = 1e20;

inline SparseMatrix vstack(const SparseMatrix& a, const SparseMatrix& b) {
  SparseMatrix out(a.rows() + b.rows(), a.cols());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(a.nonZeros() + b.nonZeros());
  for (Eigen::Index k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  }
  for (Eigen::Index k = 0; k < b.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(b, k); it; ++it) {
      t.emplace_back(a.rows() + it.row(), it.col(), it.value());
    }
  }
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

inline Eigen::VectorXd col_inf_norms(const SparseMatrix& m) {
  Eigen::VectorXd n = Eigen::VectorXd::Zero(m.cols());
  for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      n[it.col()] = std::max(n[it.col()], std::abs(it.value()));
    }
  }
  return n;
}

inline Eigen::VectorXd row_inf_norms(const SparseMatrix& m) {
  Eigen::VectorXd n = Eigen::VectorXd::Zero(m.rows());
  for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      n[it.row()] = std::max(n[it.row()], std::abs(it.value()));
    }
  }
  return n;
}

inline double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

inline double bound_violation(const Eigen::VectorXd& ax, const Eigen::VectorXd& l,
                              const Eigen::VectorXd& u) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    worst = std::max({worst, l[i] - ax[i], ax[i] - u[i]});
  }
  return worst;
}

// Stacked unscaled problem: l <= A x <= u with equality rows first.
struct Stacked {
  SparseMatrix P;
  Eigen::VectorXd q;
  SparseMatrix A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;
  Eigen::Index num_eq = 0;
};

// Residuals of a primal/dual pair in the original problem.
struct Residuals {
  double primal = kInf;
  double dual = kInf;
};

inline Residuals residuals(const Stacked& s, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  Residuals r;
  r.primal = bound_violation(s.A * x, s.l, s.u);
  r.dual = inf_norm(s.P * x + s.q + s.A.transpose() * y);
  return r;
}

inline double dual_objective_gap(const Stacked& s, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y) {
  // Dual function value at y: -1/2 x'Px - sum(u_i y_i^+ - l_i y_i^-), which
  // equals the primal objective at a KKT point.
  double support = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] > 0.0 && s.u[i] < kBoundInf) support += s.u[i] * y[i];
    if (y[i] < 0.0 && s.l[i] > -kBoundInf) support += s.l[i] * y[i];
  }
  const double xpx = x.dot(s.P * x);
  const double primal = 0.5 * xpx + s.q.dot(x);
  const double dual = -0.5 * xpx - support;
  return std::abs(primal - dual);
}

// Solve the equality-constrained problem defined by a guessed active set.
inline bool polish(const Stacked& s, const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                   double tol, Eigen::VectorXd& x_out, Eigen::VectorXd& y_out) {
  const Eigen::Index n = s.q.size();
  const Eigen::Index m = s.l.size();
  std::vector<Eigen::Index> rows;
  std::vector<double> target;
  std::vector<int> side;  // 0 equality, -1 lower, +1 upper
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i < s.num_eq || s.l[i] == s.u[i]) {
      rows.push_back(i);
      target.push_back(s.l[i]);
      side.push_back(0);
    } else if (s.l[i] > -kBoundInf && z[i] - s.l[i] < -y[i]) {
      rows.push_back(i);
      target.push_back(s.l[i]);
      side.push_back(-1);
    } else if (s.u[i] < kBoundInf && s.u[i] - z[i] < y[i]) {
      rows.push_back(i);
      target.push_back(s.u[i]);
      side.push_back(1);
    }
  }
  const Eigen::Index na = static_cast<Eigen::Index>(rows.size());
  std::vector<Eigen::Index> row_of(m, -1);
  for (Eigen::Index r = 0; r < na; ++r) row_of[rows[r]] = r;

  constexpr double delta = 1e-9;
  std::vector<Eigen::Triplet<double>> t;
  std::vector<Eigen::Triplet<double>> t0;
  for (Eigen::Index k = 0; k < s.P.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(s.P, k); it; ++it) {
      t.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (Eigen::Index k = 0; k < s.A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(s.A, k); it; ++it) {
      const Eigen::Index r = row_of[it.row()];
      if (r < 0) continue;
      t.emplace_back(n + r, it.col(), it.value());
      t.emplace_back(it.col(), n + r, it.value());
    }
  }
  t0 = t;
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(i, i, delta);
  for (Eigen::Index r = 0; r < na; ++r) t.emplace_back(n + r, n + r, -delta);
  SparseMatrix K(n + na, n + na);
  SparseMatrix K0(n + na, n + na);
  K.setFromTriplets(t.begin(), t.end());
  K0.setFromTriplets(t0.begin(), t0.end());

  Eigen::SimplicialLDLT<SparseMatrix> ldlt(K);
  if (ldlt.info() != Eigen::Success) return false;
  Eigen::VectorXd rhs(n + na);
  rhs.head(n) = -s.q;
  for (Eigen::Index r = 0; r < na; ++r) rhs[n + r] = target[r];
  Eigen::VectorXd sol = ldlt.solve(rhs);
  for (int refine = 0; refine < 25; ++refine) {
    const Eigen::VectorXd res = rhs - K0 * sol;
    if (inf_norm(res) < 1e-14 * std::max(1.0, inf_norm(rhs))) break;
    sol += ldlt.solve(res);
  }
  if (!sol.allFinite()) return false;

  x_out = sol.head(n);
  y_out = Eigen::VectorXd::Zero(m);
  for (Eigen::Index r = 0; r < na; ++r) y_out[rows[r]] = sol[n + r];
  for (Eigen::Index r = 0; r < na; ++r) {
    if (side[r] == -1 && y_out[rows[r]] > tol) return false;
    if (side[r] == 1 && y_out[rows[r]] < -tol) return false;
  }
  const Residuals res = residuals(s, x_out, y_out);
  return res.primal <= tol && res.dual <= tol;
}

}  // namespace qp_detail

/// Optional starting point; y is stacked as [y_eq; y_in]. The active set it
/// implies is tried directly before any ADMM iteration.
struct QpWarmStart {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

inline QpResult solve_qp(const QuadraticProgram& qp, const QpSettings& settings,
                         const QpWarmStart* warm = nullptr) {
  using namespace qp_detail;
  qp.validate();
  const Eigen::Index n = qp.num_variables();

  Stacked s;
  s.P = qp.P;
  s.q = qp.q;
  s.A = vstack(qp.A_eq, qp.A_in);
  s.num_eq = qp.A_eq.rows();
  const Eigen::Index m = s.A.rows();
  s.l.resize(m);
  s.u.resize(m);
  s.l << qp.b_eq, qp.lower;
  s.u << qp.b_eq, qp.upper;
  for (Eigen::Index i = 0; i < m; ++i) {
    s.l[i] = std::max(s.l[i], -kBoundInf);
    s.u[i] = std::min(s.u[i], kBoundInf);
  }

  // Ruiz equilibration of [P A'; A 0].
  Eigen::VectorXd D = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd E = Eigen::VectorXd::Ones(m);
  SparseMatrix Ps = s.P;
  SparseMatrix As = s.A;
  Eigen::VectorXd qs = s.q;
  for (int it = 0; it < settings.scaling_iterations; ++it) {
    Eigen::VectorXd cn = col_inf_norms(Ps).cwiseMax(col_inf_norms(As));
    Eigen::VectorXd rn = row_inf_norms(As);
    Eigen::VectorXd dd(n), ee(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      dd[j] = cn[j] < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(cn[j], 1e4));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      ee[i] = rn[i] < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(rn[i], 1e4));
    }
    Ps = dd.asDiagonal() * Ps * dd.asDiagonal();
    As = ee.asDiagonal() * As * dd.asDiagonal();
    qs = dd.cwiseProduct(qs);
    D = D.cwiseProduct(dd);
    E = E.cwiseProduct(ee);
  }
  double cost_scale = 1.0;
  if (settings.scaling_iterations > 0) {
    const Eigen::VectorXd pn = col_inf_norms(Ps);
    const double mean_p = n > 0 ? pn.mean() : 0.0;
    const double denom = std::max(mean_p, inf_norm(qs));
    cost_scale = denom < 1e-4 ? 1.0 : 1.0 / std::min(denom, 1e4);
  }
  Ps *= cost_scale;
  qs *= cost_scale;
  Eigen::VectorXd ls = E.cwiseProduct(s.l);
  Eigen::VectorXd us = E.cwiseProduct(s.u);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (s.l[i] <= -kBoundInf) ls[i] = -kInf;
    if (s.u[i] >= kBoundInf) us[i] = kInf;
  }

  Eigen::VectorXd rho_vec(m);
  double rho = settings.rho;
  auto set_rho = [&](double r) {
    rho = std::clamp(r, 1e-6, 1e6);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (ls[i] == -kInf && us[i] == kInf) {
        rho_vec[i] = 1e-6;
      } else if (us[i] - ls[i] < 1e-12) {
        rho_vec[i] = 1e3 * rho;
      } else {
        rho_vec[i] = rho;
      }
    }
  };
  set_rho(rho);

  SparseMatrix I(n, n);
  I.setIdentity();
  Eigen::SimplicialLLT<SparseMatrix> llt;
  auto factor = [&]() {
    SparseMatrix K = Ps + settings.sigma * I + SparseMatrix(As.transpose() * rho_vec.asDiagonal() * As);
    llt.compute(K);
    return llt.info() == Eigen::Success;
  };

  QpResult result;
  result.x = Eigen::VectorXd::Zero(n);
  result.y_eq = Eigen::VectorXd::Zero(qp.A_eq.rows());
  result.y_in = Eigen::VectorXd::Zero(qp.A_in.rows());
  auto& report = result.report;

  if (!factor()) {
    report.status = QpStatus::kMaxIterations;
    return result;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd x_prev, z_prev, y_prev, delta_y;

  auto unscale = [&](const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, const Eigen::VectorXd& zs,
                     Eigen::VectorXd& xo, Eigen::VectorXd& yo, Eigen::VectorXd& zo) {
    xo = D.cwiseProduct(xs);
    yo = E.cwiseProduct(ys) / cost_scale;
    zo = zs.cwiseQuotient(E);
  };

  auto finish = [&](const Eigen::VectorXd& xo, const Eigen::VectorXd& yo, QpStatus status) {
    result.x = xo;
    result.y_eq = yo.head(s.num_eq);
    result.y_in = yo.tail(m - s.num_eq);
    const Residuals r = residuals(s, xo, yo);
    report.primal_residual = r.primal;
    report.dual_residual = r.dual;
    report.objective = qp.objective(xo);
    report.duality_gap = dual_objective_gap(s, xo, yo);
    report.status = status;
  };

  if (warm != nullptr && warm->x.size() == n && warm->y.size() == m) {
    Eigen::VectorXd xp, yp;
    if (polish(s, s.A * warm->x, warm->y, settings.tol, xp, yp)) {
      report.polished = true;
      finish(xp, yp, QpStatus::kOptimal);
      return result;
    }
    x = warm->x.cwiseQuotient(D);
    z = (As * x).cwiseMax(ls).cwiseMin(us);
    y = warm->y.cwiseQuotient(E) * cost_scale;
  }

  double last_polish_attempt = kInf;
  for (int iter = 1; iter <= settings.max_iter; ++iter) {
    report.iterations = iter;
    x_prev = x;
    z_prev = z;
    y_prev = y;

    const Eigen::VectorXd rhs =
        settings.sigma * x - qs + As.transpose() * (rho_vec.cwiseProduct(z) - y);
    const Eigen::VectorXd x_tilde = llt.solve(rhs);
    const Eigen::VectorXd z_tilde = As * x_tilde;
    x = settings.alpha * x_tilde + (1.0 - settings.alpha) * x_prev;
    const Eigen::VectorXd z_relaxed = settings.alpha * z_tilde + (1.0 - settings.alpha) * z_prev;
    z = (z_relaxed + y.cwiseQuotient(rho_vec)).cwiseMax(ls).cwiseMin(us);
    y = y + rho_vec.cwiseProduct(z_relaxed - z);

    Eigen::VectorXd xo, yo, zo;
    unscale(x, y, z, xo, yo, zo);
    const Residuals r = residuals(s, xo, yo);
    const double r_prim = inf_norm(s.A * xo - zo);
    const double r_dual = r.dual;

    if (std::max(r_prim, r_dual) <= settings.tol && r.primal <= settings.tol) {
      // Raw ADMM iterate already satisfies the tolerance; polishing can
      // still tighten complementarity.
      Eigen::VectorXd xp, yp;
      if (polish(s, zo, yo, settings.tol, xp, yp)) {
        report.polished = true;
        finish(xp, yp, QpStatus::kOptimal);
      } else {
        finish(xo, yo, QpStatus::kOptimal);
      }
      return result;
    }

    const double admm_res = std::max(r_prim, r_dual);
    if (admm_res <= settings.polish_trigger && admm_res < 0.2 * last_polish_attempt) {
      last_polish_attempt = admm_res;
      Eigen::VectorXd xp, yp;
      if (polish(s, zo, yo, settings.tol, xp, yp)) {
        report.polished = true;
        finish(xp, yp, QpStatus::kOptimal);
        return result;
      }
    }

    // Primal infeasibility certificate on the scaled iterates.
    delta_y = y - y_prev;
    const double dy_norm = inf_norm(E.cwiseProduct(delta_y));
    if (dy_norm > 1e-12) {
      const double aty = inf_norm(D.cwiseInverse().cwiseProduct(As.transpose() * delta_y));
      double support = 0.0;
      bool support_finite = true;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double d = delta_y[i];
        if (d > 0.0) {
          if (us[i] == kInf) {
            if (d * E[i] > settings.infeasibility_tol * dy_norm) support_finite = false;
          } else {
            support += us[i] * d;
          }
        } else if (d < 0.0) {
          if (ls[i] == -kInf) {
            if (-d * E[i] > settings.infeasibility_tol * dy_norm) support_finite = false;
          } else {
            support += ls[i] * d;
          }
        }
      }
      if (support_finite && aty <= settings.infeasibility_tol * dy_norm &&
          support <= -settings.infeasibility_tol * dy_norm) {
        finish(xo, yo, QpStatus::kInfeasible);
        return result;
      }
    }

    if (settings.adaptive_rho_interval > 0 && iter % settings.adaptive_rho_interval == 0) {
      const double prim_scale = std::max({inf_norm(As * x), inf_norm(z), 1e-10});
      const double dual_scale = std::max(
          {inf_norm(Ps * x), inf_norm(As.transpose() * y), inf_norm(qs), 1e-10});
      const double sp = inf_norm(As * x - z) / prim_scale;
      const double sd = inf_norm(Ps * x + qs + As.transpose() * y) / dual_scale;
      if (sd > 1e-14) {
        const double new_rho = rho * std::sqrt(sp / sd);
        if (new_rho > 5.0 * rho || new_rho < 0.2 * rho) {
          set_rho(new_rho);
          if (!factor()) break;
        }
      }
    }
  }

  Eigen::VectorXd xo, yo, zo;
  unscale(x, y, z, xo, yo, zo);
  finish(xo, yo, QpStatus::kMaxIterations);
  return result;
}

inline QpResult solve_qp(const QuadraticProgram& qp, double tol = 1e-8, int max_iter = 20000) {
  QpSettings settings;
  settings.tol = tol;
  settings.max_iter = max_iter;
  return solve_qp(qp, settings);
}

}  // namespace tdr_obca
