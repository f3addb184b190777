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

// Primal-dual interior-point method for
//
//   min f(x)  s.t.  cl <= c(x) <= cu,  xl <= x <= xu
//
// Rows with cl < cu get a slack s with c(x) - s = 0 and cl <= s <= cu, so the
// iteration works on equality constraints and simple bounds only. Each step
// solves the regularized primal-dual system
//
//   [ W + Sigma + dw I   J'    ] [ dx ]   [ -grad phi - J'y ]
//   [ J                 -dc I  ] [ dy ] = [ -c              ]
//
// with a sparse LDL' factorization; dw is raised until the inertia is
// (n, m). Globalization is a filter line search on (constraint violation,
// barrier objective) with second-order corrections, and mu follows the
// monotone Fiacco-McCormick rule.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <deque>
#include <limits>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "tdr_obca/common.hpp"
#include "tdr_obca/qp_solver.hpp"

namespace tdr_obca {

class NlpProblem {
 public:
  virtual ~NlpProblem() = default;
  virtual Eigen::Index num_variables() const = 0;
  virtual Eigen::Index num_constraints() const = 0;
  virtual void bounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& cl,
                      Eigen::VectorXd& cu) const = 0;
  virtual Eigen::VectorXd initial_point() const = 0;
  virtual double objective(const Eigen::VectorXd& x) const = 0;
  virtual void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const = 0;
  virtual void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& c) const = 0;
  virtual void jacobian_structure(std::vector<int>& rows, std::vector<int>& cols) const = 0;
  virtual void jacobian_values(const Eigen::VectorXd& x, std::vector<double>& values) const = 0;
  /// Lower triangle (row >= col) of the Lagrangian Hessian
  /// obj_factor * grad^2 f + sum y_i grad^2 c_i.
  virtual void hessian_structure(std::vector<int>& rows, std::vector<int>& cols) const = 0;
  virtual void hessian_values(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& y,
                              std::vector<double>& values) const = 0;
};

enum class NlpStatus { kOptimal, kInfeasible, kMaxIterations, kNumericalFailure };

constexpr std::string_view to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::kOptimal: return "Optimal";
    case NlpStatus::kInfeasible: return "Infeasible";
    case NlpStatus::kMaxIterations: return "MaxIterations";
    case NlpStatus::kNumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

struct NlpSettings {
  double tol = 1e-6;              // scaled optimality error
  double constr_viol_tol = 1e-7;  // unscaled |c(x) - s|_inf, bounds on c
  double compl_tol = 1e-6;        // unscaled complementarity
  int max_iter = 500;
  double mu_init = 0.1;
  double bound_push = 1e-2;
  double bound_frac = 1e-2;
  double kappa_eps = 10.0;
  double kappa_mu = 0.2;
  double theta_mu = 1.5;
  double tau_min = 0.99;
  double delta_c = 1e-9;
  int max_soc = 4;
  double max_wall_seconds = std::numeric_limits<double>::infinity();
  bool trace = false;  // one line per iteration on stderr
};

struct NlpReport {
  NlpStatus status = NlpStatus::kMaxIterations;
  int iterations = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double stationarity = std::numeric_limits<double>::infinity();    // |grad L|_inf
  double primal_infeasibility = std::numeric_limits<double>::infinity();
  double complementarity = std::numeric_limits<double>::infinity();
  double scaled_error = std::numeric_limits<double>::infinity();
  double final_mu = 0.0;
  double wall_time = 0.0;
  std::vector<double> step_sizes;  // accepted primal step per iteration
};

struct NlpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y;    // constraint multipliers, grad f + J'y - z_l + z_u = 0
  Eigen::VectorXd z_l;  // bound multipliers of x
  Eigen::VectorXd z_u;
  NlpReport report;
};

namespace nlp_detail {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBigBound = 1e19;

// Sparse symmetric KKT matrix (lower triangle) with a fixed pattern and a
// map from each contribution to its value slot.
class KktMatrix {
 public:
  void build(Eigen::Index n, Eigen::Index m, const std::vector<int>& hr, const std::vector<int>& hc,
             const std::vector<int>& jr, const std::vector<int>& jc) {
    n_ = n;
    m_ = m;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(hr.size() + jr.size() + n + m);
    for (std::size_t i = 0; i < hr.size(); ++i) t.emplace_back(hr[i], hc[i], 1.0);
    for (std::size_t i = 0; i < jr.size(); ++i) t.emplace_back(n + jr[i], jc[i], 1.0);
    for (Eigen::Index i = 0; i < n + m; ++i) t.emplace_back(i, i, 1.0);
    K_.resize(n + m, n + m);
    K_.setFromTriplets(t.begin(), t.end());
    K_.makeCompressed();
    auto slot = [&](Eigen::Index r, Eigen::Index c) {
      const auto* outer = K_.outerIndexPtr();
      const auto* inner = K_.innerIndexPtr();
      const auto* b = inner + outer[c];
      const auto* e = inner + outer[c + 1];
      const auto* it = std::lower_bound(b, e, static_cast<int>(r));
      return static_cast<int>(it - inner);
    };
    h_slot_.resize(hr.size());
    for (std::size_t i = 0; i < hr.size(); ++i) h_slot_[i] = slot(hr[i], hc[i]);
    j_slot_.resize(jr.size());
    for (std::size_t i = 0; i < jr.size(); ++i) j_slot_[i] = slot(n + jr[i], jc[i]);
    d_slot_.resize(n + m);
    for (Eigen::Index i = 0; i < n + m; ++i) d_slot_[i] = slot(i, i);
    ldlt_.analyzePattern(K_);
  }

  // Values of W (lower), J, and the diagonal shifts.
  void assemble(const std::vector<double>& h, const std::vector<double>& j,
                const Eigen::VectorXd& diag_x, double dc) {
    double* v = K_.valuePtr();
    std::fill(v, v + K_.nonZeros(), 0.0);
    for (std::size_t i = 0; i < h.size(); ++i) v[h_slot_[i]] += h[i];
    for (std::size_t i = 0; i < j.size(); ++i) v[j_slot_[i]] += j[i];
    for (Eigen::Index i = 0; i < n_; ++i) v[d_slot_[i]] += diag_x[i];
    for (Eigen::Index i = 0; i < m_; ++i) v[d_slot_[n_ + i]] -= dc;
  }

  void shift_primal(double delta) {
    double* v = K_.valuePtr();
    for (Eigen::Index i = 0; i < n_; ++i) v[d_slot_[i]] += delta;
  }

  // Factorizes and returns true when the inertia is (n, m, 0).
  bool factorize() {
    ldlt_.factorize(K_);
    if (ldlt_.info() != Eigen::Success) return false;
    const Eigen::VectorXd& D = ldlt_.vectorD();
    Eigen::Index neg = 0;
    for (Eigen::Index i = 0; i < D.size(); ++i) {
      if (!std::isfinite(D[i]) || D[i] == 0.0) return false;
      if (D[i] < 0.0) ++neg;
    }
    return neg == m_;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return ldlt_.solve(rhs); }

  // Symmetric product with the stored lower triangle.
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
    return K_.selfadjointView<Eigen::Lower>() * x;
  }

 private:
  Eigen::Index n_ = 0, m_ = 0;
  Eigen::SparseMatrix<double> K_;
  std::vector<int> h_slot_, j_slot_, d_slot_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                        Eigen::AMDOrdering<int>> ldlt_;
};

}  // namespace nlp_detail

/// Solves the problem; never throws on non-convergence, the status says it.
inline NlpResult solve_nlp(const NlpProblem& problem, const NlpSettings& st = {}) {
  using namespace nlp_detail;
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  const Eigen::Index nx = problem.num_variables();
  const Eigen::Index m = problem.num_constraints();
  Eigen::VectorXd xl, xu, cl, cu;
  problem.bounds(xl, xu, cl, cu);
  if (xl.size() != nx || xu.size() != nx || cl.size() != m || cu.size() != m) {
    detail::fail(ErrorCode::kDimensionMismatch, "NLP bound vectors have wrong sizes");
  }

  // Slacks for ranged rows.
  std::vector<Eigen::Index> slack_row;
  std::vector<Eigen::Index> row_slack(m, -1);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (cl[i] > cu[i]) detail::fail(ErrorCode::kInvalidArgument, "constraint bounds cross");
    if (cl[i] != cu[i]) {
      row_slack[i] = static_cast<Eigen::Index>(slack_row.size());
      slack_row.push_back(i);
    }
  }
  const Eigen::Index ns = static_cast<Eigen::Index>(slack_row.size());
  const Eigen::Index n = nx + ns;

  Eigen::VectorXd lo(n), up(n);
  lo.head(nx) = xl;
  up.head(nx) = xu;
  for (Eigen::Index k = 0; k < ns; ++k) {
    lo[nx + k] = cl[slack_row[k]];
    up[nx + k] = cu[slack_row[k]];
  }
  std::vector<char> has_lo(n), has_up(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    has_lo[i] = lo[i] > -kBigBound;
    has_up[i] = up[i] < kBigBound;
    if (has_lo[i] && has_up[i] && !(up[i] > lo[i])) {
      detail::fail(ErrorCode::kInvalidArgument, "fixed or crossing variable bounds");
    }
  }

  std::vector<int> jr, jc, hr, hc;
  problem.jacobian_structure(jr, jc);
  problem.hessian_structure(hr, hc);
  // Slack columns: c_i(x) - s_k.
  std::vector<int> jr_full = jr, jc_full = jc;
  for (Eigen::Index k = 0; k < ns; ++k) {
    jr_full.push_back(static_cast<int>(slack_row[k]));
    jc_full.push_back(static_cast<int>(nx + k));
  }
  KktMatrix kkt;
  kkt.build(n, m, hr, hc, jr_full, jc_full);

  std::vector<double> jv(jr.size()), jv_full(jr_full.size()), hv(hr.size());
  auto eval_jac = [&](const Eigen::VectorXd& w) {
    problem.jacobian_values(w.head(nx), jv);
    std::copy(jv.begin(), jv.end(), jv_full.begin());
    for (Eigen::Index k = 0; k < ns; ++k) jv_full[jr.size() + k] = -1.0;
  };
  auto jac_t_mult = [&](const Eigen::VectorXd& y) {  // J' y
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < jr_full.size(); ++i) out[jc_full[i]] += jv_full[i] * y[jr_full[i]];
    return out;
  };
  Eigen::VectorXd cbuf(m);
  auto eval_c = [&](const Eigen::VectorXd& w) {
    problem.constraints(w.head(nx), cbuf);
    Eigen::VectorXd c = cbuf;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (row_slack[i] >= 0) {
        c[i] -= w[nx + row_slack[i]];
      } else {
        c[i] -= cl[i];
      }
    }
    return c;
  };
  Eigen::VectorXd gbuf(nx);
  auto eval_grad = [&](const Eigen::VectorXd& w) {
    problem.gradient(w.head(nx), gbuf);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    g.head(nx) = gbuf;
    return g;
  };
  auto eval_f = [&](const Eigen::VectorXd& w) { return problem.objective(w.head(nx)); };

  // Initial point pushed strictly inside the bounds.
  Eigen::VectorXd w(n);
  {
    const Eigen::VectorXd x0 = problem.initial_point();
    if (x0.size() != nx) detail::fail(ErrorCode::kDimensionMismatch, "initial point size");
    w.head(nx) = x0;
    problem.constraints(x0, cbuf);
    for (Eigen::Index k = 0; k < ns; ++k) w[nx + k] = cbuf[slack_row[k]];
    for (Eigen::Index i = 0; i < n; ++i) {
      double pl = 0, pu = 0;
      if (has_lo[i]) pl = st.bound_push * std::max(1.0, std::abs(lo[i]));
      if (has_up[i]) pu = st.bound_push * std::max(1.0, std::abs(up[i]));
      if (has_lo[i] && has_up[i]) {
        pl = std::min(pl, st.bound_frac * (up[i] - lo[i]));
        pu = std::min(pu, st.bound_frac * (up[i] - lo[i]));
      }
      if (has_lo[i]) w[i] = std::max(w[i], lo[i] + pl);
      if (has_up[i]) w[i] = std::min(w[i], up[i] - pu);
    }
  }

  double mu = st.mu_init;
  Eigen::VectorXd zl = Eigen::VectorXd::Zero(n), zu = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (has_lo[i]) zl[i] = 1.0;
    if (has_up[i]) zu[i] = 1.0;
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  auto slack_lo = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = has_lo[i] ? v[i] - lo[i] : 1.0;
    return s;
  };
  auto slack_up = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = has_up[i] ? up[i] - v[i] : 1.0;
    return s;
  };
  auto barrier = [&](const Eigen::VectorXd& v, double f) {
    double phi = f;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (has_lo[i]) phi -= mu * std::log(v[i] - lo[i]);
      if (has_up[i]) phi -= mu * std::log(up[i] - v[i]);
    }
    return phi;
  };
  auto barrier_grad = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& g) {
    Eigen::VectorXd bg = g;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (has_lo[i]) bg[i] -= mu / (v[i] - lo[i]);
      if (has_up[i]) bg[i] += mu / (up[i] - v[i]);
    }
    return bg;
  };

  NlpResult result;
  NlpReport& rep = result.report;

  // Least-squares multiplier estimate from [I J'; J 0].
  Eigen::VectorXd g = eval_grad(w);
  eval_jac(w);
  {
    std::fill(hv.begin(), hv.end(), 0.0);
    kkt.assemble(hv, jv_full, Eigen::VectorXd::Ones(n), st.delta_c);
    if (kkt.factorize()) {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
      rhs.head(n) = -(g - zl + zu);
      const Eigen::VectorXd sol = kkt.solve(rhs);
      const Eigen::VectorXd ye = sol.tail(m);
      if (ye.allFinite() && ye.lpNorm<Eigen::Infinity>() <= 1e3) y = ye;
    }
  }

  double f = eval_f(w);
  Eigen::VectorXd c = eval_c(w);
  const double theta0 = c.lpNorm<1>();
  const double theta_max = 1e4 * std::max(1.0, theta0);
  const double theta_min = 1e-4 * std::max(1.0, theta0);
  std::vector<std::pair<double, double>> filter;
  double delta_w_last = 0.0;
  int consecutive_ls_fail = 0;

  auto errors = [&](const Eigen::VectorXd& gl, const Eigen::VectorXd& cc, double mu_target,
                    double& stat, double& prim, double& comp, bool scaled) {
    stat = gl.lpNorm<Eigen::Infinity>();
    prim = cc.size() ? cc.lpNorm<Eigen::Infinity>() : 0.0;
    comp = 0.0;
    const Eigen::VectorXd sl = slack_lo(w), su = slack_up(w);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (has_lo[i]) comp = std::max(comp, std::abs(sl[i] * zl[i] - mu_target));
      if (has_up[i]) comp = std::max(comp, std::abs(su[i] * zu[i] - mu_target));
    }
    if (!scaled) return std::max({stat, prim, comp});
    const double smax = 100.0;
    const double zsum = zl.lpNorm<1>() + zu.lpNorm<1>();
    const double sd = std::max(smax, (y.lpNorm<1>() + zsum) / std::max<double>(1, n + m)) / smax;
    const double sc = std::max(smax, zsum / std::max<double>(1, n)) / smax;
    return std::max({stat / sd, prim, comp / sc});
  };

  auto finish = [&](NlpStatus status) {
    result.x = w.head(nx);
    result.y = y;
    result.z_l = zl.head(nx);
    result.z_u = zu.head(nx);
    rep.status = status;
    rep.objective = f;
    const Eigen::VectorXd gl = g + jac_t_mult(y) - zl + zu;
    double s, p, q;
    rep.scaled_error = errors(gl, c, 0.0, s, p, q, true);
    rep.stationarity = s;
    rep.primal_infeasibility = p;
    rep.complementarity = q;
    rep.final_mu = mu;
    rep.wall_time = elapsed();
    return result;
  };

  for (int iter = 0; iter <= st.max_iter; ++iter) {
    rep.iterations = iter;
    const Eigen::VectorXd gl = g + jac_t_mult(y) - zl + zu;
    double stat, prim, comp;
    const double e0 = errors(gl, c, 0.0, stat, prim, comp, true);
    if (e0 <= st.tol && prim <= st.constr_viol_tol && comp <= st.compl_tol) {
      return finish(NlpStatus::kOptimal);
    }
    if (iter == st.max_iter || elapsed() > st.max_wall_seconds) break;
    if (!w.allFinite() || !std::isfinite(f)) return finish(NlpStatus::kNumericalFailure);

    // Barrier parameter update.
    for (;;) {
      double s2, p2, q2;
      const Eigen::VectorXd glm = gl;
      const double emu = errors(glm, c, mu, s2, p2, q2, true);
      if (emu > st.kappa_eps * mu || mu <= st.tol / 10.0) break;
      mu = std::max(st.tol / 10.0, std::min(st.kappa_mu * mu, std::pow(mu, st.theta_mu)));
      filter.clear();
    }
    const double tau = std::max(st.tau_min, 1.0 - mu);

    // Newton system.
    problem.hessian_values(w.head(nx), 1.0, y, hv);
    const Eigen::VectorXd sl = slack_lo(w), su = slack_up(w);
    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (has_lo[i]) sigma[i] += zl[i] / sl[i];
      if (has_up[i]) sigma[i] += zu[i] / su[i];
    }
    kkt.assemble(hv, jv_full, sigma, st.delta_c);
    double delta_w = 0.0;
    bool factored = kkt.factorize();
    if (!factored) {
      delta_w = delta_w_last == 0.0 ? 1e-4 : std::max(1e-20, delta_w_last / 3.0);
      for (;;) {
        kkt.assemble(hv, jv_full, sigma, st.delta_c);
        kkt.shift_primal(delta_w);
        if (kkt.factorize()) {
          factored = true;
          break;
        }
        delta_w *= delta_w_last == 0.0 ? 100.0 : 8.0;
        if (delta_w > 1e40) break;
      }
      if (factored) delta_w_last = delta_w;
    }
    if (!factored) return finish(NlpStatus::kNumericalFailure);

    const Eigen::VectorXd bg = barrier_grad(w, g);
    Eigen::VectorXd rhs(n + m);
    rhs.head(n) = -(bg + jac_t_mult(y));
    rhs.tail(m) = -c;
    auto solve_refined = [&](const Eigen::VectorXd& b) {
      Eigen::VectorXd sol = kkt.solve(b);
      for (int r = 0; r < 3; ++r) {
        const Eigen::VectorXd res = b - kkt.multiply(sol);
        if (res.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, b.lpNorm<Eigen::Infinity>())) break;
        sol += kkt.solve(res);
      }
      return sol;
    };
    const Eigen::VectorXd sol = solve_refined(rhs);
    if (!sol.allFinite()) return finish(NlpStatus::kNumericalFailure);
    const Eigen::VectorXd dw = sol.head(n);
    const Eigen::VectorXd dy = sol.tail(m);
    Eigen::VectorXd dzl = Eigen::VectorXd::Zero(n), dzu = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (has_lo[i]) dzl[i] = mu / sl[i] - zl[i] - zl[i] / sl[i] * dw[i];
      if (has_up[i]) dzu[i] = mu / su[i] - zu[i] + zu[i] / su[i] * dw[i];
    }

    auto max_step = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& dv, bool primal) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (primal) {
          if (has_lo[i] && dv[i] < 0) a = std::min(a, -tau * (v[i] - lo[i]) / dv[i]);
          if (has_up[i] && dv[i] > 0) a = std::min(a, tau * (up[i] - v[i]) / dv[i]);
        } else if (dv[i] < 0 && v[i] > 0) {
          a = std::min(a, -tau * v[i] / dv[i]);
        }
      }
      return a;
    };
    const double alpha_max = max_step(w, dw, true);
    const double alpha_z = std::min(max_step(zl, dzl, false), max_step(zu, dzu, false));

    // Filter line search.
    const double phi = barrier(w, f);
    const double theta = c.lpNorm<1>();
    const double dphi = bg.dot(dw);
    const double alpha_min_frac = 0.05;
    const double gamma_theta = 1e-5, gamma_phi = 1e-8, eta_phi = 1e-8;
    const double s_phi = 2.3, s_theta = 1.1, delta_sw = 1.0;
    double alpha_min = 1e-12;
    if (dphi < 0) {
      alpha_min = std::min({gamma_theta, gamma_phi * theta / -dphi,
                            delta_sw * std::pow(theta, s_theta) / std::pow(-dphi, s_phi)});
    } else {
      alpha_min = gamma_theta;
    }
    alpha_min = std::max(alpha_min_frac * alpha_min, 1e-14);

    auto acceptable_to_filter = [&](double th, double ph) {
      if (th > theta_max) return false;
      for (const auto& [ft, fp] : filter) {
        if (th >= ft && ph >= fp) return false;
      }
      return true;
    };

    double alpha = alpha_max;
    bool accepted = false;
    Eigen::VectorXd w_trial;
    double f_trial = 0, theta_trial = 0;
    Eigen::VectorXd c_trial;
    bool armijo_step = false;
    bool first = true;
    while (alpha >= alpha_min) {
      w_trial = w + alpha * dw;
      f_trial = eval_f(w_trial);
      c_trial = eval_c(w_trial);
      theta_trial = c_trial.lpNorm<1>();
      const double phi_trial = barrier(w_trial, f_trial);
      auto check = [&](double th_t, double ph_t, double a) {
        if (!std::isfinite(ph_t) || !std::isfinite(th_t)) return false;
        if (!acceptable_to_filter(th_t, ph_t)) return false;
        const bool switching =
            dphi < 0 && a * std::pow(-dphi, s_phi) > delta_sw * std::pow(theta, s_theta);
        if (theta <= theta_min && switching) {
          armijo_step = true;
          return ph_t <= phi + eta_phi * a * dphi;
        }
        armijo_step = false;
        return th_t <= (1.0 - gamma_theta) * theta || ph_t <= phi - gamma_phi * theta;
      };
      if (check(theta_trial, phi_trial, alpha)) {
        accepted = true;
        break;
      }
      // Second-order correction on the first trial.
      if (first && theta_trial >= theta && st.max_soc > 0) {
        Eigen::VectorXd c_soc = alpha * c + c_trial;
        double theta_old_soc = theta;
        double theta_soc = theta_trial;
        for (int p = 0; p < st.max_soc; ++p) {
          if (p > 0 && theta_soc > 0.99 * theta_old_soc) break;
          Eigen::VectorXd rs(n + m);
          rs.head(n) = -(bg + jac_t_mult(y));
          rs.tail(m) = -c_soc;
          const Eigen::VectorXd ss = solve_refined(rs);
          const Eigen::VectorXd dsoc = ss.head(n);
          const double a_soc = max_step(w, dsoc, true);
          const Eigen::VectorXd ws = w + a_soc * dsoc;
          const double fs = eval_f(ws);
          const Eigen::VectorXd cs = eval_c(ws);
          theta_old_soc = theta_soc;
          theta_soc = cs.lpNorm<1>();
          if (check(theta_soc, barrier(ws, fs), alpha)) {
            w_trial = ws;
            f_trial = fs;
            c_trial = cs;
            theta_trial = theta_soc;
            accepted = true;
            break;
          }
          c_soc = a_soc * c_soc + cs;
        }
        if (accepted) break;
      }
      first = false;
      alpha *= 0.5;
    }

    if (!accepted) {
      // No acceptable step: take a short step anyway and remember the point
      // in the filter; repeated failures mean the method is stuck.
      if (++consecutive_ls_fail > 5) {
        return finish(theta > st.constr_viol_tol ? NlpStatus::kInfeasible
                                                 : NlpStatus::kNumericalFailure);
      }
      alpha = std::max(alpha_min, 1e-4 * alpha_max);
      w_trial = w + alpha * dw;
      f_trial = eval_f(w_trial);
      c_trial = eval_c(w_trial);
      theta_trial = c_trial.lpNorm<1>();
      filter.clear();
    } else {
      consecutive_ls_fail = 0;
      if (!armijo_step) {
        filter.emplace_back((1.0 - gamma_theta) * theta, phi - gamma_phi * theta);
      }
    }
    rep.step_sizes.push_back(alpha);
    if (st.trace) {
      std::fprintf(stderr, "%4d f=% .6e th=%.2e inf=%.2e mu=%.1e dw=%.1e a=%.2e az=%.2e %s\n", iter,
                   f, theta, prim, mu, delta_w, alpha, alpha_z,
                   accepted ? (armijo_step ? "f" : "h") : "!");
    }

    w = w_trial;
    f = f_trial;
    c = c_trial;
    y += alpha * dy;
    zl += alpha_z * dzl;
    zu += alpha_z * dzu;
    // Keep the bound multipliers within a factor of the central path.
    const Eigen::VectorXd sl2 = slack_lo(w), su2 = slack_up(w);
    constexpr double kSigma = 1e10;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (has_lo[i]) zl[i] = std::clamp(zl[i], mu / (kSigma * sl2[i]), kSigma * mu / sl2[i]);
      if (has_up[i]) zu[i] = std::clamp(zu[i], mu / (kSigma * su2[i]), kSigma * mu / su2[i]);
    }
    g = eval_grad(w);
    eval_jac(w);
  }
  return finish(NlpStatus::kMaxIterations);
}

/// A QuadraticProgram seen as an NLP: equality rows first, then the ranged
/// rows of A_in.
class QpAsNlp : public NlpProblem {
 public:
  explicit QpAsNlp(const QuadraticProgram& qp) : qp_(qp) {
    qp.validate();
    J_ = qp_detail::vstack(qp.A_eq, qp.A_in);
    for (Eigen::Index k = 0; k < J_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(J_, k); it; ++it) {
        jr_.push_back(static_cast<int>(it.row()));
        jc_.push_back(static_cast<int>(it.col()));
        jv_.push_back(it.value());
      }
    }
    for (Eigen::Index k = 0; k < qp.P.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(qp.P, k); it; ++it) {
        if (it.row() < it.col()) continue;
        hr_.push_back(static_cast<int>(it.row()));
        hc_.push_back(static_cast<int>(it.col()));
        hv_.push_back(it.value());
      }
    }
  }

  Eigen::Index num_variables() const override { return qp_.num_variables(); }
  Eigen::Index num_constraints() const override { return J_.rows(); }
  void bounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& cl,
              Eigen::VectorXd& cu) const override {
    const Eigen::Index n = num_variables(), me = qp_.b_eq.size();
    xl = Eigen::VectorXd::Constant(n, -1e20);
    xu = Eigen::VectorXd::Constant(n, 1e20);
    cl.resize(J_.rows());
    cu.resize(J_.rows());
    cl.head(me) = qp_.b_eq;
    cu.head(me) = qp_.b_eq;
    cl.tail(qp_.lower.size()) = qp_.lower.cwiseMax(-1e20);
    cu.tail(qp_.upper.size()) = qp_.upper.cwiseMin(1e20);
  }
  Eigen::VectorXd initial_point() const override {
    return Eigen::VectorXd::Zero(num_variables());
  }
  double objective(const Eigen::VectorXd& x) const override { return qp_.objective(x); }
  void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const override {
    g = qp_.P * x + qp_.q;
  }
  void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& c) const override { c = J_ * x; }
  void jacobian_structure(std::vector<int>& r, std::vector<int>& c) const override {
    r = jr_;
    c = jc_;
  }
  void jacobian_values(const Eigen::VectorXd&, std::vector<double>& v) const override { v = jv_; }
  void hessian_structure(std::vector<int>& r, std::vector<int>& c) const override {
    r = hr_;
    c = hc_;
  }
  void hessian_values(const Eigen::VectorXd&, double s, const Eigen::VectorXd&,
                      std::vector<double>& v) const override {
    v = hv_;
    for (double& e : v) e *= s;
  }

 private:
  const QuadraticProgram& qp_;
  SparseMatrix J_;
  std::vector<int> jr_, jc_, hr_, hc_;
  std::vector<double> jv_, hv_;
};

/// Interior-point solve of a convex QP, reported in QpResult form. Anything
/// short of Optimal other than detected infeasibility is MaxIterations.
inline QpResult solve_qp_interior_point(const QuadraticProgram& qp, const NlpSettings& st = {}) {
  const QpAsNlp nlp(qp);
  const NlpResult r = solve_nlp(nlp, st);
  QpResult out;
  out.x = r.x;
  const Eigen::Index me = qp.b_eq.size();
  out.y_eq = r.y.head(me);
  out.y_in = r.y.tail(r.y.size() - me);
  out.report.iterations = r.report.iterations;
  out.report.primal_residual = r.report.primal_infeasibility;
  out.report.dual_residual = r.report.stationarity;
  out.report.objective = r.report.objective;
  switch (r.report.status) {
    case NlpStatus::kOptimal: out.report.status = QpStatus::kOptimal; break;
    case NlpStatus::kInfeasible: out.report.status = QpStatus::kInfeasible; break;
    default: out.report.status = QpStatus::kMaxIterations; break;
  }
  return out;
}

}  // namespace tdr_obca
