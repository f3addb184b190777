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

// Direct transcription of the collision-avoidance MPC.
//
// Variables: states x(0..K), controls u(0..K-1), and for every obstacle m and
// step k = 1..K the multipliers lambda_m(k) >= 0, mu_m(k) >= 0 and, in the
// reformulated mode, a slack distance d_m(k) <= -eps.
//
// Reformulated (TDR):   -g'mu + (A t - b)'lambda + d = 0, soft terminal cost,
//                       beta * sum d in the objective.
// Original (Base, TD):  -g'mu + (A t - b)'lambda >= d_min, x(K) = x_F.
// Both:                 G'mu + R(phi)'A'lambda = 0,  |A'lambda|^2 <= 1.

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tdr_obca/common.hpp"
#include "tdr_obca/dual_warm_start.hpp"
#include "tdr_obca/geometry.hpp"
#include "tdr_obca/nlp_solver.hpp"
#include "tdr_obca/speed_profile.hpp"
#include "tdr_obca/vehicle.hpp"

namespace tdr_obca {

enum class MpcMode { kBase, kTD, kTDR };

constexpr std::string_view to_string(MpcMode m) {
  switch (m) {
    case MpcMode::kBase: return "base";
    case MpcMode::kTD: return "td";
    case MpcMode::kTDR: return "tdr";
  }
  return "unknown";
}

inline std::optional<MpcMode> parse_mode(std::string_view s) {
  if (s == "base") return MpcMode::kBase;
  if (s == "td") return MpcMode::kTD;
  if (s == "tdr") return MpcMode::kTDR;
  return std::nullopt;
}

struct MpcConfig {
  double alpha_x = 0.0;
  double alpha_xp = 1.0;
  double alpha_u = 1.0;
  double alpha_utilde = 5.0;
  double alpha_e = 100.0;
  // Per-term weight; the sum runs over M*K pairs, so 1 outweighs the
  // terminal term and the car stops short of the goal.
  double beta = 0.01;
  std::size_t K = 160;
  double d_min = 0.1;
  double slack_epsilon = kSlackEpsilon;
  double kkt_tol = 1e-6;
  int max_iter = 500;
  MpcMode mode = MpcMode::kTDR;
  double max_wall_seconds = std::numeric_limits<double>::infinity();
  bool solver_trace = false;

  void validate() const {
    for (double w : {alpha_x, alpha_xp, alpha_u, alpha_utilde, alpha_e, beta, d_min}) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        detail::fail(ErrorCode::kInvalidArgument, "MPC weights must be finite and >= 0");
      }
    }
    if (mode == MpcMode::kTDR && !(alpha_e > 0.0 && beta > 0.0)) {
      detail::fail(ErrorCode::kInvalidArgument, "alpha_e and beta must be positive in TDR mode");
    }
    if (K < 2) detail::fail(ErrorCode::kInvalidArgument, "K must be at least 2");
    if (!(kkt_tol > 0.0) || max_iter < 1 || !(slack_epsilon > 0.0)) {
      detail::fail(ErrorCode::kInvalidArgument, "invalid MPC solver settings");
    }
  }
};

struct MpcReport {
  NlpStatus status = NlpStatus::kMaxIterations;
  int iterations = 0;
  double stationarity = 0.0;
  double primal_infeasibility = 0.0;
  double complementarity = 0.0;
  double objective = 0.0;
  double wall_time = 0.0;
};

struct MpcSolution {
  double dt = 0.0;
  std::vector<VehicleState> states;    // K + 1
  std::vector<ControlInput> controls;  // K
  DualWarmStart duals;                 // [m][k - 1] for k = 1..K
  VehicleState x_F;                    // heading unwrapped to the trajectory
  ControlInput u_init;                 // reference for the first rate term
  std::optional<std::vector<ControlInput>> u_prev;
  MpcConfig config;
  MpcReport report;
};

/// Cost of a trajectory. `d` is indexed [m][k - 1] and ignored outside TDR
/// mode. Without `u_prev` the rate reference is u~(k-1) = u(k-2) and
/// u~(0) = u_init; with it, u~(k-1) = u_prev[k-1].
inline double evaluate_cost(std::span<const VehicleState> states,
                            std::span<const ControlInput> controls,
                            const std::vector<std::vector<double>>& d, const MpcConfig& config,
                            const VehicleState& x_F,
                            std::optional<std::span<const ControlInput>> u_prev = std::nullopt,
                            const ControlInput& u_init = {}) {
  const std::size_t K = controls.size();
  if (states.size() != K + 1 || K == 0) {
    detail::fail(ErrorCode::kDimensionMismatch, "evaluate_cost expects |states| = |controls| + 1");
  }
  if (u_prev && u_prev->size() != K) {
    detail::fail(ErrorCode::kDimensionMismatch, "u_prev must have K entries");
  }
  auto sq = [](const VehicleState& s) { return s.x * s.x + s.y * s.y + s.v * s.v + s.phi * s.phi; };
  auto diff = [](const VehicleState& a, const VehicleState& b) {
    return VehicleState{a.x - b.x, a.y - b.y, a.v - b.v, a.phi - b.phi};
  };
  auto usq = [](double ds, double da) { return ds * ds + da * da; };
  double J = 0.0;
  for (std::size_t k = 1; k <= K; ++k) {
    const ControlInput& u = controls[k - 1];
    ControlInput ref;
    if (u_prev) {
      ref = (*u_prev)[k - 1];
    } else {
      ref = k == 1 ? u_init : controls[k - 2];
    }
    J += config.alpha_x * sq(states[k]) + config.alpha_xp * sq(diff(states[k], states[k - 1])) +
         config.alpha_u * usq(u.steering, u.accel) +
         config.alpha_utilde * usq(u.steering - ref.steering, u.accel - ref.accel);
  }
  if (config.mode == MpcMode::kTDR) {
    J += config.alpha_e * sq(diff(states[K], x_F));
    for (const auto& row : d) {
      if (row.size() != K) detail::fail(ErrorCode::kDimensionMismatch, "d must have K columns");
      for (double v : row) J += config.beta * v;
    }
  }
  return J;
}

/// The transcribed NLP; also exposes its layout for inspection.
class MpcProblem : public NlpProblem {
 public:
  MpcProblem(const VehicleState& x0, const VehicleState& x_F, const WarmStartTrajectory& warm,
             const DualWarmStart& duals, std::span<const ConvexObstacle> obstacles,
             const VehicleFootprint& fp, const VehicleLimits& limits, const MpcConfig& config,
             std::optional<std::vector<ControlInput>> u_prev)
      : x0_(x0), config_(config), limits_(limits), dt_(warm.dt), K_(config.K),
        u_prev_(std::move(u_prev)) {
    const std::size_t K = K_;
    // Terminal heading taken on the same branch as the warm start's end.
    x_F_ = x_F;
    x_F_.phi = warm.states.back().phi + angle_diff(x_F.phi, warm.states.back().phi);
    u_init_ = warm.controls.front();
    G_ = fp.G();
    g_ = fp.g();
    for (const auto& o : obstacles) {
      A_.push_back(o.A());
      b_.push_back(o.b());
      AAt_.push_back(A_.back() * A_.back().transpose());
    }
    M_ = obstacles.size();
    const bool tdr = config.mode == MpcMode::kTDR;

    // Layout.
    Eigen::Index n = 0;
    x_off_.resize(K + 1);
    u_off_.resize(K);
    lam_off_.assign(M_, std::vector<Eigen::Index>(K + 1, -1));
    for (std::size_t k = 0; k <= K; ++k) {
      x_off_[k] = n;
      n += 4;
      if (k < K) {
        u_off_[k] = n;
        n += 2;
      }
      if (k >= 1) {
        for (std::size_t m = 0; m < M_; ++m) {
          lam_off_[m][k] = n;
          n += A_[m].rows() + 4 + (tdr ? 1 : 0);
        }
      }
    }
    n_ = n;
    Eigen::Index r = 0;
    row_init_ = r;
    r += 4;
    row_dyn_ = r;
    r += 4 * static_cast<Eigen::Index>(K);
    row_rate_ = r;
    r += static_cast<Eigen::Index>(K) - 1;
    row_col_ = r;
    r += 4 * static_cast<Eigen::Index>(K * M_);
    row_term_ = r;
    if (!tdr) r += 4;
    m_ = r;

    // Initial point: the warm starts as given.
    x_init_ = Eigen::VectorXd::Zero(n_);
    for (std::size_t k = 0; k <= K; ++k) {
      const VehicleState& s = k == 0 ? x0 : warm.states[k];
      x_init_.segment<4>(x_off_[k]) << s.x, s.y, s.v, s.phi;
    }
    for (std::size_t k = 0; k < K; ++k) {
      x_init_.segment<2>(u_off_[k]) << warm.controls[k].steering, warm.controls[k].accel;
    }
    for (std::size_t m = 0; m < M_; ++m) {
      const Eigen::Index nm = A_[m].rows();
      for (std::size_t k = 1; k <= K; ++k) {
        const Eigen::Index o = lam_off_[m][k];
        x_init_.segment(o, nm) = duals.lambda[m][k - 1];
        x_init_.segment<4>(o + nm) = duals.mu[m][k - 1];
        if (tdr) x_init_[o + nm + 4] = duals.d[m][k - 1];
      }
    }
  }

  // Layout accessors.
  std::size_t K() const { return K_; }
  std::size_t num_obstacles() const { return M_; }
  double dt() const { return dt_; }
  const MpcConfig& config() const { return config_; }
  const VehicleState& terminal_state() const { return x_F_; }
  const ControlInput& initial_control_reference() const { return u_init_; }
  const std::optional<std::vector<ControlInput>>& previous_controls() const { return u_prev_; }
  Eigen::Index state_index(std::size_t k) const { return x_off_[k]; }
  Eigen::Index control_index(std::size_t k) const { return u_off_[k]; }
  Eigen::Index lambda_index(std::size_t m, std::size_t k) const { return lam_off_[m][k]; }
  Eigen::Index mu_index(std::size_t m, std::size_t k) const {
    return lam_off_[m][k] + A_[m].rows();
  }
  /// -1 outside TDR mode.
  Eigen::Index slack_index(std::size_t m, std::size_t k) const {
    return tdr() ? lam_off_[m][k] + A_[m].rows() + 4 : -1;
  }
  Eigen::Index collision_row(std::size_t m, std::size_t k) const {
    return row_col_ + 4 * static_cast<Eigen::Index>((k - 1) * M_ + m);
  }
  bool has_terminal_equality() const { return !tdr(); }
  Eigen::Index terminal_row() const { return tdr() ? -1 : row_term_; }

  Eigen::Index num_variables() const override { return n_; }
  Eigen::Index num_constraints() const override { return m_; }

  void bounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& cl,
              Eigen::VectorXd& cu) const override {
    constexpr double inf = 1e20;
    xl = Eigen::VectorXd::Constant(n_, -inf);
    xu = Eigen::VectorXd::Constant(n_, inf);
    for (std::size_t k = 0; k <= K_; ++k) {
      xl[x_off_[k] + 2] = limits_.speed.lower;
      xu[x_off_[k] + 2] = limits_.speed.upper;
    }
    for (std::size_t k = 0; k < K_; ++k) {
      xl[u_off_[k]] = limits_.steering.lower;
      xu[u_off_[k]] = limits_.steering.upper;
      xl[u_off_[k] + 1] = limits_.accel.lower;
      xu[u_off_[k] + 1] = limits_.accel.upper;
    }
    for (std::size_t m = 0; m < M_; ++m) {
      for (std::size_t k = 1; k <= K_; ++k) {
        const Eigen::Index o = lam_off_[m][k];
        xl.segment(o, A_[m].rows() + 4).setZero();
        if (tdr()) xu[o + A_[m].rows() + 4] = -config_.slack_epsilon;
      }
    }
    cl = Eigen::VectorXd::Zero(m_);
    cu = Eigen::VectorXd::Zero(m_);
    cl.segment<4>(row_init_) << x0_.x, x0_.y, x0_.v, x0_.phi;
    cu.segment<4>(row_init_) = cl.segment<4>(row_init_);
    for (std::size_t k = 1; k < K_; ++k) {
      cl[row_rate_ + k - 1] = limits_.steering_rate.lower * dt_;
      cu[row_rate_ + k - 1] = limits_.steering_rate.upper * dt_;
    }
    for (std::size_t m = 0; m < M_; ++m) {
      for (std::size_t k = 1; k <= K_; ++k) {
        const Eigen::Index r = collision_row(m, k);
        if (!tdr()) {
          cl[r] = config_.d_min;
          cu[r] = inf;
        }
        cl[r + 3] = -inf;
        cu[r + 3] = 1.0;
      }
    }
    if (!tdr()) {
      cl.segment<4>(row_term_) << x_F_.x, x_F_.y, x_F_.v, x_F_.phi;
      cu.segment<4>(row_term_) = cl.segment<4>(row_term_);
    }
  }

  Eigen::VectorXd initial_point() const override { return x_init_; }

  std::vector<VehicleState> states(const Eigen::VectorXd& z) const {
    std::vector<VehicleState> s(K_ + 1);
    for (std::size_t k = 0; k <= K_; ++k) {
      const auto v = z.segment<4>(x_off_[k]);
      s[k] = {v[0], v[1], v[2], v[3]};
    }
    return s;
  }
  std::vector<ControlInput> controls(const Eigen::VectorXd& z) const {
    std::vector<ControlInput> u(K_);
    for (std::size_t k = 0; k < K_; ++k) u[k] = {z[u_off_[k]], z[u_off_[k] + 1]};
    return u;
  }
  /// Multipliers at z; outside TDR mode d = g'mu - (A t - b)'lambda.
  DualWarmStart duals(const Eigen::VectorXd& z) const {
    DualWarmStart out;
    out.lambda.assign(M_, {});
    out.mu.assign(M_, std::vector<Eigen::Vector4d>(K_));
    out.d.assign(M_, std::vector<double>(K_));
    out.degenerate.assign(M_, std::vector<bool>(K_, false));
    for (std::size_t m = 0; m < M_; ++m) {
      out.lambda[m].resize(K_);
      for (std::size_t k = 1; k <= K_; ++k) {
        const Eigen::Index o = lam_off_[m][k];
        const Eigen::Index nm = A_[m].rows();
        out.lambda[m][k - 1] = z.segment(o, nm);
        out.mu[m][k - 1] = z.segment<4>(o + nm);
        if (tdr()) {
          out.d[m][k - 1] = z[o + nm + 4];
        } else {
          const Eigen::Vector2d t = z.segment<2>(x_off_[k]);
          out.d[m][k - 1] =
              g_.dot(out.mu[m][k - 1]) - (A_[m] * t - b_[m]).dot(out.lambda[m][k - 1]);
        }
      }
    }
    return out;
  }

  double objective(const Eigen::VectorXd& z) const override {
    std::vector<std::vector<double>> d;
    if (tdr()) d = duals(z).d;
    const auto s = states(z);
    const auto u = controls(z);
    if (u_prev_) {
      return evaluate_cost(s, u, d, config_, x_F_, std::span<const ControlInput>(*u_prev_),
                           u_init_);
    }
    return evaluate_cost(s, u, d, config_, x_F_, std::nullopt, u_init_);
  }

  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    g = Eigen::VectorXd::Zero(n_);
    const auto& c = config_;
    for (std::size_t k = 1; k <= K_; ++k) {
      const auto xk = z.segment<4>(x_off_[k]);
      const auto xp = z.segment<4>(x_off_[k - 1]);
      g.segment<4>(x_off_[k]) += 2.0 * c.alpha_x * xk + 2.0 * c.alpha_xp * (xk - xp);
      g.segment<4>(x_off_[k - 1]) -= 2.0 * c.alpha_xp * (xk - xp);
      const auto uk = z.segment<2>(u_off_[k - 1]);
      g.segment<2>(u_off_[k - 1]) += 2.0 * c.alpha_u * uk;
      const Eigen::Vector2d diff = uk - rate_reference(z, k);
      g.segment<2>(u_off_[k - 1]) += 2.0 * c.alpha_utilde * diff;
      if (!u_prev_ && k >= 2) g.segment<2>(u_off_[k - 2]) -= 2.0 * c.alpha_utilde * diff;
    }
    if (tdr()) {
      const Eigen::Vector4d xf(x_F_.x, x_F_.y, x_F_.v, x_F_.phi);
      g.segment<4>(x_off_[K_]) += 2.0 * c.alpha_e * (z.segment<4>(x_off_[K_]) - xf);
      for (std::size_t m = 0; m < M_; ++m) {
        for (std::size_t k = 1; k <= K_; ++k) g[slack_index(m, k)] += c.beta;
      }
    }
  }

  void constraints(const Eigen::VectorXd& z, Eigen::VectorXd& out) const override {
    out.resize(m_);
    out.segment<4>(row_init_) = z.segment<4>(x_off_[0]);
    const double L = limits_.wheelbase;
    for (std::size_t k = 0; k < K_; ++k) {
      const auto x = z.segment<4>(x_off_[k]);
      const auto xn = z.segment<4>(x_off_[k + 1]);
      const double v = x[2], phi = x[3];
      const double delta = z[u_off_[k]], a = z[u_off_[k] + 1];
      const Eigen::Index r = row_dyn_ + 4 * static_cast<Eigen::Index>(k);
      out[r] = xn[0] - x[0] - dt_ * v * std::cos(phi);
      out[r + 1] = xn[1] - x[1] - dt_ * v * std::sin(phi);
      out[r + 2] = xn[2] - x[2] - dt_ * a;
      out[r + 3] = xn[3] - x[3] - dt_ * v * std::tan(delta) / L;
    }
    for (std::size_t k = 1; k < K_; ++k) {
      out[row_rate_ + k - 1] = z[u_off_[k]] - z[u_off_[k - 1]];
    }
    for (std::size_t m = 0; m < M_; ++m) {
      const Eigen::Index nm = A_[m].rows();
      for (std::size_t k = 1; k <= K_; ++k) {
        const Eigen::Index o = lam_off_[m][k];
        const auto lam = z.segment(o, nm);
        const auto mu = z.segment<4>(o + nm);
        const Eigen::Vector2d t = z.segment<2>(x_off_[k]);
        const double phi = z[x_off_[k] + 3];
        const double cs = std::cos(phi), sn = std::sin(phi);
        const Eigen::Vector2d w = A_[m].transpose() * lam;
        const Eigen::Vector2d gm = G_.transpose() * mu;
        const Eigen::Index r = collision_row(m, k);
        out[r] = (A_[m] * t - b_[m]).dot(lam) - g_.dot(mu) + (tdr() ? z[o + nm + 4] : 0.0);
        out[r + 1] = gm[0] + cs * w[0] + sn * w[1];
        out[r + 2] = gm[1] - sn * w[0] + cs * w[1];
        out[r + 3] = w.squaredNorm();
      }
    }
    if (!tdr()) out.segment<4>(row_term_) = z.segment<4>(x_off_[K_]);
  }

  void jacobian_structure(std::vector<int>& rows, std::vector<int>& cols) const override {
    rows.clear();
    cols.clear();
    auto add = [&](Eigen::Index r, Eigen::Index c) {
      rows.push_back(static_cast<int>(r));
      cols.push_back(static_cast<int>(c));
    };
    for (int i = 0; i < 4; ++i) add(row_init_ + i, x_off_[0] + i);
    for (std::size_t k = 0; k < K_; ++k) {
      const Eigen::Index r = row_dyn_ + 4 * static_cast<Eigen::Index>(k);
      const Eigen::Index x = x_off_[k], xn = x_off_[k + 1], u = u_off_[k];
      add(r, xn), add(r, x), add(r, x + 2), add(r, x + 3);
      add(r + 1, xn + 1), add(r + 1, x + 1), add(r + 1, x + 2), add(r + 1, x + 3);
      add(r + 2, xn + 2), add(r + 2, x + 2), add(r + 2, u + 1);
      add(r + 3, xn + 3), add(r + 3, x + 3), add(r + 3, x + 2), add(r + 3, u);
    }
    for (std::size_t k = 1; k < K_; ++k) {
      add(row_rate_ + k - 1, u_off_[k]);
      add(row_rate_ + k - 1, u_off_[k - 1]);
    }
    for (std::size_t m = 0; m < M_; ++m) {
      const Eigen::Index nm = A_[m].rows();
      for (std::size_t k = 1; k <= K_; ++k) {
        const Eigen::Index o = lam_off_[m][k], x = x_off_[k];
        const Eigen::Index r = collision_row(m, k);
        add(r, x), add(r, x + 1);
        for (Eigen::Index i = 0; i < nm + 4; ++i) add(r, o + i);
        if (tdr()) add(r, o + nm + 4);
        add(r + 1, x + 3);
        for (Eigen::Index i = 0; i < nm + 4; ++i) add(r + 1, o + i);
        add(r + 2, x + 3);
        for (Eigen::Index i = 0; i < nm + 4; ++i) add(r + 2, o + i);
        for (Eigen::Index i = 0; i < nm; ++i) add(r + 3, o + i);
      }
    }
    if (!tdr()) {
      for (int i = 0; i < 4; ++i) add(row_term_ + i, x_off_[K_] + i);
    }
  }

  void jacobian_values(const Eigen::VectorXd& z, std::vector<double>& vals) const override {
    vals.clear();
    auto put = [&](double v) { vals.push_back(v); };
    for (int i = 0; i < 4; ++i) put(1.0);
    const double L = limits_.wheelbase;
    for (std::size_t k = 0; k < K_; ++k) {
      const Eigen::Index x = x_off_[k];
      const double v = z[x + 2], phi = z[x + 3];
      const double delta = z[u_off_[k]];
      const double cs = std::cos(phi), sn = std::sin(phi);
      const double tn = std::tan(delta), sec2 = 1.0 + tn * tn;
      put(1.0), put(-1.0), put(-dt_ * cs), put(dt_ * v * sn);
      put(1.0), put(-1.0), put(-dt_ * sn), put(-dt_ * v * cs);
      put(1.0), put(-1.0), put(-dt_);
      put(1.0), put(-1.0), put(-dt_ * tn / L), put(-dt_ * v * sec2 / L);
    }
    for (std::size_t k = 1; k < K_; ++k) put(1.0), put(-1.0);
    for (std::size_t m = 0; m < M_; ++m) {
      const Eigen::Index nm = A_[m].rows();
      const auto& A = A_[m];
      for (std::size_t k = 1; k <= K_; ++k) {
        const Eigen::Index o = lam_off_[m][k], x = x_off_[k];
        const auto lam = z.segment(o, nm);
        const Eigen::Vector2d t = z.segment<2>(x);
        const double cs = std::cos(z[x + 3]), sn = std::sin(z[x + 3]);
        const Eigen::Vector2d w = A.transpose() * lam;
        // distance row
        put(w[0]), put(w[1]);
        const Eigen::VectorXd atb = A * t - b_[m];
        for (Eigen::Index i = 0; i < nm; ++i) put(atb[i]);
        for (int j = 0; j < 4; ++j) put(-g_[j]);
        if (tdr()) put(1.0);
        // body rows
        put(-sn * w[0] + cs * w[1]);
        for (Eigen::Index i = 0; i < nm; ++i) put(cs * A(i, 0) + sn * A(i, 1));
        for (int j = 0; j < 4; ++j) put(G_(j, 0));
        put(-cs * w[0] - sn * w[1]);
        for (Eigen::Index i = 0; i < nm; ++i) put(-sn * A(i, 0) + cs * A(i, 1));
        for (int j = 0; j < 4; ++j) put(G_(j, 1));
        // norm row
        const Eigen::VectorXd aw = A * w;
        for (Eigen::Index i = 0; i < nm; ++i) put(2.0 * aw[i]);
      }
    }
    if (!tdr()) {
      for (int i = 0; i < 4; ++i) put(1.0);
    }
  }

  void hessian_structure(std::vector<int>& rows, std::vector<int>& cols) const override {
    rows.clear();
    cols.clear();
    visit_hessian(nullptr, 0.0, nullptr, [&](Eigen::Index r, Eigen::Index c, double) {
      rows.push_back(static_cast<int>(std::max(r, c)));
      cols.push_back(static_cast<int>(std::min(r, c)));
    });
  }

  void hessian_values(const Eigen::VectorXd& z, double obj_factor, const Eigen::VectorXd& y,
                      std::vector<double>& vals) const override {
    vals.clear();
    visit_hessian(&z, obj_factor, &y,
                  [&](Eigen::Index, Eigen::Index, double v) { vals.push_back(v); });
  }

 private:
  bool tdr() const { return config_.mode == MpcMode::kTDR; }

  Eigen::Vector2d rate_reference(const Eigen::VectorXd& z, std::size_t k) const {
    if (u_prev_) return {(*u_prev_)[k - 1].steering, (*u_prev_)[k - 1].accel};
    if (k == 1) return {u_init_.steering, u_init_.accel};
    return z.segment<2>(u_off_[k - 2]);
  }

  // Emits every Hessian contribution in a fixed order; with z == nullptr
  // only the pattern matters.
  template <typename Emit>
  void visit_hessian(const Eigen::VectorXd* z, double s, const Eigen::VectorXd* y,
                     Emit&& emit) const {
    const auto& c = config_;
    const bool values = z != nullptr;
    // Objective.
    for (std::size_t k = 0; k <= K_; ++k) {
      double diag = 0.0;
      if (k >= 1) diag += 2.0 * c.alpha_x + 2.0 * c.alpha_xp;
      if (k < K_) diag += 2.0 * c.alpha_xp;
      if (k == K_ && tdr()) diag += 2.0 * c.alpha_e;
      for (int i = 0; i < 4; ++i) emit(x_off_[k] + i, x_off_[k] + i, s * diag);
      if (k >= 1) {
        for (int i = 0; i < 4; ++i) emit(x_off_[k] + i, x_off_[k - 1] + i, -2.0 * s * c.alpha_xp);
      }
    }
    for (std::size_t k = 0; k < K_; ++k) {
      double diag = 2.0 * c.alpha_u + 2.0 * c.alpha_utilde;
      if (!u_prev_ && k + 1 < K_) diag += 2.0 * c.alpha_utilde;
      for (int i = 0; i < 2; ++i) emit(u_off_[k] + i, u_off_[k] + i, s * diag);
      if (!u_prev_ && k >= 1) {
        for (int i = 0; i < 2; ++i) {
          emit(u_off_[k] + i, u_off_[k - 1] + i, -2.0 * s * c.alpha_utilde);
        }
      }
    }
    // Dynamics.
    const double L = limits_.wheelbase;
    for (std::size_t k = 0; k < K_; ++k) {
      const Eigen::Index x = x_off_[k], u = u_off_[k];
      const Eigen::Index r = row_dyn_ + 4 * static_cast<Eigen::Index>(k);
      double hvp = 0, hpp = 0, hvd = 0, hdd = 0;
      if (values) {
        const double v = (*z)[x + 2], phi = (*z)[x + 3], delta = (*z)[u];
        const double cs = std::cos(phi), sn = std::sin(phi);
        const double tn = std::tan(delta), sec2 = 1.0 + tn * tn;
        const double y0 = (*y)[r], y1 = (*y)[r + 1], y3 = (*y)[r + 3];
        hvp = y0 * dt_ * sn - y1 * dt_ * cs;
        hpp = y0 * dt_ * v * cs + y1 * dt_ * v * sn;
        hvd = -y3 * dt_ * sec2 / L;
        hdd = -y3 * dt_ * v * 2.0 * sec2 * tn / L;
      }
      emit(x + 3, x + 2, hvp);
      emit(x + 3, x + 3, hpp);
      emit(u, x + 2, hvd);
      emit(u, u, hdd);
    }
    // Collision blocks.
    for (std::size_t m = 0; m < M_; ++m) {
      const Eigen::Index nm = A_[m].rows();
      const auto& A = A_[m];
      for (std::size_t k = 1; k <= K_; ++k) {
        const Eigen::Index o = lam_off_[m][k], x = x_off_[k];
        const Eigen::Index r = collision_row(m, k);
        double y0 = 0, y1 = 0, y2 = 0, y3 = 0, cs = 0, sn = 0;
        Eigen::Vector2d w = Eigen::Vector2d::Zero();
        if (values) {
          y0 = (*y)[r], y1 = (*y)[r + 1], y2 = (*y)[r + 2], y3 = (*y)[r + 3];
          cs = std::cos((*z)[x + 3]);
          sn = std::sin((*z)[x + 3]);
          w = A.transpose() * (*z).segment(o, nm);
        }
        for (Eigen::Index i = 0; i < nm; ++i) {
          emit(o + i, x, y0 * A(i, 0));
          emit(o + i, x + 1, y0 * A(i, 1));
          emit(o + i, x + 3,
               y1 * (-sn * A(i, 0) + cs * A(i, 1)) + y2 * (-cs * A(i, 0) - sn * A(i, 1)));
          for (Eigen::Index j = 0; j <= i; ++j) emit(o + i, o + j, y3 * 2.0 * AAt_[m](i, j));
        }
        emit(x + 3, x + 3, y1 * (-cs * w[0] - sn * w[1]) + y2 * (sn * w[0] - cs * w[1]));
      }
    }
  }

  VehicleState x0_, x_F_;
  ControlInput u_init_;
  MpcConfig config_;
  VehicleLimits limits_;
  double dt_;
  std::size_t K_;
  std::size_t M_ = 0;
  std::optional<std::vector<ControlInput>> u_prev_;
  std::vector<Eigen::MatrixX2d> A_;
  std::vector<Eigen::VectorXd> b_;
  std::vector<Eigen::MatrixXd> AAt_;
  Eigen::Matrix<double, 4, 2> G_;
  Eigen::Vector4d g_;
  Eigen::Index n_ = 0, m_ = 0;
  std::vector<Eigen::Index> x_off_, u_off_;
  std::vector<std::vector<Eigen::Index>> lam_off_;
  Eigen::Index row_init_ = 0, row_dyn_ = 0, row_rate_ = 0, row_col_ = 0, row_term_ = 0;
  Eigen::VectorXd x_init_;
};

/// Duals with every lambda and mu entry at `value` and d from the distance
/// row at the given states (states indexed 0..K, blocks use 1..K).
inline DualWarmStart constant_duals(std::span<const VehicleState> states,
                                    std::span<const ConvexObstacle> obstacles,
                                    const VehicleFootprint& fp, double value = 0.1) {
  const std::size_t K = states.size() - 1;
  DualWarmStart out;
  out.resize(obstacles, K);
  const Eigen::Vector4d g = fp.g();
  for (std::size_t m = 0; m < obstacles.size(); ++m) {
    const Eigen::MatrixX2d A = obstacles[m].A();
    const Eigen::VectorXd b = obstacles[m].b();
    for (std::size_t k = 1; k <= K; ++k) {
      out.lambda[m][k - 1].setConstant(value);
      out.mu[m][k - 1].setConstant(value);
      const Eigen::Vector2d t(states[k].x, states[k].y);
      out.d[m][k - 1] = g.dot(out.mu[m][k - 1]) - (A * t - b).dot(out.lambda[m][k - 1]);
    }
  }
  return out;
}

/// Builds the NLP. `duals` is required in TD and TDR modes; Base mode falls
/// back to constant duals when it is null.
inline MpcProblem build_mpc(const VehicleState& x0, const VehicleState& x_F,
                            const WarmStartTrajectory& warm, const DualWarmStart* duals,
                            std::span<const ConvexObstacle> obstacles, const VehicleFootprint& fp,
                            const VehicleLimits& limits, const MpcConfig& config,
                            std::optional<std::vector<ControlInput>> u_prev = std::nullopt) {
  config.validate();
  limits.validate();
  const std::size_t K = config.K;
  if (warm.states.size() != K + 1 || warm.controls.size() != K) {
    detail::fail(ErrorCode::kDimensionMismatch, "warm start does not match K");
  }
  if (!(warm.dt > 0.0)) detail::fail(ErrorCode::kInvalidArgument, "warm start dt must be > 0");
  if (u_prev && u_prev->size() != K) {
    detail::fail(ErrorCode::kDimensionMismatch, "u_prev must have K entries");
  }
  DualWarmStart fallback;
  if (duals == nullptr) {
    if (config.mode != MpcMode::kBase) {
      detail::fail(ErrorCode::kModeMismatch, "TD and TDR modes need dual warm starts");
    }
    fallback = constant_duals(warm.states, obstacles, fp);
    duals = &fallback;
  }
  if (duals->num_obstacles() != obstacles.size() ||
      (!obstacles.empty() && duals->num_steps() != K)) {
    detail::fail(ErrorCode::kDimensionMismatch, "dual warm start does not match M x K");
  }
  for (std::size_t m = 0; m < obstacles.size(); ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      if (duals->lambda[m][k].size() != static_cast<Eigen::Index>(obstacles[m].size())) {
        detail::fail(ErrorCode::kDimensionMismatch, "lambda size does not match obstacle");
      }
    }
  }
  return MpcProblem(x0, x_F, warm, *duals, obstacles, fp, limits, config, std::move(u_prev));
}

inline MpcProblem build_mpc(const VehicleState& x0, const VehicleState& x_F,
                            const WarmStartTrajectory& warm, const DualWarmStart* duals,
                            const std::vector<ConvexObstacle>& obstacles,
                            const VehicleFootprint& fp, const VehicleLimits& limits,
                            const MpcConfig& config,
                            std::optional<std::vector<ControlInput>> u_prev = std::nullopt) {
  return build_mpc(x0, x_F, warm, duals, std::span<const ConvexObstacle>(obstacles), fp, limits,
                   config, std::move(u_prev));
}

inline NlpSettings nlp_settings_for(const MpcConfig& config) {
  NlpSettings s;
  s.tol = config.kkt_tol;
  // Tighter than the audit so an optimal point always passes it.
  s.constr_viol_tol = 1e-2 * config.kkt_tol;
  s.compl_tol = config.kkt_tol;
  s.max_iter = config.max_iter;
  s.max_wall_seconds = config.max_wall_seconds;
  s.trace = config.solver_trace;
  // Many multipliers of the warm start sit exactly at zero next to faces tens
  // of meters away; a large push moves the collision rows far off.
  s.bound_push = 1e-4;
  s.bound_frac = 1e-4;
  return s;
}

inline MpcSolution solve_mpc(const MpcProblem& nlp, const MpcConfig& config) {
  const NlpResult r = solve_nlp(nlp, nlp_settings_for(config));
  MpcSolution sol;
  sol.dt = nlp.dt();
  sol.states = nlp.states(r.x);
  sol.controls = nlp.controls(r.x);
  sol.duals = nlp.duals(r.x);
  sol.x_F = nlp.terminal_state();
  sol.u_init = nlp.initial_control_reference();
  sol.u_prev = nlp.previous_controls();
  sol.config = nlp.config();
  sol.report.status = r.report.status;
  sol.report.iterations = r.report.iterations;
  sol.report.stationarity = r.report.stationarity;
  sol.report.primal_infeasibility = r.report.primal_infeasibility;
  sol.report.complementarity = r.report.complementarity;
  sol.report.objective = r.report.objective;
  sol.report.wall_time = r.report.wall_time;
  return sol;
}

struct CertificateViolation {
  std::size_t m = 0;
  std::size_t k = 0;  // state index, 1..K
  double certified = 0.0;  // -d
  double distance = 0.0;
};

struct CollisionFinding {
  std::size_t m = 0;
  std::size_t k = 0;
  double depth = 0.0;
};

struct AuditReport {
  double max_dynamics_residual = 0.0;
  /// Both state indices of every transition whose residual exceeds the
  /// tolerance (a bad transition k -> k+1 flags k and k+1).
  std::vector<std::size_t> dynamics_flagged;
  std::vector<LimitViolation> limit_violations;
  std::vector<CertificateViolation> certificate_violations;
  std::vector<CollisionFinding> collisions;
  double min_distance = std::numeric_limits<double>::infinity();
  double cost = 0.0;

  bool passed() const {
    return dynamics_flagged.empty() && limit_violations.empty() &&
           certificate_violations.empty() && collisions.empty();
  }
};

struct AuditTolerances {
  double dynamics = 1e-6;
  double limits = 1e-6;
  double certificate = 1e-4;
  double penetration = 1e-6;
};

inline AuditReport verify_solution(const MpcSolution& sol,
                                   std::span<const ConvexObstacle> obstacles,
                                   const VehicleFootprint& fp, const VehicleLimits& limits,
                                   double dt, const AuditTolerances& tol = {}) {
  AuditReport rep;
  const std::size_t K = sol.controls.size();
  if (sol.states.size() != K + 1 || K == 0) {
    rep.dynamics_flagged.push_back(0);
    rep.max_dynamics_residual = std::numeric_limits<double>::infinity();
    return rep;
  }
  for (std::size_t k = 0; k < K; ++k) {
    const VehicleState p = step_dynamics(sol.states[k], sol.controls[k], dt, limits.wheelbase);
    const VehicleState& q = sol.states[k + 1];
    const double res = std::max({std::abs(p.x - q.x), std::abs(p.y - q.y), std::abs(p.v - q.v),
                                 std::abs(p.phi - q.phi)});
    rep.max_dynamics_residual = std::max(rep.max_dynamics_residual, res);
    if (res > tol.dynamics) {
      if (rep.dynamics_flagged.empty() || rep.dynamics_flagged.back() != k) {
        rep.dynamics_flagged.push_back(k);
      }
      rep.dynamics_flagged.push_back(k + 1);
    }
  }
  rep.limit_violations = check_limits(sol.states, sol.controls, limits, dt, tol.limits);
  const bool have_duals = sol.duals.num_obstacles() == obstacles.size();
  for (std::size_t m = 0; m < obstacles.size(); ++m) {
    const auto& ov = obstacles[m].vertices();
    for (std::size_t k = 1; k <= K; ++k) {
      const auto body = fp.vertices_at(sol.states[k]);
      const double dist = polygon_distance(std::span<const Point2>(body),
                                           std::span<const Point2>(ov));
      rep.min_distance = std::min(rep.min_distance, dist);
      if (dist == 0.0) {
        const double depth = overlap_depth(body, ov);
        if (depth > tol.penetration) rep.collisions.push_back({m, k, depth});
      }
      if (have_duals && sol.duals.num_steps() == K) {
        const double cert = -sol.duals.d[m][k - 1];
        if (cert > dist + tol.certificate) {
          rep.certificate_violations.push_back({m, k, cert, dist});
        }
      }
    }
  }
  if (sol.config.mode == MpcMode::kTDR && !have_duals) {
    rep.cost = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::optional<std::span<const ControlInput>> prev;
    if (sol.u_prev) prev = std::span<const ControlInput>(*sol.u_prev);
    rep.cost = evaluate_cost(sol.states, sol.controls, sol.duals.d, sol.config, sol.x_F, prev,
                             sol.u_init);
  }
  return rep;
}

inline AuditReport verify_solution(const MpcSolution& sol,
                                   const std::vector<ConvexObstacle>& obstacles,
                                   const VehicleFootprint& fp, const VehicleLimits& limits,
                                   double dt, const AuditTolerances& tol = {}) {
  return verify_solution(sol, std::span<const ConvexObstacle>(obstacles), fp, limits, dt, tol);
}

}  // namespace tdr_obca
