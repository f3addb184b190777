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

// Experiments over many plans: start-pose grids, obstacle-count scaling,
// trajectory smoothness statistics.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tdr_obca/common.hpp"
#include "tdr_obca/mpc.hpp"
#include "tdr_obca/pipeline.hpp"
#include "tdr_obca/serialization.hpp"

namespace tdr_obca {

// ------------------------------------------------------------ worker pool

/// Calls fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The first exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
}

// --------------------------------------------------------------- metrics

struct Stats {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  double std_dev = 0.0;  // population
  std::size_t count = 0;
};

inline Stats summarize(std::span<const double> xs) {
  if (xs.empty()) detail::fail(ErrorCode::kInvalidArgument, "no samples");
  Stats s;
  s.count = xs.size();
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  // Sorted summation keeps the statistics independent of sample order.
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(s.count);
  std::vector<double> dev;
  dev.reserve(sorted.size());
  for (double x : sorted) dev.push_back((x - s.mean) * (x - s.mean));
  std::sort(dev.begin(), dev.end());
  s.std_dev = std::sqrt(std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(s.count));
  return s;
}

/// (a(k) - a(k-1)) / dt for k = 1..K-1.
inline std::vector<double> control_jerk(std::span<const ControlInput> u, double dt) {
  std::vector<double> j;
  for (std::size_t k = 1; k < u.size(); ++k) j.push_back((u[k].accel - u[k - 1].accel) / dt);
  return j;
}

struct MetricsReport {
  Stats steering;  // |delta|
  Stats accel;     // |a|
  Stats jerk;      // |jerk|
  std::size_t cases = 0;
  std::size_t successes = 0;
  std::size_t failures = 0;
  PlanTimings mean_timings;  // over successful cases
};

/// Pools every control sample of the successful results.
inline MetricsReport compute_metrics(std::span<const PlanResult> results) {
  MetricsReport rep;
  rep.cases = results.size();
  std::vector<double> steer, accel, jerk;
  PlanTimings& t = rep.mean_timings;
  for (const auto& r : results) {
    if (!r.success()) {
      ++rep.failures;
      continue;
    }
    ++rep.successes;
    const auto& u = r.trajectory.controls;
    for (const auto& c : u) {
      steer.push_back(std::abs(c.steering));
      accel.push_back(std::abs(c.accel));
    }
    for (double j : control_jerk(u, r.trajectory.dt)) jerk.push_back(std::abs(j));
    t.coarse_search += r.timings.coarse_search;
    t.speed_profile += r.timings.speed_profile;
    t.dual_warm_start += r.timings.dual_warm_start;
    t.mpc += r.timings.mpc;
    t.audit += r.timings.audit;
    t.frame += r.timings.frame;
    t.total += r.timings.total;
  }
  if (rep.successes == 0) detail::fail(ErrorCode::kNoSuccessfulCases, "no successful case");
  rep.steering = summarize(steer);
  rep.accel = summarize(accel);
  if (!jerk.empty()) rep.jerk = summarize(jerk);
  const double n = static_cast<double>(rep.successes);
  for (double* x : {&t.coarse_search, &t.speed_profile, &t.dual_warm_start, &t.mpc, &t.audit,
                    &t.frame, &t.total}) {
    *x /= n;
  }
  return rep;
}

/// 100 (1 - b / a): how much smaller b is than a, in percent.
inline double percent_reduction(double a, double b) { return 100.0 * (1.0 - b / a); }

struct MetricsComparison {
  double steering = 0.0;
  double accel = 0.0;
  double jerk = 0.0;
};

inline MetricsComparison compare_metrics(const MetricsReport& a, const MetricsReport& b) {
  return {percent_reduction(a.steering.mean, b.steering.mean),
          percent_reduction(a.accel.mean, b.accel.mean), percent_reduction(a.jerk.mean, b.jerk.mean)};
}

// ---------------------------------------------------------- grid of starts

/// lo:step:hi, inclusive of hi up to rounding.
struct GridAxis {
  double lo = 0.0;
  double step = 1.0;
  double hi = 0.0;

  std::vector<double> values() const {
    if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
      detail::fail(ErrorCode::kInvalidArgument, "grid axis needs lo <= hi and step > 0");
    }
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = lo + static_cast<double>(i) * step;
    return v;
  }
};

/// "lo:step:hi" or a single value.
inline GridAxis parse_axis(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ':')) {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    }
  } catch (const std::exception&) {
    detail::fail(ErrorCode::kInvalidArgument, "bad axis '" + text + "', expected lo:step:hi");
  }
  if (parts.size() == 1) return {parts[0], 1.0, parts[0]};
  if (parts.size() != 3) detail::fail(ErrorCode::kInvalidArgument, "bad axis '" + text + "'");
  GridAxis a{parts[0], parts[1], parts[2]};
  (void)a.values();
  return a;
}

inline std::vector<MpcMode> parse_modes(const std::string& list) {
  std::vector<MpcMode> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto m = parse_mode(item);
    if (!m) detail::fail(ErrorCode::kInvalidArgument, "unknown mode '" + item + "'");
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  if (out.empty()) detail::fail(ErrorCode::kInvalidArgument, "no modes given");
  return out;
}

/// One plan; stage errors become a failed case instead of an exception.
struct CaseResult {
  std::string label;
  MpcMode mode = MpcMode::kTDR;
  std::optional<PlanResult> result;
  std::string error;  // stage error text when result is empty

  bool success() const { return result && result->success(); }
  std::string outcome() const {
    if (!result) return error;
    if (!result->success() && result->status() == NlpStatus::kOptimal) return "AuditFailed";
    return std::string(to_string(result->status()));
  }
};

inline CaseResult run_case(const Scenario& sc, MpcMode mode, const PlannerConfig& cfg,
                           std::string label = {}) {
  CaseResult c;
  c.label = std::move(label);
  c.mode = mode;
  MpcConfig mc = cfg.mpc;
  mc.mode = mode;
  try {
    c.result = plan(sc, cfg.grid, mc, cfg.plan);
  } catch (const PlannerError& e) {
    c.error = std::string(to_string(e.code()));
  }
  return c;
}

struct GridCase {
  double x = 0.0;
  double y = 0.0;
  CaseResult run;
};

struct ModeSummary {
  MpcMode mode = MpcMode::kTDR;
  std::size_t failures = 0;
  std::size_t total = 0;
  double failure_rate = 0.0;  // percent
  /// 100 (1 - rate / rate_base); empty without a Base run or when Base never fails.
  std::optional<double> reduction_vs_base;
};

struct GridReport {
  std::vector<double> xs, ys;
  std::vector<MpcMode> modes;
  std::vector<GridCase> cases;  // mode-major, then y, then x
  std::vector<ModeSummary> summary;

  std::vector<PlanResult> results(MpcMode mode, bool successful_only) const {
    std::vector<PlanResult> out;
    for (const auto& c : cases) {
      if (c.run.mode != mode || !c.run.result) continue;
      if (successful_only && !c.run.success()) continue;
      out.push_back(*c.run.result);
    }
    return out;
  }
};

inline std::vector<ModeSummary> summarize_modes(const std::vector<CaseResult*>& runs,
                                                const std::vector<MpcMode>& modes) {
  std::vector<ModeSummary> out;
  for (MpcMode m : modes) {
    ModeSummary s;
    s.mode = m;
    for (const CaseResult* r : runs) {
      if (r->mode != m) continue;
      ++s.total;
      if (!r->success()) ++s.failures;
    }
    s.failure_rate = s.total ? 100.0 * static_cast<double>(s.failures) / static_cast<double>(s.total)
                             : 0.0;
    out.push_back(s);
  }
  const auto base = std::find_if(out.begin(), out.end(),
                                 [](const ModeSummary& s) { return s.mode == MpcMode::kBase; });
  if (base != out.end() && base->failures > 0) {
    for (auto& s : out) {
      if (s.mode != MpcMode::kBase) s.reduction_vs_base = percent_reduction(base->failure_rate, s.failure_rate);
    }
  }
  return out;
}

/// Plans from every (x, y) start with heading 0, once per mode. `progress`
/// is called after each finished case (from worker threads, serialized).
inline GridReport run_grid_experiment(
    const Scenario& base, const GridAxis& x_axis, const GridAxis& y_axis,
    const std::vector<MpcMode>& modes, const PlannerConfig& cfg, unsigned threads = 0,
    const std::function<void(const GridCase&)>& progress = {}) {
  GridReport rep;
  rep.xs = x_axis.values();
  rep.ys = y_axis.values();
  rep.modes = modes;
  for (MpcMode m : modes) {
    for (double y : rep.ys) {
      for (double x : rep.xs) {
        GridCase c;
        c.x = x;
        c.y = y;
        c.run.mode = m;
        rep.cases.push_back(std::move(c));
      }
    }
  }
  std::mutex progress_mutex;
  parallel_for(rep.cases.size(), threads, [&](std::size_t i) {
    GridCase& c = rep.cases[i];
    Scenario sc = base;
    sc.x0 = {c.x, c.y, 0.0, 0.0};
    char label[64];
    std::snprintf(label, sizeof label, "x=%g y=%g", c.x, c.y);
    c.run = run_case(sc, c.run.mode, cfg, label);
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(c);
    }
  });
  std::vector<CaseResult*> runs;
  for (auto& c : rep.cases) runs.push_back(&c.run);
  rep.summary = summarize_modes(runs, modes);
  return rep;
}

inline std::string mode_label(MpcMode m) {
  switch (m) {
    case MpcMode::kBase: return "Base (H-OBCA)";
    case MpcMode::kTD: return "TD-OBCA";
    case MpcMode::kTDR: return "TDR-OBCA";
  }
  return "?";
}

inline std::string format_failure_table(const GridReport& rep) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %-10s %-12s %s\n", "Algorithm", "Failures", "Failure rate",
                "Reduced rate");
  out << line;
  for (const auto& s : rep.summary) {
    char reduced[32] = "-";
    if (s.reduction_vs_base) std::snprintf(reduced, sizeof reduced, "%.2f%%", *s.reduction_vs_base);
    char frac[32];
    std::snprintf(frac, sizeof frac, "%zu/%zu", s.failures, s.total);
    std::snprintf(line, sizeof line, "%-16s %-10s %11.2f%% %s\n", mode_label(s.mode).c_str(), frac,
                  s.failure_rate, reduced);
    out << line;
  }
  return out.str();
}

inline std::string format_metrics_table(const std::vector<std::pair<MpcMode, MetricsReport>>& rows) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-16s %-9s %9s %9s %9s %9s\n", "Algorithm", "Quantity", "mean",
                "max", "min", "std");
  out << line;
  for (const auto& [mode, m] : rows) {
    const std::pair<const char*, const Stats*> q[] = {
        {"|steer|", &m.steering}, {"|accel|", &m.accel}, {"|jerk|", &m.jerk}};
    for (const auto& [name, s] : q) {
      std::snprintf(line, sizeof line, "%-16s %-9s %9.4f %9.4f %9.4f %9.4f\n",
                    mode_label(mode).c_str(), name, s->mean, s->max, s->min, s->std_dev);
      out << line;
    }
  }
  return out.str();
}

/// Metrics of modes a and b restricted to the starts where both succeeded.
struct PairedMetrics {
  std::size_t common = 0;
  MetricsReport a, b;
  MetricsComparison reduction;  // b relative to a
};

inline std::optional<PairedMetrics> paired_metrics(const GridReport& rep, MpcMode a, MpcMode b) {
  std::vector<PlanResult> ra, rb;
  const std::size_t per_mode = rep.xs.size() * rep.ys.size();
  const auto ia = std::find(rep.modes.begin(), rep.modes.end(), a);
  const auto ib = std::find(rep.modes.begin(), rep.modes.end(), b);
  if (ia == rep.modes.end() || ib == rep.modes.end()) return std::nullopt;
  const std::size_t oa = static_cast<std::size_t>(ia - rep.modes.begin()) * per_mode;
  const std::size_t ob = static_cast<std::size_t>(ib - rep.modes.begin()) * per_mode;
  for (std::size_t i = 0; i < per_mode; ++i) {
    const CaseResult &ca = rep.cases[oa + i].run, &cb = rep.cases[ob + i].run;
    if (ca.success() && cb.success()) {
      ra.push_back(*ca.result);
      rb.push_back(*cb.result);
    }
  }
  if (ra.empty()) return std::nullopt;
  PairedMetrics p;
  p.common = ra.size();
  p.a = compute_metrics(ra);
  p.b = compute_metrics(rb);
  p.reduction = compare_metrics(p.a, p.b);
  return p;
}

inline Json stats_json(const Stats& s) {
  return {{"mean", s.mean}, {"max", s.max}, {"min", s.min}, {"std_dev", s.std_dev},
          {"count", s.count}};
}

inline Json metrics_json(const MetricsReport& m) {
  return {{"steering", stats_json(m.steering)},
          {"accel", stats_json(m.accel)},
          {"jerk", stats_json(m.jerk)},
          {"cases", m.cases},
          {"successes", m.successes},
          {"mean_frame_time", m.mean_timings.frame},
          {"mean_total_time", m.mean_timings.total}};
}

/// Per-case outcomes and per-mode summaries; trajectories are left out.
inline Json grid_report_json(const GridReport& rep) {
  Json cases = Json::array();
  for (const auto& c : rep.cases) {
    Json e = {{"x", c.x}, {"y", c.y}, {"mode", to_string(c.run.mode)}, {"outcome", c.run.outcome()},
              {"success", c.run.success()}};
    if (c.run.result) {
      e["iterations"] = c.run.result->trajectory.report.iterations;
      e["total_time"] = c.run.result->timings.total;
    }
    cases.push_back(std::move(e));
  }
  Json summary = Json::array();
  for (const auto& s : rep.summary) {
    Json e = {{"mode", to_string(s.mode)}, {"failures", s.failures}, {"total", s.total},
              {"failure_rate", s.failure_rate}};
    e["reduction_vs_base"] = s.reduction_vs_base ? Json(*s.reduction_vs_base) : Json(nullptr);
    summary.push_back(std::move(e));
  }
  return {{"xs", rep.xs}, {"ys", rep.ys}, {"cases", cases}, {"summary", summary}};
}

// --------------------------------------------------------------- scaling

struct ScalingCell {
  CaseResult run;
  std::optional<double> t_f;  // frame time when the plan succeeded
  std::optional<double> t_t;  // total time when the plan succeeded
};

struct ScalingRow {
  std::string scenario;
  std::size_t n_boundary = 0;  // boundary obstacles (one segment each)
  std::size_t n_agent = 0;     // edges of agent polygons
  std::vector<ScalingCell> cells;  // one per mode
  std::optional<double> frame_improvement;
  std::optional<double> total_improvement;
};

struct ScalingReport {
  std::vector<MpcMode> modes;
  std::vector<ScalingRow> rows;
  /// Reference (Base when present, else the first mode) and compared mode
  /// (TDR when present, else the last) of the improvement columns.
  std::optional<std::pair<std::size_t, std::size_t>> compared;
};

inline ScalingReport run_scaling_experiment(const std::vector<Scenario>& scenarios,
                                            const std::vector<MpcMode>& modes,
                                            const std::vector<PlannerConfig>& configs,
                                            unsigned threads = 0) {
  if (scenarios.empty()) detail::fail(ErrorCode::kInvalidArgument, "no scenarios");
  if (configs.size() != scenarios.size()) {
    detail::fail(ErrorCode::kDimensionMismatch, "one config per scenario");
  }
  ScalingReport rep;
  rep.modes = modes;
  rep.rows.resize(scenarios.size());
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    ScalingRow& row = rep.rows[s];
    row.scenario = scenarios[s].name;
    for (const auto& o : scenarios[s].all_obstacles()) {
      if (o.kind() == ObstacleKind::kBoundaryA) {
        ++row.n_boundary;
      } else {
        row.n_agent += o.normals().size();
      }
    }
    row.cells.resize(modes.size());
  }
  parallel_for(scenarios.size() * modes.size(), threads, [&](std::size_t i) {
    const std::size_t s = i / modes.size(), m = i % modes.size();
    ScalingCell& cell = rep.rows[s].cells[m];
    cell.run = run_case(scenarios[s], modes[m], configs[s], scenarios[s].name);
    if (cell.run.success()) {
      cell.t_f = cell.run.result->timings.frame;
      cell.t_t = cell.run.result->timings.total;
    }
  });
  if (modes.size() >= 2) {
    auto find = [&](MpcMode m, std::size_t fallback) {
      const auto it = std::find(modes.begin(), modes.end(), m);
      return it == modes.end() ? fallback : static_cast<std::size_t>(it - modes.begin());
    };
    const std::size_t ref = find(MpcMode::kBase, 0);
    const std::size_t cmp = find(MpcMode::kTDR, modes.size() - 1);
    if (ref != cmp) {
      rep.compared = std::make_pair(ref, cmp);
      for (auto& row : rep.rows) {
        const ScalingCell &a = row.cells[ref], &b = row.cells[cmp];
        if (a.t_f && b.t_f) row.frame_improvement = percent_reduction(*a.t_f, *b.t_f);
        if (a.t_t && b.t_t) row.total_improvement = percent_reduction(*a.t_t, *b.t_t);
      }
    }
  }
  return rep;
}

inline std::string format_scaling_table(const ScalingReport& rep) {
  std::ostringstream out;
  char buf[160];
  int width = 8;
  for (const auto& row : rep.rows) width = std::max(width, static_cast<int>(row.scenario.size()));
  std::snprintf(buf, sizeof buf, "%-*s  N_A  N_B", width, "Scenario");
  out << buf;
  for (MpcMode m : rep.modes) {
    std::snprintf(buf, sizeof buf, "  %5s t_f  %5s t_t", std::string(to_string(m)).c_str(),
                  std::string(to_string(m)).c_str());
    out << buf;
  }
  if (rep.compared) out << "   impr t_f   impr t_t";
  out << "\n";
  auto cell = [&](const std::optional<double>& v) {
    if (!v) return std::string("      N.A.");
    std::snprintf(buf, sizeof buf, "%9.3fs", *v);
    return std::string(buf);
  };
  auto pct = [&](const std::optional<double>& v) {
    if (!v) return std::string("       N.A.");
    std::snprintf(buf, sizeof buf, "%10.2f%%", *v);
    return std::string(buf);
  };
  for (const auto& row : rep.rows) {
    std::snprintf(buf, sizeof buf, "%-*s %4zu %4zu", width, row.scenario.c_str(), row.n_boundary,
                  row.n_agent);
    out << buf;
    for (const auto& c : row.cells) out << " " << cell(c.t_f) << " " << cell(c.t_t);
    if (rep.compared) out << " " << pct(row.frame_improvement) << " " << pct(row.total_improvement);
    out << "\n";
  }
  return out.str();
}

}  // namespace tdr_obca
