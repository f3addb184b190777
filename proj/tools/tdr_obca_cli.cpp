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

// tdr-obca: plan, grid, scale, check.
//
// Exit status: 0 when every requested plan is Optimal (check: audit
// passed), 1 when one is not, 2 on bad input.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tdr_obca/harness.hpp"
#include "tdr_obca/outputs.hpp"
#include "tdr_obca/serialization.hpp"

namespace fs = std::filesystem;
using namespace tdr_obca;

namespace {

constexpr int kExitNotOptimal = 1;
constexpr int kExitBadInput = 2;

struct Common {
  std::string config_file;
  unsigned threads = 0;
  bool trace = false;
};

/// Scenario file settings, then --config on top.
ScenarioFile load_with_overrides(const fs::path& path, const Common& common) {
  ScenarioFile f = load_scenario(path);
  if (!common.config_file.empty()) {
    Json j;
    try {
      j = Json::parse(read_text_file(common.config_file));
    } catch (const Json::parse_error& e) {
      detail::fail(ErrorCode::kInvalidArgument, common.config_file + ": " + e.what());
    }
    apply_config(j, f.config, common.config_file);
  }
  if (common.trace) f.config.mpc.solver_trace = true;
  return f;
}

void print_audit(const AuditReport& a) {
  std::printf("audit: %s  max dynamics residual %.3g  min distance %.4f m\n",
              a.passed() ? "passed" : "FAILED", a.max_dynamics_residual, a.min_distance);
  for (const auto& v : a.limit_violations) {
    std::printf("  limit %s at %zu: %.6g\n", std::string(to_string(v.quantity)).c_str(), v.index,
                v.value);
  }
  for (const auto& c : a.collisions) {
    std::printf("  collision with obstacle %zu at step %zu, depth %.3g m\n", c.m, c.k, c.depth);
  }
  for (const auto& c : a.certificate_violations) {
    std::printf("  certificate %zu/%zu claims %.4f > distance %.4f\n", c.m, c.k, c.certified,
                c.distance);
  }
  if (!a.dynamics_flagged.empty()) {
    std::printf("  %zu states off the dynamics\n", a.dynamics_flagged.size());
  }
}

int run_plan(const std::string& file, const std::string& mode, const std::string& out,
             const std::string& formats, const Common& common) {
  ScenarioFile f = load_with_overrides(file, common);
  if (!mode.empty()) {
    const auto m = parse_mode(mode);
    if (!m) detail::fail(ErrorCode::kInvalidArgument, "unknown mode '" + mode + "'");
    f.config.mpc.mode = *m;
  }
  const OutputFormats fmt = parse_formats(formats);
  const CaseResult c = run_case(f.scenario, f.config.mpc.mode, f.config, f.scenario.name);
  if (!c.result) {
    std::printf("%s [%s]: %s\n", f.scenario.name.c_str(),
                std::string(to_string(c.mode)).c_str(), c.error.c_str());
    return kExitNotOptimal;
  }
  const PlanResult& r = *c.result;
  const VehicleState& end = r.trajectory.states.back();
  std::printf("%s [%s%s]: %s after %d iterations, %.3f s (frame %.3f s)\n",
              f.scenario.name.c_str(), std::string(to_string(r.mode)).c_str(),
              r.cold_start ? ", cold start" : "", std::string(to_string(r.status())).c_str(),
              r.trajectory.report.iterations, r.timings.total, r.timings.frame);
  std::printf("terminal error %.4f m, %.4f rad; %zu gear segment(s)\n",
              std::hypot(end.x - f.scenario.x_F.x, end.y - f.scenario.x_F.y),
              std::abs(angle_diff(end.phi, f.scenario.x_F.phi)), r.gear_partitions.size());
  print_audit(r.audit);
  for (const auto& p : emit_outputs(r, f.scenario, out, fmt, f.scenario.name)) {
    std::printf("wrote %s\n", p.string().c_str());
  }
  return r.status() == NlpStatus::kOptimal ? 0 : kExitNotOptimal;
}

int run_grid(const std::string& file, const std::string& xs, const std::string& ys,
             const std::string& modes_text, const std::string& out, bool quiet,
             const Common& common) {
  const ScenarioFile f = load_with_overrides(file, common);
  const std::vector<MpcMode> modes = parse_modes(modes_text);
  const GridAxis gx = parse_axis(xs), gy = parse_axis(ys);
  const std::size_t total = gx.values().size() * gy.values().size() * modes.size();
  std::size_t done = 0;
  const GridReport rep = run_grid_experiment(
      f.scenario, gx, gy, modes, f.config, common.threads, [&](const GridCase& c) {
        ++done;
        if (!quiet) {
          std::fprintf(stderr, "[%zu/%zu] %-5s x=%6.2f y=%5.2f %s\n", done, total,
                       std::string(to_string(c.run.mode)).c_str(), c.x, c.y,
                       c.run.outcome().c_str());
        }
      });
  std::printf("%zu starts x %zu modes\n\n%s", rep.xs.size() * rep.ys.size(), modes.size(),
              format_failure_table(rep).c_str());
  std::vector<std::pair<MpcMode, MetricsReport>> rows;
  for (MpcMode m : modes) {
    const auto ok = rep.results(m, true);
    if (!ok.empty()) rows.emplace_back(m, compute_metrics(ok));
  }
  if (!rows.empty()) std::printf("\nOver each mode's successful cases:\n%s", format_metrics_table(rows).c_str());
  if (modes.size() >= 2) {
    const MpcMode a = std::find(modes.begin(), modes.end(), MpcMode::kBase) != modes.end()
                          ? MpcMode::kBase
                          : modes.front();
    const MpcMode b = std::find(modes.begin(), modes.end(), MpcMode::kTDR) != modes.end()
                          ? MpcMode::kTDR
                          : modes.back();
    if (a != b) {
      if (const auto p = paired_metrics(rep, a, b)) {
        std::printf("\n%s vs %s over %zu common successes: |steer| %.2f%%, |accel| %.2f%%, "
                    "|jerk| %.2f%% reduction\n",
                    std::string(to_string(b)).c_str(), std::string(to_string(a)).c_str(), p->common,
                    p->reduction.steering, p->reduction.accel, p->reduction.jerk);
      }
    }
  }
  if (!out.empty()) {
    std::error_code ec;
    fs::create_directories(out, ec);
    const fs::path p = fs::path(out) / (f.scenario.name + "_grid.json");
    write_text_file(p, grid_report_json(rep).dump(1));
    std::printf("wrote %s\n", p.string().c_str());
  }
  const bool all = std::all_of(rep.cases.begin(), rep.cases.end(), [](const GridCase& c) {
    return c.run.result && c.run.result->status() == NlpStatus::kOptimal;
  });
  return all ? 0 : kExitNotOptimal;
}

int run_scale(const std::string& dir, const std::string& modes_text, const Common& common) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  if (ec) detail::fail(ErrorCode::kIoError, "cannot list " + dir + ": " + ec.message());
  std::sort(files.begin(), files.end());
  std::vector<Scenario> scenarios;
  std::vector<PlannerConfig> configs;
  for (const auto& p : files) {
    ScenarioFile f = load_with_overrides(p, common);
    scenarios.push_back(std::move(f.scenario));
    configs.push_back(f.config);
  }
  const ScalingReport rep =
      run_scaling_experiment(scenarios, parse_modes(modes_text), configs, common.threads);
  std::printf("%s", format_scaling_table(rep).c_str());
  bool all = true;
  for (const auto& row : rep.rows) {
    for (const auto& c : row.cells) {
      if (!c.run.result || c.run.result->status() != NlpStatus::kOptimal) {
        all = false;
        std::printf("%s [%s]: %s\n", row.scenario.c_str(),
                    std::string(to_string(c.run.mode)).c_str(), c.run.outcome().c_str());
      }
    }
  }
  return all ? 0 : kExitNotOptimal;
}

int run_check(const std::string& result_file, const std::string& scenario_file) {
  const PlanResult r = parse_result(read_text_file(result_file));
  const Scenario sc = load_scenario(scenario_file).scenario;
  const auto obstacles = sc.all_obstacles();
  if (!r.trajectory.duals.lambda.empty() && r.trajectory.duals.num_obstacles() != obstacles.size()) {
    detail::fail(ErrorCode::kDimensionMismatch,
                 "result has duals for " + std::to_string(r.trajectory.duals.num_obstacles()) +
                     " obstacles, scenario has " + std::to_string(obstacles.size()));
  }
  const AuditReport a =
      verify_solution(r.trajectory, obstacles, sc.footprint, sc.limits, r.trajectory.dt);
  std::printf("%s against %s: status %s\n", result_file.c_str(), scenario_file.c_str(),
              std::string(to_string(r.status())).c_str());
  print_audit(a);
  return a.passed() ? 0 : kExitNotOptimal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Free-space trajectory planner: coarse search, speed profile, dual warm start, MPC"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_file, "JSON with grid/mpc/plan overrides")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", common.threads, "workers for grid and scale (0 = all cores)");
  app.add_flag("--trace", common.trace, "print solver iterations to stderr");

  std::string scenario, mode, out = ".", formats = "csv,svg,json";
  auto* plan_cmd = app.add_subcommand("plan", "plan one scenario");
  plan_cmd->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--mode", mode, "base, td or tdr (default: scenario's, else tdr)");
  plan_cmd->add_option("--out", out, "output directory");
  plan_cmd->add_option("--format", formats, "any of csv,svg,json");

  std::string xs = "-10:1:10", ys = "2:0.5:4", modes = "base,td,tdr", grid_out;
  bool quiet = false;
  auto* grid_cmd = app.add_subcommand("grid", "plan from a grid of start positions");
  grid_cmd->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
  grid_cmd->add_option("--x", xs, "lo:step:hi");
  grid_cmd->add_option("--y", ys, "lo:step:hi");
  grid_cmd->add_option("--modes", modes, "comma separated modes");
  grid_cmd->add_option("--out", grid_out, "write per-case outcomes as JSON here");
  grid_cmd->add_flag("--quiet", quiet, "no per-case progress");

  std::string dir;
  auto* scale_cmd = app.add_subcommand("scale", "timing table over a directory of scenarios");
  scale_cmd->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);
  scale_cmd->add_option("--modes", modes, "comma separated modes");

  std::string result_file;
  auto* check_cmd = app.add_subcommand("check", "re-audit a saved result against its scenario");
  check_cmd->add_option("result", result_file)->required()->check(CLI::ExistingFile);
  check_cmd->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  try {
    if (*plan_cmd) return run_plan(scenario, mode, out, formats, common);
    if (*grid_cmd) return run_grid(scenario, xs, ys, modes, grid_out, quiet, common);
    if (*scale_cmd) return run_scale(dir, modes, common);
    if (*check_cmd) return run_check(result_file, scenario);
  } catch (const PlannerError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  }
  return kExitBadInput;
}
