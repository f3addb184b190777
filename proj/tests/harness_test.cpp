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

#include "tdr_obca/harness.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace tdr_obca {
namespace {

PlanResult fake_result(std::vector<ControlInput> u, double dt, bool ok = true) {
  PlanResult r;
  r.trajectory.dt = dt;
  r.trajectory.controls = std::move(u);
  r.trajectory.states.resize(r.trajectory.controls.size() + 1);
  r.trajectory.report.status = ok ? NlpStatus::kOptimal : NlpStatus::kMaxIterations;
  return r;
}

TEST(Summarize, ConstantSamples) {
  const std::vector<double> xs = {0.1, 0.1};
  const Stats s = summarize(xs);
  EXPECT_DOUBLE_EQ(s.mean, 0.1);
  EXPECT_DOUBLE_EQ(s.std_dev, 0.0);
  EXPECT_DOUBLE_EQ(s.min, 0.1);
  EXPECT_DOUBLE_EQ(s.max, 0.1);
  EXPECT_PLANNER_ERROR(summarize(std::vector<double>{}), ErrorCode::kInvalidArgument);
}

TEST(Summarize, PopulationStd) {
  const std::vector<double> xs = {1, 2, 3, 4};
  const Stats s = summarize(xs);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std_dev, std::sqrt(1.25), 1e-15);
}

TEST(Metrics, ConstantAccelHasNoJerk) {
  const auto r = fake_result({{0.1, 0.5}, {-0.1, 0.5}, {0.1, 0.5}}, 0.1);
  const MetricsReport m = compute_metrics(std::vector<PlanResult>{r});
  EXPECT_NEAR(m.steering.mean, 0.1, 1e-15);
  EXPECT_NEAR(m.steering.std_dev, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(m.accel.mean, 0.5);
  EXPECT_DOUBLE_EQ(m.jerk.mean, 0.0);
  EXPECT_DOUBLE_EQ(m.jerk.max, 0.0);
  EXPECT_EQ(m.jerk.count, 2u);
}

TEST(Metrics, JerkIsBackwardDifference) {
  const auto j = control_jerk(std::vector<ControlInput>{{0, 0}, {0, 1}, {0, -1}}, 0.5);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_DOUBLE_EQ(j[0], 2.0);
  EXPECT_DOUBLE_EQ(j[1], -4.0);
}

TEST(Metrics, SkipsFailuresAndNeedsOneSuccess) {
  const auto good = fake_result({{0.2, 1.0}, {0.2, 1.0}}, 0.1);
  const auto bad = fake_result({{5.0, 5.0}, {5.0, 5.0}}, 0.1, false);
  const MetricsReport m = compute_metrics(std::vector<PlanResult>{good, bad});
  EXPECT_EQ(m.cases, 2u);
  EXPECT_EQ(m.successes, 1u);
  EXPECT_EQ(m.failures, 1u);
  EXPECT_DOUBLE_EQ(m.steering.max, 0.2);
  EXPECT_PLANNER_ERROR(compute_metrics(std::vector<PlanResult>{bad}),
                       ErrorCode::kNoSuccessfulCases);
  EXPECT_PLANNER_ERROR(compute_metrics(std::vector<PlanResult>{}), ErrorCode::kNoSuccessfulCases);
}

TEST(Metrics, IndependentOfCaseOrder) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-0.6, 0.6);
  std::vector<PlanResult> rs;
  for (int i = 0; i < 8; ++i) {
    std::vector<ControlInput> u(25);
    for (auto& c : u) c = {d(rng), d(rng)};
    rs.push_back(fake_result(u, 0.1));
  }
  const MetricsReport a = compute_metrics(rs);
  std::shuffle(rs.begin(), rs.end(), rng);
  const MetricsReport b = compute_metrics(rs);
  EXPECT_EQ(a.steering.mean, b.steering.mean);
  EXPECT_EQ(a.steering.std_dev, b.steering.std_dev);
  EXPECT_EQ(a.jerk.mean, b.jerk.mean);
  EXPECT_EQ(a.accel.max, b.accel.max);
}

TEST(PercentReduction, ReferenceComparisons) {
  // Mean |steering|, |accel|, |jerk| of the two planners.
  EXPECT_NEAR(percent_reduction(0.2048, 0.1771), 13.53, 0.005);
  EXPECT_NEAR(percent_reduction(0.3392, 0.3344), 1.42, 0.005);
  EXPECT_NEAR(percent_reduction(0.2663, 0.2574), 3.34, 0.005);
  // Frame and total times; the tables round the seconds, so 44.83 prints as 44.82.
  EXPECT_NEAR(percent_reduction(0.029, 0.016), 44.82, 0.02);
  EXPECT_NEAR(percent_reduction(0.021, 0.019), 9.52, 0.005);
  EXPECT_NEAR(percent_reduction(1.80, 1.74), 3.33, 0.005);
  EXPECT_NEAR(percent_reduction(2.52, 1.61), 36.11, 0.005);
  EXPECT_DOUBLE_EQ(percent_reduction(4.0, 4.0), 0.0);
}

TEST(GridAxis, InclusiveRanges) {
  EXPECT_EQ(parse_axis("-10:1:10").values().size(), 21u);
  const auto ys = parse_axis("2:0.5:4").values();
  ASSERT_EQ(ys.size(), 5u);
  EXPECT_DOUBLE_EQ(ys.back(), 4.0);
  EXPECT_EQ(parse_axis("0.3:0.1:0.6").values().size(), 4u);
  EXPECT_EQ(parse_axis("3:1:3").values(), std::vector<double>{3.0});
  EXPECT_EQ(parse_axis("2.5").values(), std::vector<double>{2.5});
  EXPECT_PLANNER_ERROR(parse_axis("1:0:2"), ErrorCode::kInvalidArgument);
  EXPECT_PLANNER_ERROR(parse_axis("2:1:1"), ErrorCode::kInvalidArgument);
  EXPECT_PLANNER_ERROR(parse_axis("a:1:2"), ErrorCode::kInvalidArgument);
  EXPECT_PLANNER_ERROR(parse_axis("1:2"), ErrorCode::kInvalidArgument);
}

TEST(ParseModes, ListsAndDuplicates) {
  EXPECT_EQ(parse_modes("base,td,tdr"),
            (std::vector<MpcMode>{MpcMode::kBase, MpcMode::kTD, MpcMode::kTDR}));
  EXPECT_EQ(parse_modes("tdr,tdr"), std::vector<MpcMode>{MpcMode::kTDR});
  EXPECT_PLANNER_ERROR(parse_modes("tdr,obca"), ErrorCode::kInvalidArgument);
}

TEST(ParallelFor, VisitsEachIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 5) throw std::runtime_error("x");
                            }),
               std::runtime_error);
}

TEST(ModeSummary, FailureRatesAreExactCounts) {
  std::vector<CaseResult> runs(10);
  for (std::size_t i = 0; i < runs.size(); ++i) runs[i].mode = i < 5 ? MpcMode::kBase : MpcMode::kTDR;
  // Base: 2 of 5 succeed; TDR: 4 of 5.
  for (std::size_t i : {0u, 1u, 5u, 6u, 7u, 8u}) {
    runs[i].result = fake_result({{0, 0}, {0, 0}}, 0.1);
  }
  runs[2].error = "CoarseSearchFailed";
  std::vector<CaseResult*> ptrs;
  for (auto& r : runs) ptrs.push_back(&r);
  const auto s = summarize_modes(ptrs, {MpcMode::kBase, MpcMode::kTDR});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].failures, 3u);
  EXPECT_EQ(s[0].total, 5u);
  EXPECT_DOUBLE_EQ(s[0].failure_rate, 60.0);
  EXPECT_FALSE(s[0].reduction_vs_base);
  EXPECT_EQ(s[1].failures, 1u);
  EXPECT_DOUBLE_EQ(s[1].failure_rate, 20.0);
  ASSERT_TRUE(s[1].reduction_vs_base);
  EXPECT_NEAR(*s[1].reduction_vs_base, 100.0 * (1.0 - 20.0 / 60.0), 1e-12);
  EXPECT_EQ(runs[2].outcome(), "CoarseSearchFailed");
  EXPECT_EQ(runs[0].outcome(), "Optimal");
}

TEST(GridExperiment, SingleCellEmptyScene) {
  Scenario sc;
  sc.x_F = {6, 0, 0, 0};
  PlannerConfig cfg;
  cfg.mpc.K = 30;
  int seen = 0;
  const GridReport rep = run_grid_experiment(sc, parse_axis("0"), parse_axis("0"),
                                             {MpcMode::kBase, MpcMode::kTDR}, cfg, 1,
                                             [&](const GridCase&) { ++seen; });
  EXPECT_EQ(seen, 2);
  ASSERT_EQ(rep.cases.size(), 2u);
  EXPECT_EQ(rep.cases[0].run.mode, MpcMode::kBase);
  EXPECT_EQ(rep.cases[1].run.mode, MpcMode::kTDR);
  for (const auto& c : rep.cases) EXPECT_TRUE(c.run.success()) << c.run.outcome();
  ASSERT_EQ(rep.summary.size(), 2u);
  EXPECT_EQ(rep.summary[1].failures, 0u);
  EXPECT_EQ(rep.results(MpcMode::kTDR, true).size(), 1u);
  const std::string table = format_failure_table(rep);
  EXPECT_NE(table.find("0/1"), std::string::npos) << table;
}

TEST(GridExperiment, OrderIsIndependentOfThreads) {
  const Scenario sc = test::parking_lot(0, 3);
  PlannerConfig cfg;
  const auto xs = parse_axis("-4:4:4"), ys = parse_axis("3");
  const GridReport a = run_grid_experiment(sc, xs, ys, {MpcMode::kTDR}, cfg, 1);
  const GridReport b = run_grid_experiment(sc, xs, ys, {MpcMode::kTDR}, cfg, 3);
  ASSERT_EQ(a.cases.size(), 3u);
  ASSERT_EQ(b.cases.size(), 3u);
  for (std::size_t i = 0; i < a.cases.size(); ++i) {
    EXPECT_EQ(a.cases[i].x, b.cases[i].x);
    EXPECT_EQ(a.cases[i].run.outcome(), b.cases[i].run.outcome());
    ASSERT_TRUE(a.cases[i].run.result && b.cases[i].run.result);
    EXPECT_EQ(a.cases[i].run.result->trajectory.states, b.cases[i].run.result->trajectory.states);
  }
}

TEST(ScalingExperiment, OneScenarioOneRow) {
  Scenario sc;
  sc.name = "open";
  sc.x_F = {6, 0, 0, 0};
  sc.boundary_segments.push_back({{-5, -3}, {12, -3}});
  const std::vector<Point2> box = {{3, 4}, {4, 4}, {4, 5}, {3, 5}};
  sc.obstacles.push_back(polygon_from_vertices(std::span<const Point2>(box)));
  PlannerConfig cfg;
  cfg.mpc.K = 30;
  const ScalingReport rep =
      run_scaling_experiment({sc}, {MpcMode::kBase, MpcMode::kTDR}, {cfg}, 1);
  ASSERT_EQ(rep.rows.size(), 1u);
  const ScalingRow& row = rep.rows[0];
  EXPECT_EQ(row.scenario, "open");
  EXPECT_EQ(row.n_boundary, 1u);
  EXPECT_EQ(row.n_agent, 4u);
  ASSERT_EQ(row.cells.size(), 2u);
  ASSERT_TRUE(rep.compared);
  EXPECT_EQ(rep.compared->first, 0u);
  EXPECT_EQ(rep.compared->second, 1u);
  for (const auto& c : row.cells) {
    ASSERT_TRUE(c.run.success());
    EXPECT_LE(*c.t_f, *c.t_t);
  }
  ASSERT_TRUE(row.frame_improvement);
  EXPECT_DOUBLE_EQ(*row.frame_improvement, percent_reduction(*row.cells[0].t_f, *row.cells[1].t_f));
  EXPECT_NE(format_scaling_table(rep).find("open"), std::string::npos);
  EXPECT_PLANNER_ERROR(run_scaling_experiment({}, {MpcMode::kTDR}, {}), ErrorCode::kInvalidArgument);
}

TEST(ScalingExperiment, FailedCellIsNotAvailable) {
  Scenario sc;
  sc.name = "bad";
  sc.x_F = {6, 0, 0, 0};
  PlannerConfig cfg;
  cfg.mpc.K = 30;
  cfg.mpc.max_iter = 1;
  const ScalingReport rep = run_scaling_experiment({sc}, {MpcMode::kBase, MpcMode::kTDR}, {cfg}, 1);
  EXPECT_FALSE(rep.rows[0].cells[0].t_f);
  EXPECT_FALSE(rep.rows[0].frame_improvement);
  EXPECT_NE(format_scaling_table(rep).find("N.A."), std::string::npos);
}

}  // namespace
}  // namespace tdr_obca
