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

#include "tdr_obca/serialization.hpp"

#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "tdr_obca/outputs.hpp"
#include "test_util.hpp"

namespace tdr_obca {
namespace {

Json minimal_scenario() {
  return Json::parse(R"({
    "schema": 1,
    "name": "tiny",
    "obstacles": [
      {"vertices": [[2, 2], [4, 2], [4, 3], [2, 3]]},
      {"segment": [[-10, -2], [10, -2]], "kind": "boundary"},
      {"segment": [[-10, 5], [10, 5]], "kind": "boundary", "thickness": 0.5}
    ],
    "start": {"x": 0, "y": 0, "phi": 0},
    "goal": {"x": 6, "y": 0, "phi": 0, "v": 0},
    "config": {"mpc": {"K": 30, "mode": "td"}, "grid": {"xy_resolution": 0.25}}
  })");
}

TEST(ScenarioParse, ReadsEveryObstacleForm) {
  const ScenarioFile f = parse_scenario(minimal_scenario());
  EXPECT_EQ(f.scenario.name, "tiny");
  EXPECT_EQ(f.scenario.obstacles.size(), 2u);
  EXPECT_EQ(f.scenario.boundary_segments.size(), 1u);
  EXPECT_EQ(f.scenario.obstacles[0].kind(), ObstacleKind::kAgentB);
  EXPECT_EQ(f.scenario.obstacles[1].kind(), ObstacleKind::kBoundaryA);
  EXPECT_EQ(f.scenario.all_obstacles().size(), 3u);
  EXPECT_EQ(f.config.mpc.K, 30);
  EXPECT_EQ(f.config.mpc.mode, MpcMode::kTD);
  EXPECT_DOUBLE_EQ(f.config.grid.xy_resolution, 0.25);
  EXPECT_DOUBLE_EQ(f.scenario.x_F.x, 6.0);
}

TEST(ScenarioParse, RejectsUnknownKeysAtAnyDepth) {
  for (const char* ptr : {"/extra", "/obstacles/0/colour", "/start/z", "/config/mpc/gamma",
                          "/config/other"}) {
    Json j = minimal_scenario();
    j[Json::json_pointer(ptr)] = 1;
    SCOPED_TRACE(ptr);
    EXPECT_PLANNER_ERROR(parse_scenario(j), ErrorCode::kInvalidScenario);
  }
}

TEST(ScenarioParse, ChecksSchemaAndRequiredFields) {
  Json j = minimal_scenario();
  j["schema"] = 2;
  EXPECT_PLANNER_ERROR(parse_scenario(j), ErrorCode::kInvalidScenario);
  j.erase("schema");
  EXPECT_PLANNER_ERROR(parse_scenario(j), ErrorCode::kInvalidScenario);
  j = minimal_scenario();
  j.erase("goal");
  EXPECT_PLANNER_ERROR(parse_scenario(j), ErrorCode::kInvalidScenario);
  j = minimal_scenario();
  j["obstacles"][0]["vertices"] = Json::parse("[[0,0],[1,1],[2,2]]");
  EXPECT_PLANNER_ERROR(parse_scenario(j), ErrorCode::kInvalidScenario);
  j = minimal_scenario();
  j["config"]["mpc"]["mode"] = "fast";
  EXPECT_PLANNER_ERROR(parse_scenario(j), ErrorCode::kInvalidScenario);
  EXPECT_PLANNER_ERROR(parse_scenario(std::string("{not json")), ErrorCode::kInvalidScenario);
}

TEST(ScenarioParse, WriterRoundTrips) {
  const ScenarioFile f = parse_scenario(minimal_scenario());
  Json j = scenario_json(f.scenario);
  j["config"] = config_json(f.config);
  const ScenarioFile g = parse_scenario(j);
  EXPECT_EQ(g.scenario.obstacles.size(), f.scenario.obstacles.size());
  EXPECT_EQ(g.scenario.boundary_segments.size(), f.scenario.boundary_segments.size());
  EXPECT_EQ(g.config.mpc.K, f.config.mpc.K);
  EXPECT_EQ(g.config.mpc.mode, f.config.mpc.mode);
  EXPECT_DOUBLE_EQ(g.config.mpc.beta, f.config.mpc.beta);
  const auto a = f.scenario.all_obstacles(), b = g.scenario.all_obstacles();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].normals().size(), b[i].normals().size());
    for (std::size_t f = 0; f < a[i].normals().size(); ++f) {
      EXPECT_LT((a[i].normals()[f] - b[i].normals()[f]).norm(), 1e-12);
      EXPECT_NEAR(a[i].offsets()[f], b[i].offsets()[f], 1e-12);
    }
    EXPECT_EQ(a[i].kind(), b[i].kind());
  }
}

class PlannedResult : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    sc_ = new Scenario(parse_scenario(minimal_scenario()).scenario);
    MpcConfig c;
    c.K = 30;
    res_ = new PlanResult(plan(*sc_, GridConfig{}, c));
  }
  static void TearDownTestSuite() {
    delete res_;
    delete sc_;
  }
  static Scenario* sc_;
  static PlanResult* res_;
};
Scenario* PlannedResult::sc_ = nullptr;
PlanResult* PlannedResult::res_ = nullptr;

TEST_F(PlannedResult, JsonRoundTrip) {
  ASSERT_TRUE(res_->success());
  const PlanResult back = parse_result(result_json(*res_).dump(1));
  EXPECT_EQ(back.mode, res_->mode);
  EXPECT_EQ(back.cold_start, res_->cold_start);
  EXPECT_EQ(back.status(), res_->status());
  EXPECT_EQ(back.coarse_path.size(), res_->coarse_path.size());
  EXPECT_EQ(back.gear_partitions, res_->gear_partitions);
  ASSERT_EQ(back.trajectory.states.size(), res_->trajectory.states.size());
  for (std::size_t k = 0; k < back.trajectory.states.size(); ++k) {
    const auto &p = back.trajectory.states[k], &q = res_->trajectory.states[k];
    EXPECT_NEAR(p.x, q.x, 1e-12);
    EXPECT_NEAR(p.y, q.y, 1e-12);
    EXPECT_NEAR(p.v, q.v, 1e-12);
    EXPECT_NEAR(p.phi, q.phi, 1e-12);
  }
  ASSERT_EQ(back.trajectory.controls.size(), res_->trajectory.controls.size());
  for (std::size_t k = 0; k < back.trajectory.controls.size(); ++k) {
    EXPECT_NEAR(back.trajectory.controls[k].steering, res_->trajectory.controls[k].steering, 1e-12);
    EXPECT_NEAR(back.trajectory.controls[k].accel, res_->trajectory.controls[k].accel, 1e-12);
  }
  EXPECT_EQ(back.trajectory.duals.lambda.size(), res_->trajectory.duals.lambda.size());
  EXPECT_NEAR(back.trajectory.dt, res_->trajectory.dt, 1e-12);
  EXPECT_EQ(back.audit.passed(), res_->audit.passed());
  EXPECT_NEAR(back.timings.total, res_->timings.total, 1e-12);
  // The re-read result audits the same way against the scenario.
  const auto obstacles = sc_->all_obstacles();
  const AuditReport again = verify_solution(back.trajectory, obstacles, sc_->footprint, sc_->limits,
                                            back.trajectory.dt);
  EXPECT_TRUE(again.passed());
  EXPECT_PLANNER_ERROR(parse_result(std::string("[1,2")), ErrorCode::kInvalidArgument);
}

TEST_F(PlannedResult, CsvHasOneRowPerStateAndRoundTrips) {
  const std::string csv = trajectory_csv(*res_);
  const CsvTrajectory t = parse_trajectory_csv(csv);
  ASSERT_EQ(t.states.size(), res_->trajectory.states.size());
  ASSERT_EQ(t.controls.size(), res_->trajectory.controls.size());
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    EXPECT_NEAR(t.states[k].x, res_->trajectory.states[k].x, 1e-12);
    EXPECT_NEAR(t.states[k].phi, res_->trajectory.states[k].phi, 1e-12);
    EXPECT_NEAR(t.t[k], k * res_->trajectory.dt, 1e-12);
  }
  for (std::size_t k = 0; k < t.controls.size(); ++k) {
    EXPECT_NEAR(t.controls[k].accel, res_->trajectory.controls[k].accel, 1e-12);
  }
}

TEST(TrajectoryCsv, TwoStepsGiveThreeRows) {
  PlanResult r;
  r.trajectory.dt = 0.5;
  r.trajectory.states = {{0, 0, 0, 0}, {0, 0, 0.5, 0}, {0.25, 0, 0.5, 0}};
  r.trajectory.controls = {{0.0, 1.0}, {0.1, 0.0}};
  r.gear_partitions = {{Gear::kForward, 0, 3}};
  const std::string csv = trajectory_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("\n1,0.5,0,0,0.5,0,0.10000000000000001,0,-2,forward\n"), std::string::npos)
      << csv;
  EXPECT_NE(csv.find("\n2,1,0.25,0,0.5,0,,,,forward\n"), std::string::npos) << csv;
  EXPECT_PLANNER_ERROR(parse_trajectory_csv("k,t\n"), ErrorCode::kInvalidArgument);
}

TEST_F(PlannedResult, SvgDrawsEachObstacleOnceAndOnePath) {
  const std::string svg = scene_svg(*sc_, *res_);
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto p = svg.find(needle); p != std::string::npos; p = svg.find(needle, p + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count("<polygon class=\"obstacle\""), sc_->all_obstacles().size());
  EXPECT_EQ(count("<polyline"), 1u);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}

TEST(OutputFormats, ParsesLists) {
  const OutputFormats f = parse_formats("svg,csv");
  EXPECT_TRUE(f.csv);
  EXPECT_TRUE(f.svg);
  EXPECT_FALSE(f.json);
  EXPECT_PLANNER_ERROR(parse_formats("csv,png"), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace tdr_obca
