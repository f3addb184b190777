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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tdr_obca {

enum class ErrorCode {
  // geometry
  kTooFewVertices,
  kCollinearVertices,
  kNonConvex,
  kZeroLengthSegment,
  // grid search
  kNoPathFound,
  kStartInCollision,
  kGoalInCollision,
  kEmptyPath,
  // speed profile
  kNonPositiveInput,
  kInfeasibleProfile,
  kSolverFailure,
  kMismatchedSegments,
  // dual warm start / mpc
  kEmptyObstacleSet,
  kDimensionMismatch,
  kModeMismatch,
  // pipeline stages
  kCoarseSearchFailed,
  kProfileFailed,
  kDualWarmStartFailed,
  kMpcFailed,
  // harness
  kNoSuccessfulCases,
  kIoError,
  kInvalidScenario,
  kInvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTooFewVertices: return "TooFewVertices";
    case ErrorCode::kCollinearVertices: return "CollinearVertices";
    case ErrorCode::kNonConvex: return "NonConvex";
    case ErrorCode::kZeroLengthSegment: return "ZeroLengthSegment";
    case ErrorCode::kNoPathFound: return "NoPathFound";
    case ErrorCode::kStartInCollision: return "StartInCollision";
    case ErrorCode::kGoalInCollision: return "GoalInCollision";
    case ErrorCode::kEmptyPath: return "EmptyPath";
    case ErrorCode::kNonPositiveInput: return "NonPositiveInput";
    case ErrorCode::kInfeasibleProfile: return "InfeasibleProfile";
    case ErrorCode::kSolverFailure: return "SolverFailure";
    case ErrorCode::kMismatchedSegments: return "MismatchedSegments";
    case ErrorCode::kEmptyObstacleSet: return "EmptyObstacleSet";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kModeMismatch: return "ModeMismatch";
    case ErrorCode::kCoarseSearchFailed: return "CoarseSearchFailed";
    case ErrorCode::kProfileFailed: return "ProfileFailed";
    case ErrorCode::kDualWarmStartFailed: return "DualWarmStartFailed";
    case ErrorCode::kMpcFailed: return "MpcFailed";
    case ErrorCode::kNoSuccessfulCases: return "NoSuccessfulCases";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidScenario: return "InvalidScenario";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error code.
class PlannerError : public std::runtime_error {
 public:
  PlannerError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw PlannerError(code, what);
}

}  // namespace detail

}  // namespace tdr_obca
