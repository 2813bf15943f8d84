// Copyright 2026 The Pipecut Authors
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

#ifndef PIPECUT_STAGE_PARTITION_H_
#define PIPECUT_STAGE_PARTITION_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pipecut/graph.h"
#include "pipecut/plan.h"
#include "pipecut/stage_cost.h"

namespace pipecut {

// Floor on the device count d explored for a partial solution.
//   kNone:   every d is tried.
//   kRow:    when (s, b) has no solution with d devices, smaller d for the
//            same (s, b) are skipped. Exact as long as memory grows with the
//            batch; not applied when a candidate at d failed only because its
//            per-replica batch was zero.
//   kGlobal: the floor, once raised, applies to every later (s, b). Faster,
//            but can miss the optimum.
enum class Pruning { kNone, kRow, kGlobal };

// What a table cell remembers about partial solutions.
//   kPareto: all (max t_fwd, max t_bwd) pairs not dominated by another;
//            the objective is then exact.
//   kScalar: only the pair with the best max t_fwd + max t_bwd.
enum class DpCells { kPareto, kScalar };

struct DpOptions {
  Pruning pruning = Pruning::kRow;
  DpCells cells = DpCells::kPareto;
  bool checkpointing = false;
  // Give up (INFEASIBLE, budget_exceeded set) once this call has evaluated
  // more than this many candidate stages.
  std::optional<std::int64_t> candidate_budget;
};

struct DpStats {
  std::int64_t candidates = 0;  // candidate stages evaluated
  std::int64_t cells = 0;       // (s, b, d) cells visited
  bool budget_exceeded = false;

  DpStats& operator+=(const DpStats& o) {
    candidates += o.candidates;
    cells += o.cells;
    budget_exceeded = budget_exceeded || o.budget_exceeded;
    return *this;
  }
};

// Best split of all blocks into S contiguous stages over D devices for a
// pipeline copy replicated R times, with MB microbatches. Returns nullopt
// when infeasible. Throws InvalidArgs unless 1 <= S <= min(D, |B|), R >= 1,
// MB >= 1, BS >= 1.
std::optional<Plan> FormStageDp(const StageEvaluator& blocks, int S, int D,
                                std::int64_t BS, int R, int MB,
                                const ClusterSpec& cluster, const DpOptions& opts = {},
                                DpStats* stats = nullptr);

// Exhaustive reference: all contiguous S-way splits times all device
// compositions. Throws TooLarge when |B| > 12 or D > 8.
std::optional<Plan> BruteForcePartition(const StageEvaluator& blocks, int S, int D,
                                        std::int64_t BS, int R, int MB,
                                        const ClusterSpec& cluster,
                                        bool checkpointing = false,
                                        std::int64_t* candidates = nullptr);

struct FormStageOptions {
  bool checkpointing = true;  // applied only to plans with more than one stage
  Pruning pruning = Pruning::kRow;
  DpCells cells = DpCells::kPareto;
  // Cross-check every DP result against BruteForcePartition when the
  // instance is small enough; throws Error on mismatch.
  bool oracle_check = false;
  // Candidate stages allowed over the whole search; once spent the search
  // returns nullopt with dp.budget_exceeded set.
  std::optional<std::int64_t> candidate_budget;
};

struct FormStageStats {
  DpStats dp;
  int dp_runs = 0;
  int candidates_ranked = 0;
  int oracle_checks = 0;
};

// Searches node counts n = 1, 2, 4, ... <= N (D = D_node * n devices per
// pipeline copy, R = N / n copies), stage counts S in
// D_node*(n-1)+1 .. D_node*n, and microbatch counts 1, 2, 4, ... <= BS / R.
// Returns the fastest simulated plan of the first S that has any solution.
std::optional<Plan> FormStage(int N, int D_node, std::int64_t BS,
                              const StageEvaluator& blocks, const ClusterSpec& cluster,
                              const FormStageOptions& opts = {},
                              FormStageStats* stats = nullptr);

// One stage holding every block on every device of the cluster, one
// microbatch.
std::optional<Plan> DataParallelPlan(std::int64_t BS, const StageEvaluator& blocks,
                                     const ClusterSpec& cluster);

struct PlanViolation {
  enum class Kind { kBoundary, kDevices, kCounts, kBatch, kMemory, kObjective };
  Kind kind;
  int stage = -1;
  std::string detail;
};
const char* KindName(PlanViolation::Kind k);

// Recomputes everything from the evaluator; empty iff the plan is valid.
std::vector<PlanViolation> ValidatePlan(const Plan& plan, const StageEvaluator& blocks,
                                        const ClusterSpec& cluster);

}  // namespace pipecut

#endif  // PIPECUT_STAGE_PARTITION_H_
