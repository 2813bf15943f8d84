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


#include "pipecut/stage_partition.h"

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "pipecut/errors.h"
#include "pipecut/pipeline_sim.h"
#include "test_util.h"

namespace pipecut {
namespace {

using testing::RandomStageInstance;
using testing::StageInstance;

ClusterSpec OneNode(int devices, std::int64_t memory) {
  ClusterSpec c;
  c.num_nodes = 1;
  c.devices_per_node = devices;
  c.device_memory_bytes = memory;
  c.bw_intra_bytes_per_sec = 1e9;
  c.bw_inter_bytes_per_sec = 1e9;
  c.link_latency_sec = 0;
  return c;
}

std::vector<LinearBlock> Blocks(std::vector<double> tf, double bwd_ratio = 2.0,
                                std::int64_t mem = 100) {
  std::vector<LinearBlock> out;
  for (double t : tf) {
    LinearBlock b;
    b.t_fwd_per_sample = t;
    b.t_bwd_per_sample = t * bwd_ratio;
    b.mem_fixed = mem;
    b.param_bytes = mem;
    out.push_back(b);
  }
  return out;
}

std::optional<Plan> Dp(const StageInstance& x, DpOptions o = {}, DpStats* st = nullptr) {
  LinearStageCosts ev(x.blocks, x.cluster);
  return FormStageDp(ev, x.S, x.D, x.BS, x.R, x.MB, x.cluster, o, st);
}

std::optional<Plan> Bf(const StageInstance& x) {
  LinearStageCosts ev(x.blocks, x.cluster);
  return BruteForcePartition(ev, x.S, x.D, x.BS, x.R, x.MB, x.cluster);
}

TEST(FormStageDp, TwoEqualBlocks) {
  auto c = OneNode(2, 1000);
  LinearStageCosts ev(Blocks({1.0, 1.0}), c);
  auto p = FormStageDp(ev, 2, 2, 1, 1, 1, c);
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->objective, 3.0);  // max(1,1) + max(2,2)
  ASSERT_EQ(p->num_stages(), 2);
  EXPECT_EQ(p->stages[0].devices, 1);
  EXPECT_EQ(p->stages[1].devices, 1);
}

TEST(FormStageDp, HeavyFirstBlockStandsAlone) {
  auto c = OneNode(2, 1000);
  LinearStageCosts ev(Blocks({3, 1, 1, 1}), c);
  auto p = FormStageDp(ev, 2, 2, 1, 1, 1, c);
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->objective, 9.0);
  EXPECT_EQ(p->stages[0].first_block, 0);
  EXPECT_EQ(p->stages[0].last_block, 0);
  EXPECT_EQ(p->stages[1].first_block, 1);
  EXPECT_EQ(p->stages[1].last_block, 3);
  auto bf = BruteForcePartition(ev, 2, 2, 1, 1, 1, c);
  ASSERT_TRUE(bf);
  EXPECT_EQ(bf->objective, p->objective);
}

TEST(FormStageDp, MemoryInfeasible) {
  auto c = OneNode(2, 150);
  LinearStageCosts ev(Blocks({1, 1, 1}), c);  // each block alone needs 100
  EXPECT_FALSE(FormStageDp(ev, 2, 2, 1, 1, 1, c));
  EXPECT_FALSE(BruteForcePartition(ev, 2, 2, 1, 1, 1, c));
}

TEST(FormStageDp, InvalidArgs) {
  auto c = OneNode(4, 1000);
  LinearStageCosts ev(Blocks({1, 1}), c);
  EXPECT_THROW(FormStageDp(ev, 3, 4, 1, 1, 1, c), InvalidArgs);  // S > |B|
  EXPECT_THROW(FormStageDp(ev, 2, 1, 1, 1, 1, c), InvalidArgs);  // S > D
  EXPECT_THROW(FormStageDp(ev, 0, 2, 1, 1, 1, c), InvalidArgs);
  EXPECT_THROW(FormStageDp(ev, 1, 2, 0, 1, 1, c), InvalidArgs);
  EXPECT_THROW(FormStageDp(ev, 1, 2, 1, 0, 1, c), InvalidArgs);
  EXPECT_THROW(FormStageDp(ev, 1, 2, 1, 1, 0, c), InvalidArgs);
}

TEST(BruteForce, CandidateCount) {
  // 4 blocks in 2 stages: 3 cut positions; 3 devices in 2 groups: 2 ways.
  auto c = OneNode(3, 1000);
  LinearStageCosts ev(Blocks({1, 1, 1, 1}), c);
  std::int64_t n = 0;
  BruteForcePartition(ev, 2, 3, 6, 1, 1, c, false, &n);
  EXPECT_EQ(n, 6);
}

TEST(BruteForce, TooLarge) {
  auto c = OneNode(9, 1000);
  LinearStageCosts ev(Blocks(std::vector<double>(13, 1.0)), c);
  EXPECT_THROW(BruteForcePartition(ev, 2, 4, 4, 1, 1, c), TooLarge);
  LinearStageCosts small(Blocks({1, 1}), c);
  EXPECT_THROW(BruteForcePartition(small, 2, 9, 9, 1, 1, c), TooLarge);
}

TEST(FormStageDp, MatchesBruteForceOnRandomInstances) {
  for (int seed = 0; seed < 150; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = RandomStageInstance(rng);
    auto dp = Dp(x);
    auto bf = Bf(x);
    ASSERT_EQ(dp.has_value(), bf.has_value()) << "seed " << seed;
    if (!bf) continue;
    EXPECT_EQ(dp->objective, bf->objective) << "seed " << seed;
    LinearStageCosts ev(x.blocks, x.cluster);
    EXPECT_TRUE(ValidatePlan(*dp, ev, x.cluster).empty()) << "seed " << seed;
  }
}

TEST(FormStageDp, RowPruningKeepsThePlan) {
  std::int64_t with = 0, without = 0;
  for (int seed = 0; seed < 150; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = RandomStageInstance(rng);
    DpOptions none;
    none.pruning = Pruning::kNone;
    DpStats sn, sr;
    auto a = Dp(x, none, &sn);
    auto b = Dp(x, {}, &sr);
    EXPECT_EQ(a, b) << "seed " << seed;
    EXPECT_LE(sr.candidates, sn.candidates) << "seed " << seed;
    EXPECT_LE(sr.cells, sn.cells) << "seed " << seed;
    with += sr.candidates;
    without += sn.candidates;
  }
  EXPECT_LT(with, without);
}

// A device added to any stage shrinks its batch, as long as no batch hits
// zero; 60 samples per pipeline copy and microbatch keep every d <= 6 busy.
TEST(FormStageDp, MoreDevicesNeverHurt) {
  for (int seed = 0; seed < 60; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = RandomStageInstance(rng);
    x.BS = 60LL * x.R * x.MB;
    std::optional<double> prev;
    for (int D = x.S; D <= 6; ++D) {
      auto y = x;
      y.D = D;
      y.cluster.devices_per_node = D * y.R;
      auto p = Dp(y);
      if (prev) {
        ASSERT_TRUE(p) << "seed " << seed << " D " << D;
        EXPECT_LE(p->objective, *prev) << "seed " << seed << " D " << D;
      }
      if (p) prev = p->objective;
    }
  }
}

// The floor carried over to later (s, b) cells cuts off the optimum here.
TEST(FormStageDp, GlobalFloorCanMissTheOptimum) {
  std::mt19937_64 rng(20);
  auto x = RandomStageInstance(rng);
  DpOptions glob;
  glob.pruning = Pruning::kGlobal;
  auto best = Bf(x);
  ASSERT_TRUE(best);
  auto g = Dp(x, glob);
  EXPECT_TRUE(!g || g->objective > best->objective);
  EXPECT_EQ(Dp(x)->objective, best->objective);
}

// Keeping one (t_fwd, t_bwd) pair per cell is not enough for the max-plus-max
// objective.
TEST(FormStageDp, ScalarCellsCanMissTheOptimum) {
  std::mt19937_64 rng(222);
  auto x = RandomStageInstance(rng);
  DpOptions scalar;
  scalar.cells = DpCells::kScalar;
  auto best = Bf(x);
  ASSERT_TRUE(best);
  auto s = Dp(x, scalar);
  ASSERT_TRUE(s);
  EXPECT_GT(s->objective, best->objective);
}

TEST(FormStageDp, CandidateBudget) {
  std::mt19937_64 rng(3);
  auto x = RandomStageInstance(rng);
  DpOptions o;
  o.candidate_budget = 1;
  DpStats st;
  EXPECT_FALSE(Dp(x, o, &st));
  EXPECT_TRUE(st.budget_exceeded);
}

TEST(FormStage, SingleDevice) {
  auto c = OneNode(1, 1000);
  LinearStageCosts ev(Blocks({1, 2, 3}), c);
  auto p = FormStage(1, 1, 1, ev, c);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->num_stages(), 1);
  EXPECT_EQ(p->microbatches, 1);
  EXPECT_EQ(p->replica_factor, 1);
  EXPECT_FALSE(p->checkpointing);  // off for single-stage plans
}

TEST(FormStage, SmallModelIsReplicated) {
  ClusterSpec c = OneNode(2, 1000);
  c.num_nodes = 2;
  LinearStageCosts ev(Blocks({1, 1, 1}), c);
  auto p = FormStage(2, 2, 8, ev, c);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->num_stages(), 1);
  EXPECT_EQ(p->replica_factor, 2);
  EXPECT_TRUE(ValidatePlan(*p, ev, c).empty());
}

TEST(FormStage, LargeModelSpansNodes) {
  // Six blocks of 100 bytes, 200 per device: needs at least 3 stages, more
  // than one node of 2 devices holds.
  ClusterSpec c = OneNode(2, 200);
  c.num_nodes = 2;
  LinearStageCosts ev(Blocks({1, 1, 1, 1, 1, 1}), c);
  auto p = FormStage(2, 2, 4, ev, c);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->replica_factor, 1);
  EXPECT_GE(p->num_stages(), 3);
  EXPECT_LE(p->num_stages(), 4);
  EXPECT_TRUE(p->checkpointing);
  EXPECT_TRUE(ValidatePlan(*p, ev, c).empty());
}

TEST(FormStage, OracleCheckRuns) {
  ClusterSpec c = OneNode(4, 1000);
  LinearStageCosts ev(Blocks({1, 2, 3, 4, 5}), c);
  FormStageOptions o;
  o.oracle_check = true;
  FormStageStats st;
  auto p = FormStage(1, 4, 8, ev, c, o, &st);
  ASSERT_TRUE(p);
  EXPECT_GT(st.oracle_checks, 0);
  EXPECT_EQ(st.oracle_checks, st.dp_runs);
}

TEST(FormStage, BudgetCoversTheWholeSearch) {
  ClusterSpec c = OneNode(4, 1000);
  LinearStageCosts ev(Blocks({1, 2, 3, 4, 5, 6}), c);
  FormStageStats full;
  ASSERT_TRUE(FormStage(1, 4, 8, ev, c, {}, &full));
  ASSERT_GT(full.dp_runs, 1);
  FormStageOptions o;
  o.candidate_budget = full.dp.candidates - 1;
  FormStageStats cut;
  EXPECT_FALSE(FormStage(1, 4, 8, ev, c, o, &cut));
  EXPECT_TRUE(cut.dp.budget_exceeded);
  o.candidate_budget = full.dp.candidates;
  EXPECT_TRUE(FormStage(1, 4, 8, ev, c, o));
}

TEST(FormStage, InvalidArgs) {
  ClusterSpec c = OneNode(1, 1000);
  LinearStageCosts ev(Blocks({1}), c);
  EXPECT_THROW(FormStage(0, 1, 1, ev, c), InvalidArgs);
  EXPECT_THROW(FormStage(1, 0, 1, ev, c), InvalidArgs);
  EXPECT_THROW(FormStage(1, 1, 0, ev, c), InvalidArgs);
}

TEST(DataParallelPlan, UsesEveryDevice) {
  ClusterSpec c = OneNode(4, 1000);
  c.num_nodes = 2;
  LinearStageCosts ev(Blocks({1, 1}), c);
  auto p = DataParallelPlan(16, ev, c);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->num_stages(), 1);
  EXPECT_EQ(p->devices_used(), 8);
  EXPECT_EQ(p->stages[0].per_replica_batch, 2);
  c.device_memory_bytes = 150;
  LinearStageCosts tight(Blocks({1, 1}), c);
  EXPECT_FALSE(DataParallelPlan(16, tight, c));
}

class ValidatePlanTest : public ::testing::Test {
 protected:
  ClusterSpec c = OneNode(2, 1000);
  LinearStageCosts ev{Blocks({3, 1, 1, 1}), c};
  Plan plan = *FormStageDp(ev, 2, 2, 1, 1, 1, c);
};

TEST_F(ValidatePlanTest, AcceptsDpPlan) { EXPECT_TRUE(ValidatePlan(plan, ev, c).empty()); }

TEST_F(ValidatePlanTest, OverlappingRanges) {
  plan.stages[1].first_block = 0;
  auto v = ValidatePlan(plan, ev, c);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, PlanViolation::Kind::kBoundary);
  EXPECT_STREQ(KindName(v[0].kind), "BoundaryViolation");
}

TEST_F(ValidatePlanTest, MissingTail) {
  plan.stages[1].last_block = 2;
  auto v = ValidatePlan(plan, ev, c);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, PlanViolation::Kind::kBoundary);
}

TEST_F(ValidatePlanTest, Memory) {
  ClusterSpec small = c;
  small.device_memory_bytes = 250;  // second stage holds 300
  auto v = ValidatePlan(plan, ev, small);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, PlanViolation::Kind::kMemory);
  EXPECT_EQ(v[0].stage, 1);
}

TEST_F(ValidatePlanTest, TooManyDevices) {
  plan.stages[0].devices = 2;
  plan.stages[0].replicas = 2;
  auto v = ValidatePlan(plan, ev, c);
  bool found = false;
  for (const auto& x : v) found = found || x.kind == PlanViolation::Kind::kDevices;
  EXPECT_TRUE(found);
}

TEST_F(ValidatePlanTest, Objective) {
  plan.objective += 1.0;
  auto v = ValidatePlan(plan, ev, c);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, PlanViolation::Kind::kObjective);
}

}  // namespace
}  // namespace pipecut
