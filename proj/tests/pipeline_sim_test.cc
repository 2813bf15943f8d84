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


#include "pipecut/pipeline_sim.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "pipecut/errors.h"
#include "test_util.h"

namespace pipecut {
namespace {

ClusterSpec Cluster(int devices, double bw = 1e9) {
  ClusterSpec c;
  c.num_nodes = 1;
  c.devices_per_node = devices;
  c.bw_intra_bytes_per_sec = bw;
  c.bw_inter_bytes_per_sec = bw;
  c.link_latency_sec = 0;
  return c;
}

std::vector<SimStage> Equal(int S, double tf, double tb) {
  std::vector<SimStage> v(S);
  for (auto& s : v) {
    s.t_fwd_sec = tf;
    s.t_bwd_sec = tb;
  }
  return v;
}

int Count(const Schedule& s, Phase p) {
  return static_cast<int>(std::count_if(s.events.begin(), s.events.end(),
                                        [p](const Event& e) { return e.phase == p; }));
}

TEST(Simulate, FillDrainFormula) {
  for (int S = 1; S <= 4; ++S) {
    for (int MB : {1, 2, 4, 8}) {
      auto stages = Equal(S, 0.3, 0.7);
      auto s = SimulateStages(stages, MB, false, Cluster(S));
      const double want = (MB + S - 1) * (0.3 + 0.7);
      EXPECT_NEAR(s.iteration_time_sec, want, 1e-9 * want) << S << " " << MB;
      EXPECT_NEAR(s.bubble_fraction, 1.0 - double(MB) / (MB + S - 1), 1e-9);
      EXPECT_TRUE(CheckSchedule(s).empty());
      EXPECT_EQ(Count(s, Phase::kFwd), S * MB);
      EXPECT_EQ(Count(s, Phase::kBwd), S * MB);
    }
  }
}

TEST(Simulate, SlowestStageBoundsTheIteration) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int S = 1 + trial % 4, MB = 1 << (trial % 4);
    std::vector<SimStage> st(S);
    double fmax = 0, bmax = 0, fsum = 0, bsum = 0;
    for (auto& x : st) {
      x.t_fwd_sec = u(rng);
      x.t_bwd_sec = u(rng);
      fmax = std::max(fmax, x.t_fwd_sec);
      bmax = std::max(bmax, x.t_bwd_sec);
      fsum += x.t_fwd_sec;
      bsum += x.t_bwd_sec;
    }
    auto s = SimulateStages(st, MB, false, Cluster(S));
    EXPECT_TRUE(CheckSchedule(s).empty());
    const double t = s.iteration_time_sec;
    EXPECT_GE(t, MB * (fmax + bmax) - 1e-9);
    EXPECT_GE(t, fsum + bsum - 1e-9);
    EXPECT_LE(t, (MB + S - 1) * (fmax + bmax) + 1e-9);
    // Every stage's compute fits in the iteration.
    for (int k = 0; k < S; ++k) EXPECT_LE(s.busy_fraction[k], 1.0 + 1e-12);
  }
}

TEST(Simulate, RecomputeCostsTime) {
  for (int S = 2; S <= 4; ++S) {
    for (int MB : {1, 4}) {
      auto stages = Equal(S, 0.5, 1.0);
      auto plain = SimulateStages(stages, MB, false, Cluster(S));
      auto ckpt = SimulateStages(stages, MB, true, Cluster(S));
      EXPECT_GT(ckpt.iteration_time_sec, plain.iteration_time_sec);
      // Recompute is at most a forward in front of every backward.
      EXPECT_LE(ckpt.iteration_time_sec, (MB + S - 1) * (0.5 + 0.5 + 1.0) + 1e-9);
      EXPECT_EQ(Count(ckpt, Phase::kRecompute), S * MB);
      EXPECT_TRUE(CheckSchedule(ckpt).empty());
    }
  }
}

TEST(Simulate, CommBetweenStages) {
  auto stages = Equal(2, 1.0, 2.0);
  stages[0].out_bytes = 500;  // 0.5 s at 1000 B/s
  auto s = SimulateStages(stages, 1, false, Cluster(2, 1000));
  // fwd0, send, fwd1, bwd1, send back, bwd0
  EXPECT_NEAR(s.iteration_time_sec, 1 + 0.5 + 1 + 2 + 0.5 + 2, 1e-12);
  EXPECT_EQ(Count(s, Phase::kComm), 2);
  EXPECT_TRUE(CheckSchedule(s).empty());
}

TEST(Simulate, InterNodeLinkIsUsedAcrossNodes) {
  ClusterSpec c = Cluster(1, 1000);
  c.num_nodes = 2;
  c.bw_inter_bytes_per_sec = 100;
  auto stages = Equal(2, 1.0, 1.0);
  stages[0].out_bytes = 100;
  auto s = SimulateStages(stages, 1, false, c);
  EXPECT_NEAR(s.iteration_time_sec, 4 + 2 * 1.0, 1e-12);
}

TEST(Simulate, AllreduceClosesReplicatedStages) {
  auto stages = Equal(1, 1.0, 1.0);
  stages[0].replicas = 4;
  stages[0].param_bytes = 1000;
  auto s = SimulateStages(stages, 2, false, Cluster(4, 1000));
  // ring allreduce: 2 (r-1)/r of the parameters
  EXPECT_NEAR(s.iteration_time_sec, 2 * 2.0 + 2.0 * 1000 * 3 / 4 / 1000, 1e-12);
  EXPECT_EQ(Count(s, Phase::kAllreduce), 1);
  EXPECT_TRUE(CheckSchedule(s).empty());
}

TEST(Simulate, EmptyAndInvalid) {
  auto s = SimulateStages({}, 1, false, Cluster(1));
  EXPECT_TRUE(s.events.empty());
  EXPECT_EQ(s.iteration_time_sec, 0.0);
  EXPECT_EQ(RenderGantt(s, GanttFormat::kText), "");
  auto one = Equal(1, 1, 1);
  EXPECT_THROW(SimulateStages(one, 0, false, Cluster(1)), InvalidArgs);
}

TEST(Simulate, PlanDrivenSimulation) {
  ClusterSpec c = Cluster(2);
  std::vector<LinearBlock> blocks(3);
  for (auto& b : blocks) {
    b.t_fwd_per_sample = 0.25;
    b.t_bwd_per_sample = 0.5;
  }
  LinearStageCosts ev(blocks, c);
  Plan p;
  p.batch_size = 8;
  p.microbatches = 2;
  p.stages = {{0, 0, 1, 1, 0, {}}, {1, 2, 1, 1, 0, {}}};
  auto s = Simulate(p, ev, c);
  // batch 4 per microbatch: stage times (1, 2) and (2, 4)
  auto ref = SimulateStages(std::vector<SimStage>{{1, 2, 0, 0, 1, 1}, {2, 4, 0, 0, 1, 1}},
                            2, false, c);
  EXPECT_NEAR(s.iteration_time_sec, ref.iteration_time_sec, 1e-12);

  Plan bad = p;
  bad.stages[1].first_block = 2;
  EXPECT_THROW(Simulate(bad, ev, c), InvalidPlan);
  bad = p;
  bad.stages.pop_back();
  EXPECT_THROW(Simulate(bad, ev, c), InvalidPlan);
  bad = p;
  bad.batch_size = 1;  // floor(1 / 2) = 0 samples
  EXPECT_THROW(Simulate(bad, ev, c), InvalidPlan);
}

TEST(Throughput, SamplesPerSecond) {
  Schedule s;
  s.iteration_time_sec = 2.0;
  EXPECT_DOUBLE_EQ(Throughput(s, 256), 128.0);
  s.iteration_time_sec = 4.0;
  EXPECT_DOUBLE_EQ(Throughput(s, 256), 64.0);
  s.iteration_time_sec = 0.0;
  EXPECT_EQ(Throughput(s, 256), 0.0);
}

TEST(Throughput, FasterStagesNeverSlowDown) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int S = 1 + trial % 4;
    std::vector<SimStage> st(S);
    for (auto& x : st) {
      x.t_fwd_sec = u(rng);
      x.t_bwd_sec = u(rng);
    }
    auto faster = st;
    faster[trial % S].t_fwd_sec *= 0.5;
    faster[trial % S].t_bwd_sec *= 0.5;
    auto a = SimulateStages(st, 4, false, Cluster(S));
    auto b = SimulateStages(faster, 4, false, Cluster(S));
    EXPECT_GE(Throughput(b, 64), Throughput(a, 64) - 1e-9);
  }
}

TEST(CheckSchedule, DetectsTampering) {
  auto s = SimulateStages(Equal(2, 1, 1), 2, false, Cluster(2));
  ASSERT_TRUE(CheckSchedule(s).empty());
  auto overlap = s;
  for (auto& e : overlap.events) {
    if (e.stage == 1 && e.phase == Phase::kFwd && e.microbatch == 0) {
      e.start_sec = 0;  // before stage 0 finished
      e.end_sec = 1;
    }
  }
  EXPECT_FALSE(CheckSchedule(overlap).empty());
  auto missing = s;
  missing.events.pop_back();
  EXPECT_FALSE(CheckSchedule(missing).empty());
  auto late = s;
  late.events.front().end_sec = 100;
  EXPECT_FALSE(CheckSchedule(late).empty());
}

TEST(Gantt, TextRows) {
  auto s = SimulateStages(Equal(2, 1, 1), 2, false, Cluster(2));
  const std::string g = RenderGantt(s, GanttFormat::kText);
  std::istringstream in(g);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 3u);  // two lanes and the time axis
  EXPECT_EQ(lines[0].rfind("dev   0 |", 0), 0u);
  EXPECT_EQ(lines[1].rfind("dev   1 |", 0), 0u);
  // 6 time units over 80 columns; lane 0 runs fwd 0, fwd 1 first.
  EXPECT_EQ(lines[0].substr(9, 13), std::string(13, '0'));
  for (char ch : {'0', '1', 'a', 'b'}) {
    EXPECT_NE(lines[0].find(ch, 9), std::string::npos);
    EXPECT_NE(lines[1].find(ch, 9), std::string::npos);
  }
  EXPECT_NE(lines[1].find('.'), std::string::npos);  // bubble
}

TEST(Gantt, Svg) {
  auto s = SimulateStages(Equal(4, 1, 2), 4, false, Cluster(4));
  const std::string g = RenderGantt(s, GanttFormat::kSvg);
  EXPECT_EQ(g.rfind("<svg", 0), 0u);
  std::size_t rects = 0;
  for (std::size_t p = g.find("<rect"); p != std::string::npos; p = g.find("<rect", p + 1)) {
    ++rects;
  }
  EXPECT_EQ(rects, s.events.size());
  EXPECT_EQ(rects, 32u);
}

TEST(SaveSchedule, Json) {
  auto s = SimulateStages(Equal(2, 1, 1), 1, false, Cluster(2));
  std::ostringstream out;
  SaveSchedule(s, out);
  auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["events"].size(), s.events.size());
  EXPECT_DOUBLE_EQ(j["iteration_time_sec"].get<double>(), 4.0);
  EXPECT_EQ(j["events"][0]["phase"], "fwd");
}

}  // namespace
}  // namespace pipecut
