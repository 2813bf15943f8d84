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

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <tuple>
#include <unordered_map>

#include "pipecut/errors.h"
#include "pipecut/pipeline_sim.h"

namespace pipecut {
namespace {

struct Label {
  double tf = 0.0;  // running maxima over the stages so far
  double tb = 0.0;
  int prev_b = -1;
  int prev_d = -1;
  int prev_label = -1;
  std::int64_t batch = 0;
  StageEval eval;
};

void Insert(std::vector<Label>& cell, Label c, DpCells mode) {
  if (mode == DpCells::kScalar) {
    if (cell.empty() || c.tf + c.tb < cell.front().tf + cell.front().tb) {
      cell.assign(1, std::move(c));
    }
    return;
  }
  for (const Label& l : cell) {
    if (l.tf <= c.tf && l.tb <= c.tb) return;
  }
  std::erase_if(cell, [&c](const Label& l) { return c.tf <= l.tf && c.tb <= l.tb; });
  cell.push_back(std::move(c));
}

std::size_t BestLabel(const std::vector<Label>& cell) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cell.size(); ++i) {
    if (cell[i].tf + cell[i].tb < cell[best].tf + cell[best].tb) best = i;
  }
  return best;
}

void CheckArgs(int num_blocks, int S, int D, std::int64_t BS, int R, int MB) {
  if (S < 1 || S > D || S > num_blocks) {
    throw InvalidArgs("stage count must satisfy 1 <= S <= min(D, |B|), got S=" +
                      std::to_string(S) + " D=" + std::to_string(D) +
                      " |B|=" + std::to_string(num_blocks));
  }
  if (R < 1 || MB < 1 || BS < 1) {
    throw InvalidArgs("batch size, replica factor and microbatch count must be positive");
  }
}

StageAssignment MakeStage(int first, int last, int devices, int R, std::int64_t batch,
                          const StageEval& e) {
  StageAssignment st;
  st.first_block = first;
  st.last_block = last;
  st.devices = devices;
  st.replicas = devices * R;
  st.per_replica_batch = batch;
  st.cost = {e.t_fwd(), e.t_bwd(), e.compute.mem_bytes};
  return st;
}

}  // namespace

std::optional<Plan> FormStageDp(const StageEvaluator& blocks, int S, int D,
                                std::int64_t BS, int R, int MB,
                                const ClusterSpec& cluster, const DpOptions& opts,
                                DpStats* stats) {
  const int nb = blocks.num_blocks();
  CheckArgs(nb, S, D, BS, R, MB);
  DpStats local;
  DpStats& st = stats ? *stats : local;
  const std::int64_t spent_before = st.candidates;  // stats may accumulate
  const std::int64_t mem_limit = cluster.device_memory_bytes;

  const auto idx = [nb, D](int s, int b, int d) {
    return (static_cast<std::size_t>(s) * (nb + 1) + b) * (D + 1) + d;
  };
  std::vector<std::vector<Label>> cells(idx(S + 1, 0, 0));
  cells[idx(0, 0, 0)].push_back(Label{});

  const bool memo_ok = nb < (1 << 15);
  std::unordered_map<std::uint64_t, StageEval> memo;
  auto evaluate = [&](int first, int last, std::int64_t batch) {
    if (!memo_ok) return blocks.Evaluate(first, last, batch, opts.checkpointing);
    const std::uint64_t key = (static_cast<std::uint64_t>(first) << 48) |
                              (static_cast<std::uint64_t>(last) << 32) |
                              static_cast<std::uint64_t>(batch & 0xffffffff);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    StageEval e = blocks.Evaluate(first, last, batch, opts.checkpointing);
    memo.emplace(key, e);
    return e;
  };

  int d_min = 1;
  for (int s = 1; s <= S; ++s) {
    for (int b = s; b <= nb - S + s; ++b) {
      const int lo = opts.pruning == Pruning::kGlobal ? std::max(d_min, s) : s;
      for (int d = D - (S - s); d >= lo; --d) {
        ++st.cells;
        bool zero_batch = false;
        auto& cell = cells[idx(s, b, d)];
        for (int bp = s - 1; bp <= b - 1; ++bp) {
          for (int dp = s - 1; dp <= d - 1; ++dp) {
            const auto& prev = cells[idx(s - 1, bp, dp)];
            if (prev.empty()) continue;
            ++st.candidates;
            if (opts.candidate_budget &&
                st.candidates - spent_before > *opts.candidate_budget) {
              st.budget_exceeded = true;
              return std::nullopt;
            }
            const std::int64_t batch = PerReplicaBatch(BS, R, MB, d - dp);
            if (batch == 0) {
              zero_batch = true;
              continue;
            }
            const StageEval e = evaluate(bp, b - 1, batch);
            if (e.compute.mem_bytes > mem_limit) continue;
            for (std::size_t i = 0; i < prev.size(); ++i) {
              Insert(cell,
                     {std::max(prev[i].tf, e.t_fwd()), std::max(prev[i].tb, e.t_bwd()),
                      bp, dp, static_cast<int>(i), batch, e},
                     opts.cells);
            }
          }
        }
        if (cell.empty()) {
          if (opts.pruning == Pruning::kGlobal) {
            d_min = d + 1;
            break;
          }
          if (opts.pruning == Pruning::kRow && !zero_batch) break;
        }
      }
    }
  }

  const auto& final_cell = cells[idx(S, nb, D)];
  if (final_cell.empty()) return std::nullopt;
  Plan plan;
  plan.microbatches = MB;
  plan.replica_factor = R;
  plan.batch_size = BS;
  plan.checkpointing = opts.checkpointing;
  std::size_t li = BestLabel(final_cell);
  plan.objective = final_cell[li].tf + final_cell[li].tb;
  int b = nb, d = D;
  for (int s = S; s >= 1; --s) {
    const Label& l = cells[idx(s, b, d)][li];
    plan.stages.push_back(MakeStage(l.prev_b, b - 1, d - l.prev_d, R, l.batch, l.eval));
    b = l.prev_b;
    d = l.prev_d;
    li = static_cast<std::size_t>(l.prev_label);
  }
  std::reverse(plan.stages.begin(), plan.stages.end());
  return plan;
}

std::optional<Plan> BruteForcePartition(const StageEvaluator& blocks, int S, int D,
                                        std::int64_t BS, int R, int MB,
                                        const ClusterSpec& cluster, bool checkpointing,
                                        std::int64_t* candidates) {
  const int nb = blocks.num_blocks();
  if (nb > 12 || D > 8) {
    throw TooLarge("exhaustive search is limited to 12 blocks and 8 devices");
  }
  CheckArgs(nb, S, D, BS, R, MB);
  std::int64_t count = 0;
  std::optional<Plan> best;

  std::vector<int> cuts(S + 1, 0);  // stage i covers blocks cuts[i]..cuts[i+1]-1
  std::vector<int> devs(S, 0);
  cuts[S] = nb;
  auto evaluate_split = [&]() {
    ++count;
    Plan p;
    p.microbatches = MB;
    p.replica_factor = R;
    p.batch_size = BS;
    p.checkpointing = checkpointing;
    double tf = 0.0, tb = 0.0;
    for (int i = 0; i < S; ++i) {
      const std::int64_t batch = PerReplicaBatch(BS, R, MB, devs[i]);
      if (batch == 0) return;
      const StageEval e = blocks.Evaluate(cuts[i], cuts[i + 1] - 1, batch, checkpointing);
      if (e.compute.mem_bytes > cluster.device_memory_bytes) return;
      tf = std::max(tf, e.t_fwd());
      tb = std::max(tb, e.t_bwd());
      p.stages.push_back(MakeStage(cuts[i], cuts[i + 1] - 1, devs[i], R, batch, e));
    }
    p.objective = tf + tb;
    if (!best || p.objective < best->objective) best = std::move(p);
  };
  std::function<void(int, int)> assign_devices = [&](int i, int left) {
    if (i == S - 1) {
      devs[i] = left;
      evaluate_split();
      return;
    }
    for (int d = 1; d <= left - (S - 1 - i); ++d) {
      devs[i] = d;
      assign_devices(i + 1, left - d);
    }
  };
  std::function<void(int)> place_cut = [&](int i) {
    if (i == S) {
      assign_devices(0, D);
      return;
    }
    for (int c = cuts[i - 1] + 1; c <= nb - (S - i); ++c) {
      cuts[i] = c;
      place_cut(i + 1);
    }
  };
  place_cut(1);
  if (candidates) *candidates = count;
  return best;
}

std::optional<Plan> FormStage(int N, int D_node, std::int64_t BS,
                              const StageEvaluator& blocks, const ClusterSpec& cluster,
                              const FormStageOptions& opts, FormStageStats* stats) {
  if (N < 1 || D_node < 1 || BS < 1) {
    throw InvalidArgs("node count, devices per node and batch size must be positive");
  }
  FormStageStats local;
  FormStageStats& st = stats ? *stats : local;
  const int nb = blocks.num_blocks();
  for (int n = 1; n <= N; n *= 2) {
    const int D = D_node * n;
    const int R = N / n;
    for (int S = D_node * (n - 1) + 1; S <= D_node * n && S <= nb; ++S) {
      DpOptions dp;
      dp.pruning = opts.pruning;
      dp.cells = opts.cells;
      dp.checkpointing = opts.checkpointing && S > 1;
      struct Ranked {
        double time;
        Plan plan;
      };
      std::optional<Ranked> best;
      for (std::int64_t MB = 1; MB <= BS / R; MB *= 2) {
        const int mb = static_cast<int>(MB);
        if (opts.candidate_budget) {
          dp.candidate_budget = *opts.candidate_budget - st.dp.candidates;
        }
        auto sol = FormStageDp(blocks, S, D, BS, R, mb, cluster, dp, &st.dp);
        ++st.dp_runs;
        if (st.dp.budget_exceeded) return std::nullopt;
        if (opts.oracle_check && nb <= 12 && D <= 8) {
          auto ref = BruteForcePartition(blocks, S, D, BS, R, mb, cluster, dp.checkpointing);
          ++st.oracle_checks;
          if (sol.has_value() != ref.has_value() ||
              (sol && sol->objective != ref->objective)) {
            throw Error("stage search disagrees with exhaustive search at S=" +
                        std::to_string(S) + " D=" + std::to_string(D) +
                        " MB=" + std::to_string(mb));
          }
        }
        if (!sol) continue;
        ++st.candidates_ranked;
        const double t = Simulate(*sol, blocks, cluster).iteration_time_sec;
        if (!best || std::tie(t, sol->objective, sol->microbatches) <
                         std::tie(best->time, best->plan.objective,
                                  best->plan.microbatches)) {
          best = Ranked{t, std::move(*sol)};
        }
      }
      if (best) return std::move(best->plan);
    }
  }
  return std::nullopt;
}

std::optional<Plan> DataParallelPlan(std::int64_t BS, const StageEvaluator& blocks,
                                     const ClusterSpec& cluster) {
  DpOptions dp;
  dp.checkpointing = false;
  return FormStageDp(blocks, 1, 1, BS, cluster.total_devices(), 1, cluster, dp);
}

const char* KindName(PlanViolation::Kind k) {
  switch (k) {
    case PlanViolation::Kind::kBoundary:
      return "BoundaryViolation";
    case PlanViolation::Kind::kDevices:
      return "DeviceViolation";
    case PlanViolation::Kind::kCounts:
      return "CountViolation";
    case PlanViolation::Kind::kBatch:
      return "BatchViolation";
    case PlanViolation::Kind::kMemory:
      return "MemoryViolation";
    case PlanViolation::Kind::kObjective:
      return "ObjectiveViolation";
  }
  return "?";
}

std::vector<PlanViolation> ValidatePlan(const Plan& plan, const StageEvaluator& blocks,
                                        const ClusterSpec& cluster) {
  using K = PlanViolation::Kind;
  std::vector<PlanViolation> out;
  const int nb = blocks.num_blocks();
  if (plan.stages.empty()) {
    out.push_back({K::kBoundary, -1, "no stages"});
    return out;
  }
  bool ranges_ok = true;
  int next = 0;
  for (int i = 0; i < plan.num_stages(); ++i) {
    const auto& s = plan.stages[i];
    if (s.first_block != next || s.last_block < s.first_block || s.last_block >= nb) {
      out.push_back({K::kBoundary, i,
                     "blocks [" + std::to_string(s.first_block) + "," +
                         std::to_string(s.last_block) + "] do not continue at " +
                         std::to_string(next)});
      ranges_ok = false;
    }
    next = s.last_block + 1;
  }
  if (ranges_ok && next != nb) {
    out.push_back({K::kBoundary, plan.num_stages() - 1, "last stage does not end the model"});
    ranges_ok = false;
  }
  if (plan.microbatches < 1 || plan.replica_factor < 1 || plan.batch_size < 1) {
    out.push_back({K::kCounts, -1, "non-positive microbatch count, replica factor or batch"});
    return out;
  }
  std::int64_t used = 0;
  for (int i = 0; i < plan.num_stages(); ++i) {
    const auto& s = plan.stages[i];
    if (s.devices < 1 || s.replicas != s.devices * plan.replica_factor) {
      out.push_back({K::kDevices, i, "replicas must equal devices x replica factor"});
    }
    used += static_cast<std::int64_t>(s.devices) * plan.replica_factor;
  }
  if (used > cluster.total_devices()) {
    out.push_back({K::kDevices, -1,
                   "plan needs " + std::to_string(used) + " devices, cluster has " +
                       std::to_string(cluster.total_devices())});
  }
  if (!ranges_ok) return out;

  const bool ckpt = plan.checkpointing && plan.num_stages() > 1;
  double tf = 0.0, tb = 0.0;
  for (int i = 0; i < plan.num_stages(); ++i) {
    const auto& s = plan.stages[i];
    const std::int64_t batch = PerReplicaBatch(plan.batch_size, plan.replica_factor,
                                               plan.microbatches, s.devices);
    if (batch < 1) {
      out.push_back({K::kBatch, i, "per-replica batch is zero"});
      continue;
    }
    const StageEval e = blocks.Evaluate(s.first_block, s.last_block, batch, ckpt);
    if (e.compute.mem_bytes > cluster.device_memory_bytes) {
      out.push_back({K::kMemory, i,
                     "needs " + std::to_string(e.compute.mem_bytes) + " bytes"});
    }
    tf = std::max(tf, e.t_fwd());
    tb = std::max(tb, e.t_bwd());
  }
  const double v = tf + tb;
  if (std::abs(v - plan.objective) > 1e-9 * std::abs(v) + 1e-300) {
    out.push_back({K::kObjective, -1, "objective does not match the stage costs"});
  }
  return out;
}

}  // namespace pipecut
