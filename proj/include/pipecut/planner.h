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

#ifndef PIPECUT_PLANNER_H_
#define PIPECUT_PLANNER_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>

#include "pipecut/atomic_partition.h"
#include "pipecut/block_partition.h"
#include "pipecut/cost_model.h"
#include "pipecut/graph.h"
#include "pipecut/plan.h"
#include "pipecut/stage_cost.h"
#include "pipecut/stage_partition.h"

namespace pipecut {

struct PlannerOptions {
  int k = kDefaultBlocks;  // clamped to the number of atoms
  std::int64_t batch_size = 64;
  CostModelConfig cost;
  FormStageOptions stage;
};

// Owns every intermediate of one atomic -> block -> stage run; the pieces
// refer to each other, so the object is not copyable.
class Planner {
 public:
  // Runs the atomic and block phases. Throws what they throw
  // (InfeasibleAtom, CompactionStuck, ...).
  Planner(const TaskGraph& graph, const ClusterSpec& cluster, PlannerOptions opts);
  // Uses an existing block assignment instead of partitioning.
  Planner(const TaskGraph& graph, const ClusterSpec& cluster, PlannerOptions opts,
          std::istream& blocks_json);

  Planner(const Planner&) = delete;
  Planner& operator=(const Planner&) = delete;

  // Stage search over the blocks; nullopt when no plan fits.
  std::optional<Plan> FormStages(FormStageStats* stats = nullptr) const;
  std::optional<Plan> DataParallel() const;

  const AtomicPartition& atoms() const { return *atoms_; }
  const AtomProfiler& profiler() const { return *profiler_; }
  const BlockSet& blocks() const { return *blocks_; }
  const BlockStageCosts& stages() const { return *stages_; }
  const ClusterSpec& cluster() const { return cluster_; }
  const PlannerOptions& options() const { return opts_; }

 private:
  void Init(const TaskGraph& graph);

  ClusterSpec cluster_;
  PlannerOptions opts_;
  std::unique_ptr<AtomicPartition> atoms_;
  std::unique_ptr<AtomProfiler> profiler_;
  std::unique_ptr<BlockSet> blocks_;
  std::unique_ptr<BlockStageCosts> stages_;
};

// Stage table: blocks, devices, replicas, times, memory.
void WriteReport(const Plan& plan, const ClusterSpec& cluster, std::ostream& out);

}  // namespace pipecut

#endif  // PIPECUT_PLANNER_H_
