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

#include "pipecut/planner.h"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "pipecut/errors.h"

namespace pipecut {

Planner::Planner(const TaskGraph& graph, const ClusterSpec& cluster, PlannerOptions opts)
    : cluster_(cluster), opts_(std::move(opts)) {
  Init(graph);
  const int k = std::min<int>(opts_.k, static_cast<int>(profiler_->num_atoms()));
  blocks_ = std::make_unique<BlockSet>(PartitionBlocks(*profiler_, k, cluster_));
  stages_ = std::make_unique<BlockStageCosts>(*profiler_, *blocks_, cluster_);
}

Planner::Planner(const TaskGraph& graph, const ClusterSpec& cluster, PlannerOptions opts,
                 std::istream& blocks_json)
    : cluster_(cluster), opts_(std::move(opts)) {
  Init(graph);
  blocks_ = std::make_unique<BlockSet>(LoadBlocks(blocks_json, *profiler_));
  stages_ = std::make_unique<BlockStageCosts>(*profiler_, *blocks_, cluster_);
}

void Planner::Init(const TaskGraph& graph) {
  if (opts_.k < 1) throw InvalidArgs("k must be at least 1");
  if (opts_.batch_size < 1) throw InvalidArgs("batch size must be at least 1");
  ValidateCluster(cluster_);
  opts_.stage.checkpointing = opts_.stage.checkpointing && opts_.cost.checkpointing;
  atoms_ = std::make_unique<AtomicPartition>(BuildAtomicSubcomponents(graph));
  profiler_ = std::make_unique<AtomProfiler>(*atoms_, opts_.cost);
}

std::optional<Plan> Planner::FormStages(FormStageStats* stats) const {
  return FormStage(cluster_.num_nodes, cluster_.devices_per_node, opts_.batch_size,
                   *stages_, cluster_, opts_.stage, stats);
}

std::optional<Plan> Planner::DataParallel() const {
  return DataParallelPlan(opts_.batch_size, *stages_, cluster_);
}

void WriteReport(const Plan& plan, const ClusterSpec& cluster, std::ostream& out) {
  char line[160];
  std::snprintf(line, sizeof(line),
                "stages %d  microbatches %d  replica factor %d  batch %lld  "
                "checkpointing %s\n",
                plan.num_stages(), plan.microbatches, plan.replica_factor,
                static_cast<long long>(plan.batch_size), plan.checkpointing ? "on" : "off");
  out << line;
  std::snprintf(line, sizeof(line), "%-6s %-11s %8s %9s %8s %13s %13s %10s\n", "stage",
                "blocks", "devices", "replicas", "batch", "t_fwd [s]", "t_bwd [s]",
                "mem [GiB]");
  out << line;
  for (int i = 0; i < plan.num_stages(); ++i) {
    const auto& s = plan.stages[i];
    char range[32];
    std::snprintf(range, sizeof(range), "b%d-b%d", s.first_block, s.last_block);
    std::snprintf(line, sizeof(line), "%-6d %-11s %8d %9d %8lld %13.6g %13.6g %10.3f\n", i,
                  range, s.devices, s.replicas,
                  static_cast<long long>(s.per_replica_batch), s.cost.t_fwd_sec,
                  s.cost.t_bwd_sec, static_cast<double>(s.cost.mem_bytes) / (1 << 30));
    out << line;
  }
  std::snprintf(line, sizeof(line),
                "objective %.6g s  devices %d of %d  device memory %.3f GiB\n",
                plan.objective, plan.devices_used(), cluster.total_devices(),
                static_cast<double>(cluster.device_memory_bytes) / (1 << 30));
  out << line;
}

}  // namespace pipecut
