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

#ifndef PIPECUT_COST_MODEL_H_
#define PIPECUT_COST_MODEL_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pipecut/atomic_partition.h"
#include "pipecut/graph.h"

namespace pipecut {

struct CostRecord {
  double t_fwd_sec = 0.0;
  double t_bwd_sec = 0.0;
  std::int64_t mem_bytes = 0;

  double total_sec() const { return t_fwd_sec + t_bwd_sec; }
  bool operator==(const CostRecord&) const = default;
};

// A measured per-task entry, taken at `microbatch` samples.
struct CostTableEntry {
  std::int64_t microbatch = 1;
  double t_fwd = 0.0;
  double t_bwd = 0.0;
  std::int64_t act_bytes = 0;

  bool operator==(const CostTableEntry&) const = default;
};

using CostTable = std::map<std::string, CostTableEntry>;

struct CostModelConfig {
  double device_flops_per_sec = 1e13;
  double bwd_fwd_ratio = 2.0;
  double optimizer_state_factor = 2.0;  // Adam: two moments
  double grad_factor = 1.0;
  int bytes_per_element = 4;
  bool checkpointing = true;
  std::optional<CostTable> cost_table;
};

// "op" or "op(k=v,...)" with attributes in key order.
std::string OpSignature(const TaskInfo& task);

// Forward time, backward time and activation bytes of one task at
// `microbatch` samples; table entries override the analytic values and are
// scaled linearly from the table's microbatch.
struct TaskCost {
  double t_fwd = 0.0;
  double t_bwd = 0.0;
  std::int64_t act_bytes = 0;
};
TaskCost CostOfTask(const TaskGraph& g, NodeIndex task, std::int64_t microbatch,
                    const CostModelConfig& cfg);

// Time, memory (parameters with gradients and optimizer state, plus
// activations) of an arbitrary node set.
CostRecord Profile(const TaskGraph& g, const Subcomponent& u,
                   std::int64_t microbatch, const CostModelConfig& cfg);

// Latency plus bytes over the intra-node bandwidth.
double CommTime(std::int64_t bytes, const ClusterSpec& cluster);
double CommTime(std::int64_t bytes, double bandwidth, double latency);

// Bytes of values passed between a and b in either direction.
std::int64_t CutBytes(const TaskGraph& g, const Subcomponent& a,
                      const Subcomponent& b, std::int64_t microbatch);

// Profiles unions of atoms of one AtomicPartition without materialising the
// subcomponent. Holds a reference to the partition. All methods are const and
// reentrant.
class AtomProfiler {
 public:
  AtomProfiler(const AtomicPartition& partition, CostModelConfig cfg);

  const AtomicPartition& partition() const { return *partition_; }
  const CostModelConfig& config() const { return cfg_; }
  std::size_t num_atoms() const { return atoms_.size(); }

  // `atoms` must be sorted and unique.
  CostRecord Profile(std::span<const SubId> atoms, std::int64_t microbatch) const {
    return Profile(atoms, microbatch, cfg_.checkpointing);
  }
  CostRecord Profile(std::span<const SubId> atoms, std::int64_t microbatch,
                     bool checkpointing) const;

  std::int64_t ParamBytes(std::span<const SubId> atoms) const;

  // Bytes of values owned by `atoms` and consumed by atoms outside the set.
  std::int64_t OutgoingBytes(std::span<const SubId> atoms,
                             std::int64_t microbatch) const;

  // Bytes of values crossing between the two (disjoint) sets, counted once per
  // value and receiving side.
  std::int64_t CutBytes(std::span<const SubId> a, std::span<const SubId> b,
                        std::int64_t microbatch) const;

  // Distinct atoms consuming values owned by `atom`, and distinct atoms owning
  // values consumed by `atom`. Sorted, self excluded.
  const std::vector<SubId>& successors(SubId atom) const { return atoms_[atom].succ; }
  const std::vector<SubId>& predecessors(SubId atom) const { return atoms_[atom].pred; }

  // Produced values of an atom that leave it: (value, consumer atoms).
  struct Export {
    NodeIndex value;
    std::vector<SubId> consumers;
  };
  const std::vector<Export>& exports(SubId atom) const { return atoms_[atom].exports; }
  std::int64_t ValueSize(NodeIndex v, std::int64_t microbatch) const;

 private:
  struct AtomInfo {
    std::vector<NodeIndex> tasks;
    std::vector<NodeIndex> free_values;  // producer-less, non-param, owned
    std::vector<NodeIndex> imports;      // consumed here, owned by another atom
    std::vector<Export> exports;
    std::int64_t param_bytes = 0;
    std::vector<SubId> succ;
    std::vector<SubId> pred;
  };

  TaskCost TaskCostAt(NodeIndex task, std::int64_t microbatch) const;

  const AtomicPartition* partition_;
  CostModelConfig cfg_;
  std::vector<AtomInfo> atoms_;
  std::vector<std::optional<CostTableEntry>> entry_;  // per node
};

// Cost table file: {"op_sig":{"microbatch","t_fwd","t_bwd","act_bytes"}}.
CostTable LoadCostTable(std::istream& in);
CostTable LoadCostTableFile(const std::string& path);

// CostModelConfig JSON; absent fields keep their defaults.
CostModelConfig LoadCostConfig(std::istream& in);
CostModelConfig LoadCostConfigFile(const std::string& path);

}  // namespace pipecut

#endif  // PIPECUT_COST_MODEL_H_
