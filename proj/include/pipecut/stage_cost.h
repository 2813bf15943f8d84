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

#ifndef PIPECUT_STAGE_COST_H_
#define PIPECUT_STAGE_COST_H_

#include <cstdint>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "pipecut/block_partition.h"
#include "pipecut/cost_model.h"
#include "pipecut/graph.h"

namespace pipecut {

// Cost of a candidate stage (a contiguous block range) on one replica.
struct StageEval {
  CostRecord compute;              // without communication
  std::int64_t out_bytes = 0;      // values sent to later stages
  std::int64_t param_bytes = 0;
  double comm_sec = 0.0;           // comm_time(out_bytes), 0 when nothing is sent

  // Stage times including the cost of sending the outputs.
  double t_fwd() const { return compute.t_fwd_sec + comm_sec; }
  double t_bwd() const { return compute.t_bwd_sec + comm_sec; }
};

class StageEvaluator {
 public:
  virtual ~StageEvaluator() = default;

  virtual int num_blocks() const = 0;

  // Blocks first..last (0-based, inclusive) at `batch` samples.
  virtual StageEval Evaluate(int first, int last, std::int64_t batch,
                             bool checkpointing) const = 0;
};

// Stages over a BlockSet, profiled through the atom profiler. Results are
// cached; safe to share between threads.
class BlockStageCosts : public StageEvaluator {
 public:
  BlockStageCosts(const AtomProfiler& profiler, const BlockSet& blocks,
                  const ClusterSpec& cluster);

  int num_blocks() const override { return static_cast<int>(blocks_->size()); }
  StageEval Evaluate(int first, int last, std::int64_t batch,
                     bool checkpointing) const override;

  const BlockSet& blocks() const { return *blocks_; }
  const AtomProfiler& profiler() const { return *profiler_; }

 private:
  const AtomProfiler* profiler_;
  const BlockSet* blocks_;
  ClusterSpec cluster_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::uint64_t, StageEval> cache_;
};

// Closed-form per-block costs, linear in the batch. Used for the stage
// search on synthetic instances.
struct LinearBlock {
  double t_fwd_per_sample = 0.0;
  double t_bwd_per_sample = 0.0;
  std::int64_t mem_fixed = 0;
  std::int64_t mem_per_sample = 0;
  std::int64_t out_bytes_per_sample = 0;  // sent to the next block
  std::int64_t param_bytes = 0;
};

// Times add up over the blocks. Memory is the fixed part plus, per sample,
// the sum of the blocks' footprints (or the largest one with checkpointing).
class LinearStageCosts : public StageEvaluator {
 public:
  LinearStageCosts(std::vector<LinearBlock> blocks, const ClusterSpec& cluster);

  int num_blocks() const override { return static_cast<int>(blocks_.size()); }
  StageEval Evaluate(int first, int last, std::int64_t batch,
                     bool checkpointing) const override;

  const std::vector<LinearBlock>& blocks() const { return blocks_; }

 private:
  std::vector<LinearBlock> blocks_;
  ClusterSpec cluster_;
};

}  // namespace pipecut

#endif  // PIPECUT_STAGE_COST_H_
