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

#include "pipecut/stage_cost.h"

#include <algorithm>

#include "pipecut/errors.h"

namespace pipecut {

BlockStageCosts::BlockStageCosts(const AtomProfiler& profiler, const BlockSet& blocks,
                                 const ClusterSpec& cluster)
    : profiler_(&profiler), blocks_(&blocks), cluster_(cluster) {}

StageEval BlockStageCosts::Evaluate(int first, int last, std::int64_t batch,
                                    bool checkpointing) const {
  if (first < 0 || last >= num_blocks() || first > last || batch < 0) {
    throw InvalidArgs("bad stage range");
  }
  // 12 bits per block index, the rest for the batch.
  const std::uint64_t key = (static_cast<std::uint64_t>(batch) << 25) |
                            (static_cast<std::uint64_t>(first) << 13) |
                            (static_cast<std::uint64_t>(last) << 1) |
                            (checkpointing ? 1u : 0u);
  const bool cacheable = num_blocks() < 4096 && batch < (std::int64_t{1} << 38);
  if (cacheable) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  const auto atoms = BlockRangeAtoms(*blocks_, first, last);
  StageEval e;
  e.compute = profiler_->Profile(atoms, batch, checkpointing);
  e.param_bytes = profiler_->ParamBytes(atoms);
  e.out_bytes = profiler_->OutgoingBytes(atoms, batch);
  if (e.out_bytes > 0) e.comm_sec = CommTime(e.out_bytes, cluster_);
  if (cacheable) {
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(key, e);
  }
  return e;
}

LinearStageCosts::LinearStageCosts(std::vector<LinearBlock> blocks,
                                   const ClusterSpec& cluster)
    : blocks_(std::move(blocks)), cluster_(cluster) {}

StageEval LinearStageCosts::Evaluate(int first, int last, std::int64_t batch,
                                     bool checkpointing) const {
  if (first < 0 || last >= num_blocks() || first > last || batch < 0) {
    throw InvalidArgs("bad stage range");
  }
  StageEval e;
  std::int64_t per_sample = 0;
  const double b = static_cast<double>(batch);
  for (int i = first; i <= last; ++i) {
    const LinearBlock& blk = blocks_[i];
    e.compute.t_fwd_sec += blk.t_fwd_per_sample * b;
    e.compute.t_bwd_sec += blk.t_bwd_per_sample * b;
    e.compute.mem_bytes += blk.mem_fixed;
    per_sample = checkpointing ? std::max(per_sample, blk.mem_per_sample)
                               : per_sample + blk.mem_per_sample;
    e.param_bytes += blk.param_bytes;
  }
  e.compute.mem_bytes += per_sample * batch;
  if (last + 1 < num_blocks()) {
    e.out_bytes = blocks_[last].out_bytes_per_sample * batch;
  }
  if (e.out_bytes > 0) e.comm_sec = CommTime(e.out_bytes, cluster_);
  return e;
}

}  // namespace pipecut
