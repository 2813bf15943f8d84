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

#ifndef PIPECUT_BLOCK_PARTITION_H_
#define PIPECUT_BLOCK_PARTITION_H_

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "pipecut/atomic_partition.h"
#include "pipecut/cost_model.h"
#include "pipecut/graph.h"

namespace pipecut {

// Block-level grouping works at this microbatch with checkpointing on.
inline constexpr std::int64_t kReferenceMicrobatch = 1;
inline constexpr int kDefaultBlocks = 32;

// Levels G_0 .. G_L*. Each level maps every atom to a group label; labels are
// dense and numbered by the smallest atom of the group, so G_0 is the
// identity.
struct GroupHierarchy {
  std::vector<std::vector<int>> levels;

  std::size_t num_levels() const { return levels.size(); }
  int num_groups(std::size_t level) const;
  std::vector<std::vector<SubId>> Groups(std::size_t level) const;
  const std::vector<int>& top() const { return levels.back(); }
};

struct Block {
  SubId id = 0;
  std::vector<SubId> atoms;  // sorted
  CostRecord cost;           // at kReferenceMicrobatch, checkpointing on
};

// k convex blocks in topological order.
struct BlockSet {
  std::vector<Block> blocks;

  std::size_t size() const { return blocks.size(); }
};

// Called with every group the block phase creates (sorted atom list).
using GroupObserver = std::function<void(std::span<const SubId>)>;

// Exact convexity on the atom DAG: no path between two members leaves the
// group. `group` must be sorted.
bool IsConvex(std::span<const SubId> group, const AtomProfiler& profiler);
bool IsConvex(std::span<const SubId> group, const AtomicPartition& partition);

// True iff contracting every group of `assign` yields a DAG.
bool QuotientIsAcyclic(const std::vector<int>& assign, const AtomProfiler& profiler);

// Sum over adjacent group pairs of comm_time(cut bytes) at the reference
// microbatch, intra-node bandwidth.
double LevelCommTime(const std::vector<int>& assign, const AtomProfiler& profiler,
                     const ClusterSpec& cluster);

// Throws InfeasibleAtom when an atom alone exceeds device memory.
GroupHierarchy Coarsen(const AtomProfiler& profiler, int k,
                       const ClusterSpec& cluster,
                       const GroupObserver& observer = {});

GroupHierarchy Uncoarsen(GroupHierarchy h, const AtomProfiler& profiler,
                         const ClusterSpec& cluster,
                         const GroupObserver& observer = {});

// Throws CompactionStuck, or InvalidArgs when the top level has fewer than k
// groups.
BlockSet Compact(const GroupHierarchy& h, int k, const AtomProfiler& profiler,
                 const ClusterSpec& cluster, const GroupObserver& observer = {});

// Moves each block boundary within the two blocks it separates, along the
// topological atom order the blocks define, to minimise the largest block
// time and then the sum of squared block times. Every block stays convex and
// within device memory; the input split is one of the candidates.
BlockSet RefineBoundaries(const BlockSet& blocks, const AtomProfiler& profiler,
                          const ClusterSpec& cluster, const GroupObserver& observer = {});

// Coarsen, uncoarsen, compact, refine.
BlockSet PartitionBlocks(const AtomProfiler& profiler, int k,
                         const ClusterSpec& cluster,
                         const GroupObserver& observer = {});

// Topological order of the groups of `assign` (ties by label). Throws
// CycleError if the quotient is cyclic.
std::vector<int> TopoSortGroups(const std::vector<int>& assign,
                                const AtomProfiler& profiler);

std::vector<SubId> BlockRangeAtoms(const BlockSet& blocks, int first, int last);

// {"k":int,"blocks":[{"id","atoms","t_fwd","t_bwd","mem"}]}
void SaveBlocks(const BlockSet& blocks, std::ostream& out);
// Reads atom membership back and re-profiles every block.
BlockSet LoadBlocks(std::istream& in, const AtomProfiler& profiler);

std::string BlockName(SubId id);

}  // namespace pipecut

#endif  // PIPECUT_BLOCK_PARTITION_H_
