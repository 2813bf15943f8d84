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

#ifndef PIPECUT_ATOMIC_PARTITION_H_
#define PIPECUT_ATOMIC_PARTITION_H_

#include <iosfwd>
#include <map>
#include <vector>

#include "pipecut/graph.h"

namespace pipecut {

using SubId = int;

// A connected subgraph with its cut values. Atoms, blocks and stages are all
// subcomponents of the (possibly cloned) task graph.
struct Subcomponent {
  SubId id = 0;
  std::vector<NodeIndex> nodes;    // sorted
  std::vector<NodeIndex> inputs;   // values consumed here, produced or owned elsewhere
  std::vector<NodeIndex> outputs;  // values owned here, consumed elsewhere or model outputs

  bool operator==(const Subcomponent&) const = default;
};

// Fills inputs/outputs for the node set.
Subcomponent MakeSubcomponent(const TaskGraph& g, SubId id,
                              std::vector<NodeIndex> nodes);

enum class TaskClass { kConstant, kNonConstant };

// Forward exploration from the model inputs: a task is non-constant iff it
// consumes a model input or a value produced by a non-constant task.
std::map<NodeId, TaskClass> MarkConstantTasks(const TaskGraph& g);

// Per node index; false for values and constant tasks.
std::vector<bool> NonConstantMask(const TaskGraph& g);

struct AtomicPartition {
  TaskGraph graph;                    // with clones
  std::vector<Subcomponent> atoms;    // ordered by topological position of the anchor task
  std::map<NodeId, NodeId> origin;    // clone id -> original id
  std::vector<SubId> atom_of;         // per node of `graph`
  std::vector<NodeIndex> anchor;      // the non-constant task of each atom
};

// Backward traversal forming one atom per non-constant task. Constant tasks
// (and their produced values) join the atom that consumes them; when several
// atoms consume a constant value, its whole constant ancestry is cloned once
// per consuming atom. Parameters shared by several atoms are cloned the same
// way. Throws NoNonConstantTask and DanglingOutput.
AtomicPartition BuildAtomicSubcomponents(const TaskGraph& g);

inline std::size_t CountAtoms(const AtomicPartition& p) { return p.atoms.size(); }

// {"atoms":[{"id","nodes","inputs","outputs"}],"clones":{clone:origin}}
void SaveAtoms(const AtomicPartition& p, std::ostream& out);

std::string AtomName(SubId id);

}  // namespace pipecut

#endif  // PIPECUT_ATOMIC_PARTITION_H_
