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

#include "pipecut/atomic_partition.h"

#include <algorithm>
#include <ostream>
#include <set>

#include "json.hpp"
#include "pipecut/errors.h"

namespace pipecut {

Subcomponent MakeSubcomponent(const TaskGraph& g, SubId id,
                              std::vector<NodeIndex> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  auto inside = [&nodes](NodeIndex i) {
    return std::binary_search(nodes.begin(), nodes.end(), i);
  };
  Subcomponent s;
  s.id = id;
  for (NodeIndex n : nodes) {
    const Node& node = g.node(n);
    if (node.is_task()) {
      for (NodeIndex in : g.preds(n)) {
        if (!inside(in)) s.inputs.push_back(in);
      }
    } else {
      bool exported = g.is_output(n);
      for (NodeIndex c : g.succs(n)) exported = exported || !inside(c);
      if (exported) s.outputs.push_back(n);
    }
  }
  std::sort(s.inputs.begin(), s.inputs.end());
  s.inputs.erase(std::unique(s.inputs.begin(), s.inputs.end()), s.inputs.end());
  s.nodes = std::move(nodes);
  return s;
}

std::vector<bool> NonConstantMask(const TaskGraph& g) {
  std::vector<bool> dynamic(g.size(), false);
  std::vector<bool> non_constant(g.size(), false);
  for (NodeIndex i : g.inputs()) dynamic[i] = true;
  for (NodeIndex n : TopoOrder(g)) {
    if (g.node(n).is_task()) {
      bool nc = std::any_of(g.preds(n).begin(), g.preds(n).end(),
                            [&](NodeIndex p) { return dynamic[p]; });
      non_constant[n] = nc;
      if (nc) {
        for (NodeIndex out : g.succs(n)) dynamic[out] = true;
      }
    }
  }
  return non_constant;
}

std::map<NodeId, TaskClass> MarkConstantTasks(const TaskGraph& g) {
  auto mask = NonConstantMask(g);
  std::map<NodeId, TaskClass> out;
  for (NodeIndex i = 0; i < static_cast<NodeIndex>(g.size()); ++i) {
    if (g.node(i).is_task()) {
      out[g.node(i).id] = mask[i] ? TaskClass::kNonConstant : TaskClass::kConstant;
    }
  }
  return out;
}

std::string AtomName(SubId id) { return "a" + std::to_string(id); }

AtomicPartition BuildAtomicSubcomponents(const TaskGraph& g) {
  const auto order = TopoOrder(g);
  const auto non_constant = NonConstantMask(g);
  const std::size_t n = g.size();

  std::vector<int> topo_pos(n);
  for (std::size_t i = 0; i < order.size(); ++i) topo_pos[order[i]] = static_cast<int>(i);

  // Atoms in topological order of their non-constant task.
  std::vector<NodeIndex> anchors;
  for (NodeIndex v : order) {
    if (non_constant[v]) anchors.push_back(v);
  }
  if (anchors.empty()) {
    throw NoNonConstantTask("no task depends on the model inputs");
  }
  std::vector<SubId> anchor_atom(n, -1);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    anchor_atom[anchors[a]] = static_cast<SubId>(a);
  }

  for (NodeIndex out : g.outputs()) {
    bool dynamic = g.is_input(out);
    for (NodeIndex p : g.preds(out)) dynamic = dynamic || non_constant[p];
    if (!dynamic) {
      throw DanglingOutput("model output '" + g.node(out).id +
                           "' depends only on constants");
    }
  }

  // Backward traversal: the set of atoms each node is placed into.
  std::vector<std::vector<SubId>> place(n);
  auto merge_into = [](std::vector<SubId>& dst, const std::vector<SubId>& src) {
    std::vector<SubId> merged;
    std::set_union(dst.begin(), dst.end(), src.begin(), src.end(),
                   std::back_inserter(merged));
    dst.swap(merged);
  };
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeIndex v = *it;
    const Node& node = g.node(v);
    if (node.is_task()) {
      if (non_constant[v]) {
        place[v] = {anchor_atom[v]};
      } else {
        for (NodeIndex out : g.succs(v)) merge_into(place[v], place[out]);
        if (place[v].empty()) {
          throw DanglingOutput("constant task '" + node.id +
                               "' feeds no non-constant task");
        }
      }
      for (NodeIndex out : g.succs(v)) place[out] = place[v];
      continue;
    }
    if (!g.preds(v).empty()) {
      // Produced value: consumers decide; the producer overwrites it below.
      for (NodeIndex c : g.succs(v)) merge_into(place[v], place[c]);
      continue;
    }
    if (g.is_input(v)) {
      NodeIndex first = -1;
      for (NodeIndex c : g.succs(v)) {
        if (first < 0 || topo_pos[c] < topo_pos[first]) first = c;
      }
      place[v] = {first < 0 ? 0 : place[first].front()};
    } else {
      for (NodeIndex c : g.succs(v)) merge_into(place[v], place[c]);
      if (place[v].empty()) place[v] = {0};
    }
  }
  // Materialise copies.
  std::set<NodeId> taken;
  for (const Node& node : g.nodes()) taken.insert(node.id);
  std::vector<std::map<SubId, NodeId>> copy_id(n);
  std::vector<Node> nodes;
  AtomicPartition p;
  std::map<NodeId, SubId> owner;
  for (NodeIndex v = 0; v < static_cast<NodeIndex>(n); ++v) {
    const auto& atoms = place[v];
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      // A node needed by several atoms becomes one clone per atom.
      NodeId id = g.node(v).id;
      if (atoms.size() > 1) {
        id += "#" + AtomName(atoms[k]);
        while (taken.count(id)) id += "#";
        taken.insert(id);
        p.origin[id] = g.node(v).id;
      }
      copy_id[v][atoms[k]] = id;
      owner[id] = atoms[k];
      nodes.push_back({id, g.node(v).kind});
    }
  }

  std::vector<Edge> edges;
  for (auto [u, v] : g.edges()) {
    for (SubId a : place[v]) {
      auto it = copy_id[u].find(a);
      const NodeId& src = it != copy_id[u].end() ? it->second : copy_id[u].begin()->second;
      edges.push_back({src, copy_id[v].at(a)});
    }
  }
  std::vector<NodeId> inputs, outputs;
  for (NodeIndex i : g.inputs()) inputs.push_back(g.node(i).id);
  for (NodeIndex i : g.outputs()) outputs.push_back(g.node(i).id);

  p.graph = TaskGraph::Build(std::move(nodes), std::move(edges), std::move(inputs),
                             std::move(outputs));
  p.atom_of.assign(p.graph.size(), -1);
  std::vector<std::vector<NodeIndex>> members(anchors.size());
  for (NodeIndex i = 0; i < static_cast<NodeIndex>(p.graph.size()); ++i) {
    SubId a = owner.at(p.graph.node(i).id);
    p.atom_of[i] = a;
    members[a].push_back(i);
  }
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    p.atoms.push_back(MakeSubcomponent(p.graph, static_cast<SubId>(a),
                                       std::move(members[a])));
    p.anchor.push_back(p.graph.IndexOf(g.node(anchors[a]).id));
  }
  return p;
}

void SaveAtoms(const AtomicPartition& p, std::ostream& out) {
  using json = nlohmann::json;
  const TaskGraph& g = p.graph;
  auto ids = [&g](const std::vector<NodeIndex>& v) {
    json arr = json::array();
    for (NodeIndex i : v) arr.push_back(g.node(i).id);
    return arr;
  };
  json atoms = json::array();
  for (const auto& a : p.atoms) {
    atoms.push_back({{"id", AtomName(a.id)},
                     {"nodes", ids(a.nodes)},
                     {"inputs", ids(a.inputs)},
                     {"outputs", ids(a.outputs)}});
  }
  json clones = json::object();
  for (const auto& [clone, orig] : p.origin) clones[clone] = orig;
  out << json{{"atoms", atoms}, {"clones", clones}}.dump() << "\n";
}

}  // namespace pipecut
