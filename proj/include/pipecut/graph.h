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

#ifndef PIPECUT_GRAPH_H_
#define PIPECUT_GRAPH_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace pipecut {

using NodeId = std::string;

// Dense index of a node inside a TaskGraph. Indices follow ascending NodeId
// order, so iterating by index is iterating in lexicographic id order.
using NodeIndex = std::int32_t;

struct TaskInfo {
  std::string op;
  double flops_per_sample = 0.0;
  std::map<std::string, std::string> attrs;

  bool operator==(const TaskInfo&) const = default;
};

// Size of a value at per-replica batch b is fixed_bytes + b * bytes_per_sample.
struct ValueInfo {
  std::int64_t fixed_bytes = 0;
  std::int64_t bytes_per_sample = 0;
  bool is_param = false;

  std::int64_t SizeAt(std::int64_t batch) const {
    return fixed_bytes + batch * bytes_per_sample;
  }

  bool operator==(const ValueInfo&) const = default;
};

struct Node {
  NodeId id;
  std::variant<TaskInfo, ValueInfo> kind;

  bool is_task() const { return std::holds_alternative<TaskInfo>(kind); }
  bool is_value() const { return std::holds_alternative<ValueInfo>(kind); }
  const TaskInfo& task() const { return std::get<TaskInfo>(kind); }
  const ValueInfo& value() const { return std::get<ValueInfo>(kind); }

  bool operator==(const Node&) const = default;
};

struct Edge {
  NodeId src;
  NodeId dst;

  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

// Bipartite task/value DAG. Immutable once built; every accessor is const.
class TaskGraph {
 public:
  TaskGraph() = default;

  // Builds the index structures. Throws ParseError on duplicate ids or on
  // edges / inputs / outputs naming unknown nodes. Does not check the graph
  // invariants; see ValidateGraph.
  static TaskGraph Build(std::vector<Node> nodes, std::vector<Edge> edges,
                         std::vector<NodeId> inputs,
                         std::vector<NodeId> outputs);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  const Node& node(NodeIndex i) const { return nodes_[i]; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::optional<NodeIndex> Find(const NodeId& id) const;
  NodeIndex IndexOf(const NodeId& id) const;

  std::span<const NodeIndex> preds(NodeIndex i) const { return preds_[i]; }
  std::span<const NodeIndex> succs(NodeIndex i) const { return succs_[i]; }

  // Sorted (src, dst) index pairs, duplicates removed.
  const std::vector<std::pair<NodeIndex, NodeIndex>>& edges() const {
    return edges_;
  }
  const std::vector<NodeIndex>& inputs() const { return inputs_; }
  const std::vector<NodeIndex>& outputs() const { return outputs_; }
  bool is_input(NodeIndex i) const { return is_input_[i]; }
  bool is_output(NodeIndex i) const { return is_output_[i]; }

  std::size_t num_tasks() const;
  std::size_t num_values() const { return size() - num_tasks(); }

  bool operator==(const TaskGraph& other) const {
    return nodes_ == other.nodes_ && edges_ == other.edges_ &&
           inputs_ == other.inputs_ && outputs_ == other.outputs_;
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<NodeId, NodeIndex> index_;
  std::vector<std::vector<NodeIndex>> preds_;
  std::vector<std::vector<NodeIndex>> succs_;
  std::vector<std::pair<NodeIndex, NodeIndex>> edges_;
  std::vector<NodeIndex> inputs_;
  std::vector<NodeIndex> outputs_;
  std::vector<bool> is_input_;
  std::vector<bool> is_output_;
};

struct ClusterSpec {
  int num_nodes = 1;
  int devices_per_node = 1;
  std::int64_t device_memory_bytes = 32LL << 30;
  double bw_intra_bytes_per_sec = 25e9;
  double bw_inter_bytes_per_sec = 12.5e9;
  double link_latency_sec = 0.0;

  int total_devices() const { return num_nodes * devices_per_node; }
};

// Throws ValidationError when a ClusterSpec field is out of range.
void ValidateCluster(const ClusterSpec& cluster);

struct Violation {
  enum class Kind {
    kCycle,
    kNonBipartite,
    kMultiProducer,
    kParamScalesWithBatch,
    kBadInput,
    kBadOutput,
    kUnreachableOutput,
  };
  Kind kind;
  std::vector<NodeId> nodes;

  bool operator==(const Violation&) const = default;
};

std::string_view KindName(Violation::Kind kind);
std::string Describe(const Violation& v);

// Every violated TaskGraph invariant. Empty iff the graph is valid.
std::vector<Violation> ValidateGraph(const TaskGraph& g);

// Kahn's algorithm with ties broken by ascending NodeId. Throws CycleError.
std::vector<NodeIndex> TopoOrder(const TaskGraph& g);
std::vector<NodeId> TopoOrderIds(const TaskGraph& g);

struct ParamCount {
  std::int64_t bytes = 0;
  std::int64_t elements = 0;
};

// Sums is_param values. Elements are bytes / bytes_per_element.
ParamCount CountParams(const TaskGraph& g, int bytes_per_element = 4);

// Graph JSON (UTF-8). Throws ParseError on malformed input or unknown fields
// and ValidationError when the graph breaks an invariant.
TaskGraph LoadGraph(std::istream& in);
TaskGraph LoadGraphFile(const std::string& path);
void SaveGraph(const TaskGraph& g, std::ostream& out);

ClusterSpec LoadCluster(std::istream& in);
ClusterSpec LoadClusterFile(const std::string& path);
void SaveCluster(const ClusterSpec& c, std::ostream& out);

}  // namespace pipecut

#endif  // PIPECUT_GRAPH_H_
