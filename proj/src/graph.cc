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

#include "pipecut/graph.h"

#include <algorithm>
#include <fstream>
#include <functional>
#include <queue>
#include <set>

#include "json.hpp"
#include "pipecut/errors.h"

namespace pipecut {

using json = nlohmann::json;

TaskGraph TaskGraph::Build(std::vector<Node> nodes, std::vector<Edge> edges,
                           std::vector<NodeId> inputs,
                           std::vector<NodeId> outputs) {
  TaskGraph g;
  std::sort(nodes.begin(), nodes.end(),
            [](const Node& a, const Node& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i].id == nodes[i - 1].id) {
      throw ParseError("duplicate node id '" + nodes[i].id + "'");
    }
  }
  g.nodes_ = std::move(nodes);
  g.index_.reserve(g.nodes_.size());
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
    g.index_.emplace(g.nodes_[i].id, static_cast<NodeIndex>(i));
  }
  auto lookup = [&g](const NodeId& id, const char* where) {
    auto it = g.index_.find(id);
    if (it == g.index_.end()) {
      throw ParseError(std::string(where) + " references unknown node '" + id +
                       "'");
    }
    return it->second;
  };

  g.edges_.reserve(edges.size());
  for (const Edge& e : edges) {
    g.edges_.emplace_back(lookup(e.src, "edge"), lookup(e.dst, "edge"));
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()),
                 g.edges_.end());

  g.preds_.assign(g.nodes_.size(), {});
  g.succs_.assign(g.nodes_.size(), {});
  for (auto [s, d] : g.edges_) {
    g.succs_[s].push_back(d);
    g.preds_[d].push_back(s);
  }
  for (auto& p : g.preds_) std::sort(p.begin(), p.end());

  g.is_input_.assign(g.nodes_.size(), false);
  g.is_output_.assign(g.nodes_.size(), false);
  for (const NodeId& id : inputs) {
    NodeIndex i = lookup(id, "inputs");
    if (!g.is_input_[i]) g.inputs_.push_back(i);
    g.is_input_[i] = true;
  }
  for (const NodeId& id : outputs) {
    NodeIndex i = lookup(id, "outputs");
    if (!g.is_output_[i]) g.outputs_.push_back(i);
    g.is_output_[i] = true;
  }
  std::sort(g.inputs_.begin(), g.inputs_.end());
  std::sort(g.outputs_.begin(), g.outputs_.end());
  return g;
}

std::optional<NodeIndex> TaskGraph::Find(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

NodeIndex TaskGraph::IndexOf(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error("unknown node '" + id + "'");
  return it->second;
}

std::size_t TaskGraph::num_tasks() const {
  return static_cast<std::size_t>(std::count_if(
      nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_task(); }));
}

void ValidateCluster(const ClusterSpec& c) {
  std::vector<std::string> bad;
  if (c.num_nodes < 1) bad.push_back("num_nodes must be positive");
  if (c.devices_per_node < 1) bad.push_back("devices_per_node must be positive");
  if (c.device_memory_bytes < 1) {
    bad.push_back("device_memory_bytes must be positive");
  }
  if (!(c.bw_inter_bytes_per_sec > 0)) bad.push_back("bw_inter must be positive");
  if (!(c.bw_intra_bytes_per_sec >= c.bw_inter_bytes_per_sec)) {
    bad.push_back("bw_intra must be >= bw_inter");
  }
  if (!(c.link_latency_sec >= 0)) {
    bad.push_back("link_latency_sec must be non-negative");
  }
  if (!bad.empty()) throw ValidationError("invalid cluster spec", bad);
}

std::string_view KindName(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::kCycle:
      return "cycle";
    case Violation::Kind::kNonBipartite:
      return "non-bipartite";
    case Violation::Kind::kMultiProducer:
      return "multi-producer";
    case Violation::Kind::kParamScalesWithBatch:
      return "param-scales-with-batch";
    case Violation::Kind::kBadInput:
      return "bad-input";
    case Violation::Kind::kBadOutput:
      return "bad-output";
    case Violation::Kind::kUnreachableOutput:
      return "unreachable-output";
  }
  return "unknown";
}

std::string Describe(const Violation& v) {
  std::string s(KindName(v.kind));
  s += " {";
  for (std::size_t i = 0; i < v.nodes.size(); ++i) {
    if (i) s += ",";
    s += v.nodes[i];
  }
  s += "}";
  return s;
}

namespace {

// Strongly connected components with more than one node (or a self loop),
// iterative Tarjan.
std::vector<std::vector<NodeIndex>> CyclicComponents(const TaskGraph& g) {
  const auto n = static_cast<NodeIndex>(g.size());
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<NodeIndex> stack;
  std::vector<std::vector<NodeIndex>> out;
  int counter = 0;

  struct Frame {
    NodeIndex v;
    std::size_t next;
  };
  for (NodeIndex root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      auto succ = g.succs(f.v);
      if (f.next < succ.size()) {
        NodeIndex w = succ[f.next++];
        if (index[w] == -1) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      NodeIndex v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] != index[v]) continue;
      std::vector<NodeIndex> comp;
      NodeIndex w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      bool self_loop = std::binary_search(g.preds(v).begin(), g.preds(v).end(), v);
      if (comp.size() > 1 || self_loop) {
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<Violation> ValidateGraph(const TaskGraph& g) {
  using K = Violation::Kind;
  std::vector<Violation> out;
  auto id = [&g](NodeIndex i) { return g.node(i).id; };

  for (const auto& comp : CyclicComponents(g)) {
    Violation v{K::kCycle, {}};
    for (NodeIndex i : comp) v.nodes.push_back(id(i));
    out.push_back(std::move(v));
  }
  for (auto [s, d] : g.edges()) {
    if (g.node(s).is_task() == g.node(d).is_task()) {
      out.push_back({K::kNonBipartite, {id(s), id(d)}});
    }
  }
  for (NodeIndex i = 0; i < static_cast<NodeIndex>(g.size()); ++i) {
    const Node& n = g.node(i);
    if (!n.is_value()) continue;
    auto producers = std::count_if(g.preds(i).begin(), g.preds(i).end(),
                                   [&g](NodeIndex p) { return g.node(p).is_task(); });
    if (producers > 1) out.push_back({K::kMultiProducer, {n.id}});
    if (n.value().is_param && n.value().bytes_per_sample != 0) {
      out.push_back({K::kParamScalesWithBatch, {n.id}});
    }
  }
  for (NodeIndex i : g.inputs()) {
    if (!g.node(i).is_value() || !g.preds(i).empty()) {
      out.push_back({K::kBadInput, {id(i)}});
    }
  }
  for (NodeIndex i : g.outputs()) {
    if (!g.node(i).is_value()) out.push_back({K::kBadOutput, {id(i)}});
  }

  // Outputs must be reachable from a producer-less value (input, parameter or
  // constant).
  std::vector<bool> reached(g.size(), false);
  std::vector<NodeIndex> work;
  for (NodeIndex i = 0; i < static_cast<NodeIndex>(g.size()); ++i) {
    if (g.node(i).is_value() && g.preds(i).empty()) {
      reached[i] = true;
      work.push_back(i);
    }
  }
  while (!work.empty()) {
    NodeIndex v = work.back();
    work.pop_back();
    for (NodeIndex w : g.succs(v)) {
      if (!reached[w]) {
        reached[w] = true;
        work.push_back(w);
      }
    }
  }
  for (NodeIndex i : g.outputs()) {
    if (!reached[i]) out.push_back({K::kUnreachableOutput, {id(i)}});
  }
  return out;
}

std::vector<NodeIndex> TopoOrder(const TaskGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::size_t> indeg(n);
  std::priority_queue<NodeIndex, std::vector<NodeIndex>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    indeg[i] = g.preds(static_cast<NodeIndex>(i)).size();
    if (indeg[i] == 0) ready.push(static_cast<NodeIndex>(i));
  }
  std::vector<NodeIndex> order;
  order.reserve(n);
  while (!ready.empty()) {
    NodeIndex v = ready.top();
    ready.pop();
    order.push_back(v);
    for (NodeIndex w : g.succs(v)) {
      if (--indeg[w] == 0) ready.push(w);
    }
  }
  if (order.size() != n) {
    throw CycleError("task graph contains a cycle");
  }
  return order;
}

std::vector<NodeId> TopoOrderIds(const TaskGraph& g) {
  std::vector<NodeId> ids;
  for (NodeIndex i : TopoOrder(g)) ids.push_back(g.node(i).id);
  return ids;
}

ParamCount CountParams(const TaskGraph& g, int bytes_per_element) {
  ParamCount c;
  for (const Node& n : g.nodes()) {
    if (n.is_value() && n.value().is_param) c.bytes += n.value().fixed_bytes;
  }
  c.elements = c.bytes / bytes_per_element;
  return c;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void RejectUnknown(const json& obj, std::initializer_list<std::string_view> keys,
                   const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& [k, _] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ParseError(where + ": unknown field '" + k + "'");
    }
  }
}

template <typename T>
T Get(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  try {
    return it->template get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

std::int64_t GetNonNegative(const json& obj, const char* key,
                            const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return 0;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    throw ParseError(where + ": '" + key + "' must be a non-negative integer");
  }
  return it->get<std::int64_t>();
}

std::vector<NodeId> IdList(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) return {};
  if (!it->is_array()) throw ParseError(std::string(key) + " must be an array");
  std::vector<NodeId> ids;
  for (const auto& e : *it) {
    if (!e.is_string()) throw ParseError(std::string(key) + " must hold strings");
    ids.push_back(e.get<std::string>());
  }
  return ids;
}

json ParseStream(std::istream& in) {
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

TaskGraph LoadGraph(std::istream& in) {
  json doc = ParseStream(in);
  RejectUnknown(doc, {"nodes", "edges", "inputs", "outputs"}, "graph");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw ParseError("graph: 'nodes' must be an array");
  }

  std::vector<Node> nodes;
  for (const auto& jn : doc["nodes"]) {
    RejectUnknown(jn, {"id", "kind", "task", "value"}, "node");
    Node n;
    n.id = Get<std::string>(jn, "id", "node");
    const std::string where = "node '" + n.id + "'";
    const auto kind = Get<std::string>(jn, "kind", where);
    if (kind == "task") {
      if (jn.contains("value")) throw ParseError(where + ": task with value body");
      TaskInfo t;
      json body = jn.value("task", json::object());
      RejectUnknown(body, {"op", "flops_per_sample", "attrs"}, where);
      t.op = Get<std::string>(body, "op", where);
      if (body.contains("flops_per_sample")) {
        if (!body["flops_per_sample"].is_number() ||
            body["flops_per_sample"].get<double>() < 0) {
          throw ParseError(where + ": flops_per_sample must be a non-negative number");
        }
        t.flops_per_sample = body["flops_per_sample"].get<double>();
      }
      if (body.contains("attrs")) {
        if (!body["attrs"].is_object()) throw ParseError(where + ": attrs must be an object");
        for (const auto& [k, v] : body["attrs"].items()) {
          t.attrs[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
      }
      n.kind = std::move(t);
    } else if (kind == "value") {
      if (jn.contains("task")) throw ParseError(where + ": value with task body");
      json body = jn.value("value", json::object());
      RejectUnknown(body, {"fixed_bytes", "bytes_per_sample", "is_param"}, where);
      ValueInfo v;
      v.fixed_bytes = GetNonNegative(body, "fixed_bytes", where);
      v.bytes_per_sample = GetNonNegative(body, "bytes_per_sample", where);
      if (body.contains("is_param")) {
        if (!body["is_param"].is_boolean()) throw ParseError(where + ": is_param must be boolean");
        v.is_param = body["is_param"].get<bool>();
      }
      n.kind = v;
    } else {
      throw ParseError(where + ": kind must be 'task' or 'value'");
    }
    nodes.push_back(std::move(n));
  }

  std::vector<Edge> edges;
  if (doc.contains("edges")) {
    if (!doc["edges"].is_array()) throw ParseError("graph: 'edges' must be an array");
    for (const auto& je : doc["edges"]) {
      if (!je.is_array() || je.size() != 2 || !je[0].is_string() ||
          !je[1].is_string()) {
        throw ParseError("graph: each edge must be [src, dst]");
      }
      edges.push_back({je[0].get<std::string>(), je[1].get<std::string>()});
    }
  }

  TaskGraph g = TaskGraph::Build(std::move(nodes), std::move(edges),
                                 IdList(doc, "inputs"), IdList(doc, "outputs"));
  auto violations = ValidateGraph(g);
  if (!violations.empty()) {
    std::vector<std::string> details;
    for (const auto& v : violations) details.push_back(Describe(v));
    throw ValidationError("invalid task graph: " + details.front(), details);
  }
  return g;
}

TaskGraph LoadGraphFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file '" + path + "'");
  return LoadGraph(in);
}

void SaveGraph(const TaskGraph& g, std::ostream& out) {
  json doc;
  json nodes = json::array();
  for (const Node& n : g.nodes()) {
    json jn{{"id", n.id}};
    if (n.is_task()) {
      json attrs = json::object();
      for (const auto& [k, v] : n.task().attrs) attrs[k] = v;
      jn["kind"] = "task";
      jn["task"] = {{"op", n.task().op},
                    {"flops_per_sample", n.task().flops_per_sample},
                    {"attrs", attrs}};
    } else {
      jn["kind"] = "value";
      jn["value"] = {{"fixed_bytes", n.value().fixed_bytes},
                     {"bytes_per_sample", n.value().bytes_per_sample},
                     {"is_param", n.value().is_param}};
    }
    nodes.push_back(std::move(jn));
  }
  json edges = json::array();
  for (auto [s, d] : g.edges()) {
    edges.push_back({g.node(s).id, g.node(d).id});
  }
  json inputs = json::array(), outputs = json::array();
  for (NodeIndex i : g.inputs()) inputs.push_back(g.node(i).id);
  for (NodeIndex i : g.outputs()) outputs.push_back(g.node(i).id);
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  doc["inputs"] = std::move(inputs);
  doc["outputs"] = std::move(outputs);
  out << doc.dump() << "\n";
}

ClusterSpec LoadCluster(std::istream& in) {
  json doc = ParseStream(in);
  RejectUnknown(doc,
                {"num_nodes", "devices_per_node", "device_memory_bytes",
                 "bw_intra", "bw_inter", "link_latency_sec"},
                "cluster");
  ClusterSpec c;
  c.num_nodes = Get<int>(doc, "num_nodes", "cluster");
  c.devices_per_node = Get<int>(doc, "devices_per_node", "cluster");
  c.device_memory_bytes = Get<std::int64_t>(doc, "device_memory_bytes", "cluster");
  c.bw_intra_bytes_per_sec = Get<double>(doc, "bw_intra", "cluster");
  c.bw_inter_bytes_per_sec = Get<double>(doc, "bw_inter", "cluster");
  c.link_latency_sec = doc.contains("link_latency_sec")
                           ? Get<double>(doc, "link_latency_sec", "cluster")
                           : 0.0;
  ValidateCluster(c);
  return c;
}

ClusterSpec LoadClusterFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cluster file '" + path + "'");
  return LoadCluster(in);
}

void SaveCluster(const ClusterSpec& c, std::ostream& out) {
  json doc{{"num_nodes", c.num_nodes},
           {"devices_per_node", c.devices_per_node},
           {"device_memory_bytes", c.device_memory_bytes},
           {"bw_intra", c.bw_intra_bytes_per_sec},
           {"bw_inter", c.bw_inter_bytes_per_sec},
           {"link_latency_sec", c.link_latency_sec}};
  out << doc.dump(2) << "\n";
}

}  // namespace pipecut
