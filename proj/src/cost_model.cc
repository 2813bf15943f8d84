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

#include "pipecut/cost_model.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "pipecut/errors.h"

namespace pipecut {

using json = nlohmann::json;

std::string OpSignature(const TaskInfo& task) {
  if (task.attrs.empty()) return task.op;
  std::string sig = task.op + "(";
  bool first = true;
  for (const auto& [k, v] : task.attrs) {
    if (!first) sig += ",";
    sig += k + "=" + v;
    first = false;
  }
  return sig + ")";
}

namespace {

const CostTableEntry* FindEntry(const TaskInfo& task, const CostModelConfig& cfg) {
  if (!cfg.cost_table) return nullptr;
  auto it = cfg.cost_table->find(OpSignature(task));
  return it == cfg.cost_table->end() ? nullptr : &it->second;
}

std::int64_t ProducedBytes(const TaskGraph& g, NodeIndex task,
                           std::int64_t microbatch) {
  std::int64_t bytes = 0;
  for (NodeIndex out : g.succs(task)) {
    const auto& v = g.node(out).value();
    if (!v.is_param) bytes += v.SizeAt(microbatch);
  }
  return bytes;
}

TaskCost CostFrom(const TaskInfo& task, const CostTableEntry* entry,
                  std::int64_t produced_bytes, std::int64_t microbatch,
                  const CostModelConfig& cfg) {
  TaskCost c;
  if (entry != nullptr) {
    const double scale = static_cast<double>(microbatch) /
                         static_cast<double>(std::max<std::int64_t>(1, entry->microbatch));
    c.t_fwd = entry->t_fwd * scale;
    c.t_bwd = entry->t_bwd * scale;
    c.act_bytes = std::llround(static_cast<double>(entry->act_bytes) * scale);
    return c;
  }
  c.t_fwd = task.flops_per_sample * static_cast<double>(microbatch) /
            cfg.device_flops_per_sec;
  c.t_bwd = cfg.bwd_fwd_ratio * c.t_fwd;
  c.act_bytes = produced_bytes;
  return c;
}

std::int64_t ParamSideBytes(std::int64_t param_bytes, const CostModelConfig& cfg) {
  return std::llround(static_cast<double>(param_bytes) *
                      (1.0 + cfg.grad_factor + cfg.optimizer_state_factor));
}

}  // namespace

TaskCost CostOfTask(const TaskGraph& g, NodeIndex task, std::int64_t microbatch,
                    const CostModelConfig& cfg) {
  const TaskInfo& info = g.node(task).task();
  return CostFrom(info, FindEntry(info, cfg), ProducedBytes(g, task, microbatch),
                  microbatch, cfg);
}

CostRecord Profile(const TaskGraph& g, const Subcomponent& u,
                   std::int64_t microbatch, const CostModelConfig& cfg) {
  auto inside = [&u](NodeIndex i) {
    return std::binary_search(u.nodes.begin(), u.nodes.end(), i);
  };
  CostRecord r;
  std::int64_t params = 0, internal = 0, peak_task = 0, boundary = 0;
  std::vector<NodeIndex> imported;
  for (NodeIndex n : u.nodes) {
    const Node& node = g.node(n);
    if (node.is_task()) {
      TaskCost c = CostOfTask(g, n, microbatch, cfg);
      r.t_fwd_sec += c.t_fwd;
      r.t_bwd_sec += c.t_bwd;
      internal += c.act_bytes;
      peak_task = std::max(peak_task, c.act_bytes);
      for (NodeIndex in : g.preds(n)) {
        if (!inside(in)) imported.push_back(in);
      }
    } else if (node.value().is_param) {
      params += node.value().fixed_bytes;
    } else if (g.preds(n).empty()) {
      boundary += node.value().SizeAt(microbatch);
    }
  }
  std::sort(imported.begin(), imported.end());
  imported.erase(std::unique(imported.begin(), imported.end()), imported.end());
  for (NodeIndex v : imported) boundary += g.node(v).value().SizeAt(microbatch);

  r.mem_bytes = ParamSideBytes(params, cfg) + boundary +
                (cfg.checkpointing ? peak_task : internal);
  return r;
}

double CommTime(std::int64_t bytes, double bandwidth, double latency) {
  if (bytes <= 0) return latency;
  return latency + static_cast<double>(bytes) / bandwidth;
}

double CommTime(std::int64_t bytes, const ClusterSpec& cluster) {
  return CommTime(bytes, cluster.bw_intra_bytes_per_sec, cluster.link_latency_sec);
}

std::int64_t CutBytes(const TaskGraph& g, const Subcomponent& a,
                      const Subcomponent& b, std::int64_t microbatch) {
  auto directed = [&g, microbatch](const Subcomponent& from, const Subcomponent& to) {
    std::int64_t bytes = 0;
    for (NodeIndex v : from.nodes) {
      if (!g.node(v).is_value()) continue;
      bool crosses = std::any_of(g.succs(v).begin(), g.succs(v).end(), [&to](NodeIndex c) {
        return std::binary_search(to.nodes.begin(), to.nodes.end(), c);
      });
      if (crosses) bytes += g.node(v).value().SizeAt(microbatch);
    }
    return bytes;
  };
  return directed(a, b) + directed(b, a);
}

// ---------------------------------------------------------------------------
// AtomProfiler

AtomProfiler::AtomProfiler(const AtomicPartition& partition, CostModelConfig cfg)
    : partition_(&partition),
      cfg_(std::move(cfg)),
      atoms_(partition.atoms.size()),
      entry_(partition.graph.size()) {
  const TaskGraph& g = partition.graph;
  const auto& owner = partition.atom_of;
  for (NodeIndex i = 0; i < static_cast<NodeIndex>(g.size()); ++i) {
    if (!g.node(i).is_task()) continue;
    if (const CostTableEntry* e = FindEntry(g.node(i).task(), cfg_)) entry_[i] = *e;
  }
  for (const Subcomponent& sub : partition.atoms) {
    AtomInfo& info = atoms_[sub.id];
    for (NodeIndex n : sub.nodes) {
      const Node& node = g.node(n);
      if (node.is_task()) {
        info.tasks.push_back(n);
        continue;
      }
      if (node.value().is_param) {
        info.param_bytes += node.value().fixed_bytes;
      } else if (g.preds(n).empty()) {
        info.free_values.push_back(n);
      }
      std::vector<SubId> consumers;
      for (NodeIndex c : g.succs(n)) {
        if (owner[c] != sub.id) consumers.push_back(owner[c]);
      }
      std::sort(consumers.begin(), consumers.end());
      consumers.erase(std::unique(consumers.begin(), consumers.end()), consumers.end());
      if (!consumers.empty()) {
        info.succ.insert(info.succ.end(), consumers.begin(), consumers.end());
        info.exports.push_back({n, std::move(consumers)});
      }
    }
    for (NodeIndex in : sub.inputs) {
      info.imports.push_back(in);
      info.pred.push_back(owner[in]);
    }
    for (auto* v : {&info.succ, &info.pred}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
  }
}

TaskCost AtomProfiler::TaskCostAt(NodeIndex task, std::int64_t microbatch) const {
  const TaskGraph& g = partition_->graph;
  const auto& entry = entry_[task];
  return CostFrom(g.node(task).task(), entry ? &*entry : nullptr,
                  entry ? 0 : ProducedBytes(g, task, microbatch), microbatch, cfg_);
}

std::int64_t AtomProfiler::ValueSize(NodeIndex v, std::int64_t microbatch) const {
  return partition_->graph.node(v).value().SizeAt(microbatch);
}

std::int64_t AtomProfiler::ParamBytes(std::span<const SubId> atoms) const {
  std::int64_t bytes = 0;
  for (SubId a : atoms) bytes += atoms_[a].param_bytes;
  return bytes;
}

CostRecord AtomProfiler::Profile(std::span<const SubId> atoms,
                                 std::int64_t microbatch, bool checkpointing) const {
  const auto& owner = partition_->atom_of;
  auto in_set = [&atoms](SubId a) {
    return std::binary_search(atoms.begin(), atoms.end(), a);
  };
  CostRecord r;
  std::int64_t params = 0, internal = 0, peak_task = 0, boundary = 0;
  std::vector<NodeIndex> imported;
  for (SubId a : atoms) {
    const AtomInfo& info = atoms_[a];
    params += info.param_bytes;
    for (NodeIndex t : info.tasks) {
      TaskCost c = TaskCostAt(t, microbatch);
      r.t_fwd_sec += c.t_fwd;
      r.t_bwd_sec += c.t_bwd;
      internal += c.act_bytes;
      peak_task = std::max(peak_task, c.act_bytes);
    }
    for (NodeIndex v : info.free_values) boundary += ValueSize(v, microbatch);
    for (NodeIndex v : info.imports) {
      if (!in_set(owner[v])) imported.push_back(v);
    }
  }
  std::sort(imported.begin(), imported.end());
  imported.erase(std::unique(imported.begin(), imported.end()), imported.end());
  for (NodeIndex v : imported) boundary += ValueSize(v, microbatch);

  r.mem_bytes = ParamSideBytes(params, cfg_) + boundary +
                (checkpointing ? peak_task : internal);
  return r;
}

std::int64_t AtomProfiler::OutgoingBytes(std::span<const SubId> atoms,
                                         std::int64_t microbatch) const {
  auto in_set = [&atoms](SubId a) {
    return std::binary_search(atoms.begin(), atoms.end(), a);
  };
  std::int64_t bytes = 0;
  for (SubId a : atoms) {
    for (const Export& e : atoms_[a].exports) {
      if (!std::all_of(e.consumers.begin(), e.consumers.end(), in_set)) {
        bytes += ValueSize(e.value, microbatch);
      }
    }
  }
  return bytes;
}

std::int64_t AtomProfiler::CutBytes(std::span<const SubId> a,
                                    std::span<const SubId> b,
                                    std::int64_t microbatch) const {
  auto directed = [this, microbatch](std::span<const SubId> from,
                                     std::span<const SubId> to) {
    std::int64_t bytes = 0;
    for (SubId x : from) {
      for (const Export& e : atoms_[x].exports) {
        bool crosses = std::any_of(e.consumers.begin(), e.consumers.end(), [&to](SubId c) {
          return std::binary_search(to.begin(), to.end(), c);
        });
        if (crosses) bytes += ValueSize(e.value, microbatch);
      }
    }
    return bytes;
  };
  return directed(a, b) + directed(b, a);
}

// ---------------------------------------------------------------------------
// Files

CostTable LoadCostTable(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed cost table: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("cost table must be an object");
  CostTable table;
  for (const auto& [sig, e] : doc.items()) {
    if (!e.is_object()) throw ParseError("cost table entry '" + sig + "' must be an object");
    for (const auto& [k, _] : e.items()) {
      if (k != "microbatch" && k != "t_fwd" && k != "t_bwd" && k != "act_bytes") {
        throw ParseError("cost table entry '" + sig + "': unknown field '" + k + "'");
      }
    }
    try {
      CostTableEntry entry;
      entry.microbatch = e.at("microbatch").get<std::int64_t>();
      entry.t_fwd = e.at("t_fwd").get<double>();
      entry.t_bwd = e.at("t_bwd").get<double>();
      entry.act_bytes = e.at("act_bytes").get<std::int64_t>();
      if (entry.microbatch < 1 || entry.t_fwd < 0 || entry.t_bwd < 0 ||
          entry.act_bytes < 0) {
        throw ParseError("cost table entry '" + sig + "' has out-of-range values");
      }
      table[sig] = entry;
    } catch (const json::exception&) {
      throw ParseError("cost table entry '" + sig + "' is missing or mistyped fields");
    }
  }
  return table;
}

CostTable LoadCostTableFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cost table '" + path + "'");
  return LoadCostTable(in);
}

CostModelConfig LoadCostConfig(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed cost config: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("cost config must be an object");
  CostModelConfig cfg;
  try {
    for (const auto& [k, v] : doc.items()) {
      if (k == "device_flops_per_sec") {
        cfg.device_flops_per_sec = v.get<double>();
      } else if (k == "bwd_fwd_ratio") {
        cfg.bwd_fwd_ratio = v.get<double>();
      } else if (k == "optimizer_state_factor") {
        cfg.optimizer_state_factor = v.get<double>();
      } else if (k == "grad_factor") {
        cfg.grad_factor = v.get<double>();
      } else if (k == "bytes_per_element") {
        cfg.bytes_per_element = v.get<int>();
      } else if (k == "checkpointing") {
        cfg.checkpointing = v.get<bool>();
      } else {
        throw ParseError("cost config: unknown field '" + k + "'");
      }
    }
  } catch (const json::exception&) {
    throw ParseError("cost config: mistyped field");
  }
  if (!(cfg.device_flops_per_sec > 0) || !(cfg.bwd_fwd_ratio > 0) ||
      cfg.optimizer_state_factor < 0 || cfg.grad_factor < 0 ||
      cfg.bytes_per_element < 1) {
    throw ParseError("cost config: value out of range");
  }
  return cfg;
}

CostModelConfig LoadCostConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cost config '" + path + "'");
  return LoadCostConfig(in);
}

}  // namespace pipecut
