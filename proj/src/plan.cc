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

#include "pipecut/plan.h"

#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "pipecut/errors.h"

namespace pipecut {

using json = nlohmann::json;

int Plan::devices_used() const {
  int n = 0;
  for (const auto& s : stages) n += s.replicas;
  return n;
}

std::int64_t PerReplicaBatch(std::int64_t batch_size, int replica_factor,
                             int microbatches, int devices) {
  if (replica_factor < 1 || microbatches < 1 || devices < 1) return 0;
  return batch_size / replica_factor / microbatches / devices;
}

void SavePlan(const Plan& plan, std::ostream& out) {
  json stages = json::array();
  for (const auto& s : plan.stages) {
    stages.push_back({{"blocks", {s.first_block, s.last_block}},
                      {"devices", s.devices},
                      {"replicas", s.replicas},
                      {"t_fwd", s.cost.t_fwd_sec},
                      {"t_bwd", s.cost.t_bwd_sec},
                      {"mem", s.cost.mem_bytes}});
  }
  json j = {{"stages", stages},
            {"microbatches", plan.microbatches},
            {"replica_factor", plan.replica_factor},
            {"objective", plan.objective},
            {"batch_size", plan.batch_size},
            {"checkpointing", plan.checkpointing}};
  out << j.dump(2) << "\n";
}

namespace {

template <typename T>
T Field(const json& j, const char* key) {
  if (!j.contains(key)) throw InvalidPlan(std::string("plan: missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidPlan(std::string("plan: bad '") + key + "'");
  }
}

}  // namespace

Plan LoadPlan(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidPlan(std::string("plan: ") + e.what());
  }
  if (!j.is_object() || !j.contains("stages") || !j["stages"].is_array()) {
    throw InvalidPlan("plan: expected an object with a 'stages' array");
  }
  Plan p;
  for (const auto& s : j["stages"]) {
    if (!s.is_object()) throw InvalidPlan("plan: stage must be an object");
    const auto range = Field<std::vector<int>>(s, "blocks");
    if (range.size() != 2) throw InvalidPlan("plan: 'blocks' must be [from,to]");
    StageAssignment st;
    st.first_block = range[0];
    st.last_block = range[1];
    st.devices = Field<int>(s, "devices");
    st.replicas = Field<int>(s, "replicas");
    st.cost.t_fwd_sec = s.contains("t_fwd") ? Field<double>(s, "t_fwd") : 0.0;
    st.cost.t_bwd_sec = s.contains("t_bwd") ? Field<double>(s, "t_bwd") : 0.0;
    st.cost.mem_bytes = s.contains("mem") ? Field<std::int64_t>(s, "mem") : 0;
    p.stages.push_back(st);
  }
  p.microbatches = Field<int>(j, "microbatches");
  p.replica_factor = Field<int>(j, "replica_factor");
  p.objective = j.contains("objective") ? Field<double>(j, "objective") : 0.0;
  p.batch_size = Field<std::int64_t>(j, "batch_size");
  p.checkpointing = j.contains("checkpointing") ? Field<bool>(j, "checkpointing")
                                                 : p.num_stages() > 1;
  for (auto& s : p.stages) {
    s.per_replica_batch =
        PerReplicaBatch(p.batch_size, p.replica_factor, p.microbatches, s.devices);
  }
  return p;
}

Plan LoadPlanFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidPlan("cannot open plan file '" + path + "'");
  return LoadPlan(in);
}

}  // namespace pipecut
