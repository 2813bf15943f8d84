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

#include "pipecut/sweep.h"

#include <cstdio>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "pipecut/errors.h"
#include "pipecut/generators.h"
#include "pipecut/pipeline_sim.h"
#include "pipecut/planner.h"

namespace pipecut {
namespace {

using json = nlohmann::json;

std::vector<int> IntList(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return {fallback};
  const json& v = j[key];
  try {
    if (v.is_array()) {
      auto out = v.get<std::vector<int>>();
      if (out.empty()) throw ParseError(std::string("sweep: empty '") + key + "'");
      return out;
    }
    return {v.get<int>()};
  } catch (const json::exception&) {
    throw ParseError(std::string("sweep: '") + key + "' must be an int or int list");
  }
}

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

SweepGrid LoadSweepGrid(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("sweep: ") + e.what());
  }
  if (!j.is_object() || !j.contains("models") || !j.contains("clusters")) {
    throw ParseError("sweep: expected 'models' and 'clusters'");
  }
  SweepGrid g;
  try {
    g.batch_size = j.value("batch_size", g.batch_size);
    g.k = j.value("k", g.k);
    g.checkpointing = j.value("checkpointing", g.checkpointing);
    g.data_parallel_baseline = j.value("data_parallel_baseline", false);
  } catch (const json::exception& e) {
    throw ParseError(std::string("sweep: ") + e.what());
  }
  if (j.contains("cost_config")) {
    std::istringstream cfg(j["cost_config"].dump());
    g.cost = LoadCostConfig(cfg);
  }
  for (const auto& m : j["models"]) {
    SweepModel base;
    base.model = m.value("model", std::string("bert"));
    if (base.model == "bert") {
      base.seq_len = m.value("seq_len", base.seq_len);
      base.vocab = m.value("vocab", base.vocab);
      for (int h : IntList(m, "hidden", base.hidden)) {
        for (int l : IntList(m, "layers", base.layers)) {
          SweepModel x = base;
          x.hidden = h;
          x.layers = l;
          g.models.push_back(x);
        }
      }
    } else if (base.model == "resnet") {
      for (int l : IntList(m, "layers", 50)) {
        for (int w : IntList(m, "width", 1)) {
          SweepModel x = base;
          x.layers = l;
          x.width = w;
          g.models.push_back(x);
        }
      }
    } else {
      throw ParseError("sweep: unknown model '" + base.model + "'");
    }
  }
  for (const auto& c : j["clusters"]) {
    std::istringstream cs(c.dump());
    g.clusters.push_back(LoadCluster(cs));
  }
  return g;
}

std::vector<SweepRow> RunSweep(const SweepGrid& grid) {
  std::vector<SweepRow> rows;
  for (const SweepModel& m : grid.models) {
    const TaskGraph graph =
        m.model == "bert"
            ? GenBertLike(m.hidden, m.layers, m.seq_len, m.vocab,
                          grid.cost.bytes_per_element)
            : GenResnetLike(m.layers, m.width, 224, 1000, grid.cost.bytes_per_element);
    const std::int64_t params = CountParams(graph).elements;
    for (const ClusterSpec& cluster : grid.clusters) {
      PlannerOptions opts;
      opts.k = grid.k;
      opts.batch_size = grid.batch_size;
      opts.cost = grid.cost;
      opts.stage.checkpointing = grid.checkpointing;

      std::vector<std::string> modes = {"partitioned"};
      if (grid.data_parallel_baseline) modes.push_back("data_parallel");
      std::unique_ptr<Planner> planner;
      std::string setup_error;
      try {
        planner = std::make_unique<Planner>(graph, cluster, opts);
      } catch (const InfeasibleAtom& e) {
        setup_error = e.what();
      } catch (const CompactionStuck& e) {
        setup_error = e.what();
      }
      for (const std::string& mode : modes) {
        SweepRow row;
        row.model = m;
        row.params = params;
        row.cluster = cluster;
        row.mode = mode;
        std::optional<Plan> plan;
        if (planner) {
          plan = mode == "partitioned" ? planner->FormStages() : planner->DataParallel();
          if (!plan) row.note = "no plan fits device memory";
        } else {
          row.note = setup_error;
        }
        if (plan) {
          const Schedule s = Simulate(*plan, planner->stages(), cluster);
          row.feasible = true;
          row.stages = plan->num_stages();
          row.microbatches = plan->microbatches;
          for (const auto& st : plan->stages) row.replicas.push_back(st.replicas);
          row.iteration_time_sec = s.iteration_time_sec;
          row.throughput = Throughput(s, plan->batch_size);
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

void WriteSweepCsv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "model,hidden,layers,width,params,nodes,devices_per_node,mode,status,stages,"
         "microbatches,replicas,iteration_time_sec,throughput\n";
  for (const SweepRow& r : rows) {
    std::string replicas;
    for (std::size_t i = 0; i < r.replicas.size(); ++i) {
      replicas += (i ? ";" : "") + std::to_string(r.replicas[i]);
    }
    const bool bert = r.model.model == "bert";
    out << r.model.model << ',' << (bert ? std::to_string(r.model.hidden) : "") << ','
        << r.model.layers << ',' << (bert ? "" : std::to_string(r.model.width)) << ','
        << r.params << ',' << r.cluster.num_nodes << ',' << r.cluster.devices_per_node
        << ',' << r.mode << ',' << (r.feasible ? "OK" : "INFEASIBLE") << ',';
    if (r.feasible) {
      out << r.stages << ',' << r.microbatches << ',' << replicas << ','
          << Fmt(r.iteration_time_sec) << ',' << Fmt(r.throughput);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
}

}  // namespace pipecut
