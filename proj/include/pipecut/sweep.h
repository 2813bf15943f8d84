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

#ifndef PIPECUT_SWEEP_H_
#define PIPECUT_SWEEP_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pipecut/cost_model.h"
#include "pipecut/graph.h"

namespace pipecut {

struct SweepModel {
  std::string model = "bert";  // "bert" or "resnet"
  int hidden = 1024;
  int layers = 24;
  int seq_len = 512;
  int vocab = 30522;
  int width = 1;  // resnet only
};

struct SweepGrid {
  std::vector<SweepModel> models;
  std::vector<ClusterSpec> clusters;
  std::int64_t batch_size = 64;
  int k = 32;
  bool checkpointing = true;
  bool data_parallel_baseline = false;  // extra S=1, R=all row per point
  CostModelConfig cost;
};

// {"models":[{"model":"bert","hidden":int|[..],"layers":int|[..],"seq_len",
//   "vocab"} | {"model":"resnet","layers":int|[..],"width":int|[..]}],
//  "clusters":[cluster JSON, ...], "batch_size", "k", "checkpointing",
//  "data_parallel_baseline", "cost_config":{...}}
// Array-valued fields expand to their cartesian product, in order.
SweepGrid LoadSweepGrid(std::istream& in);

struct SweepRow {
  SweepModel model;
  std::int64_t params = 0;
  ClusterSpec cluster;
  std::string mode;  // "partitioned" or "data_parallel"
  bool feasible = false;
  std::string note;  // why a row is infeasible
  int stages = 0;
  int microbatches = 0;
  std::vector<int> replicas;
  double iteration_time_sec = 0.0;
  double throughput = 0.0;
};

// Rows in grid order: models, then clusters, then mode.
std::vector<SweepRow> RunSweep(const SweepGrid& grid);

// Header row plus one line per SweepRow.
void WriteSweepCsv(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace pipecut

#endif  // PIPECUT_SWEEP_H_
