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

#ifndef PIPECUT_PLAN_H_
#define PIPECUT_PLAN_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pipecut/cost_model.h"

namespace pipecut {

struct StageAssignment {
  int first_block = 0;  // inclusive, 0-based
  int last_block = 0;   // inclusive
  int devices = 1;      // devices of one pipeline copy
  int replicas = 1;     // devices * replica factor
  std::int64_t per_replica_batch = 0;
  CostRecord cost;      // times include sending the outputs

  bool operator==(const StageAssignment&) const = default;
};

struct Plan {
  std::vector<StageAssignment> stages;
  int microbatches = 1;
  int replica_factor = 1;
  std::int64_t batch_size = 1;
  bool checkpointing = false;  // effective for this plan
  double objective = 0.0;      // max stage t_fwd + max stage t_bwd

  int num_stages() const { return static_cast<int>(stages.size()); }
  int devices_used() const;  // sum of replicas
  bool operator==(const Plan&) const = default;
};

// floor(BS / R / MB / d).
std::int64_t PerReplicaBatch(std::int64_t batch_size, int replica_factor,
                             int microbatches, int devices);

// {"stages":[{"blocks":[from,to],"devices","replicas","t_fwd","t_bwd","mem"}],
//  "microbatches","replica_factor","objective","batch_size","checkpointing"}
void SavePlan(const Plan& plan, std::ostream& out);
// Throws InvalidPlan on malformed input; semantic checks live in ValidatePlan.
Plan LoadPlan(std::istream& in);
Plan LoadPlanFile(const std::string& path);

}  // namespace pipecut

#endif  // PIPECUT_PLAN_H_
