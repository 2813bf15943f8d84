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

#ifndef PIPECUT_PIPELINE_SIM_H_
#define PIPECUT_PIPELINE_SIM_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pipecut/graph.h"
#include "pipecut/plan.h"
#include "pipecut/stage_cost.h"

namespace pipecut {

enum class Phase { kFwd, kRecompute, kBwd, kComm, kAllreduce };
const char* PhaseName(Phase p);

struct Event {
  int device = 0;      // first device of the stage's group
  int stage = 0;
  int microbatch = -1;  // -1 for allreduce
  Phase phase = Phase::kFwd;
  double start_sec = 0.0;
  double end_sec = 0.0;
  int peer_stage = -1;  // receiver of a comm event

  bool operator==(const Event&) const = default;
};

// All replicas of a stage run in lockstep on equal shares, so the schedule
// holds one lane per stage, keyed by the stage's first device.
struct Schedule {
  std::vector<Event> events;
  std::vector<int> lane_device;        // per stage
  std::vector<double> busy_fraction;   // per stage lane
  double iteration_time_sec = 0.0;
  double bubble_fraction = 0.0;
  int microbatches = 0;
};

struct SimStage {
  double t_fwd_sec = 0.0;  // compute only, per microbatch share
  double t_bwd_sec = 0.0;
  std::int64_t out_bytes = 0;  // per microbatch share, to the next stage
  std::int64_t param_bytes = 0;
  int devices = 1;   // per pipeline copy
  int replicas = 1;  // devices * replica factor
};

// Fill-then-drain synchronous schedule: every stage runs the forward passes
// in microbatch order, then the backward passes in reverse order, each
// backward optionally preceded by a recompute of the forward; a ring
// allreduce closes each replicated stage. No overlap of compute and comm.
Schedule SimulateStages(std::span<const SimStage> stages, int microbatches,
                        bool recompute, const ClusterSpec& cluster);

// Profiles every stage at its per-replica batch. Throws InvalidPlan when the
// plan's ranges or counts are unusable.
Schedule Simulate(const Plan& plan, const StageEvaluator& evaluator,
                  const ClusterSpec& cluster);

// Samples per second.
double Throughput(const Schedule& s, std::int64_t batch_size);

// Violated schedule invariants (device overlap, dependency order, event
// counts, allreduce placement); empty iff the schedule is sound.
std::vector<std::string> CheckSchedule(const Schedule& s);

enum class GanttFormat { kText, kSvg };
// Text: one 80-column row per lane; digit = forward of microbatch m % 10,
// letter = backward, 'r' recompute, '~' comm, '#' allreduce, '.' idle.
std::string RenderGantt(const Schedule& s, GanttFormat format);

void SaveSchedule(const Schedule& s, std::ostream& out);

}  // namespace pipecut

#endif  // PIPECUT_PIPELINE_SIM_H_
