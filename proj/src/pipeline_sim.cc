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

#include "pipecut/pipeline_sim.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "pipecut/errors.h"

namespace pipecut {

const char* PhaseName(Phase p) {
  switch (p) {
    case Phase::kFwd:
      return "fwd";
    case Phase::kRecompute:
      return "recompute";
    case Phase::kBwd:
      return "bwd";
    case Phase::kComm:
      return "comm";
    case Phase::kAllreduce:
      return "allreduce";
  }
  return "?";
}

Schedule SimulateStages(std::span<const SimStage> stages, int microbatches,
                        bool recompute, const ClusterSpec& cluster) {
  if (microbatches < 1) throw InvalidArgs("microbatch count must be positive");
  const int num_stages = static_cast<int>(stages.size());
  Schedule sched;
  sched.microbatches = microbatches;
  if (num_stages == 0) return sched;

  std::vector<int> offset(num_stages, 0);
  for (int s = 1; s < num_stages; ++s) offset[s] = offset[s - 1] + stages[s - 1].devices;
  sched.lane_device = offset;
  // Bandwidth between stage s and s + 1: intra-node when the boundary devices
  // share a node.
  auto link_bw = [&](int s) {
    const int dpn = std::max(1, cluster.devices_per_node);
    const int left = offset[s + 1] - 1, right = offset[s + 1];
    return left / dpn == right / dpn ? cluster.bw_intra_bytes_per_sec
                                     : cluster.bw_inter_bytes_per_sec;
  };

  std::vector<double> free(num_stages, 0.0);
  auto emit = [&](int s, int m, Phase phase, double start, double dur, int peer = -1) {
    sched.events.push_back({offset[s], s, m, phase, start, start + dur, peer});
    free[s] = start + dur;
    return start + dur;
  };

  const int mb = microbatches;
  std::vector<double> arrive(static_cast<std::size_t>(mb) * num_stages, 0.0);
  auto at = [num_stages](int m, int s) {
    return static_cast<std::size_t>(m) * num_stages + s;
  };
  for (int m = 0; m < mb; ++m) {
    for (int s = 0; s < num_stages; ++s) {
      const double start = std::max(free[s], s == 0 ? 0.0 : arrive[at(m, s)]);
      double done = emit(s, m, Phase::kFwd, start, stages[s].t_fwd_sec);
      if (s + 1 < num_stages) {
        if (stages[s].out_bytes > 0) {
          done = emit(s, m, Phase::kComm, done,
                      CommTime(stages[s].out_bytes, link_bw(s), cluster.link_latency_sec),
                      s + 1);
        }
        arrive[at(m, s + 1)] = done;
      }
    }
  }
  std::vector<double> grad(arrive.size(), 0.0);
  for (int m = mb - 1; m >= 0; --m) {
    for (int s = num_stages - 1; s >= 0; --s) {
      if (recompute) emit(s, m, Phase::kRecompute, free[s], stages[s].t_fwd_sec);
      const double ready = s + 1 < num_stages ? grad[at(m, s)] : 0.0;
      double done = emit(s, m, Phase::kBwd, std::max(free[s], ready), stages[s].t_bwd_sec);
      if (s > 0) {
        if (stages[s - 1].out_bytes > 0) {
          done = emit(s, m, Phase::kComm, done,
                      CommTime(stages[s - 1].out_bytes, link_bw(s - 1),
                               cluster.link_latency_sec),
                      s - 1);
        }
        grad[at(m, s - 1)] = done;
      }
    }
  }
  for (int s = 0; s < num_stages; ++s) {
    const int r = stages[s].replicas;
    if (r <= 1) continue;
    const double bytes = 2.0 * static_cast<double>(stages[s].param_bytes) * (r - 1) / r;
    emit(s, -1, Phase::kAllreduce, free[s],
         CommTime(std::llround(bytes), cluster.bw_inter_bytes_per_sec,
                  cluster.link_latency_sec));
  }

  for (const Event& e : sched.events) {
    sched.iteration_time_sec = std::max(sched.iteration_time_sec, e.end_sec);
  }
  std::vector<double> busy(num_stages, 0.0), compute(num_stages, 0.0);
  for (const Event& e : sched.events) {
    busy[e.stage] += e.end_sec - e.start_sec;
    if (e.phase == Phase::kFwd || e.phase == Phase::kBwd || e.phase == Phase::kRecompute) {
      compute[e.stage] += e.end_sec - e.start_sec;
    }
  }
  const double t = sched.iteration_time_sec;
  double total_compute = 0.0;
  for (int s = 0; s < num_stages; ++s) {
    sched.busy_fraction.push_back(t > 0 ? busy[s] / t : 0.0);
    total_compute += compute[s];
  }
  sched.bubble_fraction = t > 0 ? 1.0 - total_compute / (t * num_stages) : 0.0;
  return sched;
}

Schedule Simulate(const Plan& plan, const StageEvaluator& evaluator,
                  const ClusterSpec& cluster) {
  if (plan.stages.empty()) throw InvalidPlan("plan has no stages");
  if (plan.microbatches < 1 || plan.replica_factor < 1) {
    throw InvalidPlan("plan needs positive microbatch count and replica factor");
  }
  int next = 0;
  for (const auto& st : plan.stages) {
    if (st.first_block != next || st.last_block < st.first_block ||
        st.last_block >= evaluator.num_blocks()) {
      throw InvalidPlan("stage block ranges must tile all blocks in order");
    }
    if (st.devices < 1 || st.replicas < 1) throw InvalidPlan("stage without devices");
    next = st.last_block + 1;
  }
  if (next != evaluator.num_blocks()) throw InvalidPlan("stages miss trailing blocks");

  const bool recompute = plan.checkpointing && plan.num_stages() > 1;
  std::vector<SimStage> stages;
  for (const auto& st : plan.stages) {
    const std::int64_t batch = PerReplicaBatch(plan.batch_size, plan.replica_factor,
                                               plan.microbatches, st.devices);
    if (batch < 1) throw InvalidPlan("a stage gets an empty per-replica batch");
    const StageEval e = evaluator.Evaluate(st.first_block, st.last_block, batch, recompute);
    stages.push_back({e.compute.t_fwd_sec, e.compute.t_bwd_sec, e.out_bytes,
                      e.param_bytes, st.devices, st.replicas});
  }
  return SimulateStages(stages, plan.microbatches, recompute, cluster);
}

double Throughput(const Schedule& s, std::int64_t batch_size) {
  if (s.iteration_time_sec <= 0.0) return 0.0;
  return static_cast<double>(batch_size) / s.iteration_time_sec;
}

std::vector<std::string> CheckSchedule(const Schedule& s) {
  std::vector<std::string> errs;
  const int num_stages = static_cast<int>(s.lane_device.size());
  const int mb = s.microbatches;
  const double eps = 1e-9 * s.iteration_time_sec + 1e-15;
  auto say = [&errs](const std::string& msg) { errs.push_back(msg); };

  std::map<std::tuple<int, int, int>, const Event*> fwd, bwd;  // (stage, m, 0)
  std::map<std::tuple<int, int, int>, const Event*> comm;      // (stage, peer, m)
  std::vector<std::vector<const Event*>> lane(num_stages);
  std::vector<int> allreduce(num_stages, 0);
  for (const Event& e : s.events) {
    if (e.stage < 0 || e.stage >= num_stages) {
      say("event on unknown stage");
      continue;
    }
    if (e.end_sec < e.start_sec) say("event ends before it starts");
    if (e.end_sec > s.iteration_time_sec + eps) say("event ends after the iteration");
    lane[e.stage].push_back(&e);
    switch (e.phase) {
      case Phase::kFwd:
        if (!fwd.emplace(std::make_tuple(e.stage, e.microbatch, 0), &e).second) {
          say("duplicate forward event");
        }
        break;
      case Phase::kBwd:
        if (!bwd.emplace(std::make_tuple(e.stage, e.microbatch, 0), &e).second) {
          say("duplicate backward event");
        }
        break;
      case Phase::kComm:
        comm[{e.stage, e.peer_stage, e.microbatch}] = &e;
        break;
      case Phase::kAllreduce:
        ++allreduce[e.stage];
        break;
      case Phase::kRecompute:
        break;
    }
  }
  for (int st = 0; st < num_stages; ++st) {
    auto& ev = lane[st];
    std::stable_sort(ev.begin(), ev.end(), [](const Event* a, const Event* b) {
      return a->start_sec < b->start_sec;
    });
    for (std::size_t i = 1; i < ev.size(); ++i) {
      if (ev[i]->start_sec < ev[i - 1]->end_sec - eps) {
        say("overlapping events on stage " + std::to_string(st));
        break;
      }
    }
    if (allreduce[st] > 1) say("more than one allreduce on stage " + std::to_string(st));
  }
  auto arrival = [&](int from, int to, int m, const Event* sender) {
    auto it = comm.find({from, to, m});
    return it != comm.end() ? it->second->end_sec : sender->end_sec;
  };
  for (int st = 0; st < num_stages; ++st) {
    double last_bwd = 0.0;
    for (int m = 0; m < mb; ++m) {
      auto f = fwd.find({st, m, 0});
      auto b = bwd.find({st, m, 0});
      if (f == fwd.end() || b == bwd.end()) {
        say("stage " + std::to_string(st) + " misses microbatch " + std::to_string(m));
        continue;
      }
      last_bwd = std::max(last_bwd, b->second->end_sec);
      if (b->second->start_sec < f->second->end_sec - eps) {
        say("backward before forward on stage " + std::to_string(st));
      }
      if (st > 0) {
        auto pf = fwd.find({st - 1, m, 0});
        if (pf != fwd.end() &&
            f->second->start_sec < arrival(st - 1, st, m, pf->second) - eps) {
          say("forward starts before its input arrives on stage " + std::to_string(st));
        }
      }
      if (st + 1 < num_stages) {
        auto nb = bwd.find({st + 1, m, 0});
        if (nb != bwd.end() &&
            b->second->start_sec < arrival(st + 1, st, m, nb->second) - eps) {
          say("backward starts before its gradient arrives on stage " +
              std::to_string(st));
        }
      }
    }
    for (const Event* e : lane[st]) {
      if (e->phase == Phase::kAllreduce && e->start_sec < last_bwd - eps) {
        say("allreduce overlaps backward passes on stage " + std::to_string(st));
      }
    }
  }
  const std::size_t expected = static_cast<std::size_t>(num_stages) * mb;
  if (fwd.size() != expected || bwd.size() != expected) {
    say("forward/backward event count differs from stages x microbatches");
  }
  return errs;
}

namespace {

char GanttChar(const Event& e) {
  switch (e.phase) {
    case Phase::kFwd:
      return static_cast<char>('0' + e.microbatch % 10);
    case Phase::kBwd:
      return static_cast<char>('a' + e.microbatch % 26);
    case Phase::kRecompute:
      return 'r';
    case Phase::kComm:
      return '~';
    case Phase::kAllreduce:
      return '#';
  }
  return '?';
}

const char* SvgColor(Phase p) {
  switch (p) {
    case Phase::kFwd:
      return "#4e79a7";
    case Phase::kBwd:
      return "#f28e2b";
    case Phase::kRecompute:
      return "#bab0ac";
    case Phase::kComm:
      return "#59a14f";
    case Phase::kAllreduce:
      return "#e15759";
  }
  return "#000000";
}

}  // namespace

std::string RenderGantt(const Schedule& s, GanttFormat format) {
  constexpr int kColumns = 80;
  const int lanes = s.events.empty() ? 0 : static_cast<int>(s.lane_device.size());
  const double t = s.iteration_time_sec;
  std::ostringstream out;
  if (format == GanttFormat::kText) {
    if (lanes == 0) return "";
    for (int l = 0; l < lanes; ++l) {
      std::string row(kColumns, '.');
      for (const Event& e : s.events) {
        if (e.stage != l || e.end_sec <= e.start_sec) continue;
        for (int c = 0; c < kColumns; ++c) {
          const double mid = (c + 0.5) * t / kColumns;
          if (mid >= e.start_sec && mid < e.end_sec) row[c] = GanttChar(e);
        }
      }
      char label[32];
      std::snprintf(label, sizeof(label), "dev %3d |", s.lane_device[l]);
      out << label << row << "|\n";
    }
    char end[32];
    std::snprintf(end, sizeof(end), "%.6g s", t);
    out << "         0" << std::string(kColumns - std::string(end).size(), ' ') << end
        << "\n";
    return out.str();
  }
  constexpr double kWidth = 800.0, kLane = 24.0, kLeft = 70.0;
  const double height = kLane * lanes + 20.0;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\""
      << kWidth + kLeft + 10 << "\" height=\"" << height << "\">\n";
  for (int l = 0; l < lanes; ++l) {
    out << "<text x=\"4\" y=\"" << kLane * l + 16 << "\" font-size=\"12\">dev "
        << s.lane_device[l] << "</text>\n";
  }
  for (const Event& e : s.events) {
    if (t <= 0) break;
    const double x = kLeft + kWidth * e.start_sec / t;
    const double w = kWidth * (e.end_sec - e.start_sec) / t;
    const double y = kLane * e.stage + 2;
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\""
        << kLane - 4 << "\" fill=\"" << SvgColor(e.phase) << "\" stroke=\"#ffffff\"/>\n";
    if ((e.phase == Phase::kFwd || e.phase == Phase::kBwd) && w >= 8) {
      out << "<text x=\"" << x + w / 2 << "\" y=\"" << y + 14
          << "\" font-size=\"10\" text-anchor=\"middle\">" << e.microbatch << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

void SaveSchedule(const Schedule& s, std::ostream& out) {
  using json = nlohmann::json;
  json events = json::array();
  for (const Event& e : s.events) {
    json j = {{"device", e.device},         {"stage", e.stage},
              {"microbatch", e.microbatch}, {"phase", PhaseName(e.phase)},
              {"start_sec", e.start_sec},   {"end_sec", e.end_sec}};
    if (e.peer_stage >= 0) j["peer_stage"] = e.peer_stage;
    events.push_back(std::move(j));
  }
  json j = {{"iteration_time_sec", s.iteration_time_sec},
            {"bubble_fraction", s.bubble_fraction},
            {"busy_fraction", s.busy_fraction},
            {"lane_device", s.lane_device},
            {"microbatches", s.microbatches},
            {"events", events}};
  out << j.dump(2) << "\n";
}

}  // namespace pipecut
