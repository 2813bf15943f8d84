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

// pipecut: generate | partition | simulate | sweep.
// Exit codes: 0 success, 1 input error, 2 no feasible plan.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pipecut/errors.h"
#include "pipecut/generators.h"
#include "pipecut/pipeline_sim.h"
#include "pipecut/planner.h"
#include "pipecut/sweep.h"

namespace {

namespace fs = std::filesystem;
using namespace pipecut;

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kInfeasible = 2;

struct Infeasible : Error {
  using Error::Error;
};

struct Args {
  // generate
  std::string model;
  int hidden = 1024, layers = 24, seq_len = 512, vocab = 30522;
  int width = 1, image_size = 224, classes = 1000;
  // shared
  std::string graph, cluster, cost_table, cost_config, blocks, plan, grid, out;
  int k = kDefaultBlocks;
  std::int64_t batch_size = 64;
  std::string checkpointing = "on";
  std::string gantt;
  bool oracle_check = false;
  bool disable_pruning = false;
  double device_flops = 0.0;
};

void WriteFile(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out << data;
}

std::ifstream OpenInput(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ParseError(std::string("cannot open ") + what + " '" + path + "'");
  return in;
}

PlannerOptions MakeOptions(const Args& a) {
  PlannerOptions o;
  if (!a.cost_config.empty()) o.cost = LoadCostConfigFile(a.cost_config);
  if (!a.cost_table.empty()) o.cost.cost_table = LoadCostTableFile(a.cost_table);
  if (a.device_flops > 0) o.cost.device_flops_per_sec = a.device_flops;
  o.cost.checkpointing = a.checkpointing == "on";
  o.k = a.k;
  o.batch_size = a.batch_size;
  o.stage.checkpointing = o.cost.checkpointing;
  o.stage.oracle_check = a.oracle_check;
  o.stage.pruning = a.disable_pruning ? Pruning::kNone : Pruning::kRow;
  return o;
}

int Generate(const Args& a) {
  const TaskGraph g = a.model == "bert"
                          ? GenBertLike(a.hidden, a.layers, a.seq_len, a.vocab)
                          : GenResnetLike(a.layers, a.width, a.image_size, a.classes);
  const std::string out = a.out.empty() ? "graph.json" : a.out;
  std::ostringstream s;
  SaveGraph(g, s);
  WriteFile(out, s.str());
  const ParamCount pc = CountParams(g);
  std::printf("parameters: %lld (%.4g B)\nnodes: %zu\nwritten: %s\n",
              static_cast<long long>(pc.elements), pc.elements / 1e9, g.size(),
              out.c_str());
  return kOk;
}

int Partition(const Args& a) {
  const TaskGraph g = LoadGraphFile(a.graph);
  const ClusterSpec cluster = LoadClusterFile(a.cluster);
  const PlannerOptions opts = MakeOptions(a);
  std::unique_ptr<Planner> planner;
  try {
    planner = std::make_unique<Planner>(g, cluster, opts);
  } catch (const InfeasibleAtom& e) {
    throw Infeasible(e.what());
  } catch (const CompactionStuck& e) {
    throw Infeasible(e.what());
  }
  FormStageStats stats;
  const std::optional<Plan> plan = planner->FormStages(&stats);
  if (!plan) throw Infeasible("no stage partition fits device memory");
  const auto violations = ValidatePlan(*plan, planner->stages(), cluster);
  if (!violations.empty()) {
    throw Error(std::string("internal: emitted plan is invalid: ") +
                KindName(violations.front().kind) + " " + violations.front().detail);
  }

  const fs::path dir = a.out.empty() ? fs::path(".") : fs::path(a.out);
  fs::create_directories(dir);
  std::ostringstream plan_json, blocks_json, report;
  SavePlan(*plan, plan_json);
  SaveBlocks(planner->blocks(), blocks_json);
  report << "atoms " << planner->atoms().atoms.size() << "  blocks "
         << planner->blocks().size() << "  dp runs " << stats.dp_runs
         << "  candidate stages " << stats.dp.candidates << "\n";
  WriteReport(*plan, cluster, report);
  WriteFile(dir / "plan.json", plan_json.str());
  WriteFile(dir / "blocks.json", blocks_json.str());
  WriteFile(dir / "report.txt", report.str());
  std::cout << report.str();
  return kOk;
}

int SimulateCmd(const Args& a) {
  const TaskGraph g = LoadGraphFile(a.graph);
  const ClusterSpec cluster = LoadClusterFile(a.cluster);
  const Plan plan = LoadPlanFile(a.plan);
  PlannerOptions opts = MakeOptions(a);
  std::unique_ptr<Planner> planner;
  if (!a.blocks.empty()) {
    auto in = OpenInput(a.blocks, "blocks file");
    planner = std::make_unique<Planner>(g, cluster, opts, in);
  } else {
    planner = std::make_unique<Planner>(g, cluster, opts);
  }
  const auto violations = ValidatePlan(plan, planner->stages(), cluster);
  if (!violations.empty()) {
    std::string msg = "plan is invalid:";
    for (const auto& v : violations) {
      msg += std::string("\n  ") + KindName(v.kind) +
             (v.stage >= 0 ? " stage " + std::to_string(v.stage) : "") + ": " + v.detail;
    }
    throw InvalidPlan(msg);
  }
  const Schedule s = Simulate(plan, planner->stages(), cluster);
  std::printf("iteration_time_sec: %.9g\nthroughput: %.9g samples/s\nbubble_fraction: %.6f\n",
              s.iteration_time_sec, Throughput(s, plan.batch_size), s.bubble_fraction);
  if (!a.gantt.empty()) {
    const bool svg = a.gantt == "svg";
    const std::string out = a.out.empty() ? (svg ? "gantt.svg" : "gantt.txt") : a.out;
    WriteFile(out, RenderGantt(s, svg ? GanttFormat::kSvg : GanttFormat::kText));
    std::printf("gantt: %s\n", out.c_str());
  }
  return kOk;
}

int Sweep(const Args& a) {
  auto in = OpenInput(a.grid, "grid file");
  const SweepGrid grid = LoadSweepGrid(in);
  const auto rows = RunSweep(grid);
  std::ostringstream csv;
  WriteSweepCsv(rows, csv);
  if (a.out.empty() || a.out == "-") {
    std::cout << csv.str();
  } else {
    WriteFile(a.out, csv.str());
  }
  for (const auto& r : rows) {
    if (r.feasible) return kOk;
  }
  return kInfeasible;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pipeline-parallel partition planner"};
  app.require_subcommand(1);
  Args a;

  auto add_model_inputs = [&a](CLI::App* cmd) {
    cmd->add_option("--graph", a.graph, "Task graph JSON")
        ->required()
        ->envname("PIPECUT_GRAPH");
    cmd->add_option("--cluster", a.cluster, "Cluster JSON")
        ->required()
        ->envname("PIPECUT_CLUSTER");
    cmd->add_option("--cost-table", a.cost_table, "Measured per-op costs")
        ->envname("PIPECUT_COST_TABLE");
    cmd->add_option("--cost-config", a.cost_config, "Cost model settings")
        ->envname("PIPECUT_COST_CONFIG");
    cmd->add_option("--device-flops", a.device_flops, "Overrides the device FLOP rate")
        ->envname("PIPECUT_DEVICE_FLOPS");
    cmd->add_option("--k", a.k, "Number of blocks")
        ->envname("PIPECUT_K")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", a.batch_size, "Mini-batch size")
        ->envname("PIPECUT_BATCH_SIZE")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--checkpointing", a.checkpointing, "Gradient checkpointing")
        ->envname("PIPECUT_CHECKPOINTING")
        ->check(CLI::IsMember({"on", "off"}));
  };

  CLI::App* gen = app.add_subcommand("generate", "Write a synthetic model graph");
  gen->add_option("model", a.model, "bert or resnet")
      ->required()
      ->check(CLI::IsMember({"bert", "resnet"}));
  gen->add_option("--hidden", a.hidden, "Hidden size (bert)");
  gen->add_option("--layers", a.layers, "Encoder layers (bert) or depth (resnet)");
  gen->add_option("--seq-len", a.seq_len, "Sequence length (bert)");
  gen->add_option("--vocab", a.vocab, "Vocabulary size (bert)");
  gen->add_option("--width", a.width, "Width factor (resnet)");
  gen->add_option("--image-size", a.image_size, "Input resolution (resnet)");
  gen->add_option("--classes", a.classes, "Classes (resnet)");
  gen->add_option("--out", a.out, "Output graph path")->envname("PIPECUT_OUT");

  CLI::App* part = app.add_subcommand("partition", "Plan stages, replicas and microbatches");
  add_model_inputs(part);
  part->add_flag("--oracle-check", a.oracle_check,
                 "Cross-check the stage search exhaustively when small enough")
      ->envname("PIPECUT_ORACLE_CHECK");
  part->add_flag("--disable-pruning", a.disable_pruning, "Search every device count")
      ->envname("PIPECUT_DISABLE_PRUNING");
  part->add_option("--out", a.out, "Output directory")->envname("PIPECUT_OUT");

  CLI::App* sim = app.add_subcommand("simulate", "Simulate one training iteration of a plan");
  add_model_inputs(sim);
  sim->add_option("--plan", a.plan, "plan.json")->required()->envname("PIPECUT_PLAN");
  sim->add_option("--blocks", a.blocks, "blocks.json written with the plan")
      ->envname("PIPECUT_BLOCKS");
  sim->add_option("--gantt", a.gantt, "Write a Gantt chart")
      ->envname("PIPECUT_GANTT")
      ->check(CLI::IsMember({"text", "svg"}));
  sim->add_option("--out", a.out, "Gantt output path")->envname("PIPECUT_OUT");

  CLI::App* sweep = app.add_subcommand("sweep", "Partition and simulate over a grid");
  sweep->add_option("--grid", a.grid, "Grid JSON")->required()->envname("PIPECUT_GRID");
  sweep->add_option("--out", a.out, "CSV path, '-' for stdout")->envname("PIPECUT_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*gen) return Generate(a);
    if (*part) return Partition(a);
    if (*sim) return SimulateCmd(a);
    if (*sweep) return Sweep(a);
  } catch (const Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
