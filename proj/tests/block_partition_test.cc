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

#include "pipecut/block_partition.h"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "pipecut/atomic_partition.h"
#include "pipecut/cost_model.h"
#include "pipecut/errors.h"
#include "pipecut/generators.h"
#include "test_util.h"

namespace pipecut {
namespace {

using testing::AtomChain;
using testing::GraphBuilder;
using testing::Identity;
using testing::Labels;

constexpr double kUnit = 1e13 / 3;  // flops giving 1 s of fwd + bwd

ClusterSpec Loose() {
  ClusterSpec c;
  c.device_memory_bytes = 1LL << 40;
  c.link_latency_sec = 0;
  c.bw_intra_bytes_per_sec = 1e9;
  c.bw_inter_bytes_per_sec = 1e9;
  return c;
}

struct Fixture {
  explicit Fixture(const TaskGraph& g)
      : atoms(BuildAtomicSubcomponents(g)), prof(atoms, CostModelConfig{}) {}
  AtomicPartition atoms;
  AtomProfiler prof;
};

// Brute-force reachability on the atom DAG.
std::vector<std::vector<bool>> Reach(const AtomProfiler& p) {
  const int n = static_cast<int>(p.num_atoms());
  std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
  for (int a = n - 1; a >= 0; --a) {
    for (SubId s : p.successors(a)) {
      r[a][s] = true;
      for (int t = 0; t < n; ++t) {
        if (r[s][t]) r[a][t] = true;
      }
    }
  }
  return r;
}

// Convex iff no outsider is both reachable from a member and reaching one.
bool ConvexOracle(const std::vector<SubId>& group, const AtomProfiler& p) {
  const auto r = Reach(p);
  std::set<SubId> in(group.begin(), group.end());
  for (int o = 0; o < static_cast<int>(p.num_atoms()); ++o) {
    if (in.count(o)) continue;
    bool from = false, to = false;
    for (SubId m : group) {
      from = from || r[m][o];
      to = to || r[o][m];
    }
    if (from && to) return false;
  }
  return true;
}

// a -> {b, c} -> d, each atom a single task.
TaskGraph DiamondAtoms() {
  GraphBuilder b;
  b.Input("x").Value("va").Value("vb").Value("vc").Value("vd");
  b.Task("ta", "op", kUnit, {"x"}, {"va"});
  b.Task("tb", "op", kUnit, {"va"}, {"vb"});
  b.Task("tc", "op", kUnit, {"va"}, {"vc"});
  b.Task("td", "op", kUnit, {"vb", "vc"}, {"vd"});
  b.Output("vd");
  return b.Build();
}

std::vector<std::vector<SubId>> Groups(const BlockSet& bs) {
  std::vector<std::vector<SubId>> out;
  for (const auto& b : bs.blocks) out.push_back(b.atoms);
  return out;
}

double Cv(const std::vector<double>& xs) {
  double mean = 0, var = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / xs.size()) / mean;
}

// Every group handed to the observer is convex and fits memory.
struct GroupAudit {
  GroupAudit(const AtomProfiler& p, const ClusterSpec& c) : prof(p), cluster(c) {}
  GroupObserver observer() {
    return [this](std::span<const SubId> g) {
      ++seen;
      if (!IsConvex(g, prof)) ++non_convex;
      if (prof.Profile(g, kReferenceMicrobatch, true).mem_bytes > cluster.device_memory_bytes) {
        ++over_memory;
      }
    };
  }
  const AtomProfiler& prof;
  ClusterSpec cluster;
  int seen = 0, non_convex = 0, over_memory = 0;
};

void ExpectPartitionsAtoms(const BlockSet& bs, std::size_t n) {
  std::vector<int> count(n, 0);
  for (const auto& b : bs.blocks) {
    for (SubId a : b.atoms) ++count.at(a);
  }
  for (std::size_t a = 0; a < n; ++a) EXPECT_EQ(count[a], 1) << a;
}

TEST(IsConvexTest, Chain) {
  Fixture f(AtomChain({kUnit, kUnit, kUnit}));
  EXPECT_FALSE(IsConvex(std::vector<SubId>{0, 2}, f.prof));
  EXPECT_TRUE(IsConvex(std::vector<SubId>{0, 1}, f.prof));
  EXPECT_TRUE(IsConvex(std::vector<SubId>{1, 2}, f.atoms));
}

TEST(IsConvexTest, DiamondAgainstPathEnumeration) {
  Fixture f(DiamondAtoms());
  ASSERT_EQ(f.prof.num_atoms(), 4u);
  EXPECT_FALSE(IsConvex(std::vector<SubId>{0, 3}, f.prof));
  EXPECT_TRUE(IsConvex(std::vector<SubId>{0, 1, 2, 3}, f.prof));
  for (int mask = 1; mask < 16; ++mask) {
    std::vector<SubId> g;
    for (int a = 0; a < 4; ++a) {
      if ((mask >> a) & 1) g.push_back(a);
    }
    EXPECT_EQ(IsConvex(g, f.prof), ConvexOracle(g, f.prof)) << mask;
  }
}

TEST(IsConvexTest, BertAgainstOracle) {
  Fixture f(GenBertLike(32, 2, 8, 50));
  const int n = static_cast<int>(f.prof.num_atoms());
  for (int lo = 0; lo < n; lo += 2) {
    for (int len = 1; lo + len <= n; len += 3) {
      std::vector<SubId> g;
      for (int a = lo; a < lo + len; ++a) g.push_back(a);
      EXPECT_EQ(IsConvex(g, f.prof), ConvexOracle(g, f.prof));
      if (len > 2) {
        g.erase(g.begin() + 1);
        EXPECT_EQ(IsConvex(g, f.prof), ConvexOracle(g, f.prof));
      }
    }
  }
}

TEST(CoarsenTest, EqualChainSplitsEvenly) {
  Fixture f(AtomChain({kUnit, kUnit, kUnit, kUnit}));
  const BlockSet bs = PartitionBlocks(f.prof, 2, Loose());
  EXPECT_EQ(Groups(bs), (std::vector<std::vector<SubId>>{{0, 1}, {2, 3}}));
}

TEST(CoarsenTest, HeavyAtomIsMergedLast) {
  // Ascending order 0, 1, 3, 2: 0 takes 1, 3 takes the heavy atom 2.
  Fixture f(AtomChain({kUnit, kUnit, 10 * kUnit, kUnit}));
  const GroupHierarchy h = Coarsen(f.prof, 2, Loose());
  ASSERT_EQ(h.num_levels(), 2u);
  EXPECT_EQ(h.levels[1], Labels({{0, 1}, {2, 3}}, 4));
}

TEST(CoarsenTest, MemoryKeepsHeavyAtomAlone) {
  const std::int64_t big = 1'000'000'000;
  const std::int64_t small = 1'000'000;
  Fixture f(AtomChain({kUnit, kUnit, 10 * kUnit, kUnit}, {small, small, big, small}));
  ClusterSpec c = Loose();
  c.device_memory_bytes = 4 * big + 2 * small;  // atom 2 fits only alone
  const GroupHierarchy h = Coarsen(f.prof, 2, c);
  for (std::size_t l = 0; l < h.num_levels(); ++l) {
    for (const auto& g : h.Groups(l)) {
      if (std::find(g.begin(), g.end(), 2) != g.end()) EXPECT_EQ(g.size(), 1u);
    }
  }
  EXPECT_EQ(h.top(), Labels({{0, 1}, {2}, {3}}, 4));
  EXPECT_THROW(Compact(h, 2, f.prof, c), CompactionStuck);
}

TEST(CoarsenTest, KEqualToAtomsLeavesIdentity) {
  Fixture f(AtomChain({kUnit, 2 * kUnit, kUnit}));
  const GroupHierarchy h = Coarsen(f.prof, 3, Loose());
  ASSERT_EQ(h.num_levels(), 1u);
  EXPECT_EQ(h.levels[0], Identity(3));
}

TEST(CoarsenTest, InfeasibleAtom) {
  Fixture f(AtomChain({kUnit, kUnit}, {1000, 1'000'000}));
  ClusterSpec c = Loose();
  c.device_memory_bytes = 100'000;
  EXPECT_THROW(Coarsen(f.prof, 1, c), InfeasibleAtom);
}

TEST(UncoarsenTest, NoCommLeavesHierarchyUnchanged) {
  Fixture f(AtomChain({kUnit, 3 * kUnit, kUnit, 2 * kUnit, kUnit, kUnit}, {}, {0, 0, 0, 0, 0, 0}));
  const GroupHierarchy h = Coarsen(f.prof, 2, Loose());
  const GroupHierarchy u = Uncoarsen(h, f.prof, Loose());
  EXPECT_EQ(u.levels, h.levels);
}

TEST(UncoarsenTest, AppliesTheImprovingMove) {
  // The best single move takes atom 2 left (100 -> 10); moving 3 right
  // would only reach 90.
  const std::vector<std::int64_t> out = {200, 90, 0, 10, 200, 4};
  Fixture f(AtomChain(std::vector<double>(6, kUnit), {}, out));
  GroupHierarchy h;
  h.levels = {Identity(6), Labels({{0, 1}, {2, 3}, {4, 5}}, 6)};
  const ClusterSpec c = Loose();
  const double before = LevelCommTime(h.top(), f.prof, c);
  EXPECT_DOUBLE_EQ(before, 100 / c.bw_intra_bytes_per_sec);

  // Oracle: every single-atom move of a merged pair into a neighbouring group.
  double best = before;
  for (int a = 0; a < 6; ++a) {
    for (int t = 0; t < 3; ++t) {
      std::vector<int> moved = h.top();
      if (moved[a] == t) continue;
      moved[a] = t;
      std::vector<std::vector<SubId>> gs(3);
      for (int x = 0; x < 6; ++x) gs[moved[x]].push_back(x);
      bool ok = true;
      for (const auto& g : gs) ok = ok && !g.empty() && ConvexOracle(g, f.prof);
      if (ok && QuotientIsAcyclic(moved, f.prof)) best = std::min(best, LevelCommTime(moved, f.prof, c));
    }
  }
  EXPECT_DOUBLE_EQ(best, 10 / c.bw_intra_bytes_per_sec);

  const GroupHierarchy u = Uncoarsen(h, f.prof, c);
  EXPECT_DOUBLE_EQ(LevelCommTime(u.top(), f.prof, c), best);
  EXPECT_EQ(u.top(), Labels({{0, 1, 2}, {3}, {4, 5}}, 6));
}

TEST(UncoarsenTest, RejectsNonConvexMove) {
  // 0 -> 1 -> 2 -> 3 plus a heavy 0 -> 2 edge. Moving 2 next to 0 would cut
  // traffic to 35 but leaves 1 on a path between two members.
  GraphBuilder b;
  b.Input("x").Value("v0a", 10).Value("v0b", 1000).Value("v1", 20).Value("v2", 5);
  b.Task("t0", "op", kUnit, {"x"}, {"v0a", "v0b"});
  b.Task("t1", "op", kUnit, {"v0a"}, {"v1"});
  b.Task("t2", "op", kUnit, {"v0b", "v1"}, {"v2"});
  b.Output("v2");
  Fixture f(b.Build());
  ASSERT_EQ(f.prof.num_atoms(), 3u);
  GroupHierarchy h;
  h.levels = {Identity(3), Labels({{0}, {1, 2}}, 3)};
  const ClusterSpec c = Loose();
  std::vector<int> tempting = Labels({{0, 2}, {1}}, 3);
  EXPECT_LT(LevelCommTime(tempting, f.prof, c), LevelCommTime(h.top(), f.prof, c));
  EXPECT_FALSE(IsConvex(std::vector<SubId>{0, 2}, f.prof));
  const GroupHierarchy u = Uncoarsen(h, f.prof, c);
  EXPECT_EQ(u.top(), h.top());
}

TEST(CompactTest, TopLevelOfSizeKIsIdentity) {
  Fixture f(AtomChain({kUnit, kUnit, kUnit}));
  GroupHierarchy h;
  h.levels = {Identity(3)};
  EXPECT_EQ(Groups(Compact(h, 3, f.prof, Loose())),
            (std::vector<std::vector<SubId>>{{0}, {1}, {2}}));
}

TEST(CompactTest, FourIntoThreeMatchesExhaustiveMerge) {
  Fixture f(AtomChain({kUnit, kUnit, kUnit, kUnit}));
  GroupHierarchy h;
  h.levels = {Identity(4)};
  const BlockSet bs = Compact(h, 3, f.prof, Loose());
  ASSERT_EQ(bs.size(), 3u);
  double got = 0;
  for (const auto& b : bs.blocks) got = std::max(got, b.cost.total_sec());
  // All contiguous merges of 4 groups into 3.
  double best = std::numeric_limits<double>::infinity();
  for (int m = 0; m < 3; ++m) {
    double worst = 0;
    for (int i = 0; i < 4; ++i) {
      if (i == m + 1) continue;
      std::vector<SubId> g = {i};
      if (i == m) g.push_back(i + 1);
      worst = std::max(worst, f.prof.Profile(g, 1, true).total_sec());
    }
    best = std::min(best, worst);
  }
  EXPECT_DOUBLE_EQ(got, best);
  // The first pick (atom 0 by tie-break) merges with its only neighbour.
  EXPECT_EQ(bs.blocks[0].atoms, (std::vector<SubId>{0, 1}));
}

TEST(CompactTest, Errors) {
  Fixture f(AtomChain({kUnit, kUnit, kUnit}, {1'000'000, 1'000'000, 1'000'000}));
  GroupHierarchy h;
  h.levels = {Identity(3)};
  ClusterSpec tight = Loose();
  tight.device_memory_bytes = 5'000'000;
  EXPECT_THROW(Compact(h, 2, f.prof, tight), CompactionStuck);
  EXPECT_THROW(Compact(h, 4, f.prof, Loose()), InvalidArgs);
}

TEST(PartitionBlocksTest, SmallBertGivesFourConvexBlocks) {
  Fixture f(GenBertLike(1024, 4, 512, 30522));
  ClusterSpec c;
  GroupAudit audit(f.prof, c);
  const BlockSet bs = PartitionBlocks(f.prof, 4, c, audit.observer());
  ASSERT_EQ(bs.size(), 4u);
  ExpectPartitionsAtoms(bs, f.prof.num_atoms());
  std::vector<int> assign(f.prof.num_atoms());
  for (const auto& b : bs.blocks) {
    EXPECT_TRUE(IsConvex(b.atoms, f.prof));
    for (SubId a : b.atoms) assign[a] = b.id;
  }
  EXPECT_TRUE(QuotientIsAcyclic(assign, f.prof));
  EXPECT_EQ(TopoSortGroups(assign, f.prof), Identity(4));
  EXPECT_GT(audit.seen, 0);
  EXPECT_EQ(audit.non_convex, 0);
  EXPECT_EQ(audit.over_memory, 0);
}

TEST(PartitionBlocksTest, HeavyVocabBlockStaysBelowTwiceTheMean) {
  const TaskGraph g = GenBertLike(1024, 16, 512, 30522);
  Fixture f(g);
  const BlockSet bs = PartitionBlocks(f.prof, 8, ClusterSpec{});
  ASSERT_EQ(bs.size(), 8u);
  const NodeIndex dec = f.atoms.graph.IndexOf("head.decoder");
  const SubId dec_atom = f.atoms.atom_of[dec];
  double mean = 0, heavy = 0;
  for (const auto& b : bs.blocks) {
    mean += b.cost.total_sec() / 8;
    if (std::find(b.atoms.begin(), b.atoms.end(), dec_atom) != b.atoms.end()) {
      heavy = b.cost.total_sec();
    }
  }
  EXPECT_LT(heavy, 2 * mean);
}

TEST(PartitionBlocksTest, KOne) {
  Fixture f(AtomChain({kUnit, kUnit, kUnit}, {1'000'000, 1'000'000, 1'000'000}));
  const BlockSet bs = PartitionBlocks(f.prof, 1, Loose());
  ASSERT_EQ(bs.size(), 1u);
  EXPECT_EQ(bs.blocks[0].atoms, (std::vector<SubId>{0, 1, 2}));
  ClusterSpec tight = Loose();
  tight.device_memory_bytes = 5'000'000;
  EXPECT_THROW(PartitionBlocks(f.prof, 1, tight), CompactionStuck);
  tight.device_memory_bytes = 1'000'000;
  EXPECT_THROW(PartitionBlocks(f.prof, 1, tight), InfeasibleAtom);
}

TEST(PartitionBlocksTest, EveryLevelPartitionsAndStaysConvex) {
  for (const TaskGraph& g : {GenBertLike(64, 6, 16, 200), GenResnetLike(50, 1)}) {
    Fixture f(g);
    ClusterSpec c;
    c.device_memory_bytes = 256LL << 20;
    GroupAudit audit(f.prof, c);
    GroupHierarchy h = Coarsen(f.prof, 8, c, audit.observer());
    const double coarse_comm = LevelCommTime(h.top(), f.prof, c);
    h = Uncoarsen(std::move(h), f.prof, c, audit.observer());
    EXPECT_LE(LevelCommTime(h.top(), f.prof, c), coarse_comm * (1 + 1e-12));
    EXPECT_EQ(h.levels[0], Identity(static_cast<int>(f.prof.num_atoms())));
    for (std::size_t l = 0; l < h.num_levels(); ++l) {
      std::vector<int> seen(f.prof.num_atoms(), 0);
      for (const auto& grp : h.Groups(l)) {
        EXPECT_TRUE(IsConvex(grp, f.prof));
        for (SubId a : grp) ++seen[a];
      }
      for (int s : seen) EXPECT_EQ(s, 1);
      EXPECT_TRUE(QuotientIsAcyclic(h.levels[l], f.prof));
    }
    const BlockSet bs = Compact(h, 8, f.prof, c, audit.observer());
    EXPECT_EQ(bs.size(), 8u);
    ExpectPartitionsAtoms(bs, f.prof.num_atoms());
    EXPECT_EQ(audit.non_convex, 0);
    EXPECT_EQ(audit.over_memory, 0);
  }
}

TEST(PartitionBlocksTest, Deterministic) {
  Fixture f(GenBertLike(64, 6, 16, 200));
  const BlockSet a = PartitionBlocks(f.prof, 8, ClusterSpec{});
  const BlockSet b = PartitionBlocks(f.prof, 8, ClusterSpec{});
  EXPECT_EQ(Groups(a), Groups(b));
  std::ostringstream sa, sb;
  SaveBlocks(a, sa);
  SaveBlocks(b, sb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(PartitionBlocksTest, UniformChainBalancesAtLeastAsWellAsEqualCount) {
  for (int n : {13, 20, 27}) {
    for (int k : {3, 4, 6}) {
      Fixture f(AtomChain(std::vector<double>(n, kUnit)));
      const BlockSet bs = PartitionBlocks(f.prof, k, Loose());
      std::vector<double> ours, naive;
      for (const auto& b : bs.blocks) ours.push_back(b.cost.total_sec());
      for (int i = 0; i < k; ++i) {
        std::vector<SubId> g;
        for (int a = i * n / k; a < (i + 1) * n / k; ++a) g.push_back(a);
        naive.push_back(f.prof.Profile(g, 1, true).total_sec());
      }
      EXPECT_LE(Cv(ours), Cv(naive) + 1e-12) << n << " atoms, k=" << k;
    }
  }
}

TEST(RefineBoundariesTest, EvensOutAPartialLastLevel) {
  Fixture f(AtomChain(std::vector<double>(20, kUnit)));
  BlockSet lumpy;
  const std::vector<int> cuts = {0, 8, 12, 16, 20};
  for (int j = 0; j < 4; ++j) {
    Block b{j, {}, {}};
    for (int a = cuts[j]; a < cuts[j + 1]; ++a) b.atoms.push_back(a);
    b.cost = f.prof.Profile(b.atoms, 1, true);
    lumpy.blocks.push_back(b);
  }
  const BlockSet even = RefineBoundaries(lumpy, f.prof, Loose());
  for (const auto& b : even.blocks) EXPECT_EQ(b.atoms.size(), 5u);
}

TEST(RefineBoundariesTest, RespectsMemoryAndNeverWorsensTheMax) {
  // Atom 0 is cheap but huge, so it cannot take on a neighbour.
  const std::int64_t big = 1'000'000'000;
  Fixture f(AtomChain({kUnit, kUnit, 4 * kUnit, kUnit}, {big, 1000000, 1000000, 1000000}));
  ClusterSpec c = Loose();
  c.device_memory_bytes = 4 * big + 2'000'000;
  GroupHierarchy h;
  h.levels = {Identity(4), Labels({{0}, {1, 2}, {3}}, 4)};
  const BlockSet before = Compact(h, 3, f.prof, c);
  GroupAudit audit(f.prof, c);
  const BlockSet after = RefineBoundaries(before, f.prof, c, audit.observer());
  double max_before = 0, max_after = 0;
  for (const auto& b : before.blocks) max_before = std::max(max_before, b.cost.total_sec());
  for (const auto& b : after.blocks) {
    max_after = std::max(max_after, b.cost.total_sec());
    EXPECT_LE(b.cost.mem_bytes, c.device_memory_bytes);
    EXPECT_TRUE(IsConvex(b.atoms, f.prof));
  }
  EXPECT_LE(max_after, max_before);
  EXPECT_EQ(after.blocks[0].atoms, (std::vector<SubId>{0}));
  EXPECT_EQ(audit.over_memory, 0);
}

TEST(BlocksIoTest, RoundTrip) {
  Fixture f(GenBertLike(64, 3, 16, 100));
  const BlockSet bs = PartitionBlocks(f.prof, 5, ClusterSpec{});
  std::ostringstream out;
  SaveBlocks(bs, out);
  std::istringstream in(out.str());
  const BlockSet back = LoadBlocks(in, f.prof);
  EXPECT_EQ(Groups(back), Groups(bs));
  for (std::size_t i = 0; i < bs.size(); ++i) EXPECT_EQ(back.blocks[i].cost, bs.blocks[i].cost);
  EXPECT_EQ(BlockRangeAtoms(bs, 0, 4).size(), f.prof.num_atoms());

  std::istringstream bad(R"({"k": 1, "blocks": [{"id": "b0", "atoms": ["a0"]}]})");
  EXPECT_THROW(LoadBlocks(bad, f.prof), Error);
}

}  // namespace
}  // namespace pipecut
