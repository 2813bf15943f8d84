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

#include <algorithm>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <tuple>

#include "json.hpp"
#include "pipecut/errors.h"

namespace pipecut {
namespace {

std::vector<std::vector<SubId>> GroupsOf(const std::vector<int>& assign) {
  int n = 0;
  for (int g : assign) n = std::max(n, g + 1);
  std::vector<std::vector<SubId>> groups(n);
  for (SubId a = 0; a < static_cast<SubId>(assign.size()); ++a) {
    groups[assign[a]].push_back(a);
  }
  return groups;
}

// Relabels groups densely by their smallest atom.
void Canonicalize(std::vector<int>& assign) {
  std::map<int, int> relabel;
  for (int g : assign) {
    if (!relabel.count(g)) {
      const int next = static_cast<int>(relabel.size());
      relabel[g] = next;
    }
  }
  for (int& g : assign) g = relabel[g];
}

std::vector<SubId> Union(std::span<const SubId> a, std::span<const SubId> b) {
  std::vector<SubId> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool Fits(const CostRecord& c, const ClusterSpec& cluster) {
  return c.mem_bytes <= cluster.device_memory_bytes;
}

// Contracted group graph with in-place merges.
class Quotient {
 public:
  Quotient(const AtomProfiler& profiler, const std::vector<int>& assign) {
    members_ = GroupsOf(assign);
    const std::size_t n = members_.size();
    succ_.resize(n);
    pred_.resize(n);
    alive_.assign(n, true);
    for (SubId a = 0; a < static_cast<SubId>(assign.size()); ++a) {
      for (SubId s : profiler.successors(a)) {
        if (assign[a] != assign[s]) {
          succ_[assign[a]].insert(assign[s]);
          pred_[assign[s]].insert(assign[a]);
        }
      }
    }
  }

  std::size_t size() const { return members_.size(); }
  const std::vector<SubId>& members(int g) const { return members_[g]; }
  const std::set<int>& succ(int g) const { return succ_[g]; }
  const std::set<int>& pred(int g) const { return pred_[g]; }
  bool alive(int g) const { return alive_[g]; }

  // Merging keeps the quotient acyclic iff neither group reaches the other
  // through a third group.
  bool CanMerge(int v, int w) const { return !LongPath(v, w) && !LongPath(w, v); }

  int Merge(int v, int w) {
    const int m = static_cast<int>(members_.size());
    members_.push_back(Union(members_[v], members_[w]));
    succ_.emplace_back();
    pred_.emplace_back();
    alive_.push_back(true);
    for (int x : {v, w}) {
      alive_[x] = false;
      for (int s : succ_[x]) {
        pred_[s].erase(x);
        if (s != v && s != w) {
          succ_[m].insert(s);
          pred_[s].insert(m);
        }
      }
      for (int p : pred_[x]) {
        succ_[p].erase(x);
        if (p != v && p != w) {
          pred_[m].insert(p);
          succ_[p].insert(m);
        }
      }
      succ_[x].clear();
      pred_[x].clear();
    }
    return m;
  }

 private:
  bool LongPath(int from, int to) const {
    std::vector<int> stack;
    std::set<int> seen;
    for (int s : succ_[from]) {
      if (s != to && seen.insert(s).second) stack.push_back(s);
    }
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      for (int s : succ_[x]) {
        if (s == to) return true;
        if (seen.insert(s).second) stack.push_back(s);
      }
    }
    return false;
  }

  std::vector<std::vector<SubId>> members_;
  std::vector<std::set<int>> succ_;
  std::vector<std::set<int>> pred_;
  std::vector<bool> alive_;
};

using PairKey = std::pair<int, int>;

// Cut bytes between every pair of groups touching the scanned atoms.
std::map<PairKey, std::int64_t> PairBytes(const std::vector<int>& assign,
                                         std::span<const SubId> scanned,
                                         const AtomProfiler& profiler) {
  std::map<PairKey, std::int64_t> bytes;
  auto add = [&bytes](int x, int y, std::int64_t b) {
    bytes[{std::min(x, y), std::max(x, y)}] += b;
  };
  auto in_scan = [&scanned](SubId a) {
    return std::binary_search(scanned.begin(), scanned.end(), a);
  };
  const AtomicPartition& p = profiler.partition();
  std::set<std::pair<NodeIndex, int>> counted;
  for (SubId a : scanned) {
    const int x = assign[a];
    for (const auto& e : profiler.exports(a)) {
      const std::int64_t size = profiler.ValueSize(e.value, kReferenceMicrobatch);
      std::set<int> to;
      for (SubId c : e.consumers) {
        if (assign[c] != x) to.insert(assign[c]);
      }
      for (int y : to) add(x, y, size);
    }
    for (NodeIndex v : p.atoms[a].inputs) {
      const SubId owner = p.atom_of[v];
      if (owner == a || in_scan(owner) || assign[owner] == x) continue;
      if (counted.insert({v, x}).second) {
        add(assign[owner], x, profiler.ValueSize(v, kReferenceMicrobatch));
      }
    }
  }
  return bytes;
}

double CommOf(const std::map<PairKey, std::int64_t>& bytes,
              const ClusterSpec& cluster, const std::set<int>& involving) {
  double t = 0.0;
  for (const auto& [key, b] : bytes) {
    if (b <= 0) continue;
    if (involving.empty() || involving.count(key.first) || involving.count(key.second)) {
      t += CommTime(b, cluster);
    }
  }
  return t;
}

// Moves `atoms` to the group of `target_atom` in `assign`.
void Move(std::vector<int>& assign, std::span<const SubId> atoms, SubId target_atom) {
  const int t = assign[target_atom];
  for (SubId a : atoms) assign[a] = t;
}

void Notify(const GroupObserver& observer, std::span<const SubId> group) {
  if (observer) observer(group);
}

}  // namespace

int GroupHierarchy::num_groups(std::size_t level) const {
  int n = 0;
  for (int g : levels[level]) n = std::max(n, g + 1);
  return n;
}

std::vector<std::vector<SubId>> GroupHierarchy::Groups(std::size_t level) const {
  return GroupsOf(levels[level]);
}

std::string BlockName(SubId id) { return "b" + std::to_string(id); }

bool IsConvex(std::span<const SubId> group, const AtomProfiler& profiler) {
  auto member = [&group](SubId a) {
    return std::binary_search(group.begin(), group.end(), a);
  };
  std::vector<SubId> stack;
  std::vector<bool> seen(profiler.num_atoms(), false);
  for (SubId a : group) {
    for (SubId s : profiler.successors(a)) {
      if (!member(s) && !seen[s]) {
        seen[s] = true;
        stack.push_back(s);
      }
    }
  }
  while (!stack.empty()) {
    const SubId x = stack.back();
    stack.pop_back();
    for (SubId s : profiler.successors(x)) {
      if (member(s)) return false;
      if (!seen[s]) {
        seen[s] = true;
        stack.push_back(s);
      }
    }
  }
  return true;
}

bool IsConvex(std::span<const SubId> group, const AtomicPartition& partition) {
  return IsConvex(group, AtomProfiler(partition, CostModelConfig{}));
}

std::vector<int> TopoSortGroups(const std::vector<int>& assign,
                                const AtomProfiler& profiler) {
  int n = 0;
  for (int g : assign) n = std::max(n, g + 1);
  std::vector<std::set<int>> succ(n);
  for (SubId a = 0; a < static_cast<SubId>(assign.size()); ++a) {
    for (SubId s : profiler.successors(a)) {
      if (assign[a] != assign[s]) succ[assign[a]].insert(assign[s]);
    }
  }
  std::vector<int> indeg(n, 0);
  for (const auto& ss : succ) {
    for (int s : ss) ++indeg[s];
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int g = 0; g < n; ++g) {
    if (indeg[g] == 0) ready.push(g);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    const int g = ready.top();
    ready.pop();
    order.push_back(g);
    for (int s : succ[g]) {
      if (--indeg[s] == 0) ready.push(s);
    }
  }
  if (static_cast<int>(order.size()) != n) {
    throw CycleError("group quotient graph is cyclic");
  }
  return order;
}

bool QuotientIsAcyclic(const std::vector<int>& assign, const AtomProfiler& profiler) {
  try {
    TopoSortGroups(assign, profiler);
    return true;
  } catch (const CycleError&) {
    return false;
  }
}

double LevelCommTime(const std::vector<int>& assign, const AtomProfiler& profiler,
                     const ClusterSpec& cluster) {
  std::vector<SubId> all(assign.size());
  std::iota(all.begin(), all.end(), 0);
  return CommOf(PairBytes(assign, all, profiler), cluster, {});
}

GroupHierarchy Coarsen(const AtomProfiler& profiler, int k,
                       const ClusterSpec& cluster, const GroupObserver& observer) {
  if (k < 1) throw InvalidArgs("block count must be positive");
  const std::size_t n = profiler.num_atoms();
  for (SubId a = 0; a < static_cast<SubId>(n); ++a) {
    const SubId one[] = {a};
    const CostRecord c = profiler.Profile(one, kReferenceMicrobatch, true);
    if (!Fits(c, cluster)) {
      throw InfeasibleAtom("atom " + AtomName(a) + " needs " +
                           std::to_string(c.mem_bytes) + " bytes");
    }
    Notify(observer, one);
  }
  GroupHierarchy h;
  std::vector<int> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  h.levels.push_back(std::move(identity));

  while (h.num_groups(h.num_levels() - 1) > k) {
    const std::vector<int>& assign = h.levels.back();
    Quotient q(profiler, assign);
    const int base = static_cast<int>(q.size());
    std::vector<double> cost(base);
    for (int g = 0; g < base; ++g) {
      cost[g] = profiler.Profile(q.members(g), kReferenceMicrobatch, true).total_sec();
    }
    std::vector<int> order(base);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&cost](int a, int b) { return cost[a] < cost[b]; });

    std::vector<bool> consumed(base, false);
    int count = base;
    for (int v : order) {
      if (count <= k) break;
      if (consumed[v]) continue;
      std::set<int> adjacent(q.succ(v).begin(), q.succ(v).end());
      adjacent.insert(q.pred(v).begin(), q.pred(v).end());
      std::vector<std::tuple<double, int, bool>> candidates;
      for (int w : adjacent) {
        if (w >= base || consumed[w]) continue;
        const auto merged = Union(q.members(v), q.members(w));
        const CostRecord c = profiler.Profile(merged, kReferenceMicrobatch, true);
        candidates.emplace_back(c.total_sec(), w, Fits(c, cluster));
      }
      std::sort(candidates.begin(), candidates.end());
      for (const auto& [t, w, fits] : candidates) {
        if (!fits || !q.CanMerge(v, w)) continue;
        const int m = q.Merge(v, w);
        Notify(observer, q.members(m));
        consumed[v] = consumed[w] = true;
        --count;
        break;
      }
    }
    if (count == base) break;
    std::vector<int> next(n);
    for (int g = 0; g < static_cast<int>(q.size()); ++g) {
      if (!q.alive(g)) continue;
      for (SubId a : q.members(g)) next[a] = g;
    }
    Canonicalize(next);
    h.levels.push_back(std::move(next));
  }
  return h;
}

GroupHierarchy Uncoarsen(GroupHierarchy h, const AtomProfiler& profiler,
                         const ClusterSpec& cluster, const GroupObserver& observer) {
  const std::size_t top = h.num_levels() - 1;
  auto group_atoms = [&h](std::size_t level, int g) {
    std::vector<SubId> out;
    const auto& assign = h.levels[level];
    for (SubId a = 0; a < static_cast<SubId>(assign.size()); ++a) {
      if (assign[a] == g) out.push_back(a);
    }
    return out;
  };

  for (std::size_t fine = top; fine-- > 0;) {
    const std::size_t coarse = fine + 1;
    // Pairs of fine groups merged into one coarse group.
    std::map<int, std::set<int>> children;
    for (SubId a = 0; a < static_cast<SubId>(h.levels[fine].size()); ++a) {
      children[h.levels[coarse][a]].insert(h.levels[fine][a]);
    }
    std::vector<std::pair<int, int>> pairs;
    for (const auto& [parent, kids] : children) {
      if (kids.size() == 2) pairs.emplace_back(*kids.begin(), *kids.rbegin());
    }

    for (auto [v, w] : pairs) {
      const auto v_atoms = group_atoms(fine, v);
      const auto w_atoms = group_atoms(fine, w);
      const auto& cur = h.levels[coarse];
      const int parent = cur[v_atoms.front()];
      const auto parent_atoms = Union(v_atoms, w_atoms);

      std::set<int> neighbours;
      for (SubId a : parent_atoms) {
        for (SubId s : profiler.successors(a)) neighbours.insert(cur[s]);
        for (SubId s : profiler.predecessors(a)) neighbours.insert(cur[s]);
      }
      neighbours.erase(parent);

      struct Best {
        double delta = 0.0;
        std::vector<std::vector<int>> levels;
      };
      std::optional<Best> best;
      for (const auto* moved : {&v_atoms, &w_atoms}) {
        const auto& stay = moved == &v_atoms ? w_atoms : v_atoms;
        for (int t : neighbours) {
          const auto t_atoms = group_atoms(coarse, t);
          const auto scan = Union(parent_atoms, t_atoms);
          const std::set<int> touched = {parent, t};
          const double before = CommOf(PairBytes(cur, scan, profiler), cluster, touched);
          std::vector<int> after = cur;
          Move(after, *moved, t_atoms.front());
          const double after_comm =
              CommOf(PairBytes(after, scan, profiler), cluster, touched);
          const double delta = after_comm - before;
          if (!(delta < 0.0)) continue;
          if (best && delta >= best->delta) continue;

          const auto grown = Union(t_atoms, *moved);
          if (!Fits(profiler.Profile(grown, kReferenceMicrobatch, true), cluster) ||
              !Fits(profiler.Profile(stay, kReferenceMicrobatch, true), cluster) ||
              !QuotientIsAcyclic(after, profiler)) {
            continue;
          }
          // Carry the move up through every coarser level.
          std::vector<std::vector<int>> levels = {after};
          bool ok = true;
          for (std::size_t up = coarse + 1; up <= top && ok; ++up) {
            std::vector<int> lv = h.levels[up];
            const int from = lv[moved->front()];
            const int to = lv[t_atoms.front()];
            if (from != to) {
              const auto from_atoms = group_atoms(up, from);
              const auto to_atoms = group_atoms(up, to);
              Move(lv, *moved, t_atoms.front());
              std::vector<SubId> rest;
              std::set_difference(from_atoms.begin(), from_atoms.end(), moved->begin(),
                                  moved->end(), std::back_inserter(rest));
              ok = Fits(profiler.Profile(Union(to_atoms, *moved), kReferenceMicrobatch,
                                         true),
                        cluster) &&
                   Fits(profiler.Profile(rest, kReferenceMicrobatch, true), cluster) &&
                   QuotientIsAcyclic(lv, profiler);
              if (ok && up == top) {
                const auto scan_up = Union(from_atoms, to_atoms);
                const std::set<int> touched_up = {from, to};
                ok = CommOf(PairBytes(lv, scan_up, profiler), cluster, touched_up) <=
                     CommOf(PairBytes(h.levels[up], scan_up, profiler), cluster,
                            touched_up);
              }
            }
            levels.push_back(std::move(lv));
          }
          if (ok) best = Best{delta, std::move(levels)};
        }
      }
      if (!best) continue;
      for (std::size_t i = 0; i < best->levels.size(); ++i) {
        std::vector<int>& lv = best->levels[i];
        Canonicalize(lv);
        for (const auto& g : GroupsOf(lv)) Notify(observer, g);
        h.levels[coarse + i] = std::move(lv);
      }
    }
  }
  return h;
}

BlockSet Compact(const GroupHierarchy& h, int k, const AtomProfiler& profiler,
                 const ClusterSpec& cluster, const GroupObserver& observer) {
  if (k < 1) throw InvalidArgs("block count must be positive");
  const auto& assign = h.top();
  const auto groups = GroupsOf(assign);
  if (static_cast<int>(groups.size()) < k) {
    throw InvalidArgs("only " + std::to_string(groups.size()) +
                      " groups available for " + std::to_string(k) + " blocks");
  }
  struct Item {
    std::vector<SubId> atoms;
    CostRecord cost;
  };
  std::vector<Item> list;
  for (int g : TopoSortGroups(assign, profiler)) {
    list.push_back({groups[g], profiler.Profile(groups[g], kReferenceMicrobatch, true)});
  }

  while (static_cast<int>(list.size()) > k) {
    std::vector<std::size_t> order(list.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&list](std::size_t a, std::size_t b) {
      const double ca = list[a].cost.total_sec(), cb = list[b].cost.total_sec();
      if (ca != cb) return ca < cb;
      return list[a].atoms.front() < list[b].atoms.front();
    });
    bool merged = false;
    for (std::size_t i : order) {
      std::optional<std::size_t> j;
      auto better = [&](std::size_t c) {
        if (!j) return true;
        const double cc = list[c].cost.total_sec(), cj = list[*j].cost.total_sec();
        if (cc != cj) return cc < cj;
        return list[c].atoms.front() < list[*j].atoms.front();
      };
      if (i > 0 && better(i - 1)) j = i - 1;
      if (i + 1 < list.size() && better(i + 1)) j = i + 1;
      const std::size_t lo = std::min(i, *j), hi = std::max(i, *j);
      auto atoms = Union(list[lo].atoms, list[hi].atoms);
      const CostRecord c = profiler.Profile(atoms, kReferenceMicrobatch, true);
      if (!Fits(c, cluster)) continue;
      Notify(observer, atoms);
      list[lo] = {std::move(atoms), c};
      list.erase(list.begin() + static_cast<std::ptrdiff_t>(hi));
      merged = true;
      break;
    }
    if (!merged) {
      throw CompactionStuck("no adjacent pair fits in device memory with " +
                            std::to_string(list.size()) + " groups left");
    }
  }
  BlockSet out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    out.blocks.push_back({static_cast<SubId>(i), std::move(list[i].atoms), list[i].cost});
  }
  return out;
}

BlockSet RefineBoundaries(const BlockSet& blocks, const AtomProfiler& profiler,
                          const ClusterSpec& cluster, const GroupObserver& observer) {
  const int k = static_cast<int>(blocks.size());
  if (k < 2) return blocks;
  // Blocks are topologically sorted and atom ids follow a topological order,
  // so the concatenation is a topological order of all atoms and every
  // contiguous range of it is convex.
  std::vector<SubId> seq;
  std::vector<int> start = {0};
  for (const Block& b : blocks.blocks) {
    seq.insert(seq.end(), b.atoms.begin(), b.atoms.end());
    start.push_back(static_cast<int>(seq.size()));
  }
  const int n = static_cast<int>(seq.size());
  std::vector<double> prefix(n + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    const SubId one[] = {seq[i]};
    prefix[i + 1] = prefix[i] + profiler.Profile(one, kReferenceMicrobatch, true).total_sec();
  }
  auto time_of = [&prefix](int lo, int hi) { return prefix[hi] - prefix[lo]; };
  auto range = [&seq](int lo, int hi) {
    std::vector<SubId> atoms(seq.begin() + lo, seq.begin() + hi);
    std::sort(atoms.begin(), atoms.end());
    return atoms;
  };
  std::map<std::pair<int, int>, bool> fits;
  auto fits_at = [&](int lo, int hi) {
    auto [it, fresh] = fits.try_emplace({lo, hi}, false);
    if (fresh) {
      it->second = Fits(profiler.Profile(range(lo, hi), kReferenceMicrobatch, true), cluster);
    }
    return it->second;
  };
  // Boundary j (between blocks j-1 and j) may move inside the two blocks it
  // separates: window [start[j-1] + 1, start[j+1] - 1].
  auto window = [&](int j) -> std::pair<int, int> {
    if (j == 0) return {0, 0};
    if (j == k) return {n, n};
    return {start[j - 1] + 1, start[j + 1] - 1};
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Pass 1 minimises the largest block time, pass 2 the sum of squares among
  // splits within a relative 1e-9 of that optimum.
  auto solve = [&](double cap, bool squares, std::vector<int>* bounds) {
    std::vector<std::map<int, std::pair<double, int>>> best(k + 1);
    best[0][0] = {0.0, -1};
    for (int j = 1; j <= k; ++j) {
      const auto [lo, hi] = window(j);
      for (int p = lo; p <= hi; ++p) {
        double value = kInf;
        int from = -1;
        for (const auto& [q, prev] : best[j - 1]) {
          if (q >= p || prev.first == kInf) continue;
          const double t = time_of(q, p);
          if (t > cap || !fits_at(q, p)) continue;
          const double v = squares ? prev.first + t * t : std::max(prev.first, t);
          if (v < value) {
            value = v;
            from = q;
          }
        }
        if (from >= 0) best[j][p] = {value, from};
      }
    }
    const auto it = best[k].find(n);
    if (it == best[k].end()) return kInf;
    if (bounds) {
      bounds->assign(k + 1, n);
      int p = n;
      for (int j = k; j > 0; --j) {
        const int q = best[j].at(p).second;
        (*bounds)[j - 1] = q;
        p = q;
      }
    }
    return it->second.first;
  };
  const double max_time = solve(kInf, false, nullptr);
  std::vector<int> bounds;
  if (max_time == kInf || solve(max_time * (1 + 1e-9), true, &bounds) == kInf) return blocks;

  BlockSet out;
  for (int j = 0; j < k; ++j) {
    std::vector<SubId> atoms = range(bounds[j], bounds[j + 1]);
    const CostRecord c = profiler.Profile(atoms, kReferenceMicrobatch, true);
    if (bounds[j] != start[j] || bounds[j + 1] != start[j + 1]) Notify(observer, atoms);
    out.blocks.push_back({static_cast<SubId>(j), std::move(atoms), c});
  }
  return out;
}

BlockSet PartitionBlocks(const AtomProfiler& profiler, int k,
                         const ClusterSpec& cluster, const GroupObserver& observer) {
  auto h = Coarsen(profiler, k, cluster, observer);
  h = Uncoarsen(std::move(h), profiler, cluster, observer);
  return RefineBoundaries(Compact(h, k, profiler, cluster, observer), profiler, cluster,
                          observer);
}

std::vector<SubId> BlockRangeAtoms(const BlockSet& blocks, int first, int last) {
  std::vector<SubId> out;
  for (int b = first; b <= last; ++b) {
    const auto& atoms = blocks.blocks.at(b).atoms;
    out.insert(out.end(), atoms.begin(), atoms.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void SaveBlocks(const BlockSet& blocks, std::ostream& out) {
  using json = nlohmann::json;
  json arr = json::array();
  for (const Block& b : blocks.blocks) {
    json atoms = json::array();
    for (SubId a : b.atoms) atoms.push_back(AtomName(a));
    arr.push_back({{"id", BlockName(b.id)},
                   {"atoms", atoms},
                   {"t_fwd", b.cost.t_fwd_sec},
                   {"t_bwd", b.cost.t_bwd_sec},
                   {"mem", b.cost.mem_bytes}});
  }
  out << json{{"k", blocks.size()}, {"blocks", arr}}.dump(2) << "\n";
}

BlockSet LoadBlocks(std::istream& in, const AtomProfiler& profiler) {
  using json = nlohmann::json;
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("blocks: ") + e.what());
  }
  auto parse_id = [](const json& v, char prefix) {
    if (!v.is_string()) throw ParseError("blocks: id must be a string");
    const std::string s = v.get<std::string>();
    if (s.size() < 2 || s[0] != prefix) throw ParseError("blocks: bad id '" + s + "'");
    try {
      std::size_t used = 0;
      const int n = std::stoi(s.substr(1), &used);
      if (used != s.size() - 1 || n < 0) throw ParseError("blocks: bad id '" + s + "'");
      return n;
    } catch (const std::logic_error&) {
      throw ParseError("blocks: bad id '" + s + "'");
    }
  };
  if (!j.is_object() || !j.contains("blocks") || !j["blocks"].is_array()) {
    throw ParseError("blocks: expected an object with a 'blocks' array");
  }
  BlockSet out;
  std::vector<bool> seen(profiler.num_atoms(), false);
  for (const auto& b : j["blocks"]) {
    Block block;
    block.id = static_cast<SubId>(out.blocks.size());
    for (const auto& a : b.at("atoms")) {
      const int atom = parse_id(a, 'a');
      if (atom >= static_cast<int>(profiler.num_atoms()) || seen[atom]) {
        throw ParseError("blocks: atom " + a.get<std::string>() +
                         " unknown or listed twice");
      }
      seen[atom] = true;
      block.atoms.push_back(atom);
    }
    std::sort(block.atoms.begin(), block.atoms.end());
    block.cost = profiler.Profile(block.atoms, kReferenceMicrobatch, true);
    out.blocks.push_back(std::move(block));
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ParseError("blocks: not every atom is covered");
  }
  return out;
}

}  // namespace pipecut
