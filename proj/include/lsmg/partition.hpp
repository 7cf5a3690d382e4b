#pragma once

// Simulated-rank ownership of the mesh hierarchy.
//
// Leaves are chunked along the space-filling curve (depth-first leaf order)
// into p contiguous intervals. Every refined cell then inherits the owner of
// its first child, recursively. Ownership is computed from the tree structure
// and the leaf intervals alone.

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lsmg/forest.hpp"

namespace lsmg {

struct LeafPartition {
  int n_ranks = 1;
  std::vector<int> owner;  // indexed by position in mesh.leaf_nodes()

  /// First leaf position owned by each rank, plus one past the end.
  std::vector<std::size_t> offsets;
};

/// The first (N mod p) ranks receive ceil(N/p) leaves, the rest floor(N/p).
inline LeafPartition partition_leaves(const ForestMesh& mesh, int p) {
  if (p < 1) throw std::invalid_argument("number of ranks must be at least 1");
  const std::size_t n = mesh.n_leaves();
  const std::size_t ranks = static_cast<std::size_t>(p);
  const std::size_t base = n / ranks;
  const std::size_t extra = n % ranks;

  LeafPartition part;
  part.n_ranks = p;
  part.owner.resize(n);
  part.offsets.resize(ranks + 1);
  std::size_t pos = 0;
  for (std::size_t r = 0; r < ranks; ++r) {
    part.offsets[r] = pos;
    const std::size_t size = base + (r < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) part.owner[pos++] = static_cast<int>(r);
  }
  part.offsets[ranks] = pos;
  return part;
}

class HierarchyPartition {
 public:
  int n_ranks() const { return n_ranks_; }
  int n_levels() const { return static_cast<int>(strict_.size()); }

  int owner(NodeId n) const { return owner_[static_cast<std::size_t>(n)]; }
  const std::vector<int>& node_owners() const { return owner_; }

  std::optional<int> owner(const ForestMesh& mesh, const CellRef& c) const {
    const auto n = mesh.find(c);
    if (!n) return std::nullopt;
    return owner(*n);
  }

  /// Cells of refinement level ℓ (leaves and refined cells alike).
  std::int64_t n_cells(int lvl) const { return sum(strict_.at(static_cast<std::size_t>(lvl))); }
  std::int64_t n_cells(int lvl, int rank) const {
    return strict_.at(static_cast<std::size_t>(lvl)).at(static_cast<std::size_t>(rank));
  }
  const std::vector<std::int64_t>& level_tally(int lvl) const { return strict_.at(static_cast<std::size_t>(lvl)); }

  /// Cells of level_mesh(ℓ): level-ℓ cells plus coarser leaves carried down.
  std::int64_t n_level_mesh_cells(int lvl) const { return sum(level_mesh_.at(static_cast<std::size_t>(lvl))); }
  std::int64_t n_level_mesh_cells(int lvl, int rank) const {
    return level_mesh_.at(static_cast<std::size_t>(lvl)).at(static_cast<std::size_t>(rank));
  }
  const std::vector<std::int64_t>& level_mesh_tally(int lvl) const {
    return level_mesh_.at(static_cast<std::size_t>(lvl));
  }

 private:
  friend HierarchyPartition first_child_rule(const ForestMesh&, const LeafPartition&);

  static std::int64_t sum(const std::vector<std::int64_t>& v) {
    std::int64_t s = 0;
    for (auto x : v) s += x;
    return s;
  }

  int n_ranks_ = 1;
  std::vector<int> owner_;
  std::vector<std::vector<std::int64_t>> strict_;
  std::vector<std::vector<std::int64_t>> level_mesh_;
};

/// Takes only the tree and the leaf intervals; no neighbor data is consulted.
inline HierarchyPartition first_child_rule(const ForestMesh& mesh, const LeafPartition& leaves) {
  if (leaves.owner.size() != mesh.n_leaves()) {
    throw std::invalid_argument("leaf partition does not match the mesh");
  }
  HierarchyPartition part;
  part.n_ranks_ = leaves.n_ranks;
  part.owner_.assign(mesh.n_nodes(), -1);
  const auto leaf_ids = mesh.leaf_nodes();
  for (std::size_t i = 0; i < leaf_ids.size(); ++i) part.owner_[static_cast<std::size_t>(leaf_ids[i])] = leaves.owner[i];

  for (auto n = static_cast<NodeId>(mesh.n_nodes()) - 1; n >= 0; --n) {
    if (!mesh.is_leaf(n)) part.owner_[static_cast<std::size_t>(n)] = part.owner_[static_cast<std::size_t>(mesh.child(n, 0))];
  }

  const auto levels = static_cast<std::size_t>(mesh.max_level() + 1);
  const auto ranks = static_cast<std::size_t>(leaves.n_ranks);
  part.strict_.assign(levels, std::vector<std::int64_t>(ranks, 0));
  std::vector<std::vector<std::int64_t>> carry(levels + 1, std::vector<std::int64_t>(ranks, 0));
  for (NodeId n = 0; n < static_cast<NodeId>(mesh.n_nodes()); ++n) {
    const auto l = static_cast<std::size_t>(mesh.level(n));
    const auto r = static_cast<std::size_t>(part.owner_[static_cast<std::size_t>(n)]);
    ++part.strict_[l][r];
    if (mesh.is_leaf(n)) ++carry[l + 1][r];
  }
  part.level_mesh_ = part.strict_;
  std::vector<std::int64_t> running(ranks, 0);
  for (std::size_t l = 0; l < levels; ++l) {
    for (std::size_t r = 0; r < ranks; ++r) {
      running[r] += carry[l][r];
      part.level_mesh_[l][r] += running[r];
    }
  }
  return part;
}

inline HierarchyPartition partition_hierarchy(const ForestMesh& mesh, int p) {
  return first_child_rule(mesh, partition_leaves(mesh, p));
}

struct GhostCount {
  std::int64_t ghosts = 0;
  std::int64_t children = 0;
};

/// Level-ℓ cells whose owner differs from the owner of their parent.
inline GhostCount ghost_children(const ForestMesh& mesh, const HierarchyPartition& part, int lvl) {
  if (lvl < 1 || lvl > mesh.max_level()) {
    throw std::out_of_range("ghost_children level " + std::to_string(lvl) + " outside [1, " +
                            std::to_string(mesh.max_level()) + "]");
  }
  GhostCount g;
  for (NodeId n = 0; n < static_cast<NodeId>(mesh.n_nodes()); ++n) {
    if (mesh.level(n) != lvl) continue;
    ++g.children;
    if (part.owner(n) != part.owner(mesh.node(n).parent)) ++g.ghosts;
  }
  return g;
}

/// Ghost counts for every level transfer at once; entry 0 is empty.
inline std::vector<GhostCount> ghost_children_per_level(const ForestMesh& mesh, const HierarchyPartition& part) {
  std::vector<GhostCount> out(static_cast<std::size_t>(mesh.max_level() + 1));
  for (NodeId n = 0; n < static_cast<NodeId>(mesh.n_nodes()); ++n) {
    const NodeId parent = mesh.node(n).parent;
    if (parent == kNoNode) continue;
    GhostCount& g = out[static_cast<std::size_t>(mesh.level(n))];
    ++g.children;
    if (part.owner(n) != part.owner(parent)) ++g.ghosts;
  }
  return out;
}

/// For each rank, the levels on which it owns at least one cell of the
/// level mesh (carried-down leaves count).
inline std::vector<std::vector<int>> rank_active_levels(const HierarchyPartition& part) {
  std::vector<std::vector<int>> active(static_cast<std::size_t>(part.n_ranks()));
  for (int l = 0; l < part.n_levels(); ++l) {
    for (int r = 0; r < part.n_ranks(); ++r) {
      if (part.n_level_mesh_cells(l, r) > 0) active[static_cast<std::size_t>(r)].push_back(l);
    }
  }
  return active;
}

/// One line per leaf in leaf order: `tree_id level morton [owner]`.
inline void write_mesh_dump(std::ostream& os, const ForestMesh& mesh, const HierarchyPartition* part = nullptr) {
  for (NodeId n : mesh.leaf_nodes()) {
    const CellRef c = mesh.cell(n);
    os << c.tree_id << ' ' << c.level << ' ' << c.morton;
    if (part != nullptr) os << ' ' << part->owner(n);
    os << '\n';
  }
}

}  // namespace lsmg
