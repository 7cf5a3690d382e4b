#pragma once

// Forest-of-trees mesh with isotropic 2^d refinement over [-1,1]^d.
//
// Cells are addressed by (tree, level, morton). The morton key of a cell is
// the bit-interleaved path from its root: d bits per level, with the x bit
// least significant inside each group. Child index 0 is therefore the cell
// at the lowest coordinate in every direction ("first child").
//
// Storage is an explicit node array. Children of a node are contiguous and
// always appended after their parent, so a reverse sweep over node ids visits
// every child before its parent.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsmg {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

struct CellRef {
  std::uint32_t tree_id = 0;
  int level = 0;
  std::uint64_t morton = 0;

  friend bool operator==(const CellRef&, const CellRef&) = default;
  friend auto operator<=>(const CellRef&, const CellRef&) = default;
};

/// Integer position of a cell inside its tree at the cell's own level.
using CellCoords = std::array<std::int64_t, 3>;

struct Box {
  std::array<double, 3> lo{};
  std::array<double, 3> hi{};
};

inline int max_supported_level(int dim) { return dim == 2 ? 30 : 20; }

inline void check_dim(int dim) {
  if (dim != 2 && dim != 3) {
    throw std::invalid_argument("dimension must be 2 or 3, got " + std::to_string(dim));
  }
}

inline CellCoords morton_decode(std::uint64_t morton, int level, int dim) {
  CellCoords c{0, 0, 0};
  for (int b = 0; b < level; ++b) {
    for (int k = 0; k < dim; ++k) {
      c[k] |= static_cast<std::int64_t>((morton >> (b * dim + k)) & 1U) << b;
    }
  }
  return c;
}

inline std::uint64_t morton_encode(const CellCoords& c, int level, int dim) {
  std::uint64_t m = 0;
  for (int b = 0; b < level; ++b) {
    for (int k = 0; k < dim; ++k) {
      m |= static_cast<std::uint64_t>((c[k] >> b) & 1) << (b * dim + k);
    }
  }
  return m;
}

inline CellRef parent_of(const CellRef& c, int dim) {
  if (c.level == 0) throw std::invalid_argument("root cell has no parent");
  return {c.tree_id, c.level - 1, c.morton >> dim};
}

inline CellRef child_of(const CellRef& c, int child_index, int dim) {
  return {c.tree_id, c.level + 1, (c.morton << dim) | static_cast<std::uint64_t>(child_index)};
}

/// Key that sorts cells of one tree in depth-first order; ancestors are not
/// distinguished from their first descendants, so use it on leaves only.
inline std::uint64_t padded_key(const CellRef& c, int dim) {
  return c.morton << (dim * (max_supported_level(dim) - c.level));
}

class ForestMesh {
 public:
  struct Node {
    std::uint64_t morton = 0;
    NodeId parent = kNoNode;
    NodeId first_child = kNoNode;
    std::uint32_t tree = 0;
    std::uint8_t level = 0;
  };

  static ForestMesh single_root(int dim) { return ForestMesh(dim, 1); }

  /// Trees are not geometrically connected; every tree spans its own copy of
  /// [-1,1]^d. Neighbor queries that leave a tree are rejected.
  static ForestMesh multi_root(int dim, int n_trees) {
    if (n_trees < 1) throw std::invalid_argument("a forest needs at least one tree");
    return ForestMesh(dim, n_trees);
  }

  int dim() const { return dim_; }
  int n_children() const { return 1 << dim_; }
  int n_trees() const { return n_trees_; }
  int max_level() const { return max_level_; }

  std::size_t n_nodes() const { return nodes_.size(); }
  std::size_t n_leaves() const { return leaves_.size(); }

  /// Leaves in depth-first (Morton) order, tree by tree.
  std::span<const NodeId> leaf_nodes() const { return leaves_; }

  std::vector<CellRef> leaves() const {
    std::vector<CellRef> out;
    out.reserve(leaves_.size());
    for (NodeId n : leaves_) out.push_back(cell(n));
    return out;
  }

  const Node& node(NodeId n) const { return nodes_[static_cast<std::size_t>(n)]; }
  int level(NodeId n) const { return node(n).level; }
  bool is_leaf(NodeId n) const { return node(n).first_child == kNoNode; }
  NodeId root(std::uint32_t tree) const { return static_cast<NodeId>(tree); }
  NodeId child(NodeId n, int child_index) const { return node(n).first_child + child_index; }

  CellRef cell(NodeId n) const {
    const Node& nd = node(n);
    return {nd.tree, nd.level, nd.morton};
  }

  CellCoords coords(NodeId n) const { return morton_decode(node(n).morton, node(n).level, dim_); }

  std::optional<NodeId> find(const CellRef& c) const {
    if (c.tree_id >= static_cast<std::uint32_t>(n_trees_) || c.level < 0) return std::nullopt;
    NodeId n = root(c.tree_id);
    for (int l = 1; l <= c.level; ++l) {
      if (is_leaf(n)) return std::nullopt;
      const int shift = (c.level - l) * dim_;
      n = child(n, static_cast<int>((c.morton >> shift) & static_cast<std::uint64_t>(n_children() - 1)));
    }
    if (node(n).morton != c.morton) return std::nullopt;
    return n;
  }

  bool contains(const CellRef& c) const { return find(c).has_value(); }

  /// The node at (level, position) if it exists, otherwise its deepest
  /// existing ancestor (which is then a leaf).
  NodeId deepest_containing(std::uint32_t tree, int lvl, const CellCoords& pos) const {
    NodeId n = root(tree);
    for (int l = 1; l <= lvl; ++l) {
      if (is_leaf(n)) return n;
      const int bit = lvl - l;
      int idx = 0;
      for (int k = 0; k < dim_; ++k) idx |= static_cast<int>((pos[k] >> bit) & 1) << k;
      n = child(n, idx);
    }
    return n;
  }

  Box box(const CellRef& c) const {
    const CellCoords p = morton_decode(c.morton, c.level, dim_);
    const double h = 2.0 / static_cast<double>(std::int64_t{1} << c.level);
    Box b;
    for (int k = 0; k < dim_; ++k) {
      b.lo[k] = -1.0 + h * static_cast<double>(p[k]);
      b.hi[k] = b.lo[k] + h;
    }
    return b;
  }

  Box box(NodeId n) const { return box(cell(n)); }

  /// Leaves (other than `c` and its descendants) whose closure touches the
  /// closure of `c`. Pure integer arithmetic on Morton coordinates.
  std::vector<CellRef> vertex_neighbors(const CellRef& c) const {
    const auto found = find(c);
    if (!found) throw std::invalid_argument("cell is not part of the mesh");
    const NodeId self = *found;
    const int l = c.level;
    const std::int64_t extent = std::int64_t{1} << l;
    const CellCoords pos = coords(self);

    std::vector<NodeId> hits;
    for_each_offset([&](const CellCoords& off) {
      CellCoords q = pos;
      for (int k = 0; k < dim_; ++k) q[k] += off[k];
      if (!inside_tree(q, extent)) return;
      const NodeId m = deepest_containing(c.tree_id, l, q);
      if (level(m) < l || is_leaf(m)) {
        hits.push_back(m);
        return;
      }
      collect_touching_leaves(m, pos, l, hits);
    });
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());

    std::vector<NodeId> ordered(hits);
    std::sort(ordered.begin(), ordered.end(), [&](NodeId a, NodeId b) {
      return padded_key(cell(a), dim_) < padded_key(cell(b), dim_);
    });
    std::vector<CellRef> out;
    out.reserve(ordered.size());
    for (NodeId n : ordered) out.push_back(cell(n));
    return out;
  }

  /// Refines the given leaves, then closes to one-irregularity over shared
  /// vertices (fixed point) and re-establishes leaf order.
  void refine_leaves(std::span<const NodeId> marked) {
    std::vector<NodeId> queue;
    for (NodeId n : marked) {
      if (n < 0 || static_cast<std::size_t>(n) >= nodes_.size()) {
        throw std::invalid_argument("marked cell is not part of the mesh");
      }
      if (!is_leaf(n)) continue;  // duplicate mark
      refine_node(n, queue);
    }
    if (queue.empty()) return;
    close(std::move(queue));
    rebuild_leaf_order();
  }

  /// Refines every leaf once (closure is then trivially satisfied).
  void refine_all() {
    const std::vector<NodeId> all(leaves_.begin(), leaves_.end());
    std::vector<NodeId> ignored;
    for (NodeId n : all) refine_node(n, ignored);
    rebuild_leaf_order();
  }

 private:
  ForestMesh(int dim, int n_trees) : dim_(dim), n_trees_(n_trees) {
    check_dim(dim);
    nodes_.resize(static_cast<std::size_t>(n_trees));
    for (int t = 0; t < n_trees; ++t) nodes_[static_cast<std::size_t>(t)].tree = static_cast<std::uint32_t>(t);
    rebuild_leaf_order();
  }

  template <class F>
  void for_each_offset(F&& f) const {
    const int count = dim_ == 2 ? 9 : 27;
    for (int i = 0; i < count; ++i) {
      CellCoords off{i % 3 - 1, (i / 3) % 3 - 1, dim_ == 3 ? i / 9 - 1 : 0};
      if (off[0] == 0 && off[1] == 0 && off[2] == 0) continue;
      f(off);
    }
  }

  bool inside_tree(const CellCoords& q, std::int64_t extent) const {
    bool inside = true;
    for (int k = 0; k < dim_; ++k) inside = inside && q[k] >= 0 && q[k] < extent;
    if (!inside && n_trees_ > 1) {
      throw std::logic_error("cross-tree neighbor lookup is not supported");
    }
    return inside;
  }

  // Leaves below `m` whose closure touches the closed cell at `pos` on level `l`.
  void collect_touching_leaves(NodeId m, const CellCoords& pos, int l, std::vector<NodeId>& out) const {
    std::vector<NodeId> stack{m};
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      const int ln = level(n);
      const CellCoords q = coords(n);
      bool touches = true;
      for (int k = 0; k < dim_; ++k) {
        // Compare on the finer grid of node n: [q, q+1] vs [pos*s, (pos+1)*s].
        const std::int64_t s = std::int64_t{1} << (ln - l);
        touches = touches && q[k] + 1 >= pos[k] * s && q[k] <= (pos[k] + 1) * s;
      }
      if (!touches) continue;
      if (is_leaf(n)) {
        out.push_back(n);
      } else {
        for (int i = 0; i < n_children(); ++i) stack.push_back(child(n, i));
      }
    }
  }

  void refine_node(NodeId n, std::vector<NodeId>& new_leaves) {
    const int new_level = level(n) + 1;
    if (new_level > max_supported_level(dim_)) {
      throw std::length_error("refinement exceeds the supported maximum level");
    }
    const auto first = static_cast<NodeId>(nodes_.size());
    const std::uint64_t base = nodes_[static_cast<std::size_t>(n)].morton << dim_;
    const std::uint32_t tree = nodes_[static_cast<std::size_t>(n)].tree;
    for (int i = 0; i < n_children(); ++i) {
      Node c;
      c.morton = base | static_cast<std::uint64_t>(i);
      c.parent = n;
      c.tree = tree;
      c.level = static_cast<std::uint8_t>(new_level);
      nodes_.push_back(c);
      new_leaves.push_back(first + i);
    }
    nodes_[static_cast<std::size_t>(n)].first_child = first;
    max_level_ = std::max(max_level_, new_level);
  }

  void close(std::vector<NodeId> queue) {
    while (!queue.empty()) {
      const NodeId n = queue.back();
      queue.pop_back();
      if (!is_leaf(n)) continue;
      const int l = level(n);
      if (l < 2) continue;
      const std::uint32_t tree = node(n).tree;
      const CellCoords pos = coords(n);
      const std::int64_t extent = std::int64_t{1} << l;
      for_each_offset([&](const CellCoords& off) {
        CellCoords q = pos;
        for (int k = 0; k < dim_; ++k) q[k] += off[k];
        if (!inside_tree(q, extent)) return;
        for (;;) {
          const NodeId m = deepest_containing(tree, l, q);
          if (level(m) >= l - 1) break;
          refine_node(m, queue);
        }
      });
    }
  }

  void rebuild_leaf_order() {
    leaves_.clear();
    std::vector<NodeId> stack;
    for (int t = n_trees_ - 1; t >= 0; --t) stack.push_back(root(static_cast<std::uint32_t>(t)));
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      if (is_leaf(n)) {
        leaves_.push_back(n);
      } else {
        for (int i = n_children() - 1; i >= 0; --i) stack.push_back(child(n, i));
      }
    }
  }

  int dim_;
  int n_trees_;
  int max_level_ = 0;
  std::vector<Node> nodes_;
  std::vector<NodeId> leaves_;
};

/// Refines `marked` leaves of `mesh` (closure to a fixed point included).
/// Takes the mesh by value: pass `std::move(mesh)` to refine in place.
inline ForestMesh refine(ForestMesh mesh, std::span<const CellRef> marked) {
  std::vector<NodeId> ids;
  ids.reserve(marked.size());
  for (const CellRef& c : marked) {
    const auto n = mesh.find(c);
    if (!n || !mesh.is_leaf(*n)) throw std::invalid_argument("marked cell is not a leaf of the mesh");
    ids.push_back(*n);
  }
  mesh.refine_leaves(ids);
  return mesh;
}

inline std::vector<CellRef> vertex_neighbors(const ForestMesh& mesh, const CellRef& c) {
  return mesh.vertex_neighbors(c);
}

// ---------------------------------------------------------------------------
// Level meshes

struct LevelMeshView {
  int level = 0;
  std::vector<CellRef> cells;
  std::vector<CellRef> strict_cells;
  std::vector<CellRef> lower_cells;
  std::vector<NodeId> cell_nodes;  // parallel to `cells`
};

/// All level-ℓ cells plus all leaves coarser than ℓ, in depth-first order.
inline LevelMeshView level_mesh(const ForestMesh& mesh, int lvl) {
  if (lvl < 0 || lvl > mesh.max_level()) {
    throw std::out_of_range("level " + std::to_string(lvl) + " outside [0, " +
                            std::to_string(mesh.max_level()) + "]");
  }
  LevelMeshView view;
  view.level = lvl;
  std::vector<NodeId> stack;
  for (int t = mesh.n_trees() - 1; t >= 0; --t) stack.push_back(mesh.root(static_cast<std::uint32_t>(t)));
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    const int l = mesh.level(n);
    if (l == lvl) {
      view.cells.push_back(mesh.cell(n));
      view.strict_cells.push_back(mesh.cell(n));
      view.cell_nodes.push_back(n);
    } else if (mesh.is_leaf(n)) {
      view.cells.push_back(mesh.cell(n));
      view.lower_cells.push_back(mesh.cell(n));
      view.cell_nodes.push_back(n);
    } else {
      for (int i = mesh.n_children() - 1; i >= 0; --i) stack.push_back(mesh.child(n, i));
    }
  }
  return view;
}

}  // namespace lsmg
