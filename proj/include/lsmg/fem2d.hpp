#pragma once

// Bilinear (Q1) finite elements on 2D level meshes and on the leaf mesh.
//
// A level-ℓ vector holds one entry per distinct vertex of level_mesh(ℓ),
// including hanging vertices. Vertices are keyed on the integer lattice of
// the finest level, (iy << 32) | ix, so dof order is row-major with x
// fastest. Shared vertices therefore carry the same key on every level.
//
// Conforming (primal) vectors have hanging entries equal to the average of
// the two edge endpoints and Dirichlet entries equal to zero.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <unsupported/Eigen/SparseExtra>

#include "lsmg/forest.hpp"

namespace lsmg {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

enum class DofClass : std::uint8_t { S, I, L };

inline char to_char(DofClass c) { return c == DofClass::S ? 'S' : c == DofClass::I ? 'I' : 'L'; }

struct HangingConstraint {
  int dof = -1;
  std::array<int, 2> masters{};
  std::array<double, 2> weights{0.5, 0.5};
};

struct SpaceCell {
  NodeId node = kNoNode;
  std::array<int, 4> dofs{};  // corners (0,0), (1,0), (0,1), (1,1)
  double x0 = 0.0;
  double y0 = 0.0;
  double h = 0.0;
};

struct LevelSpace {
  int level = 0;
  int lattice_level = 0;  // keys live on the 2^lattice_level vertex lattice
  bool leaf = false;

  std::vector<std::uint64_t> keys;  // sorted; dof i has key keys[i]
  std::vector<DofClass> dof_class;
  std::vector<std::uint8_t> dirichlet;
  std::vector<int> hanging;  // index into constraints or -1
  std::vector<HangingConstraint> constraints;

  std::vector<SpaceCell> strict_cells;
  std::vector<SpaceCell> lower_cells;

  int n_dofs() const { return static_cast<int>(keys.size()); }
  bool is_dirichlet(int i) const { return dirichlet[static_cast<std::size_t>(i)] != 0; }
  bool is_hanging(int i) const { return hanging[static_cast<std::size_t>(i)] >= 0; }
  bool is_constrained(int i) const { return is_dirichlet(i) || is_hanging(i); }
  DofClass cls(int i) const { return dof_class[static_cast<std::size_t>(i)]; }

  std::optional<int> index_of(std::uint64_t key) const {
    const auto it = std::lower_bound(keys.begin(), keys.end(), key);
    if (it == keys.end() || *it != key) return std::nullopt;
    return static_cast<int>(it - keys.begin());
  }

  std::array<double, 2> point(int i) const {
    const std::uint64_t k = keys[static_cast<std::size_t>(i)];
    const double h = 2.0 / static_cast<double>(std::int64_t{1} << lattice_level);
    return {-1.0 + h * static_cast<double>(k & 0xffffffffULL), -1.0 + h * static_cast<double>(k >> 32)};
  }

  std::vector<int> dofs_of(DofClass c) const {
    std::vector<int> out;
    for (int i = 0; i < n_dofs(); ++i) {
      if (cls(i) == c) out.push_back(i);
    }
    return out;
  }
};

inline std::uint64_t vertex_key(std::int64_t ix, std::int64_t iy) {
  return (static_cast<std::uint64_t>(iy) << 32) | static_cast<std::uint64_t>(ix);
}

namespace detail {

struct CellLattice {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
  std::int64_t s = 1;  // edge length on the lattice
};

inline CellLattice cell_lattice(const ForestMesh& mesh, NodeId n, int lattice_level) {
  const CellCoords c = mesh.coords(n);
  const std::int64_t s = std::int64_t{1} << (lattice_level - mesh.level(n));
  return {c[0] * s, c[1] * s, s};
}

inline std::array<std::uint64_t, 4> corner_keys(const CellLattice& c) {
  return {vertex_key(c.ix, c.iy), vertex_key(c.ix + c.s, c.iy), vertex_key(c.ix, c.iy + c.s),
          vertex_key(c.ix + c.s, c.iy + c.s)};
}

}  // namespace detail

/// Vertices of level_mesh(ℓ), their S/I/L class, hanging constraints and
/// the homogeneous Dirichlet set. Hanging constraints are computed on every
/// level since the multigrid transfers need them; `leaf` marks ℓ = max level.
inline LevelSpace distribute_dofs(const ForestMesh& mesh, int lvl) {
  if (mesh.dim() != 2) throw std::invalid_argument("finite elements are implemented for d=2 only");
  if (mesh.n_trees() != 1) throw std::invalid_argument("finite elements need a single-root mesh");
  const LevelMeshView view = level_mesh(mesh, lvl);

  LevelSpace sp;
  sp.level = lvl;
  sp.lattice_level = mesh.max_level();
  sp.leaf = lvl == mesh.max_level();

  std::vector<detail::CellLattice> lat(view.cell_nodes.size());
  std::vector<std::uint8_t> strict(view.cell_nodes.size());
  for (std::size_t c = 0; c < lat.size(); ++c) {
    lat[c] = detail::cell_lattice(mesh, view.cell_nodes[c], sp.lattice_level);
    strict[c] = mesh.level(view.cell_nodes[c]) == lvl ? 1 : 0;
    for (auto k : detail::corner_keys(lat[c])) sp.keys.push_back(k);
  }
  std::sort(sp.keys.begin(), sp.keys.end());
  sp.keys.erase(std::unique(sp.keys.begin(), sp.keys.end()), sp.keys.end());

  const int n = sp.n_dofs();
  std::vector<std::uint8_t> touch(static_cast<std::size_t>(n), 0);  // bit 0 strict, bit 1 lower
  sp.hanging.assign(static_cast<std::size_t>(n), -1);
  const std::int64_t top = std::int64_t{1} << sp.lattice_level;

  for (std::size_t c = 0; c < lat.size(); ++c) {
    const auto ck = detail::corner_keys(lat[c]);
    SpaceCell cell;
    cell.node = view.cell_nodes[c];
    for (int v = 0; v < 4; ++v) cell.dofs[static_cast<std::size_t>(v)] = *sp.index_of(ck[static_cast<std::size_t>(v)]);
    const double hl = 2.0 / static_cast<double>(top);
    cell.x0 = -1.0 + hl * static_cast<double>(lat[c].ix);
    cell.y0 = -1.0 + hl * static_cast<double>(lat[c].iy);
    cell.h = hl * static_cast<double>(lat[c].s);
    const std::uint8_t bit = strict[c] ? 1 : 2;
    for (int d : cell.dofs) touch[static_cast<std::size_t>(d)] |= bit;

    // a vertex sitting at an edge midpoint of this cell hangs on that edge
    if (lat[c].s >= 2) {
      const std::int64_t m = lat[c].s / 2;
      const detail::CellLattice& l = lat[c];
      const std::array<std::array<int, 2>, 4> edges{{{0, 1}, {2, 3}, {0, 2}, {1, 3}}};
      const std::array<std::uint64_t, 4> mids{vertex_key(l.ix + m, l.iy), vertex_key(l.ix + m, l.iy + l.s),
                                              vertex_key(l.ix, l.iy + m), vertex_key(l.ix + l.s, l.iy + m)};
      for (int e = 0; e < 4; ++e) {
        const auto hit = sp.index_of(mids[static_cast<std::size_t>(e)]);
        if (!hit) continue;
        touch[static_cast<std::size_t>(*hit)] |= bit;
        if (sp.hanging[static_cast<std::size_t>(*hit)] >= 0) continue;
        HangingConstraint hc;
        hc.dof = *hit;
        hc.masters = {cell.dofs[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)][0])],
                      cell.dofs[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)][1])]};
        sp.hanging[static_cast<std::size_t>(*hit)] = static_cast<int>(sp.constraints.size());
        sp.constraints.push_back(hc);
      }
    }
    (strict[c] ? sp.strict_cells : sp.lower_cells).push_back(cell);
  }

  sp.dof_class.resize(static_cast<std::size_t>(n));
  sp.dirichlet.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto t = touch[static_cast<std::size_t>(i)];
    sp.dof_class[static_cast<std::size_t>(i)] = t == 1 ? DofClass::S : t == 2 ? DofClass::L : DofClass::I;
    const std::uint64_t k = sp.keys[static_cast<std::size_t>(i)];
    const auto ix = static_cast<std::int64_t>(k & 0xffffffffULL);
    const auto iy = static_cast<std::int64_t>(k >> 32);
    sp.dirichlet[static_cast<std::size_t>(i)] = (ix == 0 || iy == 0 || ix == top || iy == top) ? 1 : 0;
  }

  for (const auto& hc : sp.constraints) {
    for (int m : hc.masters) {
      if (sp.hanging[static_cast<std::size_t>(m)] >= 0) throw std::logic_error("hanging vertex constrained to another hanging vertex");
    }
  }
  // Dirichlet takes precedence over hanging
  std::sort(sp.constraints.begin(), sp.constraints.end(),
            [](const HangingConstraint& a, const HangingConstraint& b) { return a.dof < b.dof; });
  std::vector<HangingConstraint> kept;
  std::fill(sp.hanging.begin(), sp.hanging.end(), -1);
  for (const auto& hc : sp.constraints) {
    if (sp.is_dirichlet(hc.dof)) continue;
    sp.hanging[static_cast<std::size_t>(hc.dof)] = static_cast<int>(kept.size());
    kept.push_back(hc);
  }
  sp.constraints = std::move(kept);
  return sp;
}

inline LevelSpace distribute_leaf_dofs(const ForestMesh& mesh) { return distribute_dofs(mesh, mesh.max_level()); }

/// ∫∇φ_i·∇φ_j on an axis-aligned square; independent of the edge length.
inline const std::array<std::array<double, 4>, 4>& q1_stiffness() {
  static const std::array<std::array<double, 4>, 4> k{{{4.0 / 6, -1.0 / 6, -1.0 / 6, -2.0 / 6},
                                                       {-1.0 / 6, 4.0 / 6, -2.0 / 6, -1.0 / 6},
                                                       {-1.0 / 6, -2.0 / 6, 4.0 / 6, -1.0 / 6},
                                                       {-2.0 / 6, -1.0 / 6, -1.0 / 6, 4.0 / 6}}};
  return k;
}

struct LevelOperators {
  SparseMatrix a_s;   // S rows and columns; unit diagonal on Dirichlet S dofs
  SparseMatrix a_si;  // S rows, I columns
  SparseMatrix a_is;  // transpose of a_si
};

/// Cell loop over the strict cells of level ℓ only. All blocks are stored
/// at full level size (n × n) so they act directly on level vectors.
inline LevelOperators assemble_level(const LevelSpace& sp) {
  if (sp.keys.empty()) throw std::invalid_argument("space has no dofs");
  const auto& k = q1_stiffness();
  std::vector<Triplet> ss;
  std::vector<Triplet> si;
  for (const SpaceCell& c : sp.strict_cells) {
    for (int a = 0; a < 4; ++a) {
      const int i = c.dofs[static_cast<std::size_t>(a)];
      if (sp.cls(i) != DofClass::S || sp.is_dirichlet(i)) continue;
      for (int b = 0; b < 4; ++b) {
        const int j = c.dofs[static_cast<std::size_t>(b)];
        if (sp.is_dirichlet(j)) continue;
        const double v = k[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        if (sp.cls(j) == DofClass::S) ss.emplace_back(i, j, v);
        else if (sp.cls(j) == DofClass::I) si.emplace_back(i, j, v);
      }
    }
  }
  for (int i = 0; i < sp.n_dofs(); ++i) {
    if (sp.cls(i) == DofClass::S && sp.is_dirichlet(i)) ss.emplace_back(i, i, 1.0);
  }
  LevelOperators ops;
  const auto n = static_cast<Eigen::Index>(sp.n_dofs());
  ops.a_s.resize(n, n);
  ops.a_s.setFromTriplets(ss.begin(), ss.end());
  ops.a_si.resize(n, n);
  ops.a_si.setFromTriplets(si.begin(), si.end());
  ops.a_is = SparseMatrix(ops.a_si.transpose());
  return ops;
}

namespace detail {

/// Free-dof expansion of a vertex: itself, its masters, or nothing.
inline void expand(const LevelSpace& sp, int i, std::vector<std::pair<int, double>>& out) {
  out.clear();
  if (sp.is_dirichlet(i)) return;
  const int h = sp.hanging[static_cast<std::size_t>(i)];
  if (h < 0) {
    out.emplace_back(i, 1.0);
    return;
  }
  const HangingConstraint& hc = sp.constraints[static_cast<std::size_t>(h)];
  for (int m = 0; m < 2; ++m) {
    const int j = hc.masters[static_cast<std::size_t>(m)];
    if (!sp.is_dirichlet(j)) out.emplace_back(j, hc.weights[static_cast<std::size_t>(m)]);
  }
}

inline double q1_shape(int v, double xi, double eta) {
  const double fx = (v & 1) ? xi : 1.0 - xi;
  const double fy = (v & 2) ? eta : 1.0 - eta;
  return fx * fy;
}

}  // namespace detail

struct LeafSystem {
  SparseMatrix a;
  Vector b;
};

/// Poisson system on all leaves. Hanging vertices are condensed into their
/// masters; constrained rows carry a unit diagonal and a zero right-hand side.
inline LeafSystem assemble_leaf(const LevelSpace& sp, const std::function<double(double, double)>& f) {
  if (!sp.leaf) throw std::invalid_argument("assemble_leaf needs the leaf space");
  const auto& k = q1_stiffness();
  const double g = 0.5 / std::sqrt(3.0);
  const std::array<double, 2> gp{0.5 - g, 0.5 + g};

  const auto n = static_cast<Eigen::Index>(sp.n_dofs());
  LeafSystem sys;
  sys.b = Vector::Zero(n);
  std::vector<Triplet> trip;
  std::vector<std::pair<int, double>> ea;
  std::vector<std::pair<int, double>> eb;

  auto cells = [&](auto&& fn) {
    for (const SpaceCell& c : sp.strict_cells) fn(c);
    for (const SpaceCell& c : sp.lower_cells) fn(c);
  };
  cells([&](const SpaceCell& c) {
    std::array<double, 4> load{};
    for (double xi : gp) {
      for (double eta : gp) {
        const double fv = f(c.x0 + xi * c.h, c.y0 + eta * c.h) * 0.25 * c.h * c.h;
        for (int v = 0; v < 4; ++v) load[static_cast<std::size_t>(v)] += fv * detail::q1_shape(v, xi, eta);
      }
    }
    for (int a = 0; a < 4; ++a) {
      detail::expand(sp, c.dofs[static_cast<std::size_t>(a)], ea);
      for (auto [i, wi] : ea) sys.b[i] += wi * load[static_cast<std::size_t>(a)];
      for (int b = 0; b < 4; ++b) {
        detail::expand(sp, c.dofs[static_cast<std::size_t>(b)], eb);
        const double v = k[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        for (auto [i, wi] : ea) {
          for (auto [j, wj] : eb) trip.emplace_back(i, j, wi * wj * v);
        }
      }
    }
  });
  for (int i = 0; i < sp.n_dofs(); ++i) {
    if (sp.is_constrained(i)) trip.emplace_back(i, i, 1.0);
  }
  sys.a.resize(n, n);
  sys.a.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

struct Transfer {
  SparseMatrix p;  // coarse → fine
  SparseMatrix r;  // pᵀ
};

/// Embedding of level ℓ−1 into level ℓ. Shared vertices are copied; the new
/// vertices of refined level-(ℓ−1) cells are interpolated bilinearly.
/// Dirichlet rows and columns are zero.
inline Transfer build_transfer(const ForestMesh& mesh, const LevelSpace& coarse, const LevelSpace& fine) {
  if (fine.level != coarse.level + 1) throw std::invalid_argument("transfer needs consecutive levels");
  if (fine.lattice_level != coarse.lattice_level) throw std::invalid_argument("spaces belong to different meshes");
  std::vector<Triplet> trip;
  std::vector<std::uint8_t> done(static_cast<std::size_t>(fine.n_dofs()), 0);
  for (int i = 0; i < fine.n_dofs(); ++i) {
    const auto j = coarse.index_of(fine.keys[static_cast<std::size_t>(i)]);
    if (!j) continue;
    done[static_cast<std::size_t>(i)] = 1;
    if (!fine.is_dirichlet(i) && !coarse.is_dirichlet(*j)) trip.emplace_back(i, *j, 1.0);
  }
  for (const SpaceCell& c : coarse.strict_cells) {
    if (mesh.is_leaf(c.node)) continue;
    const detail::CellLattice l = detail::cell_lattice(mesh, c.node, fine.lattice_level);
    const std::int64_t m = l.s / 2;
    for (int b = 0; b <= 2; ++b) {
      for (int a = 0; a <= 2; ++a) {
        if (a != 1 && b != 1) continue;
        const auto i = fine.index_of(vertex_key(l.ix + a * m, l.iy + b * m));
        if (!i) throw std::logic_error("refined cell is missing a fine vertex");
        if (done[static_cast<std::size_t>(*i)]) continue;
        done[static_cast<std::size_t>(*i)] = 1;
        if (fine.is_dirichlet(*i)) continue;
        for (int v = 0; v < 4; ++v) {
          const double w = detail::q1_shape(v, 0.5 * a, 0.5 * b);
          const int j = c.dofs[static_cast<std::size_t>(v)];
          if (w != 0.0 && !coarse.is_dirichlet(j)) trip.emplace_back(*i, j, w);
        }
      }
    }
  }
  if (std::find(done.begin(), done.end(), 0) != done.end()) throw std::logic_error("fine vertex without transfer row");
  Transfer t;
  t.p.resize(fine.n_dofs(), coarse.n_dofs());
  t.p.setFromTriplets(trip.begin(), trip.end());
  t.r = SparseMatrix(t.p.transpose());
  return t;
}

/// Sets hanging entries from their masters and Dirichlet entries to zero.
inline void distribute_constraints(const LevelSpace& sp, Vector& x) {
  for (int i = 0; i < sp.n_dofs(); ++i) {
    if (sp.is_dirichlet(i)) x[i] = 0.0;
  }
  for (const HangingConstraint& hc : sp.constraints) {
    x[hc.dof] = hc.weights[0] * x[hc.masters[0]] + hc.weights[1] * x[hc.masters[1]];
  }
}

/// Zeroes hanging and Dirichlet entries.
inline void zero_constrained(const LevelSpace& sp, Vector& x) {
  for (int i = 0; i < sp.n_dofs(); ++i) {
    if (sp.is_constrained(i)) x[i] = 0.0;
  }
}

/// L2 norm of u_h − u over all cells of the space (3×3 Gauss). `u_h` must
/// be conforming.
inline double l2_error(const LevelSpace& sp, const Vector& uh, const std::function<double(double, double)>& u) {
  const double q = std::sqrt(0.6);
  const std::array<double, 3> pts{0.5 * (1 - q), 0.5, 0.5 * (1 + q)};
  const std::array<double, 3> wts{5.0 / 18, 8.0 / 18, 5.0 / 18};
  double sum = 0.0;
  auto add = [&](const SpaceCell& c) {
    for (int qi = 0; qi < 3; ++qi) {
      for (int qj = 0; qj < 3; ++qj) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k) v += uh[c.dofs[static_cast<std::size_t>(k)]] * detail::q1_shape(k, pts[static_cast<std::size_t>(qi)], pts[static_cast<std::size_t>(qj)]);
        const double e = v - u(c.x0 + pts[static_cast<std::size_t>(qi)] * c.h, c.y0 + pts[static_cast<std::size_t>(qj)] * c.h);
        sum += wts[static_cast<std::size_t>(qi)] * wts[static_cast<std::size_t>(qj)] * c.h * c.h * e * e;
      }
    }
  };
  for (const SpaceCell& c : sp.strict_cells) add(c);
  for (const SpaceCell& c : sp.lower_cells) add(c);
  return std::sqrt(sum);
}

inline bool write_matrix_market(const SparseMatrix& a, const std::string& path) { return Eigen::saveMarket(a, path); }

}  // namespace lsmg
