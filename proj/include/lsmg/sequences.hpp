#pragma once

// Refinement sequences used for the partitioning-efficiency study. Every
// sequence starts from a single root over [-1,1]^d centred at the origin and
// each refinement step is followed by closure.

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lsmg/forest.hpp"

namespace lsmg {

enum class SequenceKind { uniform, circle, quadrant, annulus, fig2 };

inline std::string_view to_string(SequenceKind k) {
  switch (k) {
    case SequenceKind::uniform: return "uniform";
    case SequenceKind::circle: return "circle";
    case SequenceKind::quadrant: return "quadrant";
    case SequenceKind::annulus: return "annulus";
    case SequenceKind::fig2: return "fig2";
  }
  return "?";
}

inline std::optional<SequenceKind> parse_sequence_kind(std::string_view s) {
  for (SequenceKind k : {SequenceKind::uniform, SequenceKind::circle, SequenceKind::quadrant,
                         SequenceKind::annulus, SequenceKind::fig2}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

namespace geometry {

inline constexpr double kCircleRadius = 1.0 / (4.0 * std::numbers::pi);
inline constexpr double kAnnulusDisc = 0.55;
inline constexpr double kShellOuter[2] = {0.3, 0.43};
inline constexpr double kShellInner[2] = {0.335, 0.39};

/// Distance from the origin to the nearest and farthest point of a closed box.
inline std::pair<double, double> radial_extent(const Box& b, int dim) {
  double near2 = 0.0;
  double far2 = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double n = std::max({b.lo[k], 0.0, -b.hi[k]});
    const double f = std::max(std::abs(b.lo[k]), std::abs(b.hi[k]));
    near2 += n * n;
    far2 += f * f;
  }
  return {std::sqrt(near2), std::sqrt(far2)};
}

inline double center_radius(const Box& b, int dim) {
  double r2 = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double c = 0.5 * (b.lo[k] + b.hi[k]);
    r2 += c * c;
  }
  return std::sqrt(r2);
}

inline bool intersects_ball(const Box& b, int dim, double radius) {
  return radial_extent(b, dim).first <= radius;
}

inline bool intersects_shell(const Box& b, int dim, double r_in, double r_out) {
  const auto [near, far] = radial_extent(b, dim);
  return near <= r_out && far >= r_in;
}

inline bool inside_negative_orthant(const Box& b, int dim) {
  for (int k = 0; k < dim; ++k) {
    if (b.hi[k] > 0.0) return false;
  }
  return true;
}

}  // namespace geometry

/// Marks every leaf satisfying `pred(box)` and refines (with closure).
template <class Pred>
void refine_where(ForestMesh& mesh, Pred&& pred) {
  std::vector<NodeId> marked;
  for (NodeId n : mesh.leaf_nodes()) {
    if (pred(mesh.box(n))) marked.push_back(n);
  }
  mesh.refine_leaves(marked);
}

/// The 7-leaf example: refine the root, then its first child.
inline ForestMesh fig2_mesh() {
  ForestMesh mesh = ForestMesh::single_root(2);
  mesh.refine_all();
  const NodeId first = mesh.child(mesh.root(0), 0);
  mesh.refine_leaves(std::span<const NodeId>(&first, 1));
  return mesh;
}

inline ForestMesh build_sequence(SequenceKind kind, int L, int dim) {
  check_dim(dim);
  if (kind == SequenceKind::fig2) {
    if (dim != 2 || L != 2) throw std::invalid_argument("the fig2 preset is the fixed 2D mesh with L=2");
    return fig2_mesh();
  }
  if (L < 1) throw std::invalid_argument("L must be at least 1");
  if (kind == SequenceKind::annulus && L < 4) throw std::invalid_argument("annulus requires L >= 4");
  if (L > max_supported_level(dim)) throw std::invalid_argument("L exceeds the supported maximum level");

  ForestMesh mesh = ForestMesh::single_root(dim);
  switch (kind) {
    case SequenceKind::uniform:
      for (int s = 0; s < L; ++s) mesh.refine_all();
      break;
    case SequenceKind::circle:
      for (int s = 0; s < L; ++s) {
        refine_where(mesh, [dim](const Box& b) { return geometry::intersects_ball(b, dim, geometry::kCircleRadius); });
      }
      break;
    case SequenceKind::quadrant:
      mesh.refine_all();
      for (int s = 1; s < L; ++s) {
        refine_where(mesh, [dim](const Box& b) { return geometry::inside_negative_orthant(b, dim); });
      }
      break;
    case SequenceKind::annulus:
      for (int s = 0; s < L - 3; ++s) mesh.refine_all();
      refine_where(mesh, [dim](const Box& b) { return geometry::center_radius(b, dim) < geometry::kAnnulusDisc; });
      refine_where(mesh, [dim](const Box& b) {
        return geometry::intersects_shell(b, dim, geometry::kShellOuter[0], geometry::kShellOuter[1]);
      });
      refine_where(mesh, [dim](const Box& b) {
        return geometry::intersects_shell(b, dim, geometry::kShellInner[0], geometry::kShellInner[1]);
      });
      break;
    case SequenceKind::fig2:
      break;
  }
  return mesh;
}

}  // namespace lsmg
