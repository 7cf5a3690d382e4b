#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here reuses node ids, tallies or level
// operators from the library; only the mesh's leaf list is read.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "lsmg/forest.hpp"

namespace oracle {

using lsmg::CellRef;

struct BalanceTally {
  int p = 1;
  std::vector<std::vector<std::int64_t>> per_rank;  // [level][rank], strict level cells
  std::int64_t total = 0;
  std::int64_t w_sync = 0;
  std::int64_t w = 0;
  std::vector<std::int64_t> ghosts;    // per level
  std::vector<std::int64_t> children;  // per level
};

/// Leaf chunking by SFC position, ownership of every ancestor from the leaf
/// holding its lowest corner, tallies by explicit enumeration.
inline BalanceTally brute_force(const lsmg::ForestMesh& mesh, int p) {
  const int d = mesh.dim();
  std::vector<CellRef> leaves = mesh.leaves();
  std::sort(leaves.begin(), leaves.end(), [d](const CellRef& a, const CellRef& b) {
    if (a.tree_id != b.tree_id) return a.tree_id < b.tree_id;
    return lsmg::padded_key(a, d) < lsmg::padded_key(b, d);
  });
  const auto n = static_cast<std::int64_t>(leaves.size());
  std::map<CellRef, int> leaf_owner;
  for (std::int64_t i = 0, r = 0, start = 0; i < n; ++i) {
    const std::int64_t size = n / p + (r < n % p ? 1 : 0);
    if (i - start >= size) {
      ++r;
      start = i;
    }
    leaf_owner[leaves[static_cast<std::size_t>(i)]] = static_cast<int>(r);
  }
  std::map<CellRef, int> owner;
  for (const CellRef& leaf : leaves) {
    for (CellRef c = leaf;; c = lsmg::parent_of(c, d)) {
      if (owner.count(c) == 0) {
        CellRef probe = c;
        while (leaf_owner.count(probe) == 0) probe = lsmg::child_of(probe, 0, d);
        owner[c] = leaf_owner[probe];
      }
      if (c.level == 0) break;
    }
  }
  int L = 0;
  for (const auto& [c, r] : owner) L = std::max(L, c.level);
  BalanceTally t;
  t.p = p;
  t.per_rank.assign(static_cast<std::size_t>(L + 1), std::vector<std::int64_t>(static_cast<std::size_t>(p), 0));
  t.ghosts.assign(static_cast<std::size_t>(L + 1), 0);
  t.children.assign(static_cast<std::size_t>(L + 1), 0);
  for (const auto& [c, r] : owner) {
    ++t.per_rank[static_cast<std::size_t>(c.level)][static_cast<std::size_t>(r)];
    if (c.level > 0) {
      ++t.children[static_cast<std::size_t>(c.level)];
      if (owner.at(lsmg::parent_of(c, d)) != r) ++t.ghosts[static_cast<std::size_t>(c.level)];
    }
  }
  for (const auto& row : t.per_rank) {
    std::int64_t sum = 0;
    std::int64_t mx = 0;
    for (auto v : row) {
      sum += v;
      mx = std::max(mx, v);
    }
    t.total += sum;
    t.w_sync += (sum + p - 1) / p;
    t.w += mx;
  }
  return t;
}

/// Leaf pairs whose closed boxes touch, by floating-point geometry.
inline bool boxes_touch(const lsmg::Box& a, const lsmg::Box& b, int d) {
  for (int k = 0; k < d; ++k) {
    if (a.hi[k] < b.lo[k] || b.hi[k] < a.lo[k]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Textbook V-cycle on uniform grids of [-1,1]^2 with homogeneous Dirichlet
// data. Unknowns are the interior vertices, row-major with x fastest.

class PlainVcycle {
 public:
  PlainVcycle(int L, int degree, double lo, double hi, int eig_iterations)
      : L_(L), degree_(degree), lo_(lo), hi_(hi) {
    for (int l = 0; l <= L; ++l) lambda_.push_back(estimate(l, eig_iterations));
  }

  static int interior(int l) { return (1 << l) - 1; }

  /// Q1 stiffness: 8/3 on the diagonal, −1/3 to all eight neighbours.
  static Eigen::VectorXd apply(int l, const Eigen::VectorXd& x) {
    const int m = interior(l);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < m; ++i) {
        double s = 8.0 / 3.0 * x[j * m + i];
        for (int dj = -1; dj <= 1; ++dj) {
          for (int di = -1; di <= 1; ++di) {
            if (di == 0 && dj == 0) continue;
            const int ii = i + di;
            const int jj = j + dj;
            if (ii < 0 || jj < 0 || ii >= m || jj >= m) continue;
            s -= 1.0 / 3.0 * x[jj * m + ii];
          }
        }
        y[j * m + i] = s;
      }
    }
    return y;
  }

  static Eigen::VectorXd prolongate(int coarse, const Eigen::VectorXd& xc) {
    const int mc = interior(coarse);
    const int mf = interior(coarse + 1);
    auto at = [&](int i, int j) { return (i < 0 || j < 0 || i >= mc || j >= mc) ? 0.0 : xc[j * mc + i]; };
    Eigen::VectorXd xf(mf * mf);
    for (int j = 0; j < mf; ++j) {
      for (int i = 0; i < mf; ++i) {
        // fine index i sits at coarse position (i - 1) / 2
        const int ci = (i - 1) / 2;
        const int cj = (j - 1) / 2;
        const bool ox = (i % 2) == 1;
        const bool oy = (j % 2) == 1;
        double v = 0.0;
        if (ox && oy) v = at(ci, cj);
        else if (ox) v = 0.5 * (at(ci, (j / 2) - 1) + at(ci, j / 2));
        else if (oy) v = 0.5 * (at((i / 2) - 1, cj) + at(i / 2, cj));
        else v = 0.25 * (at(i / 2 - 1, j / 2 - 1) + at(i / 2, j / 2 - 1) + at(i / 2 - 1, j / 2) + at(i / 2, j / 2));
        xf[j * mf + i] = v;
      }
    }
    return xf;
  }

  static Eigen::VectorXd restrict_(int coarse, const Eigen::VectorXd& rf) {
    // transpose of prolongate, column by column
    const int mc = interior(coarse);
    Eigen::VectorXd out(mc * mc);
    for (int k = 0; k < mc * mc; ++k) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(mc * mc);
      e[k] = 1.0;
      out[k] = prolongate(coarse, e).dot(rf);
    }
    return out;
  }

  double lambda(int l) const { return lambda_[static_cast<std::size_t>(l)]; }

  void smooth(int l, Eigen::VectorXd& x, const Eigen::VectorXd& b) const {
    const double dinv = 3.0 / 8.0;
    const double lam = lambda(l);
    const double a = lo_ * lam;
    const double c = hi_ * lam;
    const double theta = 0.5 * (a + c);
    const double delta = 0.5 * (c - a);
    const double sigma = theta / delta;
    double rho = 1.0 / sigma;
    Eigen::VectorXd r = dinv * (b - apply(l, x));
    Eigen::VectorXd dir = r / theta;
    x += dir;
    for (int k = 1; k < degree_; ++k) {
      const double rho1 = 1.0 / (2.0 * sigma - rho);
      r = dinv * (b - apply(l, x));
      dir = rho1 * rho * dir + 2.0 * rho1 / delta * r;
      x += dir;
      rho = rho1;
    }
  }

  Eigen::VectorXd vcycle(int l, const Eigen::VectorXd& b) const {
    if (l == 0) return Eigen::VectorXd::Zero(0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    smooth(l, x, b);
    const Eigen::VectorXd r = b - apply(l, x);
    const Eigen::VectorXd e = vcycle(l - 1, restrict_(l - 1, r));
    if (l > 1) x += prolongate(l - 1, e);
    smooth(l, x, b);
    return x;
  }

 private:
  /// Lanczos values from 10 steps of Jacobi-preconditioned CG started on the
  /// zero-mean sawtooth vector.
  static double estimate(int l, int iterations) {
    const int n = interior(l) * interior(l);
    if (n == 0) return 1.0;
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r[i] = -5.5 + (i % 12);
    const double dinv = 3.0 / 8.0;
    Eigen::VectorXd z = dinv * r;
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    std::vector<double> al;
    std::vector<double> be;
    for (int k = 0; k < iterations; ++k) {
      const Eigen::VectorXd q = apply(l, p);
      const double a = rz / p.dot(q);
      al.push_back(a);
      r -= a * q;
      z = dinv * r;
      const double rz1 = r.dot(z);
      if (rz1 <= 0.0) break;
      be.push_back(rz1 / rz);
      p = z + be.back() * p;
      rz = rz1;
    }
    const int m = static_cast<int>(al.size());
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    for (int k = 0; k < m; ++k) {
      t(k, k) = 1.0 / al[static_cast<std::size_t>(k)] + (k > 0 ? be[static_cast<std::size_t>(k - 1)] / al[static_cast<std::size_t>(k - 1)] : 0.0);
      if (k + 1 < m) t(k, k + 1) = t(k + 1, k) = std::sqrt(be[static_cast<std::size_t>(k)]) / al[static_cast<std::size_t>(k)];
    }
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t).eigenvalues().maxCoeff();
  }

  int L_;
  int degree_;
  double lo_;
  double hi_;
  std::vector<double> lambda_;
};

}  // namespace oracle
