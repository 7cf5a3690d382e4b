#pragma once

// Local-smoothing multigrid on the level meshes of a 2D forest.
//
// On level ℓ only the free S dofs are relaxed. The residual is formed on S
// and I rows from the strict-cell operators; L rows are passed down as they
// are (deferred). Level 0 is handled by the coarse solver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "lsmg/fem2d.hpp"
#include "lsmg/forest.hpp"

namespace lsmg {

enum class SmootherKind { jacobi, chebyshev_jacobi };

inline std::string_view to_string(SmootherKind k) { return k == SmootherKind::jacobi ? "jacobi" : "chebyshev"; }

struct SmootherConfig {
  SmootherKind kind = SmootherKind::chebyshev_jacobi;
  int steps = 1;  // m_ℓ
  double omega = 0.5;
  int degree = 5;
  double eig_lo = 0.08;
  double eig_hi = 1.2;
  int eig_iterations = 10;

  static SmootherConfig damped_jacobi() {
    SmootherConfig c;
    c.kind = SmootherKind::jacobi;
    c.steps = 4;
    return c;
  }

  void validate() const {
    if (steps < 1) throw std::invalid_argument("smoothing steps must be at least 1");
    if (degree < 1) throw std::invalid_argument("chebyshev degree must be at least 1");
    if (!(omega > 0.0 && omega <= 1.0)) throw std::invalid_argument("jacobi damping must lie in (0, 1]");
    if (!(eig_lo > 0.0 && eig_lo < eig_hi)) throw std::invalid_argument("eigenvalue range needs 0 < lo < hi");
    if (eig_iterations < 1) throw std::invalid_argument("eigenvalue estimate needs at least one iteration");
  }
};

enum class CoarseKind { direct, chebyshev };

inline std::string_view to_string(CoarseKind k) { return k == CoarseKind::direct ? "direct" : "chebyshev"; }

struct MultigridConfig {
  SmootherConfig smoother;
  CoarseKind coarse = CoarseKind::direct;
  double coarse_reduction = 1e-3;
};

/// Zero-mean start vector: −5.5, −4.5, …, 5.5, then repeat.
inline Vector seed_vector(Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = -5.5 + static_cast<double>(i % 12);
  return v;
}

inline Vector inverse_diagonal(const SparseMatrix& a) {
  Vector d = a.diagonal();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) throw std::domain_error("zero diagonal entry in row " + std::to_string(i));
    d[i] = 1.0 / d[i];
  }
  return d;
}

/// Rows and columns `idx` of `a` as a compact matrix.
inline SparseMatrix extract(const SparseMatrix& a, const std::vector<int>& idx) {
  std::vector<int> local(static_cast<std::size_t>(a.cols()), -1);
  for (std::size_t k = 0; k < idx.size(); ++k) local[static_cast<std::size_t>(idx[k])] = static_cast<int>(k);
  std::vector<Triplet> trip;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    for (SparseMatrix::InnerIterator it(a, idx[k]); it; ++it) {
      const int j = local[static_cast<std::size_t>(it.col())];
      if (j >= 0) trip.emplace_back(static_cast<int>(k), j, it.value());
    }
  }
  SparseMatrix out(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

struct RitzValues {
  double min = 0.0;
  double max = 0.0;
  int iterations = 0;
};

/// Jacobi-preconditioned CG on a·x = b from x = 0; extremal eigenvalues of
/// the Lanczos tridiagonal built from the CG coefficients. Stops after
/// `max_iter` steps, on breakdown, or once ‖r‖ ≤ rtol·‖b‖.
inline RitzValues cg_ritz_values(const SparseMatrix& a, const Vector& b, int max_iter, double rtol = 0.0) {
  const Vector dinv = inverse_diagonal(a);
  RitzValues out;
  if (a.rows() == 0) return out;
  Vector r = b;
  Vector z = dinv.cwiseProduct(r);
  Vector p = z;
  double rz = r.dot(z);
  const double bnorm = b.norm();
  std::vector<double> alpha;
  std::vector<double> beta;
  for (int k = 0; k < max_iter && rz > 0.0; ++k) {
    const Vector q = a * p;
    const double pq = p.dot(q);
    if (!(pq > 0.0)) break;
    const double al = rz / pq;
    alpha.push_back(al);
    r -= al * q;
    z = dinv.cwiseProduct(r);
    const double rz_new = r.dot(z);
    if (rz_new <= 0.0 || r.norm() <= rtol * bnorm) break;
    const double be = rz_new / rz;
    beta.push_back(be);
    p = z + be * p;
    rz = rz_new;
  }
  const auto m = static_cast<Eigen::Index>(alpha.size());
  out.iterations = static_cast<int>(m);
  if (m == 0) return out;
  Vector diag(m);
  Vector off(std::max<Eigen::Index>(m - 1, 0));
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    diag[k] = 1.0 / alpha[uk] + (k > 0 ? beta[uk - 1] / alpha[uk - 1] : 0.0);
    if (k + 1 < m) off[k] = std::sqrt(beta[uk]) / alpha[uk];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  out.min = es.eigenvalues()[0];
  out.max = es.eigenvalues()[m - 1];
  return out;
}

/// Largest eigenvalue of D⁻¹A estimated from a short CG run on the seed vector.
inline double estimate_lambda_max(const SparseMatrix& a, int iterations = 10) {
  if (a.rows() == 0) return 1.0;
  return cg_ritz_values(a, seed_vector(a.rows()), iterations).max;
}

struct ChebyshevParams {
  double lo = 0.0;
  double hi = 1.0;
  int degree = 1;
};

/// First-kind Chebyshev iteration for a·x = b preconditioned by D⁻¹, taking
/// x forward by `degree` matrix-vector products.
inline void chebyshev_iterate(const SparseMatrix& a, const Vector& dinv, const Vector& b, Vector& x,
                              const ChebyshevParams& c) {
  const double theta = 0.5 * (c.hi + c.lo);
  const double delta = 0.5 * (c.hi - c.lo);
  const double sigma = theta / delta;
  double rho = 1.0 / sigma;
  Vector r = dinv.cwiseProduct(b - a * x);
  Vector d = r / theta;
  x += d;
  for (int k = 1; k < c.degree; ++k) {
    const double rho_next = 1.0 / (2.0 * sigma - rho);
    r = dinv.cwiseProduct(b - a * x);
    d = (rho_next * rho) * d + (2.0 * rho_next / delta) * r;
    x += d;
    rho = rho_next;
  }
}

/// Relaxation on a compact system (the free S dofs of one level).
class LevelSmoother {
 public:
  LevelSmoother() = default;
  LevelSmoother(SparseMatrix a, const SmootherConfig& cfg) : a_(std::move(a)), cfg_(cfg) {
    cfg_.validate();
    if (a_.rows() == 0) return;
    dinv_ = inverse_diagonal(a_);
    if (cfg_.kind == SmootherKind::chebyshev_jacobi) lambda_max_ = estimate_lambda_max(a_, cfg_.eig_iterations);
  }

  const SparseMatrix& matrix() const { return a_; }
  const SmootherConfig& config() const { return cfg_; }
  double lambda_max() const { return lambda_max_; }
  ChebyshevParams chebyshev() const { return {cfg_.eig_lo * lambda_max_, cfg_.eig_hi * lambda_max_, cfg_.degree}; }

  void apply(const Vector& b, Vector& x) const {
    if (a_.rows() == 0) return;
    if (b.size() != a_.rows() || x.size() != a_.rows()) throw std::invalid_argument("smoother size mismatch");
    for (int s = 0; s < cfg_.steps; ++s) {
      if (cfg_.kind == SmootherKind::jacobi) {
        x += cfg_.omega * dinv_.cwiseProduct(b - a_ * x);
      } else {
        chebyshev_iterate(a_, dinv_, b, x, chebyshev());
      }
    }
  }

 private:
  SparseMatrix a_;
  Vector dinv_;
  SmootherConfig cfg_;
  double lambda_max_ = 1.0;
};

/// Chebyshev iteration with a degree chosen from the a-priori bound so that
/// the residual drops by `reduction` over the CG-estimated spectrum.
class ChebyshevSolver {
 public:
  ChebyshevSolver() = default;
  explicit ChebyshevSolver(SparseMatrix a, double reduction = 1e-3) : a_(std::move(a)) {
    if (!(reduction > 0.0 && reduction < 1.0)) throw std::invalid_argument("reduction must lie in (0, 1)");
    if (a_.rows() == 0) return;
    dinv_ = inverse_diagonal(a_);
    const RitzValues rv = cg_ritz_values(a_, seed_vector(a_.rows()), 10 * static_cast<int>(a_.rows()) + 10, 1e-3);
    if (!(rv.min > 0.0)) throw std::domain_error("coarse matrix is not positive definite");
    params_.lo = rv.min;
    params_.hi = 1.2 * rv.max;
    const double kappa = params_.hi / params_.lo;
    const double sigma = (std::sqrt(kappa) - 1.0) / (std::sqrt(kappa) + 1.0);
    params_.degree = sigma <= 0.0 ? 1 : std::max(1, static_cast<int>(std::ceil(std::log(reduction / 2.0) / std::log(sigma))));
  }

  const ChebyshevParams& params() const { return params_; }

  Vector solve(const Vector& b) const {
    Vector x = Vector::Zero(b.size());
    if (a_.rows() == 0) return x;
    chebyshev_iterate(a_, dinv_, b, x, params_);
    return x;
  }

 private:
  SparseMatrix a_;
  Vector dinv_;
  ChebyshevParams params_;
};

/// Level-0 solver acting on the free dofs of level 0.
class CoarseSolver {
 public:
  CoarseSolver() = default;
  CoarseSolver(const SparseMatrix& a_s, std::vector<int> free, CoarseKind kind, double reduction)
      : free_(std::move(free)), kind_(kind), n_(a_s.rows()) {
    if (free_.empty()) return;
    SparseMatrix a = extract(a_s, free_);
    if (kind_ == CoarseKind::chebyshev) {
      cheb_ = ChebyshevSolver(std::move(a), reduction);
      return;
    }
    llt_.compute(Eigen::MatrixXd(a));
    if (llt_.info() != Eigen::Success) throw std::domain_error("singular coarse matrix");
  }

  CoarseKind kind() const { return kind_; }

  Vector solve(const Vector& g) const {
    Vector x = Vector::Zero(n_);
    if (free_.empty()) return x;
    Vector b(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t k = 0; k < free_.size(); ++k) b[static_cast<Eigen::Index>(k)] = g[free_[k]];
    const Vector y = kind_ == CoarseKind::direct ? Vector(llt_.solve(b)) : cheb_.solve(b);
    for (std::size_t k = 0; k < free_.size(); ++k) x[free_[k]] = y[static_cast<Eigen::Index>(k)];
    return x;
  }

 private:
  std::vector<int> free_;
  CoarseKind kind_ = CoarseKind::direct;
  Eigen::Index n_ = 0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  ChebyshevSolver cheb_;
};

class MultigridHierarchy {
 public:
  struct Level {
    LevelSpace space;
    LevelOperators ops;
    Transfer transfer;          // from ℓ−1 to ℓ; empty on level 0
    std::vector<int> smoothed;  // free S dofs
    LevelSmoother smoother;
  };

  static MultigridHierarchy build(const ForestMesh& mesh, const MultigridConfig& cfg = {}) {
    cfg.smoother.validate();
    MultigridHierarchy h;
    h.cfg_ = cfg;
    for (int l = 0; l <= mesh.max_level(); ++l) {
      Level lv;
      lv.space = distribute_dofs(mesh, l);
      lv.ops = assemble_level(lv.space);
      if (l > 0) lv.transfer = build_transfer(mesh, h.levels_.back().space, lv.space);
      for (int i = 0; i < lv.space.n_dofs(); ++i) {
        if (lv.space.cls(i) == DofClass::S && !lv.space.is_dirichlet(i)) lv.smoothed.push_back(i);
      }
      lv.smoother = LevelSmoother(extract(lv.ops.a_s, lv.smoothed), cfg.smoother);
      h.levels_.push_back(std::move(lv));
    }
    const Level& l0 = h.levels_.front();
    h.coarse_ = CoarseSolver(l0.ops.a_s, l0.smoothed, cfg.coarse, cfg.coarse_reduction);
    return h;
  }

  int n_levels() const { return static_cast<int>(levels_.size()); }
  int max_level() const { return n_levels() - 1; }
  const Level& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  const LevelSpace& leaf_space() const { return levels_.back().space; }
  const MultigridConfig& config() const { return cfg_; }

  /// Relaxes the free S entries of x against g − A^{SI} x^I; all other
  /// entries are returned unchanged.
  void smooth(int l, Vector& x, const Vector& g) const {
    const Level& lv = level(l);
    const auto n = static_cast<Eigen::Index>(lv.space.n_dofs());
    if (x.size() != n || g.size() != n) throw std::invalid_argument("smooth: vector size does not match level");
    const Vector rhs = g - lv.ops.a_si * x;
    const auto m = static_cast<Eigen::Index>(lv.smoothed.size());
    Vector xs(m);
    Vector bs(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      xs[k] = x[lv.smoothed[static_cast<std::size_t>(k)]];
      bs[k] = rhs[lv.smoothed[static_cast<std::size_t>(k)]];
    }
    lv.smoother.apply(bs, xs);
    for (Eigen::Index k = 0; k < m; ++k) x[lv.smoothed[static_cast<std::size_t>(k)]] = xs[k];
  }

  Vector coarse_solve(const Vector& g0) const { return coarse_.solve(g0); }

  Vector vcycle(int l, const Vector& g) const {
    const Level& lv = level(l);
    if (g.size() != lv.space.n_dofs()) throw std::invalid_argument("vcycle: vector size does not match level");
    if (l == 0) return coarse_solve(g);
    Vector x = Vector::Zero(g.size());
    smooth(l, x, g);
    Vector r = g - lv.ops.a_s * x - lv.ops.a_si * x - lv.ops.a_is * x;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (lv.space.is_dirichlet(static_cast<int>(i))) r[i] = 0.0;
    }
    const Vector e = vcycle(l - 1, lv.transfer.r * r);
    x += lv.transfer.p * e;
    smooth(l, x, g);
    return x;
  }

  /// One V-cycle on the leaf level with constrained entries zeroed on input
  /// and output.
  Vector precondition(const Vector& r) const {
    const LevelSpace& sp = leaf_space();
    Vector g = r;
    zero_constrained(sp, g);
    Vector x = vcycle(max_level(), g);
    zero_constrained(sp, x);
    return x;
  }

 private:
  MultigridConfig cfg_;
  std::vector<Level> levels_;
  CoarseSolver coarse_;
};

struct SolveResult {
  Vector u;
  int iterations = 0;
  double initial_residual = 0.0;
  double final_residual = 0.0;
  bool converged = false;
  std::vector<double> history;  // ‖r_k‖, k = 0..iterations

  double reduction() const { return initial_residual == 0.0 ? 0.0 : final_residual / initial_residual; }
};

/// Preconditioned CG stopping at ‖b − A u‖₂ ≤ rtol·‖b‖₂ (recursive residual).
inline SolveResult pcg_solve(const SparseMatrix& a, const Vector& b, const std::function<Vector(const Vector&)>& prec,
                             double rtol = 1e-6, int max_iter = 200,
                             const std::function<void(int, double)>& log = {}) {
  SolveResult res;
  res.u = Vector::Zero(b.size());
  Vector r = b;
  res.initial_residual = r.norm();
  res.final_residual = res.initial_residual;
  res.history.push_back(res.initial_residual);
  if (log) log(0, res.initial_residual);
  const double target = rtol * res.initial_residual;
  if (res.initial_residual == 0.0) {
    res.converged = true;
    return res;
  }
  Vector z = prec(r);
  Vector p = z;
  double rz = r.dot(z);
  for (int k = 1; k <= max_iter; ++k) {
    const Vector q = a * p;
    const double alpha = rz / p.dot(q);
    res.u += alpha * p;
    r -= alpha * q;
    const double rn = r.norm();
    res.iterations = k;
    res.final_residual = rn;
    res.history.push_back(rn);
    if (log) log(k, rn);
    if (rn <= target) {
      res.converged = true;
      break;
    }
    z = prec(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return res;
}

}  // namespace lsmg
