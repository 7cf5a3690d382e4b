#include <catch_amalgamated.hpp>

#include <random>

#include <Eigen/Dense>

#include "lsmg/gmg.hpp"
#include "lsmg/sequences.hpp"
#include "oracles.hpp"

using namespace lsmg;

namespace {

Vector random_vector(Eigen::Index n, std::mt19937& rng) {
  std::normal_distribution<double> nd;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

/// Dense λ_max(D⁻¹A) through the symmetric form D^{-1/2} A D^{-1/2}.
Eigen::VectorXd jacobi_spectrum(const SparseMatrix& a) {
  const Eigen::MatrixXd d = Eigen::MatrixXd(a);
  const Eigen::VectorXd s = d.diagonal().cwiseSqrt().cwiseInverse();
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.asDiagonal() * d * s.asDiagonal()).eigenvalues();
}

}  // namespace

TEST_CASE("seed vector", "[gmg]") {
  const Vector v = seed_vector(30);
  CHECK(v[0] == -5.5);
  CHECK(v[1] == -4.5);
  CHECK(v[11] == 5.5);
  CHECK(v[12] == -5.5);
  CHECK(v.head(24).sum() == 0.0);
}

TEST_CASE("lambda_max estimate", "[gmg]") {
  SparseMatrix d(5, 5);
  for (int i = 0; i < 5; ++i) d.insert(i, i) = 1.0 + i;
  CHECK(estimate_lambda_max(d) == Catch::Approx(1.0));

  const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(SequenceKind::uniform, 3, 2));
  const SparseMatrix& a = h.level(3).smoother.matrix();
  const double exact = jacobi_spectrum(a).maxCoeff();
  const double est = h.level(3).smoother.lambda_max();
  CHECK(est >= 0.8 * exact);
  CHECK(est <= 1.05 * exact);

  SparseMatrix z(2, 2);
  z.insert(0, 0) = 1.0;
  z.insert(1, 0) = 0.5;
  CHECK_THROWS_AS(estimate_lambda_max(z), std::domain_error);
}

TEST_CASE("Jacobi relaxation", "[gmg]") {
  SmootherConfig cfg;
  cfg.kind = SmootherKind::jacobi;
  cfg.omega = 1.0;
  SparseMatrix d(3, 3);
  d.insert(0, 0) = 2.0;
  d.insert(1, 1) = 4.0;
  d.insert(2, 2) = 0.5;
  const LevelSmoother s(d, cfg);
  Vector x = Vector::Zero(3);
  const Vector b(Vector::LinSpaced(3, 1.0, 3.0));
  s.apply(b, x);
  CHECK((d * x - b).norm() < 1e-15);

  const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(SequenceKind::uniform, 3, 2), {SmootherConfig::damped_jacobi()});
  const SparseMatrix& a = h.level(3).smoother.matrix();
  Vector xs = Vector::LinSpaced(a.rows(), -1.0, 1.0);
  const Vector before = xs;
  h.level(3).smoother.apply(a * xs, xs);
  CHECK((xs - before).norm() == 0.0);
}

TEST_CASE("Chebyshev smoother matches the polynomial filter", "[gmg]") {
  const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(SequenceKind::uniform, 3, 2));
  const LevelSmoother& s = h.level(3).smoother;
  const SparseMatrix& a = s.matrix();
  const ChebyshevParams c = s.chebyshev();
  CHECK(c.degree == 5);
  CHECK(c.lo == Catch::Approx(0.08 * s.lambda_max()));
  CHECK(c.hi == Catch::Approx(1.2 * s.lambda_max()));

  // x* = A⁻¹ b; error after one application is p(D⁻¹A) e0 with
  // p(t) = T_k((θ − t)/δ) / T_k(θ/δ)
  const Eigen::MatrixXd ad = Eigen::MatrixXd(a);
  const Eigen::VectorXd dsq = ad.diagonal().cwiseSqrt();
  const Eigen::MatrixXd sym = dsq.cwiseInverse().asDiagonal() * ad * dsq.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const double theta = 0.5 * (c.hi + c.lo);
  const double delta = 0.5 * (c.hi - c.lo);
  auto cheb = [](int k, double t) { return std::abs(t) <= 1 ? std::cos(k * std::acos(t)) : std::cosh(k * std::acosh(std::abs(t))) * ((t < 0 && k % 2) ? -1 : 1); };
  Eigen::VectorXd pl(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < pl.size(); ++i) pl[i] = cheb(c.degree, (theta - es.eigenvalues()[i]) / delta) / cheb(c.degree, theta / delta);
  const Eigen::MatrixXd filter = dsq.cwiseInverse().asDiagonal() * es.eigenvectors() * pl.asDiagonal() *
                                 es.eigenvectors().transpose() * dsq.asDiagonal();

  std::mt19937 rng(7);
  const Vector xstar = random_vector(a.rows(), rng);
  const Vector b = a * xstar;
  const Vector x0 = random_vector(a.rows(), rng);
  Vector x = x0;
  s.apply(b, x);
  const Vector expect = xstar + filter * (x0 - xstar);
  CHECK((x - expect).norm() <= 1e-12 * (x0 - xstar).norm());

  // damping bound on the target range
  const double bound = 1.0 / cheb(c.degree, theta / delta);
  for (Eigen::Index i = 0; i < pl.size(); ++i) {
    const double lam = es.eigenvalues()[i];
    if (lam >= c.lo && lam <= c.hi) CHECK(std::abs(pl[i]) <= bound * (1 + 1e-12));
  }
}

TEST_CASE("smoothing touches only free S entries", "[gmg]") {
  const ForestMesh m = build_sequence(SequenceKind::circle, 6, 2);
  for (const SmootherConfig& cfg : {SmootherConfig{}, SmootherConfig::damped_jacobi()}) {
    const MultigridHierarchy h = MultigridHierarchy::build(m, {cfg});
    std::mt19937 rng(3);
    for (int l = 1; l <= h.max_level(); ++l) {
      const LevelSpace& sp = h.level(l).space;
      Vector x = random_vector(sp.n_dofs(), rng);
      const Vector before = x;
      h.smooth(l, x, random_vector(sp.n_dofs(), rng));
      int changed = 0;
      for (int i = 0; i < sp.n_dofs(); ++i) {
        if (sp.cls(i) != DofClass::S || sp.is_dirichlet(i)) CHECK(x[i] == before[i]);
        else changed += x[i] != before[i] ? 1 : 0;
      }
      CHECK(changed == static_cast<int>(h.level(l).smoothed.size()));
    }
    Vector wrong = Vector::Zero(3);
    CHECK_THROWS_AS(h.smooth(1, wrong, wrong), std::invalid_argument);
  }
}

TEST_CASE("V-cycle is linear and zero-preserving", "[gmg]") {
  const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(SequenceKind::quadrant, 5, 2));
  std::mt19937 rng(11);
  for (int l = 0; l <= h.max_level(); ++l) {
    const auto n = h.level(l).space.n_dofs();
    CHECK(h.vcycle(l, Vector::Zero(n)).norm() == 0.0);
    const Vector g1 = random_vector(n, rng);
    const Vector g2 = random_vector(n, rng);
    const Vector lhs = h.vcycle(l, 2.5 * g1 - 0.75 * g2);
    const Vector rhs = 2.5 * h.vcycle(l, g1) - 0.75 * h.vcycle(l, g2);
    CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm() + 1e-300);
  }
  CHECK(h.vcycle(0, Vector::Ones(4)).norm() == 0.0);  // the root has no free dofs
}

TEST_CASE("local smoothing on uniform meshes is the textbook V-cycle", "[gmg]") {
  for (int L = 2; L <= 5; ++L) {
    const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(SequenceKind::uniform, L, 2));
    const oracle::PlainVcycle plain(L, 5, 0.08, 1.2, 10);
    const LevelSpace& sp = h.leaf_space();
    std::mt19937 rng(static_cast<unsigned>(L));
    Vector g = random_vector(sp.n_dofs(), rng);
    zero_constrained(sp, g);
    Eigen::VectorXd gi(h.level(L).smoothed.size());
    for (std::size_t k = 0; k < h.level(L).smoothed.size(); ++k) gi[static_cast<Eigen::Index>(k)] = g[h.level(L).smoothed[k]];
    const Vector ours = h.vcycle(L, g);
    const Eigen::VectorXd ref = plain.vcycle(L, gi);
    Eigen::VectorXd oi(ref.size());
    for (std::size_t k = 0; k < h.level(L).smoothed.size(); ++k) oi[static_cast<Eigen::Index>(k)] = ours[h.level(L).smoothed[k]];
    CHECK((oi - ref).norm() <= 1e-13 * ref.norm());
    CHECK(h.level(L).smoother.lambda_max() == Catch::Approx(plain.lambda(L)).epsilon(1e-12));
  }
}

TEST_CASE("preconditioner is symmetric", "[gmg]") {
  for (const ForestMesh& m : {build_sequence(SequenceKind::uniform, 4, 2), build_sequence(SequenceKind::circle, 5, 2),
                              build_sequence(SequenceKind::annulus, 6, 2)}) {
    for (const SmootherConfig& cfg : {SmootherConfig{}, SmootherConfig::damped_jacobi()}) {
      const MultigridHierarchy h = MultigridHierarchy::build(m, {cfg});
      std::mt19937 rng(5);
      for (int k = 0; k < 10; ++k) {
        Vector v = random_vector(h.leaf_space().n_dofs(), rng);
        Vector w = random_vector(h.leaf_space().n_dofs(), rng);
        zero_constrained(h.leaf_space(), v);
        zero_constrained(h.leaf_space(), w);
        const Vector mw = h.precondition(w);
        const Vector mv = h.precondition(v);
        CHECK(std::abs(v.dot(mw) - w.dot(mv)) <= 1e-12 * v.norm() * mw.norm());
      }
    }
  }
}

TEST_CASE("V-cycle iteration contracts uniformly", "[gmg]") {
  for (auto kind : {SequenceKind::uniform, SequenceKind::circle, SequenceKind::quadrant}) {
    for (int L = 3; L <= 6; ++L) {
      const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(kind, L, 2));
      const LeafSystem sys = assemble_leaf(h.leaf_space(), [](double x, double y) { return 1.0 + x - y * y; });
      Vector u = Vector::Zero(sys.b.size());
      for (int c = 0; c < 10; ++c) u += h.precondition(sys.b - sys.a * u);
      const double rate = std::pow((sys.b - sys.a * u).norm() / sys.b.norm(), 0.1);
      INFO(to_string(kind) << " L=" << L);
      CHECK(rate < 0.25);
    }
  }
}

TEST_CASE("coarse solvers", "[gmg]") {
  SparseMatrix one(1, 1);
  one.insert(0, 0) = 4.0;
  const CoarseSolver direct(one, {0}, CoarseKind::direct, 1e-3);
  CHECK(direct.solve(Vector::Constant(1, 2.0))[0] == 0.5);
  CHECK(direct.solve(Vector::Zero(1))[0] == 0.0);

  SparseMatrix singular(2, 2);
  singular.insert(0, 0) = 1.0;
  singular.insert(0, 1) = 1.0;
  singular.insert(1, 0) = 1.0;
  singular.insert(1, 1) = 1.0;
  CHECK_THROWS_AS(CoarseSolver(singular, {0, 1}, CoarseKind::direct, 1e-3), std::domain_error);

  // Chebyshev on a whole uniform level
  const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(SequenceKind::uniform, 3, 2));
  const SparseMatrix& a = h.level(3).smoother.matrix();
  const ChebyshevSolver cheb(a, 1e-3);
  std::mt19937 rng(2);
  for (int k = 0; k < 5; ++k) {
    const Vector g = random_vector(a.rows(), rng);
    const Vector x = cheb.solve(g);
    CHECK((g - a * x).norm() <= 1e-3 * g.norm());
  }
  CHECK(cheb.solve(Vector::Zero(a.rows())).norm() == 0.0);
}

TEST_CASE("Chebyshev coarse option inside the hierarchy", "[gmg]") {
  MultigridConfig cfg;
  cfg.coarse = CoarseKind::chebyshev;
  const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(SequenceKind::quadrant, 5, 2), cfg);
  const LeafSystem sys = assemble_leaf(h.leaf_space(), [](double, double) { return 1.0; });
  const SolveResult r = pcg_solve(sys.a, sys.b, [&h](const Vector& v) { return h.precondition(v); });
  CHECK(r.converged);
}

TEST_CASE("preconditioned CG", "[gmg]") {
  SparseMatrix a(2, 2);
  a.insert(0, 0) = 4.0;
  a.insert(0, 1) = 1.0;
  a.insert(1, 0) = 1.0;
  a.insert(1, 1) = 3.0;
  const Vector b(Eigen::Vector2d(1.0, 2.0));
  const SolveResult r = pcg_solve(a, b, [](const Vector& v) { return v; }, 1e-12);
  CHECK(r.converged);
  CHECK(r.iterations <= 2);
  CHECK((a * r.u - b).norm() <= 1e-12 * b.norm());

  const SolveResult zero = pcg_solve(a, Vector::Zero(2), [](const Vector& v) { return v; });
  CHECK(zero.iterations == 0);
  CHECK(zero.u.norm() == 0.0);

  const SolveResult capped = pcg_solve(a, b, [](const Vector& v) { return v; }, 1e-14, 1);
  CHECK_FALSE(capped.converged);
  CHECK(capped.iterations == 1);
  CHECK(capped.final_residual > 0.0);
}

TEST_CASE("iteration counts do not grow with refinement", "[gmg]") {
  std::vector<int> its;
  for (int L = 3; L <= 7; ++L) {
    const MultigridHierarchy h = MultigridHierarchy::build(build_sequence(SequenceKind::uniform, L, 2));
    const LeafSystem sys = assemble_leaf(h.leaf_space(), [](double, double) { return 1.0; });
    std::vector<std::pair<int, double>> log;
    const SolveResult r = pcg_solve(sys.a, sys.b, [&h](const Vector& v) { return h.precondition(v); }, 1e-6, 200,
                                    [&log](int k, double res) { log.emplace_back(k, res); });
    REQUIRE(r.converged);
    CHECK(static_cast<int>(log.size()) == r.iterations + 1);
    CHECK(r.reduction() <= 1e-6);
    its.push_back(r.iterations);
  }
  CHECK(*std::max_element(its.begin(), its.end()) - *std::min_element(its.begin(), its.end()) <= 2);
}

TEST_CASE("smoother configuration is validated", "[gmg]") {
  SmootherConfig c;
  c.degree = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.omega = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.eig_lo = 2.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
