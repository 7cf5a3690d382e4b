#pragma once

// Parallel-complexity model for a synchronized multigrid cycle over a
// partitioned hierarchy, and the level-transfer communication metric.
//
// With N_ℓ cells on level ℓ and N_{ℓ,p} of them owned by rank p:
//   W_opt  = (W_0 + Σ_{ℓ≥1} N_ℓ) / p
//   W_sync = W_0' + Σ_{ℓ≥1} ceil(N_ℓ / p)
//   W      = W_0' + Σ_{ℓ≥1} max_p N_{ℓ,p}
//   η      = W_opt / W
// By default level 0 is treated like every other level (W_0 = N_0 in W_opt,
// ceil(N_0/p) in W_sync, max_p N_{0,p} in W). A fixed coarse-solver cost c
// enters W_opt as c/p and W_sync, W as c.
//
// All tallies are exact integers; W_opt and η are exact rationals.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lsmg/forest.hpp"
#include "lsmg/partition.hpp"
#include "lsmg/sequences.hpp"

namespace lsmg {

class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {
    if (den == 0) throw std::domain_error("zero denominator");
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  std::string str() const { return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_); }

  friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    const __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
    const __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

struct BalanceReport {
  int n_ranks = 1;
  std::int64_t leaves = 0;
  std::int64_t total_cells = 0;
  std::vector<std::int64_t> cells_per_level;  // N_ℓ
  std::int64_t coarse_work = 0;               // W_0 as it enters W and W_sync
  Rational w_opt;
  std::int64_t w_sync = 0;
  std::vector<std::int64_t> level_work;  // W_ℓ; entry 0 is the coarse term
  std::int64_t w = 0;
  Rational eta;
};

/// `coarse_cost` overrides W_0 with a fixed, non-distributed coarse-solver cost.
inline BalanceReport compute_balance(const ForestMesh& mesh, const HierarchyPartition& part,
                                     std::optional<std::int64_t> coarse_cost = std::nullopt) {
  if (part.n_levels() != mesh.max_level() + 1) throw std::invalid_argument("partition does not match the mesh");
  const std::int64_t p = part.n_ranks();
  BalanceReport rep;
  rep.n_ranks = part.n_ranks();
  rep.leaves = static_cast<std::int64_t>(mesh.n_leaves());
  rep.total_cells = static_cast<std::int64_t>(mesh.n_nodes());

  std::int64_t total_work = 0;
  for (int l = 0; l < part.n_levels(); ++l) {
    const std::int64_t n_l = part.n_cells(l);
    const auto& tally = part.level_tally(l);
    const std::int64_t w_l = *std::max_element(tally.begin(), tally.end());
    const std::int64_t ceil_l = (n_l + p - 1) / p;
    rep.cells_per_level.push_back(n_l);
    if (l == 0 && coarse_cost) {
      if (*coarse_cost < 0) throw std::invalid_argument("coarse cost must be non-negative");
      rep.coarse_work = *coarse_cost;
      rep.level_work.push_back(*coarse_cost);
      total_work += *coarse_cost;
      rep.w_sync += *coarse_cost;
      rep.w += *coarse_cost;
      continue;
    }
    if (l == 0) rep.coarse_work = w_l;
    rep.level_work.push_back(w_l);
    total_work += n_l;
    rep.w_sync += ceil_l;
    rep.w += w_l;
  }
  rep.w_opt = Rational(total_work, p);
  rep.eta = rep.w == 0 ? Rational(1) : Rational(total_work, p * rep.w);
  return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace detail {

/// Runs fn(i) for i in [0, n) on a small worker pool. Results must be written
/// to pre-sized, index-addressed storage so output order stays deterministic.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1U, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

struct CommunicationSummary {
  std::int64_t ghosts = 0;
  std::int64_t children = 0;
  double ratio() const { return children == 0 ? 0.0 : static_cast<double>(ghosts) / static_cast<double>(children); }
};

inline CommunicationSummary communication_summary(const ForestMesh& mesh, const HierarchyPartition& part) {
  CommunicationSummary s;
  for (const GhostCount& g : ghost_children_per_level(mesh, part)) {
    s.ghosts += g.ghosts;
    s.children += g.children;
  }
  return s;
}

struct EfficiencyRow {
  SequenceKind kind{};
  int dim = 2;
  int L = 0;
  int p = 1;
  BalanceReport report;
  CommunicationSummary comm;

  /// Fewer than 1000 leaves per rank.
  bool under_1000() const { return report.leaves < 1000 * static_cast<std::int64_t>(p); }
  double cells_per_rank() const { return static_cast<double>(report.leaves) / p; }
};

struct SweepRequest {
  SequenceKind kind = SequenceKind::uniform;
  int dim = 2;
  std::vector<int> levels;
  std::vector<int> ranks;
  std::optional<std::int64_t> coarse_cost;
};

/// One row per (L, p), ordered by L then p as given. Each mesh is built once
/// and shared read-only by the per-p evaluations.
inline std::vector<EfficiencyRow> efficiency_sweep(const SweepRequest& req) {
  for (int p : req.ranks) {
    if (p < 1) throw std::invalid_argument("number of ranks must be at least 1");
  }
  std::vector<EfficiencyRow> rows;
  for (int L : req.levels) {
    const ForestMesh mesh = build_sequence(req.kind, L, req.dim);
    std::vector<EfficiencyRow> block(req.ranks.size());
    detail::parallel_for(req.ranks.size(), [&](std::size_t i) {
      const HierarchyPartition part = partition_hierarchy(mesh, req.ranks[i]);
      EfficiencyRow& row = block[i];
      row.kind = req.kind;
      row.dim = req.dim;
      row.L = L;
      row.p = req.ranks[i];
      row.report = compute_balance(mesh, part, req.coarse_cost);
      row.comm = communication_summary(mesh, part);
    });
    rows.insert(rows.end(), block.begin(), block.end());
  }
  return rows;
}

inline std::vector<EfficiencyRow> communication_sweep(const SweepRequest& req) { return efficiency_sweep(req); }

inline constexpr const char* kEfficiencySchema = "# schema: lsmg-efficiency v1";
inline constexpr const char* kEfficiencyHeader =
    "kind,dim,L,p,leaves,total_cells,W_opt,W_sync,W,eta,comm_ratio,under_1000_flag";
inline constexpr const char* kCommSchema = "# schema: lsmg-commratio v1";
inline constexpr const char* kCommHeader = "kind,dim,L,p,leaves,ghost_children,total_children,comm_ratio";

inline void write_efficiency_csv(std::ostream& os, const std::vector<EfficiencyRow>& rows) {
  os << kEfficiencySchema << '\n' << kEfficiencyHeader << '\n';
  for (const auto& r : rows) {
    os << to_string(r.kind) << ',' << r.dim << ',' << r.L << ',' << r.p << ',' << r.report.leaves << ','
       << r.report.total_cells << ',' << detail::fmt6(r.report.w_opt.to_double()) << ',' << r.report.w_sync << ','
       << r.report.w << ',' << detail::fmt6(r.report.eta.to_double()) << ',' << detail::fmt6(r.comm.ratio()) << ','
       << (r.under_1000() ? 1 : 0) << '\n';
  }
}

inline void write_commratio_csv(std::ostream& os, const std::vector<EfficiencyRow>& rows) {
  os << kCommSchema << '\n' << kCommHeader << '\n';
  for (const auto& r : rows) {
    os << to_string(r.kind) << ',' << r.dim << ',' << r.L << ',' << r.p << ',' << r.report.leaves << ','
       << r.comm.ghosts << ',' << r.comm.children << ',' << detail::fmt6(r.comm.ratio()) << '\n';
  }
}

}  // namespace lsmg
