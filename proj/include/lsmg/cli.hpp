#pragma once

// Command-line driver. All options are global long flags; the subcommand
// picks the run. A key=value file given by --config supplies any option not
// set on the command line, including `command`, so a saved RunConfig text
// replays the run on its own.
//
// Exit codes: 0 success, 2 configuration error, 3 solver did not converge.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lsmg/balance_model.hpp"
#include "lsmg/fem2d.hpp"
#include "lsmg/gmg.hpp"
#include "lsmg/partition.hpp"
#include "lsmg/sequences.hpp"

namespace lsmg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNoConvergence = 3;

inline constexpr const char* kSolveSchema = "# schema: lsmg-solve v1";
inline constexpr const char* kMeshSchema = "# schema: lsmg-mesh v1";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  SequenceKind kind = SequenceKind::uniform;
  int dim = 2;
  std::vector<int> levels;
  std::vector<int> ranks;
  std::optional<std::int64_t> coarse_cost;
  SmootherKind smoother = SmootherKind::chebyshev_jacobi;
  int steps = 0;  // 0: 1 for chebyshev, 4 for jacobi
  double omega = 0.5;
  int degree = 5;
  double eig_lo = 0.08;
  double eig_hi = 1.2;
  int eig_iterations = 10;
  CoarseKind coarse = CoarseKind::direct;
  double rtol = 1e-6;
  int max_iter = 200;
  std::string output;  // empty: standard output
  bool deterministic = true;

  SmootherConfig smoother_config() const {
    SmootherConfig s;
    s.kind = smoother;
    s.steps = steps > 0 ? steps : (smoother == SmootherKind::jacobi ? 4 : 1);
    s.omega = omega;
    s.degree = degree;
    s.eig_lo = eig_lo;
    s.eig_hi = eig_hi;
    s.eig_iterations = eig_iterations;
    return s;
  }

  std::string to_text() const;
  static RunConfig from_text(const std::string& text);
  void validate() const;
};

namespace detail {

inline std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

/// "5", "3,4,7" or "3..7".
inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoi(item));
      } else {
        const int a = std::stoi(item.substr(0, dots));
        const int b = std::stoi(item.substr(dots + 2));
        if (b < a) throw ConfigError("empty range " + item);
        for (int v = a; v <= b; ++v) out.push_back(v);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("not an integer list: " + text);
    }
  }
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Bindings {
  std::string kind = "uniform";
  std::string levels;
  std::string ranks;
  std::string smoother = "chebyshev";
  std::string coarse = "direct";
  std::string command;
  std::optional<std::int64_t> coarse_cost;
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"efficiency", "commratio", "solve", "dump-mesh"};
  return names;
}

/// Registers every option on `app`, bound to `cfg` (numeric fields) and `b`
/// (fields that need post-processing).
inline void bind(CLI::App& app, RunConfig& cfg, Bindings& b) {
  app.add_option("--command", b.command, "run to perform when no subcommand is given (config files)")
      ->check(CLI::IsMember(command_names()));
  app.add_option("--kind", b.kind, "mesh sequence")
      ->check(CLI::IsMember({"uniform", "circle", "quadrant", "annulus", "fig2"}))
      ->capture_default_str();
  app.add_option("--dim", cfg.dim, "space dimension (2 or 3)")->check(CLI::IsMember({2, 3}))->capture_default_str();
  app.add_option("--L", b.levels, "finest level: 5, 3,4,5 or 3..7")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::Join);
  app.add_option("--p", b.ranks, "simulated rank counts: 4,16,64")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::Join);
  app.add_option("--coarse-cost", b.coarse_cost, "fixed coarse-solver work W0 (default: level 0 cells)");
  app.add_option("--smoother", b.smoother, "chebyshev or jacobi")
      ->check(CLI::IsMember({"chebyshev", "jacobi"}))
      ->capture_default_str();
  app.add_option("--m", cfg.steps, "smoothing steps per level (default 1 chebyshev, 4 jacobi)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--omega", cfg.omega, "jacobi damping")->capture_default_str();
  app.add_option("--degree", cfg.degree, "chebyshev degree")->capture_default_str();
  app.add_option("--eig-lo", cfg.eig_lo, "lower end of the smoothed range, times lambda_max")->capture_default_str();
  app.add_option("--eig-hi", cfg.eig_hi, "upper end of the smoothed range, times lambda_max")->capture_default_str();
  app.add_option("--eig-iterations", cfg.eig_iterations, "CG steps for the lambda_max estimate")
      ->capture_default_str();
  app.add_option("--coarse", b.coarse, "coarse solver: direct or chebyshev")
      ->check(CLI::IsMember({"direct", "chebyshev"}))
      ->capture_default_str();
  app.add_option("--rtol", cfg.rtol, "CG relative tolerance")->capture_default_str();
  app.add_option("--max-iter", cfg.max_iter, "CG iteration cap")->capture_default_str();
  app.add_option("--output", cfg.output, "output file (default: standard output)");
  app.add_option("--deterministic", cfg.deterministic, "always true; runs involve no randomness")
      ->capture_default_str();
}

inline void finish(RunConfig& cfg, const Bindings& b, const std::string& subcommand) {
  cfg.command = subcommand.empty() ? b.command : subcommand;
  if (!subcommand.empty() && !b.command.empty() && b.command != subcommand) {
    throw ConfigError("subcommand " + subcommand + " conflicts with command=" + b.command);
  }
  cfg.kind = *parse_sequence_kind(b.kind);
  cfg.levels = b.levels.empty() ? std::vector<int>{} : parse_int_list(b.levels);
  cfg.ranks = b.ranks.empty() ? std::vector<int>{} : parse_int_list(b.ranks);
  cfg.smoother = b.smoother == "jacobi" ? SmootherKind::jacobi : SmootherKind::chebyshev_jacobi;
  cfg.coarse = b.coarse == "chebyshev" ? CoarseKind::chebyshev : CoarseKind::direct;
  cfg.coarse_cost = b.coarse_cost;
}

inline std::string subcommand_of(const CLI::App& app) {
  for (const CLI::App* s : app.get_subcommands()) return s->get_name();
  return {};
}

}  // namespace detail

inline void RunConfig::validate() const {
  const auto& names = detail::command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    throw ConfigError("no command given (efficiency, commratio, solve, dump-mesh)");
  }
  if (!deterministic) throw ConfigError("runs are always deterministic");
  if (dim != 2 && dim != 3) throw ConfigError("dim must be 2 or 3");
  if (kind == SequenceKind::fig2) {
    if (dim != 2) throw ConfigError("fig2 is a 2D mesh");
    for (int L : levels) {
      if (L != 2) throw ConfigError("fig2 has L=2");
    }
  } else if (levels.empty()) {
    throw ConfigError("--L is required");
  }
  for (int L : levels) {
    if (L < 1 || L > max_supported_level(dim)) throw ConfigError("L=" + std::to_string(L) + " out of range");
    if (kind == SequenceKind::annulus && L < 4) throw ConfigError("annulus needs L >= 4");
  }
  for (int p : ranks) {
    if (p < 1) throw ConfigError("rank counts must be positive");
  }
  if ((command == "efficiency" || command == "commratio") && ranks.empty()) throw ConfigError("--p is required");
  if (command == "dump-mesh" && ranks.size() > 1) throw ConfigError("dump-mesh takes at most one rank count");
  if (command == "dump-mesh" && levels.size() > 1) throw ConfigError("dump-mesh takes one L");
  if (coarse_cost && *coarse_cost < 0) throw ConfigError("coarse cost must be non-negative");
  if (command == "solve") {
    if (dim != 2) throw ConfigError("solve supports dim=2 only");
    if (!(rtol > 0.0 && rtol < 1.0)) throw ConfigError("rtol must lie in (0, 1)");
    if (max_iter < 1) throw ConfigError("max-iter must be positive");
    try {
      smoother_config().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

inline std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "command=" << command << '\n';
  os << "kind=" << to_string(kind) << '\n';
  os << "dim=" << dim << '\n';
  if (!levels.empty()) os << "L=" << detail::join(levels) << '\n';
  if (!ranks.empty()) os << "p=" << detail::join(ranks) << '\n';
  if (coarse_cost) os << "coarse-cost=" << *coarse_cost << '\n';
  os << "smoother=" << to_string(smoother) << '\n';
  os << "m=" << smoother_config().steps << '\n';
  os << "omega=" << detail::fmt_double(omega) << '\n';
  os << "degree=" << degree << '\n';
  os << "eig-lo=" << detail::fmt_double(eig_lo) << '\n';
  os << "eig-hi=" << detail::fmt_double(eig_hi) << '\n';
  os << "eig-iterations=" << eig_iterations << '\n';
  os << "coarse=" << to_string(coarse) << '\n';
  os << "rtol=" << detail::fmt_double(rtol) << '\n';
  os << "max-iter=" << max_iter << '\n';
  if (!output.empty()) os << "output=" << output << '\n';
  os << "deterministic=" << (deterministic ? "true" : "false") << '\n';
  return os.str();
}

inline RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  detail::Bindings b;
  CLI::App app;
  detail::bind(app, cfg, b);
  std::istringstream is(text);
  try {
    app.parse_from_stream(is);
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  detail::finish(cfg, b, {});
  return cfg;
}

// ---------------------------------------------------------------------------
// Runs

inline SweepRequest sweep_request(const RunConfig& cfg) {
  SweepRequest req;
  req.kind = cfg.kind;
  req.dim = cfg.dim;
  req.levels = cfg.levels.empty() ? std::vector<int>{2} : cfg.levels;
  req.ranks = cfg.ranks;
  req.coarse_cost = cfg.coarse_cost;
  return req;
}

inline int run_efficiency(const RunConfig& cfg, std::ostream& out) {
  write_efficiency_csv(out, efficiency_sweep(sweep_request(cfg)));
  return kExitOk;
}

inline int run_commratio(const RunConfig& cfg, std::ostream& out) {
  write_commratio_csv(out, communication_sweep(sweep_request(cfg)));
  return kExitOk;
}

inline int run_dump_mesh(const RunConfig& cfg, std::ostream& out) {
  const int L = cfg.levels.empty() ? 2 : cfg.levels.front();
  const ForestMesh mesh = build_sequence(cfg.kind, L, cfg.dim);
  out << kMeshSchema << '\n';
  out << "# tree level morton" << (cfg.ranks.empty() ? "" : " owner") << '\n';
  if (cfg.ranks.empty()) {
    write_mesh_dump(out, mesh);
  } else {
    const HierarchyPartition part = partition_hierarchy(mesh, cfg.ranks.front());
    write_mesh_dump(out, mesh, &part);
  }
  return kExitOk;
}

struct SolveSummary {
  int levels = 0;
  int dofs = 0;
  int iterations = 0;
  double reduction = 0.0;
  bool converged = false;
};

/// Poisson problem −Δu = 1 with homogeneous Dirichlet data on the chosen mesh.
inline SolveSummary solve_poisson(const ForestMesh& mesh, const RunConfig& cfg,
                                  const std::function<void(int, double)>& log = {}) {
  MultigridConfig mg;
  mg.smoother = cfg.smoother_config();
  mg.coarse = cfg.coarse;
  const MultigridHierarchy h = MultigridHierarchy::build(mesh, mg);
  const LeafSystem sys = assemble_leaf(h.leaf_space(), [](double, double) { return 1.0; });
  const SolveResult res = pcg_solve(
      sys.a, sys.b, [&h](const Vector& r) { return h.precondition(r); }, cfg.rtol, cfg.max_iter, log);
  return {h.n_levels(), h.leaf_space().n_dofs(), res.iterations, res.reduction(), res.converged};
}

inline int run_solve(const RunConfig& cfg, std::ostream& out) {
  int code = kExitOk;
  out << kSolveSchema << '\n';
  for (int L : cfg.levels.empty() ? std::vector<int>{2} : cfg.levels) {
    const ForestMesh mesh = build_sequence(cfg.kind, L, 2);
    out << "# kind=" << to_string(cfg.kind) << " L=" << L << " smoother=" << to_string(cfg.smoother)
        << " coarse=" << to_string(cfg.coarse) << '\n';
    out << "iter,residual\n";
    const SolveSummary s =
        solve_poisson(mesh, cfg, [&out](int k, double r) { out << k << ',' << detail::fmt6(r) << '\n'; });
    out << "levels,dofs,iterations,reduction\n";
    out << s.levels << ',' << s.dofs << ',' << s.iterations << ',' << detail::fmt6(s.reduction) << '\n';
    if (!s.converged) code = kExitNoConvergence;
  }
  return code;
}

inline int run(const RunConfig& cfg, std::ostream& out) {
  if (cfg.command == "efficiency") return run_efficiency(cfg, out);
  if (cfg.command == "commratio") return run_commratio(cfg, out);
  if (cfg.command == "solve") return run_solve(cfg, out);
  return run_dump_mesh(cfg, out);
}

/// Parses argv (without the program name handling done by CLI11) and runs.
inline int run_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  detail::Bindings b;
  CLI::App app("Local-smoothing multigrid: partition efficiency model and 2D Poisson solver", "lsmg");
  detail::bind(app, cfg, b);
  app.set_config("--config", "", "key=value file supplying options not given on the command line");
  app.require_subcommand(0, 1);
  app.add_subcommand("efficiency", "partitioning efficiency sweep (CSV)")->fallthrough();
  app.add_subcommand("commratio", "level-transfer communication ratio sweep (CSV)")->fallthrough();
  app.add_subcommand("solve", "Poisson solve with the multigrid-preconditioned CG (log + summary)")->fallthrough();
  app.add_subcommand("dump-mesh", "leaf list `tree level morton [owner]`")->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }
  try {
    detail::finish(cfg, b, detail::subcommand_of(app));
    cfg.validate();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    if (cfg.output.empty()) return run(cfg, out);
    std::ofstream file(cfg.output);
    if (!file) {
      err << "error: cannot open " << cfg.output << '\n';
      return kExitConfig;
    }
    return run(cfg, file);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace lsmg
