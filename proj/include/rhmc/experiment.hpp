#pragma once

// Batch experiments: strategy-versus-oracle cost tables over common outer
// paths, and (quasi-)Monte Carlo convergence studies on fixed paths.

#include "rhmc/costeval.hpp"
#include "rhmc/market.hpp"
#include "rhmc/oracle.hpp"
#include "rhmc/strategies.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace rhmc {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOracleName = "ORACLE";

/// Calls f.template operator()<Dim>() with Dim = 1, 2 or Eigen::Dynamic.
template <typename F>
decltype(auto) with_dimension(int n, F&& f) {
  switch (n) {
    case 1: return f.template operator()<1>();
    case 2: return f.template operator()<2>();
    default: return f.template operator()<Eigen::Dynamic>();
  }
}

struct ExperimentConfig {
  nlohmann::json model;               // base model fields
  std::vector<nlohmann::json> sweep;  // per-row overrides merged onto `model`
  double horizon = 10.0;
  int steps = 100;
  Eigen::VectorXd x0;
  std::vector<std::string> strategies{"CC", "RHS", "RHMC_I", "RHMC_II", kOracleName};
  int outer_paths = 50;
  NoiseSpec::Kind sampler = NoiseSpec::Kind::Sobol;
  int inner_count = 200;
  std::uint64_t master_seed = 1;
  std::string output = "out";
  int threads = 1;
};

enum class Scale { Desk, Paper };

inline void apply_scale(ExperimentConfig& c, Scale s) {
  if (s == Scale::Desk) {
    c.steps = 100;
    c.outer_paths = 50;
    c.inner_count = 200;
  } else {
    c.steps = 1000;
    c.outer_paths = 200;
    c.inner_count = 500;
  }
}

namespace detail {

inline Eigen::VectorXd json_vector(const nlohmann::json& j, const std::string& field) {
  if (j.is_number()) return Eigen::VectorXd::Constant(1, j.get<double>());
  if (!j.is_array()) throw ConfigError(field + ": expected a number or an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(field + ": entries must be numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

// Square matrix from a scalar, nested rows, or a flat row-major array.
inline Eigen::MatrixXd json_matrix(const nlohmann::json& j, const std::string& field) {
  if (j.is_number()) return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw ConfigError(field + ": expected a square matrix");
  if (j[0].is_array()) {
    const std::size_t n = j.size();
    Eigen::MatrixXd m(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      if (!j[r].is_array() || j[r].size() != n) throw ConfigError(field + ": rows must all have length " + std::to_string(n));
      for (std::size_t c = 0; c < n; ++c) {
        if (!j[r][c].is_number()) throw ConfigError(field + ": entries must be numbers");
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
      }
    }
    return m;
  }
  const Eigen::VectorXd flat = json_vector(j, field);
  const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(flat.size()))));
  if (n * n != flat.size()) throw ConfigError(field + ": flat matrix length is not a square");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = flat(r * n + c);
  return m;
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::string fmt_list(const Eigen::MatrixXd& m) {
  std::string s;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!s.empty()) s += ';';
      s += fmt(m(r, c));
    }
  return s;
}

}  // namespace detail

/// Builds a validated model from JSON fields. Missing rho / varrho default to
/// identity, missing delta / beta to ones. "coordinated_variation": true ties
/// the single-asset drivers.
inline MarketModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ConfigError(std::string("model.") + key + ": missing");
    return j.at(key);
  };
  MarketModel::Params p;
  p.sigma_bar = detail::json_vector(need("sigma_bar"), "model.sigma_bar");
  const auto n = p.sigma_bar.size();
  const auto d = n * (n + 3) / 2;
  p.eta_bar = detail::json_matrix(need("eta_bar"), "model.eta_bar");
  const nlohmann::json& lam = need("lambda");
  if (!lam.is_number()) throw ConfigError("model.lambda: expected a number");
  p.lambda = lam.get<double>();
  p.rho = j.contains("rho") ? detail::json_matrix(j["rho"], "model.rho") : Eigen::MatrixXd::Identity(n, n);
  p.delta = j.contains("delta") ? detail::json_vector(j["delta"], "model.delta") : Eigen::VectorXd::Ones(d);
  p.beta = j.contains("beta") ? detail::json_vector(j["beta"], "model.beta") : Eigen::VectorXd::Ones(d);
  p.varrho = j.contains("varrho") ? detail::json_matrix(j["varrho"], "model.varrho") : Eigen::MatrixXd::Identity(d, d);
  if (j.contains("xi0")) p.xi0 = detail::json_vector(j["xi0"], "model.xi0");
  MarketModel model(std::move(p));
  if (j.value("coordinated_variation", false)) return coordinated_variation_model(model);
  return model;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig c;
  if (!j.contains("model")) throw ConfigError("model: missing");
  c.model = j["model"];
  if (j.contains("sweep")) {
    if (!j["sweep"].is_array()) throw ConfigError("sweep: expected an array of model overrides");
    for (const auto& row : j["sweep"]) {
      if (!row.is_object()) throw ConfigError("sweep: each entry must be an object");
      c.sweep.push_back(row);
    }
  }
  try {
    if (j.contains("grid")) {
      c.horizon = j["grid"].value("T", c.horizon);
      c.steps = j["grid"].value("M", c.steps);
    }
    if (!j.contains("x0")) throw ConfigError("x0: missing");
    c.x0 = detail::json_vector(j["x0"], "x0");
    if (j.contains("strategies")) c.strategies = j["strategies"].get<std::vector<std::string>>();
    c.outer_paths = j.value("outer_paths", c.outer_paths);
    if (j.contains("inner")) {
      const auto& in = j["inner"];
      const std::string sampler = in.value("sampler", std::string("qmc"));
      if (sampler == "mc") c.sampler = NoiseSpec::Kind::Pseudo;
      else if (sampler == "qmc") c.sampler = NoiseSpec::Kind::Sobol;
      else throw ConfigError("inner.sampler: expected \"mc\" or \"qmc\"");
      c.inner_count = in.value("N", c.inner_count);
    }
    c.master_seed = j.value("master_seed", c.master_seed);
    c.output = j.value("output", c.output);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(c.horizon > 0.0)) throw ConfigError("grid.T: must be positive");
  if (c.steps < 1) throw ConfigError("grid.M: must be at least 1");
  if (c.outer_paths < 1) throw ConfigError("outer_paths: must be at least 1");
  if (c.inner_count < 1) throw ConfigError("inner.N: must be at least 1");
  if (c.threads < 1) throw ConfigError("threads: must be at least 1");
  if (c.strategies.empty()) throw ConfigError("strategies: must not be empty");
  for (const auto& s : c.strategies)
    if (s != kOracleName && !parse_strategy(s)) throw ConfigError("strategies: unknown strategy \"" + s + "\"");
  // validate every row's model up front so config errors surface before any work
  for (std::size_t r = 0; r < std::max<std::size_t>(1, c.sweep.size()); ++r) {
    nlohmann::json m = c.model;
    if (!c.sweep.empty()) m.merge_patch(c.sweep[r]);
    const MarketModel model = model_from_json(m);
    if (model.assets() != c.x0.size()) throw ConfigError("x0: length must equal the number of assets");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

struct StrategyResult {
  std::string name;
  Summary summary;
  double pct_excess = 0.0;  // 100 (mean / oracle mean - 1)
  std::vector<double> costs;
};

struct ResultRow {
  nlohmann::json model;  // merged model fields for this row
  double diag_max = 0.0;  // max |lambda Xi_bar^{-1} Sigma_bar|
  std::vector<StrategyResult> strategies;  // ORACLE included when requested
  int projections = 0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<std::uint64_t> path_seeds;
  std::vector<std::uint64_t> inner_seeds;
  double seconds = 0.0;
};

inline std::uint64_t outer_path_seed(std::uint64_t master, int r) {
  return derive_seed({master, 0x6f75746572ULL, static_cast<std::uint64_t>(r)});
}
inline std::uint64_t inner_path_seed(std::uint64_t master, int r) {
  return derive_seed({master, 0x696e6e6572ULL, static_cast<std::uint64_t>(r)});
}

inline double diag_max(const MarketModel& model) {
  const Eigen::MatrixXd b = model.lambda() * model.params().eta_bar.ldlt().solve(model.mean_covariance());
  return b.cwiseAbs().maxCoeff();
}

namespace detail {

/// Runs job(r) for r in [0, count) on `threads` workers. The first failure
/// (lowest index) is rethrown after all workers stop.
template <typename Job>
void parallel_for(int count, int threads, Job&& job) {
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_index = -1;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int r = next++; r < count; r = next++) {
      try {
        job(r);
      } catch (...) {
        std::lock_guard lock(mu);
        if (failed_index < 0 || r < failed_index) {
          failed_index = r;
          failure = std::current_exception();
        }
        next = count;
      }
    }
  };
  const int nthreads = std::max(1, std::min(threads, count));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

template <int Dim>
ResultRow run_row(const nlohmann::json& model_json, const ExperimentConfig& c, const ResultTable& seeds) {
  const MarketModel model = model_from_json(model_json);
  const TimeGrid grid(c.horizon, c.steps);
  const Vec<Dim> x0 = c.x0;
  const int paths = c.outer_paths;

  std::vector<StrategyKind> kinds;
  for (const auto& s : c.strategies)
    if (auto k = parse_strategy(s)) kinds.push_back(*k);

  std::vector<double> oracle(paths);
  std::vector<std::vector<double>> costs(kinds.size(), std::vector<double>(paths));
  std::vector<int> projections(paths, 0);

  parallel_for(paths, c.threads, [&](int r) {
    try {
      const MarketPath<Dim> path = sample_outer_path<Dim>(model, grid, seeds.path_seeds[r]);
      projections[r] = path.projections();
      oracle[r] = path_cost(discrete_optimal<Dim>(path, x0, model.lambda()), path, model.lambda()).total;
      const NoiseSpec inner{c.sampler, c.inner_count, seeds.inner_seeds[r]};
      for (std::size_t s = 0; s < kinds.size(); ++s)
        costs[s][r] = path_cost(run_strategy<Dim>(kinds[s], x0, path, model, inner), path, model.lambda()).total;
    } catch (const std::exception& e) {
      throw NumericalFailure("outer path " + std::to_string(r) + " (seed " + std::to_string(seeds.path_seeds[r]) +
                             "): " + e.what());
    }
  });

  ResultRow row;
  row.model = model_json;
  row.diag_max = diag_max(model);
  for (int p : projections) row.projections += p;
  const Summary oracle_summary = aggregate(oracle);
  std::size_t next_kind = 0;
  for (const auto& name : c.strategies) {
    StrategyResult res;
    res.name = name;
    res.costs = name == kOracleName ? oracle : costs[next_kind++];
    res.summary = aggregate(res.costs);
    res.pct_excess = 100.0 * (res.summary.mean / oracle_summary.mean - 1.0);
    row.strategies.push_back(std::move(res));
  }
  return row;
}

}  // namespace detail

/// All rows share the same outer paths and inner seeds (common random numbers).
inline ResultTable run_experiment(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  ResultTable table;
  for (int r = 0; r < c.outer_paths; ++r) {
    table.path_seeds.push_back(outer_path_seed(c.master_seed, r));
    table.inner_seeds.push_back(inner_path_seed(c.master_seed, r));
  }
  const std::size_t rows = std::max<std::size_t>(1, c.sweep.size());
  for (std::size_t i = 0; i < rows; ++i) {
    nlohmann::json m = c.model;
    if (!c.sweep.empty()) m.merge_patch(c.sweep[i]);
    table.rows.push_back(with_dimension(static_cast<int>(c.x0.size()),
                                        [&]<int Dim>() { return detail::run_row<Dim>(m, c, table); }));
  }
  table.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return table;
}

inline constexpr const char* kCsvHeader =
    "sigma_bar,eta_bar,lambda,rho,strategy,mean_cost,stderr,pct_excess_vs_oracle,diag_max";

/// One line per row and strategy. Vector and matrix parameters are
/// ';'-joined row-major; rho is the asset correlation rho_12 for n >= 2 and
/// the driver correlation varrho_12 for n = 1.
inline std::string results_csv(const ResultTable& t) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& row : t.rows) {
    const MarketModel model = model_from_json(row.model);
    const auto& p = model.params();
    const double rho = model.assets() >= 2 ? p.rho(0, 1) : p.varrho(0, 1);
    for (const auto& s : row.strategies) {
      out << detail::fmt_list(p.sigma_bar) << ',' << detail::fmt_list(p.eta_bar) << ',' << detail::fmt(p.lambda) << ','
          << detail::fmt(rho) << ',' << s.name << ',' << detail::fmt(s.summary.mean) << ','
          << detail::fmt(s.summary.std_error) << ',' << detail::fmt(s.pct_excess) << ',' << detail::fmt(row.diag_max)
          << '\n';
    }
  }
  return out.str();
}

inline nlohmann::json results_json(const ResultTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r;
    r["model"] = row.model;
    r["diag_max"] = row.diag_max;
    r["impact_projections"] = row.projections;
    for (const auto& s : row.strategies) {
      r["strategies"][s.name] = {{"mean", s.summary.mean},      {"stderr", s.summary.std_error},
                                 {"min", s.summary.min},        {"max", s.summary.max},
                                 {"pct_excess", s.pct_excess}, {"costs", s.costs}};
    }
    rows.push_back(std::move(r));
  }
  return {{"rows", rows}};
}

inline nlohmann::json meta_json(const ExperimentConfig& c, const ResultTable& t) {
  return {{"version", kVersion},
          {"master_seed", c.master_seed},
          {"outer_path_seeds", t.path_seeds},
          {"inner_seeds", t.inner_seeds},
          {"grid", {{"T", c.horizon}, {"M", c.steps}}},
          {"outer_paths", c.outer_paths},
          {"inner", {{"sampler", c.sampler == NoiseSpec::Kind::Sobol ? "qmc" : "mc"}, {"N", c.inner_count}}},
          {"threads", c.threads},
          {"seconds", t.seconds}};
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

inline void write_results(const ExperimentConfig& c, const ResultTable& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "results.csv", results_csv(t));
  write_text(dir / "results.json", results_json(t).dump(2) + "\n");
  write_text(dir / "meta.json", meta_json(c, t).dump(2) + "\n");
}

struct ConvergenceCell {
  std::string sampler;  // "mc" or "qmc"
  int count = 0;        // N
  std::vector<double> costs;
  double spread = 0.0;  // sample standard deviation across repeats
};

struct ConvergenceStudy {
  std::uint64_t path_seed = 0;
  std::vector<ConvergenceCell> cells;
};

inline double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Total cost of one strategy on a fixed outer path for each N, repeated with
/// `repeats` pseudo-random seeds (mc) and `repeats` digital shifts (qmc).
inline ConvergenceStudy convergence_study(const ExperimentConfig& c, const std::vector<int>& counts, int repeats,
                                          int path_index = 0, StrategyKind kind = StrategyKind::RHMC_I) {
  if (repeats < 2) throw ConfigError("repeats: need at least 2");
  if (counts.empty()) throw ConfigError("n: need at least one sample count");
  for (int n : counts)
    if (n < 1) throw ConfigError("n: sample counts must be positive");
  if (kind == StrategyKind::CC || kind == StrategyKind::RHS)
    throw ConfigError("convergence study needs an RHMC strategy");
  const MarketModel model = model_from_json(c.sweep.empty() ? c.model : [&] {
    nlohmann::json m = c.model;
    m.merge_patch(c.sweep.front());
    return m;
  }());
  const TimeGrid grid(c.horizon, c.steps);
  ConvergenceStudy study;
  study.path_seed = outer_path_seed(c.master_seed, path_index);

  with_dimension(model.assets(), [&]<int Dim>() {
    const MarketPath<Dim> path = sample_outer_path<Dim>(model, grid, study.path_seed);
    const Vec<Dim> x0 = c.x0;
    for (int n : counts) {
      for (auto kind_noise : {NoiseSpec::Kind::Pseudo, NoiseSpec::Kind::Sobol}) {
        ConvergenceCell cell;
        cell.sampler = kind_noise == NoiseSpec::Kind::Sobol ? "qmc" : "mc";
        cell.count = n;
        cell.costs.resize(repeats);
        detail::parallel_for(repeats, c.threads, [&](int rep) {
          const NoiseSpec inner{kind_noise, n,
                                derive_seed({c.master_seed, 0x636f6e76ULL, static_cast<std::uint64_t>(path_index),
                                             static_cast<std::uint64_t>(rep)})};
          cell.costs[rep] = path_cost(run_strategy<Dim>(kind, x0, path, model, inner), path, model.lambda()).total;
        });
        cell.spread = sample_stddev(cell.costs);
        study.cells.push_back(std::move(cell));
      }
    }
  });
  return study;
}

inline std::string convergence_csv(const ConvergenceStudy& s) {
  std::ostringstream out;
  out << "sampler,N,repeat,cost\n";
  for (const auto& cell : s.cells)
    for (std::size_t r = 0; r < cell.costs.size(); ++r)
      out << cell.sampler << ',' << cell.count << ',' << r << ',' << detail::fmt(cell.costs[r]) << '\n';
  return out.str();
}

}  // namespace rhmc
