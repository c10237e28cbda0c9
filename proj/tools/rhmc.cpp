// Command-line front end for batch experiments.

#include "rhmc/rhmc.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

std::vector<int> parse_counts(const std::string& list) {
  std::vector<int> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(n);
    } catch (const std::exception&) {
      throw rhmc::ConfigError("--n: \"" + item + "\" is not an integer");
    }
  }
  return out;
}

void report(const rhmc::ResultTable& t) {
  for (const auto& row : t.rows) {
    std::cout << row.model.dump() << "  diag_max=" << rhmc::detail::fmt(row.diag_max) << '\n';
    for (const auto& s : row.strategies)
      std::cout << "  " << s.name << "  mean=" << rhmc::detail::fmt(s.summary.mean)
                << "  stderr=" << rhmc::detail::fmt(s.summary.std_error)
                << "  excess%=" << rhmc::detail::fmt(s.pct_excess) << '\n';
  }
  std::cout << "elapsed " << t.seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal execution under stochastic liquidity and volatility"};
  app.require_subcommand(1);

  std::string config_path, out_dir, scale, counts = "64,128,256,512";
  int threads = 0, repeats = 5, path_index = 0;
  std::string strategy = "RHMC_I";

  auto* run = app.add_subcommand("run", "strategy-versus-oracle cost table");
  run->add_option("--config", config_path, "JSON config")->required();
  run->add_option("--scale", scale, "desk (M=100, R=50, N=200) or paper (M=1000, R=200, N=500)")
      ->check(CLI::IsMember({"desk", "paper"}));
  run->add_option("--out", out_dir, "output directory (overrides config.output)");
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  auto* converge = app.add_subcommand("converge", "mc versus qmc spread on a fixed outer path");
  converge->add_option("--config", config_path, "JSON config")->required();
  converge->add_option("--n", counts, "comma-separated inner sample counts");
  converge->add_option("--repeats", repeats, "seeds / digital shifts per sampler");
  converge->add_option("--path", path_index, "outer path index");
  converge->add_option("--strategy", strategy, "RHMC_I or RHMC_II")->check(CLI::IsMember({"RHMC_I", "RHMC_II"}));
  converge->add_option("--out", out_dir, "output directory (overrides config.output)");
  converge->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  auto* oracle = app.add_subcommand("oracle", "discrete-optimum costs only");
  oracle->add_option("--config", config_path, "JSON config")->required();
  oracle->add_option("--out", out_dir, "output directory (overrides config.output)");
  oracle->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    rhmc::ExperimentConfig config = rhmc::load_config(config_path);
    if (threads > 0) config.threads = threads;
    if (!out_dir.empty()) config.output = out_dir;

    if (*run) {
      if (scale == "desk") rhmc::apply_scale(config, rhmc::Scale::Desk);
      if (scale == "paper") rhmc::apply_scale(config, rhmc::Scale::Paper);
      const auto table = rhmc::run_experiment(config);
      rhmc::write_results(config, table, config.output);
      report(table);
    } else if (*oracle) {
      config.strategies = {rhmc::kOracleName};
      const auto table = rhmc::run_experiment(config);
      rhmc::write_results(config, table, config.output);
      report(table);
    } else {
      const auto study = rhmc::convergence_study(config, parse_counts(counts), repeats, path_index,
                                                 *rhmc::parse_strategy(strategy));
      std::filesystem::create_directories(config.output);
      rhmc::write_text(std::filesystem::path(config.output) / "convergence.csv", rhmc::convergence_csv(study));
      for (const auto& cell : study.cells)
        std::cout << cell.sampler << "  N=" << cell.count << "  spread=" << rhmc::detail::fmt(cell.spread) << '\n';
    }
  } catch (const rhmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  }
  return 0;
}
