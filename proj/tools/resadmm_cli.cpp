#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "resadmm/experiment.hpp"

namespace ex = resadmm::experiment;

namespace {

// exit codes: 0 ok, 1 other failure, 2 bad config, 3 numeric blowup
int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ex::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const resadmm::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FCResNet training with 2- and 3-splitting ADMM"};
  app.require_subcommand(1);

  std::string out;
  bool dump_weights = false, strict = false;
  int repeats = 1;
  std::string run_cfg;
  std::vector<std::string> cmp_cfgs;

  auto* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("config", run_cfg, "config file")->required();
  run->add_option("--out", out, "output directory (overrides output.dir)");
  run->add_flag("--dump-weights", dump_weights, "write weights.bin");
  run->add_flag("--strict-assumptions", strict, "reject parameters outside the convergence assumptions");

  auto* cmp = app.add_subcommand("compare", "run several configs and tabulate wall time and test MSE");
  cmp->add_option("configs", cmp_cfgs, "config files")->required();
  cmp->add_option("--repeats", repeats, "runs per config")->check(CLI::PositiveNumber);
  cmp->add_option("--out", out, "directory for compare.csv");
  cmp->add_flag("--strict-assumptions", strict, "reject parameters outside the convergence assumptions");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed())
    return guarded([&] {
      auto cfg = ex::load_config(run_cfg);
      cfg.strict = strict;
      const std::string dir = out.empty() ? cfg.out_dir : out;
      const auto r = ex::execute(cfg);
      ex::write_artifacts(r, dir, dump_weights);
      ex::write_summary(std::cout, r);
      std::cout << "artifacts in " << dir << "\n";
      return 0;
    });

  return guarded([&] {
    std::vector<ex::CompareRow> rows;
    for (const auto& path : cmp_cfgs) {
      auto cfg = ex::load_config(path);
      cfg.strict = strict;
      rows.push_back(ex::compare_one(cfg, std::filesystem::path(path).stem().string(), repeats));
    }
    ex::print_compare_table(std::cout, rows);
    if (!out.empty()) {
      std::filesystem::create_directories(out);
      std::ofstream f(std::filesystem::path(out) / "compare.csv");
      if (!f) throw std::runtime_error("cannot write compare.csv");
      ex::write_compare_csv(f, rows);
    }
    return 0;
  });
}
