#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "spsl/harness/commands.hpp"

using namespace spsl::harness;

int main(int argc, char** argv) {
  CLI::App app{"spatial-psl: scene generation, PSL matching and relation-network training"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (INI)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override data.seed");
    cmd->add_option("--out", out_dir, "output directory");
  };
  auto* gen = app.add_subcommand("gen", "generate scenes, questions and images");
  auto* masks = app.add_subcommand("masks", "infer question masks and score matching");
  auto* train = app.add_subcommand("train", "train the configured variant");
  auto* sweep = app.add_subcommand("sweep", "train one student per sweep.pis value");
  for (auto* c : {gen, masks, train, sweep}) add_common(c);
  auto* report = app.add_subcommand("report", "summarise trained runs");
  report->add_option("--out", out_dir, "output directory");

  auto* psl = app.add_subcommand("psl", "solve a standalone rule program");
  psl->require_subcommand(1);
  auto* solve = psl->add_subcommand("solve", "MAP inference over an evidence file");
  std::string program, evidence, interp = "interp.txt";
  bool strict = false;
  spsl::infer::SolverConfig solver;
  solve->add_option("--program", program)->required()->check(CLI::ExistingFile);
  solve->add_option("--evidence", evidence)->required()->check(CLI::ExistingFile);
  solve->add_option("--out", interp, "interpretation file");
  solve->add_option("--max-iters", solver.max_iters);
  solve->add_option("--tol", solver.tol);
  solve->add_flag("--strict", strict, "exit 4 when the solver hits its iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (solve->parsed()) {
      auto r = cmd_psl(program, evidence, interp, solver, strict);
      std::cerr << "objective " << r.objective << " after " << r.iterations << " iterations"
                << (r.converged ? "" : " (not converged)") << "\n";
      return kExitOk;
    }
    if (report->parsed()) {
      cmd_report(out_dir, std::cout);
      return kExitOk;
    }
    ExperimentConfig config = experiment_from(load_config(config_path));
    if (seed) config.seed = *seed;
    OutputLock lock(out_dir);
    if (gen->parsed()) {
      cmd_gen(config, out_dir, std::cerr);
    } else if (masks->parsed()) {
      auto s = cmd_masks(config, out_dir, std::cerr);
      std::cout << "precision " << s.precision << " recall " << s.recall << "\n";
    } else if (train->parsed()) {
      auto s = cmd_train(config, out_dir, std::cerr);
      std::cout << s.run << " val " << s.val_accuracy << " test " << s.test_accuracy << "\n";
    } else if (sweep->parsed()) {
      for (const auto& p : cmd_sweep(config, out_dir, std::cerr))
        std::cout << p.pi << ' ' << p.summary.run << " val " << p.summary.val_accuracy << " test "
                  << p.summary.test_accuracy << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
