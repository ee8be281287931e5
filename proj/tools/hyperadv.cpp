#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "hyperadv/error.hpp"
#include "hyperadv/experiment.hpp"

namespace fs = std::filesystem;
using namespace hyperadv;

int main(int argc, char** argv) {
  CLI::App app{"Angular adversarial attacks on hyperbolic prototype classifiers"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<std::string> report_files;

  const auto common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "Experiment config (JSON, comments allowed)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    cmd->add_option("--seed", seed, "Run only this seed");
    cmd->add_option("--threads", threads, "Evaluation worker threads")->check(CLI::PositiveNumber);
  };

  CLI::App* train = app.add_subcommand("train", "Train one checkpoint per seed");
  common(train, true);
  CLI::App* attack = app.add_subcommand("attack", "Attack trained checkpoints and write reports");
  common(attack, true);
  attack->add_option("--checkpoint", checkpoint, "Checkpoint file or training directory");
  CLI::App* report = app.add_subcommand("report", "Combine report files into a comparison table");
  report->add_option("reports", report_files, "Report JSON files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out_dir, "Output directory")->required();
  CLI::App* gen = app.add_subcommand("gen-data", "Write the train/test split as CSV");
  common(gen, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      std::vector<fs::path> files(report_files.begin(), report_files.end());
      std::cout << cli::render_table(cli::cmd_report(files, out_dir));
      return 0;
    }

    cli::CommandOptions opts;
    CLI::App* active = app.get_subcommands().front();
    if (active->count("--out")) opts.out = out_dir;
    if (active->count("--seed")) opts.seed = seed;
    if (active->count("--threads")) opts.threads = threads;
    const cli::ExperimentConfig config = cli::apply_overrides(cli::load_config(config_path), opts);
    std::cerr << "effective config:\n" << cli::to_json(config);

    if (train->parsed()) {
      for (const auto& o : cli::cmd_train(config)) {
        std::printf("seed %llu: final loss %.10g, train acc %.4f, test acc %.4f\n",
                    static_cast<unsigned long long>(o.seed), o.final_loss, o.train_accuracy, o.test_accuracy);
      }
    } else if (attack->parsed()) {
      std::optional<fs::path> ck;
      if (!checkpoint.empty()) ck = fs::path(checkpoint);
      const auto reports = cli::cmd_attack(config, ck);
      std::cout << cli::render_table(cli::summarize_reports(reports));
    } else if (gen->parsed()) {
      cli::cmd_gen_data(config);
      std::printf("wrote %s and %s\n", (config.output_dir / "train.csv").c_str(), (config.output_dir / "test.csv").c_str());
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
