#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "dpinn/error.hpp"

int main(int argc, char** argv) {
  using namespace dpinn::cli;
  CLI::App app{"Distributed physics-informed flow reconstruction"};
  app.require_subcommand(1);

  Overrides o;
  std::string config, seeds, out;
  int procs = 0, epochs = 0;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON run configuration (defaults to the kovasznay benchmark)");
    sub->add_option("--seeds", seeds, "Comma-separated seed list, e.g. 0,1,2");
    sub->add_option("--procs", procs, "Number of ranks (1, 2, 4 or 8)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--epochs", epochs, "Override the epoch count")->check(CLI::PositiveNumber);
    sub->add_flag("--force", o.force, "Overwrite existing outputs");
  };
  CLI::App* gen = app.add_subcommand("generate", "Write the manufactured-solution reference grid");
  CLI::App* train = app.add_subcommand("train", "Train all ranks for every seed");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Stitch checkpoints and write error metrics");
  CLI::App* scaling = app.add_subcommand("scaling", "Strong-scaling benchmark over the configured P list");
  CLI::App* plot = app.add_subcommand("plot", "Render SVG charts from the CSV outputs");
  for (CLI::App* sub : {gen, train, evaluate, scaling, plot}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), 1);
  }

  try {
    if (!config.empty()) o.config_path = config;
    if (!seeds.empty()) o.seeds = parse_seed_list(seeds);
    if (procs > 0) o.procs = procs;
    if (!out.empty()) o.out = out;
    if (epochs > 0) o.epochs = epochs;
    const RunConfig c = resolve_config(o);
    if (gen->parsed()) {
      cmd_generate(c, o.force);
    } else if (train->parsed()) {
      cmd_train(c, o.force);
    } else if (evaluate->parsed()) {
      cmd_evaluate(c);
    } else if (scaling->parsed()) {
      cmd_scaling(c, o.force);
    } else if (plot->parsed()) {
      cmd_plot(c);
    }
  } catch (const dpinn::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
