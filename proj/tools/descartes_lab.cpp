// descartes-lab <zero-scan|ac-scan|props|density-scan> [--config FILE] [overrides]
//
// Exit status: 0 success, 1 an invariant failed, 2 bad configuration.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dlab/xp_harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Experiments on real roots of random polynomials and permutation anti-concentration"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "flat key = value or JSON config file");

  struct Override {
    const char* flag;
    const char* key;
    const char* help;
    std::string value;
  };
  Override overrides[] = {
      {"--n", "n_list", "degrees or sizes, e.g. 16,32 or 4..10 or 16..1024x2", {}},
      {"--trials", "trials", "samples per n", {}},
      {"--dist", "dist", "rademacher | gaussian | uniform | cauchy | atom0(p0) | multiset(v1,v2,...)", {}},
      {"--seed", "seed", "master seed", {}},
      {"--workers", "workers", "worker threads", {}},
      {"--out", "out", "output file (default: stdout)", {}},
      {"--format", "format", "csv | json", {}},
  };
  for (auto& o : overrides) app.add_option(o.flag, o.value, o.help);

  const char* names[] = {"zero-scan", "ac-scan", "props", "density-scan"};
  for (const char* n : names) app.add_subcommand(n, std::string("run ") + n);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  dlab::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = dlab::load_config(config_path);
    cfg.experiment = app.get_subcommands().front()->get_name();
    for (const auto& o : overrides)
      if (!o.value.empty()) dlab::apply_setting(cfg, o.key, o.value);
    cfg.validate();
  } catch (const dlab::lab_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    const auto result = dlab::run_experiment(cfg);
    dlab::write_outputs(cfg, result, std::cout);
    for (const auto& f : result.failures) std::cerr << "invariant failed: " << f << "\n";
    return result.ok() ? 0 : 1;
  } catch (const dlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const dlab::lab_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
