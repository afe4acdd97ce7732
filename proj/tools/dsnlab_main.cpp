#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "dsn/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"dsnlab: domain-separation training laboratory on procedural domain pairs"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  unsigned long long seed_override = 0;
  bool quiet = false;
  int recon_n = 8;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("--config", config_path, "experiment config file (key=value lines)");
    if (needs_config) c->required();
    cmd->add_option("--out", out_dir, "override the config's output directory");
    cmd->add_option("--seed-override", seed_override, "replace the config's seed");
    cmd->add_flag("--quiet", quiet, "suppress progress output");
  };

  CLI::App* run = app.add_subcommand("run", "train one experiment and record its artifacts");
  add_common(run, true);

  CLI::App* table = app.add_subcommand("table", "aggregate completed runs into a results table");
  table->add_option("--out", out_dir, "directory holding run subdirectories")->required();
  table->add_flag("--quiet", quiet, "suppress the rendered table");

  CLI::App* recon = app.add_subcommand("dump-recon", "write original/combined/shared/private reconstruction grids");
  add_common(recon, true);
  recon->add_option("--n", recon_n, "rows per domain grid");

  CLI::App* gend = app.add_subcommand("gen-data", "write the procedural datasets as PPM files plus a label index");
  add_common(gend, true);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference sweep over every loss and a model probe");
  gradcheck->add_flag("--quiet", quiet, "suppress the per-loss report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  dsn::RunOptions opts;
  if (!out_dir.empty()) opts.out_override = out_dir;
  if (seed_override != 0) opts.seed_override = seed_override;
  opts.quiet = quiet;

  if (run->parsed()) return dsn::cmd_run(config_path, opts);
  if (table->parsed()) return dsn::cmd_table(out_dir, quiet);
  if (recon->parsed()) return dsn::cmd_dump_recon(config_path, opts, recon_n);
  if (gend->parsed()) return dsn::cmd_gen_data(config_path, opts);
  if (gradcheck->parsed()) return dsn::cmd_gradcheck(quiet);
  return 2;
}
