// Command-line front end: one subcommand per run mode.
//
//   dlambda sweep-phase --preset fig3-cold --out phase.csv
//   dlambda transmit --config run.cfg --delta_b_hz 40
//
// Every configuration key is also a flag of the same name; flags override
// keys read from --config.

#include "dlambda/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace cli = dlambda::cli;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw dlambda::Error("cannot read config file '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-lambda atom simulator: steady states, propagation, sweeps and spectra"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> flags;
  bool print_config = false;

  std::vector<std::pair<CLI::App*, cli::Mode>> subs;
  for (cli::Mode m : {cli::Mode::steady, cli::Mode::transmit, cli::Mode::sweep_phase,
                      cli::Mode::sweep_b, cli::Mode::spectrum, cli::Mode::pulse}) {
    CLI::App* sub = app.add_subcommand(cli::to_string(m), std::string("run mode ") + cli::to_string(m));
    sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--preset", flags["preset"], "parameter preset (fig3-cold, fig4-warm)");
    for (const auto& k : cli::detail::key_table())
      sub->add_option(std::string("--") + k.name, flags[k.name]);
    sub->add_flag("--print-config", print_config, "print the resolved configuration and exit");
    subs.emplace_back(sub, m);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    cli::Mode mode = cli::Mode::transmit;
    for (const auto& [sub, m] : subs)
      if (sub->parsed()) mode = m;

    std::string text;
    if (!config_path.empty()) text = read_file(config_path);
    auto entries = cli::parse_document(text);
    std::vector<cli::Entry> overrides{{"mode", cli::to_string(mode), 0}};
    for (const auto& [key, value] : flags)
      if (!value.empty()) overrides.push_back({key, value, 0});
    cli::merge_entries(entries, overrides);
    const cli::RunConfig cfg = cli::build_config(entries);

    if (print_config) {
      std::cout << cli::emit_config(cfg);
      return 0;
    }
    const cli::RunOutput out = cli::run(cfg);
    cli::write_file(cfg.out, out.csv);
    cli::write_file(cli::sidecar_path(cfg.out), out.json);
    std::cerr << "wrote " << cfg.out << " and " << cli::sidecar_path(cfg.out) << "\n";
    return 0;
  } catch (const dlambda::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
