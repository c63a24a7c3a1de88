// cln: train, evaluate and inspect column networks.
//
//   cln train --config run.cfg --out runs/a
//   cln eval --config run.cfg --out runs/a
//   cln gradcheck --gradcheck.tolerance 1e-2
//   cln synth --synth.n 5000 --out data/synth
//   cln grid --config run.cfg --grid.depths 2,6,10 --grid.widths 5,10,20

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cln/cln.hpp"

namespace {

struct Options {
  std::string config;
  std::map<std::string, std::string> overrides;
};

void add_run_options(CLI::App& sub, Options& opt) {
  sub.add_option("--config", opt.config, "key = value config file")->check(CLI::ExistingFile);
  for (const auto& key : cln::config_keys()) {
    sub.add_option_function<std::string>(
        "--" + key.name, [&opt, name = key.name](const std::string& v) { opt.overrides[name] = v; }, key.help);
  }
}

cln::RunConfig resolve(const Options& opt) {
  cln::RunConfig c;
  if (!opt.config.empty()) cln::apply_config_file(c, opt.config);
  for (const auto& [k, v] : opt.overrides) cln::set_key(c, k, v);
  cln::finalize(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Column networks for collective classification"};
  app.require_subcommand(1);
  using Command = int (*)(const cln::RunConfig&, std::ostream&, std::ostream&);
  const std::vector<std::pair<std::string, std::pair<std::string, Command>>> commands = {
      {"train", {"train a model and write checkpoint, log and test report", cln::cmd_train}},
      {"eval", {"evaluate a checkpoint on the test role", cln::cmd_eval}},
      {"gradcheck", {"finite-difference check over the 24 model variants", cln::cmd_gradcheck}},
      {"synth", {"write a planted-partition dataset", cln::cmd_synth}},
      {"grid", {"depth x width x optimizer search", cln::cmd_grid}},
  };
  std::vector<Options> opts(commands.size());
  std::vector<CLI::App*> subs;
  for (std::size_t k = 0; k < commands.size(); ++k) {
    subs.push_back(app.add_subcommand(commands[k].first, commands[k].second.first));
    add_run_options(*subs.back(), opts[k]);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cln::kExitConfig;
  }
  for (std::size_t k = 0; k < commands.size(); ++k) {
    if (!subs[k]->parsed()) continue;
    return cln::run_guarded(
        [&] { return commands[k].second.second(resolve(opts[k]), std::cout, std::cerr); }, std::cerr);
  }
  return cln::kExitConfig;
}
