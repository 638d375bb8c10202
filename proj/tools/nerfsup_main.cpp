// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nerfsup/cli.hpp"

namespace {

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& c : f)
    if (c == '_') c = '-';
  return "--" + f;
}

const char* describe(const std::string& sub) {
  if (sub == "synth") return "render a synthetic fixture into a posed-image dataset";
  if (sub == "train-field") return "optimize a voxel radiance field on a dataset";
  if (sub == "gen") return "generate correspondence tuples from a trained field";
  if (sub == "train-desc") return "train a dense descriptor model on correspondence tuples";
  if (sub == "eval") return "evaluate descriptors (or the oracle matcher) on annotations";
  return "render a field from the views of a manifest";
}

int exit_code(const nerfsup::Error& e) {
  if (dynamic_cast<const nerfsup::ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const nerfsup::LoadError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const nerfsup::DatasetError*>(&e) != nullptr) return 3;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nerfsup: radiance-field supervision for dense correspondence.\n"
               "Parameters resolve as defaults < --config file < NERFSUP_<KEY> environment < flags."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  struct Bound {
    CLI::App* app = nullptr;
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
  };
  std::map<std::string, Bound> bound;
  for (const std::string& sub : nerfsup::cli::subcommands()) {
    Bound& b = bound[sub];
    b.app = app.add_subcommand(sub, describe(sub));
    b.app->add_option("--config", b.config, "JSON config file (top-level keys and a section per subcommand)");
    for (const nerfsup::cli::ParamSpec& p : nerfsup::cli::parameter_table(sub)) {
      const std::string help = p.help + " [default " + p.value.dump() + ", env " + nerfsup::cli::env_name(p.name) + "]";
      std::string& slot = b.values[p.name];
      b.options[p.name] = p.value.is_boolean() ? b.app->add_flag(flag_name(p.name) + "{true}", slot, help)
                                               : b.app->add_option(flag_name(p.name), slot, help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (auto& [sub, b] : bound) {
    if (!b.app->parsed()) continue;
    std::map<std::string, std::string> overrides;
    for (const auto& [name, opt] : b.options)
      if (opt->count() > 0) overrides[name] = b.values[name];
    try {
      const nerfsup::cli::RunConfig rc = nerfsup::cli::resolve_config(sub, b.config, overrides);
      return nerfsup::cli::run(rc, std::cerr);
    } catch (const nerfsup::Error& e) {
      std::cerr << "nerfsup " << sub << ": error: " << e.what() << "\n";
      return exit_code(e);
    } catch (const std::exception& e) {
      std::cerr << "nerfsup " << sub << ": error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
