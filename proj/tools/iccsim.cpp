// iccsim: command-line front end. One subcommand per protocol verb.
#include <cstdio>
#include <fstream>
#include <sstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icc/config.hpp"
#include "icc/error.hpp"
#include "icc/run.hpp"

namespace {

int report(const char* kind, int code, const std::string& message) {
  nlohmann::ordered_json j;
  j["status"] = "error";
  j["exit_code"] = code;
  j["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ion Coulomb crystal simulator"};
  app.set_version_flag("--version", std::string("iccsim ") + icc::toolkit_version());
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  const std::vector<std::pair<std::string, std::string>> verbs{
      {"relax", "Find the equilibrium crystal"},
      {"modes", "Relax, then compute the normal-mode spectrum"},
      {"evolve", "Run laser-cooled molecular dynamics"},
      {"quench", "Quench sweep through the zigzag transition and count defects"},
      {"scan", "Relax over a grid of one trap parameter"},
      {"image", "Render a synthetic fluorescence image"}};
  for (const auto& [name, help] : verbs) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "Configuration file")->required();
    sub->add_option("-s,--set", overrides, "Override section.key=value (repeatable)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  icc::ExperimentConfig config;
  try {
    // The subcommand names the protocol; a [run] protocol key must agree.
    std::vector<std::string> all{"run.protocol=" + verb};
    const auto sections = [&] {
      std::ifstream f(config_path);
      if (!f) throw icc::IoError("cannot read config file " + config_path);
      std::stringstream ss;
      ss << f.rdbuf();
      return ss.str();
    }();
    for (const auto& [name, entries] : icc::read_sections(sections)) {
      if (name != "run") continue;
      for (const auto& e : entries) {
        if (e.key == "protocol" && icc::protocol_from_string(e.value) != icc::protocol_from_string(verb)) {
          throw icc::ConfigError("line " + std::to_string(e.line) + ", [run] protocol: '" + e.value +
                                 "' conflicts with subcommand '" + verb + "'");
        }
      }
    }
    all.insert(all.end(), overrides.begin(), overrides.end());
    config = icc::parse_config(sections, all);
  } catch (const icc::ConfigError& e) {
    return report("config", 1, e.what());
  } catch (const icc::IoError& e) {
    return report("io", 3, e.what());
  }

  const auto manifest = icc::run(config);
  if (manifest.exit_code != 0) {
    std::cerr << "iccsim: " << manifest.error_kind << " error: " << manifest.error_message << "\n";
  } else {
    std::cout << "iccsim " << verb << ": wrote " << manifest.outputs.size() << " files to " << manifest.directory
              << "\n";
  }
  return manifest.exit_code;
}
