#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "vigil/error.hpp"
#include "vigil/log.hpp"

namespace {

std::optional<vigil::log::Level> parse_level(const std::string& s) {
  using vigil::log::Level;
  if (s == "debug") return Level::debug;
  if (s == "info") return Level::info;
  if (s == "warn") return Level::warn;
  if (s == "error") return Level::error;
  if (s == "off") return Level::off;
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forecast reaction times from multichannel connectivity"};
  app.set_version_flag("--version", std::string(VIGIL_VERSION));

  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string level = "info";

  std::string names;
  for (const auto& n : vigil::cli::subcommands()) names += (names.empty() ? "" : "|") + n;
  app.add_option("subcommand", command, names)->required();
  app.add_option("--config,-c", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "Override the master seed");
  app.add_option("--out,-o", out, "Override the output directory");
  app.add_option("--log-level", level, "debug|info|warn|error|off");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const auto lv = parse_level(level);
    if (!lv) throw vigil::ValidationError("unknown log level '" + level + "'");
    vigil::log::set_level(*lv);
    const auto& known = vigil::cli::subcommands();
    if (std::find(known.begin(), known.end(), command) == known.end()) {
      throw vigil::ValidationError("unknown subcommand '" + command + "' (expected " + names + ")");
    }
    std::optional<std::filesystem::path> out_dir;
    if (out) out_dir = *out;
    const auto cfg = vigil::cli::load_config(config_path, seed, out_dir);
    vigil::cli::run_subcommand(command, cfg);
  } catch (const vigil::ValidationError& e) {
    vigil::log::error(e.what());
    return 1;
  } catch (const std::exception& e) {
    vigil::log::error(e.what());
    return 2;
  }
  return 0;
}
