#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>

#include "specflow/errors.hpp"
#include "specflow/io.hpp"

using namespace specflow;

namespace {

// Flag values are read as JSON literals, falling back to a plain string.
json literal(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

std::string flag_name(std::string key) {
  for (char& ch : key)
    if (ch == '_') ch = '-';
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Special flows over two-dimensional rotations: batch experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, rotation_text, roof_text;
  std::optional<uint64_t> seed;
  std::optional<unsigned> bits, threads;
  bool plot_script = false;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--precision-bits", bits, "working precision in bits");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker cap (0: all cores)");
  app.add_flag("--plot-script", plot_script, "also write a gnuplot script for the CSV");
  app.add_option("--rotation", rotation_text, "rotation descriptor (JSON)");
  app.add_option("--roof", roof_text, "roof descriptor (JSON)");

  std::map<std::string, std::map<std::string, std::string>> values;
  for (const auto& op : operation_names()) {
    auto* sub = app.add_subcommand(op);
    for (const auto& key : operation_params(op))
      sub->add_option(flag_name(key), values[op][key], "parameter " + key + " (JSON literal or string)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const std::string op = app.get_subcommands().front()->get_name();
    ExperimentConfig config;
    json j = json::object();
    if (!config_path.empty()) {
      config = ExperimentConfig::load(config_path);
      if (config.operation != op)
        throw ValidationError("config names operation '" + config.operation + "' but the subcommand is '" + op + "'");
      j = config.to_json();
    }
    j["operation"] = op;
    if (!j.contains("params")) j["params"] = json::object();
    for (const auto& [key, text] : values[op])
      if (app.get_subcommands().front()->count(flag_name(key))) j["params"][key] = literal(text);
    if (seed) j["seed"] = *seed;
    if (bits) j["precision_bits"] = *bits;
    if (threads) j["threads"] = *threads;
    if (plot_script) j["plot_script"] = true;
    if (!out_dir.empty()) j["output"]["dir"] = out_dir;
    if (!rotation_text.empty()) j["rotation"] = json::parse(rotation_text);
    if (!roof_text.empty()) j["roof"] = json::parse(roof_text);
    config = ExperimentConfig::from_json(j);
    return run(config, std::cerr);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const PrecisionError& e) {
    std::cerr << "precision error: " << e.what() << '\n';
    return 3;
  }
}
