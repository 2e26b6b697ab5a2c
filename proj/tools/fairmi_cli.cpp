// Command-line front end: sweep, synth-eval, bench, train, predict.

#include <CLI11.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "fairmi/errors.hpp"
#include "fairmi/experiments.hpp"

namespace {

nlohmann::json read_config(const std::filesystem::path& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw fairmi::ConfigError("cannot open config " + path.string());
  try {
    nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
    if (!j.is_object()) throw fairmi::ConfigError("config must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw fairmi::ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairmi: fair regression with information-theoretic penalties"};
  app.set_version_flag("--version", std::string(FAIRMI_VERSION));
  app.require_subcommand(1);

  std::string config_path;
  fairmi::RunOptions opts;
  std::string output_dir;

  const auto add_run_options = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("-c,--config", config_path, "JSON config file");
    if (config_required) c->required();
    sub->add_option("-o,--output-dir", output_dir,
                    std::string("output directory (default: config, then $") +
                        fairmi::kOutputDirEnv + ", then .)");
    sub->add_option("-j,--jobs", opts.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--svg", opts.svg, "also write an SVG chart");
    sub->add_flag("--append", opts.append, "append rows to existing CSV outputs");
  };

  auto* sweep = app.add_subcommand("sweep", "cross-validated fairness/accuracy frontier");
  add_run_options(sweep, true);
  auto* synth = app.add_subcommand("synth-eval", "estimator accuracy against Monte Carlo oracles");
  add_run_options(synth, false);
  auto* bench = app.add_subcommand("bench", "training time vs sample size");
  add_run_options(bench, false);
  auto* train = app.add_subcommand("train", "fit one regressor and save it");
  add_run_options(train, true);

  auto* predict = app.add_subcommand("predict", "score a CSV with a saved model");
  std::string model_path, input_path, output_path;
  predict->add_option("-m,--model", model_path, "model JSON")->required();
  predict->add_option("-i,--input", input_path, "input CSV")->required();
  predict->add_option("-o,--output", output_path, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? fairmi::kExitOk : fairmi::kExitConfigError;
  }

  opts.output_dir = output_dir;
  nlohmann::json config;
  std::filesystem::path base_dir = ".";
  if (!predict->parsed()) {
    try {
      config = read_config(config_path);
      if (!config_path.empty()) base_dir = std::filesystem::path(config_path).parent_path();
      if (base_dir.empty()) base_dir = ".";
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return fairmi::kExitConfigError;
    }
  }

  try {
    if (sweep->parsed()) return fairmi::cmd_sweep(config, base_dir, opts, std::cerr);
    if (synth->parsed()) return fairmi::cmd_synth_eval(config, opts, std::cerr);
    if (bench->parsed()) return fairmi::cmd_bench(config, base_dir, opts, std::cerr);
    if (train->parsed()) return fairmi::cmd_train(config, base_dir, opts, std::cerr);
    return fairmi::cmd_predict(model_path, input_path, output_path, std::cerr);
  } catch (const fairmi::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fairmi::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fairmi::kExitPartialFailure;
  }
}
