// Command-line front end: run experiments, evaluate checkpoints, execute the
// exact-identity suite, and expand config sweeps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trice/config.hpp"
#include "trice/errors.hpp"
#include "trice/eval.hpp"
#include "trice/experiment.hpp"
#include "trice/model.hpp"
#include "trice/oracle.hpp"
#include "trice/tasks.hpp"

namespace {

namespace fs = std::filesystem;
using trice::RunConfig;

fs::path output_root() {
  if (const char* env = std::getenv("TRICE_OUT_ROOT")) return fs::path(env);
  return fs::path("runs");
}

std::string default_run_name(const RunConfig& config, trice::Method method) {
  return to_string(method) + "-" + config.task.name + "-s" +
         std::to_string(config.seed);
}

void write_or_print(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw trice::ValidationError("cannot open " + out_path);
  out << text;
}

int cmd_run(const std::string& config_path, const std::string& method_name,
            std::string out_dir, bool overwrite) {
  const RunConfig config = trice::load_config(config_path);
  const trice::Method method = trice::method_from_string(method_name);
  if (out_dir.empty())
    out_dir = (output_root() / default_run_name(config, method)).string();
  const trice::RunPaths paths =
      trice::run_experiment(config, method, out_dir, overwrite);
  std::cout << paths.dir.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path,
             const std::string& config_path, const std::string& mode,
             std::size_t step, const std::string& out_path) {
  if (mode != "greedy" && mode != "sc")
    throw trice::ValidationError("mode must be greedy or sc");
  const RunConfig config = trice::load_config(config_path);
  const trice::TaskBundle bundle = trice::make_task(config.task);
  const trice::TabularLM model =
      trice::TabularLM::load_checkpoint(checkpoint_path);
  if (model.question_count() != bundle.spec.question_count)
    throw trice::ValidationError(
        "checkpoint question count does not match the task");

  const trice::RngFactory rng(config.seed);
  std::string csv = "question,label,prediction,correct\n";
  for (std::size_t x = 0; x < bundle.spec.question_count; ++x) {
    int predicted;
    if (mode == "greedy") {
      predicted = bundle.spec.extract(model.greedy_decode(x));
    } else {
      trice::RngEngine eng = rng.make(trice::kStreamEval, step, x);
      predicted = trice::self_consistency(model, bundle.spec, x,
                                          config.sc_samples, eng);
    }
    csv += std::to_string(x) + "," + std::to_string(bundle.spec.label(x)) +
           "," + std::to_string(predicted) + "," +
           (predicted == bundle.spec.label(x) ? "1" : "0") + "\n";
  }
  write_or_print(csv, out_path);
  return 0;
}

int cmd_identity_suite(const std::string& config_path, std::uint64_t seed,
                       std::size_t families, std::size_t coords,
                       const std::string& out_path) {
  trice::IdentitySuiteOptions options;
  options.seed = seed;
  options.families = families;
  options.coords_per_family = coords;
  if (!config_path.empty())
    options.seed = trice::load_config(config_path).seed;
  const trice::IdentitySuiteResult result =
      trice::run_identity_suite(options);
  write_or_print(identity_suite_csv(result), out_path);
  std::cerr << (result.all_pass ? "identity suite: PASS" :
                                  "identity suite: FAIL")
            << " (" << result.rows.size() << " checks, slope "
            << result.slope << ")\n";
  return result.all_pass ? 0 : 1;
}

int cmd_sweep(const std::string& template_path, const std::string& grid_path,
              const std::string& method_name, std::string out_root,
              bool overwrite) {
  const trice::Method method = trice::method_from_string(method_name);
  std::ifstream grid_in(grid_path);
  if (!grid_in) throw trice::ValidationError("cannot open " + grid_path);
  nlohmann::json grid;
  try {
    grid = nlohmann::json::parse(grid_in);
  } catch (const nlohmann::json::parse_error& e) {
    throw trice::ParseError(std::string("grid: ") + e.what());
  }
  if (!grid.is_object() || grid.empty())
    throw trice::ValidationError("grid must be a non-empty JSON object");
  for (const auto& [key, values] : grid.items())
    if (!values.is_array() || values.empty())
      throw trice::ValidationError("grid entry " + key +
                                   " must be a non-empty array");

  std::ifstream template_in(template_path);
  if (!template_in)
    throw trice::ValidationError("cannot open " + template_path);
  const nlohmann::json base = nlohmann::json::parse(template_in);

  if (out_root.empty()) out_root = output_root().string();
  std::vector<std::string> keys;
  for (const auto& item : grid.items()) keys.push_back(item.key());

  std::string index_csv = "run_dir,overrides\n";
  std::vector<std::size_t> cursor(keys.size(), 0);
  std::size_t combo = 0;
  while (true) {
    nlohmann::json merged = base;
    nlohmann::json overrides = nlohmann::json::object();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      merged[keys[i]] = grid[keys[i]][cursor[i]];
      overrides[keys[i]] = grid[keys[i]][cursor[i]];
    }
    const RunConfig config = trice::config_from_json(merged);
    config.validate();
    char tag[32];
    std::snprintf(tag, sizeof tag, "%04zu", combo);
    const fs::path dir = fs::path(out_root) /
                         (default_run_name(config, method) + "-g" + tag);
    trice::run_experiment(config, method, dir, overwrite);
    index_csv += dir.string() + "," + overrides.dump() + "\n";
    std::cout << dir.string() << "\t" << overrides.dump() << "\n";
    ++combo;

    std::size_t pos = 0;
    while (pos < keys.size()) {
      if (++cursor[pos] < grid[keys[pos]].size()) break;
      cursor[pos] = 0;
      ++pos;
    }
    if (pos == keys.size()) break;
  }
  std::ofstream index_out(fs::path(out_root) / "sweep_index.csv",
                          std::ios::binary);
  index_out << index_csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCMC-EM training of enumerable chain-of-thought models"};
  app.require_subcommand(1);

  std::string config_path, method_name = "trice", out_dir;
  bool overwrite = false;
  CLI::App* run = app.add_subcommand("run", "train and persist a run");
  run->add_option("--config", config_path, "JSON run config")->required();
  run->add_option("--method", method_name,
                  "trice|star|rs|rws|direct|cot (default trice)");
  run->add_option("--out", out_dir, "run directory (default from "
                                    "TRICE_OUT_ROOT)");
  run->add_flag("--overwrite", overwrite, "replace an existing run dir");

  std::string ckpt_path, eval_config, eval_mode = "greedy", eval_out;
  std::size_t eval_step = trice::kFinalEvalStep;
  CLI::App* ev = app.add_subcommand("eval", "per-question eval CSV");
  ev->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  ev->add_option("--config", eval_config, "JSON run config")->required();
  ev->add_option("--mode", eval_mode, "greedy|sc");
  ev->add_option("--step", eval_step, "self-consistency stream key");
  ev->add_option("--out", eval_out, "output CSV (default stdout)");

  std::string suite_config, suite_out;
  std::uint64_t suite_seed = 7;
  std::size_t suite_families = 3, suite_coords = 4;
  CLI::App* suite = app.add_subcommand(
      "identity-suite", "closed-form vs enumeration checks");
  suite->add_option("--config", suite_config, "take the seed from a config");
  suite->add_option("--seed", suite_seed, "suite seed");
  suite->add_option("--families", suite_families, "random model draws");
  suite->add_option("--coords", suite_coords, "coordinates per family");
  suite->add_option("--out", suite_out, "report CSV (default stdout)");

  std::string sweep_template, sweep_grid, sweep_method = "trice",
              sweep_out_root;
  bool sweep_overwrite = false;
  CLI::App* sweep = app.add_subcommand("sweep", "cartesian config sweep");
  sweep->add_option("--template", sweep_template, "base JSON config")
      ->required();
  sweep->add_option("--grid", sweep_grid, "JSON {key: [values...]}")
      ->required();
  sweep->add_option("--method", sweep_method, "training method");
  sweep->add_option("--out-root", sweep_out_root, "sweep output root");
  sweep->add_flag("--overwrite", sweep_overwrite,
                  "replace existing run dirs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, method_name, out_dir, overwrite);
    if (ev->parsed())
      return cmd_eval(ckpt_path, eval_config, eval_mode, eval_step, eval_out);
    if (suite->parsed())
      return cmd_identity_suite(suite_config, suite_seed, suite_families,
                                suite_coords, suite_out);
    if (sweep->parsed())
      return cmd_sweep(sweep_template, sweep_grid, sweep_method,
                       sweep_out_root, sweep_overwrite);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
