// Command-line front end for the shared-attribute incremental classifier.
//
//   sharedattr gen --config <path> --out <dir>
//   sharedattr run --config <path> --out <dir> [--seed N] [--tau X] [--per-class-topk] [--background-negatives]
//   sharedattr eval --checkpoint <dir> --data <dir> [--tau X]
//   sharedattr export-scores --checkpoint <dir>
//
// Exit codes: 0 ok, 2 configuration error, 3 data or format error, 4 numeric failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <sharedattr.hpp>

namespace sa = sharedattr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) { sa::write_text_atomic(path, j.dump(2) + "\n"); }

int cmd_gen(const std::string& config_path, const std::string& out) {
  const sa::PipelineConfig cfg = sa::load_config(config_path);
  if (cfg.data_dir) sa::fail(sa::Errc::config, "gen needs a synthetic scenario, not data_dir");
  sa::write_scenario_dir(sa::generate_scenario(cfg.scenario), out);
  std::cout << "wrote scenario to " << out << "\n";
  return 0;
}

struct RunFlags {
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  bool per_class_topk = false;
  bool background_negatives = false;
};

int cmd_run(const std::string& config_path, const std::string& out, const RunFlags& flags) {
  sa::PipelineConfig cfg = sa::load_config(config_path);
  if (flags.seed) cfg.scenario.seed = *flags.seed;
  if (flags.tau) cfg.tau = *flags.tau;
  cfg.per_class_topk = cfg.per_class_topk || flags.per_class_topk;
  cfg.train.background_negatives = cfg.train.background_negatives || flags.background_negatives;
  cfg.validate();

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  json partial;
  try {
    const sa::RunOutcome run = sa::run_scenario(cfg, out_dir / "checkpoints", &partial);
    write_json(out_dir / "report.json", run.report);
    for (const auto& t : run.report["tasks"]) {
      const auto& m = t["metrics"];
      std::cout << "task " << t["task_index"] << ": overall " << m["overall_accuracy"] << ", fpp "
                << m["fpp_accuracy"] << ", newly added " << t["sharing"]["newly_added"] << "\n";
    }
  } catch (const sa::Error&) {
    if (!partial.is_null()) write_json(out_dir / "report.json", partial);
    throw;
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) sa::fail(sa::Errc::config, "tau must be in (0,1)");
  const sa::LoadedCheckpoint ck = sa::load_checkpoint(checkpoint);
  const auto tasks = sa::load_task_stream(data, ck.state.task_index);
  if (static_cast<int>(tasks.size()) != ck.state.task_index) {
    sa::fail(sa::Errc::data, "data directory holds fewer tasks than the checkpoint has learned");
  }
  const sa::MetricsReport m = sa::evaluate(ck.state, tasks, std::nullopt, tau);
  json out = sa::metrics_to_json(m);
  out["task_index"] = ck.state.task_index;
  std::cout << out.dump(2) << "\n";
  return 0;
}

// Binary attribute-to-class score matrix of the checkpoint, one row per active attribute.
int cmd_export_scores(const std::string& checkpoint) {
  const sa::LoadedCheckpoint ck = sa::load_checkpoint(checkpoint);
  const sa::TaskState& s = ck.state;
  json rows = json::array();
  for (std::size_t i = 0; i < s.index_map.size(); ++i) {
    json r;
    r["base_index"] = s.index_map.ids[i];
    r["added_at"] = s.index_map.added_at[i];
    if (i < ck.attribute_texts.size()) r["text"] = ck.attribute_texts[i];
    r["scores"] = s.assignment.values.row_vec(i);
    rows.push_back(r);
  }
  json out;
  out["task_index"] = s.task_index;
  out["class_ids"] = s.assignment.column_class_ids;
  out["attributes"] = rows;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental classification over a shared attribute base"};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, data;
  RunFlags flags;
  double eval_tau = 0.5;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic scenario as CEB1 files");
  gen->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* run = app.add_subcommand("run", "Run the incremental pipeline and write report.json");
  run->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--seed", flags.seed, "Override the scenario seed");
  run->add_option("--tau", flags.tau, "Background threshold in (0,1)");
  run->add_flag("--per-class-topk", flags.per_class_topk, "Select H_a attributes per class");
  run->add_flag("--background-negatives", flags.background_negatives, "Train with background rows as negatives");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a data directory");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--data", data, "Data directory written by gen or the exporter")->required();
  eval->add_option("--tau", eval_tau, "Background threshold in (0,1)");

  auto* scores = app.add_subcommand("export-scores", "Print the attribute-class score matrix as JSON");
  scores->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : sa::exit_code(sa::Errc::config);
  }

  try {
    if (*gen) return cmd_gen(config_path, out);
    if (*run) return cmd_run(config_path, out, flags);
    if (*eval) return cmd_eval(checkpoint, data, eval_tau);
    if (*scores) return cmd_export_scores(checkpoint);
  } catch (const sa::Error& e) {
    std::cerr << "error (" << sa::errc_name(e.code()) << "): " << e.what() << "\n";
    return sa::exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return sa::exit_code(sa::Errc::io);
  }
  return 0;
}
