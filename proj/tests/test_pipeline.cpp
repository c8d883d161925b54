#include <gtest/gtest.h>

#include <fstream>

#include "sharedattr/pipeline.hpp"
#include "test_util.hpp"

using namespace sharedattr;
using testutil::expect_errc;
using nlohmann::json;

namespace {

json small_json() {
  return json{{"scenario",
               {{"D", 16},
                {"partitions", {4, 2}},
                {"h", 3},
                {"samples_per_class_train", 30},
                {"samples_per_class_eval", 10},
                {"n_distractor_attributes", 8},
                {"n_background_samples", 5}}},
              {"adapt", {{"epochs", 100}}},
              {"refine", {{"epochs", 20}}}};
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const PipelineConfig d = config_from_json(json::object());
  EXPECT_EQ(d.scenario.partitions, (std::vector<std::size_t>{8, 4}));
  EXPECT_EQ(d.train.lambda_l1, 0.01);
  EXPECT_EQ(d.adapt.lambda1, 1.0);
  EXPECT_EQ(d.refine.lambda2, 1.0);
  EXPECT_EQ(d.effective_h_a(), 5u);
  EXPECT_EQ(d.tau, 0.5);
  EXPECT_EQ(d.adapt.m, 100u);

  const PipelineConfig c = config_from_json(small_json());
  EXPECT_EQ(c.scenario.dim, 16u);
  EXPECT_EQ(c.effective_h_a(), 3u);
  EXPECT_EQ(c.adapt.epochs, 100u);

  PipelineConfig loaded;
  loaded.data_dir = "somewhere";
  EXPECT_EQ(loaded.effective_h_a(), 25u);
}

TEST(Config, RoundTripsThroughJson) {
  const PipelineConfig c = config_from_json(small_json());
  const PipelineConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(fingerprint_of(back).config_hash, fingerprint_of(c).config_hash);
  json other = small_json();
  other["tau"] = 0.7;
  EXPECT_NE(fingerprint_of(config_from_json(other)).config_hash, fingerprint_of(c).config_hash);
}

TEST(Config, RejectsBadInput) {
  expect_errc(Errc::config, [] { config_from_json(json{{"bogus", 1}}); });
  expect_errc(Errc::config, [] { config_from_json(json{{"scenario", {{"dim", 3}}}}); });
  expect_errc(Errc::config, [] { config_from_json(json{{"train", {{"learning_rate", "fast"}}}}); });
  expect_errc(Errc::config, [] { config_from_json(json{{"tau", 1.5}}); });
  expect_errc(Errc::config, [] { config_from_json(json{{"filter", {{"H_a", 0}}}}); });
  expect_errc(Errc::config, [] { config_from_json(json{{"scenario", {{"partitions", json::array()}}}}); });
  expect_errc(Errc::config, [] { config_from_json(json::array()); });
  expect_errc(Errc::config, [] { load_config("/nonexistent/config.json"); });
}

TEST(Pipeline, SinglePhaseHasNoFpp) {
  json j = small_json();
  j["scenario"]["partitions"] = {4};
  const RunOutcome r = run_scenario(config_from_json(j), std::nullopt);
  ASSERT_EQ(r.report["tasks"].size(), 1u);
  EXPECT_TRUE(r.report["tasks"][0]["metrics"]["fpp_accuracy"].is_null());
  EXPECT_TRUE(r.report["complete"].get<bool>());
}

TEST(Pipeline, ReportIsDeterministicModuloTimings) {
  const PipelineConfig cfg = config_from_json(small_json());
  const RunOutcome a = run_scenario(cfg, std::nullopt), b = run_scenario(cfg, std::nullopt);
  EXPECT_EQ(strip_timings(a.report).dump(), strip_timings(b.report).dump());
  EXPECT_TRUE(a.report.contains("timings"));
}

TEST(Pipeline, BaseIsNeverMutated) {
  const RunOutcome r = run_scenario(config_from_json(small_json()), std::nullopt);
  EXPECT_EQ(r.base_hash_before, r.base_hash_after);
}

TEST(Pipeline, ReportFields) {
  const RunOutcome r = run_scenario(config_from_json(small_json()), std::nullopt);
  const json& rep = r.report;
  EXPECT_EQ(rep["schema_version"], kReportSchemaVersion);
  EXPECT_EQ(rep["config"]["train"]["lambda_l1"], 0.01);
  EXPECT_EQ(rep["hyperparams"]["H_a"], 3);
  EXPECT_EQ(rep["scenario"]["class_splits"].size(), 2u);
  const json& t2 = rep["tasks"][1];
  for (const char* key : {"per_task_accuracy", "overall_accuracy", "old_class_accuracy", "fpp_accuracy",
                          "false_positives", "background_samples", "confusion"}) {
    EXPECT_TRUE(t2["metrics"].contains(key)) << key;
  }
  EXPECT_EQ(t2["metrics"]["background_samples"], 10);
  for (const char* key : {"active_total", "reused_from_prev", "newly_added"}) EXPECT_TRUE(t2["sharing"].contains(key));
  EXPECT_EQ(t2["selected_attributes"].size(), 2u);
  EXPECT_EQ(t2["losses"]["assignment"].size(), 201u);
  EXPECT_EQ(t2["losses"]["adapt"].size(), 101u);
  EXPECT_EQ(t2["losses"]["refine"].size(), 21u);
}

TEST(Pipeline, WritesCheckpointPerTask) {
  testutil::TempDir dir;
  const RunOutcome r = run_scenario(config_from_json(small_json()), dir / "ck");
  for (int t = 1; t <= 2; ++t) {
    const fs::path p = dir / "ck" / ("task_" + std::to_string(t));
    ASSERT_TRUE(fs::exists(p / "state.json"));
    const LoadedCheckpoint ck = load_checkpoint(p);
    EXPECT_EQ(ck.state.e_hat, r.states[static_cast<std::size_t>(t - 1)].e_hat);
    EXPECT_EQ(ck.fingerprint.config_hash, fingerprint_of(config_from_json(small_json())).config_hash);
  }
}

TEST(Pipeline, NoiseFreeScenarioIsPerfect) {
  json j = small_json();
  j["scenario"]["noise_sigma"] = 0.0;
  const RunOutcome r = run_scenario(config_from_json(j), std::nullopt);
  EXPECT_EQ(r.report["tasks"][1]["metrics"]["overall_accuracy"].get<double>(), 1.0);
}

TEST(Pipeline, RunsFromExportedDataDirectory) {
  testutil::TempDir dir;
  const PipelineConfig gen_cfg = config_from_json(small_json());
  write_scenario_dir(generate_scenario(gen_cfg.scenario), dir / "data");
  EXPECT_TRUE(fs::exists(dir / "data" / "ground_truth.json"));
  json j = small_json();
  j.erase("scenario");
  j["data_dir"] = (dir / "data").string();
  j["filter"] = {{"H_a", 3}};
  const RunOutcome r = run_scenario(config_from_json(j), std::nullopt);
  ASSERT_EQ(r.report["tasks"].size(), 2u);
  EXPECT_GT(r.report["tasks"][1]["metrics"]["overall_accuracy"].get<double>(), 0.8);
  EXPECT_FALSE(r.truth);
}

TEST(Pipeline, PartialReportOnFailure) {
  testutil::TempDir dir;
  write_scenario_dir(generate_scenario(config_from_json(small_json()).scenario), dir / "data");
  // A corrupt task file must still leave a partial report behind.
  {
    std::fstream f(dir / "data" / "task_2.ceb1", std::ios::in | std::ios::out | std::ios::binary);
    f.put('Z');
  }
  json j = small_json();
  j.erase("scenario");
  j["data_dir"] = (dir / "data").string();
  json partial;
  try {
    run_scenario(config_from_json(j), std::nullopt, &partial);
    FAIL() << "expected a format error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::format);
  }
  EXPECT_FALSE(partial["complete"].get<bool>());
  EXPECT_TRUE(partial.contains("error"));
}

TEST(Pipeline, MissingDataIsIoError) {
  testutil::TempDir dir;
  fs::create_directories(dir / "empty");
  PipelineConfig cfg;
  cfg.data_dir = (dir / "empty").string();
  expect_errc(Errc::io, [&] { run_scenario(cfg, std::nullopt); });
}
