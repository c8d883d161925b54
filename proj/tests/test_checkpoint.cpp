#include <gtest/gtest.h>

#include <fstream>

#include "sharedattr/checkpoint.hpp"
#include "sharedattr/inference.hpp"
#include "sharedattr/pipeline.hpp"
#include "test_util.hpp"

using namespace sharedattr;
using testutil::expect_errc;

namespace {

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.scenario.dim = 16;
  cfg.scenario.partitions = {4, 2};
  cfg.scenario.h = 3;
  cfg.scenario.samples_per_class_train = 30;
  cfg.scenario.samples_per_class_eval = 10;
  cfg.scenario.n_distractor_attributes = 8;
  cfg.adapt.epochs = 100;
  cfg.refine.epochs = 20;
  return cfg;
}

const RunOutcome& small_run() {
  static const RunOutcome run = run_scenario(small_config(), std::nullopt);
  return run;
}

void rewrite_json(const fs::path& path, const std::function<void(nlohmann::json&)>& edit) {
  nlohmann::json j;
  std::ifstream(path) >> j;
  edit(j);
  std::ofstream(path) << j.dump(2);
}

}  // namespace

TEST(Checkpoint, RoundTripGivesBitIdenticalPredictions) {
  testutil::TempDir dir;
  const TaskState& state = small_run().states.back();
  save_checkpoint(state, dir / "ck", {1, 0xabcdef}, {"object which has color is red."});
  EXPECT_FALSE(fs::exists(dir / "ck.tmp"));
  const LoadedCheckpoint loaded = load_checkpoint(dir / "ck");
  EXPECT_EQ(loaded.fingerprint.seed, 1u);
  EXPECT_EQ(loaded.fingerprint.config_hash, 0xabcdefu);
  EXPECT_EQ(loaded.attribute_texts.size(), 1u);
  EXPECT_EQ(loaded.state.index_map.ids, state.index_map.ids);
  EXPECT_EQ(loaded.state.index_map.added_at, state.index_map.added_at);
  EXPECT_EQ(loaded.state.assignment.values, state.assignment.values);
  EXPECT_EQ(loaded.state.e_hat, state.e_hat);
  EXPECT_EQ(loaded.state.task_index, state.task_index);
  EXPECT_EQ(loaded.state.hyperparams, state.hyperparams);

  Rng rng(100);
  for (int k = 0; k < 100; ++k) {
    Vec probe(16);
    for (auto& v : probe) v = rng.gaussian();
    const Prediction a = classify(state, probe, 0.5), b = classify(loaded.state, probe, 0.5);
    ASSERT_EQ(a.best_class, b.best_class);
    ASSERT_EQ(a.score, b.score);
    ASSERT_EQ(a.probabilities, b.probabilities);
  }
}

TEST(Checkpoint, OverwritesExistingDirectory) {
  testutil::TempDir dir;
  save_checkpoint(small_run().states.front(), dir / "ck", {1, 1});
  save_checkpoint(small_run().states.back(), dir / "ck", {1, 2});
  const LoadedCheckpoint loaded = load_checkpoint(dir / "ck");
  EXPECT_EQ(loaded.state.task_index, 2);
  EXPECT_EQ(loaded.fingerprint.config_hash, 2u);
}

TEST(Checkpoint, TamperedMagicIsFormatError) {
  testutil::TempDir dir;
  save_checkpoint(small_run().states.back(), dir / "ck", {1, 1});
  {
    std::fstream f(dir / "ck" / "ehat.ceb1", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  expect_errc(Errc::format, [&] { load_checkpoint(dir / "ck"); });
}

TEST(Checkpoint, NewerFormatVersionIsVersionError) {
  testutil::TempDir dir;
  save_checkpoint(small_run().states.back(), dir / "ck", {1, 1});
  rewrite_json(dir / "ck" / "state.json", [](auto& j) { j["format_version"] = kCheckpointFormatVersion + 1; });
  expect_errc(Errc::version, [&] { load_checkpoint(dir / "ck"); });
}

TEST(Checkpoint, MissingOrBrokenFiles) {
  testutil::TempDir dir;
  expect_errc(Errc::io, [&] { load_checkpoint(dir / "absent"); });
  save_checkpoint(small_run().states.back(), dir / "ck", {1, 1});
  fs::remove(dir / "ck" / "ehat.ceb1");
  expect_errc(Errc::io, [&] { load_checkpoint(dir / "ck"); });

  save_checkpoint(small_run().states.back(), dir / "ck", {1, 1});
  std::ofstream(dir / "ck" / "assignment.json") << "{ broken";
  expect_errc(Errc::format, [&] { load_checkpoint(dir / "ck"); });

  save_checkpoint(small_run().states.back(), dir / "ck", {1, 1});
  rewrite_json(dir / "ck" / "assignment.json", [](auto& j) { j["columns"][0]["rows"].push_back(100000); });
  expect_errc(Errc::format, [&] { load_checkpoint(dir / "ck"); });

  save_checkpoint(small_run().states.back(), dir / "ck", {1, 1});
  rewrite_json(dir / "ck" / "state.json", [](auto& j) { j.erase("id_t"); });
  expect_errc(Errc::format, [&] { load_checkpoint(dir / "ck"); });
}

TEST(Checkpoint, InconsistentStateIsRejected) {
  testutil::TempDir dir;
  save_checkpoint(small_run().states.back(), dir / "ck", {1, 1});
  rewrite_json(dir / "ck" / "state.json", [](auto& j) {
    j["id_t"].push_back(999);
    j["added_at"].push_back(2);
  });
  expect_errc(Errc::state, [&] { load_checkpoint(dir / "ck"); });
}

TEST(Checkpoint, AssignmentStoredAsSortedRowLists) {
  testutil::TempDir dir;
  const TaskState& state = small_run().states.back();
  save_checkpoint(state, dir / "ck", {1, 1});
  nlohmann::json j;
  std::ifstream(dir / "ck" / "assignment.json") >> j;
  ASSERT_EQ(j["columns"].size(), state.num_classes());
  for (std::size_t c = 0; c < state.num_classes(); ++c) {
    const auto rows = j["columns"][c]["rows"].get<std::vector<std::size_t>>();
    EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end()));
    EXPECT_EQ(j["columns"][c]["class_id"].get<ClassId>(), state.registry.at(c).id);
  }
}
