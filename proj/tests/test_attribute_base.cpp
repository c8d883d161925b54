#include <gtest/gtest.h>

#include <cmath>

#include "sharedattr/attribute_base.hpp"
#include "test_util.hpp"

using namespace sharedattr;
using testutil::expect_errc;

TEST(PromptTemplate, FormatsAndParses) {
  EXPECT_EQ(apply_prompt_template(Category::Color, "red"), "object which has color is red.");
  EXPECT_EQ(apply_prompt_template(Category::Environment, "under water"), "object which has environment is under water.");
  const auto parsed = parse_prompt("object which has material is wooden.");
  ASSERT_TRUE(parsed);
  EXPECT_EQ(parsed->first, Category::Material);
  EXPECT_EQ(parsed->second, "wooden");
  EXPECT_FALSE(parse_prompt("a photo of a dog"));
  EXPECT_FALSE(parse_prompt("object which has smell is bad."));
  expect_errc(Errc::config, [] { apply_prompt_template(Category::Size, ""); });
}

TEST(PromptTemplate, RoundTripsEveryCategory) {
  for (Category c : kAllCategories) {
    const auto parsed = parse_prompt(apply_prompt_template(c, "x y"));
    ASSERT_TRUE(parsed);
    EXPECT_EQ(parsed->first, c);
    EXPECT_EQ(parsed->second, "x y");
  }
  EXPECT_EQ(parse_category("TEXTURE"), Category::Texture);
  EXPECT_FALSE(parse_category("taste"));
}

TEST(SynthBase, UnitRowsAndCounts) {
  Rng rng(1);
  const SynthBase s = synth_base(rng, 10, 0, 8);
  EXPECT_EQ(s.base.size(), 10u);
  EXPECT_EQ(s.base.dim(), 8u);
  EXPECT_EQ(s.true_indices.size(), 10u);
  EXPECT_TRUE(s.distractor_indices.empty());
  for (std::size_t i = 0; i < s.base.size(); ++i) EXPECT_NEAR(norm(s.base.embedding(i)), 1.0, 1e-9);
}

TEST(SynthBase, DeterministicPerSeed) {
  Rng a(5), b(5), c(6);
  EXPECT_EQ(synth_base(a, 6, 3, 4).base.embeddings(), synth_base(b, 6, 3, 4).base.embeddings());
  Rng d(5);
  EXPECT_NE(synth_base(d, 6, 3, 4).base.embeddings(), synth_base(c, 6, 3, 4).base.embeddings());
}

TEST(SynthBase, TextsFollowTemplate) {
  Rng rng(2);
  const SynthBase s = synth_base(rng, 12, 4, 8);
  for (const auto& r : s.base.records()) {
    const auto parsed = parse_prompt(r.text);
    ASSERT_TRUE(parsed) << r.text;
    EXPECT_EQ(parsed->first, r.category);
  }
  EXPECT_EQ(s.distractor_indices.front(), 12u);
}

TEST(SynthBase, RejectsBadArguments) {
  Rng rng(1);
  expect_errc(Errc::config, [&] { synth_base(rng, 0, 3, 8); });
  expect_errc(Errc::config, [&] { synth_base(rng, 3, 3, 1); });
}

TEST(AttributeBase, ShapeChecks) {
  std::vector<AttributeRecord> recs = {{0, Category::Color, "object which has color is red."}};
  expect_errc(Errc::shape, [&] { AttributeBase(recs, Mat(2, 3, 1.0)); });
  expect_errc(Errc::data, [&] { AttributeBase({}, Mat(0, 3)); });
  Mat bad(1, 2, 1.0);
  bad(0, 1) = std::nan("");
  expect_errc(Errc::data, [&] { AttributeBase(recs, bad); });
}

TEST(LoadBase, HappyPathAndRoundTrip) {
  testutil::TempDir dir;
  Rng rng(3);
  const SynthBase s = synth_base(rng, 3, 0, 4);
  save_base(s.base, dir / "a.ceb1", dir / "a.json");
  const AttributeBase back = load_base(dir / "a.ceb1", dir / "a.json");
  EXPECT_EQ(back.size(), 3u);
  EXPECT_EQ(back.embeddings(), to_float_precision(s.base.embeddings()));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.record(i).text, s.base.record(i).text);
    EXPECT_EQ(back.record(i).category, s.base.record(i).category);
  }
}

TEST(LoadBase, CountMismatchIsManifestError) {
  testutil::TempDir dir;
  write_ceb1(dir / "a.ceb1", Mat(3, 4, 0.5));
  Manifest m;
  m.kind = "attributes";
  m.texts = {"object which has color is red.", "object which has shape is round."};
  write_manifest(dir / "a.json", m);
  expect_errc(Errc::manifest, [&] { load_base(dir / "a.ceb1", dir / "a.json"); });
}

TEST(LoadBase, UnknownCategoryAndNonAgnosticText) {
  testutil::TempDir dir;
  write_ceb1(dir / "a.ceb1", Mat(1, 4, 0.5));
  Manifest m;
  m.kind = "attributes";
  m.labels = {"Smell"};
  m.texts = {"object which has smell is bad."};
  write_manifest(dir / "a.json", m);
  expect_errc(Errc::manifest, [&] { load_base(dir / "a.ceb1", dir / "a.json"); });

  m.labels = {"Color"};
  m.texts = {"a red dog"};
  write_manifest(dir / "a.json", m);
  expect_errc(Errc::manifest, [&] { load_base(dir / "a.ceb1", dir / "a.json"); });

  m.kind = "visual";
  m.class_ids = {1};
  m.task_index = 1;
  write_manifest(dir / "a.json", m);
  expect_errc(Errc::manifest, [&] { load_base(dir / "a.ceb1", dir / "a.json"); });
}

TEST(LoadBase, TruncatedPayloadIsFormatError) {
  testutil::TempDir dir;
  auto bytes = encode_ceb1(Mat(3, 4, 0.5));
  bytes.pop_back();
  write_file_atomic(dir / "a.ceb1", bytes);
  Manifest m;
  m.kind = "attributes";
  m.texts = {"object which has color is a.", "object which has color is b.", "object which has color is c."};
  write_manifest(dir / "a.json", m);
  expect_errc(Errc::format, [&] { load_base(dir / "a.ceb1", dir / "a.json"); });
}

TEST(MaxAbsPairwiseCosine, HandComputed) {
  const Mat e(3, 2, {1.0, 0.0, 0.0, 1.0, -1.0, 1.0});
  EXPECT_NEAR(max_abs_pairwise_cosine(e), 1.0 / std::sqrt(2.0), 1e-15);
}
