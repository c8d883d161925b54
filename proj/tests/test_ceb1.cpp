#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "sharedattr/ceb1.hpp"
#include "test_util.hpp"

using namespace sharedattr;
using testutil::expect_errc;

namespace {

std::vector<unsigned char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Ceb1, EncodesHandAssembledBytes) {
  const Mat m(1, 2, {1.0, -2.0});
  const std::vector<unsigned char> want = {
      'C', 'E', 'B', '1',                              // magic
      0x01, 0x00, 0x00, 0x00,                          // version 1
      0x02, 0x00, 0x00, 0x00,                          // D = 2
      0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // R = 1
      0x00, 0x00, 0x80, 0x3f,                          // 1.0f
      0x00, 0x00, 0x00, 0xc0,                          // -2.0f
  };
  EXPECT_EQ(encode_ceb1(m), want);
  EXPECT_EQ(decode_ceb1(want), m);
}

TEST(Ceb1, FileRoundTripIsFloatExact) {
  testutil::TempDir dir;
  Rng rng(4);
  const Mat m = to_float_precision(testutil::random_mat(rng, 7, 5));
  write_ceb1(dir / "x.ceb1", m);
  EXPECT_EQ(read_ceb1(dir / "x.ceb1"), m);
  EXPECT_EQ(fs::file_size(dir / "x.ceb1"), kCeb1HeaderSize + 7 * 5 * 4);
  EXPECT_FALSE(fs::exists(dir / "x.ceb1.tmp"));
}

TEST(Ceb1, ZeroRowsRoundTrip) {
  const Mat m(0, 3);
  const Mat back = decode_ceb1(encode_ceb1(m));
  EXPECT_EQ(back.rows(), 0u);
  EXPECT_EQ(back.cols(), 3u);
}

TEST(Ceb1, RejectsBadMagic) {
  auto bytes = encode_ceb1(Mat(2, 2, 1.0));
  bytes[0] = 'X';
  expect_errc(Errc::format, [&] { decode_ceb1(bytes); });
}

TEST(Ceb1, RejectsOtherVersion) {
  auto bytes = encode_ceb1(Mat(2, 2, 1.0));
  bytes[4] = 2;
  expect_errc(Errc::format, [&] { decode_ceb1(bytes); });
}

TEST(Ceb1, RejectsTruncatedPayload) {
  testutil::TempDir dir;
  write_ceb1(dir / "t.ceb1", Mat(3, 4, 0.5));
  auto bytes = file_bytes(dir / "t.ceb1");
  bytes.resize(bytes.size() - 1);
  put_bytes(dir / "t.ceb1", bytes);
  expect_errc(Errc::format, [&] { read_ceb1(dir / "t.ceb1"); });
}

TEST(Ceb1, RejectsTrailingBytesAndShortHeader) {
  auto bytes = encode_ceb1(Mat(1, 1, 1.0));
  bytes.push_back(0);
  expect_errc(Errc::format, [&] { decode_ceb1(bytes); });
  const std::vector<unsigned char> tiny = {'C', 'E', 'B'};
  expect_errc(Errc::format, [&] { decode_ceb1(tiny); });
}

TEST(Ceb1, RejectsHugeRowCountWithoutAllocating) {
  auto bytes = encode_ceb1(Mat(1, 1, 1.0));
  for (int i = 12; i < 20; ++i) bytes[static_cast<std::size_t>(i)] = 0xff;
  expect_errc(Errc::format, [&] { decode_ceb1(bytes); });
}

TEST(Ceb1, RejectsNonFiniteValues) {
  auto bytes = encode_ceb1(Mat(1, 1, 1.0));
  // 0x7fc00000 is a quiet NaN.
  bytes[20] = 0x00;
  bytes[21] = 0x00;
  bytes[22] = 0xc0;
  bytes[23] = 0x7f;
  expect_errc(Errc::data, [&] { decode_ceb1(bytes); });
}

TEST(Ceb1, MissingFileIsIoError) {
  expect_errc(Errc::io, [] { read_ceb1("/nonexistent/dir/x.ceb1"); });
}

TEST(Manifest, RoundTripsVisual) {
  testutil::TempDir dir;
  Manifest m;
  m.kind = "visual";
  m.labels = {"cat", "dog", "cat"};
  m.class_ids = {3, 9, 3};
  m.task_index = 2;
  m.splits = {"train", "eval", "train"};
  write_manifest(dir / "m.json", m);
  const Manifest back = read_manifest(dir / "m.json");
  EXPECT_EQ(back.kind, "visual");
  EXPECT_EQ(back.labels, m.labels);
  EXPECT_EQ(back.class_ids, m.class_ids);
  EXPECT_EQ(back.task_index, 2);
  EXPECT_EQ(back.splits, m.splits);
}

TEST(Manifest, RequiredFields) {
  using nlohmann::json;
  expect_errc(Errc::manifest, [] { manifest_from_json(json::array()); });
  expect_errc(Errc::manifest, [] { manifest_from_json(json{{"texts", json::array()}}); });
  expect_errc(Errc::manifest, [] { manifest_from_json(json{{"kind", "audio"}}); });
  expect_errc(Errc::manifest, [] { manifest_from_json(json{{"kind", "attributes"}}); });
  expect_errc(Errc::manifest, [] { manifest_from_json(json{{"kind", "visual"}, {"task_index", 1}}); });
  expect_errc(Errc::manifest, [] { manifest_from_json(json{{"kind", "visual"}, {"class_ids", {1}}}); });
  expect_errc(Errc::manifest, [] { manifest_from_json(json{{"kind", "attributes"}, {"texts", "nope"}}); });
  EXPECT_NO_THROW(manifest_from_json(json{{"kind", "attributes"}, {"texts", {"object which has color is red."}}}));
}

TEST(Manifest, MalformedJsonFile) {
  testutil::TempDir dir;
  std::ofstream(dir / "bad.json") << "{ not json";
  expect_errc(Errc::manifest, [&] { read_manifest(dir / "bad.json"); });
}
