#include "crashscene/io.hpp"

#include <gtest/gtest.h>

#include <random>

#include "crashscene/errors.hpp"

namespace crashscene::io {
namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("crashscene_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(IoTest, DepthPgmRoundTrip) {
  camera::DepthMap d(5, 3);
  d.at(0, 0) = 20.0;
  d.at(4, 2) = 255.99609375;  // 65535 / 256
  d.at(2, 1) = 1.0 / 256.0;
  d.at(3, 1) = -4.0;   // invalid stays invalid
  d.at(1, 1) = 300.0;  // beyond range
  write_depth_pgm(dir_ / "d.pgm", d);
  const camera::DepthMap r = read_depth_pgm(dir_ / "d.pgm");
  EXPECT_EQ(r.width, 5);
  EXPECT_EQ(r.height, 3);
  EXPECT_EQ(r.at(0, 0), 20.0);
  EXPECT_EQ(r.at(4, 2), 255.99609375);
  EXPECT_EQ(r.at(2, 1), 1.0 / 256.0);
  EXPECT_EQ(r.at(3, 1), 0.0);
  EXPECT_EQ(r.at(1, 1), 0.0);
}

TEST_F(IoTest, DepthPgmIsBigEndianWithComments) {
  // Sample 0x0102 = 258 -> 258/256 m.
  write_text(dir_ / "c.pgm", std::string("P5\n# comment\n1 1\n65535\n") + '\x01' + '\x02');
  EXPECT_DOUBLE_EQ(read_depth_pgm(dir_ / "c.pgm").at(0, 0), 258.0 / 256.0);
  EXPECT_DOUBLE_EQ(read_depth_pgm(dir_ / "c.pgm", 0.001).at(0, 0), 0.258);
}

TEST_F(IoTest, DepthPgmErrors) {
  EXPECT_THROW(read_depth_pgm(dir_ / "missing.pgm"), IoError);
  write_text(dir_ / "p2.pgm", "P2\n1 1\n65535\n0\n");
  EXPECT_THROW(read_depth_pgm(dir_ / "p2.pgm"), FormatError);
  write_text(dir_ / "short.pgm", "P5\n2 2\n65535\n\x01");
  EXPECT_THROW(read_depth_pgm(dir_ / "short.pgm"), FormatError);
  write_text(dir_ / "eight.pgm", std::string("P5\n1 1\n255\n") + '\x05');
  EXPECT_THROW(read_depth_pgm(dir_ / "eight.pgm"), FormatError);
}

TEST_F(IoTest, MaskPngAndPgm) {
  std::mt19937 rng(3);
  camera::PixelMask m(17, 9);
  for (auto& b : m.member) b = rng() % 3 == 0;
  write_mask_png(dir_ / "m.png", m);
  EXPECT_EQ(read_mask(dir_ / "m.png").member, m.member);

  std::string pgm = "P5\n3 1\n255\n";
  pgm += std::string("\x00\x07\x00", 3);
  write_text(dir_ / "m.pgm", pgm);
  const auto p = read_mask(dir_ / "m.pgm");
  EXPECT_EQ(p.member, (std::vector<std::uint8_t>{0, 1, 0}));
  const auto px = mask_pixels(p);
  ASSERT_EQ(px.size(), 1u);
  EXPECT_EQ(px[0].u, 1.0);
  EXPECT_EQ(px[0].v, 0.0);

  EXPECT_THROW(read_mask(dir_ / "m.bmp"), FormatError);
  write_text(dir_ / "bad.png", "not a png");
  EXPECT_THROW(read_mask(dir_ / "bad.png"), IoError);
}

TEST_F(IoTest, LanesJsonl) {
  std::map<int, std::vector<camera::PixelCoord>> lanes;
  lanes[0] = {{1.5, 2.0}, {3.0, 4.0}};
  lanes[7] = {};
  write_text(dir_ / "lanes.jsonl", lanes_to_jsonl(lanes));
  const auto r = read_lanes_jsonl(dir_ / "lanes.jsonl");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.at(0)[1].u, 3.0);
  EXPECT_TRUE(r.at(7).empty());
  write_text(dir_ / "bad.jsonl", "{\"frame\": 1, \"pixels\": [[1]]}\n");
  EXPECT_THROW(read_lanes_jsonl(dir_ / "bad.jsonl"), FormatError);
}

TEST(DetectionsTest, ParseAndRoundTrip) {
  const std::string text =
      "{\"frame\": 3, \"bbox\": [10, 20, 30.5, 40], \"score\": 0.9, \"class\": \"car\"}\n"
      "\n"
      "{\"frame\": 5, \"bbox\": [1, 2, 3, 4], \"score\": 0.5, \"mask_file\": \"m/5.png\", \"class\": \"truck\"}\n";
  const auto d = parse_detections_jsonl(text);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].frame, 3);
  EXPECT_EQ(d[0].bbox.u_max, 30.5);
  EXPECT_FALSE(d[0].mask_file.has_value());
  EXPECT_EQ(*d[1].mask_file, "m/5.png");
  EXPECT_EQ(d[1].label, "truck");
  const auto again = parse_detections_jsonl(detections_to_jsonl(d));
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again[1].bbox, d[1].bbox);
  EXPECT_EQ(again[1].mask_file, d[1].mask_file);
  EXPECT_EQ(detections_to_jsonl(again), detections_to_jsonl(d));
}

TEST(DetectionsTest, Malformed) {
  EXPECT_THROW(parse_detections_jsonl("{\"frame\": 1}\n"), FormatError);
  EXPECT_THROW(parse_detections_jsonl("{\"frame\": 1, \"bbox\": [1, 2, 3]}\n"), FormatError);
  EXPECT_THROW(parse_detections_jsonl("{\"frame\": 1, \"bbox\": [5, 2, 3, 4]}\n"), FormatError);
  EXPECT_THROW(parse_detections_jsonl("not json\n"), FormatError);
  try {
    parse_detections_jsonl("{\"frame\": 1, \"bbox\": [1, 2, 3, 4]}\n{\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(OdometryTest, ParseAndRoundTrip) {
  const auto o = parse_odometry_csv("frame,x,y,yaw\n0,1.5,-2,0.25\r\n1,2,3,-1\n");
  ASSERT_EQ(o.size(), 2u);
  EXPECT_EQ(o[0].frame, 0);
  EXPECT_EQ(o[0].x, 1.5);
  EXPECT_EQ(o[1].yaw, -1.0);
  const auto again = parse_odometry_csv(odometry_to_csv(o));
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again[0].y, -2.0);
  EXPECT_THROW(parse_odometry_csv("0,1,2,3\n"), FormatError);  // header required
  EXPECT_THROW(parse_odometry_csv("frame,x,y,yaw\n0,1,2\n"), FormatError);
  EXPECT_THROW(parse_odometry_csv("frame,x,y,yaw\n0,1,2,3,4\n"), FormatError);
}

}  // namespace
}  // namespace crashscene::io
