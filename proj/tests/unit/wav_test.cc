#include "tinybird/wav.h"

#include <random>

#include <gtest/gtest.h>

#include "test_util.h"
#include "tinybird/bytes.h"
#include "tinybird/error.h"

namespace tinybird {
namespace {

TEST(BytesTest, LittleEndianRoundTrip) {
  ByteWriter w;
  w.Put<std::uint16_t>(0x1234);
  w.Put<std::int32_t>(-2);
  w.Put<float>(1.5f);
  w.Put<std::uint8_t>(9);
  const auto bytes = w.Take();
  ASSERT_EQ(bytes.size(), 11u);
  EXPECT_EQ(bytes[0], 0x34);
  EXPECT_EQ(bytes[1], 0x12);
  EXPECT_EQ(bytes[2], 0xFE);
  EXPECT_EQ(bytes[5], 0xFF);

  ByteReader r(bytes);
  EXPECT_EQ(r.Get<std::uint16_t>(), 0x1234);
  EXPECT_EQ(r.Get<std::int32_t>(), -2);
  EXPECT_EQ(r.Get<float>(), 1.5f);
  EXPECT_EQ(r.Get<std::uint8_t>(), 9);
  EXPECT_FALSE(r.Get<std::uint8_t>().has_value());
}

TEST(WavTest, SerializeParseRoundTrip) {
  std::mt19937 rng(4);
  const auto pcm = testing::RandomPcm(rng, 999);
  const auto bytes = wav::SerializeWav(pcm, 22050);
  EXPECT_EQ(bytes.size(), 44u + 2 * 999);
  const auto parsed = wav::ParseWav(bytes);
  EXPECT_EQ(parsed.sample_rate, 22050u);
  EXPECT_EQ(parsed.samples, pcm);
}

TEST(WavTest, FileRoundTrip) {
  testing::TempDir dir("wav");
  const auto pcm = testing::Sine(440.0, 3000.0, 1600);
  wav::WriteWav(dir / "a.wav", pcm, 16000);
  const auto back = wav::ReadWav(dir / "a.wav");
  EXPECT_EQ(back.samples, pcm);
  EXPECT_EQ(back.sample_rate, 16000u);
}

TEST(WavTest, SkipsUnknownChunks) {
  auto bytes = wav::SerializeWav(std::vector<std::int16_t>{1, 2, 3}, 16000);
  // Insert a LIST chunk between fmt and data.
  const std::vector<std::uint8_t> list = {'L', 'I', 'S', 'T', 4, 0, 0, 0, 'a', 'b', 'c', 'd'};
  bytes.insert(bytes.begin() + 36, list.begin(), list.end());
  const std::uint32_t riff = static_cast<std::uint32_t>(bytes.size() - 8);
  for (int i = 0; i < 4; ++i) bytes[4 + i] = static_cast<std::uint8_t>(riff >> (8 * i));
  EXPECT_EQ(wav::ParseWav(bytes).samples, (std::vector<std::int16_t>{1, 2, 3}));
}

TEST(WavTest, RejectsUnsupportedFormats) {
  auto stereo = wav::SerializeWav(std::vector<std::int16_t>{1, 2}, 16000);
  stereo[22] = 2;
  EXPECT_THROW(wav::ParseWav(stereo), Error);

  auto eight_bit = wav::SerializeWav(std::vector<std::int16_t>{1, 2}, 16000);
  eight_bit[34] = 8;
  EXPECT_THROW(wav::ParseWav(eight_bit), Error);

  auto float_fmt = wav::SerializeWav(std::vector<std::int16_t>{1, 2}, 16000);
  float_fmt[20] = 3;
  EXPECT_THROW(wav::ParseWav(float_fmt), Error);

  const std::vector<std::uint8_t> junk = {'n', 'o', 'p', 'e'};
  try {
    wav::ParseWav(junk);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::kIo);
  }

  auto truncated = wav::SerializeWav(std::vector<std::int16_t>(10, 1), 16000);
  truncated.resize(truncated.size() - 5);
  EXPECT_THROW(wav::ParseWav(truncated), Error);
  EXPECT_THROW(wav::ReadWav("/nonexistent/x.wav"), Error);
}

}  // namespace
}  // namespace tinybird
