#include "tinybird/pipeline.h"

#include <functional>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.h"
#include "tinybird/corpus.h"
#include "tinybird/error.h"

namespace tinybird::pipeline {
namespace {

// Runs of positives, merged across gaps shorter than the hangover, then
// filtered by length.
std::vector<BlockRange> SegmentOracle(const std::vector<bool>& d, const SegmenterConfig& c) {
  std::vector<BlockRange> runs;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d[i]) continue;
    if (!runs.empty() && i - runs.back().offset - 1 < c.hangover) {
      runs.back().offset = i;
    } else {
      runs.push_back({i, i});
    }
  }
  std::vector<BlockRange> out;
  for (const auto& r : runs) {
    if (r.length() >= c.min_len) out.push_back(r);
  }
  return out;
}

// Plain recursive Levenshtein with a memo table.
std::size_t EditOracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    return memo[key] = best;
  };
  return go(0, 0);
}

TEST(PipelineTest, SegmenterExamples) {
  const std::vector<bool> d = {1, 1, 0, 1, 1};
  EXPECT_EQ(Segment(d, {1, 1}), (std::vector<BlockRange>{{0, 1}, {3, 4}}));
  EXPECT_EQ(Segment(d, {2, 1}), (std::vector<BlockRange>{{0, 4}}));
  EXPECT_EQ(Segment(d, {1, 3}), std::vector<BlockRange>{});
  EXPECT_TRUE(Segment(std::vector<bool>(20, false)).empty());
  EXPECT_EQ(Segment(std::vector<bool>(5, true)), (std::vector<BlockRange>{{0, 4}}));
  EXPECT_THROW(Segmenter({0, 1}), Error);
  EXPECT_THROW(Segmenter({1, 0}), Error);
}

TEST(PipelineTest, SegmenterReportsAfterHangover) {
  Segmenter s({2, 1});
  EXPECT_FALSE(s.Push(true));
  EXPECT_FALSE(s.Push(false));
  EXPECT_TRUE(s.in_syllable());
  const auto r = s.Push(false);
  ASSERT_TRUE(r);
  EXPECT_EQ(*r, (BlockRange{0, 0}));
  EXPECT_FALSE(s.in_syllable());
  EXPECT_FALSE(s.Finish());
}

TEST(PipelineTest, SegmenterMatchesOracleProperty) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = rng() % 60;
    const double p = (rng() % 100) / 100.0;
    std::vector<bool> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = (rng() % 1000) / 1000.0 < p;
    const SegmenterConfig c{1 + static_cast<std::uint32_t>(rng() % 4),
                            1 + static_cast<std::uint32_t>(rng() % 4)};
    ASSERT_EQ(Segment(d, c), SegmentOracle(d, c)) << trial;
  }
}

TEST(PipelineTest, SelectBlocks) {
  EXPECT_EQ(SelectBlocks(5, 5), (std::array<std::uint64_t, 3>{5, 5, 5}));
  EXPECT_EQ(SelectBlocks(5, 6), (std::array<std::uint64_t, 3>{5, 6, 6}));
  EXPECT_EQ(SelectBlocks(0, 2), (std::array<std::uint64_t, 3>{0, 1, 2}));
  EXPECT_EQ(SelectBlocks(10, 13), (std::array<std::uint64_t, 3>{10, 12, 13}));
  EXPECT_THROW(SelectBlocks(3, 2), Error);
  for (std::uint64_t len = 1; len < 50; ++len) {
    const auto p = SelectBlocks(100, 100 + len - 1);
    // round_half_up((L - 1) / 2) computed in floating point.
    EXPECT_EQ(p[1], 100 + static_cast<std::uint64_t>(std::floor((len - 1) / 2.0 + 0.5)));
  }
}

TEST(PipelineTest, EditDistanceMatchesOracleProperty) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> a(rng() % 9);
    std::vector<int> b(rng() % 9);
    for (auto& v : a) v = static_cast<int>(rng() % 4);
    for (auto& v : b) v = static_cast<int>(rng() % 4);
    ASSERT_EQ(EditDistance(a, b), EditOracle(a, b)) << trial;
  }
}

TEST(PipelineTest, SyllableErrorRate) {
  const std::vector<int> ref = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(SyllableErrorRate(ref, ref), 0.0);
  const std::vector<int> sub = {1, 2, 0, 4};
  EXPECT_DOUBLE_EQ(SyllableErrorRate(sub, ref), 0.25);
  const std::vector<int> none;
  EXPECT_DOUBLE_EQ(SyllableErrorRate(none, ref), 1.0);
  EXPECT_THROW(SyllableErrorRate(ref, none), Error);
}

TEST(PipelineTest, JsonlRoundTrip) {
  std::vector<TimedEvent> events = {{0.0, 48.0, 3, 0.0}, {96.0, 160.0, 7, 48.0}};
  std::stringstream io;
  WriteEventsJsonl(events, io);
  EXPECT_EQ(io.str().substr(0, io.str().find('\n')),
            R"({"onset_ms":0.0,"offset_ms":48.0,"label":3,"gap_ms":0.0})");
  const auto back = ReadEventsJsonl(io);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].label, 7);
  EXPECT_DOUBLE_EQ(back[1].gap_ms, 48.0);
  EXPECT_EQ(Labels(back), (std::vector<int>{3, 7}));

  std::istringstream bad("{\"onset_ms\": 1}\n");
  EXPECT_THROW(ReadEventsJsonl(bad), Error);
  std::istringstream blank("\n  \n");
  EXPECT_TRUE(ReadEventsJsonl(blank).empty());
}

TEST(PipelineTest, EventRecordRoundTripProperty) {
  std::mt19937 rng(3);
  std::uint64_t prev_end = 0;
  for (int i = 0; i < 500; ++i) {
    SyllableEvent e;
    e.gap_blocks = rng() % 100000;
    e.onset_block = prev_end + e.gap_blocks;
    e.offset_block = e.onset_block + rng() % 300;
    e.label = static_cast<std::uint8_t>(rng() % 8);
    const auto rec = EncodeEventRecord(e);
    const auto back = DecodeEventRecord(rec, prev_end);
    EXPECT_EQ(back.onset_block, e.onset_block);
    EXPECT_EQ(back.offset_block, e.offset_block);
    EXPECT_EQ(back.label, e.label);
    EXPECT_EQ(back.gap_blocks, e.gap_blocks);
    prev_end = e.offset_block + 1;
  }
  const std::array<std::uint8_t, 7> zero_len = {0, 0, 0, 0, 0, 0, 1};
  EXPECT_THROW(DecodeEventRecord(zero_len, 0), Error);
  EXPECT_THROW(DecodeEventRecord(std::span(zero_len).first(5), 0), Error);
}

TEST(PipelineTest, TimedEventsUseBlockEdges) {
  SyllableEvent e;
  e.onset_block = 2;
  e.offset_block = 4;
  e.gap_blocks = 2;
  const auto t = ToTimed(e, 16.0);
  EXPECT_DOUBLE_EQ(t.onset_ms, 32.0);
  EXPECT_DOUBLE_EQ(t.offset_ms, 80.0);
  EXPECT_DOUBLE_EQ(t.gap_ms, 32.0);
}

TEST(PipelineTest, SilenceProducesNoEvents) {
  const auto models = tinyml::LoadModel(testing::FixtureModel());
  const std::vector<std::int16_t> silence(256 * 100, 0);
  const auto r = RunPipeline(silence, models, {});
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.timing.blocks, 100u);
  EXPECT_EQ(r.timing.detector_invocations, 100u);
  EXPECT_EQ(r.timing.classifier_invocations, 0u);
  EXPECT_EQ(r.timing.trailing_gap_blocks, 100u);
  EXPECT_TRUE(RunPipeline({}, models, {}).events.empty());
}

class CorpusPipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    models_ = new tinyml::ModelBundle(tinyml::LoadModel(testing::FixtureModel()));
    corpus::CorpusConfig config;
    config.seed = 2024;
    config.n_motifs = 30;
    corpus_ = new corpus::Corpus(corpus::Generate(config));
    result_ = new PipelineResult(RunPipeline(corpus_->samples, *models_, {}));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete corpus_;
    delete models_;
  }
  static tinyml::ModelBundle* models_;
  static corpus::Corpus* corpus_;
  static PipelineResult* result_;
};

tinyml::ModelBundle* CorpusPipelineTest::models_ = nullptr;
corpus::Corpus* CorpusPipelineTest::corpus_ = nullptr;
PipelineResult* CorpusPipelineTest::result_ = nullptr;

TEST_F(CorpusPipelineTest, Accounting) {
  const auto& t = result_->timing;
  EXPECT_EQ(t.blocks, (corpus_->samples.size() + 255) / 256);
  EXPECT_EQ(t.detector_invocations, t.blocks);
  EXPECT_EQ(t.classifier_invocations, t.segments);
  EXPECT_EQ(t.segments, result_->events.size());
  EXPECT_EQ(result_->detections.size(), t.blocks);
  EXPECT_NEAR(t.compute_ms, t.blocks * 1.2 + t.segments * 4.2, 1e-6);
  EXPECT_EQ(Segment(result_->detections).size(), result_->events.size());
}

TEST_F(CorpusPipelineTest, EventsAreOrderedWithConsistentGaps) {
  std::uint64_t prev_end = 0;
  for (const auto& e : result_->events) {
    EXPECT_GE(e.onset_block, prev_end);
    EXPECT_EQ(e.gap_blocks, e.onset_block - prev_end);
    EXPECT_GE(e.emitted_block, e.offset_block);
    EXPECT_LE(e.emitted_block, e.offset_block + 1);
    prev_end = e.offset_block + 1;
  }
  const double block_ms = 16.0;
  EXPECT_LE(result_->timing.max_event_latency_ms, block_ms + 4.2 + 1e-9);
}

TEST_F(CorpusPipelineTest, BoundariesWithinOneBlock) {
  std::size_t hits = 0;
  for (const auto& s : corpus_->syllables) {
    const auto r = s.blocks(256);
    for (const auto& e : result_->events) {
      const auto d_on = static_cast<std::int64_t>(e.onset_block) - static_cast<std::int64_t>(r.onset);
      const auto d_off = static_cast<std::int64_t>(e.offset_block) - static_cast<std::int64_t>(r.offset);
      if (std::abs(d_on) <= 1 && std::abs(d_off) <= 1) {
        ++hits;
        break;
      }
    }
  }
  EXPECT_GE(hits * 100, corpus_->syllables.size() * 95) << hits << "/" << corpus_->syllables.size();
}

TEST_F(CorpusPipelineTest, SerOnHeldOutCorpus) {
  std::vector<int> predicted;
  for (const auto& e : result_->events) predicted.push_back(e.label);
  const auto reference = Labels(corpus_->Events());
  EXPECT_LE(SyllableErrorRate(predicted, reference), 0.10);
}

}  // namespace
}  // namespace tinybird::pipeline
