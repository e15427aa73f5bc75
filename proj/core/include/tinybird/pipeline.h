#ifndef TINYBIRD_PIPELINE_H_
#define TINYBIRD_PIPELINE_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinybird/audio.h"
#include "tinybird/dsp.h"
#include "tinybird/tinyml.h"

namespace tinybird::pipeline {

// Inclusive block range.
struct BlockRange {
  std::uint64_t onset = 0;
  std::uint64_t offset = 0;

  std::uint64_t length() const { return offset - onset + 1; }
  bool operator==(const BlockRange&) const = default;
};

struct SegmenterConfig {
  // Consecutive negative blocks that close a syllable.
  std::uint32_t hangover = 1;
  // Shorter segments are discarded.
  std::uint32_t min_len = 1;
};

// Hangover state machine over per-block detector decisions. The offset is the
// last positive block; a segment is reported once `hangover` negatives follow
// it, or at Finish().
class Segmenter {
 public:
  explicit Segmenter(const SegmenterConfig& config = {});

  std::optional<BlockRange> Push(bool positive);
  std::optional<BlockRange> Finish();

  bool in_syllable() const { return in_syllable_; }
  std::uint64_t onset() const { return onset_; }
  std::uint32_t hangover_remaining() const { return hangover_remaining_; }
  std::uint64_t blocks_seen() const { return next_index_; }

 private:
  std::optional<BlockRange> Close();

  SegmenterConfig config_;
  bool in_syllable_ = false;
  std::uint64_t onset_ = 0;
  std::uint64_t last_positive_ = 0;
  std::uint32_t hangover_remaining_ = 0;
  std::uint64_t next_index_ = 0;
};

std::vector<BlockRange> Segment(const std::vector<bool>& decisions,
                                const SegmenterConfig& config = {});

// First, middle and last block: onset + round_half_up(i * (L - 1) / 2).
std::array<std::uint64_t, 3> SelectBlocks(std::uint64_t onset, std::uint64_t offset);

struct SyllableEvent {
  std::uint64_t onset_block = 0;
  std::uint64_t offset_block = 0;
  std::uint8_t label = 0;
  // Blocks between the previous event's offset (or stream start) and onset.
  std::uint64_t gap_blocks = 0;
  // Block index at which the event became available.
  std::uint64_t emitted_block = 0;
  double confidence = 0.0;

  std::uint64_t duration_blocks() const { return offset_block - onset_block + 1; }
  bool operator==(const SyllableEvent&) const = default;
};

struct PipelineConfig {
  std::size_t block_size = audio::kDefaultBlockSize;
  std::uint32_t sample_rate = audio::kDefaultSampleRate;
  SegmenterConfig segmenter;
  dsp::MelFilterbankConfig filterbank;
  // Per-invocation inference times on the node; metadata only.
  double detector_ms = 1.2;
  double classifier_ms = 4.2;
};

struct TimingReport {
  std::uint64_t blocks = 0;
  std::uint64_t detector_invocations = 0;
  std::uint64_t classifier_invocations = 0;
  std::uint64_t segments = 0;
  double block_ms = 0.0;
  double detector_ms = 0.0;
  double classifier_ms = 0.0;
  // Modeled on-node compute time and its share of the stream duration.
  double compute_ms = 0.0;
  double compute_duty = 0.0;
  // offset + hangover blocks + classifier time, worst case over events.
  double max_event_latency_ms = 0.0;
  // Blocks after the last event's offset.
  std::uint64_t trailing_gap_blocks = 0;
};

// Streaming detector/segmenter/classifier for one stream. Blocks must be
// pushed in order.
class EventPipeline {
 public:
  EventPipeline(const tinyml::ModelBundle& models, const PipelineConfig& config);

  std::optional<SyllableEvent> Push(const audio::AudioBlock& block);
  std::optional<SyllableEvent> Finish();

  const TimingReport& timing() const { return timing_; }
  const std::vector<bool>& detections() const { return detections_; }

 private:
  std::optional<SyllableEvent> Emit(const BlockRange& range, std::uint64_t now);

  const tinyml::ModelBundle& models_;
  PipelineConfig config_;
  dsp::MfccExtractor extractor_;
  Segmenter segmenter_;
  tinyml::ScratchArena arena_;
  // MFCCs from the current onset onwards.
  std::vector<dsp::MfccVector> history_;
  std::uint64_t history_start_ = 0;
  std::optional<std::uint64_t> last_offset_;
  std::vector<bool> detections_;
  TimingReport timing_;
};

struct PipelineResult {
  std::vector<SyllableEvent> events;
  TimingReport timing;
  std::vector<bool> detections;
};

PipelineResult RunPipeline(std::span<const std::int16_t> pcm,
                           const tinyml::ModelBundle& models, const PipelineConfig& config);

// Levenshtein distance with unit costs.
std::size_t EditDistance(std::span<const int> predicted, std::span<const int> reference);
// EditDistance / reference length. Throws on an empty reference.
double SyllableErrorRate(std::span<const int> predicted, std::span<const int> reference);

// Event with millisecond timing, the JSONL schema shared with the corpus
// ground truth: {"onset_ms", "offset_ms", "label", "gap_ms"}.
struct TimedEvent {
  double onset_ms = 0.0;
  double offset_ms = 0.0;
  int label = 0;
  double gap_ms = 0.0;
};

TimedEvent ToTimed(const SyllableEvent& event, double block_ms);
std::string ToJsonLine(const TimedEvent& event);
void WriteEventsJsonl(std::span<const TimedEvent> events, std::ostream& out);
std::vector<TimedEvent> ReadEventsJsonl(std::istream& in);
std::vector<int> Labels(std::span<const TimedEvent> events);

// Compact record: gap_blocks u32 | duration_blocks u16 | label u8.
inline constexpr std::size_t kEventRecordSize = 7;
std::array<std::uint8_t, kEventRecordSize> EncodeEventRecord(const SyllableEvent& event);
SyllableEvent DecodeEventRecord(std::span<const std::uint8_t> record,
                                std::uint64_t previous_offset_end);

}  // namespace tinybird::pipeline

#endif  // TINYBIRD_PIPELINE_H_
