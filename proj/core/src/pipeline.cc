#include "tinybird/pipeline.h"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "tinybird/bytes.h"
#include "tinybird/error.h"

namespace tinybird::pipeline {
namespace {

constexpr const char* kModule = "pipeline";

}  // namespace

Segmenter::Segmenter(const SegmenterConfig& config) : config_(config) {
  if (config.hangover == 0) throw ConfigError(kModule, "hangover must be at least one block");
  if (config.min_len == 0) throw ConfigError(kModule, "min_len must be at least one block");
}

std::optional<BlockRange> Segmenter::Close() {
  in_syllable_ = false;
  hangover_remaining_ = 0;
  const BlockRange range{onset_, last_positive_};
  if (range.length() < config_.min_len) return std::nullopt;
  return range;
}

std::optional<BlockRange> Segmenter::Push(bool positive) {
  const std::uint64_t index = next_index_++;
  if (positive) {
    if (!in_syllable_) {
      in_syllable_ = true;
      onset_ = index;
    }
    last_positive_ = index;
    hangover_remaining_ = config_.hangover;
    return std::nullopt;
  }
  if (!in_syllable_) return std::nullopt;
  if (--hangover_remaining_ == 0) return Close();
  return std::nullopt;
}

std::optional<BlockRange> Segmenter::Finish() {
  if (!in_syllable_) return std::nullopt;
  return Close();
}

std::vector<BlockRange> Segment(const std::vector<bool>& decisions,
                                const SegmenterConfig& config) {
  Segmenter segmenter(config);
  std::vector<BlockRange> out;
  for (bool d : decisions) {
    if (auto r = segmenter.Push(d)) out.push_back(*r);
  }
  if (auto r = segmenter.Finish()) out.push_back(*r);
  return out;
}

std::array<std::uint64_t, 3> SelectBlocks(std::uint64_t onset, std::uint64_t offset) {
  if (offset < onset) throw ValueError(kModule, "offset precedes onset");
  const std::uint64_t span = offset - onset;
  // round_half_up(i * span / 2) == (i * span + 1) / 2 for non-negative values.
  return {onset, onset + (span + 1) / 2, offset};
}

EventPipeline::EventPipeline(const tinyml::ModelBundle& models, const PipelineConfig& config)
    : models_(models),
      config_(config),
      extractor_([&] {
        auto fb = config.filterbank;
        fb.fft_size = config.block_size;
        fb.sample_rate = config.sample_rate;
        return dsp::MelFilterbank(fb);
      }()),
      segmenter_(config.segmenter) {
  timing_.block_ms = 1000.0 * static_cast<double>(config.block_size) / config.sample_rate;
  timing_.detector_ms = config.detector_ms;
  timing_.classifier_ms = config.classifier_ms;
}

std::optional<SyllableEvent> EventPipeline::Emit(const BlockRange& range, std::uint64_t now) {
  const auto picks = SelectBlocks(range.onset, range.offset);
  std::array<dsp::MfccVector, 3> inputs;
  for (std::size_t i = 0; i < picks.size(); ++i) inputs[i] = history_.at(picks[i] - history_start_);
  const auto result = tinyml::Classify(inputs, models_.classifier, arena_);
  ++timing_.classifier_invocations;
  ++timing_.segments;

  SyllableEvent event;
  event.onset_block = range.onset;
  event.offset_block = range.offset;
  event.label = static_cast<std::uint8_t>(result.label);
  event.gap_blocks = range.onset - (last_offset_ ? *last_offset_ + 1 : 0);
  event.emitted_block = now;
  event.confidence = result.probs[result.label];
  last_offset_ = range.offset;

  const double latency =
      static_cast<double>(now - range.offset) * timing_.block_ms + config_.classifier_ms;
  timing_.max_event_latency_ms = std::max(timing_.max_event_latency_ms, latency);
  return event;
}

std::optional<SyllableEvent> EventPipeline::Push(const audio::AudioBlock& block) {
  const std::uint64_t index = timing_.blocks++;
  const auto mfcc = extractor_.Compute(block.samples);
  const auto detection = tinyml::Detect(mfcc, models_.detector);
  ++timing_.detector_invocations;
  detections_.push_back(detection.is_syllable);

  if (!segmenter_.in_syllable()) {
    history_.clear();
    history_start_ = index;
  }
  history_.push_back(mfcc);
  if (auto range = segmenter_.Push(detection.is_syllable)) return Emit(*range, index);
  return std::nullopt;
}

std::optional<SyllableEvent> EventPipeline::Finish() {
  std::optional<SyllableEvent> out;
  if (auto range = segmenter_.Finish()) {
    out = Emit(*range, timing_.blocks == 0 ? 0 : timing_.blocks - 1);
  }
  timing_.trailing_gap_blocks = timing_.blocks - (last_offset_ ? *last_offset_ + 1 : 0);
  timing_.compute_ms = static_cast<double>(timing_.detector_invocations) * config_.detector_ms +
                       static_cast<double>(timing_.classifier_invocations) * config_.classifier_ms;
  const double stream_ms = static_cast<double>(timing_.blocks) * timing_.block_ms;
  timing_.compute_duty = stream_ms > 0.0 ? timing_.compute_ms / stream_ms : 0.0;
  return out;
}

PipelineResult RunPipeline(std::span<const std::int16_t> pcm,
                           const tinyml::ModelBundle& models, const PipelineConfig& config) {
  EventPipeline pipeline(models, config);
  PipelineResult result;
  if (!pcm.empty()) {
    for (const auto& block : audio::FrameSignal(pcm, config.block_size, config.sample_rate)) {
      if (auto e = pipeline.Push(block)) result.events.push_back(*e);
    }
  }
  if (auto e = pipeline.Finish()) result.events.push_back(*e);
  result.timing = pipeline.timing();
  result.detections = pipeline.detections();
  return result;
}

std::size_t EditDistance(std::span<const int> predicted, std::span<const int> reference) {
  std::vector<std::size_t> row(reference.size() + 1);
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= predicted.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (predicted[i - 1] == reference[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row.back();
}

double SyllableErrorRate(std::span<const int> predicted, std::span<const int> reference) {
  if (reference.empty()) {
    throw ValueError(kModule, "syllable error rate is undefined for an empty reference");
  }
  return static_cast<double>(EditDistance(predicted, reference)) /
         static_cast<double>(reference.size());
}

TimedEvent ToTimed(const SyllableEvent& event, double block_ms) {
  TimedEvent t;
  t.onset_ms = static_cast<double>(event.onset_block) * block_ms;
  t.offset_ms = static_cast<double>(event.offset_block + 1) * block_ms;
  t.label = event.label;
  t.gap_ms = static_cast<double>(event.gap_blocks) * block_ms;
  return t;
}

std::string ToJsonLine(const TimedEvent& event) {
  nlohmann::ordered_json j;
  j["onset_ms"] = event.onset_ms;
  j["offset_ms"] = event.offset_ms;
  j["label"] = event.label;
  j["gap_ms"] = event.gap_ms;
  return j.dump();
}

void WriteEventsJsonl(std::span<const TimedEvent> events, std::ostream& out) {
  for (const auto& e : events) out << ToJsonLine(e) << '\n';
}

std::vector<TimedEvent> ReadEventsJsonl(std::istream& in) {
  std::vector<TimedEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TimedEvent e;
      e.onset_ms = j.at("onset_ms").get<double>();
      e.offset_ms = j.at("offset_ms").get<double>();
      e.label = j.at("label").get<int>();
      e.gap_ms = j.value("gap_ms", 0.0);
      events.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw ValueError(kModule, "events line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return events;
}

std::vector<int> Labels(std::span<const TimedEvent> events) {
  std::vector<int> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.label);
  return out;
}

std::array<std::uint8_t, kEventRecordSize> EncodeEventRecord(const SyllableEvent& event) {
  if (event.gap_blocks > std::numeric_limits<std::uint32_t>::max() ||
      event.duration_blocks() > std::numeric_limits<std::uint16_t>::max()) {
    throw ValueError(kModule, "event does not fit the compact record");
  }
  ByteWriter w;
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(event.gap_blocks));
  w.Put<std::uint16_t>(static_cast<std::uint16_t>(event.duration_blocks()));
  w.Put<std::uint8_t>(event.label);
  std::array<std::uint8_t, kEventRecordSize> out{};
  std::copy(w.bytes().begin(), w.bytes().end(), out.begin());
  return out;
}

SyllableEvent DecodeEventRecord(std::span<const std::uint8_t> record,
                                std::uint64_t previous_offset_end) {
  ByteReader r(record);
  const auto gap = r.Get<std::uint32_t>();
  const auto duration = r.Get<std::uint16_t>();
  const auto label = r.Get<std::uint8_t>();
  if (!gap || !duration || !label || *duration == 0) {
    throw FramingError(kModule, "malformed event record");
  }
  SyllableEvent e;
  e.gap_blocks = *gap;
  e.onset_block = previous_offset_end + *gap;
  e.offset_block = e.onset_block + *duration - 1;
  e.label = *label;
  return e;
}

}  // namespace tinybird::pipeline
