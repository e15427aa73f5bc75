#ifndef TINYBIRD_CORPUS_H_
#define TINYBIRD_CORPUS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "tinybird/audio.h"
#include "tinybird/pipeline.h"

namespace tinybird::corpus {

enum class Envelope {
  kHann,
  kFastAttack,
  kFlat,
  kDoubleBump,
  kRise,
  kTremolo,
  kFall,
  kNotch,
};

struct SyllableTemplate {
  int class_id = 0;
  double f0_hz = 0.0;
  std::array<double, 4> harmonic_weights{};
  double min_ms = 0.0;
  double max_ms = 0.0;
  Envelope envelope = Envelope::kHann;
};

inline constexpr std::size_t kNumSyllableClasses = 8;
inline constexpr double kMinSyllableMs = 30.0;
inline constexpr double kMaxSyllableMs = 500.0;
inline constexpr double kMinGapMs = 5.0;
inline constexpr double kMaxGapMs = 100.0;

const std::array<SyllableTemplate, kNumSyllableClasses>& Templates();

// Envelope value at normalized position u in [0, 1].
double EnvelopeAt(Envelope shape, double u);

struct CorpusConfig {
  std::uint64_t seed = 1;
  std::size_t n_motifs = 20;
  // +inf disables noise.
  double snr_db = 20.0;
  std::uint32_t sample_rate = audio::kDefaultSampleRate;
  // Peak syllable amplitude in PCM units.
  double amplitude = 8000.0;
  std::size_t min_syllables_per_motif = 3;
  std::size_t max_syllables_per_motif = 6;
  // Share of within-motif gaps drawn below 40 ms; shorter gaps than one block
  // cannot be resolved by a block-level segmenter.
  double short_gap_probability = 0.03;
  // Silence between motifs, ms.
  double min_pause_ms = 200.0;
  double max_pause_ms = 600.0;
};

// Sample range [onset, offset) of one syllable.
struct GroundTruthSyllable {
  std::uint64_t onset_sample = 0;
  std::uint64_t offset_sample = 0;
  int label = 0;
  double gap_ms = 0.0;

  pipeline::BlockRange blocks(std::size_t block_size) const {
    return {onset_sample / block_size, (offset_sample - 1) / block_size};
  }
};

struct Corpus {
  std::uint32_t sample_rate = audio::kDefaultSampleRate;
  std::vector<std::int16_t> samples;
  std::vector<GroundTruthSyllable> syllables;
  double noise_sigma = 0.0;

  std::vector<pipeline::TimedEvent> Events() const;
  // Block b is voiced iff it overlaps a syllable.
  std::vector<bool> BlockVoicing(std::size_t block_size) const;
  double VoicedBlockFraction(std::size_t block_size) const;
};

// Pure function of the config; identical configs give identical samples.
Corpus Generate(const CorpusConfig& config);

}  // namespace tinybird::corpus

#endif  // TINYBIRD_CORPUS_H_
