#ifndef TINYBIRD_AUDIO_H_
#define TINYBIRD_AUDIO_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace tinybird::audio {

inline constexpr std::size_t kDefaultBlockSize = 256;
inline constexpr std::uint32_t kDefaultSampleRate = 16000;

constexpr bool IsPowerOfTwo(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Fixed-size window of 16-bit PCM, the unit of work for every later stage.
struct AudioBlock {
  std::uint64_t index = 0;
  std::vector<std::int16_t> samples;
  std::uint32_t sample_rate = kDefaultSampleRate;
  // Number of samples taken from the input; the rest is zero padding.
  std::size_t valid_samples = 0;

  bool padded() const { return valid_samples < samples.size(); }
  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Splits pcm into non-overlapping blocks of block_size samples. A trailing
// partial block is zero-padded and marked padded. Throws a config error for
// a non-power-of-two block size or empty input.
std::vector<AudioBlock> FrameSignal(std::span<const std::int16_t> pcm,
                                    std::size_t block_size,
                                    std::uint32_t sample_rate);

// Concatenates the unpadded content of the blocks.
std::vector<std::int16_t> Unframe(std::span<const AudioBlock> blocks);

double BlockRms(std::span<const std::int16_t> samples);

enum class GateMode { kFixed, kAdaptive };
enum class GateDecision { kSilent, kVoiced };

struct GateState {
  GateMode mode = GateMode::kFixed;
  // Running estimate of background RMS, in PCM units.
  double noise_floor = 0.0;
  double threshold_factor = 4.0;

  static GateState Fixed() { return GateState{}; }
  // The adaptive gate needs a seed for its noise floor; the first blocks are
  // judged against initial_floor * factor.
  static GateState Adaptive(double initial_floor, double factor = 4.0);
};

// Noise-floor EMA coefficient for the adaptive gate.
inline constexpr double kNoiseFloorSmoothing = 1.0 / 16.0;

// Classifies one block. Fixed mode: voiced iff RMS >= fixed_threshold.
// Adaptive mode: voiced iff RMS >= noise_floor * threshold_factor; the floor
// tracks silent blocks only. A block with zero RMS is always silent.
std::pair<GateDecision, GateState> GateBlock(const AudioBlock& block,
                                             const GateState& state,
                                             double fixed_threshold);

// Linear-interpolation resampler for WAV input at foreign rates.
std::vector<std::int16_t> Resample(std::span<const std::int16_t> pcm,
                                   std::uint32_t from_rate,
                                   std::uint32_t to_rate);

}  // namespace tinybird::audio

#endif  // TINYBIRD_AUDIO_H_
