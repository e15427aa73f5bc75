#include "tinybird/audio.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "tinybird/error.h"

namespace tinybird::audio {

std::vector<AudioBlock> FrameSignal(std::span<const std::int16_t> pcm,
                                    std::size_t block_size,
                                    std::uint32_t sample_rate) {
  if (!IsPowerOfTwo(block_size)) {
    throw ConfigError("core_audio", "block size " + std::to_string(block_size) +
                                        " is not a power of two");
  }
  if (sample_rate == 0) throw ConfigError("core_audio", "sample rate must be positive");
  if (pcm.empty()) throw ConfigError("core_audio", "cannot frame an empty signal");

  const std::size_t count = (pcm.size() + block_size - 1) / block_size;
  std::vector<AudioBlock> blocks;
  blocks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t begin = i * block_size;
    const std::size_t valid = std::min(block_size, pcm.size() - begin);
    AudioBlock block;
    block.index = i;
    block.sample_rate = sample_rate;
    block.valid_samples = valid;
    block.samples.assign(block_size, 0);
    std::copy_n(pcm.begin() + begin, valid, block.samples.begin());
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<std::int16_t> Unframe(std::span<const AudioBlock> blocks) {
  std::vector<std::int16_t> out;
  for (const auto& b : blocks) {
    out.insert(out.end(), b.samples.begin(), b.samples.begin() + b.valid_samples);
  }
  return out;
}

double BlockRms(std::span<const std::int16_t> samples) {
  if (samples.empty()) return 0.0;
  double energy = 0.0;
  for (std::int16_t s : samples) energy += static_cast<double>(s) * s;
  return std::sqrt(energy / samples.size());
}

GateState GateState::Adaptive(double initial_floor, double factor) {
  if (!(initial_floor >= 0.0)) {
    throw ConfigError("core_audio", "noise floor must be non-negative");
  }
  if (!(factor > 1.0)) {
    throw ConfigError("core_audio", "adaptive threshold factor must exceed 1");
  }
  GateState s;
  s.mode = GateMode::kAdaptive;
  s.noise_floor = initial_floor;
  s.threshold_factor = factor;
  return s;
}

std::pair<GateDecision, GateState> GateBlock(const AudioBlock& block,
                                             const GateState& state,
                                             double fixed_threshold) {
  const double rms = BlockRms(block.samples);
  GateState next = state;
  if (state.mode == GateMode::kFixed) {
    const bool voiced = rms > 0.0 && rms >= fixed_threshold;
    return {voiced ? GateDecision::kVoiced : GateDecision::kSilent, next};
  }
  const bool voiced = rms > 0.0 && rms >= state.noise_floor * state.threshold_factor;
  if (!voiced) {
    next.noise_floor += kNoiseFloorSmoothing * (rms - state.noise_floor);
  }
  return {voiced ? GateDecision::kVoiced : GateDecision::kSilent, next};
}

std::vector<std::int16_t> Resample(std::span<const std::int16_t> pcm,
                                   std::uint32_t from_rate,
                                   std::uint32_t to_rate) {
  if (from_rate == 0 || to_rate == 0) {
    throw ConfigError("core_audio", "sample rates must be positive");
  }
  if (from_rate == to_rate || pcm.empty()) {
    return {pcm.begin(), pcm.end()};
  }
  const std::size_t out_len = static_cast<std::size_t>(
      (static_cast<std::uint64_t>(pcm.size()) * to_rate) / from_rate);
  std::vector<std::int16_t> out(out_len);
  const double ratio = static_cast<double>(from_rate) / to_rate;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = i * ratio;
    const std::size_t k = static_cast<std::size_t>(pos);
    const double frac = pos - k;
    const double a = pcm[std::min(k, pcm.size() - 1)];
    const double b = pcm[std::min(k + 1, pcm.size() - 1)];
    out[i] = static_cast<std::int16_t>(std::lround(a + (b - a) * frac));
  }
  return out;
}

}  // namespace tinybird::audio
