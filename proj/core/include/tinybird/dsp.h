#ifndef TINYBIRD_DSP_H_
#define TINYBIRD_DSP_H_

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "tinybird/audio.h"

namespace tinybird::dsp {

enum class Window { kRect, kHann };

// Periodic Hann, w[n] = 0.5 - 0.5 cos(2 pi n / size).
double HannCoefficient(std::size_t n, std::size_t size);

// In-place iterative radix-2 FFT (forward, no scaling).
void Fft(std::span<std::complex<double>> data);

// |X[k]| for k = 0..size/2 of the windowed samples, in PCM units.
std::vector<double> FftMagnitude(std::span<const std::int16_t> samples, Window window);
std::vector<double> FftMagnitude(const audio::AudioBlock& block, Window window);

double HzToMel(double hz);
double MelToHz(double mel);

struct MelFilterbankConfig {
  std::size_t n_filters = 32;
  std::size_t fft_size = audio::kDefaultBlockSize;
  std::uint32_t sample_rate = audio::kDefaultSampleRate;
  double f_min = 250.0;
  double f_max = 8000.0;
};

// Triangular filters equally spaced on the mel scale. Each row is normalized
// to sum to 1, so a flat spectrum maps to equal filter energies.
class MelFilterbank {
 public:
  explicit MelFilterbank(const MelFilterbankConfig& config = {});

  const MelFilterbankConfig& config() const { return config_; }
  std::size_t n_filters() const { return config_.n_filters; }
  std::size_t n_bins() const { return config_.fft_size / 2 + 1; }
  double bin_hz(std::size_t k) const {
    return static_cast<double>(k) * config_.sample_rate / config_.fft_size;
  }
  double center_hz(std::size_t m) const { return edges_hz_[m + 1]; }

  // Dense row of n_bins() weights.
  std::span<const double> row(std::size_t m) const {
    return {weights_.data() + m * n_bins(), n_bins()};
  }
  // Same row in Q30.
  std::span<const std::int64_t> row_q30(std::size_t m) const {
    return {weights_q30_.data() + m * n_bins(), n_bins()};
  }

 private:
  MelFilterbankConfig config_;
  std::vector<double> edges_hz_;
  std::vector<double> weights_;
  std::vector<std::int64_t> weights_q30_;
};

inline constexpr std::size_t kNumMfcc = 16;
inline constexpr double kLogEnergyFloor = 1e-10;

// 16 cepstral coefficients stored with 8 fractional bits (value * 256).
struct MfccVector {
  static constexpr int kFracBits = 8;
  static constexpr double kStep = 1.0 / (1 << kFracBits);

  std::array<std::int32_t, kNumMfcc> coeffs{};

  double value(std::size_t i) const { return coeffs[i] * kStep; }
  std::array<double, kNumMfcc> ToDouble() const;
  bool operator==(const MfccVector&) const = default;
};

// Fixed-point MFCC front end. Per block:
//   1. scale PCM left by the block's headroom (block floating point)
//   2. Hann window (Q30), integer radix-2 FFT with Q30 twiddles
//   3. power spectrum, mel filter energies with Q30 weights
//   4. natural log in Q24 with floor ln(1e-10)
//   5. orthonormal DCT-II (Q30 basis), first 16 coefficients to Q8
// Signal scale: PCM / 32768 windowed, energies sum_k w_mk |X_k|^2.
class MfccExtractor {
 public:
  explicit MfccExtractor(const MelFilterbank& filterbank);

  MfccVector Compute(std::span<const std::int16_t> samples) const;
  MfccVector Compute(const audio::AudioBlock& block) const { return Compute(block.samples); }

  const MelFilterbank& filterbank() const { return filterbank_; }

 private:
  MelFilterbank filterbank_;
  std::size_t size_;
  unsigned log2_size_;
  std::vector<std::int64_t> window_q30_;
  std::vector<std::int64_t> cos_q30_;
  std::vector<std::int64_t> sin_q30_;
  std::vector<std::int64_t> dct_q30_;  // kNumMfcc x n_filters
  std::vector<std::uint32_t> bit_reverse_;
};

MfccVector Mfcc(const audio::AudioBlock& block, const MelFilterbank& filterbank);

struct Spectrogram {
  std::size_t block_size = 0;
  std::size_t hop = 0;
  std::uint32_t sample_rate = 0;
  std::size_t bins = 0;
  std::size_t frames = 0;
  // bins x frames, row-major, dB relative to a full-scale sine, floored.
  std::vector<double> db;

  double at(std::size_t bin, std::size_t frame) const { return db[bin * frames + frame]; }
};

inline constexpr double kSpectrogramFloorDb = -80.0;

// Hann-windowed magnitude spectrogram. Input shorter than one block yields a
// single zero-padded frame.
Spectrogram ComputeSpectrogram(std::span<const std::int16_t> pcm, std::size_t block_size,
                               std::size_t hop, std::uint32_t sample_rate);

// First column is the bin frequency in Hz, the header row the frame start
// times in seconds.
void WriteSpectrogramCsv(const Spectrogram& spec, std::ostream& out);
// 8-bit grayscale, low frequencies at the bottom.
void WriteSpectrogramPng(const Spectrogram& spec, const std::filesystem::path& path);

}  // namespace tinybird::dsp

#endif  // TINYBIRD_DSP_H_
