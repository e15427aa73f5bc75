#include "tinybird/dsp.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>

#include <png.h>

#include "tinybird/error.h"

namespace tinybird::dsp {
namespace {

constexpr const char* kModule = "dsp";

using i128 = __int128;
using u128 = unsigned __int128;

constexpr int kQ30 = 30;
constexpr int kLogFracBits = 24;

std::int64_t ToQ30(double v) { return std::llround(v * (1LL << kQ30)); }

i128 RoundShift(i128 v, int shift) {
  if (shift <= 0) return v << -shift;
  return (v + (i128{1} << (shift - 1))) >> shift;
}

int BitLength(u128 v) {
  const auto hi = static_cast<std::uint64_t>(v >> 64);
  if (hi != 0) return 128 - std::countl_zero(hi);
  return 64 - std::countl_zero(static_cast<std::uint64_t>(v));
}

// log2(v) in Q24 for v > 0, by normalizing to [1, 2) and squaring out the
// fractional bits one at a time.
std::int64_t Log2Q24(u128 v) {
  const int msb = BitLength(v) - 1;
  // Mantissa in Q62, value in [1, 2).
  std::uint64_t m = msb >= 62 ? static_cast<std::uint64_t>(v >> (msb - 62))
                              : static_cast<std::uint64_t>(v << (62 - msb));
  std::int64_t result = static_cast<std::int64_t>(msb) << kLogFracBits;
  for (int bit = kLogFracBits - 1; bit >= 0; --bit) {
    const u128 sq = (static_cast<u128>(m) * m) >> 62;
    if (sq >> 63) {
      m = static_cast<std::uint64_t>(sq >> 1);
      result += std::int64_t{1} << bit;
    } else {
      m = static_cast<std::uint64_t>(sq);
    }
  }
  return result;
}

const std::int64_t kLn2Q30 = ToQ30(std::numbers::ln2);
const std::int64_t kLogFloorQ24 =
    std::llround(std::log(kLogEnergyFloor) * (1LL << kLogFracBits));

void CheckPowerOfTwo(std::size_t n) {
  if (!audio::IsPowerOfTwo(n) || n < 2) {
    throw ConfigError(kModule, "transform size " + std::to_string(n) +
                                   " is not a power of two >= 2");
  }
}

}  // namespace

double HannCoefficient(std::size_t n, std::size_t size) {
  return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                              static_cast<double>(size));
}

void Fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  CheckPowerOfTwo(n);
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t k = 0; k < len / 2; ++k) {
      const std::complex<double> w(std::cos(angle * k), std::sin(angle * k));
      for (std::size_t i = 0; i < n; i += len) {
        const auto u = data[i + k];
        const auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
      }
    }
  }
}

std::vector<double> FftMagnitude(std::span<const std::int16_t> samples, Window window) {
  const std::size_t n = samples.size();
  CheckPowerOfTwo(n);
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = window == Window::kHann ? HannCoefficient(i, n) : 1.0;
    buf[i] = samples[i] * w;
  }
  Fft(buf);
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

std::vector<double> FftMagnitude(const audio::AudioBlock& block, Window window) {
  return FftMagnitude(block.samples, window);
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(const MelFilterbankConfig& config) : config_(config) {
  CheckPowerOfTwo(config.fft_size);
  const double nyquist = config.sample_rate / 2.0;
  if (config.n_filters == 0) throw ConfigError(kModule, "filterbank needs at least one filter");
  if (!(config.f_min >= 0.0 && config.f_min < config.f_max && config.f_max <= nyquist)) {
    throw ConfigError(kModule, "filterbank range must satisfy 0 <= f_min < f_max <= Nyquist");
  }
  const double mel_lo = HzToMel(config.f_min);
  const double mel_hi = HzToMel(config.f_max);
  edges_hz_.resize(config.n_filters + 2);
  for (std::size_t i = 0; i < edges_hz_.size(); ++i) {
    edges_hz_[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (config.n_filters + 1));
  }
  edges_hz_.front() = config.f_min;
  edges_hz_.back() = config.f_max;

  const std::size_t bins = n_bins();
  weights_.assign(config.n_filters * bins, 0.0);
  weights_q30_.assign(config.n_filters * bins, 0);
  for (std::size_t m = 0; m < config.n_filters; ++m) {
    const double lo = edges_hz_[m];
    const double mid = edges_hz_[m + 1];
    const double hi = edges_hz_[m + 2];
    double sum = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = bin_hz(k);
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      weights_[m * bins + k] = w;
      sum += w;
    }
    if (!(sum > 0.0)) {
      throw ConfigError(kModule, "mel filter " + std::to_string(m) +
                                     " covers no FFT bin; use fewer filters or a larger FFT");
    }
    for (std::size_t k = 0; k < bins; ++k) {
      weights_[m * bins + k] /= sum;
      weights_q30_[m * bins + k] = ToQ30(weights_[m * bins + k]);
    }
  }
}

std::array<double, kNumMfcc> MfccVector::ToDouble() const {
  std::array<double, kNumMfcc> out{};
  for (std::size_t i = 0; i < kNumMfcc; ++i) out[i] = value(i);
  return out;
}

MfccExtractor::MfccExtractor(const MelFilterbank& filterbank)
    : filterbank_(filterbank), size_(filterbank.config().fft_size) {
  if (filterbank_.n_filters() < kNumMfcc) {
    throw ConfigError(kModule, "need at least 16 mel filters for 16 coefficients");
  }
  log2_size_ = static_cast<unsigned>(std::countr_zero(size_));
  window_q30_.resize(size_);
  for (std::size_t i = 0; i < size_; ++i) window_q30_[i] = ToQ30(HannCoefficient(i, size_));
  cos_q30_.resize(size_ / 2);
  sin_q30_.resize(size_ / 2);
  for (std::size_t k = 0; k < size_ / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / size_;
    cos_q30_[k] = ToQ30(std::cos(angle));
    sin_q30_[k] = ToQ30(std::sin(angle));
  }
  const std::size_t nf = filterbank_.n_filters();
  dct_q30_.resize(kNumMfcc * nf);
  for (std::size_t k = 0; k < kNumMfcc; ++k) {
    const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(nf));
    for (std::size_t n = 0; n < nf; ++n) {
      dct_q30_[k * nf + n] = ToQ30(
          alpha * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * n + 1.0) /
                           (2.0 * static_cast<double>(nf))));
    }
  }
  bit_reverse_.resize(size_);
  for (std::size_t i = 0; i < size_; ++i) {
    std::uint32_t r = 0;
    for (unsigned b = 0; b < log2_size_; ++b) {
      if (i & (std::size_t{1} << b)) r |= 1u << (log2_size_ - 1 - b);
    }
    bit_reverse_[i] = r;
  }
}

MfccVector MfccExtractor::Compute(std::span<const std::int16_t> samples) const {
  if (samples.size() != size_) {
    throw ValueError(kModule, "MFCC extractor expects " + std::to_string(size_) +
                                  " samples, got " + std::to_string(samples.size()));
  }
  const std::size_t nf = filterbank_.n_filters();
  std::vector<std::int64_t> log_energy(nf, kLogFloorQ24);

  int peak = 0;
  for (std::int16_t s : samples) peak = std::max(peak, std::abs(static_cast<int>(s)));

  if (peak > 0) {
    // Block floating point: shift so the peak uses 15 bits.
    const int headroom = std::max(0, 15 - static_cast<int>(std::bit_width(static_cast<unsigned>(peak))));

    // Windowed input, scale 2^(30 + headroom) per unit of PCM/32768.
    std::vector<std::int64_t> re(size_);
    std::vector<std::int64_t> im(size_, 0);
    for (std::size_t i = 0; i < size_; ++i) {
      const i128 x = static_cast<i128>(static_cast<std::int64_t>(samples[i]) << headroom);
      re[bit_reverse_[i]] = static_cast<std::int64_t>(RoundShift(x * window_q30_[i], 15));
    }

    for (std::size_t len = 2; len <= size_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = size_ / len;
      for (std::size_t k = 0; k < half; ++k) {
        const std::int64_t wr = cos_q30_[k * stride];
        const std::int64_t wi = sin_q30_[k * stride];
        for (std::size_t i = k; i < size_; i += len) {
          const std::size_t j = i + half;
          const auto vr = static_cast<std::int64_t>(
              RoundShift(static_cast<i128>(re[j]) * wr - static_cast<i128>(im[j]) * wi, kQ30));
          const auto vi = static_cast<std::int64_t>(
              RoundShift(static_cast<i128>(re[j]) * wi + static_cast<i128>(im[j]) * wr, kQ30));
          re[j] = re[i] - vr;
          im[j] = im[i] - vi;
          re[i] += vr;
          im[i] += vi;
        }
      }
    }

    const std::size_t bins = filterbank_.n_bins();
    std::uint64_t max_abs = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      max_abs = std::max<std::uint64_t>(max_abs, static_cast<std::uint64_t>(std::llabs(re[k])));
      max_abs = std::max<std::uint64_t>(max_abs, static_cast<std::uint64_t>(std::llabs(im[k])));
    }
    // Keep each component under 2^30 so the power fits 61 bits.
    const int down = std::max(0, static_cast<int>(std::bit_width(max_abs)) - 30);
    std::vector<u128> power(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      const auto r = static_cast<std::int64_t>(RoundShift(re[k], down));
      const auto q = static_cast<std::int64_t>(RoundShift(im[k], down));
      power[k] = static_cast<u128>(static_cast<i128>(r) * r + static_cast<i128>(q) * q);
    }

    // energy_q = energy * 2^(90 + 2*headroom - 2*down)
    const std::int64_t exponent = 90 + 2 * headroom - 2 * down;
    for (std::size_t m = 0; m < nf; ++m) {
      const auto w = filterbank_.row_q30(m);
      u128 acc = 0;
      for (std::size_t k = 0; k < bins; ++k) {
        if (w[k] != 0) acc += power[k] * static_cast<u128>(w[k]);
      }
      if (acc == 0) continue;
      const std::int64_t log2_q24 = Log2Q24(acc) - (exponent << kLogFracBits);
      const auto ln_q24 = static_cast<std::int64_t>(
          RoundShift(static_cast<i128>(log2_q24) * kLn2Q30, kQ30));
      log_energy[m] = std::max(ln_q24, kLogFloorQ24);
    }
  }

  MfccVector out;
  constexpr int kShift = kLogFracBits + kQ30 - MfccVector::kFracBits;
  for (std::size_t k = 0; k < kNumMfcc; ++k) {
    i128 acc = 0;
    for (std::size_t n = 0; n < nf; ++n) {
      acc += static_cast<i128>(log_energy[n]) * dct_q30_[k * nf + n];
    }
    out.coeffs[k] = static_cast<std::int32_t>(RoundShift(acc, kShift));
  }
  return out;
}

MfccVector Mfcc(const audio::AudioBlock& block, const MelFilterbank& filterbank) {
  return MfccExtractor(filterbank).Compute(block.samples);
}

Spectrogram ComputeSpectrogram(std::span<const std::int16_t> pcm, std::size_t block_size,
                               std::size_t hop, std::uint32_t sample_rate) {
  CheckPowerOfTwo(block_size);
  if (hop == 0 || hop > block_size) {
    throw ConfigError(kModule, "hop must be in [1, block_size]");
  }
  Spectrogram spec;
  spec.block_size = block_size;
  spec.hop = hop;
  spec.sample_rate = sample_rate;
  spec.bins = block_size / 2 + 1;
  spec.frames = pcm.size() <= block_size ? 1 : 1 + (pcm.size() - block_size) / hop;
  spec.db.assign(spec.bins * spec.frames, kSpectrogramFloorDb);

  double window_sum = 0.0;
  for (std::size_t i = 0; i < block_size; ++i) window_sum += HannCoefficient(i, block_size);
  // A full-scale sine peaks at 32768 * window_sum / 2.
  const double reference = 32768.0 * window_sum / 2.0;

  std::vector<std::int16_t> frame(block_size);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    const std::size_t begin = f * hop;
    std::fill(frame.begin(), frame.end(), 0);
    const std::size_t avail = std::min(block_size, pcm.size() - std::min(begin, pcm.size()));
    std::copy_n(pcm.begin() + static_cast<std::ptrdiff_t>(begin), avail, frame.begin());
    const auto mag = FftMagnitude(frame, Window::kHann);
    for (std::size_t k = 0; k < spec.bins; ++k) {
      const double ratio = mag[k] / reference;
      const double db = ratio > 0.0 ? 20.0 * std::log10(ratio) : kSpectrogramFloorDb;
      spec.db[k * spec.frames + f] = std::max(db, kSpectrogramFloorDb);
    }
  }
  return spec;
}

void WriteSpectrogramCsv(const Spectrogram& spec, std::ostream& out) {
  out << "freq_hz";
  for (std::size_t f = 0; f < spec.frames; ++f) {
    out << ',' << static_cast<double>(f * spec.hop) / spec.sample_rate;
  }
  out << '\n';
  char buf[32];
  for (std::size_t k = 0; k < spec.bins; ++k) {
    out << static_cast<double>(k) * spec.sample_rate / spec.block_size;
    for (std::size_t f = 0; f < spec.frames; ++f) {
      std::snprintf(buf, sizeof(buf), ",%.2f", spec.at(k, f));
      out << buf;
    }
    out << '\n';
  }
}

void WriteSpectrogramPng(const Spectrogram& spec, const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError(kModule, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError(kModule, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(spec.frames),
               static_cast<png_uint_32>(spec.bins), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(spec.frames);
  for (std::size_t r = 0; r < spec.bins; ++r) {
    const std::size_t k = spec.bins - 1 - r;
    for (std::size_t f = 0; f < spec.frames; ++f) {
      const double t = (spec.at(k, f) - kSpectrogramFloorDb) / -kSpectrogramFloorDb;
      row[f] = static_cast<png_byte>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace tinybird::dsp
