#include "tinybird/corpus.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "tinybird/error.h"

namespace tinybird::corpus {
namespace {

// mt19937_64 output is fixed by the standard; the distributions below are
// written out so the corpus is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  std::size_t Index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  double Gaussian() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

std::vector<double> Synthesize(const SyllableTemplate& t, std::size_t length, double f0,
                               double amplitude, std::uint32_t sample_rate, Rng& rng) {
  std::vector<double> out(length, 0.0);
  double weight_sum = 0.0;
  for (double w : t.harmonic_weights) weight_sum += w;
  std::array<double, 4> phase{};
  for (auto& p : phase) p = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  const double nyquist = sample_rate / 2.0;
  const double fade = 0.003 * sample_rate;
  for (std::size_t n = 0; n < length; ++n) {
    const double t_sec = static_cast<double>(n) / sample_rate;
    double v = 0.0;
    for (std::size_t h = 0; h < t.harmonic_weights.size(); ++h) {
      const double f = f0 * static_cast<double>(h + 1);
      if (f >= 0.95 * nyquist) break;
      v += t.harmonic_weights[h] * std::sin(2.0 * std::numbers::pi * f * t_sec + phase[h]);
    }
    const double u = length > 1 ? static_cast<double>(n) / (length - 1) : 0.0;
    double env = EnvelopeAt(t.envelope, u);
    const double edge = std::min<double>(n, length - 1 - n);
    if (edge < fade) env *= (edge + 1.0) / (fade + 1.0);
    out[n] = amplitude * env * v / weight_sum;
  }
  return out;
}

}  // namespace

const std::array<SyllableTemplate, kNumSyllableClasses>& Templates() {
  // Fundamentals log-spaced over 500..6000 Hz.
  static const std::array<SyllableTemplate, kNumSyllableClasses> templates = {{
      {0, 500.0, {1.0, 0.6, 0.4, 0.2}, 60.0, 120.0, Envelope::kHann},
      {1, 713.0, {1.0, 0.2, 0.5, 0.1}, 40.0, 80.0, Envelope::kFastAttack},
      {2, 1017.0, {0.6, 1.0, 0.3, 0.3}, 100.0, 200.0, Envelope::kFlat},
      {3, 1450.0, {1.0, 0.5, 0.0, 0.3}, 80.0, 160.0, Envelope::kDoubleBump},
      {4, 2068.0, {1.0, 0.3, 0.2, 0.0}, 50.0, 100.0, Envelope::kRise},
      {5, 2949.0, {1.0, 0.4, 0.0, 0.0}, 120.0, 250.0, Envelope::kTremolo},
      {6, 4206.0, {1.0, 0.0, 0.0, 0.0}, 60.0, 140.0, Envelope::kFall},
      {7, 6000.0, {1.0, 0.0, 0.0, 0.0}, 150.0, 300.0, Envelope::kNotch},
  }};
  return templates;
}

double EnvelopeAt(Envelope shape, double u) {
  u = std::clamp(u, 0.0, 1.0);
  constexpr double kPi = std::numbers::pi;
  switch (shape) {
    case Envelope::kHann: return 0.5 + 0.5 * std::sin(kPi * u);
    case Envelope::kFastAttack: return u < 0.1 ? 0.6 + 4.0 * u : 1.0 - 0.4 * (u - 0.1) / 0.9;
    case Envelope::kFlat: return 1.0;
    case Envelope::kDoubleBump: return 0.55 + 0.45 * std::abs(std::sin(2.0 * kPi * u));
    case Envelope::kRise: return 0.5 + 0.5 * u;
    case Envelope::kTremolo: return 0.75 + 0.25 * std::sin(10.0 * kPi * u);
    case Envelope::kFall: return 1.0 - 0.5 * u;
    case Envelope::kNotch: return 1.0 - 0.45 * std::exp(-std::pow((u - 0.5) / 0.1, 2.0));
  }
  return 1.0;
}

std::vector<pipeline::TimedEvent> Corpus::Events() const {
  std::vector<pipeline::TimedEvent> events;
  events.reserve(syllables.size());
  for (const auto& s : syllables) {
    pipeline::TimedEvent e;
    e.onset_ms = 1000.0 * static_cast<double>(s.onset_sample) / sample_rate;
    e.offset_ms = 1000.0 * static_cast<double>(s.offset_sample) / sample_rate;
    e.label = s.label;
    e.gap_ms = s.gap_ms;
    events.push_back(e);
  }
  return events;
}

std::vector<bool> Corpus::BlockVoicing(std::size_t block_size) const {
  const std::size_t blocks = (samples.size() + block_size - 1) / block_size;
  std::vector<bool> voiced(blocks, false);
  for (const auto& s : syllables) {
    const auto r = s.blocks(block_size);
    for (auto b = r.onset; b <= r.offset && b < blocks; ++b) voiced[b] = true;
  }
  return voiced;
}

double Corpus::VoicedBlockFraction(std::size_t block_size) const {
  const auto v = BlockVoicing(block_size);
  if (v.empty()) return 0.0;
  return static_cast<double>(std::count(v.begin(), v.end(), true)) /
         static_cast<double>(v.size());
}

Corpus Generate(const CorpusConfig& config) {
  if (config.sample_rate == 0) throw ConfigError("corpus", "sample rate must be positive");
  if (config.min_syllables_per_motif == 0 ||
      config.min_syllables_per_motif > config.max_syllables_per_motif) {
    throw ConfigError("corpus", "syllables per motif range is invalid");
  }
  if (!(config.amplitude > 0.0 && config.amplitude <= 32767.0)) {
    throw ConfigError("corpus", "amplitude must be in (0, 32767]");
  }
  Rng rng(config.seed);
  const double rate = config.sample_rate;
  auto ms_to_samples = [&](double ms) {
    return static_cast<std::uint64_t>(std::llround(ms * rate / 1000.0));
  };

  Corpus corpus;
  corpus.sample_rate = config.sample_rate;
  std::vector<double> signal;
  std::uint64_t cursor = ms_to_samples(rng.Uniform(150.0, 300.0));
  std::uint64_t previous_end = 0;

  for (std::size_t m = 0; m < config.n_motifs; ++m) {
    if (m > 0) cursor += ms_to_samples(rng.Uniform(config.min_pause_ms, config.max_pause_ms));
    const std::size_t count =
        config.min_syllables_per_motif +
        rng.Index(config.max_syllables_per_motif - config.min_syllables_per_motif + 1);
    for (std::size_t i = 0; i < count; ++i) {
      if (i > 0) {
        const double gap = rng.Uniform() < config.short_gap_probability
                               ? rng.Uniform(kMinGapMs, 40.0)
                               : rng.Uniform(40.0, kMaxGapMs);
        cursor += ms_to_samples(gap);
      }
      const auto& t = Templates()[rng.Index(kNumSyllableClasses)];
      const double duration = rng.Uniform(t.min_ms, t.max_ms);
      const double f0 = t.f0_hz * rng.Uniform(0.98, 1.02);
      const std::uint64_t length = ms_to_samples(duration);
      const auto wave = Synthesize(t, length, f0, config.amplitude, config.sample_rate, rng);
      if (signal.size() < cursor + length) signal.resize(cursor + length, 0.0);
      for (std::uint64_t n = 0; n < length; ++n) signal[cursor + n] += wave[n];

      GroundTruthSyllable s;
      s.onset_sample = cursor;
      s.offset_sample = cursor + length;
      s.label = t.class_id;
      s.gap_ms = 1000.0 * static_cast<double>(cursor - previous_end) / rate;
      corpus.syllables.push_back(s);
      previous_end = s.offset_sample;
      cursor += length;
    }
  }
  signal.resize(cursor + ms_to_samples(rng.Uniform(150.0, 300.0)), 0.0);

  corpus.noise_sigma = std::isinf(config.snr_db) && config.snr_db > 0
                           ? 0.0
                           : config.amplitude / std::numbers::sqrt2 *
                                 std::pow(10.0, -config.snr_db / 20.0);
  corpus.samples.resize(signal.size());
  for (std::size_t n = 0; n < signal.size(); ++n) {
    const double noise = corpus.noise_sigma > 0.0 ? corpus.noise_sigma * rng.Gaussian() : 0.0;
    corpus.samples[n] = static_cast<std::int16_t>(
        std::clamp<long>(std::lround(signal[n] + noise), -32768, 32767));
  }
  return corpus;
}

}  // namespace tinybird::corpus
