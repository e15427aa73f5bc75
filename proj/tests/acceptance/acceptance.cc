// Prints one PASS/FAIL line per acceptance criterion; exit status is the
// number of failures (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tinybird/audio.h"
#include "tinybird/codecs.h"
#include "tinybird/corpus.h"
#include "tinybird/dsp.h"
#include "tinybird/energy.h"
#include "tinybird/pipeline.h"
#include "tinybird/protocol.h"
#include "tinybird/tinyml.h"

namespace {

using namespace tinybird;
using codecs::CodecId;

int failures = 0;

void Report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s [PRIMARY] %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  if (!ok) ++failures;
}

void Skip(const char* name, const char* why) { std::printf("SKIP [SECONDARY] %s: %s\n", name, why); }

std::string Fmt(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::vector<std::int16_t> RandomPcm(std::mt19937& rng, std::size_t n) {
  std::uniform_int_distribution<int> d(-32768, 32767);
  std::vector<std::int16_t> out(n);
  for (auto& v : out) v = static_cast<std::int16_t>(d(rng));
  return out;
}

std::vector<std::int16_t> Sine(double hz, double amp, std::size_t n) {
  std::vector<std::int16_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<std::int16_t>(std::lround(amp * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0)));
  }
  return out;
}

void CompressionRatios() {
  std::mt19937 rng(1);
  bool exact = true;
  for (int trial = 0; trial < 200 && exact; ++trial) {
    const std::size_t n = 8 * (1 + rng() % 4000);
    const auto pcm = RandomPcm(rng, n);
    const auto raw = codecs::Encode(CodecId::kRaw, {}, pcm).first.size();
    const auto adpcm = codecs::Encode(CodecId::kAdpcm, codecs::GetCodec(CodecId::kAdpcm).InitialState(), pcm).first.size();
    const auto dm = codecs::Encode(CodecId::kDm, codecs::GetCodec(CodecId::kDm).InitialState(), pcm).first.size();
    const auto cfdm = codecs::Encode(CodecId::kCfdm, codecs::GetCodec(CodecId::kCfdm).InitialState(), pcm).first.size();
    exact = raw == 2 * n && adpcm * 4 == raw && dm * 16 == raw && cfdm * 16 == raw;
  }
  const auto minute = RandomPcm(rng, 60 * 16000);
  const auto start = std::chrono::steady_clock::now();
  for (CodecId id : {CodecId::kRaw, CodecId::kAdpcm, CodecId::kDm, CodecId::kCfdm}) {
    const auto& c = codecs::GetCodec(id);
    auto es = c.InitialState();
    auto ds = c.InitialState();
    const auto decoded = c.Decode(c.Encode(minute, es), ds);
    if (decoded.size() != minute.size()) exact = false;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Report("compression ratios", exact && secs < 1.0,
         Fmt("200 random inputs exact 4x/16x/16x: %s; 60 s round trip all codecs %.3f s",
             exact ? "yes" : "no", secs));
}

void DurationConservation() {
  std::mt19937 rng(2);
  bool ok = true;
  std::size_t checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto codec = static_cast<CodecId>(trial % 4);
    const std::size_t n = 1 + rng() % 150;
    const auto pcm = RandomPcm(rng, n * 256);
    const auto blocks = audio::FrameSignal(pcm, 256, 16000);
    std::vector<audio::GateDecision> d(n);
    for (auto& x : d) x = rng() % 2 ? audio::GateDecision::kVoiced : audio::GateDecision::kSilent;
    protocol::StreamHeader h;
    h.codec = codec;
    const auto packets = protocol::StreamEncode(blocks, d, h, 2000);
    const auto bytes = protocol::SerializeStream(h, packets);
    const auto parsed = protocol::ParseStream(bytes);
    const auto out = protocol::StreamDecode(parsed.header, parsed.packets).samples;
    if (out.size() != n * 256) ok = false;
    for (std::size_t b = 0; b < n && ok; ++b) {
      const auto* got = out.data() + b * 256;
      if (d[b] == audio::GateDecision::kSilent) {
        ok = std::all_of(got, got + 256, [](auto v) { return v == 0; });
      } else if (codec == CodecId::kRaw) {
        ok = std::equal(got, got + 256, blocks[b].samples.begin());
      }
    }
    ++checked;
  }
  Report("duration conservation", ok,
         Fmt("%zu random gate patterns over all codecs, raw voiced blocks bit-exact", checked));
}

void CodecFidelity() {
  const auto x = Sine(1000.0, 32767.0, 16000);
  auto snr = [&](CodecId id) {
    const auto& c = codecs::GetCodec(id);
    auto es = c.InitialState();
    auto ds = c.InitialState();
    return codecs::SnrDb(x, c.Decode(c.Encode(x, es), ds));
  };
  const double adpcm = snr(CodecId::kAdpcm);
  const double dm = snr(CodecId::kDm);
  const double cfdm = snr(CodecId::kCfdm);
  Report("codec fidelity", adpcm >= 20.0 && adpcm > dm,
         Fmt("1 kHz full-scale SNR adpcm %.2f dB, dm %.2f dB, cfdm %.2f dB", adpcm, dm, cfdm));
}

std::vector<std::complex<double>> NaiveDft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t t = 0; t < n; ++t) {
      out[k] += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / n);
    }
  }
  return out;
}

std::array<double, dsp::kNumMfcc> ReferenceMfcc(std::span<const std::int16_t> pcm, const dsp::MelFilterbank& fb) {
  const std::size_t n = pcm.size();
  std::vector<std::complex<double>> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = pcm[i] / 32768.0 * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n));
  const auto spec = NaiveDft(x);
  const std::size_t m_count = fb.n_filters();
  std::vector<double> log_e(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    double e = 0.0;
    for (std::size_t k = 0; k < fb.n_bins(); ++k) e += fb.row(m)[k] * std::norm(spec[k]);
    log_e[m] = std::log(std::max(e, dsp::kLogEnergyFloor));
  }
  std::array<double, dsp::kNumMfcc> c{};
  for (std::size_t i = 0; i < dsp::kNumMfcc; ++i) {
    const double s = std::sqrt((i == 0 ? 1.0 : 2.0) / m_count);
    for (std::size_t m = 0; m < m_count; ++m) c[i] += s * log_e[m] * std::cos(std::numbers::pi * i * (m + 0.5) / m_count);
  }
  return c;
}

void FftMfccOracles() {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_rel = 0.0;
  for (std::size_t n = 64; n <= 512; n *= 2) {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<std::complex<double>> x(n);
      for (auto& v : x) v = {u(rng), u(rng)};
      const auto ref = NaiveDft(x);
      double peak = 0.0;
      for (const auto& v : ref) peak = std::max(peak, std::abs(v));
      dsp::Fft(x);
      for (std::size_t k = 0; k < n; ++k) worst_rel = std::max(worst_rel, std::abs(x[k] - ref[k]) / peak);
    }
  }
  const dsp::MelFilterbank fb;
  const dsp::MfccExtractor ex(fb);
  int worst_steps = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto block = RandomPcm(rng, 256);
    const int shift = static_cast<int>(rng() % 12);
    for (auto& v : block) v = static_cast<std::int16_t>(v >> shift);
    const auto got = ex.Compute(block);
    const auto want = ReferenceMfcc(block, fb);
    for (std::size_t i = 0; i < dsp::kNumMfcc; ++i) {
      worst_steps = std::max(worst_steps, static_cast<int>(std::lround(std::abs(got.value(i) - want[i]) * 256.0)));
    }
  }
  Report("fft/mfcc oracles", worst_rel <= 1e-6 && worst_steps <= 2,
         Fmt("fft worst relative error %.2e over sizes 64-512; mfcc worst %d steps over 1000 blocks",
             worst_rel, worst_steps));
}

void EnergyReadBack() {
  const auto table = energy::LoadCurrentTable(std::string(TINYBIRD_DATA_DIR) + "/current_profile.ini");
  const auto battery = energy::LoadBattery(std::string(TINYBIRD_DATA_DIR) + "/battery_a13.ini");
  struct Row {
    const char* name;
    double ma;
  };
  const Row published[] = {{"raw", 0.82},      {"adpcm", 0.24},     {"sbc_high", 0.31}, {"opus_high", 1.32},
                           {"dm", 0.06},       {"cfdm", 0.15},      {"sbc_low", 0.14},  {"opus_low", 0.96}};
  bool rows_ok = table.rows.size() == std::size(published);
  for (const auto& r : published) {
    auto p = table.ProfileFor(r.name);
    p.baseline_ma = 0.0;
    rows_ok = rows_ok && std::abs(energy::AverageCurrentMa(p, 1.0) - r.ma) < 1e-12;
  }
  const double cls_mw = energy::ClassifierModePowerMw(table.ProfileFor("adpcm"));
  const double ratio = energy::LifetimeHours(battery, energy::AverageCurrentMa(table.ProfileFor("adpcm"), 1.0)) /
                       energy::LifetimeHours(battery, energy::AverageCurrentMa(table.ProfileFor("raw"), 1.0));
  const double hours = energy::LifetimeFromBatteryCurrent(battery, 11.2);
  const bool ok = rows_ok && std::abs(cls_mw - 5.73) < 1e-9 && std::abs(ratio - 1.70) <= 0.01 &&
                  std::abs(hours - 25.0) < 1e-9;
  Report("energy model read-back", ok,
         Fmt("8 rows %s; classifier mode %.2f mW; adpcm/raw lifetime %.4f; %.0f mAh / 11.2 mA = %.2f h",
             rows_ok ? "match to 1e-12" : "MISMATCH", cls_mw, ratio, battery.capacity_mah, hours));
}

struct HeldOut {
  corpus::Corpus corpus;
  pipeline::PipelineResult result;
};

HeldOut RunHeldOut(const tinyml::ModelBundle& models) {
  corpus::CorpusConfig config;
  config.seed = 31337;
  config.n_motifs = 60;
  config.snr_db = 20.0;
  HeldOut h{corpus::Generate(config), {}};
  h.result = pipeline::RunPipeline(h.corpus.samples, models, {});
  return h;
}

void PipelineAccounting(const HeldOut& h) {
  const auto& t = h.result.timing;
  const bool counts = t.classifier_invocations == t.segments && t.segments == h.result.events.size() &&
                      t.detector_invocations == t.blocks &&
                      t.blocks == (h.corpus.samples.size() + 255) / 256;
  std::size_t hits = 0;
  for (const auto& s : h.corpus.syllables) {
    const auto r = s.blocks(256);
    for (const auto& e : h.result.events) {
      if (std::llabs(static_cast<long long>(e.onset_block) - static_cast<long long>(r.onset)) <= 1 &&
          std::llabs(static_cast<long long>(e.offset_block) - static_cast<long long>(r.offset)) <= 1) {
        ++hits;
        break;
      }
    }
  }
  const double frac = static_cast<double>(hits) / h.corpus.syllables.size();
  Report("pipeline accounting", counts && frac >= 0.95,
         Fmt("blocks %llu = detector calls %llu; segments %llu = classifier calls %llu; "
             "boundaries within 1 block %zu/%zu (%.1f%%)",
             static_cast<unsigned long long>(t.blocks), static_cast<unsigned long long>(t.detector_invocations),
             static_cast<unsigned long long>(t.segments), static_cast<unsigned long long>(t.classifier_invocations),
             hits, h.corpus.syllables.size(), 100.0 * frac));
}

std::size_t EditOracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    if (auto it = memo.find({i, j}); it != memo.end()) return it->second;
    const std::size_t best = std::min({go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1), go(i + 1, j) + 1, go(i, j + 1) + 1});
    return memo[{i, j}] = best;
  };
  return go(0, 0);
}

void SerOracle(const HeldOut& h) {
  std::mt19937 rng(7);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> a(rng() % 9);
    std::vector<int> b(rng() % 9);
    for (auto& v : a) v = static_cast<int>(rng() % 8);
    for (auto& v : b) v = static_cast<int>(rng() % 8);
    mismatches += pipeline::EditDistance(a, b) != EditOracle(a, b);
  }
  std::vector<int> predicted;
  for (const auto& e : h.result.events) predicted.push_back(e.label);
  const auto reference = pipeline::Labels(h.corpus.Events());
  const double ser = pipeline::SyllableErrorRate(predicted, reference);
  Report("ser oracle", mismatches == 0 && ser <= 0.10,
         Fmt("%d/1000 edit-distance mismatches; held-out 20 dB corpus SER %.4f (%zu events, %zu reference)",
             mismatches, ser, predicted.size(), reference.size()));
}

std::array<double, tinyml::kNumClasses> FloatLogits(const std::array<std::array<double, dsp::kNumMfcc>, 3>& x,
                                                    const tinyml::ClassifierModel& m) {
  using namespace tinyml;
  std::array<double, kFcInputs> hidden{};
  for (std::size_t f = 0; f < kConvFilters; ++f) {
    for (std::size_t p = 0; p < kConvPositions; ++p) {
      double acc = m.conv_bias.Dequantized(f);
      for (std::size_t c = 0; c < kClassifierBlocks; ++c) {
        for (std::size_t j = 0; j < kConvKernel; ++j) {
          acc += x[c][p + j] * m.conv_weights.Dequantized((f * kClassifierBlocks + c) * kConvKernel + j);
        }
      }
      hidden[f * kConvPositions + p] = std::max(acc, 0.0);
    }
  }
  std::array<double, kNumClasses> logits{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    logits[k] = m.fc_bias.Dequantized(k);
    for (std::size_t i = 0; i < kFcInputs; ++i) logits[k] += hidden[i] * m.fc_weights.Dequantized(k * kFcInputs + i);
  }
  return logits;
}

void QuantizedInference(const tinyml::ModelBundle& models) {
  // Random inputs: independent uniform draws per coefficient over the MFCC
  // range of a synthetic recording.
  corpus::CorpusConfig config;
  config.seed = 777;
  config.n_motifs = 10;
  const auto c = corpus::Generate(config);
  const dsp::MfccExtractor ex{dsp::MelFilterbank{}};
  std::array<std::pair<double, double>, dsp::kNumMfcc> range;
  range.fill({1e9, -1e9});
  for (std::size_t b = 0; b + 256 <= c.samples.size(); b += 256) {
    const auto v = ex.Compute(std::span(c.samples).subspan(b, 256)).ToDouble();
    for (std::size_t i = 0; i < dsp::kNumMfcc; ++i) {
      range[i] = {std::min(range[i].first, v[i]), std::max(range[i].second, v[i])};
    }
  }
  std::mt19937 rng(6);
  constexpr int kDraws = 10000;
  int agree = 0;
  bool simplex = true;
  for (int n = 0; n < kDraws; ++n) {
    std::array<dsp::MfccVector, 3> q;
    std::array<std::array<double, dsp::kNumMfcc>, 3> x;
    for (int b = 0; b < 3; ++b) {
      for (std::size_t i = 0; i < dsp::kNumMfcc; ++i) {
        const double v = std::uniform_real_distribution<double>(range[i].first, range[i].second)(rng);
        q[b].coeffs[i] = static_cast<std::int32_t>(std::lround(v * 256.0));
      }
      x[b] = q[b].ToDouble();
    }
    const auto r = tinyml::Classify(q, models.classifier);
    agree += r.label == tinyml::Argmax(FloatLogits(x, models.classifier));
    double sum = 0.0;
    for (double p : r.probs) {
      simplex = simplex && p >= 0.0 && p <= 1.0;
      sum += p;
    }
    simplex = simplex && std::abs(sum - 1.0) < 1e-9;
  }
  const double frac = static_cast<double>(agree) / kDraws;
  Report("quantized inference", frac >= 0.99 && simplex,
         Fmt("int8 vs float argmax agreement %d/%d (%.2f%%); softmax simplex %s", agree, kDraws, 100.0 * frac,
             simplex ? "holds" : "VIOLATED"));
}

}  // namespace

int main() {
  try {
    const auto models = tinyml::LoadModel(std::string(TINYBIRD_FIXTURE_DIR) + "/model.tbm");
    CompressionRatios();
    DurationConservation();
    CodecFidelity();
    FftMfccOracles();
    EnergyReadBack();
    const auto held_out = RunHeldOut(models);
    PipelineAccounting(held_out);
    SerOracle(held_out);
    QuantizedInference(models);
  } catch (const std::exception& e) {
    std::printf("FAIL [PRIMARY] acceptance harness: %s\n", e.what());
    ++failures;
  }
  Skip("trainer reproducibility", "trainer component not built in this repository");
  Skip("cross-component feature parity", "trainer component not built in this repository");
  return failures == 0 ? 0 : 1;
}
