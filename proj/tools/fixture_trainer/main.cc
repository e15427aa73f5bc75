// Trains the detector and classifier on the synthetic corpus and writes a
// post-training-quantized .tbm. Used to regenerate tests/fixtures/model.tbm;
// the output is a pure function of the flags.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tinybird/audio.h"
#include "tinybird/corpus.h"
#include "tinybird/dsp.h"
#include "tinybird/error.h"
#include "tinybird/pipeline.h"
#include "tinybird/tinyml.h"

namespace {

using tinybird::dsp::kNumMfcc;
using tinybird::tinyml::kClassifierBlocks;
using tinybird::tinyml::kConvFilters;
using tinybird::tinyml::kConvKernel;
using tinybird::tinyml::kConvPositions;
using tinybird::tinyml::kFcInputs;
using tinybird::tinyml::kNumClasses;

constexpr std::size_t kBlockSize = tinybird::audio::kDefaultBlockSize;

using Features = std::array<double, kNumMfcc>;
using ClassifierInput = std::array<Features, kClassifierBlocks>;

struct BlockSample {
  Features x;
  double target = 0.0;
};

struct SyllableSample {
  ClassifierInput x;
  int label = 0;
};

struct Dataset {
  std::vector<BlockSample> blocks;
  std::vector<SyllableSample> syllables;
};

double Uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double Gaussian(std::mt19937_64& rng) {
  double u1 = Uniform(rng);
  while (u1 <= 0.0) u1 = Uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * Uniform(rng));
}

// Deterministic Fisher-Yates; std::shuffle is implementation defined.
template <typename T>
void Shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

void AddCorpus(const tinybird::corpus::Corpus& corpus, bool with_blocks, Dataset& data) {
  const tinybird::dsp::MfccExtractor extractor{tinybird::dsp::MelFilterbank()};
  const auto blocks = tinybird::audio::FrameSignal(corpus.samples, kBlockSize, corpus.sample_rate);
  std::vector<Features> mfcc(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) mfcc[b] = extractor.Compute(blocks[b]).ToDouble();

  if (with_blocks) {
    // Partly covered edge blocks are ambiguous by construction; the segmenter
    // tolerates a one-block boundary error, so they are left out.
    std::vector<std::size_t> cover(blocks.size(), 0);
    for (const auto& s : corpus.syllables) {
      for (auto n = s.onset_sample; n < s.offset_sample; ++n) ++cover[n / kBlockSize];
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (cover[b] == 0 || cover[b] == kBlockSize) {
        data.blocks.push_back({mfcc[b], cover[b] == 0 ? 0.0 : 1.0});
      }
    }
  }

  for (const auto& s : corpus.syllables) {
    const auto r = s.blocks(kBlockSize);
    // The runtime segmenter may place boundaries one block off; train on
    // those variants too.
    for (int d_on = -1; d_on <= 1; ++d_on) {
      for (int d_off = -1; d_off <= 1; ++d_off) {
        const auto on = static_cast<std::int64_t>(r.onset) + d_on;
        const auto off = static_cast<std::int64_t>(r.offset) + d_off;
        if (on < 0 || off < on || off >= static_cast<std::int64_t>(mfcc.size())) continue;
        const auto picks = tinybird::pipeline::SelectBlocks(on, off);
        SyllableSample sample;
        for (std::size_t i = 0; i < picks.size(); ++i) sample.x[i] = mfcc[picks[i]];
        sample.label = s.label;
        data.syllables.push_back(sample);
      }
    }
  }
}

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void Step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + 1e-8);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  double lr_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

struct FloatDetector {
  Features w{};
  double b = 0.0;
};

FloatDetector TrainDetector(const std::vector<BlockSample>& data, int epochs, std::mt19937_64& rng) {
  // Fit on standardized features, then fold the normalization back in so the
  // model reads raw MFCCs.
  Features mean{}, stdev{};
  for (const auto& s : data) {
    for (std::size_t i = 0; i < kNumMfcc; ++i) mean[i] += s.x[i];
  }
  for (auto& m : mean) m /= data.size();
  for (const auto& s : data) {
    for (std::size_t i = 0; i < kNumMfcc; ++i) stdev[i] += (s.x[i] - mean[i]) * (s.x[i] - mean[i]);
  }
  for (auto& v : stdev) v = std::max(std::sqrt(v / data.size()), 1e-6);

  std::vector<double> params(kNumMfcc + 1, 0.0);
  Adam adam(params.size(), 0.02);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  constexpr std::size_t kBatch = 256;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += kBatch) {
      const std::size_t end = std::min(order.size(), start + kBatch);
      std::vector<double> grad(params.size(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = data[order[k]];
        double z = params[kNumMfcc];
        for (std::size_t i = 0; i < kNumMfcc; ++i) z += params[i] * (s.x[i] - mean[i]) / stdev[i];
        const double err = 1.0 / (1.0 + std::exp(-z)) - s.target;
        for (std::size_t i = 0; i < kNumMfcc; ++i) grad[i] += err * (s.x[i] - mean[i]) / stdev[i];
        grad[kNumMfcc] += err;
      }
      for (auto& g : grad) g /= static_cast<double>(end - start);
      adam.Step(params, grad);
    }
  }
  FloatDetector det;
  det.b = params[kNumMfcc];
  for (std::size_t i = 0; i < kNumMfcc; ++i) {
    det.w[i] = params[i] / stdev[i];
    det.b -= params[i] * mean[i] / stdev[i];
  }
  return det;
}

// Parameter layout: conv w [8][3][3], conv b [8], fc w [8][112], fc b [8].
constexpr std::size_t kConvW = 0;
constexpr std::size_t kConvB = kConvW + kConvFilters * kClassifierBlocks * kConvKernel;
constexpr std::size_t kFcW = kConvB + kConvFilters;
constexpr std::size_t kFcB = kFcW + kNumClasses * kFcInputs;
constexpr std::size_t kParamCount = kFcB + kNumClasses;

struct Forward {
  std::array<double, kFcInputs> pre{};
  std::array<double, kFcInputs> hidden{};
  std::array<double, kNumClasses> logits{};
};

Forward RunFloat(const std::vector<double>& p, const ClassifierInput& x, double input_gain) {
  Forward f;
  for (std::size_t o = 0; o < kConvFilters; ++o) {
    for (std::size_t q = 0; q < kConvPositions; ++q) {
      double z = p[kConvB + o];
      for (std::size_t c = 0; c < kClassifierBlocks; ++c) {
        for (std::size_t j = 0; j < kConvKernel; ++j) {
          z += p[kConvW + (o * kClassifierBlocks + c) * kConvKernel + j] * x[c][q + j] * input_gain;
        }
      }
      f.pre[o * kConvPositions + q] = z;
      f.hidden[o * kConvPositions + q] = std::max(0.0, z);
    }
  }
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    double z = p[kFcB + k];
    for (std::size_t i = 0; i < kFcInputs; ++i) z += p[kFcW + k * kFcInputs + i] * f.hidden[i];
    f.logits[k] = z;
  }
  return f;
}

std::vector<double> TrainClassifier(const std::vector<SyllableSample>& data, int epochs,
                                    double input_gain, std::mt19937_64& rng) {
  std::vector<double> p(kParamCount, 0.0);
  const double conv_std = std::sqrt(2.0 / (kClassifierBlocks * kConvKernel));
  const double fc_std = std::sqrt(1.0 / kFcInputs);
  for (std::size_t i = kConvW; i < kConvB; ++i) p[i] = conv_std * Gaussian(rng);
  for (std::size_t i = kConvB; i < kFcW; ++i) p[i] = 0.1;
  for (std::size_t i = kFcW; i < kFcB; ++i) p[i] = fc_std * Gaussian(rng);

  Adam adam(p.size(), 0.005);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  constexpr std::size_t kBatch = 32;
  constexpr double kWeightDecay = 1e-4;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += kBatch) {
      const std::size_t end = std::min(order.size(), start + kBatch);
      std::vector<double> g(p.size(), 0.0);
      for (std::size_t n = start; n < end; ++n) {
        const auto& s = data[order[n]];
        const auto f = RunFloat(p, s.x, input_gain);
        const auto prob = tinybird::tinyml::Softmax(f.logits);
        std::array<double, kNumClasses> dlogit{};
        for (std::size_t k = 0; k < kNumClasses; ++k) {
          dlogit[k] = prob[k] - (static_cast<int>(k) == s.label ? 1.0 : 0.0);
        }
        std::array<double, kFcInputs> dhidden{};
        for (std::size_t k = 0; k < kNumClasses; ++k) {
          g[kFcB + k] += dlogit[k];
          for (std::size_t i = 0; i < kFcInputs; ++i) {
            g[kFcW + k * kFcInputs + i] += dlogit[k] * f.hidden[i];
            dhidden[i] += dlogit[k] * p[kFcW + k * kFcInputs + i];
          }
        }
        for (std::size_t o = 0; o < kConvFilters; ++o) {
          for (std::size_t q = 0; q < kConvPositions; ++q) {
            const std::size_t h = o * kConvPositions + q;
            if (f.pre[h] <= 0.0) continue;
            g[kConvB + o] += dhidden[h];
            for (std::size_t c = 0; c < kClassifierBlocks; ++c) {
              for (std::size_t j = 0; j < kConvKernel; ++j) {
                g[kConvW + (o * kClassifierBlocks + c) * kConvKernel + j] +=
                    dhidden[h] * s.x[c][q + j] * input_gain;
              }
            }
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = 0; i < p.size(); ++i) g[i] = g[i] * inv + kWeightDecay * p[i];
      adam.Step(p, g);
    }
  }
  // Fold the input gain into the conv weights.
  for (std::size_t i = kConvW; i < kConvB; ++i) p[i] *= input_gain;
  return p;
}

float SymmetricScale(const double* v, std::size_t n) {
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, std::abs(v[i]));
  return peak > 0.0 ? static_cast<float>(peak / 127.0) : 1.0f;
}

std::vector<std::int8_t> QuantizeWeights(const double* v, std::size_t n, float scale) {
  std::vector<std::int8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<std::int8_t>(std::clamp<long>(std::lround(v[i] / scale), -127, 127));
  }
  return out;
}

std::vector<std::int32_t> QuantizeBias(const double* v, std::size_t n, double scale) {
  std::vector<std::int32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::int32_t>(std::lround(v[i] / scale));
  return out;
}

tinybird::tinyml::QuantParams AsymmetricParams(double lo, double hi) {
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  if (hi - lo <= 0.0) return {1.0f, 0};
  const float scale = static_cast<float>((hi - lo) / 255.0);
  const auto zp = static_cast<std::int32_t>(std::clamp<long>(std::lround(-128.0 - lo / scale), -128, 127));
  return {scale, zp};
}

// Central 99.9% range, robust to the digital-silence floor.
std::pair<double, double> CalibrationRange(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto at = [&](double q) {
    return values[static_cast<std::size_t>(q * static_cast<double>(values.size() - 1))];
  };
  return {at(0.0005), at(0.9995)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and quantize the tinybird fixture models"};
  std::string out_path = "model.tbm";
  std::uint64_t seed = 7;
  std::size_t motifs = 200;
  int detector_epochs = 40;
  int classifier_epochs = 60;
  std::uint64_t eval_seed = 1001;
  std::size_t eval_motifs = 40;
  app.add_option("-o,--out", out_path, "Output .tbm path");
  app.add_option("--seed", seed, "Corpus and initialization seed");
  app.add_option("--motifs", motifs, "Motifs per training corpus");
  app.add_option("--detector-epochs", detector_epochs);
  app.add_option("--classifier-epochs", classifier_epochs);
  app.add_option("--eval-seed", eval_seed, "Seed of the held-out corpus");
  app.add_option("--eval-motifs", eval_motifs);
  // The detector reads absolute log energies, so it is fitted to one noise
  // floor; three corpora with distinct seeds at that level.
  std::vector<double> snrs = {20.0, 20.0, 20.0};
  app.add_option("--snr", snrs, "SNR of each training corpus, dB");
  CLI11_PARSE(app, argc, argv);

  try {
    Dataset data;
    for (std::size_t i = 0; i < snrs.size(); ++i) {
      tinybird::corpus::CorpusConfig cfg;
      cfg.seed = seed * 16 + i;
      cfg.n_motifs = motifs;
      cfg.snr_db = snrs[i];
      AddCorpus(tinybird::corpus::Generate(cfg), true, data);
    }

    std::mt19937_64 rng(seed);
    const auto det = TrainDetector(data.blocks, detector_epochs, rng);

    std::size_t det_correct = 0;
    for (const auto& s : data.blocks) {
      double z = det.b;
      for (std::size_t i = 0; i < kNumMfcc; ++i) z += det.w[i] * s.x[i];
      det_correct += (z >= 0.0) == (s.target > 0.5);
    }

    std::vector<double> inputs;
    for (const auto& s : data.blocks) inputs.insert(inputs.end(), s.x.begin(), s.x.end());
    const auto [in_lo, in_hi] = CalibrationRange(inputs);
    const auto input_q = AsymmetricParams(in_lo, in_hi);

    const double gain = 1.0 / std::max(std::abs(in_lo), std::abs(in_hi));
    const auto cls = TrainClassifier(data.syllables, classifier_epochs, gain, rng);

    std::vector<double> hidden;
    for (const auto& s : data.syllables) {
      const auto f = RunFloat(cls, s.x, 1.0);
      hidden.insert(hidden.end(), f.hidden.begin(), f.hidden.end());
    }
    const double hidden_hi = *std::max_element(hidden.begin(), hidden.end());
    const auto conv_out_q = AsymmetricParams(0.0, hidden_hi);

    namespace ml = tinybird::tinyml;
    ml::DetectorModel detector;
    detector.input = input_q;
    const float det_w_scale = SymmetricScale(det.w.data(), kNumMfcc);
    detector.weights = ml::MakeInt8Tensor("det.weight", {1, kNumMfcc},
                                          QuantizeWeights(det.w.data(), kNumMfcc, det_w_scale),
                                          det_w_scale);
    const double det_b_scale = static_cast<double>(input_q.scale) * det_w_scale;
    detector.bias = ml::MakeInt32Tensor("det.bias", {1}, QuantizeBias(&det.b, 1, det_b_scale),
                                        static_cast<float>(det_b_scale));

    ml::ClassifierModel classifier;
    classifier.input = input_q;
    const float conv_scale = SymmetricScale(&cls[kConvW], kConvB - kConvW);
    classifier.conv_weights = ml::MakeInt8Tensor(
        "cls.conv.weight", {kConvFilters, kClassifierBlocks, kConvKernel},
        QuantizeWeights(&cls[kConvW], kConvB - kConvW, conv_scale), conv_scale);
    const double conv_b_scale = static_cast<double>(input_q.scale) * conv_scale;
    classifier.conv_bias = ml::MakeInt32Tensor("cls.conv.bias", {kConvFilters},
                                               QuantizeBias(&cls[kConvB], kConvFilters, conv_b_scale),
                                               static_cast<float>(conv_b_scale));
    classifier.conv_output = conv_out_q;
    const float fc_scale = SymmetricScale(&cls[kFcW], kFcB - kFcW);
    classifier.fc_weights = ml::MakeInt8Tensor("cls.fc.weight", {kNumClasses, kFcInputs},
                                               QuantizeWeights(&cls[kFcW], kFcB - kFcW, fc_scale),
                                               fc_scale);
    const double fc_b_scale = static_cast<double>(conv_out_q.scale) * fc_scale;
    classifier.fc_bias = ml::MakeInt32Tensor("cls.fc.bias", {kNumClasses},
                                             QuantizeBias(&cls[kFcB], kNumClasses, fc_b_scale),
                                             static_cast<float>(fc_b_scale));

    ml::SaveModel(out_path, detector, classifier);
    const auto bundle = ml::LoadModel(out_path);

    // Held-out check with the runtime pipeline.
    tinybird::corpus::CorpusConfig eval_cfg;
    eval_cfg.seed = eval_seed;
    eval_cfg.n_motifs = eval_motifs;
    eval_cfg.snr_db = 20.0;
    const auto eval = tinybird::corpus::Generate(eval_cfg);
    const auto result = tinybird::pipeline::RunPipeline(eval.samples, bundle, {});
    std::vector<int> predicted;
    for (const auto& e : result.events) predicted.push_back(e.label);
    const auto reference = tinybird::pipeline::Labels(eval.Events());
    std::size_t boundary_hits = 0;
    for (const auto& s : eval.syllables) {
      const auto r = s.blocks(kBlockSize);
      for (const auto& e : result.events) {
        const auto d_on = static_cast<std::int64_t>(e.onset_block) - static_cast<std::int64_t>(r.onset);
        const auto d_off =
            static_cast<std::int64_t>(e.offset_block) - static_cast<std::int64_t>(r.offset);
        if (std::abs(d_on) <= 1 && std::abs(d_off) <= 1) {
          ++boundary_hits;
          break;
        }
      }
    }
    std::size_t block_hits = 0;
    const auto truth = eval.BlockVoicing(kBlockSize);
    for (std::size_t b = 0; b < truth.size(); ++b) block_hits += truth[b] == result.detections[b];

    nlohmann::ordered_json report;
    report["out"] = out_path;
    report["training_blocks"] = data.blocks.size();
    report["training_syllables"] = data.syllables.size();
    report["detector_flash_bytes"] = bundle.report.detector_flash_bytes;
    report["classifier_flash_bytes"] = bundle.report.classifier_flash_bytes;
    report["warnings"] = bundle.report.warnings;
    report["detector_train_accuracy"] = static_cast<double>(det_correct) / data.blocks.size();
    report["eval_syllables"] = reference.size();
    report["eval_events"] = predicted.size();
    report["eval_ser"] = tinybird::pipeline::SyllableErrorRate(predicted, reference);
    report["eval_boundary_accuracy"] = static_cast<double>(boundary_hits) / eval.syllables.size();
    report["eval_block_accuracy"] = static_cast<double>(block_hits) / truth.size();
    std::cout << report.dump(2) << "\n";
  } catch (const tinybird::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
