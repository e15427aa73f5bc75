#include <complex>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "tinybird/audio.h"
#include "tinybird/codecs.h"
#include "tinybird/dsp.h"
#include "tinybird/protocol.h"
#include "tinybird/tinyml.h"

namespace {

using namespace tinybird;

std::vector<std::int16_t> Noise(std::size_t n) {
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> d(-12000, 12000);
  std::vector<std::int16_t> out(n);
  for (auto& v : out) v = static_cast<std::int16_t>(d(rng));
  return out;
}

void BM_Encode(benchmark::State& state) {
  const auto id = static_cast<codecs::CodecId>(state.range(0));
  const auto& codec = codecs::GetCodec(id);
  const auto pcm = Noise(16000);
  for (auto _ : state) {
    auto s = codec.InitialState();
    benchmark::DoNotOptimize(codec.Encode(pcm, s));
  }
  state.SetLabel(std::string(codecs::CodecName(id)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pcm.size()));
}
BENCHMARK(BM_Encode)->DenseRange(0, 3);

void BM_Decode(benchmark::State& state) {
  const auto id = static_cast<codecs::CodecId>(state.range(0));
  const auto& codec = codecs::GetCodec(id);
  const auto pcm = Noise(16000);
  auto es = codec.InitialState();
  const auto payload = codec.Encode(pcm, es);
  for (auto _ : state) {
    auto s = codec.InitialState();
    benchmark::DoNotOptimize(codec.Decode(payload, s));
  }
  state.SetLabel(std::string(codecs::CodecName(id)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pcm.size()));
}
BENCHMARK(BM_Decode)->DenseRange(0, 3);

void BM_StreamEncode(benchmark::State& state) {
  const auto pcm = Noise(16000 * 10);
  const auto blocks = audio::FrameSignal(pcm, 256, 16000);
  std::vector<audio::GateDecision> d(blocks.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = i % 3 ? audio::GateDecision::kVoiced : audio::GateDecision::kSilent;
  }
  protocol::StreamHeader h;
  for (auto _ : state) benchmark::DoNotOptimize(protocol::StreamEncode(blocks, d, h));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(blocks.size()));
}
BENCHMARK(BM_StreamEncode);

void BM_Fft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::complex<double>> x(n, {0.5, -0.25});
  for (auto _ : state) {
    dsp::Fft(x);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_Fft)->RangeMultiplier(2)->Range(64, 512);

void BM_Mfcc(benchmark::State& state) {
  const dsp::MfccExtractor extractor{dsp::MelFilterbank{}};
  const auto block = Noise(256);
  for (auto _ : state) benchmark::DoNotOptimize(extractor.Compute(block));
}
BENCHMARK(BM_Mfcc);

void BM_Detect(benchmark::State& state) {
  const auto models = tinyml::LoadModel(TINYBIRD_FIXTURE_DIR "/model.tbm");
  const auto mfcc = dsp::MfccExtractor{dsp::MelFilterbank{}}.Compute(Noise(256));
  for (auto _ : state) benchmark::DoNotOptimize(tinyml::Detect(mfcc, models.detector));
}
BENCHMARK(BM_Detect);

void BM_Classify(benchmark::State& state) {
  const auto models = tinyml::LoadModel(TINYBIRD_FIXTURE_DIR "/model.tbm");
  const dsp::MfccExtractor extractor{dsp::MelFilterbank{}};
  const auto pcm = Noise(768);
  std::array<dsp::MfccVector, 3> blocks;
  for (int b = 0; b < 3; ++b) blocks[b] = extractor.Compute(std::span(pcm).subspan(b * 256, 256));
  tinyml::ScratchArena arena;
  for (auto _ : state) benchmark::DoNotOptimize(tinyml::Classify(blocks, models.classifier, arena));
}
BENCHMARK(BM_Classify);

}  // namespace

BENCHMARK_MAIN();
