#include "tinybird/codecs.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "tinybird/bytes.h"
#include "tinybird/error.h"

namespace tinybird::codecs {
namespace {

constexpr const char* kModule = "codecs";

constexpr std::array<std::int16_t, 89> kImaStepTable = {
    7,     8,     9,     10,    11,    12,    13,    14,    16,    17,
    19,    21,    23,    25,    28,    31,    34,    37,    41,    45,
    50,    55,    60,    66,    73,    80,    88,    97,    107,   118,
    130,   143,   157,   173,   190,   209,   230,   253,   279,   307,
    337,   371,   408,   449,   494,   544,   598,   658,   724,   796,
    876,   963,   1060,  1166,  1282,  1411,  1552,  1707,  1878,  2066,
    2272,  2499,  2749,  3024,  3327,  3660,  4026,  4428,  4871,  5358,
    5894,  6484,  7132,  7845,  8630,  9493,  10442, 11487, 12635, 13899,
    15289, 16818, 18500, 20350, 22385, 24623, 27086, 29794, 32767};

constexpr std::array<int, 8> kImaIndexTable = {-1, -1, -1, -1, 2, 4, 6, 8};

std::int16_t ClampPcm(std::int32_t v) {
  return static_cast<std::int16_t>(std::clamp<std::int32_t>(
      v, std::numeric_limits<std::int16_t>::min(),
      std::numeric_limits<std::int16_t>::max()));
}

void CheckGranularity(const Codec& codec, std::size_t n) {
  if (n % codec.sample_granularity() != 0) {
    throw FramingError(kModule, std::string(codec.name()) + " needs a multiple of " +
                                    std::to_string(codec.sample_granularity()) +
                                    " samples, got " + std::to_string(n));
  }
}

template <typename T>
T& StateAs(CodecState& state, const Codec& codec) {
  if (auto* s = std::get_if<T>(&state)) return *s;
  throw ValueError(kModule, "state does not belong to codec " + std::string(codec.name()));
}

class RawCodec final : public Codec {
 public:
  CodecId id() const override { return CodecId::kRaw; }
  unsigned bits_per_sample() const override { return 16; }
  std::size_t sample_granularity() const override { return 1; }
  CodecState InitialState() const override { return RawState{}; }

  std::vector<std::uint8_t> Encode(std::span<const std::int16_t> samples,
                                   CodecState& state) const override {
    StateAs<RawState>(state, *this);
    ByteWriter w;
    for (std::int16_t s : samples) w.Put<std::int16_t>(s);
    return w.Take();
  }

  std::vector<std::int16_t> Decode(std::span<const std::uint8_t> payload,
                                   CodecState& state) const override {
    StateAs<RawState>(state, *this);
    if (payload.size() % 2 != 0) {
      throw FramingError(kModule, "raw payload has odd length " +
                                      std::to_string(payload.size()));
    }
    ByteReader r(payload);
    std::vector<std::int16_t> out;
    out.reserve(payload.size() / 2);
    while (auto s = r.Get<std::int16_t>()) out.push_back(*s);
    return out;
  }

  std::size_t state_size() const override { return 0; }
  std::vector<std::uint8_t> SerializeState(const CodecState&) const override { return {}; }
  CodecState ParseState(std::span<const std::uint8_t>) const override { return RawState{}; }
};

class AdpcmCodec final : public Codec {
 public:
  CodecId id() const override { return CodecId::kAdpcm; }
  unsigned bits_per_sample() const override { return 4; }
  std::size_t sample_granularity() const override { return 2; }
  CodecState InitialState() const override { return AdpcmState{}; }

  std::vector<std::uint8_t> Encode(std::span<const std::int16_t> samples,
                                   CodecState& state) const override {
    CheckGranularity(*this, samples.size());
    auto& st = StateAs<AdpcmState>(state, *this);
    std::vector<std::uint8_t> out(samples.size() / 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::uint8_t code = EncodeSample(samples[i], st);
      // Low nibble carries the earlier sample.
      out[i / 2] |= static_cast<std::uint8_t>(i % 2 == 0 ? code : code << 4);
    }
    return out;
  }

  std::vector<std::int16_t> Decode(std::span<const std::uint8_t> payload,
                                   CodecState& state) const override {
    auto& st = StateAs<AdpcmState>(state, *this);
    std::vector<std::int16_t> out;
    out.reserve(payload.size() * 2);
    for (std::uint8_t b : payload) {
      out.push_back(DecodeSample(b & 0x0F, st));
      out.push_back(DecodeSample(b >> 4, st));
    }
    return out;
  }

  std::size_t state_size() const override { return 3; }

  std::vector<std::uint8_t> SerializeState(const CodecState& state) const override {
    const auto& st = std::get<AdpcmState>(state);
    ByteWriter w;
    w.Put<std::int16_t>(st.predictor);
    w.Put<std::uint8_t>(st.step_index);
    return w.Take();
  }

  CodecState ParseState(std::span<const std::uint8_t> bytes) const override {
    ByteReader r(bytes);
    const auto predictor = r.Get<std::int16_t>();
    const auto index = r.Get<std::uint8_t>();
    if (!index) throw FramingError(kModule, "truncated ADPCM state snapshot");
    if (*index > kAdpcmMaxStepIndex) {
      throw FramingError(kModule, "ADPCM step index " + std::to_string(*index) +
                                      " out of range");
    }
    return AdpcmState{*predictor, *index};
  }

 private:
  static std::int32_t Difference(std::uint8_t code, std::int32_t step) {
    std::int32_t diff = step >> 3;
    if (code & 4) diff += step;
    if (code & 2) diff += step >> 1;
    if (code & 1) diff += step >> 2;
    return (code & 8) ? -diff : diff;
  }

  static void Advance(std::uint8_t code, AdpcmState& st) {
    const std::int32_t step = kImaStepTable[st.step_index];
    st.predictor = ClampPcm(st.predictor + Difference(code, step));
    st.step_index = static_cast<std::uint8_t>(std::clamp(
        static_cast<int>(st.step_index) + kImaIndexTable[code & 7], 0, kAdpcmMaxStepIndex));
  }

  static std::uint8_t EncodeSample(std::int16_t pcm, AdpcmState& st) {
    std::int32_t delta = static_cast<std::int32_t>(pcm) - st.predictor;
    std::uint8_t code = 0;
    if (delta < 0) {
      code = 8;
      delta = -delta;
    }
    std::int32_t step = kImaStepTable[st.step_index];
    for (std::uint8_t bit = 4; bit != 0; bit >>= 1) {
      if (delta >= step) {
        code |= bit;
        delta -= step;
      }
      step >>= 1;
    }
    Advance(code, st);
    return code;
  }

  static std::int16_t DecodeSample(std::uint8_t code, AdpcmState& st) {
    Advance(code, st);
    return st.predictor;
  }
};

// 1-bit delta modulation. With adaptive=false the step is fixed (DM); with
// adaptive=true the step grows by 3/2 while the bit repeats and shrinks by
// 2/3 when it flips (CFDM), clamped to [min_step, max_step].
class DeltaCodec final : public Codec {
 public:
  DeltaCodec(bool adaptive, std::uint16_t initial_step, std::uint16_t min_step,
             std::uint16_t max_step)
      : adaptive_(adaptive),
        initial_step_(initial_step),
        min_step_(min_step),
        max_step_(max_step) {
    if (initial_step == 0 || initial_step > 0x7FFF) {
      throw ConfigError(kModule, "delta step must be in [1, 32767]");
    }
    if (adaptive && (min_step == 0 || min_step > max_step || max_step > 0x7FFF ||
                     initial_step < min_step || initial_step > max_step)) {
      throw ConfigError(kModule, "CFDM step bounds are inconsistent");
    }
  }

  CodecId id() const override { return adaptive_ ? CodecId::kCfdm : CodecId::kDm; }
  unsigned bits_per_sample() const override { return 1; }
  std::size_t sample_granularity() const override { return 8; }
  CodecState InitialState() const override {
    return DeltaState{0, initial_step_, 0};
  }

  std::vector<std::uint8_t> Encode(std::span<const std::int16_t> samples,
                                   CodecState& state) const override {
    CheckGranularity(*this, samples.size());
    auto& st = StateAs<DeltaState>(state, *this);
    std::vector<std::uint8_t> out(samples.size() / 8);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::uint8_t bit = samples[i] >= st.estimate ? 1 : 0;
      Advance(bit, st);
      out[i / 8] |= static_cast<std::uint8_t>(bit << (i % 8));
    }
    return out;
  }

  std::vector<std::int16_t> Decode(std::span<const std::uint8_t> payload,
                                   CodecState& state) const override {
    auto& st = StateAs<DeltaState>(state, *this);
    std::vector<std::int16_t> out;
    out.reserve(payload.size() * 8);
    for (std::uint8_t b : payload) {
      for (int i = 0; i < 8; ++i) {
        Advance(static_cast<std::uint8_t>((b >> i) & 1), st);
        out.push_back(static_cast<std::int16_t>(st.estimate));
      }
    }
    return out;
  }

  // estimate i32 + step u16; bit 15 of the step word carries last_bit, which
  // CFDM needs to adapt on the first sample of a packet.
  std::size_t state_size() const override { return 6; }

  std::vector<std::uint8_t> SerializeState(const CodecState& state) const override {
    const auto& st = std::get<DeltaState>(state);
    ByteWriter w;
    w.Put<std::int32_t>(st.estimate);
    w.Put<std::uint16_t>(static_cast<std::uint16_t>(st.step | (st.last_bit << 15)));
    return w.Take();
  }

  CodecState ParseState(std::span<const std::uint8_t> bytes) const override {
    ByteReader r(bytes);
    const auto estimate = r.Get<std::int32_t>();
    const auto word = r.Get<std::uint16_t>();
    if (!word) throw FramingError(kModule, "truncated delta state snapshot");
    DeltaState st{*estimate, static_cast<std::uint16_t>(*word & 0x7FFF),
                  static_cast<std::uint8_t>(*word >> 15)};
    if (st.step == 0 || st.estimate < std::numeric_limits<std::int16_t>::min() ||
        st.estimate > std::numeric_limits<std::int16_t>::max() ||
        (adaptive_ && (st.step < min_step_ || st.step > max_step_))) {
      throw FramingError(kModule, "delta state snapshot out of range");
    }
    return st;
  }

 private:
  void Advance(std::uint8_t bit, DeltaState& st) const {
    if (adaptive_) {
      std::uint32_t step = st.step;
      step = (bit == st.last_bit) ? step * 3 / 2 : step * 2 / 3;
      st.step = static_cast<std::uint16_t>(std::clamp<std::uint32_t>(step, min_step_, max_step_));
    }
    st.last_bit = bit;
    st.estimate = ClampPcm(st.estimate + (bit ? st.step : -static_cast<std::int32_t>(st.step)));
  }

  bool adaptive_;
  std::uint16_t initial_step_;
  std::uint16_t min_step_;
  std::uint16_t max_step_;
};

}  // namespace

std::optional<CodecId> CodecIdFromByte(std::uint8_t b) {
  if (b <= static_cast<std::uint8_t>(CodecId::kCfdm)) return static_cast<CodecId>(b);
  return std::nullopt;
}

std::optional<CodecId> CodecIdFromName(std::string_view name) {
  for (auto id : {CodecId::kRaw, CodecId::kAdpcm, CodecId::kDm, CodecId::kCfdm}) {
    if (CodecName(id) == name) return id;
  }
  return std::nullopt;
}

std::string_view CodecName(CodecId id) {
  switch (id) {
    case CodecId::kRaw: return "raw";
    case CodecId::kAdpcm: return "adpcm";
    case CodecId::kDm: return "dm";
    case CodecId::kCfdm: return "cfdm";
  }
  return "unknown";
}

const Codec& GetCodec(CodecId id) {
  static const RawCodec raw;
  static const AdpcmCodec adpcm;
  static const DeltaCodec dm(false, kDefaultDmStep, kCfdmMinStep, kCfdmMaxStep);
  static const DeltaCodec cfdm(true, kDefaultDmStep, kCfdmMinStep, kCfdmMaxStep);
  switch (id) {
    case CodecId::kRaw: return raw;
    case CodecId::kAdpcm: return adpcm;
    case CodecId::kDm: return dm;
    case CodecId::kCfdm: return cfdm;
  }
  throw ConfigError(kModule, "unknown codec id");
}

const Codec& GetCodec(std::uint8_t wire_id) {
  if (auto id = CodecIdFromByte(wire_id)) return GetCodec(*id);
  if (wire_id >= kFirstReservedCodecId && wire_id <= kLastReservedCodecId) {
    throw ConfigError(kModule, "codec id " + std::to_string(wire_id) +
                                   " is reserved (SBC/Opus) and not implemented");
  }
  throw ConfigError(kModule, "unknown codec id " + std::to_string(wire_id));
}

std::unique_ptr<Codec> MakeDeltaModulation(std::uint16_t step) {
  return std::make_unique<DeltaCodec>(false, step, kCfdmMinStep, kCfdmMaxStep);
}

std::unique_ptr<Codec> MakeCfdm(std::uint16_t initial_step, std::uint16_t min_step,
                                std::uint16_t max_step) {
  return std::make_unique<DeltaCodec>(true, initial_step, min_step, max_step);
}

std::pair<std::vector<std::uint8_t>, CodecState> Encode(
    CodecId codec, const CodecState& state, std::span<const std::int16_t> samples) {
  CodecState next = state;
  auto bytes = GetCodec(codec).Encode(samples, next);
  return {std::move(bytes), next};
}

std::pair<std::vector<std::int16_t>, CodecState> Decode(
    CodecId codec, const CodecState& state, std::span<const std::uint8_t> payload) {
  CodecState next = state;
  auto samples = GetCodec(codec).Decode(payload, next);
  return {std::move(samples), next};
}

double SnrDb(std::span<const std::int16_t> original,
             std::span<const std::int16_t> decoded) {
  if (original.size() != decoded.size()) {
    throw ValueError(kModule, "SNR needs equal-length signals");
  }
  double signal = 0.0;
  double noise = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double x = original[i];
    const double e = x - decoded[i];
    signal += x * x;
    noise += e * e;
  }
  if (signal == 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

CodecMetrics ComputeMetrics(std::span<const std::int16_t> original,
                            std::span<const std::int16_t> decoded, CodecId codec,
                            std::uint32_t sample_rate) {
  const auto bits = GetCodec(codec).bits_per_sample();
  CodecMetrics m;
  m.snr_db = SnrDb(original, decoded);
  m.bitrate_bps = static_cast<double>(bits) * sample_rate;
  m.compression_ratio = 16.0 / bits;
  return m;
}

}  // namespace tinybird::codecs
