#ifndef TINYBIRD_CODECS_H_
#define TINYBIRD_CODECS_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace tinybird::codecs {

// One-byte wire id. 4..7 are reserved for SBC and Opus (high/low tiers).
enum class CodecId : std::uint8_t {
  kRaw = 0,
  kAdpcm = 1,
  kDm = 2,
  kCfdm = 3,
};

inline constexpr std::uint8_t kFirstReservedCodecId = 4;
inline constexpr std::uint8_t kLastReservedCodecId = 7;

std::optional<CodecId> CodecIdFromByte(std::uint8_t b);
std::optional<CodecId> CodecIdFromName(std::string_view name);
std::string_view CodecName(CodecId id);

struct RawState {};

// IMA/DVI ADPCM predictor state.
struct AdpcmState {
  std::int16_t predictor = 0;
  std::uint8_t step_index = 0;
};

// Shared by DM (fixed step) and CFDM (adaptive step).
struct DeltaState {
  std::int32_t estimate = 0;
  std::uint16_t step = 256;
  std::uint8_t last_bit = 0;
};

using CodecState = std::variant<RawState, AdpcmState, DeltaState>;

inline constexpr int kAdpcmMaxStepIndex = 88;
inline constexpr std::uint16_t kDefaultDmStep = 256;
inline constexpr std::uint16_t kCfdmMinStep = 16;
inline constexpr std::uint16_t kCfdmMaxStep = 8192;

// A codec is stateless; all adaptation lives in the CodecState passed in.
// Encoder and decoder advance the state identically, so a state snapshot
// taken before a run of samples is enough to decode that run in isolation.
class Codec {
 public:
  virtual ~Codec() = default;

  virtual CodecId id() const = 0;
  virtual unsigned bits_per_sample() const = 0;
  // Encode input length must be a multiple of this.
  virtual std::size_t sample_granularity() const = 0;
  virtual CodecState InitialState() const = 0;

  virtual std::vector<std::uint8_t> Encode(std::span<const std::int16_t> samples,
                                           CodecState& state) const = 0;
  virtual std::vector<std::int16_t> Decode(std::span<const std::uint8_t> payload,
                                           CodecState& state) const = 0;

  // Resync snapshot carried in packet headers.
  virtual std::size_t state_size() const = 0;
  virtual std::vector<std::uint8_t> SerializeState(const CodecState& state) const = 0;
  virtual CodecState ParseState(std::span<const std::uint8_t> bytes) const = 0;

  std::string_view name() const { return CodecName(id()); }
  std::size_t EncodedSize(std::size_t samples) const {
    return samples * bits_per_sample() / 8;
  }
};

// Shared instance for an implemented codec id (DM/CFDM with default steps).
const Codec& GetCodec(CodecId id);
// Same, from a raw wire byte; reserved or unknown ids throw a config error.
const Codec& GetCodec(std::uint8_t wire_id);

std::unique_ptr<Codec> MakeDeltaModulation(std::uint16_t step);
std::unique_ptr<Codec> MakeCfdm(std::uint16_t initial_step,
                                std::uint16_t min_step = kCfdmMinStep,
                                std::uint16_t max_step = kCfdmMaxStep);

// Free-function forms threading the state by value.
std::pair<std::vector<std::uint8_t>, CodecState> Encode(
    CodecId codec, const CodecState& state, std::span<const std::int16_t> samples);
std::pair<std::vector<std::int16_t>, CodecState> Decode(
    CodecId codec, const CodecState& state, std::span<const std::uint8_t> payload);

struct CodecMetrics {
  // +inf for a perfect reconstruction, NaN when the original has no energy.
  double snr_db = 0.0;
  double bitrate_bps = 0.0;
  double compression_ratio = 0.0;
};

CodecMetrics ComputeMetrics(std::span<const std::int16_t> original,
                            std::span<const std::int16_t> decoded, CodecId codec,
                            std::uint32_t sample_rate);

double SnrDb(std::span<const std::int16_t> original,
             std::span<const std::int16_t> decoded);

}  // namespace tinybird::codecs

#endif  // TINYBIRD_CODECS_H_
