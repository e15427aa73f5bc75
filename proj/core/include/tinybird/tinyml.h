#ifndef TINYBIRD_TINYML_H_
#define TINYBIRD_TINYML_H_

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tinybird/dsp.h"
#include "tinybird/error.h"

namespace tinybird::tinyml {

enum class DType : std::uint8_t { kInt8 = 0, kInt32 = 1 };

struct QuantParams {
  float scale = 1.0f;
  std::int32_t zero_point = 0;
};

std::int8_t Quantize(double value, const QuantParams& q);
double Dequantize(std::int32_t q, const QuantParams& params);

// Real multiplier m stored as multiplier * 2^(shift - 31), multiplier in
// [2^30, 2^31). Apply() rounds half away from zero.
struct FixedMultiplier {
  std::int32_t multiplier = 0;
  int shift = 0;

  static FixedMultiplier FromDouble(double real);
  std::int64_t Apply(std::int64_t value) const;
};

struct QuantizedTensor {
  std::string name;
  DType dtype = DType::kInt8;
  std::vector<std::uint16_t> shape;
  std::variant<std::vector<std::int8_t>, std::vector<std::int32_t>> data;
  float scale = 1.0f;
  std::int8_t zero_point = 0;

  std::size_t element_count() const;
  std::size_t byte_size() const;
  QuantParams params() const { return {scale, zero_point}; }
  const std::vector<std::int8_t>& i8() const { return std::get<std::vector<std::int8_t>>(data); }
  const std::vector<std::int32_t>& i32() const { return std::get<std::vector<std::int32_t>>(data); }
  double Dequantized(std::size_t i) const;

  bool operator==(const QuantizedTensor&) const = default;
};

QuantizedTensor MakeInt8Tensor(std::string name, std::vector<std::uint16_t> shape,
                               std::vector<std::int8_t> values, float scale,
                               std::int8_t zero_point = 0);
QuantizedTensor MakeInt32Tensor(std::string name, std::vector<std::uint16_t> shape,
                                std::vector<std::int32_t> values, float scale);
// Carries the quantization of an activation; shape {0}, no data.
QuantizedTensor MakeQuantizer(std::string name, const QuantParams& params);

inline constexpr std::size_t kNumClasses = 8;
inline constexpr std::size_t kClassifierBlocks = 3;
inline constexpr std::size_t kConvFilters = 8;
inline constexpr std::size_t kConvKernel = 3;
inline constexpr std::size_t kConvPositions = dsp::kNumMfcc - kConvKernel + 1;
inline constexpr std::size_t kFcInputs = kConvFilters * kConvPositions;

// Memory budgets of the deployed networks (decimal kB).
inline constexpr std::size_t kDetectorFlashBudget = 1200;
inline constexpr std::size_t kDetectorRamBudget = 500;
inline constexpr std::size_t kClassifierFlashBudget = 2700;
inline constexpr std::size_t kClassifierRamBudget = 1200;

// Single-layer perceptron over one MFCC vector.
struct DetectorModel {
  QuantParams input;
  // int8 [1, 16], symmetric.
  QuantizedTensor weights;
  // int32 [1] at input.scale * weights.scale.
  QuantizedTensor bias;
  double threshold = 0.5;
};

// conv (8 filters x 3 blocks x 3 taps along the coefficient axis, valid
// padding) -> ReLU -> flatten [filter][position] -> FC 8 -> softmax.
struct ClassifierModel {
  QuantParams input;
  QuantizedTensor conv_weights;  // int8 [8, 3, 3]
  QuantizedTensor conv_bias;     // int32 [8]
  QuantParams conv_output;
  QuantizedTensor fc_weights;    // int8 [8, 112]
  QuantizedTensor fc_bias;       // int32 [8]
};

struct ModelReport {
  std::size_t detector_flash_bytes = 0;
  std::size_t classifier_flash_bytes = 0;
  std::size_t detector_ram_bytes = 0;
  std::size_t classifier_ram_bytes = 0;
  std::vector<std::string> warnings;

  bool within_budget() const {
    return detector_flash_bytes <= kDetectorFlashBudget &&
           classifier_flash_bytes <= kClassifierFlashBudget &&
           detector_ram_bytes <= kDetectorRamBudget &&
           classifier_ram_bytes <= kClassifierRamBudget;
  }
};

struct ModelBundle {
  DetectorModel detector;
  ClassifierModel classifier;
  ModelReport report;
};

// Weight file (.tbm), little-endian:
//   "TBML" | version u8 | tensor count u8 | tensors...
//   tensor: name_len u8, name, dtype u8, rank u8, dims u16 x rank,
//           scale f32, zero_point i8, raw data
inline constexpr std::uint8_t kModelVersion = 1;

std::vector<QuantizedTensor> ParseTensors(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> SerializeTensors(std::span<const QuantizedTensor> tensors);

// Validates shapes, scales and zero points; never returns a partial model.
ModelBundle BuildModels(std::span<const QuantizedTensor> tensors);
ModelBundle ParseModel(std::span<const std::uint8_t> bytes);
ModelBundle LoadModel(const std::filesystem::path& path);

std::vector<QuantizedTensor> ToTensors(const DetectorModel& detector,
                                       const ClassifierModel& classifier);
void SaveModel(const std::filesystem::path& path, const DetectorModel& detector,
               const ClassifierModel& classifier);

// Bump allocator over a fixed buffer; tracks the high-water mark.
class ScratchArena {
 public:
  static constexpr std::size_t kCapacity = kClassifierRamBudget;

  template <typename T>
  std::span<T> Allocate(std::size_t count) {
    const std::size_t align = alignof(T);
    const std::size_t begin = (used_ + align - 1) / align * align;
    const std::size_t end = begin + count * sizeof(T);
    if (end > kCapacity) {
      throw ModelError("scratch arena exhausted (" + std::to_string(end) + " of " +
                       std::to_string(kCapacity) + " bytes)");
    }
    used_ = end;
    peak_ = std::max(peak_, used_);
    return {reinterpret_cast<T*>(buffer_.data() + begin), count};
  }

  void Reset() { used_ = 0; }
  std::size_t used() const { return used_; }
  std::size_t peak() const { return peak_; }

 private:
  alignas(8) std::array<std::byte, kCapacity> buffer_{};
  std::size_t used_ = 0;
  std::size_t peak_ = 0;
};

struct Detection {
  double score = 0.0;
  bool is_syllable = false;
  std::int32_t accumulator = 0;
};

struct Classification {
  std::array<double, kNumClasses> probs{};
  std::size_t label = 0;
  std::array<std::int32_t, kNumClasses> logits_q{};
};

// Quantizes a Q8 MFCC vector into the model's int8 input domain.
void QuantizeInput(const dsp::MfccVector& mfcc, const QuantParams& input,
                   std::span<std::int8_t> out);

Detection Detect(const dsp::MfccVector& mfcc, const DetectorModel& model);
Classification Classify(std::span<const dsp::MfccVector> blocks, const ClassifierModel& model,
                        ScratchArena& arena);
Classification Classify(std::span<const dsp::MfccVector> blocks, const ClassifierModel& model);

// Numerically stable softmax; ties in argmax go to the lowest index.
std::array<double, kNumClasses> Softmax(std::span<const double> logits);
std::size_t Argmax(std::span<const double> values);

}  // namespace tinybird::tinyml

#endif  // TINYBIRD_TINYML_H_
