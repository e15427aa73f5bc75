#include "tinybird/tinyml.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "tinybird/bytes.h"

namespace tinybird::tinyml {
namespace {

using i128 = __int128;

constexpr char kMagic[4] = {'T', 'B', 'M', 'L'};

std::int8_t SaturateInt8(std::int64_t v) {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, -128, 127));
}

std::string ShapeString(const std::vector<std::uint16_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void ExpectShape(const QuantizedTensor& t, DType dtype, std::vector<std::uint16_t> shape) {
  if (t.dtype != dtype) {
    throw ModelError("tensor '" + t.name + "' has the wrong dtype");
  }
  if (t.shape != shape) {
    throw ModelError("tensor '" + t.name + "' has shape " + ShapeString(t.shape) +
                     ", expected " + ShapeString(shape));
  }
}

void ExpectSymmetric(const QuantizedTensor& t) {
  if (t.zero_point != 0) {
    throw ModelError("tensor '" + t.name + "' must be symmetric (zero_point 0)");
  }
}

void CheckBiasScale(const QuantizedTensor& bias, double input_scale, double weight_scale,
                    std::vector<std::string>& warnings) {
  const double expected = input_scale * weight_scale;
  if (std::abs(bias.scale - expected) > 1e-3 * expected) {
    warnings.push_back("tensor '" + bias.name + "' scale " + std::to_string(bias.scale) +
                       " differs from input*weight scale " + std::to_string(expected));
  }
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::int8_t Quantize(double value, const QuantParams& q) {
  return SaturateInt8(static_cast<std::int64_t>(std::lround(value / q.scale)) + q.zero_point);
}

double Dequantize(std::int32_t q, const QuantParams& params) {
  return static_cast<double>(params.scale) * (q - params.zero_point);
}

FixedMultiplier FixedMultiplier::FromDouble(double real) {
  if (real == 0.0) return {};
  if (!(real > 0.0) || !std::isfinite(real)) {
    throw ModelError("requantization multiplier must be positive and finite");
  }
  int exponent = 0;
  const double mantissa = std::frexp(real, &exponent);
  auto m = static_cast<std::int64_t>(std::llround(mantissa * (1LL << 31)));
  if (m == (1LL << 31)) {
    m /= 2;
    ++exponent;
  }
  return {static_cast<std::int32_t>(m), exponent};
}

std::int64_t FixedMultiplier::Apply(std::int64_t value) const {
  const i128 product = static_cast<i128>(value) * multiplier;
  const int right = 31 - shift;
  if (right <= 0) return static_cast<std::int64_t>(product << -right);
  if (right >= 126) return 0;
  const i128 half = i128{1} << (right - 1);
  if (product >= 0) return static_cast<std::int64_t>((product + half) >> right);
  return -static_cast<std::int64_t>((-product + half) >> right);
}

std::size_t QuantizedTensor::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::uint16_t d) { return a * d; });
}

std::size_t QuantizedTensor::byte_size() const {
  return element_count() * (dtype == DType::kInt8 ? 1 : 4);
}

double QuantizedTensor::Dequantized(std::size_t i) const {
  const std::int32_t q = dtype == DType::kInt8 ? i8()[i] : i32()[i];
  return Dequantize(q, params());
}

QuantizedTensor MakeInt8Tensor(std::string name, std::vector<std::uint16_t> shape,
                               std::vector<std::int8_t> values, float scale,
                               std::int8_t zero_point) {
  QuantizedTensor t{std::move(name), DType::kInt8, std::move(shape), std::move(values), scale,
                    zero_point};
  if (t.i8().size() != t.element_count()) {
    throw ModelError("tensor '" + t.name + "' data length does not match its shape");
  }
  return t;
}

QuantizedTensor MakeInt32Tensor(std::string name, std::vector<std::uint16_t> shape,
                                std::vector<std::int32_t> values, float scale) {
  QuantizedTensor t{std::move(name), DType::kInt32, std::move(shape), std::move(values), scale, 0};
  if (t.i32().size() != t.element_count()) {
    throw ModelError("tensor '" + t.name + "' data length does not match its shape");
  }
  return t;
}

QuantizedTensor MakeQuantizer(std::string name, const QuantParams& params) {
  if (params.zero_point < -128 || params.zero_point > 127) {
    throw ModelError("quantizer '" + name + "' zero_point out of int8 range");
  }
  return MakeInt8Tensor(std::move(name), {0}, {}, params.scale,
                        static_cast<std::int8_t>(params.zero_point));
}

std::vector<QuantizedTensor> ParseTensors(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.GetBytes(4);
  if (!magic || !std::equal(magic->begin(), magic->end(), kMagic)) {
    throw ModelError("bad magic, not a TBML weight file");
  }
  const auto version = r.Get<std::uint8_t>();
  const auto count = r.Get<std::uint8_t>();
  if (!count) throw ModelError("truncated file header");
  if (*version != kModelVersion) {
    throw ModelError("unsupported weight file version " + std::to_string(*version));
  }
  std::vector<QuantizedTensor> tensors;
  for (unsigned i = 0; i < *count; ++i) {
    const std::string where = "tensor #" + std::to_string(i);
    const auto name_len = r.Get<std::uint8_t>();
    if (!name_len) throw ModelError("truncated file at " + where);
    const auto name_bytes = r.GetBytes(*name_len);
    if (!name_bytes) throw ModelError("truncated name of " + where);
    QuantizedTensor t;
    t.name.assign(name_bytes->begin(), name_bytes->end());
    const std::string named = "tensor '" + t.name + "'";
    const auto dtype = r.Get<std::uint8_t>();
    const auto rank = r.Get<std::uint8_t>();
    if (!rank) throw ModelError("truncated header of " + named);
    if (*dtype > 1) throw ModelError(named + " has unknown dtype " + std::to_string(*dtype));
    t.dtype = static_cast<DType>(*dtype);
    for (unsigned d = 0; d < *rank; ++d) {
      const auto dim = r.Get<std::uint16_t>();
      if (!dim) throw ModelError("truncated shape of " + named);
      t.shape.push_back(*dim);
    }
    const auto scale = r.Get<float>();
    const auto zero_point = r.Get<std::int8_t>();
    if (!zero_point) throw ModelError("truncated quantization params of " + named);
    t.scale = *scale;
    t.zero_point = *zero_point;
    if (!(t.scale > 0.0f) || !std::isfinite(t.scale)) {
      throw ModelError(named + " has invalid scale " + std::to_string(t.scale));
    }
    const auto raw = r.GetBytes(t.byte_size());
    if (!raw) throw ModelError("truncated data of " + named);
    ByteReader d(*raw);
    if (t.dtype == DType::kInt8) {
      std::vector<std::int8_t> v(raw->size());
      for (auto& x : v) x = *d.Get<std::int8_t>();
      t.data = std::move(v);
    } else {
      std::vector<std::int32_t> v(raw->size() / 4);
      for (auto& x : v) x = *d.Get<std::int32_t>();
      t.data = std::move(v);
    }
    tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw ModelError(std::to_string(r.remaining()) + " trailing bytes after last tensor");
  }
  return tensors;
}

std::vector<std::uint8_t> SerializeTensors(std::span<const QuantizedTensor> tensors) {
  if (tensors.size() > 255) throw ModelError("too many tensors for one file");
  ByteWriter w;
  for (char c : kMagic) w.Put<std::uint8_t>(static_cast<std::uint8_t>(c));
  w.Put<std::uint8_t>(kModelVersion);
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 255) throw ModelError("tensor name too long: " + t.name);
    w.Put<std::uint8_t>(static_cast<std::uint8_t>(t.name.size()));
    w.PutString(t.name);
    w.Put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.Put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.Put<std::uint16_t>(d);
    w.Put<float>(t.scale);
    w.Put<std::int8_t>(t.zero_point);
    if (t.dtype == DType::kInt8) {
      for (auto v : t.i8()) w.Put<std::int8_t>(v);
    } else {
      for (auto v : t.i32()) w.Put<std::int32_t>(v);
    }
  }
  return w.Take();
}

ModelBundle BuildModels(std::span<const QuantizedTensor> tensors) {
  std::map<std::string, const QuantizedTensor*> by_name;
  ModelBundle bundle;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) {
      throw ModelError("duplicate tensor '" + t.name + "'");
    }
    const bool data_ok = t.dtype == DType::kInt8
                             ? std::holds_alternative<std::vector<std::int8_t>>(t.data) &&
                                   t.i8().size() == t.element_count()
                             : std::holds_alternative<std::vector<std::int32_t>>(t.data) &&
                                   t.i32().size() == t.element_count();
    if (!data_ok) throw ModelError("tensor '" + t.name + "' data does not match its shape");
    if (!(t.scale > 0.0f) || !std::isfinite(t.scale)) {
      throw ModelError("tensor '" + t.name + "' has invalid scale " + std::to_string(t.scale));
    }
  }
  auto get = [&](const std::string& name) -> const QuantizedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ModelError("missing tensor '" + name + "'");
    return *it->second;
  };
  auto quantizer = [&](const std::string& name) {
    const auto& t = get(name);
    ExpectShape(t, DType::kInt8, {0});
    return t.params();
  };

  static const char* kKnown[] = {"det.input",   "det.weight",      "det.bias",
                                 "cls.input",   "cls.conv.weight", "cls.conv.bias",
                                 "cls.conv.output", "cls.fc.weight", "cls.fc.bias"};
  for (const auto& t : tensors) {
    if (std::find(std::begin(kKnown), std::end(kKnown), t.name) == std::end(kKnown)) {
      bundle.report.warnings.push_back("ignoring unknown tensor '" + t.name + "'");
    }
  }

  auto& det = bundle.detector;
  det.input = quantizer("det.input");
  det.weights = get("det.weight");
  ExpectShape(det.weights, DType::kInt8, {1, static_cast<std::uint16_t>(dsp::kNumMfcc)});
  ExpectSymmetric(det.weights);
  det.bias = get("det.bias");
  ExpectShape(det.bias, DType::kInt32, {1});
  ExpectSymmetric(det.bias);
  CheckBiasScale(det.bias, det.input.scale, det.weights.scale, bundle.report.warnings);

  auto& cls = bundle.classifier;
  cls.input = quantizer("cls.input");
  cls.conv_weights = get("cls.conv.weight");
  ExpectShape(cls.conv_weights, DType::kInt8,
              {kConvFilters, kClassifierBlocks, kConvKernel});
  ExpectSymmetric(cls.conv_weights);
  cls.conv_bias = get("cls.conv.bias");
  ExpectShape(cls.conv_bias, DType::kInt32, {kConvFilters});
  ExpectSymmetric(cls.conv_bias);
  CheckBiasScale(cls.conv_bias, cls.input.scale, cls.conv_weights.scale, bundle.report.warnings);
  cls.conv_output = quantizer("cls.conv.output");
  cls.fc_weights = get("cls.fc.weight");
  ExpectShape(cls.fc_weights, DType::kInt8, {kNumClasses, kFcInputs});
  ExpectSymmetric(cls.fc_weights);
  cls.fc_bias = get("cls.fc.bias");
  ExpectShape(cls.fc_bias, DType::kInt32, {kNumClasses});
  ExpectSymmetric(cls.fc_bias);
  CheckBiasScale(cls.fc_bias, cls.conv_output.scale, cls.fc_weights.scale, bundle.report.warnings);

  auto& rep = bundle.report;
  rep.detector_flash_bytes = det.weights.byte_size() + det.bias.byte_size();
  rep.classifier_flash_bytes = cls.conv_weights.byte_size() + cls.conv_bias.byte_size() +
                               cls.fc_weights.byte_size() + cls.fc_bias.byte_size();
  rep.detector_ram_bytes = dsp::kNumMfcc;
  // Mirrors the arena layout used by Classify().
  rep.classifier_ram_bytes = kClassifierBlocks * dsp::kNumMfcc + kFcInputs +
                             kNumClasses * sizeof(std::int32_t);
  if (rep.classifier_flash_bytes > kClassifierFlashBudget) {
    rep.warnings.push_back("classifier parameters use " +
                           std::to_string(rep.classifier_flash_bytes) + " bytes, budget is " +
                           std::to_string(kClassifierFlashBudget));
  }
  if (rep.detector_flash_bytes > kDetectorFlashBudget) {
    rep.warnings.push_back("detector parameters exceed their flash budget");
  }
  return bundle;
}

ModelBundle ParseModel(std::span<const std::uint8_t> bytes) {
  const auto tensors = ParseTensors(bytes);
  return BuildModels(tensors);
}

ModelBundle LoadModel(const std::filesystem::path& path) {
  return ParseModel(ReadFileBytes(path, "tinyml"));
}

std::vector<QuantizedTensor> ToTensors(const DetectorModel& detector,
                                       const ClassifierModel& classifier) {
  return {MakeQuantizer("det.input", detector.input),
          detector.weights,
          detector.bias,
          MakeQuantizer("cls.input", classifier.input),
          classifier.conv_weights,
          classifier.conv_bias,
          MakeQuantizer("cls.conv.output", classifier.conv_output),
          classifier.fc_weights,
          classifier.fc_bias};
}

void SaveModel(const std::filesystem::path& path, const DetectorModel& detector,
               const ClassifierModel& classifier) {
  const auto tensors = ToTensors(detector, classifier);
  WriteFileBytes(path, SerializeTensors(tensors), "tinyml");
}

void QuantizeInput(const dsp::MfccVector& mfcc, const QuantParams& input,
                   std::span<std::int8_t> out) {
  const auto m = FixedMultiplier::FromDouble(
      1.0 / (static_cast<double>(input.scale) * (1 << dsp::MfccVector::kFracBits)));
  for (std::size_t i = 0; i < dsp::kNumMfcc; ++i) {
    out[i] = SaturateInt8(m.Apply(mfcc.coeffs[i]) + input.zero_point);
  }
}

Detection Detect(const dsp::MfccVector& mfcc, const DetectorModel& model) {
  if (model.weights.element_count() != dsp::kNumMfcc || model.bias.element_count() != 1) {
    throw ModelError("detector expects 16 weights and one bias");
  }
  std::array<std::int8_t, dsp::kNumMfcc> q{};
  QuantizeInput(mfcc, model.input, q);
  std::int32_t acc = model.bias.i32()[0];
  const auto& w = model.weights.i8();
  for (std::size_t i = 0; i < dsp::kNumMfcc; ++i) {
    acc += (static_cast<std::int32_t>(q[i]) - model.input.zero_point) * w[i];
  }
  Detection d;
  d.accumulator = acc;
  d.score = Sigmoid(static_cast<double>(acc) * model.input.scale * model.weights.scale);
  d.is_syllable = d.score >= model.threshold;
  return d;
}

Classification Classify(std::span<const dsp::MfccVector> blocks, const ClassifierModel& model,
                        ScratchArena& arena) {
  if (blocks.size() != kClassifierBlocks) {
    throw ModelError("classifier expects exactly 3 MFCC vectors, got " +
                     std::to_string(blocks.size()));
  }
  arena.Reset();
  auto input = arena.Allocate<std::int8_t>(kClassifierBlocks * dsp::kNumMfcc);
  for (std::size_t b = 0; b < kClassifierBlocks; ++b) {
    QuantizeInput(blocks[b], model.input, input.subspan(b * dsp::kNumMfcc, dsp::kNumMfcc));
  }

  const auto conv_m = FixedMultiplier::FromDouble(
      static_cast<double>(model.input.scale) * model.conv_weights.scale / model.conv_output.scale);
  const auto& cw = model.conv_weights.i8();
  const auto& cb = model.conv_bias.i32();
  auto hidden = arena.Allocate<std::int8_t>(kFcInputs);
  for (std::size_t f = 0; f < kConvFilters; ++f) {
    for (std::size_t p = 0; p < kConvPositions; ++p) {
      std::int32_t acc = cb[f];
      for (std::size_t c = 0; c < kClassifierBlocks; ++c) {
        for (std::size_t j = 0; j < kConvKernel; ++j) {
          const std::int32_t x = input[c * dsp::kNumMfcc + p + j] - model.input.zero_point;
          acc += x * cw[(f * kClassifierBlocks + c) * kConvKernel + j];
        }
      }
      const std::int64_t y = conv_m.Apply(acc) + model.conv_output.zero_point;
      // ReLU in the quantized domain: clamp at the output zero point.
      hidden[f * kConvPositions + p] =
          SaturateInt8(std::max<std::int64_t>(y, model.conv_output.zero_point));
    }
  }

  const auto& fw = model.fc_weights.i8();
  const auto& fb = model.fc_bias.i32();
  auto logits_q = arena.Allocate<std::int32_t>(kNumClasses);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    std::int32_t acc = fb[k];
    for (std::size_t i = 0; i < kFcInputs; ++i) {
      acc += (static_cast<std::int32_t>(hidden[i]) - model.conv_output.zero_point) *
             fw[k * kFcInputs + i];
    }
    logits_q[k] = acc;
  }

  Classification out;
  std::array<double, kNumClasses> logits{};
  const double logit_scale = static_cast<double>(model.conv_output.scale) * model.fc_weights.scale;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    out.logits_q[k] = logits_q[k];
    logits[k] = logits_q[k] * logit_scale;
  }
  out.probs = Softmax(logits);
  out.label = static_cast<std::size_t>(
      std::max_element(out.logits_q.begin(), out.logits_q.end()) - out.logits_q.begin());
  return out;
}

Classification Classify(std::span<const dsp::MfccVector> blocks, const ClassifierModel& model) {
  ScratchArena arena;
  return Classify(blocks, model, arena);
}

std::array<double, kNumClasses> Softmax(std::span<const double> logits) {
  if (logits.size() != kNumClasses) throw ModelError("softmax expects 8 logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::array<double, kNumClasses> p{};
  double sum = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    p[k] = std::exp(logits[k] - top);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::size_t Argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                  values.begin());
}

}  // namespace tinybird::tinyml
