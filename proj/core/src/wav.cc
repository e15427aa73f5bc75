#include "tinybird/wav.h"

#include <string>

#include "tinybird/bytes.h"
#include "tinybird/error.h"

namespace tinybird::wav {
namespace {

constexpr const char* kModule = "core_audio";

bool TagIs(std::span<const std::uint8_t> tag, const char* expected) {
  return tag.size() == 4 && tag[0] == expected[0] && tag[1] == expected[1] &&
         tag[2] == expected[2] && tag[3] == expected[3];
}

}  // namespace

WavData ParseWav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto riff = r.GetBytes(4);
  r.Get<std::uint32_t>();
  auto wave = r.GetBytes(4);
  if (!riff || !wave || !TagIs(*riff, "RIFF") || !TagIs(*wave, "WAVE")) {
    throw IoError(kModule, "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  WavData out;
  while (r.remaining() >= 8) {
    auto tag = *r.GetBytes(4);
    const std::uint32_t size = *r.Get<std::uint32_t>();
    if (r.remaining() < size) throw IoError(kModule, "truncated WAV chunk");
    auto body = *r.GetBytes(size);
    if (size % 2 == 1 && r.remaining() > 0) r.GetBytes(1);

    if (TagIs(tag, "fmt ")) {
      ByteReader f(body);
      const auto format = f.Get<std::uint16_t>();
      const auto channels = f.Get<std::uint16_t>();
      const auto rate = f.Get<std::uint32_t>();
      f.Get<std::uint32_t>();
      f.Get<std::uint16_t>();
      const auto bits = f.Get<std::uint16_t>();
      if (!bits) throw IoError(kModule, "truncated fmt chunk");
      // 0xFFFE (extensible) is accepted when it still describes 16-bit PCM.
      if (*format != 1 && *format != 0xFFFE) {
        throw IoError(kModule, "unsupported WAV encoding " + std::to_string(*format) +
                                   " (need 16-bit PCM)");
      }
      if (*channels != 1) {
        throw IoError(kModule, "expected mono audio, got " +
                                   std::to_string(*channels) + " channels");
      }
      if (*bits != 16) {
        throw IoError(kModule, "expected 16-bit samples, got " + std::to_string(*bits));
      }
      out.sample_rate = *rate;
      have_fmt = true;
    } else if (TagIs(tag, "data")) {
      if (!have_fmt) throw IoError(kModule, "data chunk before fmt chunk");
      ByteReader d(body);
      out.samples.reserve(size / 2);
      while (auto s = d.Get<std::int16_t>()) out.samples.push_back(*s);
      return out;
    }
  }
  throw IoError(kModule, "WAV file has no data chunk");
}

WavData ReadWav(const std::filesystem::path& path) {
  return ParseWav(ReadFileBytes(path, kModule));
}

std::vector<std::uint8_t> SerializeWav(std::span<const std::int16_t> samples,
                                       std::uint32_t sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  ByteWriter w;
  w.PutString("RIFF");
  w.Put<std::uint32_t>(36 + data_bytes);
  w.PutString("WAVE");
  w.PutString("fmt ");
  w.Put<std::uint32_t>(16);
  w.Put<std::uint16_t>(1);
  w.Put<std::uint16_t>(1);
  w.Put<std::uint32_t>(sample_rate);
  w.Put<std::uint32_t>(sample_rate * 2);
  w.Put<std::uint16_t>(2);
  w.Put<std::uint16_t>(16);
  w.PutString("data");
  w.Put<std::uint32_t>(data_bytes);
  for (std::int16_t s : samples) w.Put<std::int16_t>(s);
  return w.Take();
}

void WriteWav(const std::filesystem::path& path,
              std::span<const std::int16_t> samples, std::uint32_t sample_rate) {
  WriteFileBytes(path, SerializeWav(samples, sample_rate), kModule);
}

}  // namespace tinybird::wav
