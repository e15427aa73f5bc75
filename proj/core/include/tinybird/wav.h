#ifndef TINYBIRD_WAV_H_
#define TINYBIRD_WAV_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tinybird::wav {

struct WavData {
  std::uint32_t sample_rate = 0;
  std::vector<std::int16_t> samples;
};

// Reads a RIFF/WAVE file holding 16-bit PCM mono. Other encodings and channel
// counts are rejected with an I/O error.
WavData ReadWav(const std::filesystem::path& path);
WavData ParseWav(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> SerializeWav(std::span<const std::int16_t> samples,
                                       std::uint32_t sample_rate);
void WriteWav(const std::filesystem::path& path,
              std::span<const std::int16_t> samples, std::uint32_t sample_rate);

}  // namespace tinybird::wav

#endif  // TINYBIRD_WAV_H_
