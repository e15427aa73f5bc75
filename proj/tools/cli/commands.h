#ifndef TINYBIRD_TOOLS_CLI_COMMANDS_H_
#define TINYBIRD_TOOLS_CLI_COMMANDS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinybird/audio.h"
#include "tinybird/codecs.h"
#include "tinybird/protocol.h"

namespace tinybird::cli {

// Settings shared by every command. Filled from flags, then the config file,
// then these defaults.
struct RunConfig {
  std::uint32_t sample_rate = audio::kDefaultSampleRate;
  std::size_t block_size = audio::kDefaultBlockSize;
  codecs::CodecId codec = codecs::CodecId::kAdpcm;
  std::size_t mtu = protocol::kDefaultMtu;
  bool crc16 = false;
  audio::GateMode gate_mode = audio::GateMode::kFixed;
  // Fixed gate threshold, PCM RMS units.
  double gate_threshold = 1000.0;
  // Adaptive gate seed floor and factor.
  double gate_floor = 100.0;
  double gate_factor = 4.0;
  bool resample = false;
  std::filesystem::path model;
  std::filesystem::path profile;
  std::filesystem::path battery;
  std::uint32_t hangover = 1;
  std::uint32_t min_len = 1;
  double detector_threshold = 0.5;
  std::size_t jobs = 1;

  // Throws a config error naming the first inconsistent field.
  void Validate() const;
  protocol::StreamHeader Header() const;
  audio::GateState InitialGate() const;
};

// Default profile/battery paths: $TINYBIRD_PROFILE, then the installed data
// directory.
std::filesystem::path DefaultProfilePath();
std::filesystem::path DefaultBatteryPath();

// Reads a WAV and brings it to config.sample_rate (only with --resample).
std::vector<std::int16_t> LoadAudio(const std::filesystem::path& path, const RunConfig& config);

struct EncodeStats {
  std::size_t packets = 0;
  std::size_t bytes = 0;
  std::size_t payload_bytes = 0;
  std::uint64_t blocks = 0;
  std::uint64_t voiced_blocks = 0;
  double duty_cycle = 0.0;
  double duration_s = 0.0;
  double bitrate_effective_bps = 0.0;
  double payload_bitrate_bps = 0.0;

  nlohmann::ordered_json ToJson() const;
};

struct EncodeResult {
  protocol::StreamHeader header;
  std::vector<protocol::Packet> packets;
  EncodeStats stats;
};

EncodeResult EncodePcm(std::span<const std::int16_t> pcm, const RunConfig& config);
EncodeStats CmdEncode(const std::filesystem::path& wav_in, const std::filesystem::path& tbs_out,
                      const RunConfig& config);

struct DecodeResult {
  protocol::StreamHeader header;
  protocol::DecodeReport report;
  std::vector<std::string> diagnostics;

  nlohmann::ordered_json ToJson() const;
};

DecodeResult CmdDecode(const std::filesystem::path& tbs_in, const std::filesystem::path& wav_out,
                       const protocol::DecodeOptions& options = {});

struct BenchRow {
  std::string codec;
  double bitrate_kbps = 0.0;
  double compression_ratio = 0.0;
  double snr_db = 0.0;
  std::size_t bytes = 0;
  double ble_ma = 0.0;
  double overhead_ma = 0.0;
};

std::vector<BenchRow> BenchCodecs(std::span<const std::int16_t> pcm, const RunConfig& config);
void WriteBenchCsv(std::span<const BenchRow> rows, std::ostream& out);
void WriteBenchTable(std::span<const BenchRow> rows, std::ostream& out);

// Events go to events_out as JSONL; returns the timing report.
nlohmann::ordered_json CmdRun(const std::filesystem::path& wav_in, std::ostream& events_out,
                              const RunConfig& config);

nlohmann::ordered_json CmdEvalSer(const std::filesystem::path& predicted,
                                  const std::filesystem::path& reference);

nlohmann::ordered_json CmdSpectrogram(const std::filesystem::path& wav_in,
                                      const std::filesystem::path& csv_out,
                                      const std::optional<std::filesystem::path>& png_out,
                                      std::size_t hop, const RunConfig& config);

nlohmann::ordered_json CmdEstimateEnergy(const std::filesystem::path& tbs_in,
                                         const RunConfig& config,
                                         const std::optional<std::string>& row_name);

struct CorpusOptions {
  std::uint64_t seed = 1;
  std::size_t motifs = 20;
  double snr_db = 20.0;
};

// Writes <out_dir>/corpus.wav and <out_dir>/corpus.jsonl.
nlohmann::ordered_json CmdGenCorpus(const std::filesystem::path& out_dir,
                                    const CorpusOptions& options, const RunConfig& config);

// Entry point shared by main() and the tests. Returns the process exit code.
int Main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tinybird::cli

#endif  // TINYBIRD_TOOLS_CLI_COMMANDS_H_
