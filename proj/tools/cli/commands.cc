#include "commands.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "tinybird/bytes.h"
#include "tinybird/corpus.h"
#include "tinybird/dsp.h"
#include "tinybird/energy.h"
#include "tinybird/error.h"
#include "tinybird/pipeline.h"
#include "tinybird/tinyml.h"
#include "tinybird/wav.h"

#ifndef TINYBIRD_DEFAULT_DATA_DIR
#define TINYBIRD_DEFAULT_DATA_DIR "data"
#endif

namespace tinybird::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// JSON has no infinity or NaN; emit them as strings.
json Number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cli", "cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream OpenIn(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cli", "cannot open " + path.string());
  return in;
}

// Runs fn(0..n-1) on up to `jobs` threads; the first failure by index wins.
template <typename Fn>
void ParallelFor(std::size_t n, std::size_t jobs, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < std::min(jobs, n); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

fs::path OutputFor(const fs::path& input, const fs::path& out, std::size_t count,
                   const std::string& extension) {
  if (count == 1) return out;
  return out / input.stem().replace_extension(extension);
}

energy::CurrentTable LoadProfile(const RunConfig& config) {
  return energy::LoadCurrentTable(config.profile.empty() ? DefaultProfilePath() : config.profile);
}

energy::BatteryModel LoadBatteryFile(const RunConfig& config) {
  return energy::LoadBattery(config.battery.empty() ? DefaultBatteryPath() : config.battery);
}

}  // namespace

void RunConfig::Validate() const {
  if (sample_rate < 1000 || sample_rate > 192000) {
    throw ConfigError("cli", "sample_rate must be in [1000, 192000], got " +
                                 std::to_string(sample_rate));
  }
  if (!audio::IsPowerOfTwo(block_size) || block_size < 16 || block_size > 4096) {
    throw ConfigError("cli", "block_size must be a power of two in [16, 4096], got " +
                                 std::to_string(block_size));
  }
  const auto header = Header();
  const std::size_t smallest =
      protocol::PacketHeaderSize(codec) + header.block_bytes() + (crc16 ? 2 : 0);
  if (mtu < smallest) {
    throw ConfigError("cli", "mtu " + std::to_string(mtu) + " cannot hold one " +
                                 std::string(codecs::CodecName(codec)) + " block (needs " +
                                 std::to_string(smallest) + " bytes)");
  }
  if (mtu > 65535) throw ConfigError("cli", "mtu must be at most 65535");
  if (!(gate_threshold >= 0.0)) throw ConfigError("cli", "gate_threshold must be >= 0");
  if (!(gate_floor > 0.0)) throw ConfigError("cli", "gate_floor must be > 0");
  if (!(gate_factor > 1.0)) throw ConfigError("cli", "gate_factor must be > 1");
  if (hangover < 1) throw ConfigError("cli", "hangover must be >= 1");
  if (min_len < 1) throw ConfigError("cli", "min_len must be >= 1");
  if (!(detector_threshold > 0.0 && detector_threshold < 1.0)) {
    throw ConfigError("cli", "detector_threshold must be in (0, 1)");
  }
  if (jobs < 1) throw ConfigError("cli", "jobs must be >= 1");
}

protocol::StreamHeader RunConfig::Header() const {
  protocol::StreamHeader h;
  h.sample_rate = sample_rate;
  h.block_size = static_cast<std::uint16_t>(block_size);
  h.codec = codec;
  h.crc16 = crc16;
  return h;
}

audio::GateState RunConfig::InitialGate() const {
  return gate_mode == audio::GateMode::kFixed ? audio::GateState::Fixed()
                                              : audio::GateState::Adaptive(gate_floor, gate_factor);
}

fs::path DefaultProfilePath() {
  if (const char* env = std::getenv("TINYBIRD_PROFILE"); env != nullptr && *env != '\0') {
    return env;
  }
  return fs::path(TINYBIRD_DEFAULT_DATA_DIR) / "current_profile.ini";
}

fs::path DefaultBatteryPath() { return fs::path(TINYBIRD_DEFAULT_DATA_DIR) / "battery_a13.ini"; }

std::vector<std::int16_t> LoadAudio(const fs::path& path, const RunConfig& config) {
  auto wav = wav::ReadWav(path);
  if (wav.sample_rate == config.sample_rate) return std::move(wav.samples);
  if (!config.resample) {
    throw ConfigError("cli", path.string() + " is sampled at " + std::to_string(wav.sample_rate) +
                                 " Hz, expected " + std::to_string(config.sample_rate) +
                                 " Hz (pass --resample to convert)");
  }
  return audio::Resample(wav.samples, wav.sample_rate, config.sample_rate);
}

json EncodeStats::ToJson() const {
  json j;
  j["packets"] = packets;
  j["bytes"] = bytes;
  j["payload_bytes"] = payload_bytes;
  j["blocks"] = blocks;
  j["voiced_blocks"] = voiced_blocks;
  j["duty_cycle"] = duty_cycle;
  j["duration_s"] = duration_s;
  j["bitrate_effective"] = bitrate_effective_bps;
  j["payload_bitrate"] = payload_bitrate_bps;
  return j;
}

EncodeResult EncodePcm(std::span<const std::int16_t> pcm, const RunConfig& config) {
  config.Validate();
  EncodeResult result;
  result.header = config.Header();
  protocol::StreamEncoder encoder(result.header, config.mtu);
  auto gate = config.InitialGate();
  std::vector<audio::AudioBlock> blocks;
  if (!pcm.empty()) blocks = audio::FrameSignal(pcm, config.block_size, config.sample_rate);
  for (const auto& block : blocks) {
    auto [decision, next] = audio::GateBlock(block, gate, config.gate_threshold);
    gate = next;
    result.stats.voiced_blocks += decision == audio::GateDecision::kVoiced;
    for (auto& p : encoder.Push(block, decision)) result.packets.push_back(std::move(p));
  }
  for (auto& p : encoder.Finish()) result.packets.push_back(std::move(p));

  auto& s = result.stats;
  s.blocks = blocks.size();
  s.packets = result.packets.size();
  s.bytes = protocol::kStreamHeaderSize;
  for (const auto& p : result.packets) {
    s.bytes += protocol::PacketWireSize(p, config.crc16);
    s.payload_bytes += p.payload.size();
  }
  s.duty_cycle = protocol::DutyCycle(result.header, result.packets);
  s.duration_s = static_cast<double>(s.blocks * config.block_size) / config.sample_rate;
  if (s.duration_s > 0.0) {
    s.bitrate_effective_bps = 8.0 * static_cast<double>(s.bytes) / s.duration_s;
    s.payload_bitrate_bps = 8.0 * static_cast<double>(s.payload_bytes) / s.duration_s;
  }
  return result;
}

EncodeStats CmdEncode(const fs::path& wav_in, const fs::path& tbs_out, const RunConfig& config) {
  config.Validate();
  const auto pcm = LoadAudio(wav_in, config);
  const auto result = EncodePcm(pcm, config);
  WriteFileBytes(tbs_out, protocol::SerializeStream(result.header, result.packets), "cli");
  return result.stats;
}

json DecodeResult::ToJson() const {
  json j;
  j["sample_rate"] = header.sample_rate;
  j["block_size"] = header.block_size;
  j["codec"] = std::string(codecs::CodecName(header.codec));
  j["samples"] = report.samples.size();
  j["blocks"] = report.samples.size() / header.block_size;
  j["voiced_blocks"] = report.voiced_blocks;
  j["silent_blocks"] = report.silent_blocks;
  j["packets_decoded"] = report.packets_decoded;
  j["packets_dropped"] = report.packets_dropped;
  j["packets_missing"] = report.packets_missing;
  j["warnings"] = report.warnings;
  j["diagnostics"] = diagnostics;
  return j;
}

DecodeResult CmdDecode(const fs::path& tbs_in, const fs::path& wav_out,
                       const protocol::DecodeOptions& options) {
  const auto bytes = ReadFileBytes(tbs_in, "cli");
  auto parsed = protocol::ParseStream(bytes);
  DecodeResult result;
  result.header = parsed.header;
  result.diagnostics = std::move(parsed.diagnostics);
  result.report = protocol::StreamDecode(parsed.header, parsed.packets, options);
  const auto expected_blocks = result.report.voiced_blocks + result.report.silent_blocks;
  if (result.report.packets_missing == 0 && result.report.packets_dropped == 0 &&
      result.diagnostics.empty() &&
      result.report.samples.size() != expected_blocks * parsed.header.block_size) {
    throw FramingError("cli", "decoded length does not match the stream's block count");
  }
  wav::WriteWav(wav_out, result.report.samples, parsed.header.sample_rate);
  return result;
}

std::vector<BenchRow> BenchCodecs(std::span<const std::int16_t> pcm, const RunConfig& config) {
  const auto table = LoadProfile(config);
  // Pad to the coarsest codec granularity so every codec sees the same input.
  std::vector<std::int16_t> input(pcm.begin(), pcm.end());
  input.resize((input.size() + 7) / 8 * 8, 0);

  std::vector<BenchRow> rows;
  for (auto id : {codecs::CodecId::kRaw, codecs::CodecId::kAdpcm, codecs::CodecId::kDm,
                  codecs::CodecId::kCfdm}) {
    const auto& codec = codecs::GetCodec(id);
    auto enc_state = codec.InitialState();
    const auto payload = codec.Encode(input, enc_state);
    auto dec_state = codec.InitialState();
    const auto decoded = codec.Decode(payload, dec_state);
    const auto metrics = codecs::ComputeMetrics(input, decoded, id, config.sample_rate);

    BenchRow row;
    row.codec = std::string(codec.name());
    row.bitrate_kbps = metrics.bitrate_bps / 1000.0;
    row.compression_ratio =
        payload.empty() ? 0.0 : static_cast<double>(input.size() * 2) / payload.size();
    row.snr_db = metrics.snr_db;
    row.bytes = payload.size();
    if (const auto* current = table.Find(row.codec)) {
      row.ble_ma = current->ble_ma;
      row.overhead_ma = current->overhead_ma;
    }
    rows.push_back(row);
  }
  return rows;
}

void WriteBenchCsv(std::span<const BenchRow> rows, std::ostream& out) {
  out << "codec,bitrate_kbps,compression_ratio,snr_db,bytes,ble_ma,overhead_ma\n";
  for (const auto& r : rows) {
    out << r.codec << ',' << r.bitrate_kbps << ',' << r.compression_ratio << ',' << r.snr_db << ','
        << r.bytes << ',' << r.ble_ma << ',' << r.overhead_ma << '\n';
  }
}

void WriteBenchTable(std::span<const BenchRow> rows, std::ostream& out) {
  out << std::left << std::setw(8) << "codec" << std::right << std::setw(10) << "kbps"
      << std::setw(8) << "ratio" << std::setw(10) << "snr_db" << std::setw(10) << "bytes"
      << std::setw(9) << "ble_ma" << std::setw(9) << "ovh_ma" << '\n';
  out << std::fixed;
  for (const auto& r : rows) {
    out << std::left << std::setw(8) << r.codec << std::right << std::setprecision(1)
        << std::setw(10) << r.bitrate_kbps << std::setw(8) << r.compression_ratio
        << std::setprecision(2) << std::setw(10) << r.snr_db << std::setw(10) << r.bytes
        << std::setw(9) << r.ble_ma << std::setw(9) << r.overhead_ma << '\n';
  }
  out << std::defaultfloat;
}

json CmdRun(const fs::path& wav_in, std::ostream& events_out, const RunConfig& config) {
  config.Validate();
  if (config.model.empty()) throw ConfigError("cli", "run needs --model");
  auto models = tinyml::LoadModel(config.model);
  models.detector.threshold = config.detector_threshold;
  const auto pcm = LoadAudio(wav_in, config);

  pipeline::PipelineConfig pc;
  pc.block_size = config.block_size;
  pc.sample_rate = config.sample_rate;
  pc.segmenter.hangover = config.hangover;
  pc.segmenter.min_len = config.min_len;
  const auto result = pipeline::RunPipeline(pcm, models, pc);

  std::vector<pipeline::TimedEvent> timed;
  for (const auto& e : result.events) timed.push_back(pipeline::ToTimed(e, result.timing.block_ms));
  pipeline::WriteEventsJsonl(timed, events_out);

  const auto& t = result.timing;
  json j;
  j["input"] = wav_in.string();
  j["events"] = result.events.size();
  j["blocks"] = t.blocks;
  j["detector_invocations"] = t.detector_invocations;
  j["classifier_invocations"] = t.classifier_invocations;
  j["segments"] = t.segments;
  j["block_ms"] = t.block_ms;
  j["detector_ms"] = t.detector_ms;
  j["classifier_ms"] = t.classifier_ms;
  j["compute_ms"] = t.compute_ms;
  j["compute_duty"] = t.compute_duty;
  j["max_event_latency_ms"] = t.max_event_latency_ms;
  j["trailing_gap_ms"] = static_cast<double>(t.trailing_gap_blocks) * t.block_ms;
  j["model_warnings"] = models.report.warnings;
  return j;
}

json CmdEvalSer(const fs::path& predicted, const fs::path& reference) {
  auto pin = OpenIn(predicted);
  auto rin = OpenIn(reference);
  const auto pred = pipeline::ReadEventsJsonl(pin);
  const auto ref = pipeline::ReadEventsJsonl(rin);
  const auto p = pipeline::Labels(pred);
  const auto r = pipeline::Labels(ref);
  if (r.empty()) throw ValueError("cli", "reference " + reference.string() + " has no events");
  json j;
  j["ser"] = pipeline::SyllableErrorRate(p, r);
  j["edits"] = pipeline::EditDistance(p, r);
  j["predicted"] = p.size();
  j["reference"] = r.size();
  return j;
}

json CmdSpectrogram(const fs::path& wav_in, const fs::path& csv_out,
                    const std::optional<fs::path>& png_out, std::size_t hop,
                    const RunConfig& config) {
  config.Validate();
  if (hop == 0) hop = config.block_size / 2;
  const auto pcm = LoadAudio(wav_in, config);
  const auto spec = dsp::ComputeSpectrogram(pcm, config.block_size, hop, config.sample_rate);
  auto out = OpenOut(csv_out);
  dsp::WriteSpectrogramCsv(spec, out);
  if (png_out) dsp::WriteSpectrogramPng(spec, *png_out);
  json j;
  j["bins"] = spec.bins;
  j["frames"] = spec.frames;
  j["hop"] = spec.hop;
  j["csv"] = csv_out.string();
  if (png_out) j["png"] = png_out->string();
  return j;
}

json CmdEstimateEnergy(const fs::path& tbs_in, const RunConfig& config,
                       const std::optional<std::string>& row_name) {
  const auto table = LoadProfile(config);
  const auto battery = LoadBatteryFile(config);
  energy::Validate(battery);
  const auto parsed = protocol::ParseStream(ReadFileBytes(tbs_in, "cli"));
  const std::string row = row_name.value_or(std::string(codecs::CodecName(parsed.header.codec)));
  const auto profile = table.ProfileFor(row);
  const double duty = protocol::DutyCycle(parsed.header, parsed.packets);
  const double rail_ma = energy::AverageCurrentMa(profile, duty, battery.rail_voltage);

  json j;
  j["codec"] = row;
  j["profile_version"] = table.version;
  j["duty_cycle"] = duty;
  j["rail_current_ma"] = rail_ma;
  j["battery_current_ma"] = energy::BatteryCurrentMa(battery, rail_ma);
  j["lifetime_hours"] = Number(energy::LifetimeHours(battery, rail_ma));
  j["streaming_power_mw"] = energy::StreamingModePowerMw(profile, duty, battery.rail_voltage);
  j["classifier_mode_power_mw"] = energy::ClassifierModePowerMw(profile);
  if (!parsed.diagnostics.empty()) j["diagnostics"] = parsed.diagnostics;
  return j;
}

json CmdGenCorpus(const fs::path& out_dir, const CorpusOptions& options, const RunConfig& config) {
  corpus::CorpusConfig cc;
  cc.seed = options.seed;
  cc.n_motifs = options.motifs;
  cc.snr_db = options.snr_db;
  cc.sample_rate = config.sample_rate;
  const auto c = corpus::Generate(cc);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cli", "cannot create " + out_dir.string() + ": " + ec.message());
  wav::WriteWav(out_dir / "corpus.wav", c.samples, c.sample_rate);
  auto out = OpenOut(out_dir / "corpus.jsonl");
  const auto events = c.Events();
  pipeline::WriteEventsJsonl(events, out);

  std::array<std::size_t, corpus::kNumSyllableClasses> counts{};
  for (const auto& s : c.syllables) ++counts[s.label];
  json j;
  j["seed"] = options.seed;
  j["motifs"] = options.motifs;
  j["snr_db"] = Number(options.snr_db);
  j["samples"] = c.samples.size();
  j["duration_s"] = static_cast<double>(c.samples.size()) / c.sample_rate;
  j["syllables"] = c.syllables.size();
  j["class_counts"] = counts;
  j["voiced_block_fraction"] = c.VoicedBlockFraction(config.block_size);
  j["noise_sigma"] = c.noise_sigma;
  return j;
}

int Main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Silence-aware audio streaming and syllable event tools"};
  app.name("tinybird");
  app.set_config("--config", "", "Read key = value settings (flags take precedence)");
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig config;
  std::string codec_name = "adpcm";
  std::string gate_mode = "fixed";
  app.add_option("--sample-rate", config.sample_rate, "Expected sample rate, Hz");
  app.add_option("--block-size", config.block_size, "Samples per block");
  app.add_option("--codec", codec_name, "raw, adpcm, dm or cfdm");
  app.add_option("--mtu", config.mtu, "Maximum packet size, bytes");
  app.add_flag("--crc16", config.crc16, "Append a CRC16 to every packet");
  app.add_option("--gate", gate_mode, "fixed or adaptive");
  app.add_option("--gate-threshold", config.gate_threshold, "Fixed gate RMS threshold");
  app.add_option("--gate-floor", config.gate_floor, "Adaptive gate initial noise floor");
  app.add_option("--gate-factor", config.gate_factor, "Adaptive gate threshold factor");
  app.add_flag("--resample", config.resample, "Resample WAV input to --sample-rate");
  app.add_option("--model", config.model, "Weight file (.tbm)");
  app.add_option("--profile", config.profile, "Current profile")->envname("TINYBIRD_PROFILE");
  app.add_option("--battery", config.battery, "Battery description");
  app.add_option("--hangover", config.hangover, "Negative blocks that close a syllable");
  app.add_option("--min-len", config.min_len, "Shortest syllable kept, blocks");
  app.add_option("--detector-threshold", config.detector_threshold, "Detector score threshold");
  app.add_option("-j,--jobs", config.jobs, "Files processed in parallel");

  std::vector<fs::path> inputs;
  fs::path output;

  auto* encode = app.add_subcommand("encode", "Compress WAV files into .tbs streams");
  encode->add_option("inputs", inputs, "WAV files")->required()->check(CLI::ExistingFile);
  encode->add_option("-o,--output", output, "Output .tbs (a directory for several inputs)")
      ->required();

  fs::path single;
  std::uint32_t gap_fill = 0;
  auto* decode = app.add_subcommand("decode", "Reconstruct a WAV from a .tbs stream");
  decode->add_option("input", single, ".tbs stream")->required();
  decode->add_option("-o,--output", output, "Output WAV")->required();
  decode->add_option("--gap-fill", gap_fill, "Silent blocks inserted per missing packet");

  std::optional<fs::path> csv_path;
  auto* bench = app.add_subcommand("bench-codecs", "Compare the codecs on one WAV");
  bench->add_option("input", single, "WAV file")->required();
  bench->add_option("--csv", csv_path, "Also write the table as CSV");

  std::optional<fs::path> timing_path;
  auto* run = app.add_subcommand("run", "Detect and classify syllables");
  run->add_option("inputs", inputs, "WAV files")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", output,
                  "Events JSONL (a directory for several inputs); stdout if omitted");
  run->add_option("--timing", timing_path, "Write the timing report JSON here");

  fs::path reference;
  auto* eval = app.add_subcommand("eval-ser", "Syllable error rate of predicted events");
  eval->add_option("predicted", single, "Predicted events JSONL")->required();
  eval->add_option("reference", reference, "Reference events JSONL")->required();

  std::optional<fs::path> png_path;
  std::size_t hop = 0;
  auto* spectro = app.add_subcommand("spectrogram", "Export a magnitude spectrogram");
  spectro->add_option("input", single, "WAV file")->required();
  spectro->add_option("-o,--output", output, "CSV output")->required();
  spectro->add_option("--png", png_path, "Grayscale PNG output");
  spectro->add_option("--hop", hop, "Hop size in samples (default block/2)");

  std::optional<std::string> row_name;
  auto* energy_cmd = app.add_subcommand("estimate-energy", "Battery lifetime of a .tbs stream");
  energy_cmd->add_option("input", single, ".tbs stream")->required();
  energy_cmd->add_option("--row", row_name, "Profile row (default: the stream's codec)");

  CorpusOptions corpus_options;
  std::string snr_text = "20";
  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic syllable corpus");
  gen->add_option("-o,--output", output, "Output directory")->required();
  gen->add_option("--seed", corpus_options.seed, "Random seed");
  gen->add_option("--motifs", corpus_options.motifs, "Number of motifs");
  gen->add_option("--snr", snr_text, "SNR in dB, or inf");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: cli: " << e.what() << "\n";
    return 2;
  }

  try {
    const auto codec = codecs::CodecIdFromName(codec_name);
    if (!codec) throw ConfigError("cli", "unknown codec '" + codec_name + "'");
    config.codec = *codec;
    if (gate_mode == "fixed") {
      config.gate_mode = audio::GateMode::kFixed;
    } else if (gate_mode == "adaptive") {
      config.gate_mode = audio::GateMode::kAdaptive;
    } else {
      throw ConfigError("cli", "unknown gate mode '" + gate_mode + "'");
    }
    config.Validate();

    if (encode->parsed()) {
      std::vector<json> stats(inputs.size());
      if (inputs.size() > 1) fs::create_directories(output);
      ParallelFor(inputs.size(), config.jobs, [&](std::size_t i) {
        stats[i] = CmdEncode(inputs[i], OutputFor(inputs[i], output, inputs.size(), ".tbs"),
                             config)
                       .ToJson();
      });
      if (stats.size() == 1) {
        out << stats[0].dump(2) << "\n";
      } else {
        for (std::size_t i = 0; i < stats.size(); ++i) stats[i]["input"] = inputs[i].string();
        out << json(stats).dump(2) << "\n";
      }
    } else if (decode->parsed()) {
      protocol::DecodeOptions options;
      options.gap_fill_blocks = gap_fill;
      const auto result = CmdDecode(single, output, options);
      for (const auto& d : result.diagnostics) err << "warning: protocol: " << d << "\n";
      for (const auto& w : result.report.warnings) err << "warning: protocol: " << w << "\n";
      out << result.ToJson().dump(2) << "\n";
    } else if (bench->parsed()) {
      const auto pcm = LoadAudio(single, config);
      const auto rows = BenchCodecs(pcm, config);
      WriteBenchTable(rows, out);
      if (csv_path) {
        auto csv = OpenOut(*csv_path);
        WriteBenchCsv(rows, csv);
      }
    } else if (run->parsed()) {
      std::vector<json> reports(inputs.size());
      if (output.empty() && inputs.size() > 1) {
        throw ConfigError("cli", "run with several inputs needs -o <directory>");
      }
      if (!output.empty() && inputs.size() > 1) fs::create_directories(output);
      std::ostringstream buffered;
      ParallelFor(inputs.size(), config.jobs, [&](std::size_t i) {
        if (output.empty()) {
          reports[i] = CmdRun(inputs[i], buffered, config);
        } else {
          auto events = OpenOut(OutputFor(inputs[i], output, inputs.size(), ".jsonl"));
          reports[i] = CmdRun(inputs[i], events, config);
        }
      });
      out << buffered.str();
      const json report = reports.size() == 1 ? reports[0] : json(reports);
      if (timing_path) {
        auto t = OpenOut(*timing_path);
        t << report.dump(2) << "\n";
      } else if (!output.empty()) {
        out << report.dump(2) << "\n";
      } else {
        err << report.dump() << "\n";
      }
    } else if (eval->parsed()) {
      out << CmdEvalSer(single, reference).dump(2) << "\n";
    } else if (spectro->parsed()) {
      out << CmdSpectrogram(single, output, png_path, hop, config).dump(2) << "\n";
    } else if (energy_cmd->parsed()) {
      out << CmdEstimateEnergy(single, config, row_name).dump(2) << "\n";
    } else if (gen->parsed()) {
      if (snr_text == "inf" || snr_text == "+inf") {
        corpus_options.snr_db = INFINITY;
      } else {
        try {
          std::size_t used = 0;
          corpus_options.snr_db = std::stod(snr_text, &used);
          if (used != snr_text.size()) throw std::invalid_argument(snr_text);
        } catch (const std::exception&) {
          throw ConfigError("cli", "--snr must be a number or inf, got '" + snr_text + "'");
        }
      }
      out << CmdGenCorpus(output, corpus_options, config).dump(2) << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: cli: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace tinybird::cli
