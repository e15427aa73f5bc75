#include "tinybird/protocol.h"

#include <algorithm>
#include <limits>

#include <boost/crc.hpp>

#include "tinybird/bytes.h"
#include "tinybird/error.h"

namespace tinybird::protocol {
namespace {

constexpr const char* kModule = "protocol";

std::uint16_t Crc16(std::span<const std::uint8_t> bytes) {
  boost::crc_ccitt_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return static_cast<std::uint16_t>(crc.checksum());
}

void ValidateHeader(const StreamHeader& header) {
  if (!audio::IsPowerOfTwo(header.block_size)) {
    throw ConfigError(kModule, "block size " + std::to_string(header.block_size) +
                                   " is not a power of two");
  }
  if (header.sample_rate == 0) throw ConfigError(kModule, "sample rate must be positive");
  const auto& codec = codecs::GetCodec(header.codec);
  if (header.block_size % codec.sample_granularity() != 0) {
    throw ConfigError(kModule, "block size incompatible with codec granularity");
  }
}

}  // namespace

std::size_t StreamHeader::block_bytes() const {
  return codecs::GetCodec(codec).EncodedSize(block_size);
}

std::size_t PacketHeaderSize(codecs::CodecId codec) {
  return 2 + 2 + 1 + 4 + codecs::GetCodec(codec).state_size() + 2;
}

std::size_t PacketWireSize(const Packet& packet, bool crc16) {
  return PacketHeaderSize(packet.codec) + packet.payload.size() + (crc16 ? 2 : 0);
}

std::vector<std::uint8_t> SerializeHeader(const StreamHeader& header) {
  ByteWriter w;
  w.Put<std::uint32_t>(header.sample_rate);
  w.Put<std::uint16_t>(header.block_size);
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(header.codec));
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(header.version | (header.crc16 ? kCrcFlag : 0)));
  return w.Take();
}

std::vector<std::uint8_t> SerializePacket(const Packet& packet, bool crc16) {
  if (packet.payload.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw FramingError(kModule, "payload exceeds 65535 bytes");
  }
  ByteWriter w;
  w.Put<std::uint8_t>(kPacketMagic[0]);
  w.Put<std::uint8_t>(kPacketMagic[1]);
  w.Put<std::uint16_t>(packet.seq);
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(packet.codec));
  w.Put<std::uint32_t>(packet.silence_blocks);
  w.PutBytes(packet.state_snapshot);
  w.Put<std::uint16_t>(static_cast<std::uint16_t>(packet.payload.size()));
  w.PutBytes(packet.payload);
  if (crc16) w.Put<std::uint16_t>(Crc16(w.bytes()));
  return w.Take();
}

StreamEncoder::StreamEncoder(const StreamHeader& header, std::size_t mtu)
    : header_(header), codec_(codecs::GetCodec(header.codec)) {
  ValidateHeader(header);
  const std::size_t overhead = PacketHeaderSize(header.codec) + (header.crc16 ? 2 : 0);
  if (mtu < overhead + header.block_bytes()) {
    throw ConfigError(kModule, "mtu " + std::to_string(mtu) + " cannot hold one " +
                                   std::string(codec_.name()) + " block (" +
                                   std::to_string(overhead) + " header + " +
                                   std::to_string(header.block_bytes()) + " payload bytes)");
  }
  max_payload_ = std::min<std::size_t>(mtu - overhead, std::numeric_limits<std::uint16_t>::max());
  if (max_payload_ < header.block_bytes()) {
    throw ConfigError(kModule, "one compressed block exceeds the 65535-byte payload limit");
  }
  state_ = codec_.InitialState();
}

void StreamEncoder::Flush(std::vector<Packet>& out) {
  if (open_) {
    out.push_back(std::move(*open_));
    open_.reset();
  }
}

std::vector<Packet> StreamEncoder::Push(const audio::AudioBlock& block,
                                        audio::GateDecision decision) {
  if (finished_) throw ValueError(kModule, "encoder already finished");
  if (block.samples.size() != header_.block_size) {
    throw FramingError(kModule, "block has " + std::to_string(block.samples.size()) +
                                    " samples, stream expects " +
                                    std::to_string(header_.block_size));
  }
  std::vector<Packet> out;
  if (decision == audio::GateDecision::kSilent) {
    Flush(out);
    if (silence_run_ == std::numeric_limits<std::uint32_t>::max()) {
      // Counter saturated: carry it in an empty packet and keep counting.
      out.push_back(Packet{next_seq_++, header_.codec, silence_run_,
                           codec_.SerializeState(state_), {}});
      silence_run_ = 0;
    }
    ++silence_run_;
    return out;
  }

  if (open_ && open_->payload.size() + header_.block_bytes() > max_payload_) Flush(out);
  if (!open_) {
    open_ = Packet{next_seq_++, header_.codec, silence_run_, codec_.SerializeState(state_), {}};
    silence_run_ = 0;
  }
  const auto bytes = codec_.Encode(block.samples, state_);
  open_->payload.insert(open_->payload.end(), bytes.begin(), bytes.end());
  return out;
}

std::vector<Packet> StreamEncoder::Finish() {
  std::vector<Packet> out;
  if (finished_) return out;
  finished_ = true;
  Flush(out);
  if (silence_run_ > 0) {
    out.push_back(Packet{next_seq_++, header_.codec, silence_run_,
                         codec_.SerializeState(state_), {}});
    silence_run_ = 0;
  }
  return out;
}

std::vector<Packet> StreamEncode(std::span<const audio::AudioBlock> blocks,
                                 std::span<const audio::GateDecision> decisions,
                                 const StreamHeader& header, std::size_t mtu) {
  if (blocks.size() != decisions.size()) {
    throw ValueError(kModule, "need one gate decision per block");
  }
  StreamEncoder encoder(header, mtu);
  std::vector<Packet> packets;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto out = encoder.Push(blocks[i], decisions[i]);
    std::move(out.begin(), out.end(), std::back_inserter(packets));
  }
  auto tail = encoder.Finish();
  std::move(tail.begin(), tail.end(), std::back_inserter(packets));
  return packets;
}

std::vector<std::int16_t> DecodePacket(const StreamHeader& header, const Packet& packet) {
  if (packet.codec != header.codec) {
    throw FramingError(kModule, "packet seq " + std::to_string(packet.seq) +
                                    " uses codec " + std::string(codecs::CodecName(packet.codec)) +
                                    ", stream declares " +
                                    std::string(codecs::CodecName(header.codec)));
  }
  const auto& codec = codecs::GetCodec(header.codec);
  if (packet.payload.size() % header.block_bytes() != 0) {
    throw FramingError(kModule, "packet seq " + std::to_string(packet.seq) +
                                    " payload of " + std::to_string(packet.payload.size()) +
                                    " bytes is not a whole number of blocks");
  }
  if (packet.state_snapshot.size() != codec.state_size()) {
    throw FramingError(kModule, "packet seq " + std::to_string(packet.seq) +
                                    " has a malformed state snapshot");
  }
  std::vector<std::int16_t> out(static_cast<std::size_t>(packet.silence_blocks) * header.block_size, 0);
  auto state = codec.ParseState(packet.state_snapshot);
  const auto voiced = codec.Decode(packet.payload, state);
  out.insert(out.end(), voiced.begin(), voiced.end());
  return out;
}

DecodeReport StreamDecode(const StreamHeader& header, std::span<const Packet> packets,
                          const DecodeOptions& options) {
  ValidateHeader(header);
  DecodeReport report;
  std::optional<std::uint16_t> expected;
  for (const auto& packet : packets) {
    if (expected && packet.seq != *expected) {
      const std::uint16_t missing = static_cast<std::uint16_t>(packet.seq - *expected);
      const std::uint16_t last = static_cast<std::uint16_t>(packet.seq - 1);
      report.warnings.push_back(
          missing == 1 ? "missing packet seq " + std::to_string(*expected)
                       : "missing packets seq " + std::to_string(*expected) + ".." +
                             std::to_string(last));
      report.packets_missing += missing;
      report.samples.insert(report.samples.end(),
                            static_cast<std::size_t>(missing) * options.gap_fill_blocks *
                                header.block_size,
                            0);
    }
    expected = static_cast<std::uint16_t>(packet.seq + 1);
    try {
      const auto samples = DecodePacket(header, packet);
      report.samples.insert(report.samples.end(), samples.begin(), samples.end());
      report.silent_blocks += packet.silence_blocks;
      report.voiced_blocks += packet.payload.size() / header.block_bytes();
      ++report.packets_decoded;
    } catch (const Error& e) {
      report.warnings.push_back("dropped: " + e.detail());
      ++report.packets_dropped;
    }
  }
  return report;
}

std::vector<std::uint8_t> SerializeStream(const StreamHeader& header,
                                          std::span<const Packet> packets) {
  ValidateHeader(header);
  auto out = SerializeHeader(header);
  for (const auto& p : packets) {
    const auto bytes = SerializePacket(p, header.crc16);
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

ParsedStream ParseStream(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  ParsedStream parsed;
  const auto rate = r.Get<std::uint32_t>();
  const auto block = r.Get<std::uint16_t>();
  const auto codec_byte = r.Get<std::uint8_t>();
  const auto version = r.Get<std::uint8_t>();
  if (!version) throw FramingError(kModule, "stream shorter than its 8-byte header");
  const auto codec = codecs::CodecIdFromByte(*codec_byte);
  if (!codec) {
    codecs::GetCodec(*codec_byte);  // throws with the reserved/unknown detail
  }
  parsed.header.sample_rate = *rate;
  parsed.header.block_size = *block;
  parsed.header.codec = *codec;
  parsed.header.version = *version & ~kCrcFlag;
  parsed.header.crc16 = (*version & kCrcFlag) != 0;
  if (parsed.header.version != kStreamVersion) {
    throw FramingError(kModule, "unsupported stream version " +
                                    std::to_string(parsed.header.version));
  }
  ValidateHeader(parsed.header);

  const std::size_t state_size = codecs::GetCodec(*codec).state_size();
  const std::size_t fixed = PacketHeaderSize(*codec);
  const std::size_t trailer = parsed.header.crc16 ? 2 : 0;

  auto resync = [&](std::size_t from) {
    const auto it = std::search(bytes.begin() + static_cast<std::ptrdiff_t>(from), bytes.end(),
                                std::begin(kPacketMagic), std::end(kPacketMagic));
    const std::size_t next = static_cast<std::size_t>(it - bytes.begin());
    if (next > from) {
      parsed.diagnostics.push_back("skipped " + std::to_string(next - from) +
                                   " bytes at offset " + std::to_string(from));
    }
    r.Seek(next);
  };

  while (r.remaining() > 0) {
    const std::size_t start = r.position();
    if (r.remaining() < 2 || bytes[start] != kPacketMagic[0] || bytes[start + 1] != kPacketMagic[1]) {
      parsed.diagnostics.push_back("bad magic at offset " + std::to_string(start));
      resync(start + 1);
      continue;
    }
    if (r.remaining() < fixed + trailer) {
      parsed.diagnostics.push_back("truncated packet at offset " + std::to_string(start));
      break;
    }
    r.GetBytes(2);
    Packet p;
    p.seq = *r.Get<std::uint16_t>();
    const std::uint8_t pc = *r.Get<std::uint8_t>();
    p.silence_blocks = *r.Get<std::uint32_t>();
    const auto snapshot = *r.GetBytes(state_size);
    const std::uint16_t payload_len = *r.Get<std::uint16_t>();
    const std::string where = "packet seq " + std::to_string(p.seq) + " at offset " +
                              std::to_string(start);
    if (pc != static_cast<std::uint8_t>(*codec)) {
      parsed.diagnostics.push_back(where + ": codec byte " + std::to_string(pc) +
                                   " does not match stream, dropped");
      resync(start + 1);
      continue;
    }
    if (r.remaining() < payload_len + trailer) {
      parsed.diagnostics.push_back(where + ": payload_len " + std::to_string(payload_len) +
                                   " runs past end of stream, dropped");
      resync(start + 1);
      continue;
    }
    const auto payload = *r.GetBytes(payload_len);
    if (parsed.header.crc16) {
      const std::uint16_t stored = *r.Get<std::uint16_t>();
      if (stored != Crc16(bytes.subspan(start, r.position() - 2 - start))) {
        parsed.diagnostics.push_back(where + ": CRC mismatch, dropped");
        resync(start + 1);
        continue;
      }
    }
    if (payload_len % parsed.header.block_bytes() != 0) {
      parsed.diagnostics.push_back(where + ": payload_len " + std::to_string(payload_len) +
                                   " is not a whole number of blocks, dropped");
      resync(start + 1);
      continue;
    }
    p.codec = *codec;
    p.state_snapshot.assign(snapshot.begin(), snapshot.end());
    p.payload.assign(payload.begin(), payload.end());
    parsed.packets.push_back(std::move(p));
  }
  return parsed;
}

double DutyCycle(const StreamHeader& header, std::span<const Packet> packets) {
  std::uint64_t voiced = 0;
  std::uint64_t silent = 0;
  const std::size_t block_bytes = header.block_bytes();
  for (const auto& p : packets) {
    voiced += p.payload.size() / block_bytes;
    silent += p.silence_blocks;
  }
  if (voiced + silent == 0) return 0.0;
  return static_cast<double>(voiced) / static_cast<double>(voiced + silent);
}

}  // namespace tinybird::protocol
