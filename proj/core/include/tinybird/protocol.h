#ifndef TINYBIRD_PROTOCOL_H_
#define TINYBIRD_PROTOCOL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinybird/audio.h"
#include "tinybird/codecs.h"

namespace tinybird::protocol {

inline constexpr std::uint8_t kPacketMagic[2] = {0x54, 0x42};  // "TB"
inline constexpr std::uint8_t kStreamVersion = 1;
// High bit of the version byte: every packet is followed by a CRC16.
inline constexpr std::uint8_t kCrcFlag = 0x80;
inline constexpr std::size_t kStreamHeaderSize = 8;
inline constexpr std::size_t kDefaultMtu = 244;

// Written once at the start of a .tbs file:
//   sample_rate u32 | block_size u16 | codec u8 | version u8
struct StreamHeader {
  std::uint32_t sample_rate = audio::kDefaultSampleRate;
  std::uint16_t block_size = static_cast<std::uint16_t>(audio::kDefaultBlockSize);
  codecs::CodecId codec = codecs::CodecId::kAdpcm;
  std::uint8_t version = kStreamVersion;
  bool crc16 = false;

  // Compressed bytes of one voiced block.
  std::size_t block_bytes() const;
};

// Wire layout, little-endian:
//   magic "TB" | seq u16 | codec u8 | silence_blocks u32 |
//   state_snapshot (codec specific) | payload_len u16 | payload
struct Packet {
  std::uint16_t seq = 0;
  codecs::CodecId codec = codecs::CodecId::kRaw;
  // Silent blocks skipped since the previous packet.
  std::uint32_t silence_blocks = 0;
  // Codec state before the first payload sample.
  std::vector<std::uint8_t> state_snapshot;
  std::vector<std::uint8_t> payload;

  bool operator==(const Packet&) const = default;
};

std::size_t PacketHeaderSize(codecs::CodecId codec);
std::size_t PacketWireSize(const Packet& packet, bool crc16 = false);

std::vector<std::uint8_t> SerializeHeader(const StreamHeader& header);
std::vector<std::uint8_t> SerializePacket(const Packet& packet, bool crc16 = false);

// Silence-suppressing packetizer. Silent blocks only bump a counter; voiced
// blocks are compressed into the open packet. A packet is flushed when the
// next block would overflow the MTU or when silence follows speech. The
// pending counter rides in the next packet, and trailing silence is emitted
// as an empty terminal packet on Finish().
class StreamEncoder {
 public:
  StreamEncoder(const StreamHeader& header, std::size_t mtu = kDefaultMtu);

  // Returns the packets completed by this block, in order.
  std::vector<Packet> Push(const audio::AudioBlock& block, audio::GateDecision decision);
  std::vector<Packet> Finish();

  const StreamHeader& header() const { return header_; }
  std::size_t max_blocks_per_packet() const { return max_payload_ / header_.block_bytes(); }

 private:
  void Flush(std::vector<Packet>& out);

  StreamHeader header_;
  const codecs::Codec& codec_;
  std::size_t max_payload_;
  codecs::CodecState state_;
  std::optional<Packet> open_;
  std::uint32_t silence_run_ = 0;
  std::uint16_t next_seq_ = 0;
  bool finished_ = false;
};

std::vector<Packet> StreamEncode(std::span<const audio::AudioBlock> blocks,
                                 std::span<const audio::GateDecision> decisions,
                                 const StreamHeader& header,
                                 std::size_t mtu = kDefaultMtu);

struct DecodeOptions {
  // Blocks of silence inserted for each missing sequence number. The length of
  // a lost packet is unknown, so the default inserts nothing.
  std::uint32_t gap_fill_blocks = 0;
};

struct DecodeReport {
  std::vector<std::int16_t> samples;
  std::vector<std::string> warnings;
  std::size_t packets_decoded = 0;
  std::size_t packets_dropped = 0;
  std::size_t packets_missing = 0;
  std::uint64_t silent_blocks = 0;
  std::uint64_t voiced_blocks = 0;
};

// Rebuilds the time-domain signal: silence_blocks * block_size zeros, then
// the decoded payload, per packet. Each packet is decoded from its own state
// snapshot. Sequence gaps produce a warning naming the missing seq numbers.
DecodeReport StreamDecode(const StreamHeader& header, std::span<const Packet> packets,
                          const DecodeOptions& options = {});

// Decodes a single packet given only the stream header.
std::vector<std::int16_t> DecodePacket(const StreamHeader& header, const Packet& packet);

std::vector<std::uint8_t> SerializeStream(const StreamHeader& header,
                                          std::span<const Packet> packets);

struct ParsedStream {
  StreamHeader header;
  std::vector<Packet> packets;
  // One line per dropped or skipped region, with byte offsets.
  std::vector<std::string> diagnostics;
};

// Parses a .tbs image. A malformed stream header throws; malformed packets
// are dropped with a diagnostic and parsing resumes at the next magic.
ParsedStream ParseStream(std::span<const std::uint8_t> bytes);

// voiced / (voiced + silent) blocks over the stream; 0 for an empty stream.
double DutyCycle(const StreamHeader& header, std::span<const Packet> packets);

}  // namespace tinybird::protocol

#endif  // TINYBIRD_PROTOCOL_H_
