/*
 * Copyright 2026 The scan-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/**
 * @file  packet.hpp
 * @brief Collective offload packet: Ethernet/IPv4/UDP frame carrying a
 *        22-byte collective header, an optional 6-byte data sub-header,
 *        big-endian INT32 elements and, on RESULT packets, an 8-byte elapsed
 *        cycle trailer.
 *
 * Frame layout (byte offsets; all multi-byte fields big-endian):
 *
 *     0  dst_mac[6]          6  src_mac[6]        12  ethertype
 *    14  ver|ihl            15  diffserv          16  total_length
 *    18  identification     20  flags|frag_off    22  ttl   23 protocol
 *    24  header_checksum    26  src_ip            30  dst_ip
 *    34  udp_src_port       36  udp_dst_port      38  udp_length
 *    40  udp_checksum
 *    42  comm_id  44 comm_size  46 coll_type  48 algo_type  50 node_type
 *    52  msg_type 54 rank       56 root       58 operation  60 data_type
 *    62  count
 *    64  [epoch range_lo range_hi]   (DATA, TAGGED_DATA, ACK)
 *        elements[count] x 4 bytes
 *        [elapsed cycles, 8 bytes]   (RESULT)
 *
 * See docs/wire-format.md for the frozen enum values.
 */

#ifndef SCANSIM_PACKET_HPP
#define SCANSIM_PACKET_HPP

#include <array>
#include <cstdint>
#include <cctype>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "scan_core.hpp"

namespace scansim {

inline constexpr std::size_t kEthHeaderLen = 14;
inline constexpr std::size_t kIpHeaderLen = 20;
inline constexpr std::size_t kUdpHeaderLen = 8;
inline constexpr std::size_t kCollHeaderLen = 22;
inline constexpr std::size_t kSubHeaderLen = 6;
inline constexpr std::size_t kTrailerLen = 8;
inline constexpr std::size_t kCollOffset = kEthHeaderLen + kIpHeaderLen + kUdpHeaderLen;  // 42
inline constexpr std::size_t kElementSize = 4;
inline constexpr std::size_t kIpMtu = 1500;
/// (1500 - 20 - 8 - 22 - 6) / 4
inline constexpr std::uint16_t kMaxCount = 361;

inline constexpr std::uint16_t kEthertypeIpv4 = 0x0800;
inline constexpr std::uint8_t kIpProtoUdp = 17;

enum class CollType : std::uint16_t { Scan = 3 };
enum class AlgoType : std::uint16_t { Sequential = 0, RecursiveDoubling = 1, BinomialTree = 2 };
enum class NodeType : std::uint16_t {
  First = 0, Middle = 1, Last = 2, Leaf = 3, Internal = 4, Root = 5, Peer = 6
};
enum class MsgType : std::uint16_t { ScanRequest = 0, Data = 1, Ack = 2, Result = 3, TaggedData = 4 };

inline std::string_view to_string(AlgoType a) {
  switch (a) {
    case AlgoType::Sequential: return "sequential";
    case AlgoType::RecursiveDoubling: return "recursive_doubling";
    case AlgoType::BinomialTree: return "binomial_tree";
  }
  return "?";
}

inline std::string_view to_string(NodeType n) {
  switch (n) {
    case NodeType::First: return "FIRST";
    case NodeType::Middle: return "MIDDLE";
    case NodeType::Last: return "LAST";
    case NodeType::Leaf: return "LEAF";
    case NodeType::Internal: return "INTERNAL";
    case NodeType::Root: return "ROOT";
    case NodeType::Peer: return "PEER";
  }
  return "?";
}

inline std::string_view to_string(MsgType m) {
  switch (m) {
    case MsgType::ScanRequest: return "SCAN_REQUEST";
    case MsgType::Data: return "DATA";
    case MsgType::Ack: return "ACK";
    case MsgType::Result: return "RESULT";
    case MsgType::TaggedData: return "TAGGED_DATA";
  }
  return "?";
}

/// Sub-header is carried by NIC-to-NIC traffic only.
constexpr bool has_sub_header(MsgType m) {
  return m == MsgType::Data || m == MsgType::TaggedData || m == MsgType::Ack;
}

using MacAddress = std::array<std::uint8_t, 6>;
using Ipv4Address = std::uint32_t;

inline std::string format_mac(const MacAddress& m) {
  char buf[18];
  std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", m[0], m[1], m[2], m[3], m[4], m[5]);
  return buf;
}

inline std::string format_ip(Ipv4Address ip) {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

struct FrameHeader {
  MacAddress dst_mac{};
  MacAddress src_mac{};
  std::uint16_t ethertype = kEthertypeIpv4;
  std::uint8_t ip_version = 4;
  std::uint8_t ihl = 5;
  std::uint8_t diffserv = 0;
  std::uint16_t total_length = 0;
  std::uint16_t identification = 0;
  std::uint8_t flags = 0x2;  // DF
  std::uint16_t fragment_offset = 0;
  std::uint8_t ttl = 64;
  std::uint8_t protocol = kIpProtoUdp;
  std::uint16_t header_checksum = 0;
  Ipv4Address src_ip = 0;
  Ipv4Address dst_ip = 0;
  std::uint16_t udp_src_port = 0;
  std::uint16_t udp_dst_port = 0;
  std::uint16_t udp_length = 0;
  std::uint16_t udp_checksum = 0;

  friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

struct CollectiveHeader {
  std::uint16_t comm_id = 0;
  std::uint16_t comm_size = 1;
  CollType coll_type = CollType::Scan;
  AlgoType algo_type = AlgoType::Sequential;
  NodeType node_type = NodeType::First;
  MsgType msg_type = MsgType::ScanRequest;
  std::uint16_t rank = 0;
  std::uint16_t root = 0;
  OpKind operation = OpKind::Sum;
  DataType data_type = DataType::Int32;
  std::uint16_t count = 0;

  friend bool operator==(const CollectiveHeader&, const CollectiveHeader&) = default;
};

/// Scan sequence number plus the inclusive rank range whose partial the
/// packet carries (the message tag).
struct DataSubHeader {
  std::uint16_t epoch = 0;
  std::uint16_t range_lo = 0;
  std::uint16_t range_hi = 0;

  friend bool operator==(const DataSubHeader&, const DataSubHeader&) = default;
};

struct OffloadPacket {
  FrameHeader frame;
  CollectiveHeader coll;
  std::optional<DataSubHeader> sub;
  std::vector<std::int32_t> elements;
  std::optional<std::uint64_t> elapsed_trailer;

  MsgType msg_type() const noexcept { return coll.msg_type; }
  Vector payload() const { return Vector(elements, coll.data_type); }
  friend bool operator==(const OffloadPacket&, const OffloadPacket&) = default;
};

enum class CodecErrc {
  Truncated,
  LengthMismatch,
  BadEthertype,
  BadVersion,
  BadIhl,
  BadProtocol,
  IpChecksumMismatch,
  UdpChecksumMismatch,
  UnknownEnum,
  InvalidField,
  SubHeaderMismatch,
  CountTooLarge,
  NotARequest,
};

inline std::string_view to_string(CodecErrc e) {
  switch (e) {
    case CodecErrc::Truncated: return "truncated";
    case CodecErrc::LengthMismatch: return "length mismatch";
    case CodecErrc::BadEthertype: return "bad ethertype";
    case CodecErrc::BadVersion: return "bad ip version";
    case CodecErrc::BadIhl: return "bad ihl";
    case CodecErrc::BadProtocol: return "bad protocol";
    case CodecErrc::IpChecksumMismatch: return "ip checksum mismatch";
    case CodecErrc::UdpChecksumMismatch: return "udp checksum mismatch";
    case CodecErrc::UnknownEnum: return "unknown enum value";
    case CodecErrc::InvalidField: return "invalid field";
    case CodecErrc::SubHeaderMismatch: return "sub-header mismatch";
    case CodecErrc::CountTooLarge: return "count too large";
    case CodecErrc::NotARequest: return "not a scan request";
  }
  return "?";
}

class CodecError : public Error {
 public:
  CodecError(CodecErrc code, std::string field, const std::string& detail = {})
      : Error(std::string(to_string(code)) + " (" + field + ")" + (detail.empty() ? "" : ": " + detail)),
        code_(code),
        field_(std::move(field)) {}
  CodecErrc code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  CodecErrc code_;
  std::string field_;
};

/// IP-layer length (total_length) implied by the packet's content.
inline std::size_t ip_length_for(MsgType m, std::size_t count) {
  return kIpHeaderLen + kUdpHeaderLen + kCollHeaderLen + (has_sub_header(m) ? kSubHeaderLen : 0) +
         count * kElementSize + (m == MsgType::Result ? kTrailerLen : 0);
}

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::size_t reserve) { buf_.reserve(reserve); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v >> 32));
    u32(static_cast<std::uint32_t>(v));
  }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Callers bounds-check before reading.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() { return b_[pos_++]; }
  std::uint16_t u16() {
    std::uint16_t hi = u8();
    return static_cast<std::uint16_t>((hi << 8) | u8());
  }
  std::uint32_t u32() {
    std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::uint64_t u64() {
    std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

/// 32-bit accumulation of big-endian 16-bit words; odd tail padded with zero.
inline std::uint32_t word_sum(std::span<const std::uint8_t> data, std::uint32_t acc = 0) {
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2) acc += (std::uint32_t{data[i]} << 8) | data[i + 1];
  if (i < data.size()) acc += std::uint32_t{data[i]} << 8;
  return acc;
}

inline std::uint16_t fold(std::uint32_t acc) {
  while (acc >> 16) acc = (acc & 0xffff) + (acc >> 16);
  return static_cast<std::uint16_t>(acc);
}

template <class E>
E checked_enum(std::uint16_t raw, std::uint16_t max_value, const char* field) {
  if (raw > max_value) throw CodecError(CodecErrc::UnknownEnum, field, "value " + std::to_string(raw));
  return static_cast<E>(raw);
}

inline void write_ip_header(ByteWriter& w, const FrameHeader& f) {
  w.u8(static_cast<std::uint8_t>((f.ip_version << 4) | (f.ihl & 0xf)));
  w.u8(f.diffserv);
  w.u16(f.total_length);
  w.u16(f.identification);
  w.u16(static_cast<std::uint16_t>((f.flags & 0x7) << 13 | (f.fragment_offset & 0x1fff)));
  w.u8(f.ttl);
  w.u8(f.protocol);
  w.u16(f.header_checksum);
  w.u32(f.src_ip);
  w.u32(f.dst_ip);
}

/// Everything after the UDP header.
inline std::vector<std::uint8_t> udp_payload_bytes(const OffloadPacket& p) {
  ByteWriter w(kCollHeaderLen + kSubHeaderLen + p.elements.size() * kElementSize + kTrailerLen);
  const auto& c = p.coll;
  w.u16(c.comm_id);
  w.u16(c.comm_size);
  w.u16(static_cast<std::uint16_t>(c.coll_type));
  w.u16(static_cast<std::uint16_t>(c.algo_type));
  w.u16(static_cast<std::uint16_t>(c.node_type));
  w.u16(static_cast<std::uint16_t>(c.msg_type));
  w.u16(c.rank);
  w.u16(c.root);
  w.u16(static_cast<std::uint16_t>(c.operation));
  w.u16(static_cast<std::uint16_t>(c.data_type));
  w.u16(c.count);
  if (p.sub) {
    w.u16(p.sub->epoch);
    w.u16(p.sub->range_lo);
    w.u16(p.sub->range_hi);
  }
  for (auto v : p.elements) w.u32(static_cast<std::uint32_t>(v));
  if (p.elapsed_trailer) w.u64(*p.elapsed_trailer);
  return std::move(w.buffer());
}

inline void check_fixed_fields(const FrameHeader& f) {
  if (f.ethertype != kEthertypeIpv4) throw CodecError(CodecErrc::BadEthertype, "ethertype");
  if (f.ip_version != 4) throw CodecError(CodecErrc::BadVersion, "ip_version");
  if (f.ihl != 5) throw CodecError(CodecErrc::BadIhl, "ihl");
  if (f.protocol != kIpProtoUdp) throw CodecError(CodecErrc::BadProtocol, "protocol");
}

inline void check_collective(const CollectiveHeader& c) {
  if (c.comm_size == 0) throw CodecError(CodecErrc::InvalidField, "comm_size", "must be >= 1");
  if (c.rank >= c.comm_size) throw CodecError(CodecErrc::InvalidField, "rank", "rank >= comm_size");
  if (c.count > kMaxCount)
    throw CodecError(CodecErrc::CountTooLarge, "count", std::to_string(c.count) + " > 361");
}

inline void check_sub(const CollectiveHeader& c, const std::optional<DataSubHeader>& s) {
  if (has_sub_header(c.msg_type) != s.has_value())
    throw CodecError(CodecErrc::SubHeaderMismatch, "sub_header");
  if (s && !(s->range_lo <= s->range_hi && s->range_hi < c.comm_size))
    throw CodecError(CodecErrc::InvalidField, "range", "need range_lo <= range_hi < comm_size");
}

}  // namespace detail

/// Ones'-complement of the ones'-complement sum of a 20-byte IPv4 header
/// whose checksum field is zero.
inline std::uint16_t ipv4_header_checksum(std::span<const std::uint8_t> header20) {
  if (header20.size() != kIpHeaderLen)
    throw CodecError(CodecErrc::LengthMismatch, "ip_header", "expected 20 bytes, got " +
                                                                 std::to_string(header20.size()));
  return static_cast<std::uint16_t>(~detail::fold(detail::word_sum(header20)));
}

/// UDP checksum over the IPv4 pseudo-header, the UDP header (checksum field
/// taken as zero) and `payload`. A computed zero is returned as 0xFFFF.
inline std::uint16_t udp_checksum(const FrameHeader& f, std::span<const std::uint8_t> payload) {
  if (f.udp_length != kUdpHeaderLen + payload.size())
    throw CodecError(CodecErrc::LengthMismatch, "udp_length",
                     std::to_string(f.udp_length) + " vs 8 + " + std::to_string(payload.size()));
  std::uint32_t acc = 0;
  acc += f.src_ip >> 16;
  acc += f.src_ip & 0xffff;
  acc += f.dst_ip >> 16;
  acc += f.dst_ip & 0xffff;
  acc += f.protocol;
  acc += f.udp_length;
  acc += f.udp_src_port;
  acc += f.udp_dst_port;
  acc += f.udp_length;
  acc = detail::word_sum(payload, acc);
  auto sum = static_cast<std::uint16_t>(~detail::fold(acc));
  return sum == 0 ? 0xffff : sum;
}

/// Recomputes count, both length fields and both checksums from content.
inline void seal(OffloadPacket& p) {
  p.coll.count = static_cast<std::uint16_t>(p.elements.size());
  p.frame.total_length = static_cast<std::uint16_t>(ip_length_for(p.coll.msg_type, p.elements.size()));
  p.frame.udp_length = static_cast<std::uint16_t>(p.frame.total_length - kIpHeaderLen);
  p.frame.header_checksum = 0;
  detail::ByteWriter ip(kIpHeaderLen);
  detail::write_ip_header(ip, p.frame);
  p.frame.header_checksum = ipv4_header_checksum(ip.buffer());
  p.frame.udp_checksum = udp_checksum(p.frame, detail::udp_payload_bytes(p));
}

/// Serializes a packet whose length and checksum fields are already
/// consistent with its content (see seal()). A zero udp_checksum is
/// emitted verbatim ("not computed").
inline std::vector<std::uint8_t> encode_packet(const OffloadPacket& p) {
  const auto& f = p.frame;
  detail::check_fixed_fields(f);
  detail::check_collective(p.coll);
  if (p.coll.count != p.elements.size())
    throw CodecError(CodecErrc::LengthMismatch, "count",
                     std::to_string(p.coll.count) + " vs " + std::to_string(p.elements.size()) + " elements");
  detail::check_sub(p.coll, p.sub);
  if ((p.coll.msg_type == MsgType::Result) != p.elapsed_trailer.has_value())
    throw CodecError(CodecErrc::SubHeaderMismatch, "elapsed_trailer");
  const auto ip_len = ip_length_for(p.coll.msg_type, p.elements.size());
  if (f.total_length != ip_len)
    throw CodecError(CodecErrc::LengthMismatch, "total_length",
                     std::to_string(f.total_length) + " vs " + std::to_string(ip_len));
  if (f.udp_length != ip_len - kIpHeaderLen)
    throw CodecError(CodecErrc::LengthMismatch, "udp_length");

  detail::ByteWriter w(kEthHeaderLen + ip_len);
  w.bytes(f.dst_mac);
  w.bytes(f.src_mac);
  w.u16(f.ethertype);
  const std::size_t ip_at = w.buffer().size();
  detail::write_ip_header(w, f);
  if (detail::fold(detail::word_sum(std::span(w.buffer()).subspan(ip_at, kIpHeaderLen))) != 0xffff)
    throw CodecError(CodecErrc::IpChecksumMismatch, "header_checksum");
  w.u16(f.udp_src_port);
  w.u16(f.udp_dst_port);
  w.u16(f.udp_length);
  w.u16(f.udp_checksum);
  const auto payload = detail::udp_payload_bytes(p);
  if (f.udp_checksum != 0 && udp_checksum(f, payload) != f.udp_checksum)
    throw CodecError(CodecErrc::UdpChecksumMismatch, "udp_checksum");
  w.bytes(payload);
  return std::move(w.buffer());
}

/// Parses and fully validates one frame. Never reads out of bounds; every
/// failure is a CodecError naming the offending field.
inline OffloadPacket decode_packet(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kMinFrame = kCollOffset + kCollHeaderLen;
  if (bytes.size() < kMinFrame)
    throw CodecError(CodecErrc::Truncated, "frame",
                     std::to_string(bytes.size()) + " bytes, need at least " + std::to_string(kMinFrame));
  OffloadPacket p;
  auto& f = p.frame;
  detail::ByteReader r(bytes);
  for (auto& b : f.dst_mac) b = r.u8();
  for (auto& b : f.src_mac) b = r.u8();
  f.ethertype = r.u16();
  const auto vi = r.u8();
  f.ip_version = vi >> 4;
  f.ihl = vi & 0xf;
  f.diffserv = r.u8();
  f.total_length = r.u16();
  f.identification = r.u16();
  const auto ff = r.u16();
  f.flags = static_cast<std::uint8_t>(ff >> 13);
  f.fragment_offset = ff & 0x1fff;
  f.ttl = r.u8();
  f.protocol = r.u8();
  f.header_checksum = r.u16();
  f.src_ip = r.u32();
  f.dst_ip = r.u32();
  f.udp_src_port = r.u16();
  f.udp_dst_port = r.u16();
  f.udp_length = r.u16();
  f.udp_checksum = r.u16();
  detail::check_fixed_fields(f);

  const std::size_t frame_len = kEthHeaderLen + f.total_length;
  if (f.total_length < kMinFrame - kEthHeaderLen)
    throw CodecError(CodecErrc::LengthMismatch, "total_length", "too small: " + std::to_string(f.total_length));
  if (frame_len > bytes.size())
    throw CodecError(CodecErrc::Truncated, "total_length",
                     "frame has " + std::to_string(bytes.size()) + " bytes, header says " + std::to_string(frame_len));
  if (frame_len < bytes.size())
    throw CodecError(CodecErrc::LengthMismatch, "total_length", "trailing bytes after frame");
  if (detail::fold(detail::word_sum(bytes.subspan(kEthHeaderLen, kIpHeaderLen))) != 0xffff)
    throw CodecError(CodecErrc::IpChecksumMismatch, "header_checksum");
  if (f.udp_length != f.total_length - kIpHeaderLen) throw CodecError(CodecErrc::LengthMismatch, "udp_length");
  const auto payload = bytes.subspan(kCollOffset);
  if (f.udp_checksum != 0 && udp_checksum(f, payload) != f.udp_checksum)
    throw CodecError(CodecErrc::UdpChecksumMismatch, "udp_checksum");

  auto& c = p.coll;
  c.comm_id = r.u16();
  c.comm_size = r.u16();
  const auto coll_raw = r.u16();
  if (coll_raw != static_cast<std::uint16_t>(CollType::Scan))
    throw CodecError(CodecErrc::UnknownEnum, "coll_type", "value " + std::to_string(coll_raw));
  c.coll_type = CollType::Scan;
  c.algo_type = detail::checked_enum<AlgoType>(r.u16(), 2, "algo_type");
  c.node_type = detail::checked_enum<NodeType>(r.u16(), 6, "node_type");
  c.msg_type = detail::checked_enum<MsgType>(r.u16(), 4, "msg_type");
  c.rank = r.u16();
  c.root = r.u16();
  c.operation = detail::checked_enum<OpKind>(r.u16(), 3, "operation");
  c.data_type = detail::checked_enum<DataType>(r.u16(), 0, "data_type");
  c.count = r.u16();
  detail::check_collective(c);

  if (f.total_length != ip_length_for(c.msg_type, c.count))
    throw CodecError(CodecErrc::LengthMismatch, "count",
                     "count " + std::to_string(c.count) + " inconsistent with total_length " +
                         std::to_string(f.total_length));
  if (has_sub_header(c.msg_type)) {
    DataSubHeader s;
    s.epoch = r.u16();
    s.range_lo = r.u16();
    s.range_hi = r.u16();
    p.sub = s;
  }
  detail::check_sub(c, p.sub);
  p.elements.resize(c.count);
  for (auto& v : p.elements) v = static_cast<std::int32_t>(r.u32());
  if (c.msg_type == MsgType::Result) p.elapsed_trailer = r.u64();
  return p;
}

/// The host-bound answer to `request`: addresses and ports swapped,
/// msg_type RESULT, elements and elapsed trailer attached, lengths and
/// checksums recomputed.
inline OffloadPacket make_result_packet(const OffloadPacket& request, const Vector& result, Cycles elapsed) {
  if (request.coll.msg_type != MsgType::ScanRequest)
    throw CodecError(CodecErrc::NotARequest, "msg_type", std::string(to_string(request.coll.msg_type)));
  if (result.size() > kMaxCount) throw CodecError(CodecErrc::CountTooLarge, "count");
  OffloadPacket out;
  out.frame = request.frame;
  std::swap(out.frame.dst_mac, out.frame.src_mac);
  std::swap(out.frame.dst_ip, out.frame.src_ip);
  std::swap(out.frame.udp_dst_port, out.frame.udp_src_port);
  out.coll = request.coll;
  out.coll.msg_type = MsgType::Result;
  out.coll.data_type = result.dtype;
  out.elements = result.values;
  out.elapsed_trailer = elapsed;
  seal(out);
  return out;
}

/// 16 bytes per line, each line prefixed with a 4-digit hex offset.
inline std::string hex_dump(std::span<const std::uint8_t> bytes) {
  std::string out;
  char buf[24];
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i % 16 == 0) {
      std::snprintf(buf, sizeof buf, "%04zx:", i);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, " %02x", bytes[i]);
    out += buf;
    if (i % 16 == 15 || i + 1 == bytes.size()) out += '\n';
  }
  return out;
}

/// Inverse of hex_dump; offset prefixes (tokens ending in ':') are skipped.
inline std::vector<std::uint8_t> parse_hex_dump(std::string_view text) {
  std::vector<std::uint8_t> out;
  std::size_t i = 0;
  auto hexval = [](char ch) -> int {
    if (ch >= '0' && ch <= '9') return ch - '0';
    if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
    if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
    return -1;
  };
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    auto tok = text.substr(i, j - i);
    i = j;
    if (tok.empty() || tok.back() == ':') continue;
    if (tok.size() != 2 || hexval(tok[0]) < 0 || hexval(tok[1]) < 0)
      throw CodecError(CodecErrc::InvalidField, "hex", "bad token '" + std::string(tok) + "'");
    out.push_back(static_cast<std::uint8_t>(hexval(tok[0]) << 4 | hexval(tok[1])));
  }
  return out;
}

}  // namespace scansim

#endif  // SCANSIM_PACKET_HPP
