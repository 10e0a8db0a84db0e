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
 * @file  nic_engine.hpp
 * @brief Per-rank offload engine: sequential, recursive-doubling and
 *        binomial-tree scan protocols as deterministic state machines, plus
 *        the 8 ns cycle timer.
 *
 * A NicState consumes one NicEvent at a time (a packet from a peer NIC or a
 * SCAN_REQUEST from the local host) and produces packet emissions and at
 * most one RESULT per epoch for the host. Nothing else is touched, so the
 * engine can be replayed and driven by any transport.
 *
 * Buffer bounds enforced here (violations throw ProtocolError):
 *  - sequential: one outstanding predecessor DATA;
 *  - recursive doubling: per stage, one slot per epoch parity; peers are at
 *    most one epoch ahead;
 *  - binomial tree: one cached child partial per up-phase step, two
 *    epoch-parity slots for the down-phase prefix.
 */

#ifndef SCANSIM_NIC_ENGINE_HPP
#define SCANSIM_NIC_ENGINE_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "packet.hpp"
#include "scan_core.hpp"

namespace scansim {

// ---------------------------------------------------------------------------
// Addressing and roles

struct Endpoint {
  MacAddress mac{};
  Ipv4Address ip = 0;
  std::uint16_t port = 0;
  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

/// The NIC's own endpoint and the endpoint of the host process behind it.
struct RankAddress {
  Endpoint nic;
  Endpoint host;
  friend bool operator==(const RankAddress&, const RankAddress&) = default;
};

inline constexpr std::uint16_t kNicPort = 6000;
inline constexpr std::uint16_t kHostPort = 5000;
inline constexpr MacAddress kMulticastMac{0x01, 0x00, 0x5e, 0x7f, 0x00, 0x01};
inline constexpr Ipv4Address kMulticastIp = 0xefff0001;  // 239.255.0.1

/// NIC r: 02:00:00:01:hi:lo / 10.1.hi.lo:6000; host r: 02:00:00:00:hi:lo / 10.0.hi.lo:5000.
inline RankAddress default_address(Rank r) {
  const auto hi = static_cast<std::uint8_t>(r >> 8), lo = static_cast<std::uint8_t>(r);
  RankAddress a;
  a.nic = {{0x02, 0x00, 0x00, 0x01, hi, lo}, (10u << 24) | (1u << 16) | (std::uint32_t{hi} << 8) | lo, kNicPort};
  a.host = {{0x02, 0x00, 0x00, 0x00, hi, lo}, (10u << 24) | (std::uint32_t{hi} << 8) | lo, kHostPort};
  return a;
}

inline std::vector<RankAddress> default_address_book(std::uint16_t p) {
  std::vector<RankAddress> book;
  book.reserve(p);
  for (Rank r = 0; r < p; ++r) book.push_back(default_address(r));
  return book;
}

enum class ProtocolErrc {
  HeaderMismatch,
  BufferOverflow,
  EpochTooFarAhead,
  StaleEpoch,
  UnexpectedMessage,
  NotInvertible,
  BadConfig,
  Busy,
  ClockRegression,
};

inline std::string_view to_string(ProtocolErrc e) {
  switch (e) {
    case ProtocolErrc::HeaderMismatch: return "header mismatch";
    case ProtocolErrc::BufferOverflow: return "buffer overflow";
    case ProtocolErrc::EpochTooFarAhead: return "epoch too far ahead";
    case ProtocolErrc::StaleEpoch: return "stale epoch";
    case ProtocolErrc::UnexpectedMessage: return "unexpected message";
    case ProtocolErrc::NotInvertible: return "operation not invertible";
    case ProtocolErrc::BadConfig: return "bad configuration";
    case ProtocolErrc::Busy: return "request while busy";
    case ProtocolErrc::ClockRegression: return "clock regression";
  }
  return "?";
}

class ProtocolError : public Error {
 public:
  ProtocolError(ProtocolErrc code, const std::string& detail)
      : Error(std::string(to_string(code)) + ": " + detail), code_(code) {}
  ProtocolErrc code() const noexcept { return code_; }

 private:
  ProtocolErrc code_;
};

/// Role a rank plays in `algo` for a communicator of `comm_size` ranks.
inline NodeType assign_node_roles(AlgoType algo, Rank rank, std::uint16_t comm_size) {
  if (comm_size == 0 || rank >= comm_size)
    throw ProtocolError(ProtocolErrc::BadConfig,
                        "rank " + std::to_string(rank) + " outside communicator of size " + std::to_string(comm_size));
  if (algo != AlgoType::Sequential && !is_pow2(comm_size))
    throw ProtocolError(ProtocolErrc::BadConfig, std::string(to_string(algo)) +
                                                     " needs a power-of-two communicator, got " +
                                                     std::to_string(comm_size));
  switch (algo) {
    case AlgoType::Sequential:
      if (rank == 0) return NodeType::First;
      return rank == comm_size - 1 ? NodeType::Last : NodeType::Middle;
    case AlgoType::RecursiveDoubling:
      return NodeType::Peer;
    case AlgoType::BinomialTree:
      if (rank == comm_size - 1) return NodeType::Root;
      return (rank & 1) ? NodeType::Internal : NodeType::Leaf;
  }
  throw ProtocolError(ProtocolErrc::BadConfig, "unknown algorithm");
}

// ---------------------------------------------------------------------------
// Timer

struct Elapsed {
  Cycles cycles = 0;
  std::uint64_t nanoseconds = 0;
  friend bool operator==(const Elapsed&, const Elapsed&) = default;
};

/// Wrapping 64-bit difference, converted at 8 ns per cycle.
constexpr Elapsed timer_elapsed(Cycles offload, Cycles release) {
  const Cycles c = release - offload;
  return {c, c * kNsPerCycle};
}

struct CycleTimer {
  Cycles counter = 0;
  Cycles offload_time = 0;
  Cycles release_time = 0;
};

// ---------------------------------------------------------------------------
// Configuration, events, outputs

struct NicConfig {
  Rank rank = 0;
  std::uint16_t comm_size = 1;
  AlgoType algo = AlgoType::Sequential;
  NodeType node_type = NodeType::First;
  ReduceOp op{};
  DataType dtype = DataType::Int32;
  std::uint16_t comm_id = 0;
  std::vector<RankAddress> address_book;  // indexed by rank
  bool late_multicast_enabled = true;
  bool cascade_multicast_enabled = false;
};

/// Config with the canonical role and default addresses for (algo, rank, p).
inline NicConfig make_nic_config(AlgoType algo, Rank rank, std::uint16_t p, ReduceOp op = {}) {
  NicConfig c;
  c.rank = rank;
  c.comm_size = p;
  c.algo = algo;
  c.node_type = assign_node_roles(algo, rank, p);
  c.op = op;
  c.address_book = default_address_book(p);
  return c;
}

/// SCAN_REQUEST as the host process of `c.rank` would send it to its NIC.
inline OffloadPacket make_scan_request(const NicConfig& c, const Vector& local) {
  OffloadPacket p;
  const auto& a = c.address_book.at(c.rank);
  p.frame.src_mac = a.host.mac;
  p.frame.src_ip = a.host.ip;
  p.frame.udp_src_port = a.host.port;
  p.frame.dst_mac = a.nic.mac;
  p.frame.dst_ip = a.nic.ip;
  p.frame.udp_dst_port = a.nic.port;
  p.coll.comm_id = c.comm_id;
  p.coll.comm_size = c.comm_size;
  p.coll.algo_type = c.algo;
  p.coll.node_type = c.node_type;
  p.coll.msg_type = MsgType::ScanRequest;
  p.coll.rank = c.rank;
  p.coll.operation = c.op.kind;
  p.coll.data_type = local.dtype;
  p.elements = local.values;
  seal(p);
  return p;
}

inline void validate(const NicConfig& c) {
  const auto expected = assign_node_roles(c.algo, c.rank, c.comm_size);
  if (c.node_type != expected)
    throw ProtocolError(ProtocolErrc::BadConfig, "rank " + std::to_string(c.rank) + " configured as " +
                                                     std::string(to_string(c.node_type)) + ", expected " +
                                                     std::string(to_string(expected)));
  if (c.address_book.size() != c.comm_size)
    throw ProtocolError(ProtocolErrc::BadConfig, "address book covers " + std::to_string(c.address_book.size()) +
                                                     " of " + std::to_string(c.comm_size) + " ranks");
}

struct NicEvent {
  enum class Kind { PacketArrival, HostRequest };
  Kind kind = Kind::PacketArrival;
  OffloadPacket packet;
  Cycles now = 0;

  static NicEvent arrival(OffloadPacket p, Cycles now) { return {Kind::PacketArrival, std::move(p), now}; }
  static NicEvent host_request(OffloadPacket p, Cycles now) { return {Kind::HostRequest, std::move(p), now}; }
};

/// One transmission. More than one destination is a multicast and still
/// counts as a single send.
struct Emission {
  OffloadPacket packet;
  std::vector<Rank> destinations;
};

/// A peer value recovered locally through the inverse operation.
struct Derivation {
  std::uint16_t epoch = 0;
  std::uint16_t stage = 0;
  Rank from = 0;
  Vector value;
};

struct NicOutput {
  std::vector<Emission> emissions;
  std::optional<OffloadPacket> host_delivery;
  std::vector<Derivation> derivations;
  bool multicast_fired = false;
};

// ---------------------------------------------------------------------------
// State

enum class Phase { Idle, AwaitingPred, AwaitingAck, Stage, Up, AwaitingDown };

/// A peer message parked until the local engine can consume it.
struct Buffered {
  std::uint16_t epoch = 0;
  Rank from = 0;
  MsgType type = MsgType::Data;
  std::uint16_t range_lo = 0;
  std::uint16_t range_hi = 0;
  Vector value;
};

/// High-water marks, kept for flow-control assertions.
struct NicWatermarks {
  std::size_t pred_buffer = 0;
  std::size_t child_cache = 0;
  std::size_t stage_slots = 0;
  std::uint16_t epoch_lead = 0;
  std::uint64_t multicasts_fired = 0;
  std::uint64_t derivations = 0;
};

struct NicState {
  NicConfig config;
  Phase phase = Phase::Idle;
  std::uint16_t step = 0;  // recursive-doubling stage or binomial up step
  std::uint16_t epoch = 0;
  std::optional<OffloadPacket> cached_request;
  Vector local_value;
  Vector result_acc;
  Vector group_acc;

  // sequential
  std::optional<Buffered> pred_buffer;

  // recursive doubling
  std::vector<std::array<std::optional<Buffered>, 2>> stage_buffers;  // [stage][epoch parity]
  std::vector<Vector> own_group_cache;                                // [stage], group total on entry
  bool stage_sent = false;
  bool fired_this_epoch = false;

  // binomial tree
  std::vector<std::optional<Buffered>> child_caches;  // [up step]
  std::array<std::optional<Buffered>, 2> down_buffer;
  bool up_sent = false;
  bool result_ready = false;

  std::set<Rank> pending_acks;
  CycleTimer timer;
  std::uint16_t next_identification = 0;
  NicWatermarks watermarks;

  explicit NicState(NicConfig c = {}) : config(std::move(c)) {
    const auto m = log2_floor(config.comm_size);
    if (config.algo == AlgoType::RecursiveDoubling) {
      stage_buffers.resize(m);
      own_group_cache.resize(m + 1);
    }
    if (config.algo == AlgoType::BinomialTree) child_caches.resize(m);
  }
};

inline std::string_view phase_name(Phase ph) {
  switch (ph) {
    case Phase::Idle: return "IDLE";
    case Phase::AwaitingPred: return "AWAITING_PRED";
    case Phase::AwaitingAck: return "AWAITING_ACK";
    case Phase::Stage: return "STAGE";
    case Phase::Up: return "UP";
    case Phase::AwaitingDown: return "AWAITING_DOWN";
  }
  return "?";
}

/// Human-readable phase, e.g. "STAGE_1" or "AWAITING_ACK".
inline std::string phase_label(const NicState& s) {
  std::string out(phase_name(s.phase));
  if (s.phase == Phase::Stage || s.phase == Phase::Up) out += "_" + std::to_string(s.step);
  return out;
}

/// One line per non-quiescent detail; empty when the NIC is idle with
/// nothing buffered.
inline std::string describe(const NicState& s) {
  std::ostringstream os;
  auto buf = [&os](const char* what, const Buffered& b) {
    os << ' ' << what << "=[" << b.range_lo << ',' << b.range_hi << "]@" << b.epoch << " from " << b.from;
  };
  bool dirty = s.phase != Phase::Idle || s.cached_request || !s.pending_acks.empty();
  if (s.pred_buffer) dirty = true;
  for (auto& st : s.stage_buffers)
    for (auto& sl : st) dirty |= sl.has_value();
  for (auto& c : s.child_caches) dirty |= c.has_value();
  for (auto& d : s.down_buffer) dirty |= d.has_value();
  if (!dirty) return {};

  os << "rank " << s.config.rank << ": " << phase_label(s) << " epoch " << s.epoch;
  os << (s.cached_request ? " request=held" : " request=none");
  if (s.pred_buffer) buf("pred_buffer", *s.pred_buffer);
  for (std::size_t k = 0; k < s.stage_buffers.size(); ++k)
    for (auto& sl : s.stage_buffers[k])
      if (sl) buf(("stage" + std::to_string(k)).c_str(), *sl);
  for (std::size_t k = 0; k < s.child_caches.size(); ++k)
    if (s.child_caches[k]) buf(("child" + std::to_string(k)).c_str(), *s.child_caches[k]);
  for (auto& d : s.down_buffer)
    if (d) buf("down", *d);
  if (!s.pending_acks.empty()) {
    os << " pending_acks={";
    bool first = true;
    for (auto r : s.pending_acks) {
      os << (first ? "" : ",") << r;
      first = false;
    }
    os << '}';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Transition machinery

namespace detail {

/// Group of ranks whose total `rank` holds on entry to stage k.
struct RankRange {
  std::uint16_t lo = 0, hi = 0;
  friend bool operator==(RankRange, RankRange) = default;
};

inline RankRange rd_group(Rank j, unsigned k) {
  const auto base = static_cast<std::uint16_t>((j >> k) << k);
  return {base, static_cast<std::uint16_t>(base + (1u << k) - 1)};
}

inline unsigned trailing_ones(Rank j) { return static_cast<unsigned>(std::countr_one(static_cast<unsigned>(j))); }

/// Where a classified peer message goes.
enum class Slot { Pred, Ack, Stage, Child, Down };

struct Placement {
  Slot slot = Slot::Pred;
  unsigned index = 0;   // stage or up step
  bool derive = false;  // recursive doubling: value must be recovered via the inverse
  std::uint16_t lead = 0;
};

[[noreturn]] inline void fail(ProtocolErrc e, const NicState& s, const std::string& msg) {
  throw ProtocolError(e, "rank " + std::to_string(s.config.rank) + ": " + msg);
}

inline std::string pkt_label(const OffloadPacket& p) {
  std::string out(to_string(p.coll.msg_type));
  out += " from " + std::to_string(p.coll.rank);
  if (p.sub)
    out += " range [" + std::to_string(p.sub->range_lo) + "," + std::to_string(p.sub->range_hi) + "] epoch " +
           std::to_string(p.sub->epoch);
  return out;
}

inline void check_common_header(const NicState& s, const OffloadPacket& p) {
  const auto& c = s.config;
  const auto& h = p.coll;
  auto mismatch = [&](const char* field, auto got, auto want) {
    fail(ProtocolErrc::HeaderMismatch, s,
         std::string(field) + " " + std::to_string(static_cast<unsigned>(got)) + " != configured " +
             std::to_string(static_cast<unsigned>(want)) + " in " + pkt_label(p));
  };
  if (h.coll_type != CollType::Scan) mismatch("coll_type", h.coll_type, CollType::Scan);
  if (h.comm_id != c.comm_id) mismatch("comm_id", h.comm_id, c.comm_id);
  if (h.comm_size != c.comm_size) mismatch("comm_size", h.comm_size, c.comm_size);
  if (h.algo_type != c.algo) mismatch("algo_type", h.algo_type, c.algo);
  if (h.operation != c.op.kind) mismatch("operation", h.operation, c.op.kind);
  if (h.data_type != c.dtype) mismatch("data_type", h.data_type, c.dtype);
  if (h.count != p.elements.size()) mismatch("count", h.count, p.elements.size());
}

inline std::uint16_t epoch_lead(const NicState& s, const OffloadPacket& p) {
  const auto lead = static_cast<std::uint16_t>(p.sub->epoch - s.epoch);
  if (lead >= 0x8000) fail(ProtocolErrc::StaleEpoch, s, pkt_label(p) + " at local epoch " + std::to_string(s.epoch));
  if (lead > 1)
    fail(ProtocolErrc::EpochTooFarAhead, s, pkt_label(p) + " at local epoch " + std::to_string(s.epoch));
  return lead;
}

inline bool range_is(const OffloadPacket& p, std::uint32_t lo, std::uint32_t hi) {
  return p.sub->range_lo == lo && p.sub->range_hi == hi;
}

// --- classification (pure; throws before any state is touched) ------------

inline Placement classify_sequential(const NicState& s, const OffloadPacket& p, std::uint16_t lead) {
  const Rank j = s.config.rank, from = p.coll.rank;
  const auto p_size = s.config.comm_size;
  if (p.coll.msg_type == MsgType::Data && j > 0 && from == j - 1 && range_is(p, 0, j - 1)) {
    if (s.pred_buffer) fail(ProtocolErrc::BufferOverflow, s, "predecessor buffer already holds a DATA");
    if (lead == 0 && s.phase == Phase::AwaitingAck) fail(ProtocolErrc::UnexpectedMessage, s, "duplicate " + pkt_label(p));
    return {Slot::Pred, 0, false, lead};
  }
  if (p.coll.msg_type == MsgType::Ack && j + 1 < p_size && from == j + 1) {
    if (lead != 0 || s.phase != Phase::AwaitingAck) fail(ProtocolErrc::UnexpectedMessage, s, pkt_label(p));
    return {Slot::Ack, 0, false, lead};
  }
  fail(ProtocolErrc::UnexpectedMessage, s, pkt_label(p));
}

inline Placement classify_recursive_doubling(const NicState& s, const OffloadPacket& p, std::uint16_t lead) {
  const Rank j = s.config.rank, from = p.coll.rank;
  const unsigned m = log2_floor(s.config.comm_size);
  const auto type = p.coll.msg_type;
  if (type != MsgType::Data && type != MsgType::TaggedData) fail(ProtocolErrc::UnexpectedMessage, s, pkt_label(p));
  const std::uint32_t lo = p.sub->range_lo, hi = p.sub->range_hi, n = hi - lo + 1;
  if (!is_pow2(n) || lo % n != 0) fail(ProtocolErrc::HeaderMismatch, s, "unaligned range in " + pkt_label(p));
  const unsigned t = log2_floor(n);

  Placement pl{Slot::Stage, t, false, lead};
  if (lo <= j && j <= hi) {
    // Combined two-stage multicast: we are the lower-stage recipient.
    if (type != MsgType::TaggedData || t == 0 || t >= m || from != (j ^ (1u << (t - 1))))
      fail(ProtocolErrc::HeaderMismatch, s, "range covers receiver in " + pkt_label(p));
    if (!s.config.op.invertible())
      fail(ProtocolErrc::NotInvertible, s, "cannot recover a stage value from " + pkt_label(p));
    pl.index = t - 1;
    pl.derive = true;
  } else if (t >= m || from != (j ^ (1u << t)) || rd_group(from, t) != RankRange{std::uint16_t(lo), std::uint16_t(hi)}) {
    fail(ProtocolErrc::HeaderMismatch, s, "unexpected range in " + pkt_label(p));
  }
  if (lead == 0 && s.cached_request && pl.index < s.step)
    fail(ProtocolErrc::UnexpectedMessage, s, "stage " + std::to_string(pl.index) + " already done: " + pkt_label(p));
  if (s.stage_buffers[pl.index][p.sub->epoch & 1])
    fail(ProtocolErrc::BufferOverflow, s, "stage slot collision for " + pkt_label(p));
  return pl;
}

inline Placement classify_binomial(const NicState& s, const OffloadPacket& p, std::uint16_t lead) {
  const Rank j = s.config.rank, from = p.coll.rank;
  const unsigned m = log2_floor(s.config.comm_size);
  const unsigned t = std::min(trailing_ones(j), m);
  if (p.coll.msg_type == MsgType::Ack) {
    if (lead != 0 || !s.pending_acks.contains(from)) fail(ProtocolErrc::UnexpectedMessage, s, pkt_label(p));
    return {Slot::Ack, 0, false, lead};
  }
  if (p.coll.msg_type != MsgType::Data || from >= j || !is_pow2(j - from))
    fail(ProtocolErrc::UnexpectedMessage, s, pkt_label(p));
  const unsigned k = log2_floor(j - from);
  if (k < t) {
    if (!range_is(p, from - (1u << k) + 1, from))
      fail(ProtocolErrc::HeaderMismatch, s, "bad child range in " + pkt_label(p));
    if (lead == 0 && s.cached_request && k < s.step)
      fail(ProtocolErrc::UnexpectedMessage, s, "duplicate " + pkt_label(p));
    if (s.child_caches[k]) fail(ProtocolErrc::BufferOverflow, s, "child cache " + std::to_string(k) + " full");
    return {Slot::Child, k, false, lead};
  }
  const bool full_prefix_after_up = (j + 1u) == (1u << t);
  if (k == t && !full_prefix_after_up) {
    if (!range_is(p, 0, from)) fail(ProtocolErrc::HeaderMismatch, s, "bad down-phase range in " + pkt_label(p));
    if (lead == 0 && s.result_ready) fail(ProtocolErrc::UnexpectedMessage, s, "duplicate " + pkt_label(p));
    if (s.down_buffer[p.sub->epoch & 1]) fail(ProtocolErrc::BufferOverflow, s, "down-phase slot full");
    return {Slot::Down, 0, false, lead};
  }
  fail(ProtocolErrc::UnexpectedMessage, s, pkt_label(p));
}

// --- emission helpers -----------------------------------------------------

inline OffloadPacket nic_packet(NicState& s, MsgType type, RankRange range, const Vector* value,
                                const std::vector<Rank>& dsts) {
  const auto& c = s.config;
  OffloadPacket p;
  const auto& self = c.address_book[c.rank].nic;
  p.frame.src_mac = self.mac;
  p.frame.src_ip = self.ip;
  p.frame.udp_src_port = self.port;
  if (dsts.size() == 1) {
    const auto& d = c.address_book[dsts.front()].nic;
    p.frame.dst_mac = d.mac;
    p.frame.dst_ip = d.ip;
    p.frame.udp_dst_port = d.port;
  } else {
    p.frame.dst_mac = kMulticastMac;
    p.frame.dst_ip = kMulticastIp;
    p.frame.udp_dst_port = kNicPort;
  }
  p.frame.identification = s.next_identification++;
  p.coll.comm_id = c.comm_id;
  p.coll.comm_size = c.comm_size;
  p.coll.algo_type = c.algo;
  p.coll.node_type = c.node_type;
  p.coll.msg_type = type;
  p.coll.rank = c.rank;
  p.coll.operation = c.op.kind;
  p.coll.data_type = c.dtype;
  p.sub = DataSubHeader{s.epoch, range.lo, range.hi};
  if (value) p.elements = value->values;
  seal(p);
  return p;
}

inline void emit(NicState& s, NicOutput& out, MsgType type, RankRange range, const Vector* value,
                 std::vector<Rank> dsts) {
  out.emissions.push_back({nic_packet(s, type, range, value, dsts), std::move(dsts)});
}

inline void deliver(NicState& s, NicOutput& out, const Vector& result, Cycles now) {
  s.timer.release_time = now;
  const auto el = timer_elapsed(s.timer.offload_time, s.timer.release_time);
  out.host_delivery = make_result_packet(*s.cached_request, result, el.cycles);
  s.cached_request.reset();
  s.phase = Phase::Idle;
  s.step = 0;
  s.stage_sent = false;
  s.fired_this_epoch = false;
  s.up_sent = false;
  s.result_ready = false;
  s.pending_acks.clear();
  ++s.epoch;
}

inline std::optional<Buffered> take(std::optional<Buffered>& slot, std::uint16_t epoch) {
  if (!slot || slot->epoch != epoch) return std::nullopt;
  auto b = std::move(slot);
  slot.reset();
  return b;
}

// --- sequential -----------------------------------------------------------

inline void progress_sequential(NicState& s, NicOutput& out, Cycles now) {
  if (!s.cached_request || s.phase == Phase::AwaitingAck) return;
  const Rank j = s.config.rank;
  const auto p = s.config.comm_size;
  Vector result;
  if (j == 0) {
    result = s.local_value;
  } else if (auto pred = take(s.pred_buffer, s.epoch)) {
    result = apply_op(s.config.op, pred->value, s.local_value);
  } else {
    s.phase = Phase::AwaitingPred;
    return;
  }
  if (j + 1 < p) emit(s, out, MsgType::Data, {0, j}, &result, {static_cast<Rank>(j + 1)});
  if (j > 0) emit(s, out, MsgType::Ack, {j, j}, nullptr, {static_cast<Rank>(j - 1)});
  if (j + 1 < p) {
    s.result_acc = std::move(result);
    s.pending_acks.insert(static_cast<Rank>(j + 1));
    s.phase = Phase::AwaitingAck;
  } else {
    deliver(s, out, result, now);
  }
}

// --- recursive doubling ---------------------------------------------------

/// Folds the peer's stage-k value; the lower-range operand stays on the left.
inline void rd_fold(NicState& s, unsigned k, const Vector& v) {
  const auto& op = s.config.op;
  if (s.config.rank & (1u << k)) {
    s.result_acc = apply_op(op, v, s.result_acc);
    s.group_acc = apply_op(op, v, s.group_acc);
  } else {
    s.group_acc = apply_op(op, s.group_acc, v);
  }
  s.own_group_cache[k + 1] = s.group_acc;
}

inline Vector rd_resolve(NicState& s, NicOutput& out, unsigned k, const Buffered& b) {
  const auto n = static_cast<std::uint32_t>(b.range_hi - b.range_lo + 1);
  if (n == (1u << k)) return b.value;
  // Combined range: strip our own stage-k group total.
  Vector v = unapply_op(s.config.op, b.value, s.own_group_cache[k]);
  out.derivations.push_back({s.epoch, static_cast<std::uint16_t>(k), b.from, v});
  ++s.watermarks.derivations;
  return v;
}

inline void progress_recursive_doubling(NicState& s, NicOutput& out, Cycles now) {
  if (!s.cached_request) return;
  const Rank j = s.config.rank;
  const unsigned m = log2_floor(s.config.comm_size);
  const unsigned parity = s.epoch & 1;
  while (s.step < m) {
    const unsigned k = s.step;
    const auto peer = static_cast<Rank>(j ^ (1u << k));
    auto& slot = s.stage_buffers[k][parity];
    const bool ready = slot && slot->epoch == s.epoch;
    if (!s.stage_sent) {
      const bool exact = ready && slot->range_hi - slot->range_lo + 1u == (1u << k);
      const bool allowed = s.config.cascade_multicast_enabled || !s.fired_this_epoch;
      if (s.config.late_multicast_enabled && s.config.op.invertible() && exact && k + 1 < m && allowed) {
        // Peer already waiting: fold now and send one tagged multicast that
        // is both our stage-k reply and our stage-(k+1) send.
        auto b = take(slot, s.epoch);
        rd_fold(s, k, b->value);
        const auto next_peer = static_cast<Rank>(j ^ (1u << (k + 1)));
        auto g = rd_group(j, k + 1);
        emit(s, out, MsgType::TaggedData, g, &s.group_acc, {peer, next_peer});
        out.multicast_fired = true;
        ++s.watermarks.multicasts_fired;
        s.fired_this_epoch = true;
        s.step = static_cast<std::uint16_t>(k + 1);
        s.stage_sent = true;
        continue;
      }
      emit(s, out, MsgType::Data, rd_group(j, k), &s.group_acc, {peer});
      s.stage_sent = true;
    }
    auto b = take(slot, s.epoch);
    if (!b) {
      s.phase = Phase::Stage;
      return;
    }
    rd_fold(s, k, rd_resolve(s, out, k, *b));
    s.step = static_cast<std::uint16_t>(k + 1);
    s.stage_sent = false;
  }
  deliver(s, out, s.result_acc, now);
}

// --- binomial tree --------------------------------------------------------

inline void progress_binomial(NicState& s, NicOutput& out, Cycles now) {
  if (!s.cached_request) return;
  const Rank j = s.config.rank;
  const auto p = s.config.comm_size;
  const unsigned m = log2_floor(p);
  const unsigned t = std::min(trailing_ones(j), m);
  const auto& op = s.config.op;

  // Up phase: fold children strictly in step order, acking each on fold.
  while (s.step < t) {
    auto b = take(s.child_caches[s.step], s.epoch);
    if (!b) {
      s.phase = Phase::Up;
      return;
    }
    s.group_acc = apply_op(op, b->value, s.group_acc);
    emit(s, out, MsgType::Ack, {j, j}, nullptr, {b->from});
    ++s.step;
  }
  if (!s.up_sent) {
    if (t < m) {
      const auto parent = static_cast<Rank>(j + (1u << t));
      emit(s, out, MsgType::Data, {static_cast<std::uint16_t>(j - (1u << t) + 1), j}, &s.group_acc, {parent});
      s.pending_acks.insert(parent);
    }
    s.up_sent = true;
  }
  if (!s.result_ready) {
    if (j + 1u == (1u << t)) {
      s.result_acc = s.group_acc;
    } else if (auto d = take(s.down_buffer[s.epoch & 1], s.epoch)) {
      s.result_acc = apply_op(op, d->value, s.group_acc);
    } else {
      s.phase = Phase::AwaitingDown;
      return;
    }
    s.result_ready = true;
    for (unsigned k = t; k >= 1; --k) {
      const std::uint32_t target = j + (1u << (k - 1));
      if (target < p) emit(s, out, MsgType::Data, {0, j}, &s.result_acc, {static_cast<Rank>(target)});
    }
  }
  if (!s.pending_acks.empty()) {
    s.phase = Phase::AwaitingAck;
    return;
  }
  deliver(s, out, s.result_acc, now);
}

inline void progress(NicState& s, NicOutput& out, Cycles now) {
  switch (s.config.algo) {
    case AlgoType::Sequential: progress_sequential(s, out, now); break;
    case AlgoType::RecursiveDoubling: progress_recursive_doubling(s, out, now); break;
    case AlgoType::BinomialTree: progress_binomial(s, out, now); break;
  }
}

inline void check_buffered_count(const NicState& s, const std::optional<Buffered>& b, std::size_t count) {
  if (b && b->epoch == s.epoch && b->type != MsgType::Ack && b->value.size() != count)
    fail(ProtocolErrc::HeaderMismatch, s,
         "request count " + std::to_string(count) + " but buffered peer data has " + std::to_string(b->value.size()));
}

inline void on_host_request(NicState& s, const NicEvent& ev, NicOutput& out) {
  const auto& p = ev.packet;
  const auto& c = s.config;
  if (p.coll.msg_type != MsgType::ScanRequest)
    fail(ProtocolErrc::UnexpectedMessage, s, "host sent " + std::string(to_string(p.coll.msg_type)));
  check_common_header(s, p);
  if (p.coll.rank != c.rank || p.coll.node_type != c.node_type)
    fail(ProtocolErrc::HeaderMismatch, s,
         "request for rank " + std::to_string(p.coll.rank) + " as " + std::string(to_string(p.coll.node_type)));
  if (s.cached_request) fail(ProtocolErrc::Busy, s, "epoch " + std::to_string(s.epoch) + " still in progress");
  if (p.elements.size() > kMaxCount) fail(ProtocolErrc::HeaderMismatch, s, "count exceeds 361");
  const auto n = p.elements.size();
  check_buffered_count(s, s.pred_buffer, n);
  for (auto& st : s.stage_buffers)
    for (auto& sl : st) check_buffered_count(s, sl, n);
  for (auto& ch : s.child_caches) check_buffered_count(s, ch, n);
  for (auto& d : s.down_buffer) check_buffered_count(s, d, n);

  s.timer.counter = ev.now;
  s.timer.offload_time = ev.now;
  s.cached_request = p;
  s.local_value = p.payload();
  s.result_acc = s.local_value;
  s.group_acc = s.local_value;
  s.step = 0;
  s.stage_sent = false;
  s.fired_this_epoch = false;
  s.up_sent = false;
  s.result_ready = false;
  if (!s.own_group_cache.empty()) s.own_group_cache[0] = s.local_value;
  progress(s, out, ev.now);
}

inline void on_arrival(NicState& s, const NicEvent& ev, NicOutput& out) {
  const auto& p = ev.packet;
  if (!has_sub_header(p.coll.msg_type) || !p.sub)
    fail(ProtocolErrc::UnexpectedMessage, s, "peer sent " + std::string(to_string(p.coll.msg_type)));
  check_common_header(s, p);
  if (p.coll.rank == s.config.rank) fail(ProtocolErrc::UnexpectedMessage, s, "packet from self");
  const auto lead = epoch_lead(s, p);
  if (lead == 0 && s.cached_request && p.coll.msg_type != MsgType::Ack &&
      p.elements.size() != s.cached_request->elements.size())
    fail(ProtocolErrc::HeaderMismatch, s,
         "count " + std::to_string(p.elements.size()) + " differs from request count " +
             std::to_string(s.cached_request->elements.size()));

  Placement pl;
  switch (s.config.algo) {
    case AlgoType::Sequential: pl = classify_sequential(s, p, lead); break;
    case AlgoType::RecursiveDoubling: pl = classify_recursive_doubling(s, p, lead); break;
    case AlgoType::BinomialTree: pl = classify_binomial(s, p, lead); break;
  }

  // Committed from here on.
  s.timer.counter = ev.now;
  s.watermarks.epoch_lead = std::max(s.watermarks.epoch_lead, lead);
  Buffered b{p.sub->epoch, p.coll.rank, p.coll.msg_type, p.sub->range_lo, p.sub->range_hi, p.payload()};
  switch (pl.slot) {
    case Slot::Ack:
      s.pending_acks.erase(p.coll.rank);
      if (s.config.algo == AlgoType::Sequential) {
        deliver(s, out, s.result_acc, ev.now);
        return;
      }
      break;
    case Slot::Pred:
      s.pred_buffer = std::move(b);
      s.watermarks.pred_buffer = std::max<std::size_t>(s.watermarks.pred_buffer, 1);
      break;
    case Slot::Stage: {
      s.stage_buffers[pl.index][p.sub->epoch & 1] = std::move(b);
      std::size_t used = 0;
      for (auto& st : s.stage_buffers)
        for (auto& sl : st) used += sl.has_value();
      s.watermarks.stage_slots = std::max(s.watermarks.stage_slots, used);
      break;
    }
    case Slot::Child: {
      s.child_caches[pl.index] = std::move(b);
      const auto used = static_cast<std::size_t>(
          std::count_if(s.child_caches.begin(), s.child_caches.end(), [](auto& c) { return c.has_value(); }));
      s.watermarks.child_cache = std::max(s.watermarks.child_cache, used);
      break;
    }
    case Slot::Down:
      s.down_buffer[p.sub->epoch & 1] = std::move(b);
      break;
  }
  progress(s, out, ev.now);
}

}  // namespace detail

/// Applies one event in place. Validation failures (header mismatch,
/// overflow, epoch bounds) are detected before anything is modified.
inline NicOutput step(NicState& s, const NicEvent& ev) {
  if (ev.now < s.timer.counter)
    detail::fail(ProtocolErrc::ClockRegression, s,
                 "event at " + std::to_string(ev.now) + " after " + std::to_string(s.timer.counter));
  NicOutput out;
  if (ev.kind == NicEvent::Kind::HostRequest)
    detail::on_host_request(s, ev, out);
  else
    detail::on_arrival(s, ev, out);
  return out;
}

/// Pure form of step(): the input state is taken by value and returned
/// updated alongside the outputs.
inline std::pair<NicState, NicOutput> nic_transition(NicState state, const NicEvent& ev) {
  NicOutput out = step(state, ev);
  return {std::move(state), std::move(out)};
}

/// Owns one rank's state; the simulator drives a vector of these.
class NicEngine {
 public:
  explicit NicEngine(NicConfig cfg) : state_((validate(cfg), std::move(cfg))) {}

  NicOutput step(const NicEvent& ev) { return scansim::step(state_, ev); }
  const NicState& state() const noexcept { return state_; }
  const NicConfig& config() const noexcept { return state_.config; }
  std::string describe() const { return scansim::describe(state_); }

 private:
  NicState state_;
};

}  // namespace scansim

#endif  // SCANSIM_NIC_ENGINE_HPP
