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
 * @file  fabric.hpp
 * @brief Deterministic discrete-event model of the offload network.
 *
 * Links are logical any-to-any with a fixed per-pair latency, so delivery
 * between a pair is FIFO. A multicast is one send and one delivery per
 * destination. Events are ordered by (time, sequence); the sequence number
 * is assigned when an event is scheduled, which makes every run a pure
 * function of its inputs.
 *
 * Every emission is encoded to bytes and decoded again at the receiver, so
 * NIC-to-NIC traffic always crosses the real wire format.
 */

#ifndef SCANSIM_FABRIC_HPP
#define SCANSIM_FABRIC_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "nic_engine.hpp"
#include "packet.hpp"
#include "schedule.hpp"

namespace scansim {

// ---------------------------------------------------------------------------
// Topology

struct Topology {
  std::uint16_t p = 1;
  /// Ranks absent from the book have no NIC; traffic to them is dropped.
  std::map<Rank, RankAddress> address_book;
  Cycles link_latency_default = 125;
  std::map<std::pair<Rank, Rank>, Cycles> link_overrides;
  Cycles host_crossing_latency = 1250;
  Cycles nic_processing_latency = 10;
  /// Extra uniform latency in [0, jitter] per delivery, seeded; per-pair
  /// FIFO is preserved by never delivering before the pair's previous packet.
  Cycles jitter = 0;
  std::uint64_t jitter_seed = 0;

  static Topology uniform(std::uint16_t p, Cycles link = 125, Cycles host = 1250, Cycles processing = 10) {
    Topology t;
    t.p = p;
    for (Rank r = 0; r < p; ++r) t.address_book.emplace(r, default_address(r));
    t.link_latency_default = link;
    t.host_crossing_latency = host;
    t.nic_processing_latency = processing;
    return t;
  }

  Cycles link_latency(Rank src, Rank dst) const {
    if (auto it = link_overrides.find({src, dst}); it != link_overrides.end()) return it->second;
    return link_latency_default;
  }

  bool present(Rank r) const { return address_book.contains(r); }
};

// ---------------------------------------------------------------------------
// Errors

enum class SimErrc { Deadlock, BadDestination, NicFailure, BadConfig };

class SimulationError : public Error {
 public:
  SimulationError(SimErrc code, const std::string& what, std::optional<ProtocolErrc> protocol = std::nullopt,
                  std::string report = {})
      : Error(what), code_(code), protocol_(protocol), report_(std::move(report)) {}
  SimErrc code() const noexcept { return code_; }
  /// Set when a NIC transition failed.
  std::optional<ProtocolErrc> protocol_code() const noexcept { return protocol_; }
  /// Deadlock summary (see deadlock_report()).
  const std::string& report() const noexcept { return report_; }

 private:
  SimErrc code_;
  std::optional<ProtocolErrc> protocol_;
  std::string report_;
};

// ---------------------------------------------------------------------------
// Trace

enum class TraceKind { Issue, Request, Send, Deliver, Drop, Result, Receive };

inline std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Issue: return "ISSUE";
    case TraceKind::Request: return "REQUEST";
    case TraceKind::Send: return "SEND";
    case TraceKind::Deliver: return "DELIVER";
    case TraceKind::Drop: return "DROP";
    case TraceKind::Result: return "RESULT";
    case TraceKind::Receive: return "RECEIVE";
  }
  return "?";
}

inline constexpr int kHostEnd = -1;

struct TraceRecord {
  Cycles time = 0;
  TraceKind kind = TraceKind::Issue;
  int src = kHostEnd;           // rank, or kHostEnd
  std::vector<int> dst;         // ranks, or {kHostEnd}
  MsgType msg_type = MsgType::ScanRequest;
  std::uint16_t epoch = 0;
  std::optional<std::pair<std::uint16_t, std::uint16_t>> range;
  std::size_t bytes = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

/// Tab-separated: time kind src dst msg_type epoch range_lo range_hi bytes.
inline std::string format_trace_line(const TraceRecord& r) {
  auto end = [](int v) { return v == kHostEnd ? std::string("host") : std::to_string(v); };
  std::string dst;
  for (std::size_t i = 0; i < r.dst.size(); ++i) dst += (i ? "," : "") + end(r.dst[i]);
  std::string out = std::to_string(r.time) + '\t' + std::string(to_string(r.kind)) + '\t' + end(r.src) + '\t' + dst +
                    '\t' + std::string(to_string(r.msg_type)) + '\t' + std::to_string(r.epoch) + '\t';
  if (r.range)
    out += std::to_string(r.range->first) + '\t' + std::to_string(r.range->second);
  else
    out += "-\t-";
  out += '\t' + std::to_string(r.bytes) + '\n';
  return out;
}

inline std::string format_trace(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace) out += format_trace_line(r);
  return out;
}

/// Explicit schedule reproducing the ISSUE events of a recorded trace.
inline ArrivalSchedule schedule_from_trace(const std::vector<TraceRecord>& trace, std::uint32_t iterations) {
  ArrivalSchedule s;
  s.iterations = iterations;
  for (const auto& r : trace)
    if (r.kind == TraceKind::Issue) s.explicit_times[static_cast<Rank>(r.dst.front())].push_back(r.time);
  return s;
}

// ---------------------------------------------------------------------------
// Counters

struct MsgCounters {
  std::array<std::uint64_t, 5> sent{};       // by msg_type; a multicast counts once
  std::array<std::uint64_t, 5> delivered{};  // by msg_type; once per destination
  std::uint64_t dropped = 0;

  std::uint64_t sent_of(MsgType t) const { return sent[static_cast<std::size_t>(t)]; }
  std::uint64_t delivered_of(MsgType t) const { return delivered[static_cast<std::size_t>(t)]; }
  std::uint64_t total_sent() const {
    std::uint64_t n = 0;
    for (auto v : sent) n += v;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Event queue + links

struct SimEvent {
  enum class Kind { HostIssue, NicRequest, Delivery, HostReceive };
  Cycles time = 0;
  std::uint64_t sequence = 0;
  Kind kind = Kind::HostIssue;
  Rank rank = 0;  // destination NIC / host
  Rank src = 0;
  std::shared_ptr<const std::vector<std::uint8_t>> wire;  // Delivery
  std::shared_ptr<const OffloadPacket> packet;            // NicRequest, HostReceive

  bool operator>(const SimEvent& o) const {
    return time != o.time ? time > o.time : sequence > o.sequence;
  }
};

struct ScheduledDelivery {
  Rank dst = 0;
  Cycles at = 0;
  friend bool operator==(const ScheduledDelivery&, const ScheduledDelivery&) = default;
};

/// Links, event queue, trace and counters. Knows nothing about protocols.
class Fabric {
 public:
  explicit Fabric(Topology topo) : topo_(std::move(topo)), rng_state_(topo_.jitter_seed) {
    for (const auto& [pair, lat] : topo_.link_overrides)
      if (pair.first != pair.second && lat == 0)
        throw SimulationError(SimErrc::BadConfig, "link latency must be >= 1 between distinct ranks");
    if (topo_.link_latency_default == 0)
      throw SimulationError(SimErrc::BadConfig, "link latency must be >= 1 between distinct ranks");
  }

  const Topology& topology() const noexcept { return topo_; }

  void schedule(SimEvent ev) {
    ev.sequence = next_seq_++;
    queue_.push(std::move(ev));
  }

  bool empty() const { return queue_.empty(); }
  SimEvent pop() {
    SimEvent ev = queue_.top();
    queue_.pop();
    return ev;
  }

  /// One send from `src` delivered to every rank in `dsts`. Returns the
  /// delivery times; destinations without a NIC are dropped.
  std::vector<ScheduledDelivery> emit_multicast(Rank src, const OffloadPacket& pkt, std::span<const Rank> dsts,
                                                Cycles now) {
    if (dsts.empty()) throw SimulationError(SimErrc::BadDestination, "emission with no destination");
    for (auto d : dsts)
      if (d >= topo_.p || d == src)
        throw SimulationError(SimErrc::BadDestination,
                              "rank " + std::to_string(src) + " sent to invalid rank " + std::to_string(d));
    auto wire = std::make_shared<const std::vector<std::uint8_t>>(encode_packet(pkt));
    const auto type = static_cast<std::size_t>(pkt.coll.msg_type);
    ++counters_.sent[type];
    if (count_window_) ++window_counters_.sent[type];
    record({now, TraceKind::Send, src, {dsts.begin(), dsts.end()}, pkt.coll.msg_type, Fabric::epoch_of(pkt),
            range_of(pkt), wire->size()});

    std::vector<ScheduledDelivery> out;
    for (auto d : dsts) {
      if (!topo_.present(d)) {
        ++counters_.dropped;
        record({now, TraceKind::Drop, src, {d}, pkt.coll.msg_type, Fabric::epoch_of(pkt), range_of(pkt),
                wire->size()});
        continue;
      }
      Cycles at = now + topo_.link_latency(src, d) + topo_.nic_processing_latency;
      if (topo_.jitter) {
        at += next_random() % (topo_.jitter + 1);
        auto [it, fresh] = last_delivery_.try_emplace({src, d}, at);
        if (!fresh) it->second = at = std::max(at, it->second + 1);
      }
      SimEvent ev;
      ev.time = at;
      ev.kind = SimEvent::Kind::Delivery;
      ev.rank = d;
      ev.src = src;
      ev.wire = wire;
      schedule(std::move(ev));
      out.push_back({d, at});
    }
    return out;
  }

  void count_delivery(MsgType t) { ++counters_.delivered[static_cast<std::size_t>(t)]; }

  void record(TraceRecord r) {
    if (tracing_) trace_.push_back(std::move(r));
  }

  static std::uint16_t epoch_of(const OffloadPacket& p) { return p.sub ? p.sub->epoch : std::uint16_t{0}; }

  static std::optional<std::pair<std::uint16_t, std::uint16_t>> range_of(const OffloadPacket& p) {
    if (!p.sub) return std::nullopt;
    return std::pair{p.sub->range_lo, p.sub->range_hi};
  }

  void set_tracing(bool on) { tracing_ = on; }
  /// Emissions are also tallied into window_counters() while enabled.
  void set_count_window(bool on) { count_window_ = on; }

  const MsgCounters& counters() const noexcept { return counters_; }
  const MsgCounters& window_counters() const noexcept { return window_counters_; }
  std::vector<TraceRecord>& trace() noexcept { return trace_; }

 private:
  // splitmix64; the fabric's only source of randomness.
  std::uint64_t next_random() {
    std::uint64_t z = (rng_state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  Topology topo_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<>> queue_;
  std::uint64_t next_seq_ = 0;
  std::map<std::pair<Rank, Rank>, Cycles> last_delivery_;
  std::uint64_t rng_state_;
  MsgCounters counters_;
  MsgCounters window_counters_;
  bool count_window_ = true;
  bool tracing_ = true;
  std::vector<TraceRecord> trace_;
};

// ---------------------------------------------------------------------------
// Simulation driver

/// Per rank, per iteration timing as seen by host and NIC.
struct IterationRecord {
  Cycles issue = 0;
  Cycles offload = 0;  // NIC accepted the request
  Cycles release = 0;  // NIC handed the RESULT to the host
  Cycles receive = 0;  // host got it
  Cycles nic_elapsed = 0;
  Vector result;

  Cycles host_latency() const { return receive - issue; }
};

struct RankDerivation {
  Rank rank = 0;
  Derivation derivation;
};

struct SimResult {
  std::vector<TraceRecord> trace;
  std::vector<std::vector<IterationRecord>> per_rank;  // [rank][iteration]
  MsgCounters counters;
  MsgCounters window_counters;  // emissions from iterations >= window_start
  std::vector<RankDerivation> derivations;
  std::vector<NicWatermarks> watermarks;  // empty for engines without them
  Cycles end_time = 0;
  std::uint64_t events = 0;

  /// Time the last host received its final RESULT.
  Cycles last_result_time() const {
    Cycles t = 0;
    for (auto& r : per_rank)
      if (!r.empty()) t = std::max(t, r.back().receive);
    return t;
  }
};

using InputFn = std::function<Vector(Rank, std::uint32_t)>;

struct SimOptions {
  std::uint64_t event_budget = 200'000'000;
  bool trace = true;
  bool keep_results = true;
  /// Emissions made while the sender is in an iteration >= this go to
  /// SimResult::window_counters.
  std::uint32_t window_start = 0;
  /// Called for every RESULT the host receives, before it is discarded.
  std::function<void(Rank, std::uint32_t, const OffloadPacket&)> on_result;
};

/// Joined describe() lines of every present engine; empty when all are idle
/// with nothing buffered.
template <class Engine>
std::string deadlock_report(const std::vector<Engine>& engines, const Topology& topo) {
  std::string out;
  for (std::size_t r = 0; r < engines.size(); ++r) {
    if (!topo.present(static_cast<Rank>(r))) continue;
    auto line = engines[r].describe();
    if (!line.empty()) out += line + '\n';
  }
  return out;
}

/// Drives one engine per rank plus a blocking host model per rank over a
/// Fabric until quiescence.
///
/// Engine requirements: `NicOutput step(const NicEvent&)`,
/// `const NicConfig& config() const` and `std::string describe() const`;
/// `state().watermarks` is collected when present.
template <class Engine>
class Simulation {
 public:
  Simulation(Topology topo, std::vector<Engine> engines, ArrivalSchedule schedule, InputFn inputs,
             SimOptions options = {})
      : fabric_(std::move(topo)),
        engines_(std::move(engines)),
        schedule_(std::move(schedule)),
        inputs_(std::move(inputs)),
        options_(std::move(options)) {
    const auto p = fabric_.topology().p;
    if (engines_.size() != p)
      throw SimulationError(SimErrc::BadConfig, std::to_string(engines_.size()) + " engines for " +
                                                    std::to_string(p) + " ranks");
    if (schedule_.iterations == 0) throw SimulationError(SimErrc::BadConfig, "schedule has no iterations");
    fabric_.set_tracing(options_.trace);
    hosts_.resize(p);
    result_.per_rank.resize(p);
  }

  SimResult run() {
    const auto& topo = fabric_.topology();
    for (Rank r = 0; r < topo.p; ++r) {
      if (!topo.present(r) || schedule_.silent.contains(r)) continue;
      schedule_issue(r, schedule_.first(r));
    }
    std::uint64_t events = 0;
    while (!fabric_.empty()) {
      if (++events > options_.event_budget)
        throw SimulationError(SimErrc::Deadlock, "event budget exhausted", std::nullopt,
                              deadlock_report(engines_, topo));
      auto ev = fabric_.pop();
      now_ = ev.time;
      dispatch(ev);
    }
    for (Rank r = 0; r < topo.p; ++r) {
      if (!topo.present(r) || schedule_.silent.contains(r)) continue;
      if (hosts_[r].completed < schedule_.iterations) {
        auto report = deadlock_report(engines_, topo);
        throw SimulationError(SimErrc::Deadlock,
                              "quiescent with rank " + std::to_string(r) + " at " +
                                  std::to_string(hosts_[r].completed) + "/" + std::to_string(schedule_.iterations) +
                                  " scans:\n" + report,
                              std::nullopt, report);
      }
    }
    result_.trace = std::move(fabric_.trace());
    result_.counters = fabric_.counters();
    result_.window_counters = fabric_.window_counters();
    result_.end_time = now_;
    result_.events = events;
    if constexpr (requires(const Engine& e) { e.state().watermarks; }) {
      for (auto& e : engines_) result_.watermarks.push_back(e.state().watermarks);
    }
    return std::move(result_);
  }

  const std::vector<Engine>& engines() const noexcept { return engines_; }

 private:
  struct Host {
    std::uint32_t issued = 0;
    std::uint32_t completed = 0;
    Cycles issue_time = 0;
  };

  void schedule_issue(Rank r, Cycles at) {
    SimEvent ev;
    ev.time = at;
    ev.kind = SimEvent::Kind::HostIssue;
    ev.rank = r;
    fabric_.schedule(std::move(ev));
  }

  std::uint16_t iter_epoch(Rank r) const { return static_cast<std::uint16_t>(hosts_[r].issued - 1); }

  void dispatch(const SimEvent& ev) {
    const auto& topo = fabric_.topology();
    switch (ev.kind) {
      case SimEvent::Kind::HostIssue: {
        auto& h = hosts_[ev.rank];
        const auto iter = h.issued++;
        h.issue_time = now_;
        auto req = std::make_shared<const OffloadPacket>(make_scan_request(engines_[ev.rank].config(), inputs_(ev.rank, iter)));
        const auto len = kEthHeaderLen + req->frame.total_length;
        fabric_.record({now_, TraceKind::Issue, kHostEnd, {ev.rank}, MsgType::ScanRequest, iter_epoch(ev.rank),
                        std::nullopt, len});
        result_.per_rank[ev.rank].push_back({});
        result_.per_rank[ev.rank].back().issue = now_;
        SimEvent next;
        next.time = now_ + topo.host_crossing_latency;
        next.kind = SimEvent::Kind::NicRequest;
        next.rank = ev.rank;
        next.packet = std::move(req);
        fabric_.schedule(std::move(next));
        break;
      }
      case SimEvent::Kind::NicRequest: {
        fabric_.record({now_, TraceKind::Request, kHostEnd, {ev.rank}, MsgType::ScanRequest, iter_epoch(ev.rank),
                        std::nullopt, kEthHeaderLen + ev.packet->frame.total_length});
        current_record(ev.rank).offload = now_;
        drive(ev.rank, NicEvent::host_request(*ev.packet, now_));
        break;
      }
      case SimEvent::Kind::Delivery: {
        OffloadPacket pkt;
        try {
          pkt = decode_packet(*ev.wire);
        } catch (const CodecError& e) {
          throw SimulationError(SimErrc::NicFailure, "t=" + std::to_string(now_) + " rank " +
                                                         std::to_string(ev.rank) + ": undecodable frame: " + e.what());
        }
        fabric_.count_delivery(pkt.coll.msg_type);
        fabric_.record({now_, TraceKind::Deliver, ev.src, {ev.rank}, pkt.coll.msg_type, Fabric::epoch_of(pkt),
                        Fabric::range_of(pkt), ev.wire->size()});
        drive(ev.rank, NicEvent::arrival(std::move(pkt), now_));
        break;
      }
      case SimEvent::Kind::HostReceive: {
        auto& h = hosts_[ev.rank];
        const auto iter = h.completed++;
        fabric_.record({now_, TraceKind::Receive, ev.rank, {kHostEnd}, MsgType::Result, static_cast<std::uint16_t>(iter),
                        std::nullopt, kEthHeaderLen + ev.packet->frame.total_length});
        auto& rec = current_record(ev.rank);
        rec.receive = now_;
        rec.nic_elapsed = ev.packet->elapsed_trailer.value_or(0);
        if (options_.keep_results) rec.result = ev.packet->payload();
        if (options_.on_result) options_.on_result(ev.rank, iter, *ev.packet);
        if (h.issued < schedule_.iterations) schedule_issue(ev.rank, schedule_.next(ev.rank, h.issued, now_));
        break;
      }
    }
  }

  IterationRecord& current_record(Rank r) { return result_.per_rank[r].back(); }

  void drive(Rank r, const NicEvent& ev) {
    NicOutput out;
    try {
      out = engines_[r].step(ev);
    } catch (const ProtocolError& e) {
      throw SimulationError(SimErrc::NicFailure,
                            "t=" + std::to_string(now_) + " rank " + std::to_string(r) + " on " +
                                (ev.kind == NicEvent::Kind::HostRequest ? std::string("host request")
                                                                        : detail::pkt_label(ev.packet)) +
                                ": " + e.what(),
                            e.code());
    }
    fabric_.set_count_window(hosts_[r].issued > options_.window_start);
    for (auto& em : out.emissions) fabric_.emit_multicast(r, em.packet, em.destinations, now_);
    for (auto& d : out.derivations) result_.derivations.push_back({r, std::move(d)});
    if (out.host_delivery) {
      const auto& pkt = *out.host_delivery;
      current_record(r).release = now_;
      fabric_.record({now_, TraceKind::Result, r, {kHostEnd}, MsgType::Result, iter_epoch(r), std::nullopt,
                      kEthHeaderLen + pkt.frame.total_length});
      SimEvent ev2;
      ev2.time = now_ + fabric_.topology().host_crossing_latency;
      ev2.kind = SimEvent::Kind::HostReceive;
      ev2.rank = r;
      ev2.packet = std::make_shared<const OffloadPacket>(std::move(*out.host_delivery));
      fabric_.schedule(std::move(ev2));
    }
  }

  Fabric fabric_;
  std::vector<Engine> engines_;
  ArrivalSchedule schedule_;
  InputFn inputs_;
  SimOptions options_;
  std::vector<Host> hosts_;
  SimResult result_;
  Cycles now_ = 0;
};

}  // namespace scansim

#endif  // SCANSIM_FABRIC_HPP
