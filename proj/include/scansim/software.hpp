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
 * @file  software.hpp
 * @brief Host-level (non-offloaded) scan baselines.
 *
 * SoftwareEngine runs the same three communication patterns inside the
 * host's MPI library. Messages are buffered without bound (the MPI stack's
 * job), there are no NIC-level ACKs and no multicast, and a sequential rank
 * returns as soon as it has handed its partial to the next rank.
 *
 * Costs are expressed through the topology: software_topology() charges two
 * host crossings per inter-rank message and makes the host <-> library
 * crossing as cheap as one local processing step.
 */

#ifndef SCANSIM_SOFTWARE_HPP
#define SCANSIM_SOFTWARE_HPP

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include "fabric.hpp"
#include "nic_engine.hpp"

namespace scansim {

inline Topology software_topology(const Topology& t) {
  Topology s = t;
  const Cycles crossings = 2 * t.host_crossing_latency;
  s.link_latency_default += crossings;
  for (auto& [pair, lat] : s.link_overrides) lat += crossings;
  s.host_crossing_latency = t.nic_processing_latency;
  return s;
}

class SoftwareEngine {
 public:
  explicit SoftwareEngine(NicConfig cfg) : cfg_((validate(cfg), std::move(cfg))) {}

  const NicConfig& config() const noexcept { return cfg_; }

  NicOutput step(const NicEvent& ev) {
    NicOutput out;
    const auto& p = ev.packet;
    if (ev.kind == NicEvent::Kind::HostRequest) {
      if (request_) throw ProtocolError(ProtocolErrc::Busy, "software rank " + std::to_string(cfg_.rank));
      request_ = p;
      offload_ = ev.now;
      local_ = p.payload();
      acc_ = local_;
      result_ = local_;
      step_ = 0;
      up_sent_ = false;
      have_result_ = false;
    } else {
      if (!p.sub || p.coll.msg_type != MsgType::Data)
        throw ProtocolError(ProtocolErrc::UnexpectedMessage, "software rank got " + detail::pkt_label(p));
      const auto full = epoch_ + static_cast<std::uint16_t>(p.sub->epoch - static_cast<std::uint16_t>(epoch_));
      auto [it, fresh] = inbox_.try_emplace({full, tag_of(p)}, p.payload());
      if (!fresh) throw ProtocolError(ProtocolErrc::UnexpectedMessage, "duplicate " + detail::pkt_label(p));
    }
    progress(out, ev.now);
    return out;
  }

  std::string describe() const {
    if (!request_ && inbox_.empty()) return {};
    std::ostringstream os;
    os << "rank " << cfg_.rank << ": " << (request_ ? "BLOCKED" : "IDLE") << " epoch " << epoch_ << " step "
       << step_ << " inbox=" << inbox_.size();
    return os.str();
  }

 private:
  static constexpr int kDownTag = -1;

  // Sender rank identifies the stage / step / predecessor uniquely.
  int tag_of(const OffloadPacket& p) const {
    const Rank j = cfg_.rank, from = p.coll.rank;
    switch (cfg_.algo) {
      case AlgoType::Sequential: return 0;
      case AlgoType::RecursiveDoubling: return static_cast<int>(log2_floor(j ^ from));
      case AlgoType::BinomialTree: {
        const unsigned t = detail::trailing_ones(j);
        const unsigned k = log2_floor(j - from);
        return k < t ? static_cast<int>(k) : kDownTag;
      }
    }
    return 0;
  }

  std::optional<Vector> take(int tag) {
    auto it = inbox_.find({epoch_, tag});
    if (it == inbox_.end()) return std::nullopt;
    Vector v = std::move(it->second);
    inbox_.erase(it);
    return v;
  }

  void send(NicOutput& out, detail::RankRange range, const Vector& v, Rank dst) {
    OffloadPacket p;
    const auto& self = cfg_.address_book[cfg_.rank].nic;
    const auto& d = cfg_.address_book[dst].nic;
    p.frame.src_mac = self.mac;
    p.frame.src_ip = self.ip;
    p.frame.udp_src_port = self.port;
    p.frame.dst_mac = d.mac;
    p.frame.dst_ip = d.ip;
    p.frame.udp_dst_port = d.port;
    p.coll.comm_size = cfg_.comm_size;
    p.coll.comm_id = cfg_.comm_id;
    p.coll.algo_type = cfg_.algo;
    p.coll.node_type = cfg_.node_type;
    p.coll.msg_type = MsgType::Data;
    p.coll.rank = cfg_.rank;
    p.coll.operation = cfg_.op.kind;
    p.coll.data_type = cfg_.dtype;
    p.sub = DataSubHeader{static_cast<std::uint16_t>(epoch_), range.lo, range.hi};
    p.elements = v.values;
    seal(p);
    out.emissions.push_back({std::move(p), {dst}});
  }

  void deliver(NicOutput& out, Cycles now) {
    out.host_delivery = make_result_packet(*request_, result_, timer_elapsed(offload_, now).cycles);
    request_.reset();
    ++epoch_;
  }

  void progress(NicOutput& out, Cycles now) {
    if (!request_) return;
    const Rank j = cfg_.rank;
    const auto p = cfg_.comm_size;
    const unsigned m = log2_floor(p);
    const auto& op = cfg_.op;
    switch (cfg_.algo) {
      case AlgoType::Sequential: {
        if (j > 0) {
          auto pred = take(0);
          if (!pred) return;
          result_ = apply_op(op, *pred, local_);
        }
        if (j + 1 < p) send(out, {0, j}, result_, static_cast<Rank>(j + 1));
        deliver(out, now);
        return;
      }
      case AlgoType::RecursiveDoubling: {
        while (step_ < m) {
          const unsigned k = step_;
          if (!up_sent_) {
            send(out, detail::rd_group(j, k), acc_, static_cast<Rank>(j ^ (1u << k)));
            up_sent_ = true;
          }
          auto v = take(static_cast<int>(k));
          if (!v) return;
          if (j & (1u << k)) {
            result_ = apply_op(op, *v, result_);
            acc_ = apply_op(op, *v, acc_);
          } else {
            acc_ = apply_op(op, acc_, *v);
          }
          ++step_;
          up_sent_ = false;
        }
        deliver(out, now);
        return;
      }
      case AlgoType::BinomialTree: {
        const unsigned t = std::min(detail::trailing_ones(j), m);
        while (step_ < t) {
          auto v = take(static_cast<int>(step_));
          if (!v) return;
          acc_ = apply_op(op, *v, acc_);
          ++step_;
        }
        if (!up_sent_) {
          if (t < m) send(out, {static_cast<std::uint16_t>(j - (1u << t) + 1), j}, acc_, static_cast<Rank>(j + (1u << t)));
          up_sent_ = true;
        }
        if (!have_result_) {
          if (j + 1u == (1u << t)) {
            result_ = acc_;
          } else {
            auto d = take(kDownTag);
            if (!d) return;
            result_ = apply_op(op, *d, acc_);
          }
          have_result_ = true;
          for (unsigned k = t; k >= 1; --k)
            if (j + (1u << (k - 1)) < p) send(out, {0, j}, result_, static_cast<Rank>(j + (1u << (k - 1))));
        }
        deliver(out, now);
        return;
      }
    }
  }

  NicConfig cfg_;
  std::optional<OffloadPacket> request_;
  std::uint64_t epoch_ = 0;
  Cycles offload_ = 0;
  Vector local_, acc_, result_;
  unsigned step_ = 0;
  bool up_sent_ = false;
  bool have_result_ = false;
  std::map<std::pair<std::uint64_t, int>, Vector> inbox_;
};

}  // namespace scansim

#endif  // SCANSIM_SOFTWARE_HPP
