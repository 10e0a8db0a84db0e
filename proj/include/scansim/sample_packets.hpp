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
 * @file  sample_packets.hpp
 * @brief Deterministic packets for hex dumps and golden files.
 */

#ifndef SCANSIM_SAMPLE_PACKETS_HPP
#define SCANSIM_SAMPLE_PACKETS_HPP

#include <cstdint>
#include <string_view>
#include <vector>

#include "nic_engine.hpp"
#include "packet.hpp"

namespace scansim {

inline MsgType parse_msg_type(std::string_view s) {
  for (auto m : {MsgType::ScanRequest, MsgType::Data, MsgType::Ack, MsgType::Result, MsgType::TaggedData}) {
    std::string lower(to_string(m));
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == to_string(m) || s == lower) return m;
  }
  throw Error("unknown msg_type '" + std::string(s) + "'");
}

struct PacketSpec {
  MsgType type = MsgType::Data;
  AlgoType algo = AlgoType::RecursiveDoubling;
  std::uint16_t p = 4;
  Rank rank = 1;
  Rank dst = 0;  // DATA / ACK target; TAGGED_DATA goes to the multicast group
  OpKind op = OpKind::Sum;
  std::uint16_t epoch = 0;
  std::uint16_t range_lo = 0;
  std::uint16_t range_hi = 1;
  std::vector<std::int32_t> values{1, 2, 3, 4};
  Cycles elapsed = 0;  // RESULT trailer
  std::uint16_t identification = 0;
};

/// SCAN_REQUEST and RESULT travel between rank's host and NIC; the others
/// leave rank's NIC. Addresses come from default_address().
inline OffloadPacket build_packet(const PacketSpec& s) {
  auto cfg = make_nic_config(s.algo, s.rank, s.p, ReduceOp{s.op});
  Vector v;
  v.values = s.values;
  auto req = make_scan_request(cfg, v);
  if (s.type == MsgType::ScanRequest) {
    req.frame.identification = s.identification;
    seal(req);
    return req;
  }
  if (s.type == MsgType::Result) {
    auto r = make_result_packet(req, v, s.elapsed);
    r.frame.identification = s.identification;
    seal(r);
    return r;
  }
  OffloadPacket p = req;
  const auto& self = cfg.address_book.at(s.rank).nic;
  p.frame.src_mac = self.mac;
  p.frame.src_ip = self.ip;
  p.frame.udp_src_port = self.port;
  if (s.type == MsgType::TaggedData) {
    p.frame.dst_mac = kMulticastMac;
    p.frame.dst_ip = kMulticastIp;
    p.frame.udp_dst_port = kNicPort;
  } else {
    const auto d = default_address(s.dst).nic;
    p.frame.dst_mac = d.mac;
    p.frame.dst_ip = d.ip;
    p.frame.udp_dst_port = d.port;
  }
  p.frame.identification = s.identification;
  p.coll.msg_type = s.type;
  p.sub = DataSubHeader{s.epoch, s.range_lo, s.range_hi};
  if (s.type == MsgType::Ack) p.elements.clear();
  seal(p);
  return p;
}

}  // namespace scansim

#endif  // SCANSIM_SAMPLE_PACKETS_HPP
