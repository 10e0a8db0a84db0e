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

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "scansim/nic_engine.hpp"
#include "scansim/scan_core.hpp"

using namespace scansim;

namespace {

// Drives engines directly: every pending host request and every per-pair
// FIFO channel head is an enabled action; the rng picks one at a time.
// Packets cross a real encode/decode on the way.
struct Harness {
  std::vector<NicEngine> nics;
  std::map<std::pair<Rank, Rank>, std::deque<std::vector<std::uint8_t>>> channels;
  std::vector<std::uint32_t> issued, completed;
  std::vector<std::vector<Vector>> inputs;   // [iter][rank]
  std::vector<std::vector<Vector>> results;  // [rank][iter]
  std::array<std::uint64_t, 5> sent{};
  std::uint64_t fired = 0, derived = 0;
  Cycles now = 0;
  std::uint32_t iterations;

  Harness(AlgoType algo, std::uint16_t p, OpKind op, std::uint32_t iters, bool late = true, bool cascade = false,
          std::uint32_t seed = 1)
      : issued(p), completed(p), results(p), iterations(iters) {
    for (Rank r = 0; r < p; ++r) {
      auto c = make_nic_config(algo, r, p, ReduceOp{op});
      c.late_multicast_enabled = late;
      c.cascade_multicast_enabled = cascade;
      nics.emplace_back(c);
    }
    std::mt19937 rng(seed);
    std::uniform_int_distribution<std::int32_t> d(std::numeric_limits<std::int32_t>::min(),
                                                  std::numeric_limits<std::int32_t>::max());
    inputs.resize(iters);
    for (auto& row : inputs)
      for (Rank r = 0; r < p; ++r) row.push_back(Vector{d(rng), d(rng)});
  }

  void apply(Rank r, const NicOutput& out) {
    for (auto& e : out.emissions) {
      ++sent[static_cast<std::size_t>(e.packet.coll.msg_type)];
      const auto wire = encode_packet(e.packet);
      for (auto d : e.destinations) channels[{r, d}].push_back(wire);
    }
    fired += out.multicast_fired;
    derived += out.derivations.size();
    if (out.host_delivery) {
      EXPECT_EQ(out.host_delivery->coll.msg_type, MsgType::Result);
      results[r].push_back(out.host_delivery->payload());
      ++completed[r];
    }
  }

  void request(Rank r) {
    const auto iter = issued[r]++;
    apply(r, nics[r].step(NicEvent::host_request(make_scan_request(nics[r].config(), inputs[iter][r]), ++now)));
  }

  bool step_random(std::mt19937& rng) {
    std::vector<std::pair<Rank, Rank>> heads;
    std::vector<Rank> hosts;
    for (auto& [k, q] : channels)
      if (!q.empty()) heads.push_back(k);
    for (Rank r = 0; r < nics.size(); ++r)
      if (issued[r] == completed[r] && issued[r] < iterations) hosts.push_back(r);
    const auto n = heads.size() + hosts.size();
    if (n == 0) return false;
    const auto pick = rng() % n;
    if (pick < hosts.size()) {
      request(hosts[pick]);
    } else {
      auto [s, d] = heads[pick - hosts.size()];
      auto wire = std::move(channels[{s, d}].front());
      channels[{s, d}].pop_front();
      apply(d, nics[d].step(NicEvent::arrival(decode_packet(wire), ++now)));
    }
    return true;
  }

  void run(std::mt19937& rng) {
    while (step_random(rng)) {
    }
  }

  void check_results(OpKind op) const {
    for (std::uint32_t it = 0; it < iterations; ++it) {
      auto want = oracle_inclusive_scan(ReduceOp{op}, inputs[it]);
      for (Rank r = 0; r < nics.size(); ++r) {
        ASSERT_EQ(results[r].size(), iterations) << "rank " << r;
        ASSERT_EQ(results[r][it], want[r]) << "rank " << r << " iter " << it;
      }
    }
  }

  std::uint64_t sent_of(MsgType t) const { return sent[static_cast<std::size_t>(t)]; }
};

std::uint16_t lg(std::uint16_t p) { return static_cast<std::uint16_t>(log2_floor(p)); }

}  // namespace

TEST(Timer, Examples) {
  EXPECT_EQ(timer_elapsed(100, 350).cycles, 250u);
  EXPECT_EQ(timer_elapsed(100, 350).nanoseconds, 2000u);
  EXPECT_EQ(timer_elapsed(77, 77).cycles, 0u);
  EXPECT_EQ(timer_elapsed(77, 77).nanoseconds, 0u);
  EXPECT_EQ(timer_elapsed(std::numeric_limits<std::uint64_t>::max(), 1).cycles, 2u);
  EXPECT_EQ(timer_elapsed(std::numeric_limits<std::uint64_t>::max(), 1).nanoseconds, 16u);
}

TEST(Roles, Examples) {
  EXPECT_EQ(assign_node_roles(AlgoType::Sequential, 0, 4), NodeType::First);
  EXPECT_EQ(assign_node_roles(AlgoType::Sequential, 3, 4), NodeType::Last);
  EXPECT_EQ(assign_node_roles(AlgoType::Sequential, 2, 4), NodeType::Middle);
  EXPECT_EQ(assign_node_roles(AlgoType::RecursiveDoubling, 2, 4), NodeType::Peer);
  EXPECT_EQ(assign_node_roles(AlgoType::BinomialTree, 7, 8), NodeType::Root);
  EXPECT_EQ(assign_node_roles(AlgoType::BinomialTree, 5, 8), NodeType::Internal);
  EXPECT_EQ(assign_node_roles(AlgoType::BinomialTree, 4, 8), NodeType::Leaf);
  EXPECT_THROW(assign_node_roles(AlgoType::Sequential, 4, 4), ProtocolError);
  EXPECT_THROW(assign_node_roles(AlgoType::RecursiveDoubling, 0, 6), ProtocolError);
  EXPECT_THROW(assign_node_roles(AlgoType::BinomialTree, 0, 3), ProtocolError);
}

TEST(Roles, BinomialRolesMatchUpPhaseReceivers) {
  // A rank receives at up step k iff its low k+1 bits are all ones; leaves
  // are exactly the ranks that never receive.
  for (std::uint16_t p = 2; p <= 64; p *= 2)
    for (Rank j = 0; j < p; ++j) {
      bool receives = false;
      for (unsigned k = 0; (1u << k) < p; ++k) {
        const unsigned mask = (1u << (k + 1)) - 1;
        if ((j & mask) == mask && j >= (1u << k)) receives = true;
      }
      const auto role = assign_node_roles(AlgoType::BinomialTree, j, p);
      const auto want = j == p - 1 ? NodeType::Root : receives ? NodeType::Internal : NodeType::Leaf;
      EXPECT_EQ(role, want) << "p=" << p << " j=" << j;
    }
}

TEST(Engine, SingleRankDeliversImmediately) {
  for (auto algo : {AlgoType::Sequential, AlgoType::RecursiveDoubling, AlgoType::BinomialTree}) {
    NicEngine e(make_nic_config(algo, 0, 1));
    auto out = e.step(NicEvent::host_request(make_scan_request(e.config(), Vector{42}), 5));
    EXPECT_TRUE(out.emissions.empty());
    ASSERT_TRUE(out.host_delivery);
    EXPECT_EQ(out.host_delivery->payload(), Vector{42});
    EXPECT_EQ(out.host_delivery->elapsed_trailer, 0u);
  }
}

TEST(Engine, SequentialRankZeroSendsAndWaits) {
  NicEngine e(make_nic_config(AlgoType::Sequential, 0, 4));
  auto out = e.step(NicEvent::host_request(make_scan_request(e.config(), Vector{1}), 0));
  ASSERT_EQ(out.emissions.size(), 1u);
  EXPECT_EQ(out.emissions[0].packet.coll.msg_type, MsgType::Data);
  EXPECT_EQ(out.emissions[0].destinations, std::vector<Rank>{1});
  EXPECT_FALSE(out.host_delivery);
}

TEST(Engine, HeaderMismatchLeavesStateUnchanged) {
  NicState s(make_nic_config(AlgoType::Sequential, 1, 4));
  step(s, NicEvent::host_request(make_scan_request(s.config, Vector{1}), 0));
  const auto before = describe(s);
  NicEngine peer(make_nic_config(AlgoType::Sequential, 0, 4));
  auto data = peer.step(NicEvent::host_request(make_scan_request(peer.config(), Vector{1}), 0)).emissions.at(0).packet;
  data.coll.comm_size = 8;
  data.coll.rank = 0;
  seal(data);
  try {
    step(s, NicEvent::arrival(data, 1));
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_EQ(e.code(), ProtocolErrc::HeaderMismatch);
  }
  EXPECT_EQ(describe(s), before);
  EXPECT_FALSE(s.pred_buffer);

  // pure form returns a new state and leaves the argument untouched
  NicState fresh(make_nic_config(AlgoType::Sequential, 0, 2));
  auto [next, out] = nic_transition(fresh, NicEvent::host_request(make_scan_request(fresh.config, Vector{3}), 0));
  EXPECT_EQ(fresh.phase, Phase::Idle);
  EXPECT_NE(next.phase, Phase::Idle);
  EXPECT_EQ(out.emissions.size(), 1u);
}

TEST(Engine, NodeTypeIsValidated) {
  auto c = make_nic_config(AlgoType::BinomialTree, 4, 8);
  c.node_type = NodeType::Internal;
  EXPECT_THROW(NicEngine{c}, ProtocolError);
}

TEST(Sequential, AckGatesRankZero) {
  // p=2: rank 1 requests 1000 cycles after rank 0's DATA arrives.
  NicEngine r0(make_nic_config(AlgoType::Sequential, 0, 2)), r1(make_nic_config(AlgoType::Sequential, 1, 2));
  auto o0 = r0.step(NicEvent::host_request(make_scan_request(r0.config(), Vector{5}), 0));
  auto o1 = r1.step(NicEvent::arrival(o0.emissions.at(0).packet, 10));
  EXPECT_TRUE(o1.emissions.empty());
  o1 = r1.step(NicEvent::host_request(make_scan_request(r1.config(), Vector{6}), 1010));
  ASSERT_TRUE(o1.host_delivery);
  EXPECT_EQ(o1.host_delivery->payload(), Vector{11});
  ASSERT_EQ(o1.emissions.size(), 1u);
  EXPECT_EQ(o1.emissions[0].packet.coll.msg_type, MsgType::Ack);
  auto back = r0.step(NicEvent::arrival(o1.emissions[0].packet, 1020));
  ASSERT_TRUE(back.host_delivery);
  EXPECT_GE(*back.host_delivery->elapsed_trailer, 1000u);
  EXPECT_EQ(back.host_delivery->payload(), Vector{5});
}

TEST(Sequential, SecondDataFromPredecessorIsOverflow) {
  NicState s(make_nic_config(AlgoType::Sequential, 1, 3));
  NicEngine r0(make_nic_config(AlgoType::Sequential, 0, 3));
  auto d = r0.step(NicEvent::host_request(make_scan_request(r0.config(), Vector{1}), 0)).emissions.at(0).packet;
  step(s, NicEvent::arrival(d, 1));
  EXPECT_EQ(s.watermarks.pred_buffer, 1u);
  auto d2 = d;
  d2.sub->epoch = 1;
  seal(d2);
  try {
    step(s, NicEvent::arrival(d2, 2));
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_EQ(e.code(), ProtocolErrc::BufferOverflow);
  }
}

TEST(RecursiveDoubling, EpochTwoAheadIsRejected) {
  NicState s(make_nic_config(AlgoType::RecursiveDoubling, 0, 2));
  NicEngine r1(make_nic_config(AlgoType::RecursiveDoubling, 1, 2));
  auto d = r1.step(NicEvent::host_request(make_scan_request(r1.config(), Vector{1}), 0)).emissions.at(0).packet;
  d.sub->epoch = 2;
  seal(d);
  try {
    step(s, NicEvent::arrival(d, 1));
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_EQ(e.code(), ProtocolErrc::EpochTooFarAhead);
  }
}

TEST(RecursiveDoubling, LateArrivalMulticastFourRanks) {
  // p=4, SUM. Rank 0 (and 2, 3) request first; rank 1 requests after rank 0's
  // stage-0 DATA is already buffered.
  std::vector<NicEngine> n;
  for (Rank r = 0; r < 4; ++r) n.emplace_back(make_nic_config(AlgoType::RecursiveDoubling, r, 4));
  auto o0 = n[0].step(NicEvent::host_request(make_scan_request(n[0].config(), Vector{1}), 0));
  ASSERT_EQ(o0.emissions.size(), 1u);
  auto to1 = o0.emissions[0].packet;
  EXPECT_TRUE(n[1].step(NicEvent::arrival(to1, 5)).emissions.empty());
  auto o1 = n[1].step(NicEvent::host_request(make_scan_request(n[1].config(), Vector{2}), 10));
  ASSERT_EQ(o1.emissions.size(), 1u);
  EXPECT_TRUE(o1.multicast_fired);
  const auto& t = o1.emissions[0];
  EXPECT_EQ(t.packet.coll.msg_type, MsgType::TaggedData);
  EXPECT_EQ(t.destinations, (std::vector<Rank>{0, 3}));
  EXPECT_EQ(t.packet.sub->range_lo, 0);
  EXPECT_EQ(t.packet.sub->range_hi, 1);
  EXPECT_EQ(t.packet.payload(), Vector{3});
  auto back = n[0].step(NicEvent::arrival(t.packet, 20));
  ASSERT_EQ(back.derivations.size(), 1u);
  EXPECT_EQ(back.derivations[0].value, Vector{2});  // x1 = 3 - 1
  EXPECT_EQ(back.derivations[0].from, 1);
}

TEST(RecursiveDoubling, MaxSuppressesMulticast) {
  std::vector<NicEngine> n;
  for (Rank r = 0; r < 4; ++r) n.emplace_back(make_nic_config(AlgoType::RecursiveDoubling, r, 4, ReduceOp{OpKind::Max}));
  auto o0 = n[0].step(NicEvent::host_request(make_scan_request(n[0].config(), Vector{1}), 0));
  n[1].step(NicEvent::arrival(o0.emissions.at(0).packet, 5));
  auto o1 = n[1].step(NicEvent::host_request(make_scan_request(n[1].config(), Vector{2}), 10));
  EXPECT_FALSE(o1.multicast_fired);
  ASSERT_EQ(o1.emissions.size(), 2u);
  for (auto& e : o1.emissions) EXPECT_EQ(e.packet.coll.msg_type, MsgType::Data);
}

TEST(Binomial, ZeroSkewCountsAndResultsP8) {
  Harness h(AlgoType::BinomialTree, 8, OpKind::Sum, 1);
  for (Rank r = 0; r < 8; ++r) h.inputs[0][r] = Vector{static_cast<std::int32_t>(r + 1), 0};
  for (Rank r = 0; r < 8; ++r) h.request(r);
  std::mt19937 rng(1);
  h.run(rng);
  h.check_results(OpKind::Sum);
  for (Rank r = 0; r < 8; ++r) {
    const std::int32_t want = (r + 1) * (r + 2) / 2;
    EXPECT_EQ(h.results[r][0].values[0], want);
  }
  EXPECT_EQ(h.sent_of(MsgType::Data), 7u + 4u);
  EXPECT_EQ(h.sent_of(MsgType::Ack), 7u);
}

TEST(Binomial, P2Smallest) {
  Harness h(AlgoType::BinomialTree, 2, OpKind::Sum, 1);
  std::mt19937 rng(2);
  h.run(rng);
  h.check_results(OpKind::Sum);
  EXPECT_EQ(h.sent_of(MsgType::Data), 1u);
  EXPECT_EQ(h.sent_of(MsgType::Ack), 1u);
}

struct SweepCase {
  AlgoType algo;
  OpKind op;
  bool late;
  bool cascade;
};

class RandomInterleaving : public ::testing::TestWithParam<SweepCase> {};

TEST_P(RandomInterleaving, MatchesOracleAndClosedForms) {
  const auto c = GetParam();
  for (std::uint16_t p : {1, 2, 4, 8, 16, 32}) {
    for (std::uint32_t seed = 0; seed < (p <= 8 ? 25u : 6u); ++seed) {
      const std::uint32_t iters = 6;
      Harness h(c.algo, p, c.op, iters, c.late, c.cascade, seed * 7919 + p);
      std::mt19937 rng(seed);
      h.run(rng);
      ASSERT_NO_FATAL_FAILURE(h.check_results(c.op)) << "p=" << p << " seed=" << seed;
      const std::uint64_t e = iters, m = lg(p);
      switch (c.algo) {
        case AlgoType::Sequential:
          EXPECT_EQ(h.sent_of(MsgType::Data), e * (p - 1u));
          EXPECT_EQ(h.sent_of(MsgType::Ack), e * (p - 1u));
          break;
        case AlgoType::RecursiveDoubling:
          // every fired rule replaces two sends by one
          EXPECT_EQ(h.sent_of(MsgType::Data) + 2 * h.sent_of(MsgType::TaggedData), e * p * m);
          {
            std::uint64_t fired = 0;
            for (auto& n : h.nics) fired += n.state().watermarks.multicasts_fired;
            EXPECT_EQ(fired, h.sent_of(MsgType::TaggedData));
            if (!c.cascade) {
              EXPECT_EQ(h.fired, fired);
            }
          }
          if (!c.late || c.op != OpKind::Sum) {
            EXPECT_EQ(h.sent_of(MsgType::TaggedData), 0u);
          }
          EXPECT_EQ(h.sent_of(MsgType::Ack), 0u);
          break;
        case AlgoType::BinomialTree:
          EXPECT_EQ(h.sent_of(MsgType::Data), e * (2u * (p - 1u) - m));
          EXPECT_EQ(h.sent_of(MsgType::Ack), e * (p - 1u));
          break;
      }
      for (auto& n : h.nics) {
        const auto& w = n.state().watermarks;
        EXPECT_LE(w.pred_buffer, 1u);
        EXPECT_LE(w.child_cache, m);
        EXPECT_LE(w.epoch_lead, 1u);
        EXPECT_EQ(n.describe(), "");
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    All, RandomInterleaving,
    ::testing::Values(SweepCase{AlgoType::Sequential, OpKind::Sum, true, false},
                      SweepCase{AlgoType::Sequential, OpKind::Max, true, false},
                      SweepCase{AlgoType::RecursiveDoubling, OpKind::Sum, true, false},
                      SweepCase{AlgoType::RecursiveDoubling, OpKind::Sum, false, false},
                      SweepCase{AlgoType::RecursiveDoubling, OpKind::Sum, true, true},
                      SweepCase{AlgoType::RecursiveDoubling, OpKind::Max, true, false},
                      SweepCase{AlgoType::RecursiveDoubling, OpKind::Prod, true, false},
                      SweepCase{AlgoType::BinomialTree, OpKind::Sum, true, false},
                      SweepCase{AlgoType::BinomialTree, OpKind::Min, true, false}),
    [](const auto& info) {
      const auto& c = info.param;
      std::string n = std::string(to_string(c.algo)) + "_" + std::string(to_string(c.op));
      if (!c.late) n += "_nolate";
      if (c.cascade) n += "_cascade";
      return n;
    });

TEST(Determinism, SameEventsSameBytes) {
  auto run = [] {
    Harness h(AlgoType::RecursiveDoubling, 8, OpKind::Sum, 4);
    std::mt19937 rng(99);
    std::vector<std::vector<std::uint8_t>> log;
    while (true) {
      if (!h.step_random(rng)) break;
      for (auto& [k, q] : h.channels)
        if (!q.empty()) log.push_back(q.back());
    }
    return log;
  };
  EXPECT_EQ(run(), run());
}
