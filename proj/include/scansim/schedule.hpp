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

#ifndef SCANSIM_SCHEDULE_HPP
#define SCANSIM_SCHEDULE_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "common.hpp"

namespace scansim {

/// When each host issues its scans. A host blocks on its RESULT, so
/// iteration i+1 is issued at max(think rule, explicit time) after the
/// RESULT of iteration i arrives. Zero think time is back-to-back.
struct ArrivalSchedule {
  std::uint32_t iterations = 1;
  std::vector<Cycles> first_issue;  // per rank; missing entries mean 0
  std::vector<Cycles> think_time;   // per rank; missing entries mean 0
  /// Per-rank explicit issue times, one per iteration (lower bounds).
  std::map<Rank, std::vector<Cycles>> explicit_times;
  /// Hosts that never issue (deadlock scenarios).
  std::set<Rank> silent;

  static ArrivalSchedule back_to_back(std::uint16_t p, std::uint32_t iterations) {
    ArrivalSchedule s;
    s.iterations = iterations;
    s.first_issue.assign(p, 0);
    s.think_time.assign(p, 0);
    return s;
  }

  Cycles first(Rank r) const {
    if (auto it = explicit_times.find(r); it != explicit_times.end() && !it->second.empty()) return it->second[0];
    return r < first_issue.size() ? first_issue[r] : 0;
  }

  /// Issue time of iteration `iter` >= 1 given the previous RESULT time.
  Cycles next(Rank r, std::uint32_t iter, Cycles prev_receive) const {
    if (auto it = explicit_times.find(r); it != explicit_times.end() && iter < it->second.size())
      return std::max(it->second[iter], prev_receive);
    return prev_receive + (r < think_time.size() ? think_time[r] : 0);
  }
};

}  // namespace scansim

#endif  // SCANSIM_SCHEDULE_HPP
