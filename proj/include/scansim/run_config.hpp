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
 * @file  run_config.hpp
 * @brief JSON experiment manifests for the scan-sim tool.
 *
 * The schema is documented in docs/config.md. Every key is optional;
 * unknown keys are rejected with the line they appear on.
 */

#ifndef SCANSIM_RUN_CONFIG_HPP
#define SCANSIM_RUN_CONFIG_HPP

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fabric.hpp"
#include "host_bench.hpp"

namespace scansim {

class ConfigError : public Error {
 public:
  ConfigError(int line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  /// 1-based; 0 when no position applies.
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct LinkOverride {
  Rank src = 0;
  Rank dst = 0;
  Cycles latency = 0;
};

struct RunConfig {
  BenchConfig bench;
  Cycles link_latency = 125;
  Cycles host_latency = 1250;
  Cycles processing_latency = 10;
  Cycles jitter = 0;
  std::vector<Rank> absent_ranks;
  std::vector<LinkOverride> link_overrides;
  std::string csv_path;    // "" = none, "-" = stdout
  std::string trace_path;  // "" = none, "-" = stdout

  /// Defaults for `scan-sim run`: one timed scan of one element.
  static RunConfig for_run() {
    RunConfig c;
    c.bench.counts = {1};
    c.bench.warmup = 0;
    c.bench.timed = 1;
    return c;
  }
  /// Defaults for `scan-sim bench`: the full count sweep.
  static RunConfig for_bench() { return RunConfig{}; }
};

inline Topology make_topology(const RunConfig& c) {
  auto t = Topology::uniform(c.bench.p, c.link_latency, c.host_latency, c.processing_latency);
  for (auto r : c.absent_ranks) t.address_book.erase(r);
  for (auto& o : c.link_overrides) t.link_overrides[{o.src, o.dst}] = o.latency;
  t.jitter = c.jitter;
  t.jitter_seed = c.bench.seed;
  return t;
}

namespace detail {

/// First line each key path ("a.b", arrays as "a[]") appears on. Assumes
/// the text already parsed as JSON.
inline std::map<std::string, int> json_key_lines(std::string_view text) {
  std::map<std::string, int> out;
  struct Frame {
    bool object;
    std::string path;
  };
  std::vector<Frame> stack;
  std::string pending;  // path of the value about to start
  bool expect_key = false;
  int line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch == '\n') {
      ++line;
    } else if (ch == '"') {
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\') ++i;
        if (i < text.size()) s += text[i];
      }
      if (expect_key && !stack.empty() && stack.back().object) {
        pending = stack.back().path.empty() ? s : stack.back().path + "." + s;
        out.try_emplace(pending, line);
        expect_key = false;
      }
    } else if (ch == '{' || ch == '[') {
      std::string path = pending;
      if (pending.empty() && !stack.empty() && !stack.back().object) path = stack.back().path;
      if (ch == '[') path += "[]";
      stack.push_back({ch == '{', path});
      pending.clear();
      expect_key = ch == '{';
    } else if (ch == '}' || ch == ']') {
      if (!stack.empty()) stack.pop_back();
      pending.clear();
    } else if (ch == ',') {
      pending.clear();
      expect_key = !stack.empty() && stack.back().object;
    }
  }
  return out;
}

class ConfigReader {
 public:
  ConfigReader(std::string_view text) : lines_(json_key_lines(text)) {}

  int line_of(const std::string& path) const {
    auto it = lines_.find(path);
    return it == lines_.end() ? 0 : it->second;
  }

  void check_keys(const nlohmann::json& obj, const std::string& path, std::set<std::string_view> allowed) const {
    if (!obj.is_object()) throw ConfigError(line_of(path), "'" + path + "' must be an object");
    for (auto& [k, v] : obj.items()) {
      if (allowed.contains(k)) continue;
      const auto full = path.empty() ? k : path + "." + k;
      throw ConfigError(line_of(full), "unknown key '" + full + "'");
    }
  }

  template <class T>
  T get(const nlohmann::json& v, const std::string& path) const {
    try {
      if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned()) throw std::invalid_argument("must not be negative");
          const auto u = v.get<std::uint64_t>();
          if (u > std::numeric_limits<T>::max()) throw std::invalid_argument("out of range");
          return static_cast<T>(u);
        } else {
          const auto s = v.get<std::int64_t>();
          if (s < std::numeric_limits<T>::min() || s > std::numeric_limits<T>::max())
            throw std::invalid_argument("out of range");
          return static_cast<T>(s);
        }
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
        return v.get<bool>();
      } else {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
        return v.get<std::string>();
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line_of(path), "'" + path + "': " + e.what());
    }
  }

  template <class T>
  std::vector<T> get_list(const nlohmann::json& v, const std::string& path) const {
    if (!v.is_array()) throw ConfigError(line_of(path), "'" + path + "': expected a list");
    std::vector<T> out;
    for (auto& e : v) out.push_back(get<T>(e, path));
    return out;
  }

  template <class F>
  auto convert(const std::string& path, F&& f) const {
    try {
      return f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(line_of(path), "'" + path + "': " + e.what());
    }
  }

 private:
  std::map<std::string, int> lines_;
};

}  // namespace detail

/// Applies a JSON manifest on top of `base`.
inline RunConfig parse_run_config(std::string_view text, RunConfig base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n';
    throw ConfigError(line, std::string("malformed JSON: ") + e.what());
  }
  const detail::ConfigReader rd(text);
  rd.check_keys(j, "",
                {"p", "algorithms", "modes", "op", "dtype", "counts", "warmup", "iterations", "seed",
                 "late_multicast", "cascade_multicast", "inputs", "topology", "schedule", "output", "event_budget"});
  auto& b = base.bench;
  if (j.contains("p")) b.p = rd.get<std::uint16_t>(j["p"], "p");
  if (j.contains("algorithms")) {
    b.algorithms.clear();
    for (auto& s : rd.get_list<std::string>(j["algorithms"], "algorithms")) {
      if (s == "all") {
        b.algorithms = BenchConfig{}.algorithms;
        break;
      }
      b.algorithms.push_back(rd.convert("algorithms", [&] { return parse_algo(s); }));
    }
  }
  if (j.contains("modes")) {
    b.modes.clear();
    for (auto& s : rd.get_list<std::string>(j["modes"], "modes"))
      b.modes.push_back(rd.convert("modes", [&] { return parse_mode(s); }));
  }
  if (j.contains("op")) {
    const auto s = rd.get<std::string>(j["op"], "op");
    b.op = rd.convert("op", [&] { return parse_op(s); });
  }
  if (j.contains("dtype") && rd.get<std::string>(j["dtype"], "dtype") != "int32")
    throw ConfigError(rd.line_of("dtype"), "'dtype': only int32 is supported");
  if (j.contains("counts")) b.counts = rd.get_list<std::uint16_t>(j["counts"], "counts");
  if (j.contains("warmup")) b.warmup = rd.get<std::uint32_t>(j["warmup"], "warmup");
  if (j.contains("iterations")) b.timed = rd.get<std::uint32_t>(j["iterations"], "iterations");
  if (j.contains("seed")) b.seed = rd.get<std::uint64_t>(j["seed"], "seed");
  if (j.contains("late_multicast")) b.late_multicast = rd.get<bool>(j["late_multicast"], "late_multicast");
  if (j.contains("cascade_multicast"))
    b.cascade_multicast = rd.get<bool>(j["cascade_multicast"], "cascade_multicast");
  if (j.contains("inputs")) {
    auto& in = j["inputs"];
    if (!in.is_array()) throw ConfigError(rd.line_of("inputs"), "'inputs': expected a list of lists");
    std::vector<std::vector<std::int32_t>> v;
    for (auto& row : in) v.push_back(rd.get_list<std::int32_t>(row, "inputs"));
    b.inputs = std::move(v);
  }
  if (j.contains("event_budget")) b.event_budget = rd.get<std::uint64_t>(j["event_budget"], "event_budget");
  if (j.contains("topology")) {
    auto& t = j["topology"];
    rd.check_keys(t, "topology",
                  {"link_latency", "host_latency", "processing_latency", "jitter", "absent_ranks", "link_overrides"});
    if (t.contains("link_latency")) base.link_latency = rd.get<Cycles>(t["link_latency"], "topology.link_latency");
    if (t.contains("host_latency")) base.host_latency = rd.get<Cycles>(t["host_latency"], "topology.host_latency");
    if (t.contains("processing_latency"))
      base.processing_latency = rd.get<Cycles>(t["processing_latency"], "topology.processing_latency");
    if (t.contains("jitter")) base.jitter = rd.get<Cycles>(t["jitter"], "topology.jitter");
    if (t.contains("absent_ranks"))
      base.absent_ranks = rd.get_list<Rank>(t["absent_ranks"], "topology.absent_ranks");
    if (t.contains("link_overrides")) {
      auto& lo = t["link_overrides"];
      if (!lo.is_array()) throw ConfigError(rd.line_of("topology.link_overrides"), "'topology.link_overrides': expected a list");
      base.link_overrides.clear();
      for (auto& o : lo) {
        const std::string path = "topology.link_overrides[]";
        rd.check_keys(o, path, {"src", "dst", "latency"});
        if (!o.contains("src") || !o.contains("dst") || !o.contains("latency"))
          throw ConfigError(rd.line_of("topology.link_overrides"), "link override needs src, dst and latency");
        base.link_overrides.push_back({rd.get<Rank>(o["src"], path + ".src"), rd.get<Rank>(o["dst"], path + ".dst"),
                                       rd.get<Cycles>(o["latency"], path + ".latency")});
      }
    }
  }
  if (j.contains("schedule")) {
    auto& s = j["schedule"];
    rd.check_keys(s, "schedule", {"first_issue", "think_time", "explicit", "silent"});
    if (s.contains("first_issue")) b.schedule.first_issue = rd.get_list<Cycles>(s["first_issue"], "schedule.first_issue");
    if (s.contains("think_time")) b.schedule.think_time = rd.get_list<Cycles>(s["think_time"], "schedule.think_time");
    if (s.contains("silent")) {
      b.schedule.silent.clear();
      for (auto r : rd.get_list<Rank>(s["silent"], "schedule.silent")) b.schedule.silent.insert(r);
    }
    if (s.contains("explicit")) {
      auto& e = s["explicit"];
      if (!e.is_object()) throw ConfigError(rd.line_of("schedule.explicit"), "'schedule.explicit' must map rank to times");
      b.schedule.explicit_times.clear();
      for (auto& [k, v] : e.items()) {
        const auto path = "schedule.explicit." + k;
        Rank r = rd.convert(path, [&] {
          std::size_t used = 0;
          const auto n = std::stoul(k, &used);
          if (used != k.size() || n > 0xFFFF) throw std::invalid_argument("key must be a rank number");
          return static_cast<Rank>(n);
        });
        b.schedule.explicit_times[r] = rd.get_list<Cycles>(v, path);
      }
    }
  }
  if (j.contains("output")) {
    auto& o = j["output"];
    rd.check_keys(o, "output", {"csv", "trace"});
    if (o.contains("csv")) base.csv_path = rd.get<std::string>(o["csv"], "output.csv");
    if (o.contains("trace")) base.trace_path = rd.get<std::string>(o["trace"], "output.trace");
  }
  return base;
}

inline RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(0, path + ":" + (e.line() > 0 ? "" : " ") + e.what());
  }
}

/// SCAN_SIM_SEED, when set, replaces the config seed.
inline void apply_seed_env(RunConfig& c) {
  const char* s = std::getenv("SCAN_SIM_SEED");
  if (!s || !*s) return;
  char* end = nullptr;
  const auto v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError(0, std::string("SCAN_SIM_SEED is not a number: ") + s);
  c.bench.seed = v;
}

inline void validate(const RunConfig& c) {
  validate(c.bench);
  for (auto r : c.absent_ranks)
    if (r >= c.bench.p) throw ConfigError(0, "absent rank " + std::to_string(r) + " outside p");
  for (auto& o : c.link_overrides)
    if (o.src >= c.bench.p || o.dst >= c.bench.p) throw ConfigError(0, "link override outside p");
}

struct RunOutput {
  std::vector<BenchRecord> records;
  std::string csv;
  std::string trace;  // one "# algorithm mode count" section per record
};

inline RunOutput execute(const RunConfig& cfg) {
  validate(cfg);
  auto bench = cfg.bench;
  bench.keep_trace = !cfg.trace_path.empty();
  RunOutput out;
  out.records = run_bench(bench, make_topology(cfg));
  out.csv = format_csv(out.records);
  if (bench.keep_trace)
    for (auto& r : out.records) {
      out.trace += "# " + std::string(to_string(r.algorithm)) + ' ' + std::string(to_string(r.mode)) +
                   " count=" + std::to_string(r.count) + '\n';
      out.trace += format_trace(r.trace);
    }
  return out;
}

}  // namespace scansim

#endif  // SCANSIM_RUN_CONFIG_HPP
