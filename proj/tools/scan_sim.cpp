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

// scan-sim: run, bench, oracle and dump-packet front end.
//
// Exit codes: 0 ok, 1 usage, 2 configuration error, 3 simulation failure
// (protocol error or deadlock), 4 I/O error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scansim/run_config.hpp"
#include "scansim/sample_packets.hpp"
#include "scansim/scansim.hpp"

namespace {

using namespace scansim;

struct RunFlags {
  std::string config;
  std::string algo;
  std::string mode;
  std::optional<std::uint16_t> p;
  std::optional<std::uint16_t> count;
  std::vector<std::uint16_t> counts;
  std::string op;
  std::optional<std::uint32_t> iterations;
  std::optional<std::uint32_t> warmup;
  std::optional<std::uint64_t> seed;
  std::string csv;
  std::string trace;
  std::optional<bool> late_multicast;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool sweep) {
  cmd->add_option("config", f.config, "JSON run configuration");
  cmd->add_option("--algo", f.algo, "sequential|recursive_doubling|binomial_tree|all");
  cmd->add_option("--mode", f.mode, "offloaded|software|all");
  cmd->add_option("--p", f.p, "communicator size");
  if (sweep)
    cmd->add_option("--counts", f.counts, "element counts to sweep")->delimiter(',');
  else
    cmd->add_option("--count", f.count, "elements per rank");
  cmd->add_option("--op", f.op, "sum|prod|max|min");
  cmd->add_option("--iterations", f.iterations, "timed iterations");
  cmd->add_option("--warmup", f.warmup, "discarded warmup iterations");
  cmd->add_option("--seed", f.seed, "input / jitter seed (overrides SCAN_SIM_SEED)");
  cmd->add_option("--csv", f.csv, "CSV output path, '-' for stdout");
  cmd->add_option("--trace", f.trace, "trace output path, '-' for stdout");
  cmd->add_flag("--late-multicast,!--no-late-multicast", f.late_multicast, "late-arrival multicast rule");
}

RunConfig resolve(const RunFlags& f, RunConfig base) {
  auto c = f.config.empty() ? std::move(base) : load_run_config(f.config, std::move(base));
  apply_seed_env(c);
  auto& b = c.bench;
  if (!f.algo.empty())
    b.algorithms = f.algo == "all" ? BenchConfig{}.algorithms : std::vector<AlgoType>{parse_algo(f.algo)};
  if (!f.mode.empty()) b.modes = f.mode == "all" ? BenchConfig{}.modes : std::vector<Mode>{parse_mode(f.mode)};
  if (f.p) b.p = *f.p;
  if (f.count) b.counts = {*f.count};
  if (!f.counts.empty()) b.counts = f.counts;
  if (!f.op.empty()) b.op = parse_op(f.op);
  if (f.iterations) b.timed = *f.iterations;
  if (f.warmup) b.warmup = *f.warmup;
  if (f.seed) b.seed = *f.seed;
  if (f.late_multicast) b.late_multicast = *f.late_multicast;
  if (!f.csv.empty()) c.csv_path = f.csv;
  if (!f.trace.empty()) c.trace_path = f.trace;
  return c;
}

void write_out(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw std::ios_base::failure("cannot write " + path);
}

int cmd_run(const RunFlags& f, RunConfig base) {
  RunConfig cfg;
  try {
    cfg = resolve(f, std::move(base));
    validate(cfg);
  } catch (const Error& e) {
    std::cerr << "scan-sim: config: " << e.what() << '\n';
    return 2;
  }
  RunOutput out;
  try {
    out = execute(cfg);
  } catch (const SimulationError& e) {
    std::cerr << "scan-sim: " << e.what() << '\n';
    if (!e.report().empty() && std::string(e.what()).find(e.report()) == std::string::npos)
      std::cerr << e.report();
    return 3;
  } catch (const Error& e) {
    std::cerr << "scan-sim: " << e.what() << '\n';
    return 3;
  }
  for (auto& r : out.records) std::cout << summary_line(r) << '\n';
  try {
    if (!cfg.csv_path.empty()) write_out(cfg.csv_path, out.csv);
    if (!cfg.trace_path.empty()) write_out(cfg.trace_path, out.trace);
  } catch (const std::exception& e) {
    std::cerr << "scan-sim: " << e.what() << '\n';
    return 4;
  }
  return 0;
}

std::string join(const Vector& v) {
  std::string s;
  for (std::size_t i = 0; i < v.values.size(); ++i) s += (i ? " " : "") + std::to_string(v.values[i]);
  return s;
}

int cmd_oracle(const std::string& op_name, const std::vector<std::int32_t>& xs) {
  try {
    ReduceOp op{parse_op(op_name)};
    std::vector<Vector> in;
    for (auto x : xs) in.push_back(Vector{x});
    Vector inc, exc;
    for (auto& v : oracle_inclusive_scan(op, in)) inc.values.push_back(v.values.at(0));
    for (auto& v : oracle_exclusive_scan(op, in)) exc.values.push_back(v.values.at(0));
    std::cout << "inclusive: " << join(inc) << "\nexclusive: " << join(exc) << '\n';
  } catch (const Error& e) {
    std::cerr << "scan-sim: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator for NIC-offloaded parallel prefix scan"};
  app.require_subcommand(1);

  RunFlags run_flags, bench_flags;
  auto* run = app.add_subcommand("run", "run a configuration (default: one scan per record)");
  add_run_flags(run, run_flags, false);
  auto* bench = app.add_subcommand("bench", "latency sweep over element counts");
  add_run_flags(bench, bench_flags, true);

  std::string oracle_op = "sum";
  std::vector<std::int32_t> oracle_inputs;
  auto* oracle = app.add_subcommand("oracle", "print inclusive and exclusive scans of scalars");
  oracle->add_option("--op", oracle_op, "sum|prod|max|min");
  oracle->add_option("values", oracle_inputs, "one value per rank")->required()->allow_extra_args();

  PacketSpec spec;
  std::string type = "data", algo = "recursive_doubling", op = "sum";
  std::vector<std::int32_t> values;
  auto* dump = app.add_subcommand("dump-packet", "hex dump of a constructed packet");
  dump->add_option("--type", type, "scan_request|data|ack|result|tagged_data");
  dump->add_option("--algo", algo, "algorithm");
  dump->add_option("--p", spec.p, "communicator size");
  dump->add_option("--rank", spec.rank, "sending rank");
  dump->add_option("--dst", spec.dst, "destination rank for DATA / ACK");
  dump->add_option("--op", op, "sum|prod|max|min");
  dump->add_option("--epoch", spec.epoch, "sub-header epoch");
  dump->add_option("--range-lo", spec.range_lo, "sub-header range_lo");
  dump->add_option("--range-hi", spec.range_hi, "sub-header range_hi");
  dump->add_option("--elapsed", spec.elapsed, "RESULT trailer cycles");
  dump->add_option("--id", spec.identification, "IPv4 identification");
  dump->add_option("--values", values, "elements")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (*run) return cmd_run(run_flags, RunConfig::for_run());
  if (*bench) return cmd_run(bench_flags, RunConfig::for_bench());
  if (*oracle) return cmd_oracle(oracle_op, oracle_inputs);
  if (*dump) {
    try {
      spec.type = parse_msg_type(type);
      spec.algo = parse_algo(algo);
      spec.op = parse_op(op);
      if (dump->count("--values")) spec.values = values;
      std::cout << hex_dump(encode_packet(build_packet(spec)));
    } catch (const Error& e) {
      std::cerr << "scan-sim: " << e.what() << '\n';
      return 2;
    }
  }
  return 0;
}
