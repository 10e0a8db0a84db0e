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

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "scansim/run_config.hpp"

using namespace scansim;
namespace fs = std::filesystem;

namespace {

struct Cli {
  int status = -1;
  std::string out;
};

// Runs the scan-sim binary through the shell; stderr is folded into out.
Cli cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + SCANSIM_CLI + std::string(" ") + args + " 2>&1";
  Cli r;
  FILE* f = popen(cmd.c_str(), "r");
  if (!f) return r;
  std::array<char, 4096> buf;
  while (auto n = std::fread(buf.data(), 1, buf.size(), f)) r.out.append(buf.data(), n);
  const int st = pclose(f);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string config_path(const std::string& name) { return std::string(SCANSIM_SOURCE_DIR) + "/configs/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("scansim-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path write(const std::string& name, const std::string& text) {
    auto p = dir / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }
  fs::path dir;
};

}  // namespace

TEST(ParseConfig, Defaults) {
  auto c = parse_run_config("{}", RunConfig::for_bench());
  EXPECT_EQ(c.bench.p, 8);
  EXPECT_EQ(c.bench.warmup, 200u);
  EXPECT_EQ(c.bench.timed, 10000u);
  EXPECT_EQ(c.bench.counts, BenchConfig::default_counts());
  EXPECT_EQ(c.link_latency, 125u);
  EXPECT_EQ(c.host_latency, 1250u);
  EXPECT_EQ(c.processing_latency, 10u);
  auto r = parse_run_config("{}", RunConfig::for_run());
  EXPECT_EQ(r.bench.timed, 1u);
  EXPECT_EQ(r.bench.warmup, 0u);
}

TEST(ParseConfig, FullDocument) {
  const char* text = R"({
  "p": 4,
  "algorithms": ["rd", "binomial_tree"],
  "modes": ["software"],
  "op": "max",
  "dtype": "int32",
  "counts": [2, 3],
  "warmup": 1,
  "iterations": 7,
  "seed": 99,
  "late_multicast": false,
  "topology": {"link_latency": 50, "jitter": 3, "absent_ranks": [3],
               "link_overrides": [{"src": 0, "dst": 1, "latency": 9}]},
  "schedule": {"first_issue": [0, 10], "think_time": [5], "explicit": {"2": [1, 2, 3, 4, 5, 6, 7, 8]}, "silent": [1]},
  "output": {"csv": "a.csv", "trace": "-"}
})";
  auto c = parse_run_config(text, RunConfig::for_bench());
  EXPECT_EQ(c.bench.p, 4);
  EXPECT_EQ(c.bench.algorithms, (std::vector<AlgoType>{AlgoType::RecursiveDoubling, AlgoType::BinomialTree}));
  EXPECT_EQ(c.bench.modes, std::vector<Mode>{Mode::Software});
  EXPECT_EQ(c.bench.op, OpKind::Max);
  EXPECT_EQ(c.bench.counts, (std::vector<std::uint16_t>{2, 3}));
  EXPECT_EQ(c.bench.timed, 7u);
  EXPECT_EQ(c.bench.seed, 99u);
  EXPECT_FALSE(c.bench.late_multicast);
  EXPECT_EQ(c.link_latency, 50u);
  EXPECT_EQ(c.jitter, 3u);
  EXPECT_EQ(c.absent_ranks, std::vector<Rank>{3});
  ASSERT_EQ(c.link_overrides.size(), 1u);
  EXPECT_EQ(c.link_overrides[0].latency, 9u);
  EXPECT_EQ(c.bench.schedule.first_issue, (std::vector<Cycles>{0, 10}));
  EXPECT_EQ(c.bench.schedule.explicit_times.at(2).size(), 8u);
  EXPECT_TRUE(c.bench.schedule.silent.contains(1));
  EXPECT_EQ(c.csv_path, "a.csv");
  EXPECT_EQ(c.trace_path, "-");
  EXPECT_NO_THROW(validate(c));

  auto t = make_topology(c);
  EXPECT_FALSE(t.present(3));
  EXPECT_EQ(t.link_latency(0, 1), 9u);
  EXPECT_EQ(t.link_latency(1, 0), 50u);
  EXPECT_EQ(t.jitter_seed, 99u);
}

TEST(ParseConfig, AllAlgorithms) {
  auto c = parse_run_config(R"({"algorithms": ["all"]})", RunConfig::for_run());
  EXPECT_EQ(c.bench.algorithms.size(), 3u);
}

TEST(ParseConfig, UnknownKeyNamesKeyAndLine) {
  try {
    parse_run_config("{\n  \"p\": 4,\n  \"topology\": {\n    \"latency\": 3\n  }\n}", RunConfig::for_run());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_NE(std::string(e.what()).find("topology.latency"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(ParseConfig, RejectsBadValues) {
  auto bad = [](const char* text, int line, const char* key) {
    try {
      parse_run_config(text, RunConfig::for_run());
      ADD_FAILURE() << text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  bad("{\n\"p\": \"four\"\n}", 2, "p");
  bad("{\n\n\"op\": \"xor\"}", 3, "op");
  bad("{\"dtype\": \"float\"}", 1, "dtype");
  bad("{\"algorithms\": [\"ring\"]}", 1, "algorithms");
  bad("{\"p\": 70000}", 1, "p");
  bad("{\"schedule\": {\"explicit\": {\"x\": [1]}}}", 1, "schedule.explicit.x");
  bad("{\n\"counts\": [1,\n2,\n}", 4, "malformed");
}

TEST(ParseConfig, ValidateCatchesRanges) {
  auto c = parse_run_config(R"({"counts": [400]})", RunConfig::for_run());
  EXPECT_THROW(validate(c), Error);
  c = parse_run_config(R"({"p": 4, "inputs": [[1], [2]]})", RunConfig::for_run());
  EXPECT_THROW(validate(c), Error);
  c = parse_run_config(R"({"p": 4, "topology": {"absent_ranks": [4]}})", RunConfig::for_run());
  EXPECT_THROW(validate(c), Error);
}

TEST(ParseConfig, SeedPrecedence) {
  auto c = parse_run_config(R"({"seed": 5})", RunConfig::for_run());
  ::setenv("SCAN_SIM_SEED", "7", 1);
  apply_seed_env(c);
  EXPECT_EQ(c.bench.seed, 7u);
  ::setenv("SCAN_SIM_SEED", "x7", 1);
  EXPECT_THROW(apply_seed_env(c), ConfigError);
  ::unsetenv("SCAN_SIM_SEED");
  c.bench.seed = 5;
  apply_seed_env(c);
  EXPECT_EQ(c.bench.seed, 5u);
}

TEST(ParseConfig, PackagedConfigsLoad) {
  for (auto& e : fs::directory_iterator(fs::path(SCANSIM_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".json") continue;
    auto c = load_run_config(e.path().string(), RunConfig::for_run());
    EXPECT_NO_THROW(validate(c)) << e.path();
  }
}

TEST(Execute, LateMulticastConfig) {
  auto c = load_run_config(config_path("late_multicast.json"), RunConfig::for_run());
  c.trace_path = "-";
  auto out = execute(c);
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_EQ(out.records[0].tagged_msgs, 1u);
  EXPECT_EQ(out.records[0].data_msgs, 6u);
  EXPECT_EQ(out.trace.rfind("# recursive_doubling offloaded count=1\n", 0), 0u);
  EXPECT_NE(out.trace.find("SEND\t1\t0,3\tTAGGED_DATA"), std::string::npos);
}

TEST(Cli, OracleSum) {
  auto r = cli("oracle --op sum 1 2 3 4");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "inclusive: 1 3 6 10\nexclusive: 0 1 3 6\n");
}

TEST(Cli, OracleMaxAndSingle) {
  auto r = cli("oracle --op max 3 1 5 2");
  EXPECT_EQ(r.out, "inclusive: 3 3 5 5\nexclusive: -2147483648 3 3 5\n");
  r = cli("oracle --op sum 42");
  EXPECT_EQ(r.out, "inclusive: 42\nexclusive: 0\n");
  r = cli("oracle --op xor 1");
  EXPECT_NE(r.status, 0);
}

TEST(Cli, RunAllAlgorithmsAndModes) {
  auto r = cli("run --algo all --mode all --p 8 --count 1");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 6);
  for (auto name : {"sequential/offloaded", "recursive_doubling/software", "binomial_tree/offloaded"})
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
}

TEST(Cli, LateMulticastReportsOneTagged) {
  auto r = cli("run " + config_path("late_multicast.json"));
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("data=6 tagged=1 ack=0"), std::string::npos) << r.out;
}

TEST(Cli, DeadlockExitsWithReport) {
  auto r = cli("run " + config_path("deadlock.json"));
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.out.find("rank 0: AWAITING_ACK"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("rank 1: AWAITING_ACK"), std::string::npos) << r.out;
}

TEST_F(TempDir, MalformedConfigNamesKey) {
  auto p = write("bad.json", "{\n  \"p\": 4,\n  \"algorithm\": \"rd\"\n}\n");
  auto r = cli("run " + p.string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("'algorithm'"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
}

TEST_F(TempDir, MissingConfigIsConfigError) {
  auto r = cli("run " + (dir / "nope.json").string());
  EXPECT_EQ(r.status, 2);
}

TEST_F(TempDir, UnknownFlagIsUsageError) {
  EXPECT_EQ(cli("run --bogus").status, 1);
  EXPECT_NE(cli("").status, 0);
}

TEST_F(TempDir, UnwritableOutputIsIoError) {
  auto r = cli("run --p 2 --csv " + (dir / "missing" / "x.csv").string());
  EXPECT_EQ(r.status, 4) << r.out;
}

TEST_F(TempDir, SeedFlagBeatsEnvBeatsFile) {
  auto cfg = write("j.json", R"({"p": 4, "algorithms": ["rd"], "modes": ["offloaded"], "iterations": 5,
                                 "seed": 5, "topology": {"jitter": 700}})");
  auto csv = [&](const std::string& extra, const std::string& env) {
    auto out = dir / "o.csv";
    auto r = cli("run " + cfg.string() + " --csv " + out.string() + extra, env);
    EXPECT_EQ(r.status, 0) << r.out;
    return slurp(out);
  };
  const auto s5 = csv("", ""), s7 = csv(" --seed 7", ""), s9 = csv(" --seed 9", "");
  ASSERT_NE(s5, s7);
  ASSERT_NE(s7, s9);
  EXPECT_EQ(csv("", "SCAN_SIM_SEED=7"), s7);
  EXPECT_EQ(csv(" --seed 9", "SCAN_SIM_SEED=7"), s9);
}

TEST_F(TempDir, CsvAndTraceFiles) {
  auto csv = dir / "o.csv", trace = dir / "o.trace";
  auto r = cli("bench " + config_path("bt_p4.json") + " --counts 1,2 --iterations 3 --warmup 1 --csv " + csv.string() +
               " --trace " + trace.string());
  EXPECT_EQ(r.status, 0) << r.out;
  auto text = slurp(csv);
  EXPECT_EQ(text.rfind(std::string(kCsvHeader) + "\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_NE(slurp(trace).find("# binomial_tree software count=2\n"), std::string::npos);
}

class GoldenCli : public ::testing::TestWithParam<const char*> {};

TEST_P(GoldenCli, DumpPacketMatchesGolden) {
  const std::string type = GetParam();
  const bool low = type == "ack" || type == "tagged_data";
  auto r = cli("dump-packet --type " + type + " --algo recursive_doubling --p 4 --rank 1 --dst 0 --epoch 7 --range-lo " +
               (low ? "0" : "1") + " --range-hi " + (type == "ack" ? "0" : "1") +
               " --values 1,2,-3,2147483647 --elapsed 345 --id 4660");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(r.out, slurp(fs::path(SCANSIM_SOURCE_DIR) / "tests/golden" / (type + ".hex")));
}

INSTANTIATE_TEST_SUITE_P(Types, GoldenCli,
                         ::testing::Values("scan_request", "data", "ack", "result", "tagged_data"));
