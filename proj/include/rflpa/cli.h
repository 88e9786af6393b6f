// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: JSON configuration, cost sweeps and CSV output.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "rflpa/fl_sim.h"
#include "rflpa/protocol.h"

namespace rflpa::cli {

using Json = nlohmann::json;

// Hex BLAKE2b-128 of the canonical dump (sorted keys, no whitespace).
std::string config_hash(const Json& config);

// Strict parsers: unknown keys and missing required keys throw ConfigError
// naming the dotted field path.
protocol::ProtocolConfig parse_protocol(const Json& j, const std::string& path = "protocol");
fl::SyntheticTask parse_task(const Json& j, std::uint64_t default_seed);
fl::ExperimentConfig parse_experiment(const Json& j);

struct AttackSweep {
  fl::ExperimentConfig base;
  std::vector<fl::Aggregator> aggregators;
  fl::ClientBehavior behavior;
  std::vector<double> fractions;
};
AttackSweep parse_attack_sweep(const Json& j);

struct BenchSweep {
  std::vector<std::size_t> clients;
  std::vector<std::size_t> dimensions;
  vss::Backend backend = vss::Backend::kPairing;
  bool simulated_crypto = true;
  bool unpacked = true;  // also run the l = p = 1 baseline
  std::size_t repeats = 1;
  std::uint64_t seed = 1;
};
BenchSweep parse_bench(const Json& j);

// K = N, A = 0, d = floor(0.4 N), l = p = ceil(0.1 N); l = p = 1 unpacked.
protocol::ProtocolConfig bench_point(std::size_t clients, std::size_t dimension, bool packed, vss::Backend backend,
                                     bool simulated, std::uint64_t seed);

struct CostRecord {
  std::string variant;  // "packed" or "unpacked"
  std::size_t clients = 0, dimension = 0, pack = 0, degree = 0;
  std::string role;   // "client" (per client) or "server"
  std::string phase;  // "round0".."round4" or "total"
  std::uint64_t bytes_sent = 0, bytes_received = 0;
  double wall_ns = 0;
};

// Exact byte counts from the size-only traffic plan.
std::vector<CostRecord> bench_comm(const BenchSweep& sweep);
// Materialized runs: bytes from the mailbox and wall-clock per phase.
std::vector<CostRecord> bench_comp(const BenchSweep& sweep);

void write_cost_csv(const std::vector<CostRecord>& records, const std::string& hash, std::uint64_t seed,
                    std::ostream& out);

struct VerifyLine {
  std::string name;
  bool pass = false;
  std::string detail;
};
// Fast invariant checks over every module.
std::vector<VerifyLine> verify(std::uint64_t seed);

// Full command-line entry point. Returns the process exit code; errors are
// printed to err as one JSON object.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rflpa::cli
