// SPDX-License-Identifier: Apache-2.0
#include "rflpa/cli.h"

#include <sodium.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "rflpa/errors.h"
#include "rflpa/packed_shamir.h"

namespace rflpa::cli {

namespace {

// Strict view of one JSON object: every key must be consumed.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  template <typename T>
  std::optional<T> opt(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    const Json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name(key) + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(name(key) + ": expected a non-negative integer");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!v.is_number()) throw ConfigError(name(key) + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(name(key) + ": expected a string");
    }
    try {
      return v.get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(name(key) + ": wrong type");
    }
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    return opt<T>(key).value_or(fallback);
  }

  template <typename T>
  T required(const std::string& key) {
    auto v = opt<T>(key);
    if (!v) throw ConfigError(name(key) + ": required field is missing");
    return *v;
  }

  const Json* object(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  template <typename T>
  std::vector<T> list(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(name(key) + ": required field is missing");
    const Json& v = j_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(name(key) + ": expected a non-empty array");
    try {
      return v.get<std::vector<T>>();
    } catch (const Json::exception&) {
      throw ConfigError(name(key) + ": wrong element type");
    }
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(name(k) + ": unknown field");
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string hex(std::span<const unsigned char> bytes) {
  std::ostringstream s;
  for (unsigned char b : bytes) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(b);
  return s.str();
}

fl::ClientBehavior parse_behavior_block(Fields& f, const std::string& path) {
  fl::ClientBehavior b;
  b.kind = fl::parse_behavior(f.required<std::string>("behavior"));
  const auto round = f.get<unsigned>("dropout_round", 1);
  if (round > 4) throw ConfigError(path + ".dropout_round: must lie in [0, 4]");
  b.dropout_round = static_cast<std::uint8_t>(round);
  return b;
}

}  // namespace

std::string config_hash(const Json& config) {
  const std::string canonical = config.dump();
  std::array<unsigned char, 16> out{};
  if (sodium_init() < 0) throw Error("libsodium initialization failed");
  crypto_generichash(out.data(), out.size(), reinterpret_cast<const unsigned char*>(canonical.data()),
                     canonical.size(), nullptr, 0);
  return hex(out);
}

protocol::ProtocolConfig parse_protocol(const Json& j, const std::string& path) {
  Fields f(j, path);
  protocol::ProtocolConfig c;
  c.pack = f.opt<std::size_t>("pack");
  c.reshare_pack = f.opt<std::size_t>("reshare_pack");
  c.degree = f.opt<std::size_t>("degree");
  c.threshold = f.opt<std::size_t>("threshold");
  c.corruption = f.opt<std::size_t>("corruption");
  c.field.prime = f.get<std::uint64_t>("prime", c.field.prime);
  c.field.scale = f.get<std::uint64_t>("scale", c.field.scale);
  c.field.max_norm = f.get<double>("max_norm", c.field.max_norm);
  c.backend = vss::parse_backend(f.get<std::string>("backend", vss::backend_name(c.backend)));
  c.simulated_crypto = f.get<bool>("simulated_crypto", c.simulated_crypto);
  const auto route = f.get<std::string>("route", "matrix");
  if (route == "matrix")
    c.route = dotprod::ReductionRoute::kMatrix;
  else if (route == "combined")
    c.route = dotprod::ReductionRoute::kCombined;
  else
    throw ConfigError(f.name("route") + ": expected 'matrix' or 'combined'");
  f.finish();
  return c;
}

fl::SyntheticTask parse_task(const Json& j, std::uint64_t default_seed) {
  Fields f(j, "task");
  fl::SyntheticTask t;
  t.seed = f.get<std::uint64_t>("seed", default_seed);
  t.clients = f.required<std::size_t>("clients");
  t.feature_dim = f.get<std::size_t>("feature_dim", t.feature_dim);
  t.classes = f.get<std::size_t>("classes", t.classes);
  t.samples_per_client = f.get<std::size_t>("samples_per_client", t.samples_per_client);
  t.root_samples = f.required<std::size_t>("root_samples");
  t.test_samples = f.get<std::size_t>("test_samples", t.test_samples);
  t.separation = f.get<double>("separation", t.separation);
  t.dirichlet_alpha = f.opt<double>("dirichlet_alpha");
  t.redraw_every = f.get<std::size_t>("redraw_every", t.redraw_every);
  f.finish();
  t.validate();
  return t;
}

namespace {

// Shared by train and attack-eval; the caller consumes its own extra keys.
fl::ExperimentConfig parse_experiment_fields(Fields& f) {
  fl::ExperimentConfig c;
  c.seed = f.get<std::uint64_t>("seed", c.seed);
  const Json* task = f.object("task");
  if (!task) throw ConfigError("task: required field is missing");
  c.task = parse_task(*task, c.seed);
  c.iterations = f.get<std::size_t>("iterations", c.iterations);
  c.learning_rate = f.get<double>("learning_rate", c.learning_rate);
  c.decay = f.get<double>("decay", c.decay);
  c.trim = f.get<double>("trim", c.trim);
  if (const Json* p = f.object("protocol")) c.protocol = parse_protocol(*p);
  return c;
}

}  // namespace

fl::ExperimentConfig parse_experiment(const Json& j) {
  Fields f(j, "");
  auto c = parse_experiment_fields(f);
  c.aggregator = fl::parse_aggregator(f.get<std::string>("aggregator", "rflpa"));
  if (const Json* a = f.object("attack")) {
    Fields af(*a, "attack");
    const auto b = parse_behavior_block(af, "attack");
    const double fraction = af.required<double>("fraction");
    af.finish();
    c.behaviors = fl::assign_behaviors(c.task.clients, fraction, b, Rng::derive(c.seed, 0xbe));
  }
  f.finish();
  c.validate();
  return c;
}

AttackSweep parse_attack_sweep(const Json& j) {
  Fields f(j, "");
  AttackSweep s;
  s.base = parse_experiment_fields(f);
  for (const auto& name : f.list<std::string>("aggregators")) s.aggregators.push_back(fl::parse_aggregator(name));
  const Json* a = f.object("attack");
  if (!a) throw ConfigError("attack: required field is missing");
  Fields af(*a, "attack");
  s.behavior = parse_behavior_block(af, "attack");
  s.fractions = af.list<double>("fractions");
  af.finish();
  f.finish();
  s.base.validate();
  return s;
}

BenchSweep parse_bench(const Json& j) {
  Fields f(j, "");
  BenchSweep s;
  s.clients = f.list<std::size_t>("clients");
  s.dimensions = f.list<std::size_t>("dimensions");
  s.backend = vss::parse_backend(f.get<std::string>("backend", "pairing"));
  s.simulated_crypto = f.get<bool>("simulated_crypto", true);
  s.unpacked = f.get<bool>("unpacked", true);
  s.repeats = f.get<std::size_t>("repeats", 1);
  s.seed = f.get<std::uint64_t>("seed", 1);
  f.finish();
  if (s.repeats == 0) throw ConfigError("repeats: must be positive");
  return s;
}

protocol::ProtocolConfig bench_point(std::size_t clients, std::size_t dimension, bool packed, vss::Backend backend,
                                     bool simulated, std::uint64_t seed) {
  protocol::ProtocolConfig c;
  c.clients = clients;
  c.dimension = dimension;
  c.threshold = clients;
  c.corruption = 0;
  c.degree = (4 * clients) / 10;
  c.pack = packed ? (clients + 9) / 10 : 1;
  c.reshare_pack = c.pack;
  c.backend = backend;
  c.simulated_crypto = simulated;
  c.seed = seed;
  return c.resolved();
}

namespace {

template <typename Visit>
void for_each_point(const BenchSweep& sweep, Visit&& visit) {
  for (std::size_t n : sweep.clients)
    for (std::size_t m : sweep.dimensions)
      for (bool packed : {true, false}) {
        if (!packed && !sweep.unpacked) continue;
        try {
          auto cfg = bench_point(n, m, packed, sweep.backend, sweep.simulated_crypto, sweep.seed);
          cfg.validate();
          visit(cfg, packed);
        } catch (const ConfigError& e) {
          spdlog::warn("sweep point N={} M={} {} skipped: {}", n, m, packed ? "packed" : "unpacked", e.what());
        }
      }
}

CostRecord base_record(const protocol::ProtocolConfig& cfg, bool packed, const char* role, std::string phase) {
  CostRecord r;
  r.variant = packed ? "packed" : "unpacked";
  r.clients = cfg.clients;
  r.dimension = cfg.dimension;
  r.pack = *cfg.pack;
  r.degree = *cfg.degree;
  r.role = role;
  r.phase = std::move(phase);
  return r;
}

// Per-client means and server totals for rounds 0..4 plus a total row.
void mailbox_records(const protocol::ProtocolConfig& cfg, bool packed, const channel::ServerMailbox& box,
                     const std::map<std::uint8_t, protocol::PhaseTimes>& times, std::vector<CostRecord>& out) {
  CostRecord client_total = base_record(cfg, packed, "client", "total");
  CostRecord server_total = base_record(cfg, packed, "server", "total");
  for (std::uint8_t round = 0; round <= 4; ++round) {
    auto c = base_record(cfg, packed, "client", "round" + std::to_string(round));
    for (channel::PartyId i = 0; i < cfg.clients; ++i) {
      c.bytes_sent += box.count(i, round).sent;
      c.bytes_received += box.count(i, round).received;
    }
    c.bytes_sent /= cfg.clients;
    c.bytes_received /= cfg.clients;
    auto s = base_record(cfg, packed, "server", "round" + std::to_string(round));
    s.bytes_sent = box.count(channel::kServer, round).sent;
    s.bytes_received = box.count(channel::kServer, round).received;
    if (auto it = times.find(round); it != times.end()) {
      c.wall_ns = 1e9 * it->second.client_seconds / static_cast<double>(cfg.clients);
      s.wall_ns = 1e9 * it->second.server_seconds;
    }
    for (auto* t : {&client_total, &server_total}) {
      const auto& src = t == &client_total ? c : s;
      t->bytes_sent += src.bytes_sent;
      t->bytes_received += src.bytes_received;
      t->wall_ns += src.wall_ns;
    }
    out.push_back(std::move(c));
    out.push_back(std::move(s));
  }
  out.push_back(std::move(client_total));
  out.push_back(std::move(server_total));
}

}  // namespace

std::vector<CostRecord> bench_comm(const BenchSweep& sweep) {
  std::vector<CostRecord> out;
  for_each_point(sweep, [&](const protocol::ProtocolConfig& cfg, bool packed) {
    const auto scheme = vss::setup(cfg.backend, true, *cfg.degree, sweep.seed);
    channel::ServerMailbox box;
    protocol::plan_traffic(cfg, {}, box, scheme->commitment_bytes(), scheme->witness_bytes());
    mailbox_records(cfg, packed, box, {}, out);
  });
  return out;
}

std::vector<CostRecord> bench_comp(const BenchSweep& sweep) {
  std::vector<CostRecord> out;
  for_each_point(sweep, [&](const protocol::ProtocolConfig& cfg, bool packed) {
    protocol::Session session(cfg);
    Rng rng(Rng::derive(sweep.seed, cfg.clients, cfg.dimension));
    std::map<std::uint8_t, protocol::PhaseTimes> times;
    for (std::size_t rep = 0; rep < sweep.repeats; ++rep) {
      protocol::IterationInput in;
      in.iteration = rep;
      in.model.assign(cfg.dimension, 0.0);
      for (std::size_t c = 0; c < cfg.dimension; ++c) in.server_gradient.push_back(rng.normal(0, 0.01));
      for (std::size_t i = 0; i < cfg.clients; ++i) {
        std::vector<double> g(cfg.dimension);
        for (std::size_t c = 0; c < cfg.dimension; ++c) g[c] = in.server_gradient[c] + rng.normal(0, 0.01);
        in.client_gradients.push_back(std::move(g));
      }
      session.mailbox().reset_counters();
      auto r = session.run_iteration(in);
      if (r.aborted) throw Error("bench-comp: honest iteration aborted: " + r.abort_reason);
      for (const auto& [round, t] : r.times) {
        times[round].client_seconds += t.client_seconds / static_cast<double>(sweep.repeats);
        times[round].server_seconds += t.server_seconds / static_cast<double>(sweep.repeats);
      }
    }
    mailbox_records(cfg, packed, session.mailbox(), times, out);
  });
  return out;
}

void write_cost_csv(const std::vector<CostRecord>& records, const std::string& hash, std::uint64_t seed,
                    std::ostream& out) {
  out << "# config_hash=" << hash << " seed=" << seed << '\n';
  out << "variant,clients,dimension,pack,degree,role,phase,bytes_sent,bytes_received,wall_ns\n";
  for (const auto& r : records)
    out << r.variant << ',' << r.clients << ',' << r.dimension << ',' << r.pack << ',' << r.degree << ',' << r.role
        << ',' << r.phase << ',' << r.bytes_sent << ',' << r.bytes_received << ',' << std::fixed
        << std::setprecision(0) << r.wall_ns << std::defaultfloat << '\n';
}

// ---------------------------------------------------------------------------

std::vector<VerifyLine> verify(std::uint64_t seed) {
  std::vector<VerifyLine> out;
  auto check = [&](const char* name, auto&& body) {
    try {
      std::string detail;
      const bool ok = body(detail);
      out.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  };
  Rng rng(seed);

  check("field_encode_quantize", [&](std::string& detail) {
    const PrimeField f;
    const std::uint64_t q = kDefaultScale;
    for (int i = 0; i < 10000; ++i) {
      const auto v = static_cast<std::int64_t>(rng.uniform(f.modulus() / 2)) * (rng() & 1 ? 1 : -1);
      if (f.decode(f.encode(v)) != v) {
        detail = "decode(encode(v)) != v";
        return false;
      }
      const double x = rng.normal(0, 10);
      if (std::abs(static_cast<double>(quantize(x, q)) / q - x) > 1.0 / q) {
        detail = "quantization error above 1/q";
        return false;
      }
    }
    return true;
  });

  check("packed_sharing_reconstruct", [&](std::string& detail) {
    const PrimeField f;
    auto cfg = shamir::make_config(shamir::SharingConfig::standard(f, 3, 6, 12));
    FeVec secrets = {f.random(rng), f.random(rng), f.random(rng)};
    auto set = shamir::share(secrets, cfg, rng);
    std::vector<shamir::IndexedShare> subset;
    for (std::size_t j = 12; j-- > 5;) subset.push_back({j, set.shares[j]});
    const bool ok = shamir::reconstruct(*cfg, subset, 6) == secrets;
    if (!ok) detail = "reconstruction from the last d + 1 shares differs";
    return ok;
  });

  check("reed_solomon_errors_and_erasures", [&](std::string& detail) {
    const PrimeField f;
    auto cfg = shamir::make_config(shamir::SharingConfig::standard(f, 1, 5, 20));
    for (int trial = 0; trial < 20; ++trial) {
      auto set = shamir::share(FeVec{f.random(rng)}, cfg, rng);
      std::vector<std::optional<Fe>> slots(set.shares.begin(), set.shares.end());
      slots[0].reset();
      slots[7].reset();
      std::set<std::size_t> planted = {3, 11, 19};
      for (auto p : planted) slots[p] = f.add(*slots[p], f.one());
      auto r = shamir::rs_decode(*cfg, slots, 5);
      if (r.secrets != shamir::reconstruct(set) ||
          std::set<std::size_t>(r.corrupted.begin(), r.corrupted.end()) != planted) {
        detail = "wrong polynomial or error positions";
        return false;
      }
    }
    return true;
  });

  check("commitment_detects_bad_share", [&](std::string& detail) {
    const PrimeField f;
    for (auto backend : {vss::Backend::kPairing, vss::Backend::kCoefficient}) {
      auto scheme = vss::setup(backend, true, 4, seed);
      poly::Poly phi(5);
      for (auto& c : phi) c = f.random(rng);
      const auto c = scheme->commit(phi);
      auto w = scheme->open(phi, Fe{9});
      if (!scheme->verify(c, w)) {
        detail = vss::backend_name(backend) + ": honest opening rejected";
        return false;
      }
      w.value = f.add(w.value, f.one());
      if (scheme->verify(c, w)) {
        detail = vss::backend_name(backend) + ": wrong value accepted";
        return false;
      }
    }
    return true;
  });

  protocol::ProtocolConfig pc;
  pc.clients = 10;
  pc.dimension = 16;
  pc.pack = 2;
  pc.degree = 3;
  pc.threshold = 10;
  pc.corruption = 0;
  pc.seed = seed;
  protocol::IterationInput in;
  in.model.assign(16, 0.0);
  for (int c = 0; c < 16; ++c) in.server_gradient.push_back(rng.normal(0, 0.3));
  for (int i = 0; i < 10; ++i) {
    std::vector<double> g(16);
    for (int c = 0; c < 16; ++c) g[c] = (i % 3 == 2 ? -1 : 1) * in.server_gradient[c] + rng.normal(0, 0.2);
    in.client_gradients.push_back(std::move(g));
  }
  protocol::Session session(pc);
  session.capture_deliveries(true);
  const auto result = session.run_iteration(in);

  check("secure_aggregate_matches_plaintext", [&](std::string& detail) {
    if (result.aborted) {
      detail = result.abort_reason;
      return false;
    }
    const auto plain = protocol::fltrust_aggregate(in.client_gradients, in.server_gradient);
    for (std::size_t c = 0; c < 16; ++c)
      if (std::abs(plain.gradient[c] - result.gradient[c]) > 1e-3) {
        detail = "coordinate " + std::to_string(c) + " differs";
        return false;
      }
    return true;
  });

  check("traffic_plan_matches_counters", [&](std::string& detail) {
    channel::ServerMailbox planned;
    protocol::plan_traffic(pc, {}, planned, session.scheme().commitment_bytes(), session.scheme().witness_bytes());
    for (channel::PartyId p = 0; p < 10; ++p)
      if (planned.total(p).sent != session.mailbox().total(p).sent ||
          planned.total(p).received != session.mailbox().total(p).received) {
        detail = "party " + std::to_string(p);
        return false;
      }
    return true;
  });

  check("tampered_shares_rejected", [&](std::string& detail) {
    const auto& wire = session.captured_round1().at(1).at(0);
    if (!session.accepts_shares(1, wire, 0)) {
      detail = "untouched message rejected";
      return false;
    }
    for (int i = 0; i < 256; ++i) {
      auto bad = wire;
      const auto bit = rng.uniform(bad.size() * 8);
      bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      if (session.accepts_shares(1, bad, 0)) {
        detail = "bit " + std::to_string(bit) + " accepted";
        return false;
      }
    }
    return true;
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
}

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / name);
  if (!f) throw Error("cannot write " + (dir / name).string());
  return f;
}

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string crypto;
  std::string backend;
};

void apply_protocol_overrides(Json& protocol, const CommonOptions& o) {
  if (!protocol.is_object()) protocol = Json::object();
  if (!o.crypto.empty()) protocol["simulated_crypto"] = o.crypto == "sim";
  if (!o.backend.empty()) protocol["backend"] = o.backend;
}

Json summary_header(const char* command, const Json& config, std::uint64_t seed) {
  return Json{{"command", command}, {"config_hash", config_hash(config)}, {"seed", seed}};
}

int cmd_train(const CommonOptions& o, std::ostream& out) {
  Json j = load_json(o.config);
  if (o.seed) j["seed"] = *o.seed;
  if (!o.crypto.empty() || !o.backend.empty()) apply_protocol_overrides(j["protocol"], o);
  const auto cfg = parse_experiment(j);
  const auto metrics = fl::run_experiment(cfg);
  const auto hash = config_hash(j);
  {
    auto f = open_output(o.out_dir, "metrics.csv");
    f << "# config_hash=" << hash << " seed=" << cfg.seed << '\n';
    fl::write_metrics_csv(metrics, f);
  }
  auto summary = summary_header("train", j, cfg.seed);
  std::size_t aborted = 0;
  for (const auto& it : metrics.iterations) aborted += it.aborted ? 1 : 0;
  summary["aggregator"] = fl::aggregator_name(cfg.aggregator);
  summary["iterations"] = metrics.iterations.size();
  summary["aborted_iterations"] = aborted;
  summary["initial_accuracy"] = metrics.initial_accuracy;
  summary["final_accuracy"] = metrics.final_accuracy();
  open_output(o.out_dir, "summary.json") << summary.dump(2) << '\n';
  out << summary.dump() << '\n';
  return 0;
}

int cmd_attack_eval(const CommonOptions& o, std::ostream& out) {
  Json j = load_json(o.config);
  if (o.seed) j["seed"] = *o.seed;
  if (!o.crypto.empty() || !o.backend.empty()) apply_protocol_overrides(j["protocol"], o);
  const auto sweep = parse_attack_sweep(j);
  const auto hash = config_hash(j);
  auto f = open_output(o.out_dir, "attack_eval.csv");
  f << "# config_hash=" << hash << " seed=" << sweep.base.seed << '\n';
  f << "aggregator,behavior,fraction,initial_accuracy,final_accuracy,mean_trust_honest,mean_trust_malicious,"
       "aborted_iterations\n";
  f << std::setprecision(10);
  for (auto agg : sweep.aggregators)
    for (double fraction : sweep.fractions) {
      auto cfg = sweep.base;
      cfg.aggregator = agg;
      cfg.behaviors =
          fl::assign_behaviors(cfg.task.clients, fraction, sweep.behavior, Rng::derive(cfg.seed, 0xbe));
      const auto m = fl::run_experiment(cfg);
      double honest = 0, malicious = 0;
      std::size_t aborted = 0;
      for (const auto& it : m.iterations) {
        honest += it.trust_honest;
        malicious += it.trust_malicious;
        aborted += it.aborted ? 1 : 0;
      }
      const double t = std::max<double>(1.0, static_cast<double>(m.iterations.size()));
      f << fl::aggregator_name(agg) << ',' << fl::behavior_name(sweep.behavior.kind) << ',' << fraction << ','
        << m.initial_accuracy << ',' << m.final_accuracy() << ',' << honest / t << ',' << malicious / t << ','
        << aborted << '\n';
    }
  out << summary_header("attack-eval", j, sweep.base.seed).dump() << '\n';
  return 0;
}

int cmd_bench(const CommonOptions& o, bool comm, std::ostream& out) {
  Json j = load_json(o.config);
  if (o.seed) j["seed"] = *o.seed;
  if (!o.crypto.empty()) j["simulated_crypto"] = o.crypto == "sim";
  if (!o.backend.empty()) j["backend"] = o.backend;
  const auto sweep = parse_bench(j);
  const auto records = comm ? bench_comm(sweep) : bench_comp(sweep);
  const auto hash = config_hash(j);
  auto file = open_output(o.out_dir, comm ? "bench_comm.csv" : "bench_comp.csv");
  write_cost_csv(records, hash, sweep.seed, file);
  auto summary = summary_header(comm ? "bench-comm" : "bench-comp", j, sweep.seed);
  summary["records"] = records.size();
  out << summary.dump() << '\n';
  return 0;
}

int cmd_verify(const CommonOptions& o, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(1);
  bool all = true;
  for (const auto& line : verify(seed)) {
    out << (line.pass ? "PASS " : "FAIL ") << line.name;
    if (!line.detail.empty()) out << ": " << line.detail;
    out << '\n';
    all = all && line.pass;
  }
  return all ? 0 : 1;
}

void report_error(std::ostream& err, const char* type, const std::string& message) {
  err << Json{{"error", message}, {"type", type}}.dump() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust federated learning with packed secret sharing"};
  app.require_subcommand(1);
  CommonOptions o;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "JSON configuration file");
    if (needs_config) c->required();
    sub->add_option("--seed", o.seed, "Override the configured seed");
    sub->add_option("--out", o.out_dir, "Output directory");
    sub->add_option("--crypto", o.crypto, "sim or real")->check(CLI::IsMember({"sim", "real"}));
    sub->add_option("--backend", o.backend, "pairing or coefficient")
        ->check(CLI::IsMember({"pairing", "coefficient"}));
  };
  auto* train = app.add_subcommand("train", "Run a federated training experiment");
  auto* comm = app.add_subcommand("bench-comm", "Exact communication sweep");
  auto* comp = app.add_subcommand("bench-comp", "Wall-clock sweep");
  auto* attack = app.add_subcommand("attack-eval", "Accuracy under attack per aggregator");
  auto* ver = app.add_subcommand("verify", "Run the invariant self-checks");
  for (auto* s : {train, comm, comp, attack}) add_common(s, true);
  add_common(ver, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage_error", e.what());
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (comm->parsed()) return cmd_bench(o, true, out);
    if (comp->parsed()) return cmd_bench(o, false, out);
    if (attack->parsed()) return cmd_attack_eval(o, out);
    return cmd_verify(o, out);
  } catch (const ConfigError& e) {
    report_error(err, "config_error", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(err, "runtime_error", e.what());
    return 1;
  }
}

}  // namespace rflpa::cli
