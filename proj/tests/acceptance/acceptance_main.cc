// SPDX-License-Identifier: Apache-2.0
//
// Acceptance driver: one PASS/FAIL line per criterion. Optional arguments
// select criteria by number, e.g. `acceptance 3 5`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "plaintext_oracle.h"
#include "rflpa/cli.h"
#include "rflpa/dotprod.h"
#include "rflpa/fl_sim.h"
#include "rflpa/packed_shamir.h"
#include "rflpa/protocol.h"
#include "rflpa/vss.h"

namespace rflpa::acceptance {
namespace {

using channel::PartyId;
using i128 = __int128;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few failures of one criterion.
class Tally {
 public:
  void check(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_ << (failures_ > 1 ? "; " : "") << what;
  }
  std::size_t checks() const { return checks_; }
  Outcome finish(const std::string& summary) const {
    std::ostringstream s;
    s << summary << ", " << checks_ << " checks";
    if (failures_) s << ", " << failures_ << " failed: " << notes_.str();
    return {failures_ == 0, s.str()};
  }

 private:
  std::size_t checks_ = 0, failures_ = 0;
  std::ostringstream notes_;
};

std::string fmt_double(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::uint64_t mod_of(i128 x, std::uint64_t p) {
  const i128 r = x % static_cast<i128>(p);
  return static_cast<std::uint64_t>(r < 0 ? r + p : r);
}

// ---------------------------------------------------------------------------
// 1. Field arithmetic, signed encoding and quantization.

Outcome field_suite() {
  Tally t;
  {
    const std::uint64_t p = 31;
    PrimeField f(p);
    for (std::uint64_t a = 0; a < p; ++a) {
      for (std::uint64_t b = 0; b < p; ++b) {
        t.check(f.add(Fe{a}, Fe{b}).v == (a + b) % p, "F31 add");
        t.check(f.sub(Fe{a}, Fe{b}).v == (a + p - b) % p, "F31 sub");
        t.check(f.mul(Fe{a}, Fe{b}).v == a * b % p, "F31 mul");
        if (b != 0) t.check(f.mul(f.div(Fe{a}, Fe{b}), Fe{b}).v == a, "F31 div");
      }
      std::uint64_t power = 1;
      for (std::uint64_t e = 0; e < 2 * p; ++e) {
        t.check(f.pow(Fe{a}, e).v == power, "F31 pow");
        power = power * a % p;
      }
      if (a != 0) t.check(f.mul(f.inv(Fe{a}), Fe{a}).v == 1, "F31 inv");
    }
    bool threw = false;
    try {
      f.inv(Fe{0});
    } catch (const DomainError&) {
      threw = true;
    }
    t.check(threw, "F31 inv(0) must throw");
    const std::int64_t half = static_cast<std::int64_t>(p / 2);
    for (std::int64_t x = -half; x <= half; ++x) {
      t.check(f.decode(f.encode(x)) == x, "F31 encode round trip");
      t.check(f.encode(x).v == mod_of(x, p), "F31 encode residue");
      for (std::int64_t y = -half; y <= half; ++y)
        if (std::abs(x + y) <= half)
          t.check(f.decode(f.add(f.encode(x), f.encode(y))) == x + y, "F31 signed sum");
    }
    for (std::int64_t x : {half + 1, -half - 1}) {
      threw = false;
      try {
        f.encode(x);
      } catch (const OverflowError&) {
        threw = true;
      }
      t.check(threw, "F31 encode outside range must throw");
    }
    FeVec nonzero;
    for (std::uint64_t a = 1; a < p; ++a) nonzero.push_back(Fe{a});
    const auto inv = f.batch_inv(nonzero);
    for (std::size_t i = 0; i < nonzero.size(); ++i) t.check(f.mul(inv[i], nonzero[i]).v == 1, "F31 batch_inv");
  }
  {
    const std::uint64_t p = kMersenne61;
    PrimeField f;
    Rng rng(101);
    const std::uint64_t q = kDefaultScale;
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
      const Fe a = f.random(rng), b = f.random(rng);
      t.check(f.add(a, b).v == static_cast<std::uint64_t>((static_cast<u128>(a.v) + b.v) % p), "P61 add");
      t.check(f.sub(a, b).v == mod_of(static_cast<i128>(a.v) - b.v, p), "P61 sub");
      t.check(f.mul(a, b).v == static_cast<std::uint64_t>(static_cast<u128>(a.v) * b.v % p), "P61 mul");
      const u128 wide = (static_cast<u128>(rng()) << 64) | rng();
      t.check(f.reduce(wide) == static_cast<std::uint64_t>(wide % p), "P61 reduce");
      if (a.v != 0) t.check(static_cast<u128>(f.inv(a).v) * a.v % p == 1, "P61 inv");
      const std::int64_t x = static_cast<std::int64_t>(rng.uniform(p)) - static_cast<std::int64_t>(p / 2);
      t.check(f.decode(f.encode(x)) == x, "P61 encode round trip");
      t.check(f.encode(x).v == mod_of(x, p), "P61 encode residue");

      // Quantization: truncation toward zero, error at most 1/q.
      const double magnitude = std::pow(10.0, -4 + 8 * rng.unit());
      const double real = (rng.unit() < 0.5 ? -1 : 1) * magnitude * rng.unit();
      const std::int64_t v = quantize(real, q);
      const double err = std::fabs(static_cast<double>(v) / q - real);
      worst = std::max(worst, err);
      t.check(err <= 1.0 / q, "quantization error above 1/q");
      t.check(std::fabs(static_cast<double>(v)) <= std::fabs(real) * q, "quantization must not grow |x|");
      t.check(v == oracle::oracle_quantize(real, q), "quantization differs from oracle");
    }
    // Normalization of whole vectors keeps the per-coordinate bound.
    for (int i = 0; i < 200; ++i) {
      std::vector<double> g(16);
      for (auto& x : g) x = rng.normal(0, std::pow(10.0, -3 + 6 * rng.unit()));
      const double target = 0.1 + 1.9 * rng.unit();
      const auto v = protocol::normalize_and_quantize(g, target, q);
      const double factor = target / protocol::l2_norm(g);
      for (std::size_t c = 0; c < g.size(); ++c)
        t.check(std::fabs(static_cast<double>(v[c]) / q - factor * g[c]) <= 1.0 / q, "normalized coordinate");
    }
    bool threw = false;
    try {
      quantize(static_cast<double>(p), q);
    } catch (const OverflowError&) {
      threw = true;
    }
    t.check(threw, "quantize overflow must throw");
    return t.finish("exhaustive F_31, 10^4 random cases in F_(2^61-1), worst quantization error " +
                    fmt_double(worst * q) + "/q");
  }
}

// ---------------------------------------------------------------------------
// 2. Secrecy by enumeration: F_31, l = 2, d = 3, N = 8. Every pair of shares
// has the same joint distribution for every secret pair.

Outcome secrecy_enumeration() {
  const std::uint64_t p = 31;
  PrimeField f(p);
  auto cfg = shamir::make_config(shamir::SharingConfig::standard(f, 2, 3, 8));
  shamir::Dealer dealer(cfg);
  constexpr std::size_t kPairs = 28;
  auto histograms = [&](Fe s0, Fe s1) {
    std::vector<int> h(kPairs * p * p, 0);
    const FeVec secrets{s0, s1};
    for (std::uint64_t r0 = 0; r0 < p; ++r0)
      for (std::uint64_t r1 = 0; r1 < p; ++r1) {
        const auto shares = dealer.evaluate(dealer.polynomial(secrets, FeVec{Fe{r0}, Fe{r1}}));
        std::size_t k = 0;
        for (std::size_t a = 0; a < 8; ++a)
          for (std::size_t b = a + 1; b < 8; ++b, ++k) ++h[(k * p + shares[a].v) * p + shares[b].v];
      }
    return h;
  };
  Tally t;
  const auto reference = histograms(Fe{0}, Fe{0});
  t.check(std::all_of(reference.begin(), reference.end(), [](int c) { return c == 1; }),
          "reference histogram not uniform");
  for (std::uint64_t s0 = 0; s0 < p; ++s0)
    for (std::uint64_t s1 = 0; s1 < p; ++s1)
      if (s0 || s1)
        t.check(histograms(Fe{s0}, Fe{s1}) == reference,
                "secret (" + std::to_string(s0) + "," + std::to_string(s1) + ") differs");
  return t.finish("961 secret pairs x 961 masks x 28 share pairs");
}

// ---------------------------------------------------------------------------
// 3. Reed-Solomon decoding: N = 20, d = 5, 3 errors and 2 erasures.

Outcome reed_solomon() {
  PrimeField f;
  auto cfg = shamir::make_config(shamir::SharingConfig::standard(f, 3, 5, 20));
  shamir::Dealer dealer(cfg);
  Rng rng(303);
  Tally t;
  for (int trial = 0; trial < 100; ++trial) {
    FeVec secrets;
    for (int i = 0; i < 3; ++i) secrets.push_back(f.random(rng));
    auto phi = dealer.polynomial(secrets, rng);
    const auto shares = dealer.evaluate(phi);
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::optional<Fe>> slots(shares.begin(), shares.end());
    slots[order[0]].reset();
    slots[order[1]].reset();
    const std::set<std::size_t> planted{order[2], order[3], order[4]};
    for (auto i : planted) slots[i] = f.add(*slots[i], f.random_nonzero(rng));
    const std::string tag = "trial " + std::to_string(trial);
    try {
      auto res = shamir::rs_decode(*cfg, slots, 5);
      auto got = res.polynomial, want = phi;
      poly::trim(got);
      poly::trim(want);
      t.check(got == want, tag + ": polynomial");
      t.check(res.secrets == secrets, tag + ": secrets");
      t.check(std::set<std::size_t>(res.corrupted.begin(), res.corrupted.end()) == planted, tag + ": error set");
    } catch (const DecodeError& e) {
      t.check(false, tag + ": " + e.what());
    }
  }
  return t.finish("100 trials");
}

// ---------------------------------------------------------------------------
// 4. Commitment soundness against a dealer splitting recipients between two
// polynomials while committing to one.

Outcome vss_soundness() {
  PrimeField f;
  Tally t;
  Rng rng(404);
  constexpr std::size_t kDegree = 4, kRecipients = 8;
  std::size_t trials = 0, off_polynomial = 0, rejected = 0;
  for (auto backend : {vss::Backend::kPairing, vss::Backend::kCoefficient}) {
    auto scheme = vss::setup(backend, false, kDegree, 4040 + static_cast<int>(backend));
    const int count = backend == vss::Backend::kPairing ? 700 : 300;
    for (int trial = 0; trial < count; ++trial, ++trials) {
      poly::Poly committed(kDegree + 1), other(kDegree + 1);
      for (auto& c : committed) c = f.random(rng);
      do {
        for (auto& c : other) c = f.random(rng);
      } while (other == committed);
      // Nonempty proper subset of recipients gets the second polynomial.
      std::uint64_t mask = 0;
      while (mask == 0 || mask == (1u << kRecipients) - 1) mask = rng.uniform(1u << kRecipients);
      const auto c = scheme->commit(committed);
      bool someone_rejects = false;
      for (std::size_t j = 0; j < kRecipients; ++j) {
        const Fe x{kDegree + 1 + j};
        const bool split = (mask >> j) & 1;
        const auto w = scheme->open(split ? other : committed, x);
        const bool ok = scheme->verify(c, x, w.value, w);
        const bool differs = w.value != poly::eval(f, committed, x);
        if (!split) t.check(ok, "honest share rejected");
        if (differs) {
          ++off_polynomial;
          if (!ok) ++rejected;
          t.check(!ok, "off-polynomial share accepted");
        }
        someone_rejects = someone_rejects || !ok;
      }
      t.check(someone_rejects, vss::backend_name(backend) + " trial " + std::to_string(trial) + " undetected");
    }
  }
  return t.finish(std::to_string(trials) + " trials (pairing and coefficient), " + std::to_string(rejected) + "/" +
                  std::to_string(off_polynomial) + " off-polynomial shares rejected");
}

// ---------------------------------------------------------------------------
// 5. Dot-product aggregation is exact.

struct PipelineCase {
  std::size_t n, m, l, p, d;
  int trials;
};

struct Configs {
  shamir::ConfigPtr gradient, reshare;
};

Configs make_configs(const PrimeField& f, std::size_t l, std::size_t p, std::size_t d, std::size_t n) {
  const std::size_t offset = std::max(l, p);
  return {shamir::make_config(shamir::SharingConfig::standard(f, l, d, n, offset)),
          shamir::make_config(shamir::SharingConfig::standard(f, p, d, n, offset))};
}

std::vector<std::int64_t> random_ints(Rng& rng, std::size_t m, std::int64_t bound) {
  std::vector<std::int64_t> v(m);
  for (auto& x : v) x = static_cast<std::int64_t>(rng.uniform(2 * bound + 1)) - bound;
  return v;
}

i128 plain_dot(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  i128 s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<i128>(a[i]) * b[i];
  return s;
}

// Per-slot partial products of one user, reconstructed from every party's
// local degree-2d shares.
std::vector<std::int64_t> slot_partials(const Configs& cfgs, const std::vector<std::int64_t>& user,
                                        const std::vector<std::int64_t>& server, Rng& rng) {
  const auto& cfg = *cfgs.gradient;
  const auto& f = cfg.field;
  dotprod::PackingLayout layout(server.size(), cfg.pack);
  shamir::Dealer dealer(cfgs.gradient);
  auto deal = [&](const std::vector<std::int64_t>& v) {
    auto blocks = layout.split(encode_vector(f, v));
    std::vector<FeVec> held(cfg.num_shares(), FeVec(blocks.size()));
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto s = dealer.share(blocks[b], rng).shares;
      for (std::size_t i = 0; i < s.size(); ++i) held[i][b] = s[i];
    }
    return held;
  };
  const auto user_held = deal(user), server_held = deal(server);
  std::vector<shamir::IndexedShare> shares;
  std::size_t degree = 0;
  for (std::size_t i = 0; i < cfg.num_shares(); ++i) {
    const std::vector<FeVec> mine{user_held[i]};
    const auto part = dotprod::local_partial_products(f, mine, server_held[i], cfg.degree);
    shares.push_back({i, part.cs[0]});
    degree = part.degree;
  }
  return decode_vector(f, shamir::reconstruct(cfg, shares, degree));
}

Outcome dotprod_exactness() {
  PrimeField f;
  Tally t;
  {
    // Three slots over a length-6 vector: chunk sums 0, 15, -9.
    const std::vector<std::int64_t> user{2, -1, 4, 5, 6, 3}, server{1, 2, 0, 3, -2, 1};
    Rng rng(505);
    const auto partial = slot_partials(make_configs(f, 3, 3, 3, 7), user, server, rng);
    t.check(partial == std::vector<std::int64_t>{0, 15, -9}, "worked example partials");
    const auto cfgs = make_configs(f, 3, 1, 3, 8);
    const std::vector<FeVec> users{encode_vector(f, user)};
    const auto res = dotprod::run_pipeline(cfgs.gradient, cfgs.reshare, users, encode_vector(f, server), rng);
    t.check(f.decode(res.dots.values[0]) == 6, "worked example final value");
    t.check(f.decode(res.norms.values[0]) == 91, "worked example norm");
  }
  const std::vector<PipelineCase> cases = {{10, 20, 2, 2, 3, 300}, {3, 4, 1, 1, 1, 150},  {7, 9, 3, 2, 3, 150},
                                           {12, 30, 3, 4, 5, 150}, {15, 16, 2, 3, 4, 150}, {50, 64, 5, 5, 20, 100}};
  int trials = 0;
  for (const auto& c : cases) {
    const auto cfgs = make_configs(f, c.l, c.p, c.d, c.n);
    Rng rng(5050 + c.n);
    for (int trial = 0; trial < c.trials; ++trial, ++trials) {
      std::vector<std::vector<std::int64_t>> users;
      std::vector<FeVec> encoded;
      for (std::size_t u = 0; u < c.n; ++u) {
        users.push_back(random_ints(rng, c.m, 1 << 16));
        encoded.push_back(encode_vector(f, users.back()));
      }
      const auto server = random_ints(rng, c.m, 1 << 16);
      const auto route = trial % 2 ? dotprod::ReductionRoute::kCombined : dotprod::ReductionRoute::kMatrix;
      const auto res = dotprod::run_pipeline(cfgs.gradient, cfgs.reshare, encoded, encode_vector(f, server), rng,
                                             {}, route);
      const std::string tag = "N=" + std::to_string(c.n) + " trial " + std::to_string(trial);
      bool exact = true;
      for (std::size_t u = 0; u < c.n; ++u) {
        exact = exact && f.decode(res.dots.values[u]) == plain_dot(users[u], server);
        exact = exact && f.decode(res.norms.values[u]) == plain_dot(users[u], users[u]);
      }
      t.check(exact, tag + ": value mismatch");
      t.check(res.dots.offenders.empty() && res.dots.bad_reporters.empty() && res.norms.offenders.empty(),
              tag + ": spurious offenders");
    }
  }
  return t.finish(std::to_string(trials) + " trials over " + std::to_string(cases.size()) +
                  " configurations (both reduction routes) plus the worked example");
}

// ---------------------------------------------------------------------------
// Shared input for the end-to-end criteria: clients near the server
// direction, every fourth one opposed.

protocol::IterationInput make_input(std::size_t n, std::size_t m, double server_sd, std::uint64_t seed) {
  Rng rng(seed);
  protocol::IterationInput in;
  in.model.assign(m, 0.0);
  for (std::size_t c = 0; c < m; ++c) in.server_gradient.push_back(rng.normal(0, server_sd));
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<double> g(m);
    const double sign = u % 4 == 3 ? -1.0 : 1.0;
    const double scale = 0.5 + 3 * rng.unit();
    for (std::size_t c = 0; c < m; ++c) g[c] = scale * (sign * in.server_gradient[c] + rng.normal(0, server_sd));
    in.client_gradients.push_back(std::move(g));
  }
  return in;
}

void compare_with_oracle(Tally& t, const protocol::IterationResult& r, const oracle::Oracle& o, std::uint64_t q,
                         const std::string& tag) {
  t.check(r.trust_denominator == o.server_sq, tag + ": trust denominator");
  t.check(r.trust_numerators == o.trust, tag + ": trust numerators");
  t.check(r.aggregate == o.aggregate, tag + ": aggregate");
  double worst = 0;
  for (std::size_t c = 0; c < o.gradient.size() && c < r.gradient.size(); ++c)
    worst = std::max(worst, std::fabs(r.gradient[c] - o.gradient[c]));
  t.check(r.gradient.size() == o.gradient.size() && worst <= 1.0 / q, tag + ": gradient off by " +
                                                                           fmt_double(worst * q) + "/q");
}

// 6. End-to-end with scheduled dropouts.
Outcome end_to_end() {
  protocol::ProtocolConfig cfg;
  cfg.clients = 50;
  cfg.dimension = 512;
  cfg.seed = 606;
  std::map<PartyId, std::uint8_t> drops;
  for (PartyId i = 0; i < 50; i += 5) drops[i] = 2;
  protocol::Session session(cfg, {}, drops);
  const auto in = make_input(50, 512, 0.05, 6060);
  const auto r = session.run_iteration(in);
  Tally t;
  if (r.aborted) {
    t.check(false, "aborted: " + r.abort_reason);
    return t.finish("N=50, M=512");
  }
  t.check(r.respondents[1].size() == 50 && r.respondents[2].size() == 40, "respondent sets");
  t.check(r.excluded.empty() && r.offenders.empty(), "honest run flagged someone");
  const auto o = oracle::run_oracle(in.client_gradients, in.server_gradient, cfg.field.scale, r.respondents[1], {});
  compare_with_oracle(t, r, o, cfg.field.scale, "oracle");
  const auto resolved = cfg.resolved();
  return t.finish("N=50, M=512, l=" + std::to_string(*resolved.pack) + ", d=" + std::to_string(*resolved.degree) +
                  ", K=" + std::to_string(*resolved.threshold) + ", 10 clients silent from round 2");
}

// 7. Byzantine clients up to the corruption budget.
Outcome byzantine() {
  protocol::ProtocolConfig cfg;
  cfg.clients = 50;
  cfg.dimension = 64;
  cfg.threshold = 50;
  cfg.corruption = 15;
  cfg.degree = 9;
  cfg.pack = 5;
  cfg.reshare_pack = 5;
  cfg.seed = 707;
  Tally t;
  try {
    cfg.resolved().validate();
  } catch (const ConfigError& e) {
    t.check(false, e.what());
    return t.finish("config");
  }
  const auto in = make_input(50, 64, 0.2, 7070);
  using Faults = std::map<PartyId, protocol::ClientFaults>;
  struct Scenario {
    std::string name;
    Faults faults;
  };
  Scenario mixed{"mixed", {}}, compute{"wrong computation", {}};
  for (PartyId i = 0; i < 15; ++i) {
    const PartyId who = 3 * i + 1;
    protocol::ClientFaults fault;
    if (i % 3 == 0) fault.invalid_shares = true;
    if (i % 3 == 1) fault.wrong_partials = true;
    if (i % 3 == 2) fault.wrong_final_shares = true;
    mixed.faults[who] = fault;
    compute.faults[who] = {.wrong_partials = true, .wrong_final_shares = true};
  }
  for (const auto& sc : {mixed, compute}) {
    protocol::Session session(cfg, sc.faults);
    const auto r = session.run_iteration(in);
    if (r.aborted) {
      t.check(false, sc.name + " aborted: " + r.abort_reason);
      continue;
    }
    std::set<PartyId> faulty;
    for (const auto& [id, f] : sc.faults) faulty.insert(id);
    std::set<PartyId> excluded;
    for (const auto& [id, reason] : r.excluded) excluded.insert(id);
    t.check(excluded == faulty, sc.name + ": excluded set");
    t.check(r.offenders == faulty, sc.name + ": offender report");
    for (const auto& [id, f] : sc.faults) {
      if (!r.excluded.count(id)) continue;
      const auto reason = r.excluded.at(id);
      if (f.invalid_shares) t.check(reason == protocol::ExclusionReason::kComplaint, sc.name + ": reason");
      else if (f.wrong_partials) t.check(reason == protocol::ExclusionReason::kWrongPartials, sc.name + ": reason");
      else t.check(reason == protocol::ExclusionReason::kWrongFinalShares, sc.name + ": reason");
    }
    const auto o = oracle::run_oracle(in.client_gradients, in.server_gradient, cfg.field.scale, r.respondents[1],
                                      faulty);
    compare_with_oracle(t, r, o, cfg.field.scale, sc.name);
  }
  return t.finish("N=K=50, A=15, d=9, l=p=5, 15 faulty clients in two scenarios");
}

// ---------------------------------------------------------------------------
// 8. Robustness trend on the synthetic logistic task.

Outcome robustness() {
  fl::ExperimentConfig base;
  base.task.clients = 100;
  base.task.feature_dim = 128;
  base.task.seed = 808;
  base.iterations = 100;
  base.seed = 808;
  auto attacked = base;
  attacked.behaviors = fl::assign_behaviors(100, 0.3, {fl::Behavior::kGradientManipulation}, 8080);

  auto run = [](fl::ExperimentConfig c, fl::Aggregator a) {
    c.aggregator = a;
    return fl::run_experiment(c);
  };
  const auto rflpa_clean = run(base, fl::Aggregator::kRflpa);
  const auto rflpa_attacked = run(attacked, fl::Aggregator::kRflpa);
  const auto fedavg_clean = run(base, fl::Aggregator::kFedAvg);
  const auto fedavg_attacked = run(attacked, fl::Aggregator::kFedAvg);

  double malicious = 0;
  std::size_t aborted = 0;
  for (const auto& it : rflpa_attacked.iterations) {
    malicious += it.trust_malicious;
    aborted += it.aborted;
  }
  malicious /= static_cast<double>(rflpa_attacked.iterations.size());
  const double rflpa_drop = rflpa_clean.final_accuracy() - rflpa_attacked.final_accuracy();
  const double fedavg_drop = fedavg_clean.final_accuracy() - fedavg_attacked.final_accuracy();

  Tally t;
  t.check(rflpa_drop <= 0.03, "secure aggregation lost " + fmt_double(100 * rflpa_drop) + " points");
  t.check(fedavg_drop >= 0.20, "FedAvg lost only " + fmt_double(100 * fedavg_drop) + " points");
  t.check(malicious < 0.05, "malicious mean trust " + fmt_double(malicious));
  return t.finish("N=100, T=100, 129 parameters, 30% gradient manipulation: accuracy clean/attacked " +
                  fmt_double(rflpa_clean.final_accuracy()) + "/" + fmt_double(rflpa_attacked.final_accuracy()) +
                  " (FedAvg " + fmt_double(fedavg_clean.final_accuracy()) + "/" +
                  fmt_double(fedavg_attacked.final_accuracy()) + "), malicious mean trust " + fmt_double(malicious) +
                  ", " + std::to_string(aborted) + " aborted iterations");
}

// ---------------------------------------------------------------------------
// 9. Per-client communication.

Outcome communication() {
  cli::BenchSweep sweep;
  sweep.clients = {100, 200, 400};
  sweep.dimensions = {100000};
  const auto records = cli::bench_comm(sweep);
  auto per_client = [&](const std::string& variant, std::size_t n) -> double {
    for (const auto& r : records)
      if (r.variant == variant && r.clients == n && r.role == "client" && r.phase == "total")
        return static_cast<double>(r.bytes_sent + r.bytes_received);
    return NAN;
  };
  Tally t;
  const double packed = per_client("packed", 100), unpacked = per_client("unpacked", 100);
  const double ratio = packed / unpacked;
  t.check(ratio <= 0.25, "packed/unpacked ratio " + fmt_double(ratio));
  double lo = INFINITY, hi = 0;
  std::ostringstream sizes;
  for (std::size_t n : sweep.clients) {
    const double b = per_client("packed", n);
    lo = std::min(lo, b);
    hi = std::max(hi, b);
    sizes << (n == 100 ? "" : ", ") << "N=" << n << ": " << fmt_double(b / 1e6, 5) << " MB";
  }
  const double spread = (hi - lo) / lo;
  t.check(spread < 0.05, "packed per-client spread " + fmt_double(100 * spread) + "%");
  return t.finish("M=10^5, packed/unpacked at N=100 " + fmt_double(ratio) + ", packed per client " + sizes.str() +
                  " (spread " + fmt_double(100 * spread) + "%)");
}

// 10. Every single-bit flip of a delivered share message is rejected.
Outcome tamper_detection() {
  protocol::ProtocolConfig cfg;
  cfg.clients = 6;
  cfg.dimension = 12;
  cfg.pack = 2;
  cfg.degree = 2;
  cfg.threshold = 6;
  cfg.corruption = 0;
  cfg.simulated_crypto = false;
  cfg.seed = 1010;
  protocol::Session session(cfg);
  session.capture_deliveries(true);
  const std::uint64_t iteration = 4;
  auto in = make_input(6, 12, 0.2, 10100);
  in.iteration = iteration;
  const auto r = session.run_iteration(in);
  Tally t;
  if (r.aborted) {
    t.check(false, "aborted: " + r.abort_reason);
    return t.finish("setup");
  }
  const PartyId recipient = 2;
  const auto& wires = session.captured_round1();
  if (!wires.count(recipient) || wires.at(recipient).empty()) {
    t.check(false, "no captured share message");
    return t.finish("setup");
  }
  const auto& wire = wires.at(recipient).front();
  t.check(session.accepts_shares(recipient, wire, iteration), "untampered message rejected");
  const auto msg = channel::ProtocolMessage::parse(wire);
  // Envelope layout: header, kind, payload length, payload, metadata
  // length, metadata, signature.
  const std::size_t payload_at = channel::kHeaderBytes + 1 + 4;
  const std::size_t metadata_at = payload_at + msg.payload.size() + 4;
  const std::size_t signature_at = wire.size() - channel::kSignatureBytes;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_field;  // flips, rejections
  for (std::size_t bit = 0; bit < 8 * wire.size(); ++bit) {
    const std::size_t byte = bit / 8;
    const char* field = byte >= signature_at  ? "signature"
                        : byte >= metadata_at ? "commitments"
                        : byte >= payload_at  ? "ciphertext"
                                              : "header";
    auto bad = wire;
    bad[byte] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    const bool rejected = !session.accepts_shares(recipient, bad, iteration);
    auto& [flips, rejections] = per_field[field];
    ++flips;
    rejections += rejected;
    t.check(rejected, std::string(field) + " bit " + std::to_string(bit) + " accepted");
  }
  std::ostringstream s;
  s << "real crypto, " << wire.size() << "-byte message:";
  for (const auto& [name, fr] : per_field) s << " " << name << " " << fr.second << "/" << fr.first;
  return t.finish(s.str());
}

// 11. Convergence on a quadratic down to the quantization floor.
Outcome convergence() {
  fl::QuadraticTask task;
  task.dimension = 16;
  task.clients = 10;
  task.seed = 1111;
  protocol::ProtocolConfig cfg;
  const double lr = 0.5;
  const auto trace = fl::run_quadratic(task, cfg, 80, lr);
  const double floor = 10 * lr * std::sqrt(static_cast<double>(task.dimension)) / cfg.field.scale;
  Tally t;
  std::size_t reached = trace.distance.size();
  for (std::size_t i = 3; i + 1 < trace.distance.size(); ++i) {
    if (trace.distance[i] <= floor) {
      reached = std::min(reached, i);
      continue;
    }
    t.check(trace.distance[i + 1] <= trace.distance[i], "distance grew after iteration " + std::to_string(i));
  }
  t.check(trace.distance.back() <= floor, "final distance " + fmt_double(trace.distance.back()));
  return t.finish("M=16, lr=0.5: distance " + fmt_double(trace.distance.front()) + " -> " +
                  fmt_double(trace.distance.back()) + " (floor " + fmt_double(floor) + ", reached at iteration " +
                  std::to_string(reached) + ")");
}

}  // namespace
}  // namespace rflpa::acceptance

int main(int argc, char** argv) {
  using namespace rflpa::acceptance;
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"field arithmetic and quantization", field_suite},
      {"packed sharing secrecy", secrecy_enumeration},
      {"Reed-Solomon decoding", reed_solomon},
      {"commitment soundness", vss_soundness},
      {"dot-product exactness", dotprod_exactness},
      {"end-to-end with dropouts", end_to_end},
      {"Byzantine clients", byzantine},
      {"robustness trend", robustness},
      {"communication scaling", communication},
      {"tamper detection", tamper_detection},
      {"quadratic convergence", convergence},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::strtoul(argv[i], nullptr, 10));
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
