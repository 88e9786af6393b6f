// SPDX-License-Identifier: Apache-2.0
#include "rflpa/protocol.h"

#include <gtest/gtest.h>

#include <cmath>

#include "plaintext_oracle.h"

namespace rflpa::protocol {
namespace {

using channel::kServer;
using channel::PartyId;

using oracle::Oracle;
using oracle::run_oracle;

std::set<PartyId> all_parties(std::size_t n) {
  std::set<PartyId> s;
  for (PartyId i = 0; i < n; ++i) s.insert(i);
  return s;
}

// Clients near the server direction with a few opposed ones.
IterationInput make_input(std::size_t n, std::size_t m, std::uint64_t seed, std::uint64_t iteration = 0) {
  Rng rng(seed);
  IterationInput in;
  in.iteration = iteration;
  in.model.assign(m, 0.25);
  for (std::size_t c = 0; c < m; ++c) in.server_gradient.push_back(rng.normal(0, 0.2));
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<double> g(m);
    const double sign = u % 4 == 3 ? -1.0 : 1.0;
    const double scale = 0.5 + 3 * rng.unit();
    for (std::size_t c = 0; c < m; ++c) g[c] = scale * (sign * in.server_gradient[c] + rng.normal(0, 0.1));
    in.client_gradients.push_back(std::move(g));
  }
  return in;
}

void expect_matches(const IterationResult& r, const Oracle& o, const std::set<PartyId>& counted,
                    std::uint64_t q) {
  ASSERT_FALSE(r.aborted) << r.abort_reason;
  EXPECT_EQ(r.trust_denominator, o.server_sq);
  EXPECT_EQ(r.trust_numerators, o.trust);
  for (PartyId u : counted) {
    if (r.excluded.count(u) && r.excluded.at(u) == ExclusionReason::kComplaint) continue;
    EXPECT_EQ(r.dots[u], o.dots[u]) << "client " << u;
    EXPECT_EQ(r.norms[u], o.norms[u]) << "client " << u;
  }
  EXPECT_EQ(r.aggregate, o.aggregate);
  ASSERT_EQ(r.gradient.size(), o.gradient.size());
  for (std::size_t c = 0; c < o.gradient.size(); ++c) EXPECT_NEAR(r.gradient[c], o.gradient[c], 1.0 / q);
}

// ---------------------------------------------------------------------------

TEST(ProtocolConfig, DefaultsLowerCorruptionUntilFeasible) {
  ProtocolConfig cfg;
  cfg.clients = 50;
  cfg.dimension = 512;
  const auto r = cfg.resolved();
  EXPECT_EQ(*r.pack, 5u);
  EXPECT_EQ(*r.reshare_pack, 5u);
  EXPECT_EQ(*r.threshold, 40u);
  EXPECT_EQ(*r.corruption, 14u);
  EXPECT_EQ(*r.degree, 5u);
  EXPECT_NO_THROW(r.validate());
  EXPECT_EQ(r.blocks(), 103u);
  EXPECT_EQ(r.groups(), 10u);
  EXPECT_EQ(r.privacy_threshold(), 1u);
}

TEST(ProtocolConfig, SmallClientCounts) {
  ProtocolConfig cfg;
  cfg.clients = 10;
  const auto r = cfg.resolved();
  EXPECT_EQ(*r.pack, 1u);
  EXPECT_EQ(*r.threshold, 8u);
  EXPECT_EQ(*r.corruption, 2u);
  EXPECT_EQ(*r.degree, 1u);
  cfg.clients = 2;
  EXPECT_THROW(cfg.resolved(), ConfigError);
}

TEST(ProtocolConfig, ExplicitValuesAreKept) {
  ProtocolConfig cfg;
  cfg.clients = 50;
  cfg.threshold = 50;
  cfg.corruption = 15;
  cfg.degree = 9;
  cfg.pack = 5;
  const auto r = cfg.resolved();
  EXPECT_EQ(*r.degree, 9u);
  EXPECT_EQ(*r.corruption, 15u);
  EXPECT_NO_THROW(r.validate());
}

TEST(ProtocolConfig, ValidateNamesEachViolation) {
  auto base = [] {
    ProtocolConfig c;
    c.clients = 20;
    c.threshold = 20;
    c.corruption = 3;
    c.degree = 4;
    c.pack = 2;
    return c.resolved();
  };
  EXPECT_NO_THROW(base().validate());
  auto low = base();
  low.degree = 1;
  EXPECT_THROW(low.validate(), ConfigError);
  auto syndrome = base();
  syndrome.corruption = 6;
  EXPECT_THROW(syndrome.validate(), ConfigError);
  auto decode = base();
  decode.threshold = 11;
  decode.corruption = 0;
  decode.degree = 10;
  EXPECT_THROW(decode.validate(), ConfigError);
  ProtocolConfig unresolved;
  EXPECT_THROW(unresolved.validate(), ConfigError);
}

TEST(ProtocolConfig, LargestFeasibleDegreeIsTight) {
  auto feasible = [](std::size_t n, std::size_t k, std::size_t a, std::size_t d) {
    return k >= 2 * d + 1 + 2 * a && (n - k) + 2 * a + d + 1 <= n;
  };
  for (std::size_t n = 3; n <= 60; ++n)
    for (std::size_t k = 1; k <= n; ++k)
      for (std::size_t a = 0; a <= n / 2; ++a) {
        auto d = largest_feasible_degree(n, k, a);
        if (!d) {
          EXPECT_FALSE(feasible(n, k, a, 1)) << n << " " << k << " " << a;
          continue;
        }
        EXPECT_TRUE(feasible(n, k, a, *d));
        EXPECT_FALSE(feasible(n, k, a, *d + 1));
      }
}

// ---------------------------------------------------------------------------

TEST(Normalize, NormMatchesServerWithinTruncation) {
  Rng rng(11);
  const std::uint64_t q = 1 << 16;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t m = 1 + rng() % 40;
    std::vector<double> g(m);
    for (auto& x : g) x = rng.normal(0, 1 + 50 * rng.unit());
    const double target = 0.01 + 1.9 * rng.unit();
    auto v = normalize_and_quantize(g, target, q);
    long double s = 0;
    for (auto x : v) s += static_cast<long double>(x) * x;
    const double got = static_cast<double>(std::sqrt(s));
    EXPECT_LE(got, target * q + 1e-6);
    EXPECT_GE(got, target * q - std::sqrt(static_cast<double>(m)) - 1e-6);
  }
}

TEST(Normalize, ScaleInvariantAndZeroSafe) {
  Rng rng(12);
  std::vector<double> g(25);
  for (auto& x : g) x = rng.normal(0, 1);
  const auto base = normalize_and_quantize(g, 0.7, 1 << 16);
  for (double c : {0.125, 4.0, 1024.0}) {
    std::vector<double> scaled = g;
    for (auto& x : scaled) x *= c;
    EXPECT_EQ(normalize_and_quantize(scaled, 0.7, 1 << 16), base);
  }
  std::vector<double> zero(5, 0.0);
  EXPECT_EQ(normalize_and_quantize(zero, 0.7, 1 << 16), std::vector<std::int64_t>(5, 0));
}

TEST(TrustNumerator, ClampsToUnitInterval) {
  EXPECT_EQ(trust_numerator(-5, 100), 0u);
  EXPECT_EQ(trust_numerator(0, 100), 0u);
  EXPECT_EQ(trust_numerator(37, 100), 37u);
  EXPECT_EQ(trust_numerator(101, 100), 100u);
}

TEST(FlTrust, PlainAggregateWeightsByCosine) {
  const std::vector<double> server = {3, 4};
  const std::vector<std::vector<double>> clients = {{6, 8}, {-3, -4}, {0, 10}};
  auto r = fltrust_aggregate(clients, server);
  EXPECT_DOUBLE_EQ(r.trust[0], 1.0);
  EXPECT_DOUBLE_EQ(r.trust[1], 0.0);
  EXPECT_DOUBLE_EQ(r.trust[2], 0.8);
  // (1 * (3, 4) + 0.8 * (0, 5)) / 1.8
  EXPECT_NEAR(r.gradient[0], 3 / 1.8, 1e-12);
  EXPECT_NEAR(r.gradient[1], 8 / 1.8, 1e-12);
}

// ---------------------------------------------------------------------------

struct EndToEndCase {
  std::size_t clients, dimension, pack;
  vss::Backend backend;
  dotprod::ReductionRoute route;
};

class EndToEnd : public ::testing::TestWithParam<EndToEndCase> {};

TEST_P(EndToEnd, MatchesPlaintextOracle) {
  const auto& p = GetParam();
  ProtocolConfig cfg;
  cfg.clients = p.clients;
  cfg.dimension = p.dimension;
  cfg.pack = p.pack;
  cfg.threshold = p.clients;
  cfg.corruption = 0;
  cfg.backend = p.backend;
  cfg.route = p.route;
  cfg.seed = 5;
  Session session(cfg);
  for (std::uint64_t t = 0; t < 2; ++t) {
    auto in = make_input(p.clients, p.dimension, 100 + t, t);
    auto r = session.run_iteration(in);
    const auto counted = all_parties(p.clients);
    auto o = run_oracle(in.client_gradients, in.server_gradient, cfg.field.scale, counted, {});
    expect_matches(r, o, counted, cfg.field.scale);
    EXPECT_TRUE(r.excluded.empty());
    EXPECT_TRUE(r.offenders.empty());
    for (const auto& u : r.respondents) EXPECT_EQ(u.size(), p.clients);
    // Opposed clients get no weight.
    for (PartyId u = 3; u < p.clients; u += 4) EXPECT_EQ(r.trust_numerators[u], 0u);
    auto plain = fltrust_aggregate(in.client_gradients, in.server_gradient);
    for (std::size_t c = 0; c < p.dimension; ++c) EXPECT_NEAR(r.gradient[c], plain.gradient[c], 1e-3);
  }
}

INSTANTIATE_TEST_SUITE_P(
    Configs, EndToEnd,
    ::testing::Values(EndToEndCase{8, 13, 2, vss::Backend::kPairing, dotprod::ReductionRoute::kMatrix},
                      EndToEndCase{8, 13, 2, vss::Backend::kCoefficient, dotprod::ReductionRoute::kCombined},
                      EndToEndCase{12, 40, 3, vss::Backend::kPairing, dotprod::ReductionRoute::kCombined},
                      EndToEndCase{10, 7, 1, vss::Backend::kCoefficient, dotprod::ReductionRoute::kMatrix}));

TEST(EndToEnd, RealCryptoMatchesOracle) {
  ProtocolConfig cfg;
  cfg.clients = 6;
  cfg.dimension = 9;
  cfg.pack = 2;
  cfg.degree = 2;
  cfg.threshold = 6;
  cfg.corruption = 0;
  cfg.simulated_crypto = false;
  auto in = make_input(6, 9, 77);
  auto r = run_robust_secagg(cfg, in);
  const auto counted = all_parties(6);
  expect_matches(r, run_oracle(in.client_gradients, in.server_gradient, cfg.field.scale, counted, {}), counted,
                 cfg.field.scale);
}

TEST(EndToEnd, ServerGradientAboveMaxNormIsClipped) {
  ProtocolConfig cfg;
  cfg.clients = 8;
  cfg.dimension = 6;
  cfg.threshold = 8;
  cfg.corruption = 0;
  auto in = make_input(8, 6, 3);
  for (auto& x : in.server_gradient) x *= 100;
  auto r = run_robust_secagg(cfg, in);
  ASSERT_FALSE(r.aborted);
  auto clipped = in.server_gradient;
  const double norm = l2_norm(clipped);
  for (auto& x : clipped) x *= cfg.field.max_norm / norm;
  const auto counted = all_parties(8);
  expect_matches(r, run_oracle(in.client_gradients, clipped, cfg.field.scale, counted, {}), counted,
                 cfg.field.scale);
}

TEST(EndToEnd, ZeroServerGradientAborts) {
  ProtocolConfig cfg;
  cfg.clients = 8;
  cfg.dimension = 4;
  auto in = make_input(8, 4, 3);
  in.server_gradient.assign(4, 0.0);
  auto r = run_robust_secagg(cfg, in);
  EXPECT_TRUE(r.aborted);
}

TEST(EndToEnd, AllOpposedClientsGiveZeroGradient) {
  ProtocolConfig cfg;
  cfg.clients = 8;
  cfg.dimension = 5;
  auto in = make_input(8, 5, 4);
  for (auto& g : in.client_gradients)
    for (std::size_t c = 0; c < 5; ++c) g[c] = -in.server_gradient[c];
  auto r = run_robust_secagg(cfg, in);
  ASSERT_FALSE(r.aborted);
  EXPECT_EQ(r.gradient, std::vector<double>(5, 0.0));
}

TEST(EndToEnd, InputShapeIsChecked) {
  ProtocolConfig cfg;
  cfg.clients = 8;
  cfg.dimension = 5;
  Session s(cfg);
  auto in = make_input(7, 5, 4);
  EXPECT_THROW(s.run_iteration(in), ConfigError);
}

// ---------------------------------------------------------------------------

ProtocolConfig twenty_clients() {
  ProtocolConfig cfg;
  cfg.clients = 20;
  cfg.dimension = 23;
  cfg.seed = 9;
  return cfg;
}

TEST(Dropouts, RespondentChainAndOracleOverFirstRoundDealers) {
  auto cfg = twenty_clients();
  const std::map<PartyId, std::uint8_t> drops = {{1, 1}, {4, 2}, {13, 3}, {17, 4}};
  Session s(cfg, {}, drops);
  auto in = make_input(20, 23, 21);
  auto r = s.run_iteration(in);
  ASSERT_FALSE(r.aborted) << r.abort_reason;
  auto everyone = all_parties(20);
  auto without = [&](std::set<PartyId> base, std::initializer_list<PartyId> gone) {
    for (auto g : gone) base.erase(g);
    return base;
  };
  EXPECT_EQ(r.respondents[0], everyone);
  EXPECT_EQ(r.respondents[1], without(everyone, {1}));
  EXPECT_EQ(r.respondents[2], without(everyone, {1, 4}));
  EXPECT_EQ(r.respondents[3], without(everyone, {1, 4, 13}));
  EXPECT_EQ(r.respondents[4], without(everyone, {1, 4, 13, 17}));
  for (std::size_t k = 1; k < 5; ++k)
    EXPECT_TRUE(std::includes(r.respondents[k - 1].begin(), r.respondents[k - 1].end(), r.respondents[k].begin(),
                              r.respondents[k].end()));
  const auto counted = r.respondents[1];
  expect_matches(r, run_oracle(in.client_gradients, in.server_gradient, cfg.field.scale, counted, {}), counted,
                 cfg.field.scale);
  EXPECT_TRUE(r.excluded.empty());
}

TEST(Dropouts, TooManyAbortWithReason) {
  auto cfg = twenty_clients();
  std::map<PartyId, std::uint8_t> drops;
  for (PartyId i = 0; i < 5; ++i) drops[i] = 2;
  auto r = run_robust_secagg(cfg, make_input(20, 23, 1), {}, drops);
  EXPECT_TRUE(r.aborted);
  EXPECT_NE(r.abort_reason.find("round 2"), std::string::npos);
}

// ---------------------------------------------------------------------------

struct FaultCase {
  const char* name;
  ClientFaults fault;
  std::optional<ExclusionReason> reason;
};

class Faults : public ::testing::TestWithParam<FaultCase> {};

TEST_P(Faults, DetectedAndOthersUnaffected) {
  const auto& p = GetParam();
  auto cfg = twenty_clients();
  const PartyId bad = 6;
  Session s(cfg, {{bad, p.fault}});
  auto in = make_input(20, 23, 31);
  auto r = s.run_iteration(in);
  ASSERT_FALSE(r.aborted) << r.abort_reason;
  std::set<PartyId> excluded;
  std::map<PartyId, double> factor;
  if (p.fault.skip_normalization) factor[bad] = 4.0;
  if (p.reason) {
    ASSERT_TRUE(r.excluded.count(bad));
    EXPECT_EQ(r.excluded.at(bad), *p.reason);
    EXPECT_EQ(r.excluded.size(), 1u);
    EXPECT_EQ(r.trust_numerators[bad], 0u);
    excluded.insert(bad);
  } else {
    EXPECT_TRUE(r.excluded.empty());
  }
  EXPECT_TRUE(r.offenders.count(bad));
  EXPECT_EQ(r.offenders.size(), 1u);
  const auto counted = all_parties(20);
  auto o = run_oracle(in.client_gradients, in.server_gradient, cfg.field.scale, counted, excluded, factor);
  expect_matches(r, o, counted, cfg.field.scale);
  if (p.fault.skip_normalization) EXPECT_GT(static_cast<std::uint64_t>(r.norms[bad]), o.bound);
}

INSTANTIATE_TEST_SUITE_P(
    Kinds, Faults,
    ::testing::Values(FaultCase{"InvalidShares", {.invalid_shares = true}, ExclusionReason::kComplaint},
                      FaultCase{"WrongPartials", {.wrong_partials = true}, ExclusionReason::kWrongPartials},
                      FaultCase{"WrongFinalShares", {.wrong_final_shares = true}, ExclusionReason::kWrongFinalShares},
                      FaultCase{"SkipNormalization", {.skip_normalization = true}, ExclusionReason::kNormCheck},
                      FaultCase{"WrongAggregate", {.wrong_aggregate = true}, std::nullopt}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Faults, CombinedUpToCorruptionBudget) {
  auto cfg = twenty_clients();
  const auto resolved = cfg.resolved();
  ASSERT_GE(*resolved.corruption, 5u);
  std::map<PartyId, ClientFaults> faults = {{2, {.invalid_shares = true}},
                                            {5, {.wrong_partials = true}},
                                            {8, {.wrong_final_shares = true}},
                                            {11, {.skip_normalization = true}},
                                            {14, {.wrong_aggregate = true}}};
  Session s(cfg, faults);
  auto in = make_input(20, 23, 41);
  auto r = s.run_iteration(in);
  ASSERT_FALSE(r.aborted) << r.abort_reason;
  EXPECT_EQ(r.excluded.at(2), ExclusionReason::kComplaint);
  EXPECT_EQ(r.excluded.at(5), ExclusionReason::kWrongPartials);
  EXPECT_EQ(r.excluded.at(8), ExclusionReason::kWrongFinalShares);
  EXPECT_EQ(r.excluded.at(11), ExclusionReason::kNormCheck);
  EXPECT_EQ(r.aggregate_offenders, std::set<PartyId>{14});
  EXPECT_EQ(r.offenders, (std::set<PartyId>{2, 5, 8, 11, 14}));
  const auto counted = all_parties(20);
  auto o = run_oracle(in.client_gradients, in.server_gradient, cfg.field.scale, counted, {2, 5, 8, 11},
                      {{11, 4.0}});
  expect_matches(r, o, counted, cfg.field.scale);
}

TEST(Faults, ExclusionDoesNotCarryOverIterations) {
  auto cfg = twenty_clients();
  Session s(cfg, {{3, {.wrong_final_shares = true}}});
  for (std::uint64_t t = 0; t < 2; ++t) {
    auto r = s.run_iteration(make_input(20, 23, 50 + t, t));
    ASSERT_FALSE(r.aborted);
    EXPECT_EQ(r.excluded.size(), 1u);
  }
}

// ---------------------------------------------------------------------------

TEST(Channel, TamperedShareMessagesAreRejected) {
  ProtocolConfig cfg;
  cfg.clients = 6;
  cfg.dimension = 5;
  cfg.pack = 2;
  cfg.degree = 2;
  cfg.threshold = 6;
  cfg.corruption = 0;
  Session s(cfg);
  s.capture_deliveries(true);
  auto r = s.run_iteration(make_input(6, 5, 8, 3));
  ASSERT_FALSE(r.aborted);
  const auto& wires = s.captured_round1();
  ASSERT_EQ(wires.at(2).size(), 5u);
  const auto& wire = wires.at(2)[0];
  EXPECT_TRUE(s.accepts_shares(2, wire, 3));
  EXPECT_FALSE(s.accepts_shares(2, wire, 4));
  EXPECT_FALSE(s.accepts_shares(3, wire, 3));
  for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
    auto bad = wire;
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    EXPECT_FALSE(s.accepts_shares(2, bad, 3)) << "bit " << bit;
  }
}

TEST(Channel, ServerTamperingTriggersComplaint) {
  auto cfg = twenty_clients();
  Session s(cfg);
  s.mailbox().add_tamper_hook([](const channel::ProtocolMessage& m, channel::Bytes& wire) {
    if (m.round == 1 && m.sender == 7 && m.recipient == 0) wire[wire.size() - 70] ^= 1;
  });
  auto r = s.run_iteration(make_input(20, 23, 61));
  ASSERT_FALSE(r.aborted);
  EXPECT_EQ(r.excluded.at(7), ExclusionReason::kComplaint);
}

// ---------------------------------------------------------------------------
// Traffic: planner vs materialized counters vs a closed form.

struct ClosedForm {
  std::uint64_t sent = 0, received = 0;
};

// Honest run without dropouts, counted from the wire layout: an 86-byte
// envelope around every payload, 16-byte AEAD tags, u32-prefixed vectors of
// 8-byte elements, 64-byte signatures.
ClosedForm predict_client(std::size_t n, std::size_t m, std::size_t l, std::size_t p, std::size_t d, std::size_t cb,
                          std::size_t wb) {
  const std::uint64_t env = 86, tag = 16, sig = 64;
  const std::uint64_t g = (m + l - 1) / l, k = (n + p - 1) / p;
  const std::uint64_t rows = n - 2 * d - 1;
  const std::uint64_t model = env + tag + 4 + 8 * g + 4 + 8 * m + 24;
  const std::uint64_t ct1 = tag + 4 + 8 * g + 4 + g * wb, meta1 = 4 + g * cb;
  const std::uint64_t ct2 = tag + 2 * (4 + 8 * k) + 4 + 2 * k * wb, meta2 = 4 + 2 * k * cb;
  const std::uint64_t roster = env + 4 + 4 * n;
  ClosedForm out;
  out.sent += env + 4 + (n - 1) * (8 + ct1 + sig) + meta1;
  out.sent += env + 4 + (n - 1) * (8 + ct2 + sig) + meta2;
  out.sent += env + 2 * (4 + 8 * k + 4 + 8 * k * rows);
  out.sent += env + 4 + 8 * g;
  out.received += model + roster + (n - 1) * (env + ct1 + meta1);
  out.received += roster + (n - 1) * (env + ct2 + meta2);
  out.received += roster + env + 4 + 8 * n + 8;
  return out;
}

TEST(Traffic, PlanMatchesRunAndClosedForm) {
  for (auto backend : {vss::Backend::kPairing, vss::Backend::kCoefficient}) {
    ProtocolConfig cfg;
    cfg.clients = 10;
    cfg.dimension = 17;
    cfg.pack = 2;
    cfg.reshare_pack = 3;
    cfg.degree = 3;
    cfg.threshold = 10;
    cfg.corruption = 0;
    cfg.backend = backend;
    Session s(cfg);
    auto r = s.run_iteration(make_input(10, 17, 2));
    ASSERT_FALSE(r.aborted);
    channel::ServerMailbox planned;
    plan_traffic(cfg, {}, planned, s.scheme().commitment_bytes(), s.scheme().witness_bytes());
    const auto want = predict_client(10, 17, 2, 3, 3, s.scheme().commitment_bytes(), s.scheme().witness_bytes());
    for (PartyId i = 0; i < 10; ++i) {
      for (std::uint8_t round = 0; round <= 4; ++round) {
        EXPECT_EQ(planned.count(i, round).sent, s.mailbox().count(i, round).sent);
        EXPECT_EQ(planned.count(i, round).received, s.mailbox().count(i, round).received);
        EXPECT_EQ(planned.count(i, round).messages_received, s.mailbox().count(i, round).messages_received);
      }
      EXPECT_EQ(s.mailbox().total(i).sent, want.sent);
      EXPECT_EQ(s.mailbox().total(i).received, want.received);
    }
    EXPECT_EQ(planned.total(kServer).sent, s.mailbox().total(kServer).sent);
    EXPECT_EQ(planned.total(kServer).received, s.mailbox().total(kServer).received);
  }
}

TEST(Traffic, PlanMatchesRunWithDropouts) {
  auto cfg = twenty_clients();
  cfg.threshold = 15;
  const std::map<PartyId, std::uint8_t> drops = {{0, 0}, {3, 1}, {7, 2}, {12, 3}, {19, 4}};
  Session s(cfg, {}, drops);
  auto r = s.run_iteration(make_input(20, 23, 5));
  ASSERT_FALSE(r.aborted) << r.abort_reason;
  channel::ServerMailbox planned;
  plan_traffic(cfg, drops, planned, s.scheme().commitment_bytes(), s.scheme().witness_bytes());
  for (PartyId i = 0; i < 20; ++i)
    for (std::uint8_t round = 0; round <= 4; ++round) {
      EXPECT_EQ(planned.count(i, round).sent, s.mailbox().count(i, round).sent) << i << " " << int(round);
      EXPECT_EQ(planned.count(i, round).received, s.mailbox().count(i, round).received) << i << " " << int(round);
    }
}

TEST(Traffic, SimulatedAndRealCryptoHaveEqualSizes) {
  ProtocolConfig cfg;
  cfg.clients = 6;
  cfg.dimension = 8;
  cfg.pack = 2;
  cfg.degree = 2;
  cfg.threshold = 6;
  cfg.corruption = 0;
  auto in = make_input(6, 8, 12);
  Session sim(cfg);
  cfg.simulated_crypto = false;
  Session real(cfg);
  ASSERT_FALSE(sim.run_iteration(in).aborted);
  ASSERT_FALSE(real.run_iteration(in).aborted);
  for (PartyId i = 0; i < 6; ++i) {
    EXPECT_EQ(sim.mailbox().total(i).sent, real.mailbox().total(i).sent);
    EXPECT_EQ(sim.mailbox().total(i).received, real.mailbox().total(i).received);
  }
}

// ---------------------------------------------------------------------------

TEST(TrainLoop, ZeroIterationsLeaveModel) {
  ProtocolConfig cfg;
  cfg.clients = 8;
  cfg.dimension = 3;
  Session s(cfg);
  GradientSource src{[](auto, auto) { return std::vector<double>{1, 0, 0}; },
                     [](auto, auto) { return std::vector<std::vector<double>>(8, {1, 0, 0}); }};
  EXPECT_TRUE(train_loop(s, {1, 2, 3}, src, {0, 0.1, 1.0}).empty());
}

// Quadratic loss |w - w*|^2 / 2 with honest clients sharing the exact
// gradient: every trust score saturates and each step equals centralized
// descent with the server gradient, up to quantization.
TEST(TrainLoop, MatchesCentralizedDescentOnQuadratic) {
  const std::vector<double> optimum = {0.5, -0.25, 0.75, 0.1};
  auto grad = [&](std::span<const double> w) {
    std::vector<double> g(w.size());
    for (std::size_t c = 0; c < w.size(); ++c) g[c] = w[c] - optimum[c];
    return g;
  };
  ProtocolConfig cfg;
  cfg.clients = 8;
  cfg.dimension = 4;
  Session s(cfg);
  GradientSource src{[&](auto w, auto) { return grad(w); },
                     [&](auto w, auto) {
                       auto g = grad(w);
                       std::vector<std::vector<double>> out;
                       for (int u = 0; u < 8; ++u) {
                         auto scaled = g;
                         for (auto& x : scaled) x *= 1 + u;
                         out.push_back(scaled);
                       }
                       return out;
                     }};
  const TrainingSchedule sched{25, 0.3, 0.98};
  const std::vector<double> start = {0, 0, 0, 0};
  auto steps = train_loop(s, start, src, sched);
  ASSERT_EQ(steps.size(), 25u);
  std::vector<double> central = start;
  double lr = sched.learning_rate;
  for (const auto& step : steps) {
    ASSERT_FALSE(step.result.aborted);
    auto g = grad(central);
    for (std::size_t c = 0; c < 4; ++c) central[c] -= lr * g[c];
    lr *= sched.decay;
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(step.model[c], central[c], 1e-3);
  }
  double dist = 0;
  for (std::size_t c = 0; c < 4; ++c) dist += std::pow(steps.back().model[c] - optimum[c], 2);
  EXPECT_LT(std::sqrt(dist), 0.01);
}

}  // namespace
}  // namespace rflpa::protocol
