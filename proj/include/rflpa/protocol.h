// SPDX-License-Identifier: Apache-2.0
//
// Four-round robust secure aggregation over a server mailbox, the trust
// score rule, and the outer training loop.
//
// Round layout (mailbox round byte):
//   0  server -> clients: model, |g0|, norm bound, shares of the server gradient
//   1  clients deal verifiable packed shares of their normalized gradients
//   2  clients complain about bad dealers and reshare their partial products
//   3  complaints about resharers, the accepted sender set, final shares
//   4  trust-score numerators out, weighted aggregate shares back
#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "rflpa/channel.h"
#include "rflpa/dotprod.h"
#include "rflpa/vss.h"

namespace rflpa::protocol {

using channel::PartyId;

struct ProtocolConfig {
  std::size_t clients = 10;    // N
  std::size_t dimension = 1;   // M
  std::optional<std::size_t> pack;          // l, default ceil(0.1 N)
  std::optional<std::size_t> reshare_pack;  // p, default l
  std::optional<std::size_t> degree;        // d, default min(floor(0.4 N), largest feasible)
  std::optional<std::size_t> threshold;     // K, default ceil(0.8 N)
  std::optional<std::size_t> corruption;    // A, default floor(0.3 N), lowered if infeasible
  FieldParams field;
  vss::Backend backend = vss::Backend::kPairing;
  bool simulated_crypto = true;
  dotprod::ReductionRoute route = dotprod::ReductionRoute::kMatrix;
  std::uint64_t seed = 1;

  // Copy with every optional filled in. Throws ConfigError when no feasible
  // degree exists.
  ProtocolConfig resolved() const;

  // Requires a resolved config. Throws ConfigError naming the violated
  // condition:
  //   d >= max(l, p)                 at least one mask coefficient
  //   (N - K) + 2A + d + 1 <= N      final and aggregate shares decode
  //   K - 2d - 1 >= 2A               wrong partials are locatable
  // plus the field overflow audit.
  void validate() const;

  // Shares any set of this many clients may hold without learning anything.
  std::size_t privacy_threshold() const { return *degree - std::max(*pack, *reshare_pack) + 1; }
  std::size_t blocks() const { return (dimension + *pack - 1) / *pack; }
  std::size_t groups() const { return (clients + *reshare_pack - 1) / *reshare_pack; }
};

// Largest d with K - 2d - 1 >= 2A and (N - K) + 2A + d + 1 <= N, if any.
std::optional<std::size_t> largest_feasible_degree(std::size_t n, std::size_t k, std::size_t a);

// quantize(|g0| / |g| * g) with rounding toward zero; the zero vector maps to
// the zero vector.
std::vector<std::int64_t> normalize_and_quantize(std::span<const double> g, double server_norm,
                                                 std::uint64_t scale, std::uint64_t prime = kMersenne61);

// max(0, min(dot, |g0_q|^2)): the numerator of the trust score over the
// common denominator |g0_q|^2.
std::uint64_t trust_numerator(std::int64_t dot, std::uint64_t server_norm_sq);

double l2_norm(std::span<const double> v);

// ---------------------------------------------------------------------------

// Misbehavior injected into one client's protocol messages.
struct ClientFaults {
  bool invalid_shares = false;      // round 1: off-polynomial shares to every other recipient
  bool wrong_partials = false;      // round 2: reshares perturbed partial products
  bool wrong_final_shares = false;  // round 3: perturbed final shares
  bool wrong_aggregate = false;     // round 4: perturbed aggregate shares
  bool skip_normalization = false;  // deals its raw gradient scaled by 4 instead of normalizing
  bool empty() const {
    return !(invalid_shares || wrong_partials || wrong_final_shares || wrong_aggregate || skip_normalization);
  }
};

struct IterationInput {
  std::uint64_t iteration = 0;
  std::vector<double> model;
  std::vector<double> server_gradient;
  std::vector<std::vector<double>> client_gradients;  // one per client
};

enum class ExclusionReason { kComplaint, kNormCheck, kWrongPartials, kWrongFinalShares };

std::string reason_name(ExclusionReason r);

struct PhaseTimes {
  double client_seconds = 0;  // summed over clients
  double server_seconds = 0;
};

struct IterationResult {
  bool aborted = false;
  std::string abort_reason;

  std::vector<double> gradient;  // decoded aggregate / (q * sum TS)
  std::vector<std::uint64_t> trust_numerators;
  std::uint64_t trust_denominator = 0;
  std::vector<std::int64_t> aggregate;  // decoded sum TS_num * g_bar (integer units)
  std::vector<std::int64_t> dots;       // decoded <g_bar_j, g0_q>
  std::vector<std::int64_t> norms;      // decoded |g_bar_j|^2

  std::vector<std::set<PartyId>> respondents;  // U0 .. U4
  std::map<PartyId, ExclusionReason> excluded;
  std::set<PartyId> offenders;                 // every party flagged by any check
  std::set<PartyId> aggregate_offenders;       // round 4 shares off the polynomial

  std::map<std::uint8_t, PhaseTimes> times;
};

// One client-server deployment with fixed keys, commitment setup and
// dropout schedule. Not thread-safe.
class Session {
 public:
  explicit Session(ProtocolConfig config, std::map<PartyId, ClientFaults> faults = {},
                   std::map<PartyId, std::uint8_t> dropouts = {});
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const ProtocolConfig& config() const;
  channel::ServerMailbox& mailbox();
  const channel::KeyPairSet& keys() const;
  const vss::CommitmentScheme& scheme() const;

  IterationResult run_iteration(const IterationInput& input);

  // Recipient-side acceptance of a round-1 share message as delivered on the
  // wire: signature, decryption, parsing and every witness must check.
  bool accepts_shares(PartyId recipient, std::span<const std::uint8_t> wire, std::uint64_t iteration) const;

  // Wire bytes of the round-1 share messages delivered in the last iteration,
  // captured when enabled before the iteration runs.
  void capture_deliveries(bool on);
  const std::map<PartyId, std::vector<channel::Bytes>>& captured_round1() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Convenience: one iteration on a fresh session.
IterationResult run_robust_secagg(const ProtocolConfig& config, const IterationInput& input,
                                  const std::map<PartyId, ClientFaults>& faults = {},
                                  const std::map<PartyId, std::uint8_t>& dropouts = {});

// ---------------------------------------------------------------------------

// Exact bytes every honest message would take, replayed into a mailbox by
// size only. Matches the counters of a materialized honest run.
void plan_traffic(const ProtocolConfig& config, const std::map<PartyId, std::uint8_t>& dropouts,
                  channel::ServerMailbox& mailbox, std::size_t commitment_bytes, std::size_t witness_bytes);

// Plain FLTrust on real vectors: normalize, clip cosine at zero, weight.
struct PlainAggregate {
  std::vector<double> gradient;
  std::vector<double> trust;
};
PlainAggregate fltrust_aggregate(std::span<const std::vector<double>> client_gradients,
                                 std::span<const double> server_gradient);

// ---------------------------------------------------------------------------

struct TrainingSchedule {
  std::size_t iterations = 0;
  double learning_rate = 0.1;
  double decay = 1.0;  // learning rate multiplier per iteration
};

// Supplies gradients for one iteration given the current model.
struct GradientSource {
  std::function<std::vector<double>(std::span<const double> model, std::uint64_t iteration)> server;
  std::function<std::vector<std::vector<double>>(std::span<const double> model, std::uint64_t iteration)> clients;
};

struct TrainingStep {
  std::uint64_t iteration = 0;
  IterationResult result;
  std::vector<double> model;  // after the update
};

// w <- w - lr * g every iteration; aborted iterations keep w.
std::vector<TrainingStep> train_loop(Session& session, std::vector<double> model, const GradientSource& source,
                                     const TrainingSchedule& schedule);

}  // namespace rflpa::protocol
