// SPDX-License-Identifier: Apache-2.0
//
// Packed Shamir secret sharing: l secrets ride on one degree-d polynomial
//   phi(x) = r(x) * prod_i (x - e_i) + sum_i g_i L_i(x),   deg r = d - l,
// and party j holds phi(alpha_j). Linear combinations and share-wise
// products of share sets are share sets of the combined secrets.
#pragma once

#include <memory>
#include <optional>
#include <span>

#include "rflpa/field.h"
#include "rflpa/poly.h"

namespace rflpa::shamir {

struct SharingConfig {
  PrimeField field;
  std::size_t pack = 1;    // l
  std::size_t degree = 0;  // d
  FeVec secret_points;     // e_1..e_l
  FeVec eval_points;       // alpha_1..alpha_N

  std::size_t num_shares() const { return eval_points.size(); }

  // Throws ConfigError on d < l - 1, d + 1 > N, overlapping or repeated
  // points, or l + N > P.
  void validate() const;

  // e_i = i for i = 1..l, alpha_j = j + offset for j = 1..N. offset defaults
  // to l so the two point sets are disjoint.
  static SharingConfig standard(const PrimeField& f, std::size_t pack, std::size_t degree, std::size_t n,
                                std::size_t offset = 0);

  friend bool operator==(const SharingConfig&, const SharingConfig&) = default;
};

using ConfigPtr = std::shared_ptr<const SharingConfig>;

ConfigPtr make_config(SharingConfig cfg);

struct PackedShareSet {
  ConfigPtr config;
  FeVec shares;            // shares[j] = phi(alpha_{j+1})
  std::size_t degree = 0;  // d for fresh shares, d1 + d2 after a product
};

struct IndexedShare {
  std::size_t index;  // 0-based position in eval_points
  Fe value;
};

// Precomputed tables for dealing and evaluating under one configuration.
class Dealer {
 public:
  explicit Dealer(ConfigPtr config, std::size_t max_eval_degree = 0);

  const SharingConfig& config() const { return *cfg_; }
  const ConfigPtr& config_ptr() const { return cfg_; }

  // Coefficients of a fresh degree-d sharing polynomial for up to l secrets
  // (missing secrets are zero).
  poly::Poly polynomial(std::span<const Fe> secrets, Rng& rng) const;
  // Same with the d - l + 1 coefficients of the mask r(x) given explicitly.
  poly::Poly polynomial(std::span<const Fe> secrets, std::span<const Fe> mask) const;

  // phi(alpha_j) for every j. Polynomial degree must not exceed the table.
  FeVec evaluate(std::span<const Fe> coeffs) const;

  PackedShareSet share(std::span<const Fe> secrets, Rng& rng) const;

 private:
  ConfigPtr cfg_;
  poly::Poly vanishing_;               // prod (x - e_i)
  std::vector<poly::Poly> lagrange_;   // L_i over the secret points
  std::size_t table_degree_;
  std::vector<FeVec> powers_;          // powers_[j][k] = alpha_j^k
};

PackedShareSet share(std::span<const Fe> secrets, const ConfigPtr& config, Rng& rng);

// Lagrange reconstruction of (phi(e_1), ..., phi(e_l)) from the first
// degree + 1 shares. Throws DecodeError when too few shares are present.
FeVec reconstruct(const PackedShareSet& set);
FeVec reconstruct(const SharingConfig& cfg, std::span<const IndexedShare> shares, std::size_t degree);

// alpha * A + beta * B, share-wise.
PackedShareSet combine(Fe alpha, const PackedShareSet& a, Fe beta, const PackedShareSet& b);

// Share-wise product; degree tag is the sum. Logs a warning when the product
// can no longer be decoded from N shares.
PackedShareSet hadamard(const PackedShareSet& a, const PackedShareSet& b);

struct RsResult {
  FeVec secrets;
  poly::Poly polynomial;
  std::vector<std::size_t> corrupted;  // indices whose value disagrees with polynomial
};

// Reed-Solomon decoding with erasures (nullopt slots) and errors. Succeeds
// whenever S + 2E + degree + 1 <= N; otherwise throws DecodeError or returns
// the unique polynomial within the decoding radius.
RsResult rs_decode(const SharingConfig& cfg, std::span<const std::optional<Fe>> slots, std::size_t degree);

// Reed-Solomon decoder bound to a fixed set of present positions. Consistent
// words are handled by a precomputed interpolation check; inconsistent ones
// fall back to Berlekamp-Welch.
class RsDecoder {
 public:
  RsDecoder(ConfigPtr config, std::vector<std::size_t> present, std::size_t degree,
            FeVec targets = {});

  // values[i] belongs to present[i]. Returns the evaluations at the targets
  // (secret points when none were given) and the corrupted positions.
  RsResult decode(std::span<const Fe> values) const;

  const std::vector<std::size_t>& present() const { return present_; }

 private:
  ConfigPtr cfg_;
  std::vector<std::size_t> present_;
  std::size_t degree_;
  FeVec targets_;
  std::vector<FeVec> check_weights_;   // rest positions from the first k
  std::vector<FeVec> target_weights_;  // targets from the first k
};

// Wire format: u32 count then count little-endian 8-byte field elements.
std::vector<std::uint8_t> serialize_shares(std::span<const Fe> values);
FeVec deserialize_shares(std::span<const std::uint8_t> bytes);

}  // namespace rflpa::shamir
