// SPDX-License-Identifier: Apache-2.0
//
// Dot-product aggregation over packed shares. Every party multiplies its
// shares of each user's gradient with its shares of the server gradient,
// reshares the resulting degree-2d values at degree d, and each receiver
// folds the reshares through B_e^{-1} Chop_d into one degree-d share per
// user group. Only per-user scalars are ever reconstructed.
#pragma once

#include <map>
#include <optional>
#include <set>

#include "rflpa/linalg.h"
#include "rflpa/packed_shamir.h"

namespace rflpa::dotprod {

// Slot-major layout of an M-vector over ceil(M / l) blocks of l secrets:
// element c lives in block c mod G at slot c / G, so secret slot t of every
// block covers one contiguous chunk of the vector.
class PackingLayout {
 public:
  PackingLayout(std::size_t length, std::size_t pack);

  std::size_t length() const { return length_; }
  std::size_t pack() const { return pack_; }
  std::size_t blocks() const { return blocks_; }
  std::size_t block_of(std::size_t c) const { return c % blocks_; }
  std::size_t slot_of(std::size_t c) const { return c / blocks_; }

  // blocks() vectors of pack() secrets, zero-padded.
  std::vector<FeVec> split(std::span<const Fe> v) const;
  FeVec join(std::span<const FeVec> blocks) const;

 private:
  std::size_t length_;
  std::size_t pack_;
  std::size_t blocks_;
};

// Users are packed contiguously: user u is slot u mod p of group u / p.
struct UserGroups {
  std::size_t users = 0;
  std::size_t pack = 1;
  std::size_t groups() const { return (users + pack - 1) / pack; }
  std::size_t group_of(std::size_t u) const { return u / pack; }
  std::size_t slot_of(std::size_t u) const { return u % pack; }
};

struct PartialProductShares {
  FeVec cs;  // per user: sum_b v_b^user * v_b^server
  FeVec nr;  // per user: sum_b (v_b^user)^2
  std::size_t degree = 0;
};

// user_shares[u][b] is this party's share of block b of user u's gradient;
// server_shares[b] its share of the server gradient. Users with no shares
// contribute zero.
PartialProductShares local_partial_products(const PrimeField& f, std::span<const FeVec> user_shares,
                                            std::span<const Fe> server_shares, std::size_t share_degree);

struct ReshareMatrix {
  std::vector<poly::Poly> polynomials;  // one per group
  std::vector<FeVec> shares;            // shares[recipient][group]
};

// Packs `values` into ceil(n / p) groups with the dealer's pack width and
// deals each at the dealer's degree.
ReshareMatrix reshare(std::span<const Fe> values, const shamir::Dealer& dealer, Rng& rng);

// B_{e_j} (entry (r, c) = (alpha_c - e_j)^r over the active senders), its
// inverse for every gradient secret point e_j, and Chop_d.
class ReductionMatrices {
 public:
  ReductionMatrices(const shamir::SharingConfig& gradient_cfg, std::span<const std::size_t> senders,
                    std::size_t degree);

  std::size_t size() const { return chop_.rows(); }
  std::size_t points() const { return basis_.size(); }
  const Matrix& basis(std::size_t j) const { return basis_[j]; }
  const Matrix& basis_inverse(std::size_t j) const { return inverse_[j]; }
  const Matrix& chop() const { return chop_; }

  // s B_{e_j}^{-1} Chop_d for one recombination vector (one value per sender).
  FeVec disaggregate(std::span<const Fe> recombination, std::size_t j) const;
  // sum_j disaggregate(s, j).
  FeVec aggregate(std::span<const Fe> recombination) const;
  // First entry of aggregate(s): the degree-d final share.
  Fe final_share(std::span<const Fe> recombination) const { return aggregate(recombination)[0]; }

  // Column 0 of sum_j B_{e_j}^{-1}; final_share(s) == <weights, s>.
  const FeVec& weights() const { return weights_; }
  Fe combine(std::span<const Fe> recombination) const;

 private:
  const PrimeField f_;
  std::vector<Matrix> basis_;
  std::vector<Matrix> inverse_;
  Matrix chop_;
  FeVec weights_;
};

// Parity checks for evaluations of degree <= product_degree polynomials at
// the sender points: H[r][c] = w_c alpha_c^r with w_c = 1 / prod_{t != c}
// (alpha_c - alpha_t), r < n - product_degree - 1. H v = 0 exactly when v is
// such an evaluation vector.
class SyndromeCheck {
 public:
  SyndromeCheck(const PrimeField& f, FeVec sender_points, std::size_t product_degree);

  std::size_t rows() const { return rows_; }
  std::size_t correctable() const { return rows_ / 2; }
  const Matrix& matrix() const { return h_; }

  FeVec syndrome(std::span<const Fe> values) const;

  // Error vector over the senders with H e = syndrome and weight at most
  // correctable(), or nullopt when none exists.
  std::optional<FeVec> locate(std::span<const Fe> syndrome) const;

 private:
  PrimeField f_;
  FeVec points_;
  std::size_t degree_;
  std::size_t rows_;
  Matrix h_;
  Matrix tail_inverse_;  // inverse of the last rows_ columns of H
};

enum class ReductionRoute { kMatrix, kCombined };

// Receiver output for one pipeline instance.
struct FinalShares {
  FeVec finals;     // per group
  FeVec syndromes;  // group-major: syndromes[k * rows + r]
};

struct FinalShareReport {
  std::size_t party;  // position in the eval points
  FinalShares shares;
};

struct Recovery {
  FeVec values;                                       // per user, corrected
  std::vector<std::size_t> bad_reporters;             // final shares off the decoded polynomial
  std::map<std::size_t, std::vector<std::size_t>> sender_errors;  // user -> senders with wrong partials
  std::set<std::size_t> offenders;                    // union of sender_errors
  std::vector<std::size_t> unresolved_users;          // syndrome beyond the correction radius
};

// Everything a receiver or the server needs for one set of active senders.
class ReductionContext {
 public:
  ReductionContext(shamir::ConfigPtr gradient_cfg, shamir::ConfigPtr reshare_cfg, std::vector<std::size_t> senders,
                   std::size_t users);

  const std::vector<std::size_t>& senders() const { return senders_; }
  const UserGroups& groups() const { return groups_; }
  const ReductionMatrices& matrices() const { return matrices_; }
  const SyndromeCheck& syndromes() const { return check_; }
  const shamir::SharingConfig& reshare_config() const { return *reshare_cfg_; }

  // received[c][k]: share of sender senders()[c] for group k.
  FinalShares reduce(std::span<const FeVec> received, ReductionRoute route = ReductionRoute::kMatrix) const;

  // Decodes final and syndrome shares, corrects wrong partials within the
  // radius, and reports offenders. Users in `ignored` are left at zero and
  // skipped. Throws DecodeError when a share polynomial cannot be decoded.
  Recovery recover(std::span<const FinalShareReport> reports, const std::set<std::size_t>& ignored = {}) const;

 private:
  shamir::ConfigPtr gradient_cfg_;
  shamir::ConfigPtr reshare_cfg_;
  std::vector<std::size_t> senders_;
  UserGroups groups_;
  ReductionMatrices matrices_;
  SyndromeCheck check_;
};

// ---------------------------------------------------------------------------
// In-process run of the whole pipeline with every party simulated locally.

struct PipelineFaults {
  std::map<std::size_t, FeVec> partial_errors;  // sender -> additive error on its cs vector
  std::map<std::size_t, Fe> final_errors;        // reporter -> additive error on its first final share
  std::set<std::size_t> silent_reporters;        // parties that never report final shares
};

struct PipelineResult {
  Recovery dots;
  Recovery norms;
};

// Party u holds user u's vector; all N parties reshare and report.
PipelineResult run_pipeline(const shamir::ConfigPtr& gradient_cfg, const shamir::ConfigPtr& reshare_cfg,
                            std::span<const FeVec> user_vectors, std::span<const Fe> server_vector, Rng& rng,
                            const PipelineFaults& faults = {}, ReductionRoute route = ReductionRoute::kMatrix);

}  // namespace rflpa::dotprod
