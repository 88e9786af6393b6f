// SPDX-License-Identifier: Apache-2.0
//
// Polynomial commitments for verifiable packed sharing. Two constructions
// share one interface:
//   kPairing      C = psi^{phi(tau)}, witness w = psi^{(phi(tau) - phi(x)) / (tau - x)},
//                 check e(C / psi^v, psi) == e(w, psi^tau / psi^x).
//   kCoefficient  C_i = g^{c_i}, check prod C_i^{x^i} == g^v (no witness).
// Each has a fast-sim variant that replaces the group by the additive group
// of F_P with identical encodings and sizes; it is not hiding or binding.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rflpa/field.h"

namespace rflpa::vss {

using Bytes = std::vector<std::uint8_t>;

enum class Backend { kCoefficient, kPairing };

struct Commitment {
  Bytes bytes;
  friend bool operator==(const Commitment&, const Commitment&) = default;
};

struct Witness {
  Fe point;
  Fe value;
  Bytes proof;
  friend bool operator==(const Witness&, const Witness&) = default;
};

class CommitmentScheme {
 public:
  virtual ~CommitmentScheme() = default;

  virtual Backend backend() const = 0;
  virtual bool simulated() const = 0;
  virtual std::string name() const = 0;
  virtual std::size_t max_degree() const = 0;

  // Public parameters in serialized form (powers of tau or the generator).
  virtual std::vector<Bytes> public_params() const = 0;

  // Throws DomainError if the polynomial degree exceeds max_degree.
  virtual Commitment commit(std::span<const Fe> coeffs) const = 0;
  virtual Witness open(std::span<const Fe> coeffs, Fe point) const = 0;
  // False on any malformed input.
  virtual bool verify(const Commitment& c, const Witness& w) const = 0;
  bool verify(const Commitment& c, Fe point, Fe value, const Witness& w) const {
    return w.point == point && w.value == value && verify(c, w);
  }

  // Commitment to sum_i weights[i] * phi_i given commitments to phi_i.
  virtual Commitment combine(std::span<const Commitment> cs, std::span<const Fe> weights) const = 0;

  virtual std::size_t commitment_bytes() const = 0;
  virtual std::size_t witness_bytes() const = 0;
};

using SchemePtr = std::shared_ptr<const CommitmentScheme>;

// Trusted setup: the trapdoor for the pairing backend is drawn from the seed
// and discarded before returning.
SchemePtr setup(Backend backend, bool simulated, std::size_t max_degree, std::uint64_t seed);

Backend parse_backend(const std::string& name);
std::string backend_name(Backend backend);

}  // namespace rflpa::vss
