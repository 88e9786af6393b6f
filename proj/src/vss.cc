// SPDX-License-Identifier: Apache-2.0
#include "rflpa/vss.h"

#include "rflpa/groups.h"
#include "rflpa/poly.h"

namespace rflpa::vss {

namespace {

using groups::kElementBytes;

const groups::SchnorrGroup& schnorr() {
  static const groups::SchnorrGroup g;
  return g;
}

const groups::TypeACurve& curve() {
  static const groups::TypeACurve c;
  return c;
}

std::size_t effective_length(std::span<const Fe> coeffs) {
  std::size_t n = coeffs.size();
  while (n > 0 && coeffs[n - 1].v == 0) --n;
  return n;
}

void append(Bytes& out, const std::array<std::uint8_t, kElementBytes>& e) { out.insert(out.end(), e.begin(), e.end()); }

std::array<std::uint8_t, kElementBytes> encode_scalar(Fe x) {
  std::array<std::uint8_t, kElementBytes> out{};
  for (std::size_t i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(x.v >> (8 * i));
  return out;
}

std::optional<Fe> decode_scalar(std::span<const std::uint8_t> b) {
  if (b.size() != kElementBytes || b[8] != 0) return std::nullopt;
  std::uint64_t v = 0;
  for (std::size_t i = 8; i-- > 0;) v = (v << 8) | b[i];
  if (v >= kMersenne61) return std::nullopt;
  return Fe{v};
}

FeVec powers_of(const PrimeField& f, Fe x, std::size_t n) {
  FeVec out(n);
  Fe acc{1};
  for (auto& p : out) {
    p = acc;
    acc = f.mul(acc, x);
  }
  return out;
}

class SchemeBase : public CommitmentScheme {
 public:
  explicit SchemeBase(std::size_t max_degree) : max_degree_(max_degree) {}
  std::size_t max_degree() const override { return max_degree_; }

 protected:
  void check_degree(std::span<const Fe> coeffs) const {
    if (effective_length(coeffs) > max_degree_ + 1) throw DomainError("polynomial degree exceeds commitment bound");
  }
  PrimeField field_;
  std::size_t max_degree_;
};

// Coefficient commitments over the order-P subgroup of Z_Q^*.
class CoefficientScheme final : public SchemeBase {
 public:
  using SchemeBase::SchemeBase;
  Backend backend() const override { return Backend::kCoefficient; }
  bool simulated() const override { return false; }
  std::string name() const override { return "coefficient"; }
  std::vector<Bytes> public_params() const override {
    auto g = schnorr().encode(schnorr().generator());
    return {Bytes(g.begin(), g.end())};
  }

  Commitment commit(std::span<const Fe> coeffs) const override {
    check_degree(coeffs);
    Commitment c;
    c.bytes.reserve(commitment_bytes());
    for (std::size_t i = 0; i <= max_degree_; ++i)
      append(c.bytes, schnorr().encode(schnorr().pow_gen(i < coeffs.size() ? coeffs[i] : Fe{0})));
    return c;
  }

  Witness open(std::span<const Fe> coeffs, Fe point) const override {
    check_degree(coeffs);
    return Witness{point, poly::eval(field_, coeffs, point), {}};
  }

  bool verify(const Commitment& c, const Witness& w) const override {
    auto elems = decode(c);
    if (!elems || !w.proof.empty() || w.point.v >= kMersenne61 || w.value.v >= kMersenne61) return false;
    auto exps = powers_of(field_, w.point, elems->size());
    return schnorr().multi_pow(*elems, exps) == schnorr().pow_gen(w.value);
  }

  Commitment combine(std::span<const Commitment> cs, std::span<const Fe> weights) const override {
    if (cs.size() != weights.size()) throw DomainError("combine: size mismatch");
    std::vector<std::vector<groups::SchnorrGroup::Element>> decoded;
    for (const auto& c : cs) {
      auto e = decode(c);
      if (!e) throw DomainError("combine: malformed commitment");
      decoded.push_back(std::move(*e));
    }
    Commitment out;
    std::vector<groups::SchnorrGroup::Element> column(cs.size());
    for (std::size_t i = 0; i <= max_degree_; ++i) {
      for (std::size_t j = 0; j < cs.size(); ++j) column[j] = decoded[j][i];
      append(out.bytes, schnorr().encode(schnorr().multi_pow(column, weights)));
    }
    return out;
  }

  std::size_t commitment_bytes() const override { return (max_degree_ + 1) * kElementBytes; }
  std::size_t witness_bytes() const override { return 0; }

 private:
  // Range check only; subgroup membership of each C_i is not required for
  // the comparison against g^v.
  std::optional<std::vector<groups::SchnorrGroup::Element>> decode(const Commitment& c) const {
    if (c.bytes.size() != commitment_bytes()) return std::nullopt;
    std::vector<groups::SchnorrGroup::Element> out;
    out.reserve(max_degree_ + 1);
    const auto& m = schnorr().mont();
    for (std::size_t i = 0; i <= max_degree_; ++i) {
      u128 v = 0;
      for (std::size_t b = kElementBytes; b-- > 0;) v = (v << 8) | c.bytes[i * kElementBytes + b];
      if (v == 0 || v >= groups::kSchnorrModulus) return std::nullopt;
      out.push_back(m.to_mont(v));
    }
    return out;
  }
};

// Constant-size pairing commitments on the Type-A curve.
class PairingScheme final : public SchemeBase {
 public:
  PairingScheme(std::size_t max_degree, std::uint64_t seed) : SchemeBase(max_degree) {
    Rng rng(seed);
    Fe tau = field_.random_nonzero(rng);
    const auto& E = curve();
    auto g = E.generator();
    Fe acc{1};
    for (std::size_t i = 0; i <= max_degree; ++i) {
      powers_.push_back(E.mul(g, acc));
      acc = field_.mul(acc, tau);
    }
    tau_g_ = E.mul(g, tau);
    tau = Fe{0};
  }

  Backend backend() const override { return Backend::kPairing; }
  bool simulated() const override { return false; }
  std::string name() const override { return "pairing"; }
  std::vector<Bytes> public_params() const override {
    std::vector<Bytes> out;
    for (const auto& p : powers_) {
      auto e = curve().encode(p);
      out.emplace_back(e.begin(), e.end());
    }
    return out;
  }

  Commitment commit(std::span<const Fe> coeffs) const override {
    check_degree(coeffs);
    const std::size_t n = effective_length(coeffs);
    auto pt = curve().multi_mul(std::span(powers_).first(n), coeffs.first(n));
    Commitment c;
    append(c.bytes, curve().encode(pt));
    return c;
  }

  Witness open(std::span<const Fe> coeffs, Fe point) const override {
    check_degree(coeffs);
    auto [quot, value] = poly::divide_linear(field_, coeffs, point);
    const std::size_t n = effective_length(quot);
    auto pt = curve().multi_mul(std::span(powers_).first(n), std::span<const Fe>(quot).first(n));
    Witness w{point, value, {}};
    append(w.proof, curve().encode(pt));
    return w;
  }

  bool verify(const Commitment& c, const Witness& w) const override {
    const auto& E = curve();
    auto cp = E.decode(c.bytes);
    auto wp = E.decode(w.proof);
    if (!cp || !wp || w.point.v >= kMersenne61 || w.value.v >= kMersenne61) return false;
    const auto g = E.generator();
    const auto lhs_point = E.add(*cp, E.neg(E.mul(g, w.value)));
    const auto shift = E.add(tau_g_, E.neg(E.mul(g, w.point)));
    return E.pairing(lhs_point, g) == E.pairing(*wp, shift);
  }

  Commitment combine(std::span<const Commitment> cs, std::span<const Fe> weights) const override {
    if (cs.size() != weights.size()) throw DomainError("combine: size mismatch");
    std::vector<groups::CurvePoint> pts;
    for (const auto& c : cs) {
      auto p = curve().decode(c.bytes);
      if (!p) throw DomainError("combine: malformed commitment");
      pts.push_back(*p);
    }
    Commitment out;
    append(out.bytes, curve().encode(curve().multi_mul(pts, weights)));
    return out;
  }

  std::size_t commitment_bytes() const override { return kElementBytes; }
  std::size_t witness_bytes() const override { return kElementBytes; }

 private:
  std::vector<groups::CurvePoint> powers_;
  groups::CurvePoint tau_g_;
};

// Fast-sim stand-ins in the additive group of F_P with generator h.
class SimCoefficientScheme final : public SchemeBase {
 public:
  SimCoefficientScheme(std::size_t max_degree, std::uint64_t seed) : SchemeBase(max_degree) {
    Rng rng(seed);
    h_ = field_.random_nonzero(rng);
  }
  Backend backend() const override { return Backend::kCoefficient; }
  bool simulated() const override { return true; }
  std::string name() const override { return "coefficient-sim"; }
  std::vector<Bytes> public_params() const override {
    auto e = encode_scalar(h_);
    return {Bytes(e.begin(), e.end())};
  }

  Commitment commit(std::span<const Fe> coeffs) const override {
    check_degree(coeffs);
    Commitment c;
    c.bytes.reserve(commitment_bytes());
    for (std::size_t i = 0; i <= max_degree_; ++i)
      append(c.bytes, encode_scalar(field_.mul(h_, i < coeffs.size() ? coeffs[i] : Fe{0})));
    return c;
  }

  Witness open(std::span<const Fe> coeffs, Fe point) const override {
    check_degree(coeffs);
    return Witness{point, poly::eval(field_, coeffs, point), {}};
  }

  bool verify(const Commitment& c, const Witness& w) const override {
    auto elems = decode(c);
    if (!elems || !w.proof.empty() || w.point.v >= kMersenne61 || w.value.v >= kMersenne61) return false;
    return poly::eval(field_, *elems, w.point) == field_.mul(h_, w.value);
  }

  Commitment combine(std::span<const Commitment> cs, std::span<const Fe> weights) const override {
    if (cs.size() != weights.size()) throw DomainError("combine: size mismatch");
    FeVec acc(max_degree_ + 1);
    for (std::size_t j = 0; j < cs.size(); ++j) {
      auto e = decode(cs[j]);
      if (!e) throw DomainError("combine: malformed commitment");
      for (std::size_t i = 0; i <= max_degree_; ++i) acc[i] = field_.add(acc[i], field_.mul(weights[j], (*e)[i]));
    }
    Commitment out;
    for (Fe x : acc) append(out.bytes, encode_scalar(x));
    return out;
  }

  std::size_t commitment_bytes() const override { return (max_degree_ + 1) * kElementBytes; }
  std::size_t witness_bytes() const override { return 0; }

 private:
  std::optional<FeVec> decode(const Commitment& c) const {
    if (c.bytes.size() != commitment_bytes()) return std::nullopt;
    FeVec out;
    for (std::size_t i = 0; i <= max_degree_; ++i) {
      auto x = decode_scalar(std::span(c.bytes).subspan(i * kElementBytes, kElementBytes));
      if (!x) return std::nullopt;
      out.push_back(*x);
    }
    return out;
  }
  Fe h_;
};

class SimPairingScheme final : public SchemeBase {
 public:
  SimPairingScheme(std::size_t max_degree, std::uint64_t seed) : SchemeBase(max_degree) {
    Rng rng(seed);
    tau_ = field_.random_nonzero(rng);
    h_ = field_.random_nonzero(rng);
  }
  Backend backend() const override { return Backend::kPairing; }
  bool simulated() const override { return true; }
  std::string name() const override { return "pairing-sim"; }
  std::vector<Bytes> public_params() const override {
    std::vector<Bytes> out;
    Fe acc = h_;
    for (std::size_t i = 0; i <= max_degree_; ++i) {
      auto e = encode_scalar(acc);
      out.emplace_back(e.begin(), e.end());
      acc = field_.mul(acc, tau_);
    }
    return out;
  }

  Commitment commit(std::span<const Fe> coeffs) const override {
    check_degree(coeffs);
    Commitment c;
    append(c.bytes, encode_scalar(field_.mul(h_, poly::eval(field_, coeffs, tau_))));
    return c;
  }

  Witness open(std::span<const Fe> coeffs, Fe point) const override {
    check_degree(coeffs);
    auto [quot, value] = poly::divide_linear(field_, coeffs, point);
    Witness w{point, value, {}};
    append(w.proof, encode_scalar(field_.mul(h_, poly::eval(field_, quot, tau_))));
    return w;
  }

  bool verify(const Commitment& c, const Witness& w) const override {
    auto cv = decode_scalar(c.bytes);
    auto wv = decode_scalar(w.proof);
    if (!cv || !wv || w.point.v >= kMersenne61 || w.value.v >= kMersenne61) return false;
    return field_.sub(*cv, field_.mul(h_, w.value)) == field_.mul(*wv, field_.sub(tau_, w.point));
  }

  Commitment combine(std::span<const Commitment> cs, std::span<const Fe> weights) const override {
    if (cs.size() != weights.size()) throw DomainError("combine: size mismatch");
    Fe acc{0};
    for (std::size_t j = 0; j < cs.size(); ++j) {
      auto v = decode_scalar(cs[j].bytes);
      if (!v) throw DomainError("combine: malformed commitment");
      acc = field_.add(acc, field_.mul(weights[j], *v));
    }
    Commitment out;
    append(out.bytes, encode_scalar(acc));
    return out;
  }

  std::size_t commitment_bytes() const override { return kElementBytes; }
  std::size_t witness_bytes() const override { return kElementBytes; }

 private:
  Fe tau_, h_;
};

}  // namespace

SchemePtr setup(Backend backend, bool simulated, std::size_t max_degree, std::uint64_t seed) {
  if (backend == Backend::kCoefficient) {
    if (simulated) return std::make_shared<SimCoefficientScheme>(max_degree, seed);
    return std::make_shared<CoefficientScheme>(max_degree);
  }
  if (simulated) return std::make_shared<SimPairingScheme>(max_degree, seed);
  return std::make_shared<PairingScheme>(max_degree, seed);
}

Backend parse_backend(const std::string& name) {
  if (name == "coefficient" || name == "feldman") return Backend::kCoefficient;
  if (name == "pairing" || name == "kzg") return Backend::kPairing;
  throw ConfigError("unknown commitment backend '" + name + "'");
}

std::string backend_name(Backend backend) {
  return backend == Backend::kCoefficient ? "coefficient" : "pairing";
}

}  // namespace rflpa::vss
