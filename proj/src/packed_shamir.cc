// SPDX-License-Identifier: Apache-2.0
#include "rflpa/packed_shamir.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

namespace rflpa::shamir {

void SharingConfig::validate() const {
  if (pack == 0) throw ConfigError("pack factor must be at least 1");
  if (secret_points.size() != pack) throw ConfigError("need exactly one secret point per packed slot");
  if (degree + 1 < pack) throw ConfigError("degree must be at least pack - 1");
  if (degree + 1 > eval_points.size()) throw ConfigError("degree + 1 exceeds the number of shares");
  std::set<std::uint64_t> seen;
  for (Fe e : secret_points) {
    if (e.v >= field.modulus() || !seen.insert(e.v).second) throw ConfigError("secret points must be distinct");
  }
  for (Fe a : eval_points) {
    if (a.v >= field.modulus() || !seen.insert(a.v).second)
      throw ConfigError("evaluation points must be distinct and disjoint from secret points");
  }
}

SharingConfig SharingConfig::standard(const PrimeField& f, std::size_t pack, std::size_t degree, std::size_t n,
                                      std::size_t offset) {
  if (offset == 0) offset = pack;
  if (offset < pack) throw ConfigError("evaluation offset overlaps the secret points");
  if (pack + offset + n >= f.modulus()) throw ConfigError("field too small for the requested points");
  SharingConfig cfg{f, pack, degree, {}, {}};
  for (std::size_t i = 1; i <= pack; ++i) cfg.secret_points.push_back(Fe{i});
  for (std::size_t j = 1; j <= n; ++j) cfg.eval_points.push_back(Fe{j + offset});
  cfg.validate();
  return cfg;
}

ConfigPtr make_config(SharingConfig cfg) {
  cfg.validate();
  return std::make_shared<const SharingConfig>(std::move(cfg));
}

Dealer::Dealer(ConfigPtr config, std::size_t max_eval_degree) : cfg_(std::move(config)) {
  const auto& f = cfg_->field;
  vanishing_ = poly::from_roots(f, cfg_->secret_points);
  lagrange_ = poly::lagrange_basis(f, cfg_->secret_points);
  table_degree_ = std::max(max_eval_degree, cfg_->degree);
  powers_.resize(cfg_->num_shares());
  for (std::size_t j = 0; j < cfg_->num_shares(); ++j) {
    auto& row = powers_[j];
    row.resize(table_degree_ + 1);
    row[0] = Fe{1};
    for (std::size_t k = 1; k <= table_degree_; ++k) row[k] = f.mul(row[k - 1], cfg_->eval_points[j]);
  }
}

poly::Poly Dealer::polynomial(std::span<const Fe> secrets, Rng& rng) const {
  FeVec mask(cfg_->degree + 1 - cfg_->pack);
  for (auto& c : mask) c = cfg_->field.random(rng);
  return polynomial(secrets, mask);
}

poly::Poly Dealer::polynomial(std::span<const Fe> secrets, std::span<const Fe> mask) const {
  const auto& f = cfg_->field;
  const std::size_t l = cfg_->pack;
  if (secrets.size() > l) throw DomainError("more secrets than packed slots");
  if (mask.size() != cfg_->degree + 1 - l) throw DomainError("mask must have d - l + 1 coefficients");
  poly::Poly out(cfg_->degree + 1);
  if (!mask.empty()) {
    auto masked = poly::mul(f, mask, vanishing_);
    std::copy(masked.begin(), masked.end(), out.begin());
  }
  for (std::size_t i = 0; i < secrets.size(); ++i) {
    if (secrets[i].v == 0) continue;
    const auto& li = lagrange_[i];
    for (std::size_t k = 0; k < li.size(); ++k) out[k] = f.add(out[k], f.mul(secrets[i], li[k]));
  }
  return out;
}

FeVec Dealer::evaluate(std::span<const Fe> coeffs) const {
  std::size_t len = coeffs.size();
  while (len > 0 && coeffs[len - 1].v == 0) --len;
  if (len > table_degree_ + 1) throw DomainError("polynomial degree exceeds evaluation table");
  const auto& f = cfg_->field;
  FeVec out(powers_.size());
  for (std::size_t j = 0; j < powers_.size(); ++j) {
    DotAccumulator acc(f);
    const auto& row = powers_[j];
    for (std::size_t k = 0; k < len; ++k) acc.add(coeffs[k], row[k]);
    out[j] = acc.value();
  }
  return out;
}

PackedShareSet Dealer::share(std::span<const Fe> secrets, Rng& rng) const {
  auto phi = polynomial(secrets, rng);
  return PackedShareSet{cfg_, evaluate(phi), cfg_->degree};
}

PackedShareSet share(std::span<const Fe> secrets, const ConfigPtr& config, Rng& rng) {
  return Dealer(config).share(secrets, rng);
}

FeVec reconstruct(const SharingConfig& cfg, std::span<const IndexedShare> shares, std::size_t degree) {
  const std::size_t k = degree + 1;
  if (shares.size() < k) throw DecodeError("not enough shares to reconstruct");
  FeVec xs(k), ys(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (shares[i].index >= cfg.num_shares()) throw DomainError("share index out of range");
    xs[i] = cfg.eval_points[shares[i].index];
    ys[i] = shares[i].value;
  }
  FeVec out(cfg.pack);
  for (std::size_t s = 0; s < cfg.pack; ++s) {
    auto w = poly::lagrange_weights(cfg.field, xs, cfg.secret_points[s]);
    DotAccumulator acc(cfg.field);
    for (std::size_t i = 0; i < k; ++i) acc.add(w[i], ys[i]);
    out[s] = acc.value();
  }
  return out;
}

FeVec reconstruct(const PackedShareSet& set) {
  std::vector<IndexedShare> shares;
  shares.reserve(set.shares.size());
  for (std::size_t i = 0; i < set.shares.size(); ++i) shares.push_back({i, set.shares[i]});
  return reconstruct(*set.config, shares, set.degree);
}

namespace {

void require_compatible(const PackedShareSet& a, const PackedShareSet& b) {
  if (!a.config || !b.config) throw DomainError("share set without configuration");
  if (a.config != b.config && !(*a.config == *b.config))
    throw DomainError("share sets use different configurations");
  if (a.shares.size() != b.shares.size()) throw DomainError("share sets differ in length");
}

}  // namespace

PackedShareSet combine(Fe alpha, const PackedShareSet& a, Fe beta, const PackedShareSet& b) {
  require_compatible(a, b);
  const auto& f = a.config->field;
  PackedShareSet out{a.config, FeVec(a.shares.size()), std::max(a.degree, b.degree)};
  for (std::size_t i = 0; i < a.shares.size(); ++i)
    out.shares[i] = f.add(f.mul(alpha, a.shares[i]), f.mul(beta, b.shares[i]));
  return out;
}

PackedShareSet hadamard(const PackedShareSet& a, const PackedShareSet& b) {
  require_compatible(a, b);
  const auto& f = a.config->field;
  PackedShareSet out{a.config, FeVec(a.shares.size()), a.degree + b.degree};
  for (std::size_t i = 0; i < a.shares.size(); ++i) out.shares[i] = f.mul(a.shares[i], b.shares[i]);
  if (out.degree + 1 > out.shares.size())
    spdlog::warn("product sharing has degree {} but only {} shares; it cannot be reconstructed", out.degree,
                 out.shares.size());
  return out;
}

namespace {

RsResult finish(const SharingConfig& cfg, poly::Poly phi, std::span<const std::size_t> idx,
                std::span<const Fe> values, std::span<const Fe> targets) {
  RsResult out;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (poly::eval(cfg.field, phi, cfg.eval_points[idx[i]]) != values[i]) out.corrupted.push_back(idx[i]);
  out.secrets.reserve(targets.size());
  for (Fe t : targets) out.secrets.push_back(poly::eval(cfg.field, phi, t));
  out.polynomial = std::move(phi);
  return out;
}

}  // namespace

RsResult rs_decode(const SharingConfig& cfg, std::span<const std::optional<Fe>> slots, std::size_t degree) {
  if (slots.size() != cfg.num_shares()) throw DomainError("rs_decode: slot count must equal N");
  std::vector<std::size_t> idx;
  FeVec xs, ys;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) continue;
    idx.push_back(i);
    xs.push_back(cfg.eval_points[i]);
    ys.push_back(*slots[i]);
  }
  const std::size_t k = degree + 1;
  if (xs.size() < k) throw DecodeError("rs_decode: fewer present shares than degree + 1");

  poly::Poly phi = poly::interpolate(cfg.field, std::span(xs).first(k), std::span(ys).first(k));
  bool consistent = true;
  for (std::size_t i = k; i < xs.size() && consistent; ++i)
    consistent = poly::eval(cfg.field, phi, xs[i]) == ys[i];
  if (!consistent) {
    auto bw = poly::berlekamp_welch(cfg.field, xs, ys, degree);
    if (!bw) throw DecodeError("rs_decode: too many errors to decode");
    phi = std::move(*bw);
  }
  phi.resize(k);
  return finish(cfg, std::move(phi), idx, ys, cfg.secret_points);
}

RsDecoder::RsDecoder(ConfigPtr config, std::vector<std::size_t> present, std::size_t degree, FeVec targets)
    : cfg_(std::move(config)), present_(std::move(present)), degree_(degree), targets_(std::move(targets)) {
  if (targets_.empty()) targets_ = cfg_->secret_points;
  const std::size_t k = degree_ + 1;
  if (present_.size() < k) throw DecodeError("RsDecoder: fewer present shares than degree + 1");
  FeVec base(k);
  for (std::size_t i = 0; i < k; ++i) base[i] = cfg_->eval_points.at(present_[i]);
  for (std::size_t i = k; i < present_.size(); ++i)
    check_weights_.push_back(poly::lagrange_weights(cfg_->field, base, cfg_->eval_points.at(present_[i])));
  for (Fe t : targets_) target_weights_.push_back(poly::lagrange_weights(cfg_->field, base, t));
}

RsResult RsDecoder::decode(std::span<const Fe> values) const {
  if (values.size() != present_.size()) throw DomainError("RsDecoder: value count mismatch");
  const auto& f = cfg_->field;
  const std::size_t k = degree_ + 1;
  auto apply = [&](const FeVec& w) {
    DotAccumulator acc(f);
    for (std::size_t i = 0; i < k; ++i) acc.add(w[i], values[i]);
    return acc.value();
  };
  bool consistent = true;
  for (std::size_t i = 0; i < check_weights_.size() && consistent; ++i)
    consistent = apply(check_weights_[i]) == values[k + i];
  if (consistent) {
    RsResult out;
    for (const auto& w : target_weights_) out.secrets.push_back(apply(w));
    return out;
  }
  FeVec xs(present_.size());
  for (std::size_t i = 0; i < present_.size(); ++i) xs[i] = cfg_->eval_points[present_[i]];
  auto bw = poly::berlekamp_welch(f, xs, values, degree_);
  if (!bw) throw DecodeError("RsDecoder: too many errors to decode");
  return finish(*cfg_, std::move(*bw), present_, values, targets_);
}

std::vector<std::uint8_t> serialize_shares(std::span<const Fe> values) {
  std::vector<std::uint8_t> out(4 + 8 * values.size());
  const auto n = static_cast<std::uint32_t>(values.size());
  for (int b = 0; b < 4; ++b) out[b] = static_cast<std::uint8_t>(n >> (8 * b));
  for (std::size_t i = 0; i < values.size(); ++i)
    for (int b = 0; b < 8; ++b) out[4 + 8 * i + b] = static_cast<std::uint8_t>(values[i].v >> (8 * b));
  return out;
}

FeVec deserialize_shares(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw DecodeError("share buffer too short");
  std::uint32_t n = 0;
  for (int b = 0; b < 4; ++b) n |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
  if (bytes.size() != 4 + 8 * static_cast<std::size_t>(n)) throw DecodeError("share buffer length mismatch");
  FeVec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[4 + 8 * i + b]) << (8 * b);
    out[i] = Fe{v};
  }
  return out;
}

}  // namespace rflpa::shamir
