// SPDX-License-Identifier: Apache-2.0
#include "rflpa/dotprod.h"

#include <algorithm>
#include <numeric>

namespace rflpa::dotprod {

PackingLayout::PackingLayout(std::size_t length, std::size_t pack) : length_(length), pack_(pack) {
  if (length == 0 || pack == 0) throw ConfigError("PackingLayout: length and pack must be positive");
  blocks_ = (length + pack - 1) / pack;
}

std::vector<FeVec> PackingLayout::split(std::span<const Fe> v) const {
  if (v.size() != length_) throw DomainError("PackingLayout::split: length mismatch");
  std::vector<FeVec> out(blocks_, FeVec(pack_));
  for (std::size_t c = 0; c < length_; ++c) out[block_of(c)][slot_of(c)] = v[c];
  return out;
}

FeVec PackingLayout::join(std::span<const FeVec> blocks) const {
  if (blocks.size() != blocks_) throw DomainError("PackingLayout::join: block count mismatch");
  FeVec out(length_);
  for (std::size_t c = 0; c < length_; ++c) out[c] = blocks[block_of(c)].at(slot_of(c));
  return out;
}

PartialProductShares local_partial_products(const PrimeField& f, std::span<const FeVec> user_shares,
                                            std::span<const Fe> server_shares, std::size_t share_degree) {
  PartialProductShares out;
  out.degree = 2 * share_degree;
  out.cs.resize(user_shares.size());
  out.nr.resize(user_shares.size());
  for (std::size_t u = 0; u < user_shares.size(); ++u) {
    const auto& v = user_shares[u];
    if (v.empty()) continue;
    if (v.size() != server_shares.size()) throw DomainError("local_partial_products: block count mismatch");
    DotAccumulator cs(f), nr(f);
    for (std::size_t b = 0; b < v.size(); ++b) {
      cs.add(v[b], server_shares[b]);
      nr.add(v[b], v[b]);
    }
    out.cs[u] = cs.value();
    out.nr[u] = nr.value();
  }
  return out;
}

ReshareMatrix reshare(std::span<const Fe> values, const shamir::Dealer& dealer, Rng& rng) {
  const auto& cfg = dealer.config();
  const UserGroups groups{values.size(), cfg.pack};
  ReshareMatrix out;
  out.shares.assign(cfg.num_shares(), FeVec(groups.groups()));
  FeVec secrets(cfg.pack);
  for (std::size_t k = 0; k < groups.groups(); ++k) {
    for (std::size_t t = 0; t < cfg.pack; ++t) {
      const std::size_t u = k * cfg.pack + t;
      secrets[t] = u < values.size() ? values[u] : Fe{};
    }
    auto phi = dealer.polynomial(secrets, rng);
    auto evals = dealer.evaluate(phi);
    for (std::size_t j = 0; j < evals.size(); ++j) out.shares[j][k] = evals[j];
    out.polynomials.push_back(std::move(phi));
  }
  return out;
}

// ---------------------------------------------------------------------------

ReductionMatrices::ReductionMatrices(const shamir::SharingConfig& gradient_cfg, std::span<const std::size_t> senders,
                                     std::size_t degree)
    : f_(gradient_cfg.field) {
  const std::size_t n = senders.size();
  if (degree == 0 || degree > n) throw ConfigError("ReductionMatrices: degree must lie in [1, senders]");
  for (Fe e : gradient_cfg.secret_points) {
    Matrix b(n, n);
    for (std::size_t c = 0; c < n; ++c) {
      const Fe x = f_.sub(gradient_cfg.eval_points.at(senders[c]), e);
      Fe acc = f_.one();
      for (std::size_t r = 0; r < n; ++r) {
        b(r, c) = acc;
        acc = f_.mul(acc, x);
      }
    }
    inverse_.push_back(inverse(f_, b));
    basis_.push_back(std::move(b));
  }
  chop_ = Matrix(n, n);
  for (std::size_t r = 0; r < degree; ++r) chop_(r, r) = f_.one();
  weights_.assign(n, Fe{});
  for (const auto& inv : inverse_)
    for (std::size_t c = 0; c < n; ++c) weights_[c] = f_.add(weights_[c], inv(c, 0));
}

FeVec ReductionMatrices::disaggregate(std::span<const Fe> recombination, std::size_t j) const {
  if (recombination.size() != size()) throw DomainError("disaggregate: dimension mismatch");
  FeVec h = vecmat(f_, recombination, inverse_.at(j));
  // Chop_d is diagonal 0/1, so the product is a projection onto its support.
  for (std::size_t r = 0; r < h.size(); ++r)
    if (chop_(r, r) == Fe{}) h[r] = Fe{};
  return h;
}

FeVec ReductionMatrices::aggregate(std::span<const Fe> recombination) const {
  FeVec h(size());
  for (std::size_t j = 0; j < points(); ++j) {
    auto part = disaggregate(recombination, j);
    for (std::size_t r = 0; r < h.size(); ++r) h[r] = f_.add(h[r], part[r]);
  }
  return h;
}

Fe ReductionMatrices::combine(std::span<const Fe> recombination) const {
  if (recombination.size() != size()) throw DomainError("combine: dimension mismatch");
  DotAccumulator acc(f_);
  for (std::size_t c = 0; c < size(); ++c) acc.add(weights_[c], recombination[c]);
  return acc.value();
}

// ---------------------------------------------------------------------------

SyndromeCheck::SyndromeCheck(const PrimeField& f, FeVec sender_points, std::size_t product_degree)
    : f_(f), points_(std::move(sender_points)), degree_(product_degree) {
  const std::size_t n = points_.size();
  rows_ = n > degree_ + 1 ? n - degree_ - 1 : 0;
  FeVec denom(n, f_.one());
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t t = 0; t < n; ++t)
      if (t != c) denom[c] = f_.mul(denom[c], f_.sub(points_[c], points_[t]));
  const FeVec w = n ? f_.batch_inv(denom) : FeVec{};
  h_ = Matrix(rows_, n);
  for (std::size_t c = 0; c < n; ++c) {
    Fe acc = w[c];
    for (std::size_t r = 0; r < rows_; ++r) {
      h_(r, c) = acc;
      acc = f_.mul(acc, points_[c]);
    }
  }
  if (rows_ > 0) {
    Matrix tail(rows_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t i = 0; i < rows_; ++i) tail(r, i) = h_(r, n - rows_ + i);
    tail_inverse_ = inverse(f_, tail);
  }
}

FeVec SyndromeCheck::syndrome(std::span<const Fe> values) const {
  if (values.size() != points_.size()) throw DomainError("syndrome: dimension mismatch");
  return matvec(f_, h_, values);
}

std::optional<FeVec> SyndromeCheck::locate(std::span<const Fe> syndrome) const {
  if (syndrome.size() != rows_) throw DomainError("locate: syndrome length mismatch");
  const std::size_t n = points_.size();
  if (std::all_of(syndrome.begin(), syndrome.end(), [](Fe v) { return v == Fe{}; })) return FeVec(n);
  FeVec y(n);
  const FeVec tail = matvec(f_, tail_inverse_, syndrome);
  std::copy(tail.begin(), tail.end(), y.begin() + static_cast<std::ptrdiff_t>(n - rows_));
  auto code = poly::berlekamp_welch(f_, points_, y, degree_);
  if (!code) return std::nullopt;
  FeVec err(n);
  std::size_t weight = 0;
  for (std::size_t c = 0; c < n; ++c) {
    err[c] = f_.sub(y[c], poly::eval(f_, *code, points_[c]));
    if (err[c] != Fe{}) ++weight;
  }
  if (weight > correctable()) return std::nullopt;
  return err;
}

// ---------------------------------------------------------------------------

namespace {

FeVec sender_points(const shamir::SharingConfig& cfg, std::span<const std::size_t> senders) {
  FeVec out;
  for (std::size_t s : senders) out.push_back(cfg.eval_points.at(s));
  return out;
}

}  // namespace

ReductionContext::ReductionContext(shamir::ConfigPtr gradient_cfg, shamir::ConfigPtr reshare_cfg,
                                   std::vector<std::size_t> senders, std::size_t users)
    : gradient_cfg_(std::move(gradient_cfg)),
      reshare_cfg_(std::move(reshare_cfg)),
      senders_(std::move(senders)),
      groups_{users, reshare_cfg_->pack},
      matrices_(*gradient_cfg_, senders_, gradient_cfg_->degree),
      check_(gradient_cfg_->field, sender_points(*gradient_cfg_, senders_), 2 * gradient_cfg_->degree) {
  if (gradient_cfg_->eval_points != reshare_cfg_->eval_points)
    throw ConfigError("ReductionContext: gradient and reshare configs must share evaluation points");
  if (reshare_cfg_->degree != gradient_cfg_->degree)
    throw ConfigError("ReductionContext: reshare degree must equal the gradient degree");
  if (senders_.size() < 2 * gradient_cfg_->degree + 1)
    throw ConfigError("ReductionContext: fewer than 2d + 1 active senders");
}

FinalShares ReductionContext::reduce(std::span<const FeVec> received, ReductionRoute route) const {
  if (received.size() != senders_.size()) throw DomainError("reduce: one row per active sender required");
  const std::size_t groups = groups_.groups();
  const std::size_t rows = check_.rows();
  FinalShares out;
  out.finals.resize(groups);
  out.syndromes.resize(groups * rows);
  FeVec s(senders_.size());
  for (std::size_t k = 0; k < groups; ++k) {
    for (std::size_t c = 0; c < senders_.size(); ++c) s[c] = received[c].at(k);
    out.finals[k] = route == ReductionRoute::kMatrix ? matrices_.final_share(s) : matrices_.combine(s);
    auto syn = check_.syndrome(s);
    std::copy(syn.begin(), syn.end(), out.syndromes.begin() + static_cast<std::ptrdiff_t>(k * rows));
  }
  return out;
}

Recovery ReductionContext::recover(std::span<const FinalShareReport> reports,
                                   const std::set<std::size_t>& ignored) const {
  const auto& f = reshare_cfg_->field;
  const std::size_t groups = groups_.groups();
  const std::size_t rows = check_.rows();
  const std::size_t pack = groups_.pack;

  std::vector<const FinalShareReport*> order;
  for (const auto& r : reports) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->party < b->party; });
  std::vector<std::size_t> present;
  for (auto* r : order) {
    if (r->shares.finals.size() != groups || r->shares.syndromes.size() != groups * rows)
      throw DomainError("recover: malformed final share report");
    present.push_back(r->party);
  }
  shamir::RsDecoder decoder(reshare_cfg_, present, reshare_cfg_->degree);

  Recovery out;
  out.values.assign(groups_.users, Fe{});
  std::set<std::size_t> bad;
  // syn[u][r]
  std::vector<FeVec> syn(groups_.users, FeVec(rows));
  FeVec column(present.size());
  for (std::size_t k = 0; k < groups; ++k) {
    for (std::size_t i = 0; i < order.size(); ++i) column[i] = order[i]->shares.finals[k];
    auto res = decoder.decode(column);
    bad.insert(res.corrupted.begin(), res.corrupted.end());
    for (std::size_t t = 0; t < pack; ++t) {
      const std::size_t u = k * pack + t;
      if (u < groups_.users) out.values[u] = res.secrets[t];
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < order.size(); ++i) column[i] = order[i]->shares.syndromes[k * rows + r];
      auto sres = decoder.decode(column);
      bad.insert(sres.corrupted.begin(), sres.corrupted.end());
      for (std::size_t t = 0; t < pack; ++t) {
        const std::size_t u = k * pack + t;
        if (u < groups_.users) syn[u][r] = sres.secrets[t];
      }
    }
  }
  out.bad_reporters.assign(bad.begin(), bad.end());

  const auto& weights = matrices_.weights();
  for (std::size_t u = 0; u < groups_.users; ++u) {
    if (ignored.count(u)) {
      out.values[u] = Fe{};
      continue;
    }
    auto err = check_.locate(syn[u]);
    if (!err) {
      out.unresolved_users.push_back(u);
      continue;
    }
    DotAccumulator shift(f);
    std::vector<std::size_t> culprits;
    for (std::size_t c = 0; c < senders_.size(); ++c) {
      if ((*err)[c] == Fe{}) continue;
      shift.add(weights[c], (*err)[c]);
      culprits.push_back(senders_[c]);
    }
    if (culprits.empty()) continue;
    out.values[u] = f.sub(out.values[u], shift.value());
    out.offenders.insert(culprits.begin(), culprits.end());
    out.sender_errors[u] = std::move(culprits);
  }
  return out;
}

// ---------------------------------------------------------------------------

PipelineResult run_pipeline(const shamir::ConfigPtr& gradient_cfg, const shamir::ConfigPtr& reshare_cfg,
                            std::span<const FeVec> user_vectors, std::span<const Fe> server_vector, Rng& rng,
                            const PipelineFaults& faults, ReductionRoute route) {
  const auto& f = gradient_cfg->field;
  const std::size_t n = gradient_cfg->num_shares();
  const std::size_t users = user_vectors.size();
  const PackingLayout layout(server_vector.size(), gradient_cfg->pack);
  const shamir::Dealer dealer(gradient_cfg);
  const shamir::Dealer redealer(reshare_cfg);

  // held[i][u][b]: party i's share of block b of user u.
  std::vector<std::vector<FeVec>> held(n, std::vector<FeVec>(users, FeVec(layout.blocks())));
  std::vector<FeVec> server_held(n, FeVec(layout.blocks()));
  auto deal = [&](std::span<const Fe> vec, auto&& store) {
    auto blocks = layout.split(vec);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto shares = dealer.share(blocks[b], rng).shares;
      for (std::size_t i = 0; i < n; ++i) store(i, b, shares[i]);
    }
  };
  for (std::size_t u = 0; u < users; ++u)
    deal(user_vectors[u], [&](std::size_t i, std::size_t b, Fe v) { held[i][u][b] = v; });
  deal(server_vector, [&](std::size_t i, std::size_t b, Fe v) { server_held[i][b] = v; });

  // Reshares of both partial-product vectors from every party.
  std::vector<ReshareMatrix> cs_reshares, nr_reshares;
  for (std::size_t i = 0; i < n; ++i) {
    auto partials = local_partial_products(f, held[i], server_held[i], gradient_cfg->degree);
    if (auto it = faults.partial_errors.find(i); it != faults.partial_errors.end()) {
      for (std::size_t u = 0; u < users && u < it->second.size(); ++u) {
        partials.cs[u] = f.add(partials.cs[u], it->second[u]);
        partials.nr[u] = f.add(partials.nr[u], it->second[u]);
      }
    }
    cs_reshares.push_back(reshare(partials.cs, redealer, rng));
    nr_reshares.push_back(reshare(partials.nr, redealer, rng));
  }

  std::vector<std::size_t> senders(n);
  std::iota(senders.begin(), senders.end(), 0);
  const ReductionContext ctx(gradient_cfg, reshare_cfg, senders, users);

  std::vector<FinalShareReport> cs_reports, nr_reports;
  for (std::size_t j = 0; j < n; ++j) {
    if (faults.silent_reporters.count(j)) continue;
    std::vector<FeVec> cs_in, nr_in;
    for (std::size_t c = 0; c < n; ++c) {
      cs_in.push_back(cs_reshares[c].shares[j]);
      nr_in.push_back(nr_reshares[c].shares[j]);
    }
    auto cs_final = ctx.reduce(cs_in, route);
    auto nr_final = ctx.reduce(nr_in, route);
    if (auto it = faults.final_errors.find(j); it != faults.final_errors.end()) {
      cs_final.finals[0] = f.add(cs_final.finals[0], it->second);
      nr_final.finals[0] = f.add(nr_final.finals[0], it->second);
    }
    cs_reports.push_back({j, std::move(cs_final)});
    nr_reports.push_back({j, std::move(nr_final)});
  }
  return PipelineResult{ctx.recover(cs_reports), ctx.recover(nr_reports)};
}

}  // namespace rflpa::dotprod
