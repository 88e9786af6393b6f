// SPDX-License-Identifier: Apache-2.0
#include "rflpa/protocol.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace rflpa::protocol {

using channel::Bytes;
using channel::kServer;
using channel::MessageKind;
using channel::ProtocolMessage;

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void fes(std::span<const Fe> v) { raw(shamir::serialize_shares(v)); }
  template <typename C>
  void ids(const C& c) {
    u32(static_cast<std::uint32_t>(c.size()));
    for (PartyId p : c) u32(p);
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[at_ + i]) << (8 * i);
    at_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[at_ + i]) << (8 * i);
    at_ += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto out = b_.subspan(at_, n);
    at_ += n;
    return out;
  }
  FeVec fes(const PrimeField& f) {
    const std::size_t n = u32();
    need(8 * n);
    at_ -= 4;
    auto out = shamir::deserialize_shares(b_.subspan(at_, 4 + 8 * n));
    at_ += 4 + 8 * n;
    for (Fe v : out)
      if (v.v >= f.modulus()) throw DecodeError("field element out of range");
    return out;
  }
  std::vector<PartyId> ids() {
    const std::size_t n = u32();
    need(4 * n);
    std::vector<PartyId> out(n);
    for (auto& p : out) p = u32();
    return out;
  }
  void finish() const {
    if (at_ != b_.size()) throw DecodeError("trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - at_ < n) throw DecodeError("truncated message");
  }
  std::span<const std::uint8_t> b_;
  std::size_t at_ = 0;
};

// Wire sizes shared by the planner.
struct Sizes {
  std::size_t blocks, groups, dimension, clients, cb, wb;

  static std::size_t fes(std::size_t n) { return 4 + 8 * n; }
  static std::size_t ids(std::size_t n) { return 4 + 4 * n; }
  static std::size_t envelope(std::size_t payload, std::size_t metadata) {
    return channel::kEnvelopeOverhead + payload + metadata;
  }
  std::size_t model() const { return envelope(channel::kTagBytes + fes(blocks), 4 + 8 * dimension + 24); }
  std::size_t share_ct() const { return channel::kTagBytes + fes(blocks) + 4 + blocks * wb; }
  std::size_t share_meta() const { return 4 + blocks * cb; }
  std::size_t reshare_ct() const { return channel::kTagBytes + 2 * fes(groups) + 4 + 2 * groups * wb; }
  std::size_t reshare_meta() const { return 4 + 2 * groups * cb; }
  static std::size_t bundle(std::size_t recipients, std::size_t ct, std::size_t meta) {
    return envelope(4 + recipients * (8 + ct + channel::kSignatureBytes), meta);
  }
  std::size_t finals(std::size_t rows) const { return envelope(2 * (fes(groups) + fes(groups * rows)), 0); }
  std::size_t trust() const { return envelope(4 + 8 * clients + 8, 0); }
  std::size_t aggregate() const { return envelope(fes(blocks), 0); }
};

}  // namespace

// ---------------------------------------------------------------------------

std::optional<std::size_t> largest_feasible_degree(std::size_t n, std::size_t k, std::size_t a) {
  // The decoding condition reduces to d <= K - 2A - 1, which the syndrome
  // condition already implies.
  if (k > n || k < 2 * a + 3) return std::nullopt;
  return (k - 2 * a - 1) / 2;
}

ProtocolConfig ProtocolConfig::resolved() const {
  ProtocolConfig out = *this;
  const std::size_t n = clients;
  if (n < 3) throw ConfigError("clients: at least 3 required");
  if (!out.pack) out.pack = std::max<std::size_t>(1, ceil_div(n, 10));
  if (!out.reshare_pack) out.reshare_pack = *out.pack;
  if (!out.threshold) out.threshold = ceil_div(8 * n, 10);
  const std::size_t width = std::max(*out.pack, *out.reshare_pack);
  if (!out.degree) {
    const std::size_t rule = std::max<std::size_t>(1, (4 * n) / 10);
    if (!out.corruption) {
      std::size_t a = (3 * n) / 10;
      while (true) {
        auto dmax = largest_feasible_degree(n, *out.threshold, a);
        if (dmax && *dmax >= width) break;
        if (a == 0) throw ConfigError("degree: no feasible degree for these clients, pack and threshold");
        --a;
      }
      if (a != (3 * n) / 10)
        spdlog::warn("corruption budget lowered from {} to {} to keep the degree feasible", (3 * n) / 10, a);
      out.corruption = a;
    }
    auto dmax = largest_feasible_degree(n, *out.threshold, *out.corruption);
    if (!dmax) throw ConfigError("degree: no feasible degree for this threshold and corruption budget");
    out.degree = std::min(rule, *dmax);
  }
  if (!out.corruption) {
    std::size_t a = (3 * n) / 10;
    while (a > 0 && (2 * a + 2 * *out.degree + 1 > *out.threshold || n - *out.threshold + 2 * a + *out.degree + 1 > n))
      --a;
    out.corruption = a;
  }
  return out;
}

void ProtocolConfig::validate() const {
  if (!pack || !reshare_pack || !degree || !threshold || !corruption)
    throw ConfigError("config must be resolved before validation");
  const std::size_t n = clients, l = *pack, p = *reshare_pack, d = *degree, k = *threshold, a = *corruption;
  if (dimension == 0) throw ConfigError("dimension: must be positive");
  if (l == 0 || p == 0) throw ConfigError("pack: must be positive");
  if (k > n || k == 0) throw ConfigError("threshold: must lie in [1, clients]");
  if (d < std::max(l, p)) throw ConfigError("degree: must be at least max(pack, reshare_pack)");
  if ((n - k) + 2 * a + d + 1 > n) throw ConfigError("degree: (N - K) + 2A + d + 1 exceeds N");
  if (2 * d + 1 + 2 * a > k) throw ConfigError("degree: K - 2d - 1 is below 2A");
  audit_overflow(field, n);
}

std::vector<std::int64_t> normalize_and_quantize(std::span<const double> g, double server_norm, std::uint64_t scale,
                                                 std::uint64_t prime) {
  const double norm = l2_norm(g);
  if (norm == 0.0) return std::vector<std::int64_t>(g.size(), 0);
  std::vector<double> scaled(g.size());
  const double factor = server_norm / norm;
  for (std::size_t i = 0; i < g.size(); ++i) scaled[i] = g[i] * factor;
  return quantize_vector(scaled, scale, prime);
}

std::uint64_t trust_numerator(std::int64_t dot, std::uint64_t server_norm_sq) {
  if (dot <= 0) return 0;
  return std::min(static_cast<std::uint64_t>(dot), server_norm_sq);
}

double l2_norm(std::span<const double> v) {
  long double s = 0;
  for (double x : v) s += static_cast<long double>(x) * x;
  return static_cast<double>(std::sqrt(s));
}

std::string reason_name(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::kComplaint: return "complaint";
    case ExclusionReason::kNormCheck: return "norm_check";
    case ExclusionReason::kWrongPartials: return "wrong_partials";
    case ExclusionReason::kWrongFinalShares: return "wrong_final_shares";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

namespace {

struct ClientState {
  PartyId id = 0;
  Rng rng{0};
  bool has_model = false;
  FeVec server_shares;
  double server_norm = 0;
  std::map<PartyId, FeVec> gradient_shares;  // dealer -> block shares
  std::set<PartyId> roster1, roster2;
  std::map<PartyId, FeVec> cs_reshares, nr_reshares;
  std::vector<PartyId> valid_senders;
  bool has_valid_set = false;
  std::vector<std::uint64_t> trust;
  bool has_trust = false;
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace

struct Session::Impl {
  ProtocolConfig cfg;
  std::map<PartyId, ClientFaults> faults;
  channel::SuitePtr suite;
  vss::SchemePtr scheme;
  channel::KeyPairSet keys;
  shamir::ConfigPtr gradient_cfg, reshare_cfg;
  std::unique_ptr<shamir::Dealer> dealer, redealer;
  std::unique_ptr<dotprod::PackingLayout> layout;
  channel::ServerMailbox mailbox;
  std::map<std::vector<std::size_t>, std::shared_ptr<const dotprod::ReductionContext>> contexts;
  bool capture = false;
  std::map<PartyId, std::vector<Bytes>> captured;
  bool warned_clip = false;

  const PrimeField& field() const { return gradient_cfg->field; }
  Sizes sizes() const {
    return {cfg.blocks(), cfg.groups(), cfg.dimension, cfg.clients, scheme->commitment_bytes(),
            scheme->witness_bytes()};
  }
  const ClientFaults& fault(PartyId id) const {
    static const ClientFaults none;
    auto it = faults.find(id);
    return it == faults.end() ? none : it->second;
  }

  std::shared_ptr<const dotprod::ReductionContext> context(const std::vector<PartyId>& senders) {
    std::vector<std::size_t> key(senders.begin(), senders.end());
    auto it = contexts.find(key);
    if (it != contexts.end()) return it->second;
    auto ctx = std::make_shared<const dotprod::ReductionContext>(gradient_cfg, reshare_cfg, key, cfg.clients);
    contexts.emplace(key, ctx);
    return ctx;
  }

  void sign(ProtocolMessage& m, PartyId signer) const {
    channel::sign_message(m, *suite, keys.parties.at(signer).signing);
  }
  bool signed_by(const ProtocolMessage& m, PartyId signer) const {
    auto it = keys.signing_public.find(signer);
    return it != keys.signing_public.end() && channel::verify_message(m, *suite, it->second);
  }

  ProtocolMessage message(PartyId from, PartyId to, std::uint8_t round, MessageKind kind, Bytes payload,
                          Bytes metadata = {}) const {
    ProtocolMessage m;
    m.sender = from;
    m.recipient = to;
    m.round = round;
    m.kind = kind;
    m.payload = std::move(payload);
    m.metadata = std::move(metadata);
    return m;
  }

  // Encrypts and signs one verifiable-share message.
  ProtocolMessage share_message(PartyId from, PartyId to, std::uint8_t round, MessageKind kind, std::uint64_t iter,
                                const std::vector<FeVec>& lists, const std::vector<vss::Witness>& witnesses,
                                const Bytes& commitments) const {
    Writer w;
    for (const auto& l : lists) w.fes(l);
    w.u32(static_cast<std::uint32_t>(witnesses.size()));
    for (const auto& wt : witnesses) w.raw(wt.proof);
    auto m = message(from, to, round, kind, {}, commitments);
    m.payload = suite->seal(keys.key(from, to), channel::nonce_for(m, iter), {}, w.take());
    sign(m, from);
    return m;
  }

  Bytes commitment_blob(const std::vector<vss::Commitment>& cs) const {
    Writer w;
    w.u32(static_cast<std::uint32_t>(cs.size()));
    for (const auto& c : cs) w.raw(c.bytes);
    return w.take();
  }

  // Inverse of share_message plus witness checks. Share k of the flattened
  // lists is checked against commitment k at the recipient's point.
  std::optional<std::vector<FeVec>> open_shares(const ProtocolMessage& m, PartyId me, std::uint64_t iter,
                                                std::span<const std::size_t> lengths) const {
    try {
      if (m.recipient != me || !signed_by(m, m.sender)) return std::nullopt;
      const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
      Reader meta(m.metadata);
      if (meta.u32() != total) return std::nullopt;
      std::vector<vss::Commitment> cs;
      for (std::size_t k = 0; k < total; ++k) {
        auto raw = meta.raw(scheme->commitment_bytes());
        cs.push_back({Bytes(raw.begin(), raw.end())});
      }
      meta.finish();
      auto plain = suite->unseal(keys.key(me, m.sender), channel::nonce_for(m, iter), {}, m.payload);
      Reader r(plain);
      std::vector<FeVec> lists;
      for (std::size_t len : lengths) {
        lists.push_back(r.fes(field()));
        if (lists.back().size() != len) return std::nullopt;
      }
      if (r.u32() != total) return std::nullopt;
      const Fe point = gradient_cfg->eval_points.at(me);
      std::size_t k = 0;
      for (const auto& l : lists)
        for (Fe v : l) {
          auto proof = r.raw(scheme->witness_bytes());
          vss::Witness w{point, v, Bytes(proof.begin(), proof.end())};
          if (!scheme->verify(cs[k++], w)) return std::nullopt;
        }
      r.finish();
      return lists;
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  // Bundle: one upload carrying every per-recipient ciphertext and signature.
  ProtocolMessage bundle(PartyId from, std::uint8_t round, MessageKind kind, const std::vector<ProtocolMessage>& inner,
                         const Bytes& commitments) const {
    Writer w;
    w.u32(static_cast<std::uint32_t>(inner.size()));
    for (const auto& m : inner) {
      w.u32(m.recipient);
      w.u32(static_cast<std::uint32_t>(m.payload.size()));
      w.raw(m.payload);
      w.raw(m.signature);
    }
    auto b = message(from, kServer, round, kind, w.take(), commitments);
    sign(b, from);
    return b;
  }

  std::optional<std::vector<ProtocolMessage>> unbundle(const ProtocolMessage& b) const {
    try {
      if (!signed_by(b, b.sender)) return std::nullopt;
      Reader r(b.payload);
      const std::size_t n = r.u32();
      std::vector<ProtocolMessage> out;
      for (std::size_t i = 0; i < n; ++i) {
        auto m = message(b.sender, r.u32(), b.round, b.kind, {}, b.metadata);
        const std::size_t len = r.u32();
        auto ct = r.raw(len);
        m.payload.assign(ct.begin(), ct.end());
        auto sig = r.raw(channel::kSignatureBytes);
        std::copy(sig.begin(), sig.end(), m.signature.begin());
        out.push_back(std::move(m));
      }
      r.finish();
      return out;
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  void send_server(PartyId to, std::uint8_t round, MessageKind kind, Bytes payload, Bytes metadata = {}) {
    auto m = message(kServer, to, round, kind, std::move(payload), std::move(metadata));
    sign(m, kServer);
    mailbox.send_from_server(std::move(m));
  }

  std::vector<ProtocolMessage> inbox_from(const std::map<PartyId, std::vector<Bytes>>& inbox, PartyId me) const {
    std::vector<ProtocolMessage> out;
    auto it = inbox.find(me);
    if (it == inbox.end()) return out;
    for (const auto& w : it->second) {
      try {
        out.push_back(ProtocolMessage::parse(w));
      } catch (const DecodeError&) {
      }
    }
    return out;
  }

  IterationResult run(const IterationInput& in);
};

Session::Session(ProtocolConfig config, std::map<PartyId, ClientFaults> faults,
                 std::map<PartyId, std::uint8_t> dropouts)
    : impl_(std::make_unique<Impl>()) {
  auto& s = *impl_;
  s.cfg = config.resolved();
  s.cfg.validate();
  s.faults = std::move(faults);
  s.mailbox.set_dropout_schedule(std::move(dropouts));
  const PrimeField f(s.cfg.field.prime);
  const std::size_t offset = std::max(*s.cfg.pack, *s.cfg.reshare_pack);
  s.gradient_cfg =
      shamir::make_config(shamir::SharingConfig::standard(f, *s.cfg.pack, *s.cfg.degree, s.cfg.clients, offset));
  s.reshare_cfg = shamir::make_config(
      shamir::SharingConfig::standard(f, *s.cfg.reshare_pack, *s.cfg.degree, s.cfg.clients, offset));
  s.dealer = std::make_unique<shamir::Dealer>(s.gradient_cfg);
  s.redealer = std::make_unique<shamir::Dealer>(s.reshare_cfg);
  s.layout = std::make_unique<dotprod::PackingLayout>(s.cfg.dimension, *s.cfg.pack);
  s.suite = channel::make_suite(s.cfg.simulated_crypto);
  s.scheme = vss::setup(s.cfg.backend, s.cfg.simulated_crypto, *s.cfg.degree, Rng::derive(s.cfg.seed, 0x5e7));
  std::vector<PartyId> parties(s.cfg.clients);
  std::iota(parties.begin(), parties.end(), 0);
  parties.push_back(kServer);
  Rng key_rng(Rng::derive(s.cfg.seed, 0x4b));
  s.keys = channel::setup_keys(parties, *s.suite, key_rng);
}

Session::~Session() = default;

const ProtocolConfig& Session::config() const { return impl_->cfg; }
channel::ServerMailbox& Session::mailbox() { return impl_->mailbox; }
const channel::KeyPairSet& Session::keys() const { return impl_->keys; }
const vss::CommitmentScheme& Session::scheme() const { return *impl_->scheme; }
void Session::capture_deliveries(bool on) { impl_->capture = on; }
const std::map<PartyId, std::vector<channel::Bytes>>& Session::captured_round1() const { return impl_->captured; }

IterationResult Session::run_iteration(const IterationInput& input) { return impl_->run(input); }

bool Session::accepts_shares(PartyId recipient, std::span<const std::uint8_t> wire, std::uint64_t iteration) const {
  try {
    auto m = ProtocolMessage::parse(wire);
    if (m.round != 1 || m.kind != MessageKind::kShares || m.sender >= impl_->cfg.clients) return false;
    const std::size_t lengths[] = {impl_->cfg.blocks()};
    return impl_->open_shares(m, recipient, iteration, lengths).has_value();
  } catch (const Error&) {
    return false;
  }
}

// ---------------------------------------------------------------------------

IterationResult Session::Impl::run(const IterationInput& in) {
  const auto& f = field();
  const std::size_t n = cfg.clients;
  const std::size_t blocks = cfg.blocks();
  const std::size_t groups = cfg.groups();
  const std::size_t k_min = *cfg.threshold;
  const std::uint64_t q = cfg.field.scale;
  const std::uint64_t iter = in.iteration;
  if (in.client_gradients.size() != n) throw ConfigError("client_gradients: one vector per client required");
  if (in.server_gradient.size() != cfg.dimension) throw ConfigError("server_gradient: wrong dimension");

  IterationResult res;
  res.respondents.resize(5);
  res.trust_numerators.assign(n, 0);
  res.dots.assign(n, 0);
  res.norms.assign(n, 0);
  auto abort = [&](std::string why) {
    res.aborted = true;
    res.abort_reason = std::move(why);
    spdlog::info("iteration {} aborted: {}", iter, res.abort_reason);
    return res;
  };
  captured.clear();

  std::vector<ClientState> clients(n);
  for (PartyId i = 0; i < n; ++i) {
    clients[i].id = i;
    clients[i].rng = Rng(Rng::derive(cfg.seed, iter + 1, i + 1));
  }
  Rng server_rng(Rng::derive(cfg.seed, iter + 1, 0));
  auto silent = [&](PartyId i, std::uint8_t round) { return mailbox.is_silent(i, round); };
  auto& U = res.respondents;
  for (PartyId i = 0; i < n; ++i)
    if (!keys.aborted.count(i)) U[0].insert(i);

  // ---- Round 0: server broadcast ---------------------------------------
  Timer t0;
  std::vector<double> g0 = in.server_gradient;
  double norm0 = l2_norm(g0);
  if (norm0 == 0.0) return abort("server gradient is zero");
  if (norm0 > cfg.field.max_norm) {
    if (!warned_clip) spdlog::warn("server gradient norm {} clipped to {}", norm0, cfg.field.max_norm);
    warned_clip = true;
    for (auto& x : g0) x *= cfg.field.max_norm / norm0;
    norm0 = cfg.field.max_norm;
  }
  const auto g0q = quantize_vector(g0, q, f.modulus());
  std::uint64_t g0q_sq = 0;
  for (auto v : g0q) g0q_sq += static_cast<std::uint64_t>(v * v);
  const long double bound_real = static_cast<long double>(q) * q * norm0 * norm0;
  const std::uint64_t norm_bound = static_cast<std::uint64_t>(std::ceil(bound_real));
  res.trust_denominator = g0q_sq;
  if (g0q_sq == 0) return abort("quantized server gradient is zero");
  {
    auto blocks_v0 = layout->split(encode_vector(f, g0q));
    std::vector<FeVec> v0(n, FeVec(blocks));
    for (std::size_t b = 0; b < blocks; ++b) {
      auto s = dealer->share(blocks_v0[b], server_rng).shares;
      for (PartyId i = 0; i < n; ++i) v0[i][b] = s[i];
    }
    Writer meta;
    meta.u32(static_cast<std::uint32_t>(in.model.size()));
    for (double w : in.model) meta.f64(w);
    meta.f64(norm0);
    meta.u64(norm_bound);
    meta.u64(g0q_sq);
    const Bytes meta_bytes = meta.take();
    for (PartyId i : U[0]) {
      Writer w;
      w.fes(v0[i]);
      auto m = message(kServer, i, 0, MessageKind::kServerModel, {}, meta_bytes);
      m.payload = suite->seal(keys.key(kServer, i), channel::nonce_for(m, iter), {}, w.take());
      sign(m, kServer);
      mailbox.send_from_server(std::move(m));
    }
  }
  res.times[0].server_seconds += t0.seconds();
  auto inbox = mailbox.deliver(0);

  Timer t0c;
  for (PartyId i : U[0]) {
    auto& c = clients[i];
    for (const auto& m : inbox_from(inbox, i)) {
      if (m.kind != MessageKind::kServerModel || !signed_by(m, kServer)) continue;
      try {
        Reader meta(m.metadata);
        const std::size_t mlen = meta.u32();
        for (std::size_t k = 0; k < mlen; ++k) meta.f64();
        c.server_norm = meta.f64();
        meta.u64();
        meta.u64();
        meta.finish();
        auto plain = suite->unseal(keys.key(i, kServer), channel::nonce_for(m, iter), {}, m.payload);
        Reader r(plain);
        c.server_shares = r.fes(f);
        r.finish();
        c.has_model = c.server_shares.size() == blocks;
      } catch (const Error&) {
      }
    }
  }
  res.times[0].client_seconds += t0c.seconds();

  // ---- Round 1: verifiable packed shares of normalized gradients ----------
  Timer t1c;
  for (PartyId i : U[0]) {
    auto& c = clients[i];
    if (!c.has_model || silent(i, 1)) continue;
    const auto& fl = fault(i);
    std::vector<std::int64_t> gbar;
    if (fl.skip_normalization)
      gbar = normalize_and_quantize(in.client_gradients[i], 4 * c.server_norm, q, f.modulus());
    else
      gbar = normalize_and_quantize(in.client_gradients[i], c.server_norm, q, f.modulus());
    auto split = layout->split(encode_vector(f, gbar));
    std::vector<poly::Poly> polys;
    std::vector<vss::Commitment> commits;
    std::vector<FeVec> evals;
    for (const auto& block : split) {
      polys.push_back(dealer->polynomial(block, c.rng));
      commits.push_back(scheme->commit(polys.back()));
      evals.push_back(dealer->evaluate(polys.back()));
    }
    const Bytes blob = commitment_blob(commits);
    FeVec own(blocks);
    for (std::size_t b = 0; b < blocks; ++b) own[b] = evals[b][i];
    c.gradient_shares[i] = own;
    std::vector<ProtocolMessage> inner;
    for (PartyId j : U[0]) {
      if (j == i) continue;
      FeVec shares(blocks);
      std::vector<vss::Witness> wits;
      const Fe point = gradient_cfg->eval_points[j];
      for (std::size_t b = 0; b < blocks; ++b) {
        shares[b] = evals[b][j];
        wits.push_back(scheme->open(polys[b], point));
      }
      if (fl.invalid_shares) shares[0] = f.add(shares[0], f.one());
      inner.push_back(share_message(i, j, 1, MessageKind::kShares, iter, {shares}, wits, blob));
    }
    mailbox.submit(bundle(i, 1, MessageKind::kShares, inner, blob));
  }
  res.times[1].client_seconds += t1c.seconds();

  Timer t1s;
  std::map<PartyId, std::vector<ProtocolMessage>> forwarded;
  for (const auto& b : mailbox.collect_for_server(1)) {
    if (b.kind != MessageKind::kShares || !U[0].count(b.sender)) continue;
    auto inner = unbundle(b);
    if (!inner) continue;
    U[1].insert(b.sender);
    forwarded[b.sender] = std::move(*inner);
  }
  if (U[1].size() < k_min) return abort("round 1: fewer than K respondents");
  for (PartyId j : U[1]) {
    Writer w;
    w.ids(U[1]);
    send_server(j, 1, MessageKind::kRoster, w.take());
  }
  for (const auto& [i, msgs] : forwarded)
    for (const auto& m : msgs)
      if (U[1].count(m.recipient)) mailbox.send_from_server(m);
  res.times[1].server_seconds += t1s.seconds();
  inbox = mailbox.deliver(1);
  if (capture)
    for (const auto& [j, wires] : inbox)
      for (const auto& w : wires)
        if (ProtocolMessage::parse(w).kind == MessageKind::kShares) captured[j].push_back(w);

  // ---- Round 2: complaints and reshares of partial products ---------------
  Timer t2c;
  for (PartyId i : U[1]) {
    auto& c = clients[i];
    if (silent(i, 2)) continue;
    std::set<PartyId> complaints;
    const std::size_t lengths[] = {blocks};
    for (const auto& m : inbox_from(inbox, i)) {
      if (m.kind == MessageKind::kRoster && m.sender == kServer && signed_by(m, kServer)) {
        Reader r(m.payload);
        try {
          auto ids = r.ids();
          c.roster1 = std::set<PartyId>(ids.begin(), ids.end());
        } catch (const DecodeError&) {
        }
        continue;
      }
      if (m.kind != MessageKind::kShares || m.sender >= n) continue;
      auto lists = open_shares(m, i, iter, lengths);
      if (lists)
        c.gradient_shares[m.sender] = std::move((*lists)[0]);
      else
        complaints.insert(m.sender);
    }
    for (PartyId d : c.roster1)
      if (d != i && !c.gradient_shares.count(d)) complaints.insert(d);
    for (PartyId d : complaints) c.gradient_shares.erase(d);
    // Dealers outside the roster are ignored.
    for (auto it = c.gradient_shares.begin(); it != c.gradient_shares.end();)
      it = c.roster1.count(it->first) ? std::next(it) : c.gradient_shares.erase(it);

    std::vector<FeVec> user_shares(n);
    for (const auto& [u, s] : c.gradient_shares) user_shares[u] = s;
    auto partials = dotprod::local_partial_products(f, user_shares, c.server_shares, *cfg.degree);
    if (fault(i).wrong_partials) {
      for (PartyId u : c.roster1) {
        partials.cs[u] = f.add(partials.cs[u], f.random_nonzero(c.rng));
        partials.nr[u] = f.add(partials.nr[u], f.random_nonzero(c.rng));
      }
    }
    auto rcs = dotprod::reshare(partials.cs, *redealer, c.rng);
    auto rnr = dotprod::reshare(partials.nr, *redealer, c.rng);
    std::vector<vss::Commitment> commits;
    for (const auto& p : rcs.polynomials) commits.push_back(scheme->commit(p));
    for (const auto& p : rnr.polynomials) commits.push_back(scheme->commit(p));
    const Bytes blob = commitment_blob(commits);
    c.cs_reshares[i] = rcs.shares[i];
    c.nr_reshares[i] = rnr.shares[i];
    std::vector<ProtocolMessage> inner;
    for (PartyId j : c.roster1) {
      if (j == i) continue;
      const Fe point = reshare_cfg->eval_points[j];
      std::vector<vss::Witness> wits;
      for (const auto& p : rcs.polynomials) wits.push_back(scheme->open(p, point));
      for (const auto& p : rnr.polynomials) wits.push_back(scheme->open(p, point));
      inner.push_back(share_message(i, j, 2, MessageKind::kReshares, iter, {rcs.shares[j], rnr.shares[j]}, wits,
                                    blob));
    }
    mailbox.submit(bundle(i, 2, MessageKind::kReshares, inner, blob));
    if (!complaints.empty()) {
      Writer w;
      w.ids(complaints);
      auto m = message(i, kServer, 2, MessageKind::kComplaint, w.take());
      sign(m, i);
      mailbox.submit(std::move(m));
    }
  }
  res.times[2].client_seconds += t2c.seconds();

  Timer t2s;
  std::set<PartyId> bad_dealers;
  forwarded.clear();
  for (const auto& m : mailbox.collect_for_server(2)) {
    if (!U[1].count(m.sender)) continue;
    if (m.kind == MessageKind::kComplaint) {
      if (!signed_by(m, m.sender)) continue;
      try {
        Reader r(m.payload);
        for (PartyId d : r.ids())
          if (U[1].count(d)) bad_dealers.insert(d);
      } catch (const DecodeError&) {
      }
    } else if (m.kind == MessageKind::kReshares) {
      auto inner = unbundle(m);
      if (!inner) continue;
      U[2].insert(m.sender);
      forwarded[m.sender] = std::move(*inner);
    }
  }
  for (PartyId d : bad_dealers) res.excluded[d] = ExclusionReason::kComplaint;
  if (U[2].size() < k_min) return abort("round 2: fewer than K respondents");
  for (PartyId j : U[2]) {
    Writer w;
    w.ids(U[2]);
    send_server(j, 2, MessageKind::kRoster, w.take());
  }
  for (const auto& [i, msgs] : forwarded)
    for (const auto& m : msgs)
      if (U[2].count(m.recipient)) mailbox.send_from_server(m);
  res.times[2].server_seconds += t2s.seconds();
  inbox = mailbox.deliver(2);

  // ---- Round 3a: verify reshares, complain ------------------------------
  Timer t3c;
  for (PartyId i : U[2]) {
    auto& c = clients[i];
    if (silent(i, 3)) continue;
    std::set<PartyId> complaints;
    const std::size_t lengths[] = {groups, groups};
    for (const auto& m : inbox_from(inbox, i)) {
      if (m.kind == MessageKind::kRoster && m.sender == kServer && signed_by(m, kServer)) {
        try {
          Reader r(m.payload);
          auto ids = r.ids();
          c.roster2 = std::set<PartyId>(ids.begin(), ids.end());
        } catch (const DecodeError&) {
        }
        continue;
      }
      if (m.kind != MessageKind::kReshares || m.sender >= n) continue;
      auto lists = open_shares(m, i, iter, lengths);
      if (lists) {
        c.cs_reshares[m.sender] = std::move((*lists)[0]);
        c.nr_reshares[m.sender] = std::move((*lists)[1]);
      } else {
        complaints.insert(m.sender);
      }
    }
    for (PartyId s : c.roster2)
      if (s != i && !c.cs_reshares.count(s)) complaints.insert(s);
    for (PartyId s : complaints) {
      c.cs_reshares.erase(s);
      c.nr_reshares.erase(s);
    }
    if (!complaints.empty()) {
      Writer w;
      w.ids(complaints);
      auto m = message(i, kServer, 3, MessageKind::kComplaint, w.take());
      sign(m, i);
      mailbox.submit(std::move(m));
    }
  }
  res.times[3].client_seconds += t3c.seconds();

  // ---- Round 3b: accepted sender set --------------------------------------
  Timer t3s;
  std::set<PartyId> bad_senders;
  for (const auto& m : mailbox.collect_for_server(3)) {
    if (m.kind != MessageKind::kComplaint || !U[2].count(m.sender) || !signed_by(m, m.sender)) continue;
    try {
      Reader r(m.payload);
      for (PartyId s : r.ids())
        if (U[2].count(s)) bad_senders.insert(s);
    } catch (const DecodeError&) {
    }
  }
  std::vector<PartyId> valid;
  for (PartyId s : U[2])
    if (!bad_dealers.count(s) && !bad_senders.count(s)) valid.push_back(s);
  for (PartyId s : bad_senders) res.offenders.insert(s);
  if (valid.size() < 2 * *cfg.degree + 1) return abort("round 3: fewer than 2d + 1 accepted senders");
  for (PartyId j : U[2]) {
    Writer w;
    w.ids(valid);
    send_server(j, 3, MessageKind::kValidSet, w.take());
  }
  auto ctx = context(valid);
  res.times[3].server_seconds += t3s.seconds();
  inbox = mailbox.deliver(3);

  // ---- Round 3c: final shares --------------------------------------------
  Timer t3c2;
  for (PartyId i : U[2]) {
    auto& c = clients[i];
    if (silent(i, 3)) continue;
    for (const auto& m : inbox_from(inbox, i)) {
      if (m.kind != MessageKind::kValidSet || m.sender != kServer || !signed_by(m, kServer)) continue;
      try {
        Reader r(m.payload);
        c.valid_senders = r.ids();
        c.has_valid_set = true;
      } catch (const DecodeError&) {
      }
    }
    if (!c.has_valid_set) continue;
    std::vector<FeVec> cs_in, nr_in;
    bool complete = true;
    for (PartyId s : c.valid_senders) {
      auto a = c.cs_reshares.find(s);
      auto b = c.nr_reshares.find(s);
      if (a == c.cs_reshares.end() || b == c.nr_reshares.end()) {
        complete = false;
        break;
      }
      cs_in.push_back(a->second);
      nr_in.push_back(b->second);
    }
    if (!complete) continue;
    auto local = c.valid_senders == valid ? ctx : context(c.valid_senders);
    auto cs = local->reduce(cs_in, cfg.route);
    auto nr = local->reduce(nr_in, cfg.route);
    if (fault(i).wrong_final_shares) {
      cs.finals[0] = f.add(cs.finals[0], f.random_nonzero(c.rng));
      nr.finals[0] = f.add(nr.finals[0], f.random_nonzero(c.rng));
    }
    Writer w;
    w.fes(cs.finals);
    w.fes(cs.syndromes);
    w.fes(nr.finals);
    w.fes(nr.syndromes);
    auto m = message(i, kServer, 3, MessageKind::kFinalShares, w.take());
    sign(m, i);
    mailbox.submit(std::move(m));
  }
  res.times[3].client_seconds += t3c2.seconds();

  Timer t3s2;
  std::vector<dotprod::FinalShareReport> cs_reports, nr_reports;
  const std::size_t rows = ctx->syndromes().rows();
  for (const auto& m : mailbox.collect_for_server(3)) {
    if (m.kind != MessageKind::kFinalShares || !U[2].count(m.sender) || !signed_by(m, m.sender)) continue;
    try {
      Reader r(m.payload);
      dotprod::FinalShares cs{r.fes(f), r.fes(f)}, nr{r.fes(f), r.fes(f)};
      r.finish();
      if (cs.finals.size() != groups || nr.finals.size() != groups || cs.syndromes.size() != groups * rows ||
          nr.syndromes.size() != groups * rows)
        continue;
      U[3].insert(m.sender);
      cs_reports.push_back({m.sender, std::move(cs)});
      nr_reports.push_back({m.sender, std::move(nr)});
    } catch (const DecodeError&) {
    }
  }
  if (U[3].size() < k_min) return abort("round 3: fewer than K respondents");
  std::set<std::size_t> ignored;
  for (PartyId u = 0; u < n; ++u)
    if (!U[1].count(u) || bad_dealers.count(u)) ignored.insert(u);
  dotprod::Recovery dots, norms;
  try {
    dots = ctx->recover(cs_reports, ignored);
    norms = ctx->recover(nr_reports, ignored);
  } catch (const Error& e) {
    return abort(std::string("round 3: decoding failed: ") + e.what());
  }
  if (!dots.unresolved_users.empty() || !norms.unresolved_users.empty())
    return abort("round 3: wrong partial products beyond the correction radius");
  for (auto s : dots.offenders) res.excluded.emplace(static_cast<PartyId>(s), ExclusionReason::kWrongPartials);
  for (auto s : norms.offenders) res.excluded.emplace(static_cast<PartyId>(s), ExclusionReason::kWrongPartials);
  for (auto s : dots.bad_reporters) res.excluded.emplace(static_cast<PartyId>(s), ExclusionReason::kWrongFinalShares);
  for (auto s : norms.bad_reporters) res.excluded.emplace(static_cast<PartyId>(s), ExclusionReason::kWrongFinalShares);
  for (PartyId u : U[1]) {
    if (ignored.count(u)) continue;
    res.dots[u] = f.decode(dots.values[u]);
    res.norms[u] = f.decode(norms.values[u]);
    if (res.norms[u] < 0 || static_cast<std::uint64_t>(res.norms[u]) > norm_bound)
      res.excluded.emplace(u, ExclusionReason::kNormCheck);
  }
  for (const auto& [p, why] : res.excluded) {
    res.offenders.insert(p);
    spdlog::debug("iteration {}: client {} excluded ({})", iter, p, reason_name(why));
  }
  for (PartyId u : U[1])
    if (!res.excluded.count(u)) res.trust_numerators[u] = trust_numerator(res.dots[u], g0q_sq);
  for (PartyId j : U[3]) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(n));
    for (auto t : res.trust_numerators) w.u64(t);
    w.u64(g0q_sq);
    send_server(j, 4, MessageKind::kTrustScores, w.take());
  }
  res.times[3].server_seconds += t3s2.seconds();
  inbox = mailbox.deliver(4);

  // ---- Round 4: trust-weighted aggregate -----------------------------------
  Timer t4c;
  for (PartyId i : U[3]) {
    auto& c = clients[i];
    if (silent(i, 4)) continue;
    for (const auto& m : inbox_from(inbox, i)) {
      if (m.kind != MessageKind::kTrustScores || m.sender != kServer || !signed_by(m, kServer)) continue;
      try {
        Reader r(m.payload);
        const std::size_t cnt = r.u32();
        if (cnt != n) continue;
        c.trust.resize(n);
        for (auto& t : c.trust) t = r.u64();
        r.u64();
        r.finish();
        c.has_trust = true;
      } catch (const DecodeError&) {
      }
    }
    if (!c.has_trust) continue;
    std::vector<DotAccumulator> acc(blocks, DotAccumulator(f));
    bool complete = true;
    for (PartyId u = 0; u < n && complete; ++u) {
      if (c.trust[u] == 0) continue;
      auto it = c.gradient_shares.find(u);
      if (it == c.gradient_shares.end()) {
        complete = false;
        break;
      }
      const Fe w = f.from_u64(c.trust[u]);
      for (std::size_t b = 0; b < blocks; ++b) acc[b].add(w, it->second[b]);
    }
    if (!complete) continue;
    FeVec agg(blocks);
    for (std::size_t b = 0; b < blocks; ++b) agg[b] = acc[b].value();
    if (fault(i).wrong_aggregate) agg[0] = f.add(agg[0], f.random_nonzero(c.rng));
    Writer w;
    w.fes(agg);
    auto m = message(i, kServer, 4, MessageKind::kAggregate, w.take());
    sign(m, i);
    mailbox.submit(std::move(m));
  }
  res.times[4].client_seconds += t4c.seconds();

  Timer t4s;
  std::vector<std::size_t> present;
  std::vector<FeVec> agg_shares;
  for (const auto& m : mailbox.collect_for_server(4)) {
    if (m.kind != MessageKind::kAggregate || !U[3].count(m.sender) || !signed_by(m, m.sender)) continue;
    try {
      Reader r(m.payload);
      auto v = r.fes(f);
      r.finish();
      if (v.size() != blocks) continue;
      U[4].insert(m.sender);
      present.push_back(m.sender);
      agg_shares.push_back(std::move(v));
    } catch (const DecodeError&) {
    }
  }
  if (U[4].size() < k_min) return abort("round 4: fewer than K respondents");
  std::vector<FeVec> decoded(blocks);
  try {
    shamir::RsDecoder decoder(gradient_cfg, present, *cfg.degree);
    FeVec column(present.size());
    for (std::size_t b = 0; b < blocks; ++b) {
      for (std::size_t i = 0; i < present.size(); ++i) column[i] = agg_shares[i][b];
      auto r = decoder.decode(column);
      for (auto p : r.corrupted) res.aggregate_offenders.insert(static_cast<PartyId>(p));
      decoded[b] = std::move(r.secrets);
    }
  } catch (const Error& e) {
    return abort(std::string("round 4: decoding failed: ") + e.what());
  }
  res.offenders.insert(res.aggregate_offenders.begin(), res.aggregate_offenders.end());
  res.aggregate = decode_vector(f, layout->join(decoded));
  long double ts_sum = 0;
  for (auto t : res.trust_numerators) ts_sum += t;
  res.gradient.assign(cfg.dimension, 0.0);
  if (ts_sum == 0) {
    spdlog::info("iteration {}: every trust score is zero; aggregate set to zero", iter);
  } else {
    for (std::size_t c = 0; c < cfg.dimension; ++c)
      res.gradient[c] = static_cast<double>(static_cast<long double>(res.aggregate[c]) / (ts_sum * q));
  }
  res.times[4].server_seconds += t4s.seconds();
  return res;
}

IterationResult run_robust_secagg(const ProtocolConfig& config, const IterationInput& input,
                                  const std::map<PartyId, ClientFaults>& faults,
                                  const std::map<PartyId, std::uint8_t>& dropouts) {
  Session s(config, faults, dropouts);
  return s.run_iteration(input);
}

// ---------------------------------------------------------------------------

void plan_traffic(const ProtocolConfig& config, const std::map<PartyId, std::uint8_t>& dropouts,
                  channel::ServerMailbox& mailbox, std::size_t commitment_bytes, std::size_t witness_bytes) {
  const ProtocolConfig cfg = config.resolved();
  cfg.validate();
  const std::size_t n = cfg.clients;
  const Sizes sz{cfg.blocks(), cfg.groups(), cfg.dimension, n, commitment_bytes, witness_bytes};
  auto silent = [&](PartyId i, std::uint8_t round) {
    auto it = dropouts.find(i);
    return it != dropouts.end() && round >= it->second;
  };
  auto to_client = [&](PartyId j, std::uint8_t round, MessageKind kind, std::size_t bytes) {
    if (!silent(j, round)) mailbox.account(kServer, j, round, kind, bytes);
  };

  std::vector<PartyId> u0(n);
  std::iota(u0.begin(), u0.end(), 0);
  for (PartyId i : u0) to_client(i, 0, MessageKind::kServerModel, sz.model());

  auto share_round = [&](const std::vector<PartyId>& members, std::uint8_t round, MessageKind kind, std::size_t ct,
                         std::size_t meta) {
    std::vector<PartyId> senders;
    for (PartyId i : members) {
      if (silent(i, round)) continue;
      mailbox.account(i, kServer, round, kind, Sizes::bundle(members.size() - 1, ct, meta));
      senders.push_back(i);
    }
    for (PartyId j : senders) {
      to_client(j, round, MessageKind::kRoster, Sizes::envelope(Sizes::ids(senders.size()), 0));
      for (PartyId i : senders)
        if (i != j) to_client(j, round, kind, Sizes::envelope(ct, meta));
    }
    return senders;
  };
  const auto u1 = share_round(u0, 1, MessageKind::kShares, sz.share_ct(), sz.share_meta());
  if (u1.size() < *cfg.threshold) return;
  const auto u2 = share_round(u1, 2, MessageKind::kReshares, sz.reshare_ct(), sz.reshare_meta());
  if (u2.size() < *cfg.threshold) return;

  const std::size_t rows = u2.size() - 2 * *cfg.degree - 1;
  std::vector<PartyId> u3;
  for (PartyId j : u2) to_client(j, 3, MessageKind::kValidSet, Sizes::envelope(Sizes::ids(u2.size()), 0));
  for (PartyId j : u2) {
    if (silent(j, 3)) continue;
    mailbox.account(j, kServer, 3, MessageKind::kFinalShares, sz.finals(rows));
    u3.push_back(j);
  }
  if (u3.size() < *cfg.threshold) return;
  for (PartyId j : u3) to_client(j, 4, MessageKind::kTrustScores, sz.trust());
  for (PartyId j : u3)
    if (!silent(j, 4)) mailbox.account(j, kServer, 4, MessageKind::kAggregate, sz.aggregate());
}

// ---------------------------------------------------------------------------

PlainAggregate fltrust_aggregate(std::span<const std::vector<double>> client_gradients,
                                 std::span<const double> server_gradient) {
  const double norm0 = l2_norm(server_gradient);
  PlainAggregate out;
  out.gradient.assign(server_gradient.size(), 0.0);
  double total = 0;
  for (const auto& g : client_gradients) {
    const double norm = l2_norm(g);
    double ts = 0;
    if (norm > 0 && norm0 > 0) {
      long double dot = 0;
      for (std::size_t c = 0; c < g.size(); ++c) dot += static_cast<long double>(g[c]) * server_gradient[c];
      ts = std::max(0.0, static_cast<double>(dot / (norm * norm0)));
    }
    out.trust.push_back(ts);
    total += ts;
    if (ts == 0) continue;
    for (std::size_t c = 0; c < g.size(); ++c) out.gradient[c] += ts * g[c] * norm0 / norm;
  }
  if (total > 0)
    for (auto& x : out.gradient) x /= total;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<TrainingStep> train_loop(Session& session, std::vector<double> model, const GradientSource& source,
                                     const TrainingSchedule& schedule) {
  std::vector<TrainingStep> out;
  double lr = schedule.learning_rate;
  for (std::size_t t = 0; t < schedule.iterations; ++t) {
    IterationInput in;
    in.iteration = t;
    in.model = model;
    in.server_gradient = source.server(model, t);
    in.client_gradients = source.clients(model, t);
    TrainingStep step;
    step.iteration = t;
    step.result = session.run_iteration(in);
    if (!step.result.aborted)
      for (std::size_t c = 0; c < model.size(); ++c) model[c] -= lr * step.result.gradient[c];
    step.model = model;
    out.push_back(std::move(step));
    lr *= schedule.decay;
  }
  return out;
}

}  // namespace rflpa::protocol
