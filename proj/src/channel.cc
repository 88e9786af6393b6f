// SPDX-License-Identifier: Apache-2.0
#include "rflpa/channel.h"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <tuple>

namespace rflpa::channel {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw AuthError("libsodium initialization failed");
}

std::array<std::uint8_t, 24> nonce_bytes(const NonceContext& n) {
  std::array<std::uint8_t, 24> out{};
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(n.iteration >> (8 * i));
  out[8] = n.round;
  out[9] = n.kind;
  for (int i = 0; i < 4; ++i) {
    out[10 + i] = static_cast<std::uint8_t>(n.sender >> (8 * i));
    out[14 + i] = static_cast<std::uint8_t>(n.recipient >> (8 * i));
  }
  return out;
}

// Orders the two public keys by party id so both ends hash the same bytes.
Bytes ordered_keys(std::span<const std::uint8_t> mine, std::span<const std::uint8_t> peer, PartyId me,
                   PartyId peer_id) {
  Bytes out;
  auto lo = me < peer_id ? mine : peer;
  auto hi = me < peer_id ? peer : mine;
  out.insert(out.end(), lo.begin(), lo.end());
  out.insert(out.end(), hi.begin(), hi.end());
  return out;
}

class SodiumSuite final : public CryptoSuite {
 public:
  SodiumSuite() { ensure_sodium(); }
  bool simulated() const override { return false; }

  KeyPair agreement_keygen(Rng& rng) const override {
    auto sk = rng.bytes<crypto_scalarmult_SCALARBYTES>();
    KeyPair kp{Bytes(crypto_scalarmult_BYTES), Bytes(sk.begin(), sk.end())};
    crypto_scalarmult_base(kp.public_key.data(), kp.secret_key.data());
    return kp;
  }

  KeyPair signing_keygen(Rng& rng) const override {
    auto seed = rng.bytes<crypto_sign_SEEDBYTES>();
    KeyPair kp{Bytes(crypto_sign_PUBLICKEYBYTES), Bytes(crypto_sign_SECRETKEYBYTES)};
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed.data());
    return kp;
  }

  SymmetricKey agree(const KeyPair& mine, std::span<const std::uint8_t> peer_public, PartyId me,
                     PartyId peer) const override {
    if (peer_public.size() != crypto_scalarmult_BYTES) throw AuthError("agreement key has wrong length");
    std::array<std::uint8_t, crypto_scalarmult_BYTES> shared{};
    if (crypto_scalarmult(shared.data(), mine.secret_key.data(), peer_public.data()) != 0)
      throw AuthError("agreement key is a low-order point");
    Bytes input(shared.begin(), shared.end());
    auto keys = ordered_keys(mine.public_key, peer_public, me, peer);
    input.insert(input.end(), keys.begin(), keys.end());
    SymmetricKey out{};
    crypto_generichash(out.data(), out.size(), input.data(), input.size(), nullptr, 0);
    sodium_memzero(shared.data(), shared.size());
    return out;
  }

  Bytes seal(const SymmetricKey& key, const NonceContext& nonce, std::span<const std::uint8_t> ad,
             std::span<const std::uint8_t> plaintext) const override {
    auto n = nonce_bytes(nonce);
    Bytes out(plaintext.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long len = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(out.data(), &len, plaintext.data(), plaintext.size(), ad.data(),
                                               ad.size(), nullptr, n.data(), key.data());
    out.resize(len);
    return out;
  }

  Bytes unseal(const SymmetricKey& key, const NonceContext& nonce, std::span<const std::uint8_t> ad,
               std::span<const std::uint8_t> ciphertext) const override {
    if (ciphertext.size() < crypto_aead_xchacha20poly1305_ietf_ABYTES) throw AuthError("ciphertext too short");
    auto n = nonce_bytes(nonce);
    Bytes out(ciphertext.size() - crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long len = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(out.data(), &len, nullptr, ciphertext.data(), ciphertext.size(),
                                                   ad.data(), ad.size(), n.data(), key.data()) != 0)
      throw AuthError("ciphertext failed authentication");
    out.resize(len);
    return out;
  }

  Signature sign(const KeyPair& signer, std::span<const std::uint8_t> message) const override {
    if (signer.secret_key.size() != crypto_sign_SECRETKEYBYTES) throw AuthError("signing key has wrong length");
    Signature sig{};
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), signer.secret_key.data());
    return sig;
  }

  bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> message,
              std::span<const std::uint8_t> signature) const override {
    if (public_key.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES) return false;
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), public_key.data()) == 0;
  }
};

// Stand-ins: SipHash-2-4 for tags and signatures, a splitmix keystream for
// encryption. Same sizes and failure behavior as the real suite; no secrecy.
class SimSuite final : public CryptoSuite {
 public:
  SimSuite() { ensure_sodium(); }
  bool simulated() const override { return true; }

  KeyPair agreement_keygen(Rng& rng) const override {
    auto sk = rng.bytes<kKeyBytes>();
    KeyPair kp{{}, Bytes(sk.begin(), sk.end())};
    kp.public_key = digest(kp.secret_key, 0x70, kKeyBytes);
    return kp;
  }

  KeyPair signing_keygen(Rng& rng) const override {
    auto sk = rng.bytes<64>();
    KeyPair kp{{}, Bytes(sk.begin(), sk.end())};
    kp.public_key = digest(kp.secret_key, 0x51, kKeyBytes);
    return kp;
  }

  SymmetricKey agree(const KeyPair& mine, std::span<const std::uint8_t> peer_public, PartyId me,
                     PartyId peer) const override {
    if (peer_public.size() != kKeyBytes) throw AuthError("agreement key has wrong length");
    auto d = digest(ordered_keys(mine.public_key, peer_public, me, peer), 0x4b, kKeyBytes);
    SymmetricKey out{};
    std::copy(d.begin(), d.end(), out.begin());
    return out;
  }

  Bytes seal(const SymmetricKey& key, const NonceContext& nonce, std::span<const std::uint8_t> ad,
             std::span<const std::uint8_t> plaintext) const override {
    Bytes out(plaintext.begin(), plaintext.end());
    keystream(key, nonce, out);
    auto t = tag(key, nonce, ad, out);
    out.insert(out.end(), t.begin(), t.end());
    return out;
  }

  Bytes unseal(const SymmetricKey& key, const NonceContext& nonce, std::span<const std::uint8_t> ad,
               std::span<const std::uint8_t> ciphertext) const override {
    if (ciphertext.size() < kTagBytes) throw AuthError("ciphertext too short");
    auto body = ciphertext.first(ciphertext.size() - kTagBytes);
    auto t = tag(key, nonce, ad, body);
    if (sodium_memcmp(t.data(), ciphertext.data() + body.size(), kTagBytes) != 0)
      throw AuthError("ciphertext failed authentication");
    Bytes out(body.begin(), body.end());
    keystream(key, nonce, out);
    return out;
  }

  Signature sign(const KeyPair& signer, std::span<const std::uint8_t> message) const override {
    return signature_for(signer.public_key, message);
  }

  bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> message,
              std::span<const std::uint8_t> signature) const override {
    if (public_key.size() != kKeyBytes || signature.size() != kSignatureBytes) return false;
    auto expect = signature_for(public_key, message);
    return sodium_memcmp(expect.data(), signature.data(), kSignatureBytes) == 0;
  }

 private:
  static std::uint64_t siphash(std::span<const std::uint8_t> key16, std::span<const std::uint8_t> msg) {
    std::array<std::uint8_t, crypto_shorthash_BYTES> out{};
    crypto_shorthash(out.data(), msg.data(), msg.size(), key16.data());
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(out[i]) << (8 * i);
    return v;
  }

  static Bytes digest(std::span<const std::uint8_t> input, std::uint8_t domain, std::size_t len) {
    Bytes out;
    std::array<std::uint8_t, 16> key{};
    key[0] = domain;
    for (std::uint8_t i = 0; out.size() < len; ++i) {
      key[1] = i;
      const std::uint64_t h = siphash(key, input);
      for (int b = 0; b < 8 && out.size() < len; ++b) out.push_back(static_cast<std::uint8_t>(h >> (8 * b)));
    }
    return out;
  }

  static void keystream(const SymmetricKey& key, const NonceContext& nonce, Bytes& data) {
    auto n = nonce_bytes(nonce);
    std::uint64_t seed = 0;
    for (std::size_t i = 0; i < 8; ++i) seed ^= static_cast<std::uint64_t>(key[i]) << (8 * i);
    for (std::size_t i = 0; i < n.size(); i += 8) {
      std::uint64_t w = 0;
      for (std::size_t b = 0; b < 8; ++b) w |= static_cast<std::uint64_t>(n[i + b]) << (8 * b);
      seed = Rng::mix(seed ^ w);
    }
    for (std::size_t i = 0; i < data.size(); i += 8) {
      const std::uint64_t ks = Rng::mix(seed + i);
      for (std::size_t b = 0; b < 8 && i + b < data.size(); ++b) data[i + b] ^= static_cast<std::uint8_t>(ks >> (8 * b));
    }
  }

  static std::array<std::uint8_t, kTagBytes> tag(const SymmetricKey& key, const NonceContext& nonce,
                                                 std::span<const std::uint8_t> ad, std::span<const std::uint8_t> ct) {
    auto n = nonce_bytes(nonce);
    Bytes msg(n.begin(), n.end());
    put_u32(msg, static_cast<std::uint32_t>(ad.size()));
    msg.insert(msg.end(), ad.begin(), ad.end());
    msg.insert(msg.end(), ct.begin(), ct.end());
    std::array<std::uint8_t, kTagBytes> out{};
    const std::uint64_t lo = siphash(std::span(key).first(16), msg);
    const std::uint64_t hi = siphash(std::span(key).subspan(16, 16), msg);
    for (int b = 0; b < 8; ++b) {
      out[b] = static_cast<std::uint8_t>(lo >> (8 * b));
      out[8 + b] = static_cast<std::uint8_t>(hi >> (8 * b));
    }
    return out;
  }

  static Signature signature_for(std::span<const std::uint8_t> pk, std::span<const std::uint8_t> message) {
    Bytes input(pk.begin(), pk.end());
    input.insert(input.end(), message.begin(), message.end());
    auto d = digest(input, 0x53, kSignatureBytes);
    Signature out{};
    std::copy(d.begin(), d.end(), out.begin());
    return out;
  }
};

}  // namespace

SuitePtr make_sodium_suite() { return std::make_shared<SodiumSuite>(); }
SuitePtr make_sim_suite() { return std::make_shared<SimSuite>(); }
SuitePtr make_suite(bool simulated) { return simulated ? make_sim_suite() : make_sodium_suite(); }

// ---------------------------------------------------------------------------

const SymmetricKey& KeyPairSet::key(PartyId me, PartyId peer) const {
  auto p = parties.find(me);
  if (p == parties.end()) throw AuthError("unknown party");
  auto k = p->second.shared.find(peer);
  if (k == p->second.shared.end()) throw AuthError("no shared key for this pair");
  return k->second;
}

KeyPairSet setup_keys(std::span<const PartyId> parties, const CryptoSuite& suite, Rng& rng,
                      const KeyTamperHook& tamper) {
  std::set<PartyId> unique(parties.begin(), parties.end());
  if (unique.size() != parties.size()) throw ConfigError("party ids must be distinct");
  KeyPairSet out;
  for (PartyId id : parties) {
    auto& pk = out.parties[id];
    pk.signing = suite.signing_keygen(rng);
    out.signing_public[id] = pk.signing.public_key;
  }
  for (PartyId id : parties) {
    auto& pk = out.parties[id];
    pk.agreement = suite.agreement_keygen(rng);
    pk.agreement_signature = suite.sign(pk.signing, pk.agreement.public_key);
  }
  for (PartyId me : parties) {
    auto& mine = out.parties[me];
    for (PartyId peer : parties) {
      if (peer == me) continue;
      const auto& theirs = out.parties[peer];
      Bytes delivered = theirs.agreement.public_key;
      if (tamper) tamper(peer, me, delivered);
      if (!suite.verify(out.signing_public[peer], delivered, theirs.agreement_signature)) {
        out.aborted.insert(me);
        mine.shared.clear();
        break;
      }
      mine.shared[peer] = suite.agree(mine.agreement, delivered, me, peer);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Bytes ProtocolMessage::signed_bytes() const {
  Bytes out;
  out.reserve(18 + payload.size() + metadata.size());
  put_u32(out, sender);
  put_u32(out, recipient);
  out.push_back(round);
  out.push_back(static_cast<std::uint8_t>(kind));
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out.insert(out.end(), metadata.begin(), metadata.end());
  return out;
}

Bytes ProtocolMessage::serialize() const {
  Bytes out;
  out.reserve(wire_size());
  put_u32(out, sender);
  put_u32(out, recipient);
  out.push_back(round);
  put_u32(out, static_cast<std::uint32_t>(wire_size() - kHeaderBytes));
  out.push_back(static_cast<std::uint8_t>(kind));
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out.insert(out.end(), metadata.begin(), metadata.end());
  out.insert(out.end(), signature.begin(), signature.end());
  return out;
}

ProtocolMessage ProtocolMessage::parse(std::span<const std::uint8_t> wire) {
  if (wire.size() < kEnvelopeOverhead) throw DecodeError("message shorter than envelope");
  ProtocolMessage m;
  m.sender = get_u32(wire, 0);
  m.recipient = get_u32(wire, 4);
  m.round = wire[8];
  const std::uint32_t body = get_u32(wire, 9);
  if (static_cast<std::size_t>(body) + kHeaderBytes != wire.size()) throw DecodeError("length field mismatch");
  std::size_t at = kHeaderBytes;
  const std::uint8_t kind = wire[at++];
  if (kind < 1 || kind > 9) throw DecodeError("unknown message kind");
  m.kind = static_cast<MessageKind>(kind);
  const std::size_t plen = get_u32(wire, at);
  at += 4;
  if (plen > wire.size() - at) throw DecodeError("payload length overruns message");
  m.payload.assign(wire.begin() + at, wire.begin() + at + plen);
  at += plen;
  if (wire.size() - at < 4) throw DecodeError("truncated metadata length");
  const std::size_t mlen = get_u32(wire, at);
  at += 4;
  if (wire.size() - at != mlen + kSignatureBytes) throw DecodeError("metadata length mismatch");
  m.metadata.assign(wire.begin() + at, wire.begin() + at + mlen);
  at += mlen;
  std::copy(wire.begin() + at, wire.end(), m.signature.begin());
  return m;
}

void sign_message(ProtocolMessage& m, const CryptoSuite& suite, const KeyPair& signer) {
  m.signature = suite.sign(signer, m.signed_bytes());
}

bool verify_message(const ProtocolMessage& m, const CryptoSuite& suite, std::span<const std::uint8_t> sender_pk) {
  return suite.verify(sender_pk, m.signed_bytes(), m.signature);
}

NonceContext nonce_for(const ProtocolMessage& m, std::uint64_t iteration) {
  return NonceContext{iteration, m.round, static_cast<std::uint8_t>(m.kind), m.sender, m.recipient};
}

// ---------------------------------------------------------------------------

bool ServerMailbox::is_silent(PartyId party, std::uint8_t round) const {
  auto it = dropouts_.find(party);
  return it != dropouts_.end() && round >= it->second;
}

void ServerMailbox::record(PartyId from, PartyId to, std::uint8_t round, MessageKind kind, std::uint64_t bytes) {
  if (transcript_on_) transcript_.push_back({round, from, to, kind, bytes});
  auto& s = counters_[{from, round}];
  s.sent += bytes;
  ++s.messages_sent;
  auto& r = counters_[{to, round}];
  r.received += bytes;
  ++r.messages_received;
}

void ServerMailbox::submit(ProtocolMessage m) {
  std::lock_guard lock(mu_);
  if (is_silent(m.sender, m.round)) return;
  record(m.sender, kServer, m.round, m.kind, m.wire_size());
  if (m.recipient == kServer)
    to_server_.push_back(std::move(m));
  else
    to_clients_.push_back(std::move(m));
}

void ServerMailbox::send_from_server(ProtocolMessage m) {
  std::lock_guard lock(mu_);
  to_clients_.push_back(std::move(m));
}

std::vector<ProtocolMessage> ServerMailbox::collect_for_server(std::uint8_t round) {
  std::lock_guard lock(mu_);
  std::vector<ProtocolMessage> out;
  std::vector<ProtocolMessage> keep;
  for (auto& m : to_server_) (m.round == round ? out : keep).push_back(std::move(m));
  to_server_ = std::move(keep);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sender < b.sender; });
  return out;
}

std::map<PartyId, std::vector<Bytes>> ServerMailbox::deliver(std::uint8_t round) {
  std::lock_guard lock(mu_);
  std::vector<ProtocolMessage> out, keep;
  for (auto& m : to_clients_) (m.round == round ? out : keep).push_back(std::move(m));
  to_clients_ = std::move(keep);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.round, a.sender) < std::tie(b.round, b.sender);
  });
  std::map<PartyId, std::vector<Bytes>> inbox;
  for (const auto& m : out) {
    if (is_silent(m.recipient, round)) continue;
    Bytes wire = m.serialize();
    for (const auto& hook : hooks_) hook(m, wire);
    record(kServer, m.recipient, round, m.kind, wire.size());
    inbox[m.recipient].push_back(std::move(wire));
  }
  return inbox;
}

void ServerMailbox::account(PartyId from, PartyId to, std::uint8_t round, MessageKind kind, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  record(from, to, round, kind, bytes);
}

ByteCount ServerMailbox::count(PartyId party, std::uint8_t round) const {
  std::lock_guard lock(mu_);
  auto it = counters_.find({party, round});
  return it == counters_.end() ? ByteCount{} : it->second;
}

ByteCount ServerMailbox::total(PartyId party) const {
  std::lock_guard lock(mu_);
  ByteCount out;
  for (const auto& [key, c] : counters_) {
    if (key.first != party) continue;
    out.sent += c.sent;
    out.received += c.received;
    out.messages_sent += c.messages_sent;
    out.messages_received += c.messages_received;
  }
  return out;
}

}  // namespace rflpa::channel
