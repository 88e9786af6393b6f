// SPDX-License-Identifier: Apache-2.0
//
// Server-mediated transport: key agreement, authenticated encryption and
// signatures behind one CryptoSuite interface, the signed message envelope,
// and the simulated server mailbox that routes and counts every byte.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rflpa/errors.h"
#include "rflpa/rng.h"

namespace rflpa::channel {

using Bytes = std::vector<std::uint8_t>;
using PartyId = std::uint32_t;

inline constexpr PartyId kServer = 0xFFFFFFFFu;

inline constexpr std::size_t kKeyBytes = 32;
inline constexpr std::size_t kTagBytes = 16;
inline constexpr std::size_t kSignatureBytes = 64;

using SymmetricKey = std::array<std::uint8_t, kKeyBytes>;
using Signature = std::array<std::uint8_t, kSignatureBytes>;

struct KeyPair {
  Bytes public_key;
  Bytes secret_key;
};

// Nonces are never transmitted: both ends derive them from the envelope
// header, which is unique per (round, kind, sender, recipient).
struct NonceContext {
  std::uint64_t iteration = 0;
  std::uint8_t round = 0;
  std::uint8_t kind = 0;
  PartyId sender = 0;
  PartyId recipient = 0;
};

class CryptoSuite {
 public:
  virtual ~CryptoSuite() = default;
  virtual bool simulated() const = 0;

  virtual KeyPair agreement_keygen(Rng& rng) const = 0;
  virtual KeyPair signing_keygen(Rng& rng) const = 0;
  // Symmetric in (me, peer). Throws AuthError on an invalid peer key.
  virtual SymmetricKey agree(const KeyPair& mine, std::span<const std::uint8_t> peer_public, PartyId me,
                             PartyId peer) const = 0;

  // Returns ciphertext || tag (plaintext size + kTagBytes).
  virtual Bytes seal(const SymmetricKey& key, const NonceContext& nonce, std::span<const std::uint8_t> ad,
                     std::span<const std::uint8_t> plaintext) const = 0;
  // Throws AuthError on any modification or wrong key.
  virtual Bytes unseal(const SymmetricKey& key, const NonceContext& nonce, std::span<const std::uint8_t> ad,
                       std::span<const std::uint8_t> ciphertext) const = 0;

  virtual Signature sign(const KeyPair& signer, std::span<const std::uint8_t> message) const = 0;
  virtual bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> message,
                      std::span<const std::uint8_t> signature) const = 0;
};

using SuitePtr = std::shared_ptr<const CryptoSuite>;

// libsodium: X25519 + BLAKE2b key derivation, XChaCha20-Poly1305, Ed25519.
SuitePtr make_sodium_suite();
// Keyed pseudorandom stand-ins with identical sizes and failure behavior.
SuitePtr make_sim_suite();
SuitePtr make_suite(bool simulated);

// ---------------------------------------------------------------------------

struct PartyKeys {
  KeyPair agreement;
  KeyPair signing;
  Signature agreement_signature{};  // sign(signing.sk, agreement.pk)
  std::map<PartyId, SymmetricKey> shared;
};

struct KeyPairSet {
  std::map<PartyId, PartyKeys> parties;
  std::map<PartyId, Bytes> signing_public;  // distributed by the trusted party
  std::set<PartyId> aborted;                // parties whose setup failed verification

  const SymmetricKey& key(PartyId me, PartyId peer) const;
};

// Hook applied to party `from`'s agreement key as delivered to `to`.
using KeyTamperHook = std::function<void(PartyId from, PartyId to, Bytes& agreement_public)>;

// The trusted party issues signing keys; each party publishes a signed
// agreement key through the server; every recipient checks every signature
// before deriving pairwise keys. A failed check aborts setup for the
// recipient, which is recorded in `aborted`.
KeyPairSet setup_keys(std::span<const PartyId> parties, const CryptoSuite& suite, Rng& rng,
                      const KeyTamperHook& tamper = {});

// ---------------------------------------------------------------------------

enum class MessageKind : std::uint8_t {
  kServerModel = 1,   // model, norm data and root-gradient shares
  kShares = 2,        // encrypted gradient shares + witnesses, commitments in clear
  kComplaint = 3,     // accusations against dealers
  kReshares = 4,      // encrypted reshares of partial products
  kValidSet = 5,      // server-announced accepted senders
  kFinalShares = 6,   // final and syndrome shares (signed, not encrypted)
  kTrustScores = 7,   // trust score numerators
  kAggregate = 8,     // weighted aggregate shares
  kRoster = 9,        // respondent set announcement
};

inline constexpr std::size_t kHeaderBytes = 13;
// kind + payload length + metadata length + signature
inline constexpr std::size_t kEnvelopeOverhead = kHeaderBytes + 1 + 4 + 4 + kSignatureBytes;

struct ProtocolMessage {
  PartyId sender = 0;
  PartyId recipient = 0;
  std::uint8_t round = 0;
  MessageKind kind = MessageKind::kShares;
  Bytes payload;   // ciphertext, or plaintext for unencrypted kinds
  Bytes metadata;  // commitments and other public attachments
  Signature signature{};

  // Bytes covered by the signature: header fields, kind, payload, metadata.
  Bytes signed_bytes() const;
  std::size_t wire_size() const { return kEnvelopeOverhead + payload.size() + metadata.size(); }
  Bytes serialize() const;
  // Throws DecodeError on malformed input.
  static ProtocolMessage parse(std::span<const std::uint8_t> wire);

  friend bool operator==(const ProtocolMessage&, const ProtocolMessage&) = default;
};

void sign_message(ProtocolMessage& m, const CryptoSuite& suite, const KeyPair& signer);
bool verify_message(const ProtocolMessage& m, const CryptoSuite& suite, std::span<const std::uint8_t> sender_pk);

NonceContext nonce_for(const ProtocolMessage& m, std::uint64_t iteration);

// ---------------------------------------------------------------------------

struct ByteCount {
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;
};

struct TranscriptRecord {
  std::uint8_t round = 0;
  PartyId from = 0;
  PartyId to = 0;
  MessageKind kind = MessageKind::kShares;
  std::uint64_t bytes = 0;
};

// Flips bits of a forwarded message in place; called with the wire bytes.
using TamperHook = std::function<void(const ProtocolMessage& original, Bytes& wire)>;

class ServerMailbox {
 public:
  // party -> first round in which it is silent.
  void set_dropout_schedule(std::map<PartyId, std::uint8_t> schedule) { dropouts_ = std::move(schedule); }
  bool is_silent(PartyId party, std::uint8_t round) const;
  void add_tamper_hook(TamperHook hook) { hooks_.push_back(std::move(hook)); }

  // Client -> server hop. Messages from parties silent in this round are
  // discarded uncounted. Thread-safe.
  void submit(ProtocolMessage m);

  // Server -> client message, either originated by the server or relayed
  // with the original sender and signature. Counted when delivered.
  void send_from_server(ProtocolMessage m);

  // Drains and returns messages addressed to the server for this round,
  // sorted by sender.
  std::vector<ProtocolMessage> collect_for_server(std::uint8_t round);

  // Server -> recipient hop for every queued client-addressed message of this
  // round. Applies tamper hooks; returns wire bytes per recipient sorted by
  // (round, sender). Each message is delivered at most once.
  std::map<PartyId, std::vector<Bytes>> deliver(std::uint8_t round);

  // Size-only accounting for traffic that is not materialized.
  void account(PartyId from, PartyId to, std::uint8_t round, MessageKind kind, std::uint64_t bytes);

  ByteCount count(PartyId party, std::uint8_t round) const;
  ByteCount total(PartyId party) const;
  const std::map<std::pair<PartyId, std::uint8_t>, ByteCount>& counters() const { return counters_; }
  void reset_counters() {
    counters_.clear();
    transcript_.clear();
  }

  void enable_transcript(bool on) { transcript_on_ = on; }
  const std::vector<TranscriptRecord>& transcript() const { return transcript_; }

 private:
  void record(PartyId from, PartyId to, std::uint8_t round, MessageKind kind, std::uint64_t bytes);

  std::map<PartyId, std::uint8_t> dropouts_;
  std::vector<TamperHook> hooks_;
  std::vector<ProtocolMessage> to_server_;
  std::vector<ProtocolMessage> to_clients_;
  std::map<std::pair<PartyId, std::uint8_t>, ByteCount> counters_;
  bool transcript_on_ = false;
  std::vector<TranscriptRecord> transcript_;
  mutable std::mutex mu_;
};

}  // namespace rflpa::channel
