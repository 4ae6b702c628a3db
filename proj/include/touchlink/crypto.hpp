#ifndef TOUCHLINK_CRYPTO_HPP
#define TOUCHLINK_CRYPTO_HPP

// Key-transport derivation for touchlink commissioning and the CCM* scheme
// protecting in-network frames. Both are built on a self-contained AES-128,
// exposed below so tests can cross-check it against an independent library.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace touchlink::crypto {

struct Key128 {
    std::array<uint8_t, 16> bytes{};

    static std::optional<Key128> from_hex(std::string_view hex);
    std::string to_hex() const;
    bool operator==(const Key128&) const = default;
};

std::array<uint8_t, 16> aes128_encrypt_block(const Key128& key,
                                             const std::array<uint8_t, 16>& block);
std::array<uint8_t, 16> aes128_decrypt_block(const Key128& key,
                                             const std::array<uint8_t, 16>& block);

// The id pair a scan exchange establishes: the initiator's transaction id
// and the responder's response id. Both sides must hold identical values
// for the key transport below to agree. expires_at bounds the transaction's
// lifetime in simulated time; the derivations below ignore it.
struct TransactionContext {
    uint32_t transaction_id = 0;
    uint32_t response_id = 0;
    uint64_t expires_at = 0;  // sim-time µs; 0 = not tracked
};

// 16-byte expansion block: transaction id twice, then response id twice,
// each written as a big-endian 32-bit word. A zero transaction id is
// invalid everywhere in the protocol, so all four derivations refuse it
// by returning nullopt.
std::optional<std::array<uint8_t, 16>> expand_ids(uint32_t transaction_id, uint32_t response_id);

// Transport key = AES-128(master key, expansion block).
std::optional<Key128> derive_transport_key(const Key128& master, const TransactionContext& ctx);

// Network key as it travels inside a join request: AES-128 encryption of
// the key under the transport key. Unwrap inverts it. Anyone holding the
// master key and both ids can unwrap — that asymmetry-free design is the
// protocol's central weakness and what the key-extraction tooling exploits.
std::optional<std::array<uint8_t, 16>> wrap_network_key(const Key128& master,
                                                        const TransactionContext& ctx,
                                                        const Key128& network_key);
std::optional<Key128> unwrap_network_key(const Key128& master, const TransactionContext& ctx,
                                         const std::array<uint8_t, 16>& wrapped);

// Per-frame context for CCM*: the sender's short address and its monotone
// outgoing frame counter. Reusing a (key, src, counter) triple reuses the
// keystream, so senders must never rewind the counter.
struct CcmContext {
    uint16_t src_short = 0;
    uint32_t frame_counter = 0;
};

struct CcmSealed {
    std::vector<uint8_t> ciphertext;
    uint32_t mic = 0;  // 32-bit tag, bytes packed little-endian
};

// Authenticated encryption, CCM*-style: CBC-MAC over a length-bound header
// block plus the zero-padded plaintext, CTR encryption with per-block
// counter blocks, 32-bit tag = first four bytes of the masked MAC state.
CcmSealed ccm_encrypt(const Key128& key, CcmContext ctx, std::span<const uint8_t> plaintext);

// Returns the plaintext, or nullopt when the tag does not verify.
std::optional<std::vector<uint8_t>> ccm_decrypt(const Key128& key, CcmContext ctx,
                                                std::span<const uint8_t> ciphertext, uint32_t mic);

}  // namespace touchlink::crypto

#endif
