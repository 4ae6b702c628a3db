#include "touchlink/crypto.hpp"

#include "touchlink/wire.hpp"

#include <cstring>

namespace touchlink::crypto {

namespace {

// ---- AES-128 core -------------------------------------------------------

constexpr uint8_t kSbox[256] = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
};

constexpr uint8_t kInvSbox[256] = {
    0x52, 0x09, 0x6a, 0xd5, 0x30, 0x36, 0xa5, 0x38, 0xbf, 0x40, 0xa3, 0x9e, 0x81, 0xf3, 0xd7, 0xfb,
    0x7c, 0xe3, 0x39, 0x82, 0x9b, 0x2f, 0xff, 0x87, 0x34, 0x8e, 0x43, 0x44, 0xc4, 0xde, 0xe9, 0xcb,
    0x54, 0x7b, 0x94, 0x32, 0xa6, 0xc2, 0x23, 0x3d, 0xee, 0x4c, 0x95, 0x0b, 0x42, 0xfa, 0xc3, 0x4e,
    0x08, 0x2e, 0xa1, 0x66, 0x28, 0xd9, 0x24, 0xb2, 0x76, 0x5b, 0xa2, 0x49, 0x6d, 0x8b, 0xd1, 0x25,
    0x72, 0xf8, 0xf6, 0x64, 0x86, 0x68, 0x98, 0x16, 0xd4, 0xa4, 0x5c, 0xcc, 0x5d, 0x65, 0xb6, 0x92,
    0x6c, 0x70, 0x48, 0x50, 0xfd, 0xed, 0xb9, 0xda, 0x5e, 0x15, 0x46, 0x57, 0xa7, 0x8d, 0x9d, 0x84,
    0x90, 0xd8, 0xab, 0x00, 0x8c, 0xbc, 0xd3, 0x0a, 0xf7, 0xe4, 0x58, 0x05, 0xb8, 0xb3, 0x45, 0x06,
    0xd0, 0x2c, 0x1e, 0x8f, 0xca, 0x3f, 0x0f, 0x02, 0xc1, 0xaf, 0xbd, 0x03, 0x01, 0x13, 0x8a, 0x6b,
    0x3a, 0x91, 0x11, 0x41, 0x4f, 0x67, 0xdc, 0xea, 0x97, 0xf2, 0xcf, 0xce, 0xf0, 0xb4, 0xe6, 0x73,
    0x96, 0xac, 0x74, 0x22, 0xe7, 0xad, 0x35, 0x85, 0xe2, 0xf9, 0x37, 0xe8, 0x1c, 0x75, 0xdf, 0x6e,
    0x47, 0xf1, 0x1a, 0x71, 0x1d, 0x29, 0xc5, 0x89, 0x6f, 0xb7, 0x62, 0x0e, 0xaa, 0x18, 0xbe, 0x1b,
    0xfc, 0x56, 0x3e, 0x4b, 0xc6, 0xd2, 0x79, 0x20, 0x9a, 0xdb, 0xc0, 0xfe, 0x78, 0xcd, 0x5a, 0xf4,
    0x1f, 0xdd, 0xa8, 0x33, 0x88, 0x07, 0xc7, 0x31, 0xb1, 0x12, 0x10, 0x59, 0x27, 0x80, 0xec, 0x5f,
    0x60, 0x51, 0x7f, 0xa9, 0x19, 0xb5, 0x4a, 0x0d, 0x2d, 0xe5, 0x7a, 0x9f, 0x93, 0xc9, 0x9c, 0xef,
    0xa0, 0xe0, 0x3b, 0x4d, 0xae, 0x2a, 0xf5, 0xb0, 0xc8, 0xeb, 0xbb, 0x3c, 0x83, 0x53, 0x99, 0x61,
    0x17, 0x2b, 0x04, 0x7e, 0xba, 0x77, 0xd6, 0x26, 0xe1, 0x69, 0x14, 0x63, 0x55, 0x21, 0x0c, 0x7d,
};

constexpr uint8_t kRcon[10] = {0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36};

uint8_t xtime(uint8_t x) { return static_cast<uint8_t>((x << 1) ^ ((x >> 7) * 0x1b)); }

uint8_t gmul(uint8_t a, uint8_t b) {
    uint8_t p = 0;
    while (b) {
        if (b & 1) p ^= a;
        a = xtime(a);
        b >>= 1;
    }
    return p;
}

struct RoundKeys {
    uint8_t rk[11][16];
};

RoundKeys expand_key(const Key128& key) {
    RoundKeys out;
    std::memcpy(out.rk[0], key.bytes.data(), 16);
    for (int r = 1; r <= 10; ++r) {
        const uint8_t* prev = out.rk[r - 1];
        uint8_t* cur = out.rk[r];
        // rotate+substitute the previous round's last word, add rcon
        cur[0] = static_cast<uint8_t>(prev[0] ^ kSbox[prev[13]] ^ kRcon[r - 1]);
        cur[1] = static_cast<uint8_t>(prev[1] ^ kSbox[prev[14]]);
        cur[2] = static_cast<uint8_t>(prev[2] ^ kSbox[prev[15]]);
        cur[3] = static_cast<uint8_t>(prev[3] ^ kSbox[prev[12]]);
        for (int i = 4; i < 16; ++i) cur[i] = static_cast<uint8_t>(prev[i] ^ cur[i - 4]);
    }
    return out;
}

void add_round_key(uint8_t s[16], const uint8_t rk[16]) {
    for (int i = 0; i < 16; ++i) s[i] ^= rk[i];
}

void sub_bytes(uint8_t s[16]) {
    for (int i = 0; i < 16; ++i) s[i] = kSbox[s[i]];
}

void inv_sub_bytes(uint8_t s[16]) {
    for (int i = 0; i < 16; ++i) s[i] = kInvSbox[s[i]];
}

// State is column-major: byte i sits at row i%4, column i/4.
void shift_rows(uint8_t s[16]) {
    uint8_t t;
    t = s[1]; s[1] = s[5]; s[5] = s[9]; s[9] = s[13]; s[13] = t;
    std::swap(s[2], s[10]);
    std::swap(s[6], s[14]);
    t = s[15]; s[15] = s[11]; s[11] = s[7]; s[7] = s[3]; s[3] = t;
}

void inv_shift_rows(uint8_t s[16]) {
    uint8_t t;
    t = s[13]; s[13] = s[9]; s[9] = s[5]; s[5] = s[1]; s[1] = t;
    std::swap(s[2], s[10]);
    std::swap(s[6], s[14]);
    t = s[3]; s[3] = s[7]; s[7] = s[11]; s[11] = s[15]; s[15] = t;
}

void mix_columns(uint8_t s[16]) {
    for (int c = 0; c < 4; ++c) {
        uint8_t* col = s + 4 * c;
        uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
        col[0] = static_cast<uint8_t>(xtime(a0) ^ xtime(a1) ^ a1 ^ a2 ^ a3);
        col[1] = static_cast<uint8_t>(a0 ^ xtime(a1) ^ xtime(a2) ^ a2 ^ a3);
        col[2] = static_cast<uint8_t>(a0 ^ a1 ^ xtime(a2) ^ xtime(a3) ^ a3);
        col[3] = static_cast<uint8_t>(xtime(a0) ^ a0 ^ a1 ^ a2 ^ xtime(a3));
    }
}

void inv_mix_columns(uint8_t s[16]) {
    for (int c = 0; c < 4; ++c) {
        uint8_t* col = s + 4 * c;
        uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
        col[0] = static_cast<uint8_t>(gmul(a0, 14) ^ gmul(a1, 11) ^ gmul(a2, 13) ^ gmul(a3, 9));
        col[1] = static_cast<uint8_t>(gmul(a0, 9) ^ gmul(a1, 14) ^ gmul(a2, 11) ^ gmul(a3, 13));
        col[2] = static_cast<uint8_t>(gmul(a0, 13) ^ gmul(a1, 9) ^ gmul(a2, 14) ^ gmul(a3, 11));
        col[3] = static_cast<uint8_t>(gmul(a0, 11) ^ gmul(a1, 13) ^ gmul(a2, 9) ^ gmul(a3, 14));
    }
}

using Block = std::array<uint8_t, 16>;

Block encrypt_block(const RoundKeys& keys, const Block& in) {
    Block out = in;
    uint8_t* s = out.data();
    add_round_key(s, keys.rk[0]);
    for (int r = 1; r < 10; ++r) {
        sub_bytes(s);
        shift_rows(s);
        mix_columns(s);
        add_round_key(s, keys.rk[r]);
    }
    sub_bytes(s);
    shift_rows(s);
    add_round_key(s, keys.rk[10]);
    return out;
}

Block decrypt_block(const RoundKeys& keys, const Block& in) {
    Block out = in;
    uint8_t* s = out.data();
    add_round_key(s, keys.rk[10]);
    inv_shift_rows(s);
    inv_sub_bytes(s);
    for (int r = 9; r >= 1; --r) {
        add_round_key(s, keys.rk[r]);
        inv_mix_columns(s);
        inv_shift_rows(s);
        inv_sub_bytes(s);
    }
    add_round_key(s, keys.rk[0]);
    return out;
}

// ---- CCM* block construction --------------------------------------------

// Counter block i: source short address (LE), frame counter (LE), a fixed
// 0x05 domain byte, a flags byte (0x00 for counter blocks, 0xA5 for the
// MAC header block), six zero bytes, and a big-endian 16-bit block index
// (the MAC header block carries the payload length there instead).
Block counter_block(CcmContext ctx, uint16_t index) {
    Block b{};
    b[0] = static_cast<uint8_t>(ctx.src_short);
    b[1] = static_cast<uint8_t>(ctx.src_short >> 8);
    for (int i = 0; i < 4; ++i) b[2 + i] = static_cast<uint8_t>(ctx.frame_counter >> (8 * i));
    b[6] = 0x05;
    b[14] = static_cast<uint8_t>(index >> 8);
    b[15] = static_cast<uint8_t>(index);
    return b;
}

Block mac_header_block(CcmContext ctx, uint16_t payload_len) {
    Block b = counter_block(ctx, payload_len);
    b[7] = 0xA5;
    return b;
}

uint32_t compute_mic(const RoundKeys& keys, CcmContext ctx, std::span<const uint8_t> plaintext) {
    Block x = encrypt_block(keys, mac_header_block(ctx, static_cast<uint16_t>(plaintext.size())));
    for (size_t off = 0; off < plaintext.size(); off += 16) {
        size_t n = std::min<size_t>(16, plaintext.size() - off);
        for (size_t i = 0; i < n; ++i) x[i] ^= plaintext[off + i];
        x = encrypt_block(keys, x);
    }
    Block s0 = encrypt_block(keys, counter_block(ctx, 0));
    uint32_t mic = 0;
    for (int i = 0; i < 4; ++i) mic |= static_cast<uint32_t>(x[i] ^ s0[i]) << (8 * i);
    return mic;
}

void ctr_xor(const RoundKeys& keys, CcmContext ctx, std::span<const uint8_t> in,
             std::vector<uint8_t>& out) {
    out.resize(in.size());
    for (size_t off = 0; off < in.size(); off += 16) {
        Block ks = encrypt_block(keys, counter_block(ctx, static_cast<uint16_t>(off / 16 + 1)));
        size_t n = std::min<size_t>(16, in.size() - off);
        for (size_t i = 0; i < n; ++i) out[off + i] = in[off + i] ^ ks[i];
    }
}

}  // namespace

std::optional<Key128> Key128::from_hex(std::string_view hex) {
    auto bytes = wire::from_hex(hex);
    if (!bytes || bytes->size() != 16) return std::nullopt;
    Key128 key;
    std::memcpy(key.bytes.data(), bytes->data(), 16);
    return key;
}

std::string Key128::to_hex() const { return wire::to_hex(bytes); }

std::array<uint8_t, 16> aes128_encrypt_block(const Key128& key,
                                             const std::array<uint8_t, 16>& block) {
    return encrypt_block(expand_key(key), block);
}

std::array<uint8_t, 16> aes128_decrypt_block(const Key128& key,
                                             const std::array<uint8_t, 16>& block) {
    return decrypt_block(expand_key(key), block);
}

std::optional<std::array<uint8_t, 16>> expand_ids(uint32_t transaction_id, uint32_t response_id) {
    if (transaction_id == 0) return std::nullopt;
    std::array<uint8_t, 16> out;
    auto put_be = [&](size_t at, uint32_t v) {
        out[at] = static_cast<uint8_t>(v >> 24);
        out[at + 1] = static_cast<uint8_t>(v >> 16);
        out[at + 2] = static_cast<uint8_t>(v >> 8);
        out[at + 3] = static_cast<uint8_t>(v);
    };
    put_be(0, transaction_id);
    put_be(4, transaction_id);
    put_be(8, response_id);
    put_be(12, response_id);
    return out;
}

std::optional<Key128> derive_transport_key(const Key128& master, const TransactionContext& ctx) {
    auto block = expand_ids(ctx.transaction_id, ctx.response_id);
    if (!block) return std::nullopt;
    return Key128{aes128_encrypt_block(master, *block)};
}

std::optional<std::array<uint8_t, 16>> wrap_network_key(const Key128& master,
                                                        const TransactionContext& ctx,
                                                        const Key128& network_key) {
    auto transport = derive_transport_key(master, ctx);
    if (!transport) return std::nullopt;
    return aes128_encrypt_block(*transport, network_key.bytes);
}

std::optional<Key128> unwrap_network_key(const Key128& master, const TransactionContext& ctx,
                                         const std::array<uint8_t, 16>& wrapped) {
    auto transport = derive_transport_key(master, ctx);
    if (!transport) return std::nullopt;
    return Key128{aes128_decrypt_block(*transport, wrapped)};
}

CcmSealed ccm_encrypt(const Key128& key, CcmContext ctx, std::span<const uint8_t> plaintext) {
    RoundKeys keys = expand_key(key);
    CcmSealed out;
    out.mic = compute_mic(keys, ctx, plaintext);
    ctr_xor(keys, ctx, plaintext, out.ciphertext);
    return out;
}

std::optional<std::vector<uint8_t>> ccm_decrypt(const Key128& key, CcmContext ctx,
                                                std::span<const uint8_t> ciphertext, uint32_t mic) {
    RoundKeys keys = expand_key(key);
    std::vector<uint8_t> plaintext;
    ctr_xor(keys, ctx, ciphertext, plaintext);
    if (compute_mic(keys, ctx, plaintext) != mic) return std::nullopt;
    return plaintext;
}

}  // namespace touchlink::crypto
