#ifndef TOUCHLINK_RNG_HPP
#define TOUCHLINK_RNG_HPP

// Single deterministic randomness source. Every random quantity in a
// simulation (transaction ids, response ids, generated keys, phantom
// network parameters) is drawn from one seeded stream so identical
// (scenario, seed) pairs replay identically.

#include "touchlink/crypto.hpp"

#include <cstdint>
#include <random>

namespace touchlink {

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }
    uint32_t next_u32() { return static_cast<uint32_t>(gen_()); }
    uint16_t next_u16() { return static_cast<uint16_t>(gen_()); }

    uint32_t nonzero_u32() {
        uint32_t v;
        do {
            v = next_u32();
        } while (v == 0);
        return v;
    }

    uint64_t nonzero_u64() {
        uint64_t v;
        do {
            v = next_u64();
        } while (v == 0);
        return v;
    }

    crypto::Key128 next_key() {
        crypto::Key128 k;
        for (auto& b : k.bytes) b = static_cast<uint8_t>(gen_());
        return k;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace touchlink

#endif
