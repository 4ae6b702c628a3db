#ifndef TOUCHLINK_RADIO_HPP
#define TOUCHLINK_RADIO_HPP

// Radio-level constants and the log-distance path-loss model shared by the
// simulator and the device timing rules.

#include <cmath>
#include <cstdint>

namespace touchlink::radio {

// Fixed propagation delay per hop, independent of distance.
constexpr uint64_t kPropagationDelayUs = 1;

// Serialization time per frame byte (symbolic 250 kbit/s link).
constexpr uint64_t kAirtimeUsPerByte = 32;

inline uint64_t airtime_us(size_t frame_bytes) { return kAirtimeUsPerByte * frame_bytes; }

// Time from the start of a transmission until the last byte lands.
inline uint64_t delivery_delay_us(size_t frame_bytes) {
    return kPropagationDelayUs + airtime_us(frame_bytes);
}

// Log-distance path loss: rssi = tx − reference_loss − 10·n·log10(d).
// Defaults calibrate the legitimate commissioning range to roughly two
// meters at 0 dBm; amplified transmitters reach tens of meters.
struct PathLossModel {
    double reference_loss_db = 34.0;  // loss at 1 m
    double exponent = 2.0;
    double noise_floor_dbm = -85.0;

    double rssi(double tx_power_dbm, double distance_m) const {
        // Distance 0 clamps to the reference loss so the model stays defined.
        if (distance_m <= 0.0) return tx_power_dbm - reference_loss_db;
        return tx_power_dbm - reference_loss_db - 10.0 * exponent * std::log10(distance_m);
    }

    bool operator==(const PathLossModel&) const = default;
};

}  // namespace touchlink::radio

#endif
