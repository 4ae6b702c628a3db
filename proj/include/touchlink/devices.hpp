#ifndef TOUCHLINK_DEVICES_HPP
#define TOUCHLINK_DEVICES_HPP

// Vendor-profiled state machines for ZLL end devices (bulbs) and
// initiators (bridges/gateways/hubs). Frame handling is synchronous:
// handle_frame mutates the state and returns the frames to transmit plus
// log records; the radio simulator owns delivery, timing, and MAC-level
// auto-acknowledgment.

#include "touchlink/crypto.hpp"
#include "touchlink/rng.hpp"
#include "touchlink/wire.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace touchlink::devices {

enum class ScanResponsePolicy : uint8_t { Always, ButtonWindow, Never };
enum class BlinkAftermath : uint8_t { RestorePrevious, DefaultState };

// Behavioral constants distinguishing the six modeled products.
struct VendorProfile {
    std::string_view name;
    bool is_lamp;  // end device with a lamp (bulbs); false for initiators
    bool requires_mac_ack;
    uint64_t ack_deadline_us;  // 864 where requires_mac_ack
    ScanResponsePolicy scan_response_policy;
    uint64_t button_window_s;
    uint32_t max_identify_s;
    uint32_t default_identify_s;
    BlinkAftermath blink_aftermath;
    bool supports_physical_reset;
    double touchlink_rssi_threshold_dbm;
};

// hue-bulb | lightify-bulb | link-bulb | hue-bridge | lightify-gateway | link-hub
const VendorProfile* find_profile(std::string_view name);
const VendorProfile& hue_bulb();
const VendorProfile& lightify_bulb();
const VendorProfile& link_bulb();
const VendorProfile& hue_bridge();
const VendorProfile& lightify_gateway();
const VendorProfile& link_hub();

// Pending-transaction lifetime: scan establishes a context that follow-up
// commands must reference within this window.
constexpr uint64_t kTransactionLifetimeUs = 8'000'000;

// Channel a factory-new device parks on unless configured otherwise.
constexpr uint8_t kDefaultListenChannel = 11;

struct LampState {
    bool on = true;
    uint16_t hue = 0;
    uint8_t brightness = 254;
    bool operator==(const LampState&) const = default;
};

inline LampState default_lamp_state() { return {}; }

struct NetworkParams {
    uint64_t extended_pan_id = 0;
    uint16_t pan_id = 0;
    uint8_t channel = wire::kMinChannel;
    crypto::Key128 network_key;
    uint8_t network_update_id = 0;
    uint16_t short_addr = 0;
    bool operator==(const NetworkParams&) const = default;
};

struct EndDeviceState {
    const VendorProfile* profile = &hue_bulb();
    uint64_t extended_addr = 0;
    crypto::Key128 master_key;
    bool factory_new = true;
    uint8_t listen_channel = kDefaultListenChannel;  // used while factory new
    std::optional<NetworkParams> net;
    LampState lamp;
    std::optional<uint64_t> identify_until;  // sim-time µs
    LampState pre_identify_lamp;
    std::optional<crypto::TransactionContext> pending;
    std::optional<uint8_t> awaiting_ack_seq;
    uint64_t awaiting_ack_deadline = 0;  // sim-time µs, valid while awaiting
    std::map<uint16_t, uint32_t> rx_frame_counters;  // per-source highest seen
    uint8_t seq = 0;                                 // MAC sequence counter

    uint8_t current_channel() const { return net ? net->channel : listen_channel; }
    bool identify_active(uint64_t now_us) const {
        return identify_until && now_us < *identify_until;
    }
};

struct InitiatorState {
    const VendorProfile* profile = &hue_bridge();
    uint64_t extended_addr = 0;
    crypto::Key128 master_key;
    bool factory_new = false;
    uint8_t listen_channel = kDefaultListenChannel;
    std::optional<NetworkParams> net;
    std::optional<uint64_t> button_pressed_at;
    std::optional<crypto::TransactionContext> pending;  // as a scan target
    uint32_t tx_frame_counter = 0;
    uint16_t next_assigned_short = 0x0002;
    std::map<uint16_t, uint32_t> rx_frame_counters;
    uint8_t seq = 0;

    uint8_t current_channel() const { return net ? net->channel : listen_channel; }
};

// Reception context the simulator supplies with each frame.
struct RxContext {
    uint64_t now_us = 0;
    uint8_t channel = kDefaultListenChannel;
    double rssi_dbm = 0;
    Rng* rng = nullptr;  // entropy for response ids
};

struct Emission {
    wire::Frame frame;
    uint64_t delay_us = 0;  // relative to the handling instant
};

// Devices never emit error frames: invalid input is dropped, and the drop
// reason code is returned for the simulator log.
struct HandleResult {
    std::vector<Emission> tx;
    std::vector<std::string> drops;  // machine-readable reason codes
    std::vector<std::string> notes;  // state-change records for the log
    std::optional<uint64_t> timer_at;  // absolute µs; device wants a timer callback
};

HandleResult handle_frame(EndDeviceState& dev, const wire::Frame& frame, const RxContext& ctx);
HandleResult handle_frame(InitiatorState& dev, const wire::Frame& frame, const RxContext& ctx);

// Timer callback: identify expiry and the MAC-ack deadline.
HandleResult on_timer(EndDeviceState& dev, uint64_t now_us);
HandleResult on_timer(InitiatorState& dev, uint64_t now_us);

// hue-bridge pairing button; the scan-answer window is 30 s from the most
// recent press.
void press_button(InitiatorState& dev, uint64_t now_us);

// Manufacturer power-cycle reset. Returns false (state untouched) for
// profiles without one; already-factory-new devices stay unchanged.
bool physical_reset(EndDeviceState& dev);

// Classical-commissioning stand-in: instantly rejoins a factory-new device
// to the given network, no radio exchange modeled.
void rejoin_via_classical(EndDeviceState& dev, const NetworkParams& net);

// One-line state snapshot, stable field order (documented in the repo).
std::string snapshot_line(std::string_view node_name, const EndDeviceState& dev);
std::string snapshot_line(std::string_view node_name, const InitiatorState& dev);

}  // namespace touchlink::devices

#endif
