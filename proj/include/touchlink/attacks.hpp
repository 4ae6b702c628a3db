#ifndef TOUCHLINK_ATTACKS_HPP
#define TOUCHLINK_ATTACKS_HPP

// Attacker-side toolkit. Everything here drives an attacker node inside the
// radio simulator: active reconnaissance scans, transaction-abusing commands
// (permanent blink, factory reset, channel and phantom-join denial of
// service, network takeover), raw secured-command injection, and offline
// network-key extraction from a sniffer capture.

#include "touchlink/airsim.hpp"
#include "touchlink/crypto.hpp"
#include "touchlink/wire.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace touchlink::attacks {

// How attack frames are sourced. A spoofed IEEE address replaces the
// attacker node's own in every frame it sends; the master key, when known,
// unlocks key wrapping (hijack).
struct AttackerConfig {
    std::optional<uint64_t> spoof_extended_src;
    std::optional<crypto::Key128> master_key;
};

// One responder found by an active scan, carrying everything needed to aim
// follow-up transaction commands at it.
struct DiscoveredDevice {
    uint64_t extended_addr = 0;
    uint8_t channel = devices::kDefaultListenChannel;
    wire::ScanResponse scan_response{};
    double rssi_dbm = 0.0;
    crypto::TransactionContext ctx{};
    bool ack_requested = false;  // responder demanded a MAC ack
    bool ack_observed = false;   // a matching ack was sniffed afterwards
};

enum class Verdict : uint8_t {
    Success,
    AckTimeout,         // responder wanted an ack nobody sent; transaction dead
    NoDeviceFound,      // no target to attack
    Rejected,           // refused before or at the target (bad args, refusal)
    NoEffect,           // frames went out but the target state never changed
    IncompleteCapture,  // extraction: no transaction has all required frames
    MixedTransactions,  // extraction: several interleaved partial transactions
};

const char* verdict_name(Verdict v);

// Result of one attack run, with target state before and after for reports.
struct Outcome {
    std::string attack;
    Verdict verdict = Verdict::NoEffect;
    uint64_t target_extended = 0;
    uint64_t frames_sent = 0;
    uint64_t frames_received = 0;
    std::string detail;
    std::string state_before;
    std::string state_after;
};

// Multi-line key=value rendering of an outcome, newline-terminated.
std::string report_text(const Outcome& outcome);

// Sweeps channels 11..26 (or only `only_channel`) with scan requests and
// collects every response, in arrival order. Each hit records the live
// transaction context plus whether the responder's ack demand was satisfied
// by anyone on the air.
std::vector<DiscoveredDevice> active_scan(airsim::Simulator& sim,
                                          const std::string& attacker_node,
                                          const AttackerConfig& cfg,
                                          std::optional<uint8_t> only_channel = std::nullopt);

// Locks the target's identify effect on for `duration_s` seconds (0xFFFE
// maxes out the vendor cap).
Outcome blink_attack(airsim::Simulator& sim, const std::string& attacker_node,
                     const AttackerConfig& cfg, const DiscoveredDevice& target,
                     uint16_t duration_s);

// Kicks the target back to factory-new, dropping it off its network.
Outcome reset_attack(airsim::Simulator& sim, const std::string& attacker_node,
                     const AttackerConfig& cfg, const DiscoveredDevice& target);

// Moves the target to another channel with a forged network update (update
// id defaults to the scanned one plus one), stranding its controller.
Outcome dos_channel_change(airsim::Simulator& sim, const std::string& attacker_node,
                           const AttackerConfig& cfg, const DiscoveredDevice& target,
                           uint8_t new_channel,
                           std::optional<uint8_t> update_id_override = std::nullopt);

// Joins the target to a phantom network under a garbage key: it stays on its
// channel but nobody holds a key that authenticates to it anymore.
Outcome dos_join_phantom(airsim::Simulator& sim, const std::string& attacker_node,
                         const AttackerConfig& cfg, const DiscoveredDevice& target);

// Parameters of the rogue network a hijack plants on the target.
struct HijackParams {
    uint64_t extended_pan_id = 0xA77AC0DE00000001ull;
    uint16_t pan_id = 0xA77A;
    std::optional<uint8_t> channel;  // default: stay on the target's channel
    uint8_t network_update_id = 1;
    uint16_t short_addr = 0x0002;
    std::optional<crypto::Key128> network_key;  // default: fresh random key
};

// Takes the target over onto an attacker-controlled network. Requires the
// master key in `cfg` to wrap the planted network key.
Outcome hijack(airsim::Simulator& sim, const std::string& attacker_node,
               const AttackerConfig& cfg, const DiscoveredDevice& target,
               const HijackParams& params = {});

// Sends one secured cluster command on an arbitrary network. The caller
// supplies the key, addressing, and a frame counter the target has not seen.
Outcome inject_command(airsim::Simulator& sim, const std::string& attacker_node,
                       const crypto::Key128& network_key, uint16_t pan_id, uint8_t channel,
                       const wire::ClusterCommand& cmd, uint16_t dst_short, uint32_t counter,
                       uint16_t src_short = 0x00AA);

// Offline key extraction from a sniffer capture.
struct ExtractionResult {
    Verdict verdict = Verdict::IncompleteCapture;
    std::optional<crypto::Key128> network_key;
    uint32_t transaction_id = 0;
    uint64_t target_extended = 0;  // join destination, when known
};

// Recovers the network key from the first commissioning transaction whose
// scan request, scan response, and key-carrying join request all appear in
// the capture. With no complete transaction, reports IncompleteCapture, or
// MixedTransactions when several partial transactions interleave.
ExtractionResult extract_network_key(std::span<const airsim::CapturedFrame> capture,
                                     const crypto::Key128& master_key);

// Every complete commissioning transaction in the capture, in the order
// their join requests appear.
std::vector<ExtractionResult> extract_all_network_keys(
    std::span<const airsim::CapturedFrame> capture, const crypto::Key128& master_key);

}  // namespace touchlink::attacks

#endif
