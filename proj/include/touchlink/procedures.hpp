#ifndef TOUCHLINK_PROCEDURES_HPP
#define TOUCHLINK_PROCEDURES_HPP

// Initiator-side commissioning procedures, driven from outside the device
// state machines: the full touchlink join exchange, the recovery sweep a
// bridge runs when a lamp goes missing, and plain secured lamp commands.

#include "touchlink/airsim.hpp"
#include "touchlink/wire.hpp"

#include <optional>
#include <string>
#include <vector>

namespace touchlink::procedures {

// Channels an initiator sweeps during normal commissioning.
inline constexpr uint8_t kPrimaryChannels[] = {11, 15, 20, 25};

// How long the initiator lingers per channel waiting for scan responses.
inline constexpr uint64_t kScanDwellUs = 250'000;

// How long the initiator waits for a unicast reply before giving up.
inline constexpr uint64_t kResponseTimeoutUs = 100'000;

enum class JoinResult : uint8_t {
    Success,
    NoDeviceFound,  // no scan response on any primary channel
    NoResponse,     // target went quiet mid-exchange
    AckTimeout,     // target demanded a MAC ack that never came
    JoinRefused,    // target answered the join with a non-zero status
    NotJoined,      // the initiator itself has no network to extend
};

const char* join_result_name(JoinResult r);

struct JoinReport {
    JoinResult result = JoinResult::NoDeviceFound;
    uint64_t target_extended = 0;
    uint16_t assigned_short = 0;
    uint32_t transaction_id = 0;
    std::vector<std::string> exchange;  // step-by-step trace for reports
};

// Runs one commissioning exchange from `initiator_node`: sweep the primary
// channels, take the first scan response (restricted to `target_ext` when
// given), read device info, blink the target, and deliver the wrapped
// network key. `key_index` is a hook for exercising the refusal path; real
// exchanges always offer the master-key slot.
JoinReport run_touchlink_join(airsim::Simulator& sim, const std::string& initiator_node,
                              std::optional<uint64_t> target_ext = std::nullopt,
                              uint8_t key_index = wire::kMasterKeyIndex);

struct RecoveryReport {
    bool found = false;     // target answered somewhere on the band
    bool switched = false;  // initiator adopted the target's channel
    uint8_t channel = 0;
    uint8_t update_id = 0;
};

// The vendor quirk behind channel-change recovery: the bridge sweeps all 16
// channels for the lost device and, if the device reports the same extended
// PAN id with a strictly higher update id, follows it onto its new channel.
RecoveryReport bridge_touchlink_recovery(airsim::Simulator& sim,
                                         const std::string& initiator_node, uint64_t target_ext);

// Seals and broadcasts (by default) one lamp command on the initiator's
// network. Returns false when the initiator has no network.
bool send_user_command(airsim::Simulator& sim, const std::string& initiator_node,
                       const wire::ClusterCommand& cmd,
                       uint16_t dst_short = wire::kBroadcastShortAddr);

}  // namespace touchlink::procedures

#endif
