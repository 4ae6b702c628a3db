#include "touchlink/procedures.hpp"

#include "touchlink/crypto.hpp"

#include <cinttypes>
#include <cstdio>
#include <utility>

namespace touchlink::procedures {

namespace {

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
    return buf;
}

std::string hex16(uint16_t v) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%04x", v);
    return buf;
}

wire::MacHeader scan_mac(uint64_t src_ext) {
    wire::MacHeader m;
    m.src_pan = 0xFFFF;
    m.dst_pan = 0xFFFF;
    m.src_extended = src_ext;
    m.dst_short = wire::kBroadcastShortAddr;
    return m;
}

wire::MacHeader unicast_mac(uint64_t src_ext, uint64_t dst_ext) {
    wire::MacHeader m;
    m.src_pan = 0xFFFF;
    m.dst_pan = 0xFFFF;
    m.src_extended = src_ext;
    m.dst_extended = dst_ext;
    return m;
}

// First command of type T with this transaction id arriving after `mark`,
// restricted to `from_ext` when given. Returns the sender's extended
// address and whether the carrying frame asked for a MAC ack.
template <typename T>
struct Found {
    T command;
    uint64_t from_ext = 0;
    bool ack_requested = false;
};

template <typename T>
std::optional<Found<T>> find_reply(const airsim::Node& node, size_t mark, uint32_t tid,
                                   std::optional<uint64_t> from_ext) {
    for (size_t i = mark; i < node.inbox.size(); ++i) {
        const auto* tl = std::get_if<wire::TouchlinkFrame>(&node.inbox[i].frame);
        if (!tl) continue;
        const auto* cmd = std::get_if<T>(&tl->command);
        if (!cmd || cmd->transaction_id != tid) continue;
        if (!tl->mac.src_extended) continue;
        if (from_ext && *tl->mac.src_extended != *from_ext) continue;
        return Found<T>{*cmd, *tl->mac.src_extended, tl->mac.ack_requested};
    }
    return std::nullopt;
}

struct OverrideGuard {
    airsim::Simulator& sim;
    std::string node;
    ~OverrideGuard() {
        if (auto* n = sim.find(node)) n->channel_override.reset();
    }
};

}  // namespace

const char* join_result_name(JoinResult r) {
    switch (r) {
        case JoinResult::Success: return "success";
        case JoinResult::NoDeviceFound: return "no_device_found";
        case JoinResult::NoResponse: return "no_response";
        case JoinResult::AckTimeout: return "ack_timeout";
        case JoinResult::JoinRefused: return "join_refused";
        case JoinResult::NotJoined: return "not_joined";
    }
    return "?";
}

JoinReport run_touchlink_join(airsim::Simulator& sim, const std::string& initiator_node,
                              std::optional<uint64_t> target_ext, uint8_t key_index) {
    JoinReport report;
    airsim::Node* node = sim.find(initiator_node);
    if (!node || !node->initiator || !node->initiator->net) {
        report.result = JoinResult::NotJoined;
        return report;
    }
    auto& ini = *node->initiator;
    const uint64_t src_ext = ini.extended_addr;
    OverrideGuard guard{sim, initiator_node};

    // Phase 1: sweep the primary channels until something answers.
    uint32_t tid = 0;
    std::optional<Found<wire::ScanResponse>> hit;
    uint8_t hit_channel = 0;
    for (uint8_t channel : kPrimaryChannels) {
        tid = sim.rng().nonzero_u32();
        node->channel_override = channel;
        size_t mark = node->inbox.size();
        sim.transmit(initiator_node, wire::Frame{wire::TouchlinkFrame{scan_mac(src_ext),
                                                                      wire::ScanRequest{tid}}});
        sim.run_for(kScanDwellUs);
        hit = find_reply<wire::ScanResponse>(*node, mark, tid, target_ext);
        if (hit) {
            hit_channel = channel;
            break;
        }
        report.exchange.push_back("scan channel " + std::to_string(channel) + ": silent");
    }
    if (!hit) {
        report.result = JoinResult::NoDeviceFound;
        return report;
    }
    report.target_extended = hit->from_ext;
    report.transaction_id = tid;
    report.exchange.push_back("scan channel " + std::to_string(hit_channel) + ": response from " +
                              hex64(hit->from_ext));
    const bool target_wants_ack = hit->ack_requested;
    auto fail_silent = [&](JoinReport& r) {
        r.result = target_wants_ack ? JoinResult::AckTimeout : JoinResult::NoResponse;
    };

    // Phase 2: device info.
    size_t mark = node->inbox.size();
    sim.transmit(initiator_node,
                 wire::Frame{wire::TouchlinkFrame{unicast_mac(src_ext, hit->from_ext),
                                                  wire::DeviceInfoRequest{tid}}});
    sim.run_for(kResponseTimeoutUs);
    auto info = find_reply<wire::DeviceInfoResponse>(*node, mark, tid, hit->from_ext);
    if (!info) {
        fail_silent(report);
        report.exchange.push_back("device info: no reply");
        return report;
    }
    report.exchange.push_back(
        "device info: " + std::to_string(info->command.sub_device_records.size()) +
        " sub-device(s)");

    // Phase 3: blink the target so the user can confirm it, vendor-default
    // duration.
    sim.transmit(initiator_node,
                 wire::Frame{wire::TouchlinkFrame{unicast_mac(src_ext, hit->from_ext),
                                                  wire::IdentifyRequest{tid, 0xFFFF}}});
    sim.run_for(20'000);

    // Phase 4: hand over the (wrapped) network key and network parameters.
    const auto& net = *ini.net;
    crypto::TransactionContext tctx{tid, hit->command.response_id, 0};
    wire::NetworkJoinEndDeviceRequest join;
    join.transaction_id = tid;
    join.extended_pan_id = net.extended_pan_id;
    join.key_index = key_index;
    join.encrypted_network_key = *crypto::wrap_network_key(ini.master_key, tctx, net.network_key);
    join.channel = net.channel;
    join.pan_id = net.pan_id;
    join.network_update_id = net.network_update_id;
    join.assigned_short_addr = ini.next_assigned_short++;
    report.assigned_short = join.assigned_short_addr;

    mark = node->inbox.size();
    sim.transmit(initiator_node,
                 wire::Frame{wire::TouchlinkFrame{unicast_mac(src_ext, hit->from_ext), join}});
    sim.run_for(kResponseTimeoutUs);
    auto joined = find_reply<wire::NetworkJoinEndDeviceResponse>(*node, mark, tid, hit->from_ext);
    if (!joined) {
        fail_silent(report);
        report.exchange.push_back("join: no reply");
        return report;
    }
    if (joined->command.status != 0) {
        report.result = JoinResult::JoinRefused;
        report.exchange.push_back("join: refused status " +
                                  std::to_string(joined->command.status));
        return report;
    }
    report.result = JoinResult::Success;
    report.exchange.push_back("join: accepted, short " + hex16(join.assigned_short_addr));
    return report;
}

RecoveryReport bridge_touchlink_recovery(airsim::Simulator& sim,
                                         const std::string& initiator_node, uint64_t target_ext) {
    RecoveryReport report;
    airsim::Node* node = sim.find(initiator_node);
    if (!node || !node->initiator || !node->initiator->net) return report;
    auto& ini = *node->initiator;
    OverrideGuard guard{sim, initiator_node};

    for (uint8_t channel = wire::kMinChannel; channel <= wire::kMaxChannel; ++channel) {
        uint32_t tid = sim.rng().nonzero_u32();
        node->channel_override = channel;
        size_t mark = node->inbox.size();
        sim.transmit(initiator_node,
                     wire::Frame{wire::TouchlinkFrame{scan_mac(ini.extended_addr),
                                                      wire::ScanRequest{tid}}});
        sim.run_for(kScanDwellUs);
        auto hit = find_reply<wire::ScanResponse>(*node, mark, tid, target_ext);
        if (!hit) continue;
        report.found = true;
        report.channel = hit->command.channel;
        report.update_id = hit->command.network_update_id;
        if (hit->command.extended_pan_id == ini.net->extended_pan_id &&
            hit->command.network_update_id > ini.net->network_update_id) {
            // The quirk: the bridge follows the lamp instead of pulling the
            // lamp back.
            ini.net->channel = hit->command.channel;
            ini.net->network_update_id = hit->command.network_update_id;
            report.switched = true;
        }
        return report;
    }
    return report;
}

bool send_user_command(airsim::Simulator& sim, const std::string& initiator_node,
                       const wire::ClusterCommand& cmd, uint16_t dst_short) {
    airsim::Node* node = sim.find(initiator_node);
    if (!node || !node->initiator || !node->initiator->net) return false;
    auto& ini = *node->initiator;
    const auto& net = *ini.net;

    uint32_t counter = ++ini.tx_frame_counter;
    auto sealed = crypto::ccm_encrypt(net.network_key, {net.short_addr, counter},
                                      wire::encode_cluster_command(cmd));
    wire::SecuredNwkFrame frame{net.short_addr, dst_short,      net.pan_id, counter,
                                1,              sealed.ciphertext, sealed.mic};
    sim.transmit(initiator_node, wire::Frame{frame});
    sim.run_for(10'000);  // let the broadcast land
    return true;
}

}  // namespace touchlink::procedures
