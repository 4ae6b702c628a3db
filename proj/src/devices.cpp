#include "touchlink/devices.hpp"

#include "touchlink/radio.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <sstream>

namespace touchlink::devices {

namespace {

constexpr VendorProfile kProfiles[] = {
    // name, lamp, mac_ack, ack_us, scan policy, window_s,
    // max_identify_s, default_identify_s, aftermath, phys_reset, threshold_dbm
    {"hue-bulb", true, false, 0, ScanResponsePolicy::Always, 0,
     65534, 3, BlinkAftermath::RestorePrevious, false, -39.4},
    {"lightify-bulb", true, true, 864, ScanResponsePolicy::Always, 0,
     33173, 3, BlinkAftermath::DefaultState, true, -31.6},
    {"link-bulb", true, true, 864, ScanResponsePolicy::Always, 0,
     32791, 3, BlinkAftermath::DefaultState, true, -37.0},
    {"hue-bridge", false, false, 0, ScanResponsePolicy::ButtonWindow, 30,
     0, 0, BlinkAftermath::RestorePrevious, false, -40.0},
    {"lightify-gateway", false, false, 0, ScanResponsePolicy::Always, 0,
     0, 0, BlinkAftermath::RestorePrevious, false, -40.0},
    {"link-hub", false, false, 0, ScanResponsePolicy::Never, 0,
     0, 0, BlinkAftermath::RestorePrevious, false, -40.0},
};

std::string hexn(uint64_t v, int digits) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%0*" PRIx64, digits, v);
    return buf;
}

// Reply addressed back to the requester's extended address.
wire::MacHeader reply_mac(uint8_t& seq, uint64_t src_ext, uint16_t src_pan,
                          const wire::MacHeader& request, bool ack_requested) {
    wire::MacHeader mac;
    mac.sequence_number = seq;
    seq = wire::next_sequence(seq);
    mac.src_pan = src_pan;
    mac.dst_pan = request.src_pan;
    mac.src_extended = src_ext;
    mac.dst_extended = request.src_extended;
    mac.ack_requested = ack_requested;
    return mac;
}

// Follow-up commands must quote the transaction id of a live scan exchange.
std::optional<std::string> transaction_gate(std::optional<crypto::TransactionContext>& pending,
                                            uint32_t tid, uint64_t now_us) {
    if (!pending) return "no_transaction";
    if (pending->transaction_id != tid) return "stale_transaction";
    if (now_us >= pending->expires_at) {
        pending.reset();
        return "transaction_expired";
    }
    return std::nullopt;
}

bool scan_policy_allows(const VendorProfile& profile, std::optional<uint64_t> button_pressed_at,
                        uint64_t now_us) {
    switch (profile.scan_response_policy) {
        case ScanResponsePolicy::Always:
            return true;
        case ScanResponsePolicy::Never:
            return false;
        case ScanResponsePolicy::ButtonWindow:
            return button_pressed_at && now_us >= *button_pressed_at &&
                   now_us - *button_pressed_at <= profile.button_window_s * 1'000'000ull;
    }
    return false;
}

template <typename State>
uint16_t own_pan(const State& dev) {
    return dev.net ? dev.net->pan_id : wire::kBroadcastShortAddr;
}

template <typename State>
wire::ScanResponse make_scan_response(const State& dev, uint32_t tid, uint32_t rid,
                                      uint8_t sub_device_count) {
    wire::ScanResponse r;
    r.transaction_id = tid;
    r.response_id = rid;
    r.key_bitmask = wire::kKeyBitmaskMasterKey;
    if (dev.net) {
        r.network_update_id = dev.net->network_update_id;
        r.channel = dev.net->channel;
        r.pan_id = dev.net->pan_id;
        r.extended_pan_id = dev.net->extended_pan_id;
    } else {
        r.network_update_id = 0;
        r.channel = dev.listen_channel;
        r.pan_id = 0xFFFF;
        r.extended_pan_id = 0;
    }
    r.factory_new = dev.factory_new;
    r.sub_device_count = sub_device_count;
    return r;
}

void note_lamp(HandleResult& out, const wire::ClusterCommand& cmd) {
    std::ostringstream os;
    switch (cmd.op) {
        case wire::ClusterCommand::Op::Off:
            os << "lamp off";
            break;
        case wire::ClusterCommand::Op::On:
            os << "lamp on";
            break;
        case wire::ClusterCommand::Op::SetLevel:
            os << "lamp level=" << int(cmd.level);
            break;
        case wire::ClusterCommand::Op::SetColor:
            os << "lamp hue=" << cmd.hue;
            break;
    }
    out.notes.push_back(os.str());
}

void apply_identify_aftermath(EndDeviceState& dev, HandleResult& out) {
    if (dev.profile->blink_aftermath == BlinkAftermath::RestorePrevious) {
        dev.lamp = dev.pre_identify_lamp;
        out.notes.push_back("identify aftermath restore");
    } else {
        dev.lamp = default_lamp_state();
        out.notes.push_back("identify aftermath default");
    }
}

// Shared validation ladder for secured network frames. Returns the decoded
// cluster command on success; pushes the drop reason and returns nullopt
// otherwise. Frame counters advance on MIC success even if the payload is
// later refused, mirroring the replay protection living below the
// application layer.
template <typename State>
std::optional<wire::ClusterCommand> check_secured(State& dev, const wire::SecuredNwkFrame& f,
                                                  HandleResult& out) {
    if (!dev.net) {
        out.drops.push_back("not_networked");
        return std::nullopt;
    }
    if (f.dst_short != dev.net->short_addr && f.dst_short != wire::kBroadcastShortAddr) {
        out.drops.push_back("wrong_destination");
        return std::nullopt;
    }
    if (f.pan_id != dev.net->pan_id) {
        out.drops.push_back("wrong_pan");
        return std::nullopt;
    }
    auto it = dev.rx_frame_counters.find(f.src_short);
    if (it != dev.rx_frame_counters.end() && f.frame_counter <= it->second) {
        out.drops.push_back("replayed_counter");
        return std::nullopt;
    }
    auto plain = crypto::ccm_decrypt(dev.net->network_key, {f.src_short, f.frame_counter},
                                     f.ciphertext, f.mic);
    if (!plain) {
        out.drops.push_back("integrity_failure");
        return std::nullopt;
    }
    dev.rx_frame_counters[f.src_short] = f.frame_counter;
    auto cmd = wire::decode_cluster_command(*plain);
    if (!cmd) {
        out.drops.push_back("malformed_payload");
        return std::nullopt;
    }
    return cmd;
}

void wipe_to_factory_new(EndDeviceState& dev) {
    dev.factory_new = true;
    dev.net.reset();
    dev.lamp = default_lamp_state();
    dev.listen_channel = kDefaultListenChannel;
    dev.pending.reset();
    dev.identify_until.reset();
    dev.awaiting_ack_seq.reset();
    dev.rx_frame_counters.clear();
}

void append_net(std::ostringstream& os, const std::optional<NetworkParams>& net) {
    if (net) {
        os << " pan=0x" << hexn(net->pan_id, 4) << " epid=0x" << hexn(net->extended_pan_id, 16)
           << " short=0x" << hexn(net->short_addr, 4) << " update=" << int(net->network_update_id)
           << " key=" << net->network_key.to_hex();
    } else {
        os << " pan=- epid=- short=- update=- key=-";
    }
}

}  // namespace

const VendorProfile* find_profile(std::string_view name) {
    for (const auto& p : kProfiles)
        if (p.name == name) return &p;
    return nullptr;
}

const VendorProfile& hue_bulb() { return kProfiles[0]; }
const VendorProfile& lightify_bulb() { return kProfiles[1]; }
const VendorProfile& link_bulb() { return kProfiles[2]; }
const VendorProfile& hue_bridge() { return kProfiles[3]; }
const VendorProfile& lightify_gateway() { return kProfiles[4]; }
const VendorProfile& link_hub() { return kProfiles[5]; }

HandleResult handle_frame(EndDeviceState& dev, const wire::Frame& frame, const RxContext& ctx) {
    HandleResult out;

    if (const auto* ack = std::get_if<wire::AckFrame>(&frame)) {
        // Unmatched acknowledgments are routine MAC noise: no log entry.
        if (dev.awaiting_ack_seq && *dev.awaiting_ack_seq == ack->sequence_number &&
            ctx.now_us <= dev.awaiting_ack_deadline) {
            dev.awaiting_ack_seq.reset();
        }
        return out;
    }

    if (const auto* sec = std::get_if<wire::SecuredNwkFrame>(&frame)) {
        auto cmd = check_secured(dev, *sec, out);
        if (!cmd) return out;
        if (dev.identify_active(ctx.now_us)) {
            out.drops.push_back("identify_active");
            return out;
        }
        switch (cmd->op) {
            case wire::ClusterCommand::Op::Off:
                dev.lamp.on = false;
                break;
            case wire::ClusterCommand::Op::On:
                dev.lamp.on = true;
                break;
            case wire::ClusterCommand::Op::SetLevel:
                dev.lamp.brightness = cmd->level;
                break;
            case wire::ClusterCommand::Op::SetColor:
                dev.lamp.hue = cmd->hue;
                break;
        }
        note_lamp(out, *cmd);
        return out;
    }

    const auto& tl = std::get<wire::TouchlinkFrame>(frame);

    // While a scan response awaits its MAC ack the radio turnaround is
    // blocked; everything else in the transaction window is refused.
    if (dev.awaiting_ack_seq) {
        out.drops.push_back("awaiting_ack");
        return out;
    }

    if (const auto* scan = std::get_if<wire::ScanRequest>(&tl.command)) {
        if (ctx.rssi_dbm < dev.profile->touchlink_rssi_threshold_dbm) {
            out.drops.push_back("below_scan_threshold");
            return out;
        }
        if (!scan_policy_allows(*dev.profile, std::nullopt, ctx.now_us)) {
            out.drops.push_back("scan_policy_refused");
            return out;
        }
        if (!tl.mac.src_extended) {
            out.drops.push_back("no_source_extended");
            return out;
        }
        uint32_t rid = ctx.rng->nonzero_u32();
        dev.pending = crypto::TransactionContext{scan->transaction_id, rid,
                                                 ctx.now_us + kTransactionLifetimeUs};
        bool want_ack = dev.profile->requires_mac_ack;
        wire::TouchlinkFrame resp{reply_mac(dev.seq, dev.extended_addr, own_pan(dev), tl.mac, want_ack),
                                  make_scan_response(dev, scan->transaction_id, rid, 1)};
        if (want_ack) {
            auto enc = wire::encode_frame(wire::Frame{resp});
            dev.awaiting_ack_seq = resp.mac.sequence_number;
            dev.awaiting_ack_deadline = ctx.now_us + radio::delivery_delay_us(enc.bytes.size()) +
                                        dev.profile->ack_deadline_us;
            // Fire strictly after the deadline so an ack landing exactly on
            // it still wins.
            out.timer_at = dev.awaiting_ack_deadline + 1;
        }
        out.tx.push_back({wire::Frame{resp}, 0});
        return out;
    }

    if (const auto* info = std::get_if<wire::DeviceInfoRequest>(&tl.command)) {
        if (auto reason = transaction_gate(dev.pending, info->transaction_id, ctx.now_us)) {
            out.drops.push_back(*reason);
            return out;
        }
        if (!tl.mac.src_extended) {
            out.drops.push_back("no_source_extended");
            return out;
        }
        wire::DeviceInfoResponse resp{info->transaction_id,
                                      {wire::SubDeviceRecord{1, 0xC05E, 0x0200, 2}}};
        out.tx.push_back(
            {wire::Frame{wire::TouchlinkFrame{
                 reply_mac(dev.seq, dev.extended_addr, own_pan(dev), tl.mac, false), resp}},
             0});
        return out;
    }

    if (const auto* ident = std::get_if<wire::IdentifyRequest>(&tl.command)) {
        if (auto reason = transaction_gate(dev.pending, ident->transaction_id, ctx.now_us)) {
            out.drops.push_back(*reason);
            return out;
        }
        if (ident->duration == 0) {
            if (dev.identify_until) {
                dev.identify_until.reset();
                out.notes.push_back("identify stop");
                apply_identify_aftermath(dev, out);
            }
            return out;
        }
        uint32_t seconds = ident->duration == 0xFFFF
                               ? dev.profile->default_identify_s
                               : std::min<uint32_t>(ident->duration, dev.profile->max_identify_s);
        if (!dev.identify_active(ctx.now_us)) dev.pre_identify_lamp = dev.lamp;
        dev.identify_until = ctx.now_us + seconds * 1'000'000ull;
        out.timer_at = dev.identify_until;
        out.notes.push_back("identify start duration=" + std::to_string(seconds) + "s");
        return out;
    }

    if (const auto* reset = std::get_if<wire::ResetToFactoryNewRequest>(&tl.command)) {
        if (auto reason = transaction_gate(dev.pending, reset->transaction_id, ctx.now_us)) {
            out.drops.push_back(*reason);
            return out;
        }
        wipe_to_factory_new(dev);
        out.notes.push_back("reset to factory new");
        return out;
    }

    if (const auto* upd = std::get_if<wire::NetworkUpdateRequest>(&tl.command)) {
        if (auto reason = transaction_gate(dev.pending, upd->transaction_id, ctx.now_us)) {
            out.drops.push_back(*reason);
            return out;
        }
        if (!dev.net) {
            out.drops.push_back("not_networked");
            return out;
        }
        if (upd->extended_pan_id != dev.net->extended_pan_id) {
            out.drops.push_back("wrong_pan");
            return out;
        }
        if (upd->network_update_id <= dev.net->network_update_id) {
            out.drops.push_back("stale_update");
            return out;
        }
        dev.net->channel = upd->channel;
        dev.net->pan_id = upd->pan_id;
        dev.net->short_addr = upd->short_addr;
        dev.net->network_update_id = upd->network_update_id;
        std::ostringstream os;
        os << "network update adopted channel=" << int(upd->channel) << " pan=0x"
           << hexn(upd->pan_id, 4) << " update=" << int(upd->network_update_id);
        out.notes.push_back(os.str());
        return out;
    }

    if (const auto* join = std::get_if<wire::NetworkJoinEndDeviceRequest>(&tl.command)) {
        if (auto reason = transaction_gate(dev.pending, join->transaction_id, ctx.now_us)) {
            out.drops.push_back(*reason);
            return out;
        }
        if (!tl.mac.src_extended) {
            out.drops.push_back("no_source_extended");
            return out;
        }
        auto respond = [&](uint8_t status) {
            wire::NetworkJoinEndDeviceResponse resp{join->transaction_id, status};
            out.tx.push_back(
                {wire::Frame{wire::TouchlinkFrame{
                     reply_mac(dev.seq, dev.extended_addr, own_pan(dev), tl.mac, false), resp}},
                 0});
        };
        if (join->key_index != wire::kMasterKeyIndex) {
            out.notes.push_back("join refused key_index=" + std::to_string(join->key_index));
            respond(1);
            return out;
        }
        auto key = crypto::unwrap_network_key(dev.master_key, *dev.pending,
                                              join->encrypted_network_key);
        if (!key) {
            out.drops.push_back("malformed_payload");
            return out;
        }
        // Respond before the state switch takes effect on air: the emission
        // still leaves on the channel the request arrived on.
        respond(0);
        dev.factory_new = false;
        dev.net = NetworkParams{join->extended_pan_id, join->pan_id,     join->channel,
                                *key,                  join->network_update_id,
                                join->assigned_short_addr};
        dev.rx_frame_counters.clear();
        dev.pending.reset();
        dev.identify_until.reset();
        std::ostringstream os;
        os << "joined network pan=0x" << hexn(join->pan_id, 4) << " channel=" << int(join->channel)
           << " short=0x" << hexn(join->assigned_short_addr, 4);
        out.notes.push_back(os.str());
        return out;
    }

    // Responses and router-side commands have no meaning for an end device.
    out.drops.push_back("unsupported_command");
    return out;
}

HandleResult handle_frame(InitiatorState& dev, const wire::Frame& frame, const RxContext& ctx) {
    HandleResult out;

    if (std::get_if<wire::AckFrame>(&frame)) {
        return out;  // initiators never request acks
    }

    if (const auto* sec = std::get_if<wire::SecuredNwkFrame>(&frame)) {
        auto cmd = check_secured(dev, *sec, out);
        if (cmd) out.drops.push_back("unsupported_command");
        return out;
    }

    const auto& tl = std::get<wire::TouchlinkFrame>(frame);

    if (const auto* scan = std::get_if<wire::ScanRequest>(&tl.command)) {
        if (ctx.rssi_dbm < dev.profile->touchlink_rssi_threshold_dbm) {
            out.drops.push_back("below_scan_threshold");
            return out;
        }
        if (!scan_policy_allows(*dev.profile, dev.button_pressed_at, ctx.now_us)) {
            out.drops.push_back("scan_policy_refused");
            return out;
        }
        if (!tl.mac.src_extended) {
            out.drops.push_back("no_source_extended");
            return out;
        }
        uint32_t rid = ctx.rng->nonzero_u32();
        dev.pending = crypto::TransactionContext{scan->transaction_id, rid,
                                                 ctx.now_us + kTransactionLifetimeUs};
        out.tx.push_back(
            {wire::Frame{wire::TouchlinkFrame{
                 reply_mac(dev.seq, dev.extended_addr, own_pan(dev), tl.mac, false),
                 make_scan_response(dev, scan->transaction_id, rid, 0)}},
             0});
        return out;
    }

    if (const auto* info = std::get_if<wire::DeviceInfoRequest>(&tl.command)) {
        if (auto reason = transaction_gate(dev.pending, info->transaction_id, ctx.now_us)) {
            out.drops.push_back(*reason);
            return out;
        }
        if (!tl.mac.src_extended) {
            out.drops.push_back("no_source_extended");
            return out;
        }
        out.tx.push_back(
            {wire::Frame{wire::TouchlinkFrame{
                 reply_mac(dev.seq, dev.extended_addr, own_pan(dev), tl.mac, false),
                 wire::DeviceInfoResponse{info->transaction_id, {}}}},
             0});
        return out;
    }

    if (const auto* reset = std::get_if<wire::ResetToFactoryNewRequest>(&tl.command)) {
        if (auto reason = transaction_gate(dev.pending, reset->transaction_id, ctx.now_us)) {
            out.drops.push_back(*reason);
            return out;
        }
        dev.factory_new = true;
        dev.net.reset();
        dev.pending.reset();
        dev.button_pressed_at.reset();
        dev.rx_frame_counters.clear();
        out.notes.push_back("reset to factory new");
        return out;
    }

    // Responses addressed to this initiator are consumed by whatever
    // procedure is driving the exchange, straight from the receive queue;
    // the state machine itself stays quiet about them.
    if (std::holds_alternative<wire::ScanResponse>(tl.command) ||
        std::holds_alternative<wire::DeviceInfoResponse>(tl.command) ||
        std::holds_alternative<wire::NetworkJoinEndDeviceResponse>(tl.command)) {
        return out;
    }

    out.drops.push_back("unsupported_command");
    return out;
}

HandleResult on_timer(EndDeviceState& dev, uint64_t now_us) {
    HandleResult out;
    if (dev.awaiting_ack_seq && now_us > dev.awaiting_ack_deadline) {
        dev.awaiting_ack_seq.reset();
        dev.pending.reset();
        out.notes.push_back("ack_timeout");
    }
    if (dev.identify_until && now_us >= *dev.identify_until) {
        dev.identify_until.reset();
        out.notes.push_back("identify stop");
        apply_identify_aftermath(dev, out);
    }
    return out;
}

HandleResult on_timer(InitiatorState&, uint64_t) { return {}; }

void press_button(InitiatorState& dev, uint64_t now_us) {
    dev.button_pressed_at =
        dev.button_pressed_at ? std::max(*dev.button_pressed_at, now_us) : now_us;
}

bool physical_reset(EndDeviceState& dev) {
    if (!dev.profile->supports_physical_reset) return false;
    wipe_to_factory_new(dev);
    return true;
}

void rejoin_via_classical(EndDeviceState& dev, const NetworkParams& net) {
    dev.factory_new = false;
    dev.net = net;
    dev.pending.reset();
    dev.identify_until.reset();
    dev.awaiting_ack_seq.reset();
    dev.rx_frame_counters.clear();
}

std::string snapshot_line(std::string_view node_name, const EndDeviceState& dev) {
    std::ostringstream os;
    os << "node=" << node_name << " kind=bulb profile=" << dev.profile->name << " ext=0x"
       << hexn(dev.extended_addr, 16) << " factory_new=" << (dev.factory_new ? 1 : 0)
       << " channel=" << int(dev.current_channel());
    append_net(os, dev.net);
    os << " lamp=" << (dev.lamp.on ? "on" : "off") << "/" << int(dev.lamp.brightness) << "/"
       << dev.lamp.hue << " identify=" << (dev.identify_until ? 1 : 0);
    return os.str();
}

std::string snapshot_line(std::string_view node_name, const InitiatorState& dev) {
    std::ostringstream os;
    os << "node=" << node_name << " kind=initiator profile=" << dev.profile->name << " ext=0x"
       << hexn(dev.extended_addr, 16) << " factory_new=" << (dev.factory_new ? 1 : 0)
       << " channel=" << int(dev.current_channel());
    append_net(os, dev.net);
    os << " button=";
    if (dev.button_pressed_at)
        os << *dev.button_pressed_at;
    else
        os << "-";
    return os.str();
}

}  // namespace touchlink::devices
