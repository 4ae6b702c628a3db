#include "touchlink/airsim.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>

namespace touchlink::airsim {

namespace {

double distance(const Node& a, const Node& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

std::string stamp(uint64_t t_us) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%012" PRIu64, t_us);
    return buf;
}

std::string fmt_rssi(double rssi_dbm) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%.1f", rssi_dbm);
    return buf;
}

}  // namespace

uint8_t Node::listen_channel() const {
    if (channel_override) return *channel_override;
    if (end_device) return end_device->current_channel();
    if (initiator) return initiator->current_channel();
    return attacker_channel;
}

uint64_t Node::extended_addr() const {
    if (end_device) return end_device->extended_addr;
    if (initiator) return initiator->extended_addr;
    return attacker_ext;
}

std::string node_snapshot_line(const Node& node) {
    if (node.end_device) return devices::snapshot_line(node.name, *node.end_device);
    if (node.initiator) return devices::snapshot_line(node.name, *node.initiator);
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016" PRIx64, node.attacker_ext);
    return "node=" + node.name + " kind=attacker ext=" + buf;
}

Simulator::Simulator(uint64_t seed, radio::PathLossModel model) : model_(model), rng_(seed) {}

Node& Simulator::add_node(Node node) {
    nodes_.push_back(std::move(node));
    return nodes_.back();
}

Node& Simulator::add_end_device(std::string name, devices::EndDeviceState state, double x,
                                double y, double tx_power_dbm) {
    Node n;
    n.name = std::move(name);
    n.kind = NodeKind::EndDevice;
    n.x = x;
    n.y = y;
    n.tx_power_dbm = tx_power_dbm;
    n.end_device = std::move(state);
    return add_node(std::move(n));
}

Node& Simulator::add_initiator(std::string name, devices::InitiatorState state, double x, double y,
                               double tx_power_dbm) {
    Node n;
    n.name = std::move(name);
    n.kind = NodeKind::Initiator;
    n.x = x;
    n.y = y;
    n.tx_power_dbm = tx_power_dbm;
    n.initiator = std::move(state);
    return add_node(std::move(n));
}

Node& Simulator::add_attacker(std::string name, uint64_t extended_addr, double x, double y,
                              double tx_power_dbm) {
    Node n;
    n.name = std::move(name);
    n.kind = NodeKind::Attacker;
    n.x = x;
    n.y = y;
    n.tx_power_dbm = tx_power_dbm;
    n.attacker_ext = extended_addr;
    return add_node(std::move(n));
}

std::optional<size_t> Simulator::index_of(std::string_view name) const {
    for (size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].name == name) return i;
    return std::nullopt;
}

Node* Simulator::find(std::string_view name) {
    auto i = index_of(name);
    return i ? &nodes_[*i] : nullptr;
}

const Node* Simulator::find(std::string_view name) const {
    auto i = index_of(name);
    return i ? &nodes_[*i] : nullptr;
}

Node* Simulator::find_by_extended(uint64_t ext) {
    for (auto& n : nodes_)
        if (n.extended_addr() == ext) return &n;
    return nullptr;
}

void Simulator::push_event(uint64_t at, Event::Kind kind, size_t node, double rssi,
                           std::shared_ptr<const Transmission> tx) {
    events_.push(Event{at, next_seq_++, kind, node, rssi, std::move(tx)});
}

std::optional<wire::WireError> Simulator::transmit(std::string_view from, const wire::Frame& frame,
                                                   std::optional<uint8_t> channel) {
    return transmit_at(now_, from, frame, channel);
}

std::optional<wire::WireError> Simulator::transmit_at(uint64_t at_us, std::string_view from,
                                                      const wire::Frame& frame,
                                                      std::optional<uint8_t> channel) {
    auto from_idx = index_of(from);
    if (!from_idx) return wire::WireError::InvariantViolation;
    auto encoded = wire::encode_frame(frame);
    if (!encoded.ok()) return encoded.error;
    auto tx = std::make_shared<const Transmission>(
        Transmission{*from_idx, channel.value_or(nodes_[*from_idx].listen_channel()),
                     std::move(encoded.bytes), frame});
    if (at_us <= now_) {
        start_transmission(tx);
    } else {
        push_event(at_us, Event::Kind::Transmit, *from_idx, 0.0, std::move(tx));
    }
    return std::nullopt;
}

void Simulator::inject_raw(std::string_view from, std::vector<uint8_t> bytes,
                           std::optional<uint8_t> channel) {
    auto from_idx = index_of(from);
    if (!from_idx) return;
    std::optional<wire::Frame> frame;
    if (auto decoded = wire::decode_frame(bytes); decoded.ok()) frame = *decoded.frame;
    start_transmission(std::make_shared<const Transmission>(
        Transmission{*from_idx, channel.value_or(nodes_[*from_idx].listen_channel()),
                     std::move(bytes), std::move(frame)}));
}

void Simulator::start_transmission(const std::shared_ptr<const Transmission>& tx) {
    const Node& sender = nodes_[tx->from];
    log_line(stamp(now_) + " TX node=" + sender.name + " ch=" + std::to_string(tx->channel) +
             " len=" + std::to_string(tx->bytes.size()) + " frame=" +
             (tx->frame ? wire::frame_name(*tx->frame) : std::string("raw")));
    uint64_t arrive = now_ + radio::delivery_delay_us(tx->bytes.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (i == tx->from) continue;
        double rssi = model_.rssi(sender.tx_power_dbm, distance(sender, nodes_[i]));
        if (rssi < model_.noise_floor_dbm) continue;
        push_event(arrive, Event::Kind::Delivery, i, rssi, tx);
    }
}

bool Simulator::mac_filtered(const Node& rx, const wire::Frame& frame) const {
    const auto* tl = std::get_if<wire::TouchlinkFrame>(&frame);
    if (!tl) return false;  // secured/ack frames are filtered by the device model
    if (tl->mac.dst_extended && *tl->mac.dst_extended != rx.extended_addr()) return true;
    if (tl->mac.dst_short && *tl->mac.dst_short != wire::kBroadcastShortAddr) {
        std::optional<uint16_t> own;
        if (rx.end_device && rx.end_device->net) own = rx.end_device->net->short_addr;
        if (rx.initiator && rx.initiator->net) own = rx.initiator->net->short_addr;
        if (own != *tl->mac.dst_short) return true;
    }
    return false;
}

void Simulator::deliver(const Event& e) {
    Node& rx = nodes_[e.node];
    const Transmission& t = *e.tx;
    if (rx.listen_channel() != t.channel) return;  // tuned elsewhere: inaudible

    if (!t.frame) {
        if (rx.is_device()) {
            log_line(stamp(now_) + " DROP node=" + rx.name + " frame=raw reason=malformed_frame");
            ++rx.drop_counts["malformed_frame"];
        }
        return;
    }
    if (rx.is_device() && mac_filtered(rx, *t.frame)) return;

    const std::string& from_name = nodes_[t.from].name;
    std::string name = wire::frame_name(*t.frame);
    log_line(stamp(now_) + " RX node=" + rx.name + " ch=" + std::to_string(t.channel) +
             " rssi=" + fmt_rssi(e.rssi_dbm) + " from=" + from_name + " frame=" + name);
    rx.inbox.push_back(CapturedFrame{now_, t.channel, e.rssi_dbm, from_name, *t.frame, t.bytes});
    if (!rx.is_device()) return;

    // MAC auto-ack: commissioned devices acknowledge unicast frames that ask
    // for it. The requester's deadline clock starts when its own frame
    // finished arriving, which is exactly now.
    bool factory_new = rx.end_device ? rx.end_device->factory_new : rx.initiator->factory_new;
    if (const auto* tl = std::get_if<wire::TouchlinkFrame>(&*t.frame);
        tl && tl->mac.ack_requested && rx.auto_ack_enabled && !factory_new &&
        tl->mac.dst_extended == rx.extended_addr()) {
        transmit(rx.name, wire::Frame{wire::AckFrame{tl->mac.sequence_number}}, t.channel);
    }

    devices::RxContext ctx{now_, t.channel, e.rssi_dbm, &rng_};
    auto result = rx.end_device ? devices::handle_frame(*rx.end_device, *t.frame, ctx)
                                : devices::handle_frame(*rx.initiator, *t.frame, ctx);
    apply_result(std::move(result), e.node, t.channel, name);
}

void Simulator::apply_result(devices::HandleResult&& result, size_t node, uint8_t channel,
                             const std::string& frame_label) {
    Node& n = nodes_[node];
    for (const auto& reason : result.drops) {
        log_line(stamp(now_) + " DROP node=" + n.name + " frame=" + frame_label +
                 " reason=" + reason);
        ++n.drop_counts[reason];
    }
    for (const auto& note : result.notes)
        log_line(stamp(now_) + " NOTE node=" + n.name + " " + note);
    for (auto& em : result.tx)
        transmit_at(now_ + em.delay_us, n.name, em.frame, channel);
    if (result.timer_at)
        push_event(*result.timer_at, Event::Kind::Timer, node, 0.0, nullptr);
}

void Simulator::fire_timer(const Event& e) {
    Node& n = nodes_[e.node];
    if (!n.is_device()) return;
    auto result = n.end_device ? devices::on_timer(*n.end_device, now_)
                               : devices::on_timer(*n.initiator, now_);
    apply_result(std::move(result), e.node, n.listen_channel(), "timer");
}

void Simulator::run_until(uint64_t t_us) {
    while (!events_.empty() && events_.top().at <= t_us) {
        Event e = events_.top();
        events_.pop();
        now_ = e.at;
        switch (e.kind) {
            case Event::Kind::Delivery:
                deliver(e);
                break;
            case Event::Kind::Timer:
                fire_timer(e);
                break;
            case Event::Kind::Transmit:
                start_transmission(e.tx);
                break;
        }
    }
    if (t_us > now_) now_ = t_us;
}

void Simulator::log_line(std::string text) { log_.push_back(std::move(text)); }

std::string Simulator::log_text() const {
    std::string out;
    for (const auto& line : log_) {
        out += line;
        out += '\n';
    }
    return out;
}

std::string Simulator::snapshot() const {
    std::string out;
    for (const auto& n : nodes_) {
        out += node_snapshot_line(n);
        out += '\n';
    }
    return out;
}

}  // namespace touchlink::airsim
