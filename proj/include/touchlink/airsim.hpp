#ifndef TOUCHLINK_AIRSIM_HPP
#define TOUCHLINK_AIRSIM_HPP

// Deterministic microsecond-resolution discrete-event radio simulator.
// Nodes sit on a 2-D plane; transmissions fan out to every node whose
// received power clears the noise floor, arriving after a fixed propagation
// delay plus per-byte airtime. Events at equal timestamps process in
// insertion order, so a given seed always yields a byte-identical log.

#include "touchlink/devices.hpp"
#include "touchlink/radio.hpp"
#include "touchlink/rng.hpp"
#include "touchlink/wire.hpp"

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

namespace touchlink::airsim {

// One frame as seen by a receiver; attacker nodes accumulate these as their
// sniffer capture. `raw` is the exact encoded byte stream.
struct CapturedFrame {
    uint64_t at_us = 0;
    uint8_t channel = devices::kDefaultListenChannel;
    double rssi_dbm = 0.0;
    std::string from;
    wire::Frame frame;
    std::vector<uint8_t> raw;
};

enum class NodeKind : uint8_t { EndDevice, Initiator, Attacker };

struct Node {
    std::string name;
    NodeKind kind = NodeKind::Attacker;
    double x = 0.0;
    double y = 0.0;
    double tx_power_dbm = 0.0;

    // Exactly one is set for device nodes; attackers carry neither.
    std::optional<devices::EndDeviceState> end_device;
    std::optional<devices::InitiatorState> initiator;

    uint8_t attacker_channel = devices::kDefaultListenChannel;
    uint64_t attacker_ext = 0;

    // Pins the radio to a channel regardless of device state; initiators
    // use this while sweeping channels during commissioning.
    std::optional<uint8_t> channel_override;

    // MAC-level auto-acknowledgment switch (on for devices; attackers never
    // ack). Exposed so tests can model a deaf victim.
    bool auto_ack_enabled = true;

    std::vector<CapturedFrame> inbox;
    std::map<std::string, uint64_t> drop_counts;

    uint8_t listen_channel() const;
    uint64_t extended_addr() const;
    bool is_device() const { return kind != NodeKind::Attacker; }
};

// State snapshot for one node, same line the full Simulator::snapshot emits.
std::string node_snapshot_line(const Node& node);

class Simulator {
public:
    explicit Simulator(uint64_t seed, radio::PathLossModel model = {});

    Node& add_end_device(std::string name, devices::EndDeviceState state, double x, double y,
                         double tx_power_dbm = 0.0);
    Node& add_initiator(std::string name, devices::InitiatorState state, double x, double y,
                        double tx_power_dbm = 0.0);
    Node& add_attacker(std::string name, uint64_t extended_addr, double x, double y,
                       double tx_power_dbm = 26.0);

    Node* find(std::string_view name);
    const Node* find(std::string_view name) const;
    Node* find_by_extended(uint64_t ext);

    uint64_t now() const { return now_; }
    Rng& rng() { return rng_; }
    const radio::PathLossModel& path_loss() const { return model_; }
    std::deque<Node>& nodes() { return nodes_; }
    const std::deque<Node>& nodes() const { return nodes_; }

    // Sends a frame from the named node on `channel` (default: the node's
    // current listen channel). Returns the codec error if the frame cannot
    // be encoded — nothing is transmitted in that case.
    std::optional<wire::WireError> transmit(std::string_view from, const wire::Frame& frame,
                                            std::optional<uint8_t> channel = std::nullopt);
    std::optional<wire::WireError> transmit_at(uint64_t at_us, std::string_view from,
                                               const wire::Frame& frame,
                                               std::optional<uint8_t> channel = std::nullopt);

    // Puts arbitrary bytes on the air; receivers that cannot parse them log
    // a malformed_frame drop.
    void inject_raw(std::string_view from, std::vector<uint8_t> bytes,
                    std::optional<uint8_t> channel = std::nullopt);

    // Advances simulated time, delivering every event due on the way.
    void run_until(uint64_t t_us);
    void run_for(uint64_t dt_us) { run_until(now_ + dt_us); }

    const std::vector<std::string>& log() const { return log_; }
    std::string log_text() const;

    // One snapshot_line per node, insertion order, newline-terminated.
    std::string snapshot() const;

private:
    struct Transmission {
        size_t from;
        uint8_t channel;
        std::vector<uint8_t> bytes;
        std::optional<wire::Frame> frame;  // nullopt: undecodable raw bytes
    };

    struct Event {
        uint64_t at;
        uint64_t seq;
        enum class Kind : uint8_t { Delivery, Timer, Transmit } kind;
        size_t node;  // Delivery: receiver; Timer: device; Transmit: unused
        double rssi_dbm = 0.0;
        std::shared_ptr<const Transmission> tx;
    };
    struct EventAfter {
        bool operator()(const Event& a, const Event& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    Node& add_node(Node node);
    std::optional<size_t> index_of(std::string_view name) const;
    void push_event(uint64_t at, Event::Kind kind, size_t node, double rssi,
                    std::shared_ptr<const Transmission> tx);
    void start_transmission(const std::shared_ptr<const Transmission>& tx);
    void deliver(const Event& e);
    void fire_timer(const Event& e);
    void apply_result(devices::HandleResult&& result, size_t node, uint8_t channel,
                      const std::string& frame_label);
    bool mac_filtered(const Node& rx, const wire::Frame& frame) const;

    void log_line(std::string text);

    radio::PathLossModel model_;
    Rng rng_;
    uint64_t now_ = 0;
    uint64_t next_seq_ = 0;
    std::deque<Node> nodes_;
    std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
    std::vector<std::string> log_;
};

}  // namespace touchlink::airsim

#endif
