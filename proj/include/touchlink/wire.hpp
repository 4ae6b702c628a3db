#ifndef TOUCHLINK_WIRE_HPP
#define TOUCHLINK_WIRE_HPP

// Frame types and the bit-exact codec for everything that crosses the
// simulated air: inter-PAN touchlink command frames, secured network-layer
// frames, and MAC acknowledgments. The byte layout is the project's own
// "touchlink-lab wire format v1", documented in docs/wire-format.md; that
// table is normative for this codebase.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace touchlink::wire {

constexpr uint16_t kBroadcastShortAddr = 0xFFFF;
constexpr uint8_t kBroadcastEndpoint = 0xFF;
constexpr uint8_t kMinChannel = 11;
constexpr uint8_t kMaxChannel = 26;

// Key slot selected by join requests; mirrors bit 4 of the scan response
// key bitmask (the master-key bit, the only one device models honor).
constexpr uint8_t kMasterKeyIndex = 4;
constexpr uint16_t kKeyBitmaskMasterKey = 1u << 4;
constexpr uint16_t kKeyBitmaskDevelopmentKey = 1u << 0;

inline bool channel_valid(uint8_t ch) { return ch >= kMinChannel && ch <= kMaxChannel; }

// MAC-level addressing shared by all inter-PAN touchlink frames. At least
// one of src_short/src_extended must be present; the all-ones short address
// is broadcast.
struct MacHeader {
    uint8_t sequence_number = 0;
    uint16_t src_pan = 0;
    uint16_t dst_pan = 0;
    std::optional<uint16_t> src_short;
    std::optional<uint16_t> dst_short;
    std::optional<uint64_t> src_extended;
    std::optional<uint64_t> dst_extended;
    bool ack_requested = false;

    bool operator==(const MacHeader&) const = default;
};

struct ScanRequest {
    uint32_t transaction_id = 0;
    bool operator==(const ScanRequest&) const = default;
};

struct ScanResponse {
    uint32_t transaction_id = 0;
    uint32_t response_id = 0;
    uint16_t key_bitmask = 0;
    uint8_t network_update_id = 0;
    uint8_t channel = kMinChannel;
    uint16_t pan_id = 0;
    uint64_t extended_pan_id = 0;
    bool factory_new = false;
    uint8_t sub_device_count = 0;
    bool operator==(const ScanResponse&) const = default;
};

struct DeviceInfoRequest {
    uint32_t transaction_id = 0;
    bool operator==(const DeviceInfoRequest&) const = default;
};

struct SubDeviceRecord {
    uint8_t endpoint = 0;
    uint16_t profile_id = 0;
    uint16_t device_id = 0;
    uint8_t version = 0;
    bool operator==(const SubDeviceRecord&) const = default;
};

struct DeviceInfoResponse {
    uint32_t transaction_id = 0;
    std::vector<SubDeviceRecord> sub_device_records;
    bool operator==(const DeviceInfoResponse&) const = default;
};

// duration: 0x0000 aborts a running identify, 0xFFFF requests the vendor
// default, anything else is seconds.
struct IdentifyRequest {
    uint32_t transaction_id = 0;
    uint16_t duration = 0;
    bool operator==(const IdentifyRequest&) const = default;
};

struct ResetToFactoryNewRequest {
    uint32_t transaction_id = 0;
    bool operator==(const ResetToFactoryNewRequest&) const = default;
};

struct NetworkUpdateRequest {
    uint32_t transaction_id = 0;
    uint64_t extended_pan_id = 0;
    uint8_t network_update_id = 0;
    uint8_t channel = kMinChannel;
    uint16_t pan_id = 0;
    uint16_t short_addr = 0;
    bool operator==(const NetworkUpdateRequest&) const = default;
};

struct NetworkJoinEndDeviceRequest {
    uint32_t transaction_id = 0;
    uint64_t extended_pan_id = 0;
    uint8_t key_index = kMasterKeyIndex;
    std::array<uint8_t, 16> encrypted_network_key{};
    uint8_t channel = kMinChannel;
    uint16_t pan_id = 0;
    uint8_t network_update_id = 0;
    uint16_t assigned_short_addr = 0;
    bool operator==(const NetworkJoinEndDeviceRequest&) const = default;
};

struct NetworkJoinEndDeviceResponse {
    uint32_t transaction_id = 0;
    uint8_t status = 0;  // 0 = success
    bool operator==(const NetworkJoinEndDeviceResponse&) const = default;
};

struct NetworkStartRequest {
    uint32_t transaction_id = 0;
    uint64_t extended_pan_id = 0;
    uint8_t key_index = kMasterKeyIndex;
    std::array<uint8_t, 16> encrypted_network_key{};
    uint8_t channel = kMinChannel;
    uint16_t pan_id = 0;
    bool operator==(const NetworkStartRequest&) const = default;
};

using TouchlinkCommand =
    std::variant<ScanRequest, ScanResponse, DeviceInfoRequest, DeviceInfoResponse, IdentifyRequest,
                 ResetToFactoryNewRequest, NetworkUpdateRequest, NetworkJoinEndDeviceRequest,
                 NetworkJoinEndDeviceResponse, NetworkStartRequest>;

struct TouchlinkFrame {
    MacHeader mac;
    TouchlinkCommand command;
    bool operator==(const TouchlinkFrame&) const = default;
};

// Network-layer application frame. The payload travels encrypted; the
// plaintext is a ClusterCommand (see below). mic is the 32-bit CCM* tag.
struct SecuredNwkFrame {
    uint16_t src_short = 0;
    uint16_t dst_short = 0;
    uint16_t pan_id = 0;
    uint32_t frame_counter = 0;
    uint8_t endpoint = kBroadcastEndpoint;
    std::vector<uint8_t> ciphertext;
    uint32_t mic = 0;
    bool operator==(const SecuredNwkFrame&) const = default;
};

struct AckFrame {
    uint8_t sequence_number = 0;
    bool operator==(const AckFrame&) const = default;
};

using Frame = std::variant<TouchlinkFrame, SecuredNwkFrame, AckFrame>;

// Transaction id carried by a touchlink command, uniform across variants.
uint32_t transaction_id(const TouchlinkCommand& cmd);

// Short lowercase name of the touchlink command variant, for logs/reports.
std::string command_name(const TouchlinkCommand& cmd);
std::string frame_name(const Frame& frame);

enum class WireError : uint8_t {
    None = 0,
    InvariantViolation,  // encode: field violates a type invariant
    Truncated,           // decode: input ends before a required field
    UnknownCommandTag,   // decode: unrecognized frame or command tag
    FieldOutOfRange,     // decode: field value outside its legal range
};

const char* wire_error_name(WireError e);

struct EncodeResult {
    std::vector<uint8_t> bytes;
    WireError error = WireError::None;
    size_t offset = 0;  // byte offset of the offending field, when error != None

    bool ok() const { return error == WireError::None; }
};

struct DecodeResult {
    std::optional<Frame> frame;
    WireError error = WireError::None;
    size_t offset = 0;

    bool ok() const { return frame.has_value(); }
};

// Serializes a frame to the v1 layout. Fails with InvariantViolation when a
// field is out of range (zero transaction id, channel outside 11..26,
// missing source address, oversized payload).
EncodeResult encode_frame(const Frame& frame);

// Parses one length-prefixed frame from the start of `bytes`. Trailing bytes
// beyond the prefixed length are ignored, so a successful decode re-encodes
// to a prefix of the input. Never throws on malformed input.
DecodeResult decode_frame(std::span<const uint8_t> bytes);

// 8-bit MAC sequence counter increment, wrapping modulo 256.
constexpr uint8_t next_sequence(uint8_t counter) { return static_cast<uint8_t>(counter + 1); }

// Application payload carried (encrypted) by SecuredNwkFrame. Only the
// commands the device models act on: on/off, level, color.
struct ClusterCommand {
    enum class Op : uint8_t { Off = 0, On = 1, SetLevel = 2, SetColor = 3 };
    Op op = Op::Off;
    uint8_t level = 0;  // SetLevel argument
    uint16_t hue = 0;   // SetColor argument
    bool operator==(const ClusterCommand&) const = default;
};

std::vector<uint8_t> encode_cluster_command(const ClusterCommand& cmd);
std::optional<ClusterCommand> decode_cluster_command(std::span<const uint8_t> bytes);

std::string to_hex(std::span<const uint8_t> bytes);
std::optional<std::vector<uint8_t>> from_hex(std::string_view hex);

}  // namespace touchlink::wire

#endif
