#include "touchlink/wire.hpp"

#include <cstring>

namespace touchlink::wire {

namespace {

// Frame tags (offset 2, right after the u16 length prefix).
constexpr uint8_t kTagTouchlink = 0x01;
constexpr uint8_t kTagSecuredNwk = 0x02;
constexpr uint8_t kTagAck = 0x03;

// Touchlink command tags.
constexpr uint8_t kCmdScanRequest = 0x00;
constexpr uint8_t kCmdScanResponse = 0x01;
constexpr uint8_t kCmdDeviceInfoRequest = 0x02;
constexpr uint8_t kCmdDeviceInfoResponse = 0x03;
constexpr uint8_t kCmdIdentifyRequest = 0x04;
constexpr uint8_t kCmdResetToFactoryNew = 0x05;
constexpr uint8_t kCmdNetworkUpdateRequest = 0x06;
constexpr uint8_t kCmdNetworkJoinEndDeviceRequest = 0x07;
constexpr uint8_t kCmdNetworkJoinEndDeviceResponse = 0x08;
constexpr uint8_t kCmdNetworkStartRequest = 0x09;

// MAC flag bits; the remaining bits are reserved and must be zero.
constexpr uint8_t kFlagSrcShort = 1u << 0;
constexpr uint8_t kFlagDstShort = 1u << 1;
constexpr uint8_t kFlagSrcExtended = 1u << 2;
constexpr uint8_t kFlagDstExtended = 1u << 3;
constexpr uint8_t kFlagAckRequested = 1u << 4;
constexpr uint8_t kFlagReservedMask = 0xE0;

class Writer {
public:
    Writer() { buf_.resize(2); }  // length prefix patched on finish

    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) {
        buf_.push_back(static_cast<uint8_t>(v));
        buf_.push_back(static_cast<uint8_t>(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    size_t offset() const { return buf_.size(); }

    void fail(WireError e, size_t at) {
        if (error_ == WireError::None) {
            error_ = e;
            error_offset_ = at;
        }
    }

    EncodeResult finish() {
        if (error_ != WireError::None) return {{}, error_, error_offset_};
        size_t payload = buf_.size() - 2;
        if (payload > 0xFFFF) return {{}, WireError::InvariantViolation, 0};
        buf_[0] = static_cast<uint8_t>(payload);
        buf_[1] = static_cast<uint8_t>(payload >> 8);
        return {std::move(buf_), WireError::None, 0};
    }

private:
    std::vector<uint8_t> buf_;
    WireError error_ = WireError::None;
    size_t error_offset_ = 0;
};

class Reader {
public:
    explicit Reader(std::span<const uint8_t> b) : buf_(b) {}

    bool u8(uint8_t& out) { return take(1) && (out = buf_[pos_ - 1], true); }
    bool u16(uint16_t& out) {
        if (!take(2)) return false;
        out = static_cast<uint16_t>(buf_[pos_ - 2] | (buf_[pos_ - 1] << 8));
        return true;
    }
    bool u32(uint32_t& out) {
        if (!take(4)) return false;
        out = 0;
        for (int i = 0; i < 4; ++i) out |= static_cast<uint32_t>(buf_[pos_ - 4 + i]) << (8 * i);
        return true;
    }
    bool u64(uint64_t& out) {
        if (!take(8)) return false;
        out = 0;
        for (int i = 0; i < 8; ++i) out |= static_cast<uint64_t>(buf_[pos_ - 8 + i]) << (8 * i);
        return true;
    }
    bool bytes(size_t n, std::span<const uint8_t>& out) {
        if (!take(n)) return false;
        out = buf_.subspan(pos_ - n, n);
        return true;
    }

    size_t pos() const { return pos_; }
    size_t remaining() const { return buf_.size() - pos_; }
    void limit(size_t end) { buf_ = buf_.first(end); }

private:
    bool take(size_t n) {
        if (buf_.size() - pos_ < n) return false;
        pos_ += n;
        return true;
    }

    std::span<const uint8_t> buf_;
    size_t pos_ = 0;
};

DecodeResult fail(WireError e, size_t offset) { return {std::nullopt, e, offset}; }

void write_mac(Writer& w, const MacHeader& mac) {
    size_t flags_at = w.offset();
    uint8_t flags = 0;
    if (mac.src_short) flags |= kFlagSrcShort;
    if (mac.dst_short) flags |= kFlagDstShort;
    if (mac.src_extended) flags |= kFlagSrcExtended;
    if (mac.dst_extended) flags |= kFlagDstExtended;
    if (mac.ack_requested) flags |= kFlagAckRequested;
    if (!mac.src_short && !mac.src_extended) w.fail(WireError::InvariantViolation, flags_at);
    w.u8(flags);
    w.u8(mac.sequence_number);
    w.u16(mac.src_pan);
    w.u16(mac.dst_pan);
    if (mac.src_short) w.u16(*mac.src_short);
    if (mac.dst_short) w.u16(*mac.dst_short);
    if (mac.src_extended) w.u64(*mac.src_extended);
    if (mac.dst_extended) w.u64(*mac.dst_extended);
}

void write_channel(Writer& w, uint8_t channel) {
    if (!channel_valid(channel)) w.fail(WireError::InvariantViolation, w.offset());
    w.u8(channel);
}

struct CommandWriter {
    Writer& w;

    void header(uint8_t tag, uint32_t transaction_id) {
        w.u8(tag);
        if (transaction_id == 0) w.fail(WireError::InvariantViolation, w.offset());
        w.u32(transaction_id);
    }

    void operator()(const ScanRequest& c) { header(kCmdScanRequest, c.transaction_id); }
    void operator()(const ScanResponse& c) {
        header(kCmdScanResponse, c.transaction_id);
        w.u32(c.response_id);
        w.u16(c.key_bitmask);
        w.u8(c.network_update_id);
        write_channel(w, c.channel);
        w.u16(c.pan_id);
        w.u64(c.extended_pan_id);
        w.u8(c.factory_new ? 1 : 0);
        w.u8(c.sub_device_count);
    }
    void operator()(const DeviceInfoRequest& c) { header(kCmdDeviceInfoRequest, c.transaction_id); }
    void operator()(const DeviceInfoResponse& c) {
        header(kCmdDeviceInfoResponse, c.transaction_id);
        if (c.sub_device_records.size() > 0xFF) w.fail(WireError::InvariantViolation, w.offset());
        w.u8(static_cast<uint8_t>(c.sub_device_records.size()));
        for (const auto& r : c.sub_device_records) {
            w.u8(r.endpoint);
            w.u16(r.profile_id);
            w.u16(r.device_id);
            w.u8(r.version);
        }
    }
    void operator()(const IdentifyRequest& c) {
        header(kCmdIdentifyRequest, c.transaction_id);
        w.u16(c.duration);
    }
    void operator()(const ResetToFactoryNewRequest& c) { header(kCmdResetToFactoryNew, c.transaction_id); }
    void operator()(const NetworkUpdateRequest& c) {
        header(kCmdNetworkUpdateRequest, c.transaction_id);
        w.u64(c.extended_pan_id);
        w.u8(c.network_update_id);
        write_channel(w, c.channel);
        w.u16(c.pan_id);
        w.u16(c.short_addr);
    }
    void operator()(const NetworkJoinEndDeviceRequest& c) {
        header(kCmdNetworkJoinEndDeviceRequest, c.transaction_id);
        w.u64(c.extended_pan_id);
        w.u8(c.key_index);
        w.bytes(c.encrypted_network_key);
        write_channel(w, c.channel);
        w.u16(c.pan_id);
        w.u8(c.network_update_id);
        w.u16(c.assigned_short_addr);
    }
    void operator()(const NetworkJoinEndDeviceResponse& c) {
        header(kCmdNetworkJoinEndDeviceResponse, c.transaction_id);
        w.u8(c.status);
    }
    void operator()(const NetworkStartRequest& c) {
        header(kCmdNetworkStartRequest, c.transaction_id);
        w.u64(c.extended_pan_id);
        w.u8(c.key_index);
        w.bytes(c.encrypted_network_key);
        write_channel(w, c.channel);
        w.u16(c.pan_id);
    }
};

bool read_mac(Reader& r, MacHeader& mac, DecodeResult& err) {
    size_t flags_at = r.pos();
    uint8_t flags = 0;
    if (!r.u8(flags)) {
        err = fail(WireError::Truncated, flags_at);
        return false;
    }
    if (flags & kFlagReservedMask) {
        err = fail(WireError::FieldOutOfRange, flags_at);
        return false;
    }
    if (!(flags & kFlagSrcShort) && !(flags & kFlagSrcExtended)) {
        err = fail(WireError::FieldOutOfRange, flags_at);
        return false;
    }
    mac.ack_requested = flags & kFlagAckRequested;
    if (!r.u8(mac.sequence_number) || !r.u16(mac.src_pan) || !r.u16(mac.dst_pan)) {
        err = fail(WireError::Truncated, r.pos());
        return false;
    }
    auto opt16 = [&](uint8_t bit, std::optional<uint16_t>& out) {
        if (!(flags & bit)) return true;
        uint16_t v;
        if (!r.u16(v)) return false;
        out = v;
        return true;
    };
    auto opt64 = [&](uint8_t bit, std::optional<uint64_t>& out) {
        if (!(flags & bit)) return true;
        uint64_t v;
        if (!r.u64(v)) return false;
        out = v;
        return true;
    };
    if (!opt16(kFlagSrcShort, mac.src_short) || !opt16(kFlagDstShort, mac.dst_short) ||
        !opt64(kFlagSrcExtended, mac.src_extended) || !opt64(kFlagDstExtended, mac.dst_extended)) {
        err = fail(WireError::Truncated, r.pos());
        return false;
    }
    return true;
}

#define READ_OR(expr)                               \
    do {                                            \
        size_t at_ = r.pos();                       \
        if (!(expr)) return fail(WireError::Truncated, at_); \
    } while (0)

DecodeResult read_channel(Reader& r, uint8_t& channel) {
    size_t at = r.pos();
    if (!r.u8(channel)) return fail(WireError::Truncated, at);
    if (!channel_valid(channel)) return fail(WireError::FieldOutOfRange, at);
    return {};
}

DecodeResult decode_touchlink(Reader& r) {
    TouchlinkFrame f;
    DecodeResult err;
    if (!read_mac(r, f.mac, err)) return err;

    size_t tag_at = r.pos();
    uint8_t tag;
    READ_OR(r.u8(tag));
    size_t tid_at = r.pos();
    uint32_t tid;
    READ_OR(r.u32(tid));
    if (tid == 0) return fail(WireError::FieldOutOfRange, tid_at);

    switch (tag) {
        case kCmdScanRequest:
            f.command = ScanRequest{tid};
            break;
        case kCmdScanResponse: {
            ScanResponse c{tid, 0, 0, 0, 0, 0, 0, false, 0};
            READ_OR(r.u32(c.response_id));
            READ_OR(r.u16(c.key_bitmask));
            READ_OR(r.u8(c.network_update_id));
            if (auto e = read_channel(r, c.channel); e.error != WireError::None) return e;
            READ_OR(r.u16(c.pan_id));
            READ_OR(r.u64(c.extended_pan_id));
            size_t fn_at = r.pos();
            uint8_t fn;
            READ_OR(r.u8(fn));
            if (fn > 1) return fail(WireError::FieldOutOfRange, fn_at);
            c.factory_new = fn == 1;
            READ_OR(r.u8(c.sub_device_count));
            f.command = c;
            break;
        }
        case kCmdDeviceInfoRequest:
            f.command = DeviceInfoRequest{tid};
            break;
        case kCmdDeviceInfoResponse: {
            DeviceInfoResponse c{tid, {}};
            uint8_t count;
            READ_OR(r.u8(count));
            c.sub_device_records.reserve(count);
            for (uint8_t i = 0; i < count; ++i) {
                SubDeviceRecord rec;
                READ_OR(r.u8(rec.endpoint));
                READ_OR(r.u16(rec.profile_id));
                READ_OR(r.u16(rec.device_id));
                READ_OR(r.u8(rec.version));
                c.sub_device_records.push_back(rec);
            }
            f.command = std::move(c);
            break;
        }
        case kCmdIdentifyRequest: {
            IdentifyRequest c{tid, 0};
            READ_OR(r.u16(c.duration));
            f.command = c;
            break;
        }
        case kCmdResetToFactoryNew:
            f.command = ResetToFactoryNewRequest{tid};
            break;
        case kCmdNetworkUpdateRequest: {
            NetworkUpdateRequest c{tid, 0, 0, 0, 0, 0};
            READ_OR(r.u64(c.extended_pan_id));
            READ_OR(r.u8(c.network_update_id));
            if (auto e = read_channel(r, c.channel); e.error != WireError::None) return e;
            READ_OR(r.u16(c.pan_id));
            READ_OR(r.u16(c.short_addr));
            f.command = c;
            break;
        }
        case kCmdNetworkJoinEndDeviceRequest: {
            NetworkJoinEndDeviceRequest c;
            c.transaction_id = tid;
            READ_OR(r.u64(c.extended_pan_id));
            READ_OR(r.u8(c.key_index));
            std::span<const uint8_t> key;
            READ_OR(r.bytes(16, key));
            std::memcpy(c.encrypted_network_key.data(), key.data(), 16);
            if (auto e = read_channel(r, c.channel); e.error != WireError::None) return e;
            READ_OR(r.u16(c.pan_id));
            READ_OR(r.u8(c.network_update_id));
            READ_OR(r.u16(c.assigned_short_addr));
            f.command = c;
            break;
        }
        case kCmdNetworkJoinEndDeviceResponse: {
            NetworkJoinEndDeviceResponse c{tid, 0};
            READ_OR(r.u8(c.status));
            f.command = c;
            break;
        }
        case kCmdNetworkStartRequest: {
            NetworkStartRequest c;
            c.transaction_id = tid;
            READ_OR(r.u64(c.extended_pan_id));
            READ_OR(r.u8(c.key_index));
            std::span<const uint8_t> key;
            READ_OR(r.bytes(16, key));
            std::memcpy(c.encrypted_network_key.data(), key.data(), 16);
            if (auto e = read_channel(r, c.channel); e.error != WireError::None) return e;
            READ_OR(r.u16(c.pan_id));
            f.command = c;
            break;
        }
        default:
            return fail(WireError::UnknownCommandTag, tag_at);
    }
    return {Frame{std::move(f)}, WireError::None, 0};
}

DecodeResult decode_secured(Reader& r) {
    SecuredNwkFrame f;
    READ_OR(r.u16(f.src_short));
    READ_OR(r.u16(f.dst_short));
    READ_OR(r.u16(f.pan_id));
    READ_OR(r.u32(f.frame_counter));
    READ_OR(r.u8(f.endpoint));
    uint16_t ct_len;
    READ_OR(r.u16(ct_len));
    std::span<const uint8_t> ct;
    READ_OR(r.bytes(ct_len, ct));
    f.ciphertext.assign(ct.begin(), ct.end());
    READ_OR(r.u32(f.mic));
    return {Frame{std::move(f)}, WireError::None, 0};
}

#undef READ_OR

}  // namespace

uint32_t transaction_id(const TouchlinkCommand& cmd) {
    return std::visit([](const auto& c) { return c.transaction_id; }, cmd);
}

std::string command_name(const TouchlinkCommand& cmd) {
    struct Namer {
        std::string operator()(const ScanRequest&) { return "scan_request"; }
        std::string operator()(const ScanResponse&) { return "scan_response"; }
        std::string operator()(const DeviceInfoRequest&) { return "device_info_request"; }
        std::string operator()(const DeviceInfoResponse&) { return "device_info_response"; }
        std::string operator()(const IdentifyRequest&) { return "identify_request"; }
        std::string operator()(const ResetToFactoryNewRequest&) { return "reset_to_factory_new_request"; }
        std::string operator()(const NetworkUpdateRequest&) { return "network_update_request"; }
        std::string operator()(const NetworkJoinEndDeviceRequest&) { return "network_join_end_device_request"; }
        std::string operator()(const NetworkJoinEndDeviceResponse&) { return "network_join_end_device_response"; }
        std::string operator()(const NetworkStartRequest&) { return "network_start_request"; }
    };
    return std::visit(Namer{}, cmd);
}

std::string frame_name(const Frame& frame) {
    struct Namer {
        std::string operator()(const TouchlinkFrame& f) { return command_name(f.command); }
        std::string operator()(const SecuredNwkFrame&) { return "secured_nwk_frame"; }
        std::string operator()(const AckFrame&) { return "ack"; }
    };
    return std::visit(Namer{}, frame);
}

const char* wire_error_name(WireError e) {
    switch (e) {
        case WireError::None: return "none";
        case WireError::InvariantViolation: return "invariant_violation";
        case WireError::Truncated: return "truncated";
        case WireError::UnknownCommandTag: return "unknown_command_tag";
        case WireError::FieldOutOfRange: return "field_out_of_range";
    }
    return "?";
}

EncodeResult encode_frame(const Frame& frame) {
    Writer w;
    if (const auto* t = std::get_if<TouchlinkFrame>(&frame)) {
        w.u8(kTagTouchlink);
        write_mac(w, t->mac);
        std::visit(CommandWriter{w}, t->command);
    } else if (const auto* s = std::get_if<SecuredNwkFrame>(&frame)) {
        w.u8(kTagSecuredNwk);
        w.u16(s->src_short);
        w.u16(s->dst_short);
        w.u16(s->pan_id);
        w.u32(s->frame_counter);
        w.u8(s->endpoint);
        if (s->ciphertext.size() > 0xFFFF) {
            w.fail(WireError::InvariantViolation, w.offset());
        } else {
            w.u16(static_cast<uint16_t>(s->ciphertext.size()));
            w.bytes(s->ciphertext);
        }
        w.u32(s->mic);
    } else {
        w.u8(kTagAck);
        w.u8(std::get<AckFrame>(frame).sequence_number);
    }
    return w.finish();
}

DecodeResult decode_frame(std::span<const uint8_t> bytes) {
    Reader outer(bytes);
    uint16_t len;
    if (!outer.u16(len)) return fail(WireError::Truncated, 0);
    if (bytes.size() < 2u + len) return fail(WireError::Truncated, bytes.size());
    Reader r(bytes.subspan(2, len));

    uint8_t tag;
    if (!r.u8(tag)) return fail(WireError::Truncated, 2);

    DecodeResult result;
    switch (tag) {
        case kTagTouchlink:
            result = decode_touchlink(r);
            break;
        case kTagSecuredNwk:
            result = decode_secured(r);
            break;
        case kTagAck: {
            AckFrame f;
            if (!r.u8(f.sequence_number)) return fail(WireError::Truncated, 2 + r.pos());
            result = {Frame{f}, WireError::None, 0};
            break;
        }
        default:
            return fail(WireError::UnknownCommandTag, 2);
    }
    if (!result.ok()) {
        result.offset += 2;  // report offsets relative to the full input
        return result;
    }
    // Canonicality: the declared length must be exactly the encoded size.
    if (r.remaining() != 0) return fail(WireError::FieldOutOfRange, 2 + r.pos());
    return result;
}

std::vector<uint8_t> encode_cluster_command(const ClusterCommand& cmd) {
    std::vector<uint8_t> out;
    out.push_back(static_cast<uint8_t>(cmd.op));
    switch (cmd.op) {
        case ClusterCommand::Op::SetLevel:
            out.push_back(cmd.level);
            break;
        case ClusterCommand::Op::SetColor:
            out.push_back(static_cast<uint8_t>(cmd.hue));
            out.push_back(static_cast<uint8_t>(cmd.hue >> 8));
            break;
        default:
            break;
    }
    return out;
}

std::optional<ClusterCommand> decode_cluster_command(std::span<const uint8_t> bytes) {
    if (bytes.empty()) return std::nullopt;
    ClusterCommand cmd;
    switch (bytes[0]) {
        case 0:
            cmd.op = ClusterCommand::Op::Off;
            return bytes.size() == 1 ? std::optional(cmd) : std::nullopt;
        case 1:
            cmd.op = ClusterCommand::Op::On;
            return bytes.size() == 1 ? std::optional(cmd) : std::nullopt;
        case 2:
            cmd.op = ClusterCommand::Op::SetLevel;
            if (bytes.size() != 2) return std::nullopt;
            cmd.level = bytes[1];
            return cmd;
        case 3:
            cmd.op = ClusterCommand::Op::SetColor;
            if (bytes.size() != 3) return std::nullopt;
            cmd.hue = static_cast<uint16_t>(bytes[1] | (bytes[2] << 8));
            return cmd;
        default:
            return std::nullopt;
    }
}

std::string to_hex(std::span<const uint8_t> bytes) {
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

std::optional<std::vector<uint8_t>> from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::vector<uint8_t> out;
    out.reserve(hex.size() / 2);
    for (size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]);
        int lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<uint8_t>((hi << 4) | lo));
    }
    return out;
}

}  // namespace touchlink::wire
