#include "touchlink/scenario.hpp"

#include "touchlink/procedures.hpp"
#include "touchlink/radio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <set>
#include <sstream>

namespace touchlink::scenario {

namespace {

using attacks::Verdict;

std::string hexn(uint64_t v, int digits) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%0*" PRIx64, digits, v);
    return buf;
}

std::string fmt_time(uint64_t us) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%012" PRIu64, us);
    return buf;
}

// Shortest representation that parses back to the same double.
std::string fmt_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

struct Tok {
    std::string text;
    int col = 0;  // 1-based position in the raw line
};

std::vector<Tok> tokenize(std::string_view line) {
    std::vector<Tok> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        out.push_back({std::string(line.substr(start, i - start)), int(start) + 1});
    }
    return out;
}

bool all_hex(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(),
                       [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

std::optional<uint64_t> parse_dec(std::string_view s) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 10);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<uint64_t> parse_hex(std::string_view s) {
    if (s.starts_with("0x") || s.starts_with("0X")) s.remove_prefix(2);
    if (!all_hex(s) || s.size() > 16) return std::nullopt;
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

// Decimal unless 0x-prefixed (duration-style fields).
std::optional<uint64_t> parse_any(std::string_view s) {
    if (s.starts_with("0x") || s.starts_with("0X")) return parse_hex(s);
    return parse_dec(s);
}

std::optional<double> parse_double(std::string_view s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<std::pair<double, double>> parse_pos(std::string_view s) {
    size_t comma = s.find(',');
    if (comma == std::string_view::npos) return std::nullopt;
    auto x = parse_double(s.substr(0, comma));
    auto y = parse_double(s.substr(comma + 1));
    if (!x || !y) return std::nullopt;
    return std::pair{*x, *y};
}

// "250ms" / "5s" / "100us" -> microseconds.
std::optional<uint64_t> parse_time(std::string_view s) {
    size_t digits = 0;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
    if (digits == 0) return std::nullopt;
    auto num = parse_dec(s.substr(0, digits));
    if (!num) return std::nullopt;
    std::string_view unit = s.substr(digits);
    if (unit == "us") return *num;
    if (unit == "ms") return *num * 1'000;
    if (unit == "s") return *num * 1'000'000;
    return std::nullopt;
}

bool is_initiator_profile(std::string_view profile) {
    const auto* p = devices::find_profile(profile);
    return p && !p->is_lamp;
}

bool is_bulb_profile(std::string_view profile) {
    const auto* p = devices::find_profile(profile);
    return p && p->is_lamp;
}

struct VerbSpec {
    bool needs_node;
    std::vector<std::string_view> required;
    std::vector<std::string_view> allowed;  // beyond node + required
};

const std::map<std::string_view, VerbSpec>& verb_table() {
    static const std::map<std::string_view, VerbSpec> table = {
        {"press_button", {true, {}, {}}},
        {"join", {true, {}, {"target", "key_index"}}},
        {"scan", {true, {}, {"channel"}}},
        {"blink", {true, {"target"}, {"duration"}}},
        {"reset", {true, {"target"}, {}}},
        {"dos_channel", {true, {"target", "channel"}, {"update"}}},
        {"dos_join", {true, {"target"}, {}}},
        {"hijack",
         {true, {"target"}, {"epid", "pan", "channel", "short", "update", "key", "master"}}},
        {"extract_key", {true, {}, {"master"}}},
        {"inject", {true, {"key", "pan", "channel", "dst", "counter", "command"}, {"src"}}},
        {"user_command", {true, {"command"}, {"dst"}}},
        {"recover", {true, {"target"}, {}}},
        {"physical_reset", {true, {}, {}}},
        {"advance", {false, {}, {}}},
        {"move", {true, {"pos"}, {}}},
        {"expect", {false, {}, {"node", "field", "value", "last"}}},
    };
    return table;
}

const std::string* find_arg(const Action& a, std::string_view key) {
    for (const auto& [k, v] : a.args)
        if (k == key) return &v;
    return nullptr;
}

std::optional<wire::ClusterCommand> parse_command(std::string_view s) {
    wire::ClusterCommand cmd;
    if (s == "on") {
        cmd.op = wire::ClusterCommand::Op::On;
        return cmd;
    }
    if (s == "off") {
        cmd.op = wire::ClusterCommand::Op::Off;
        return cmd;
    }
    if (s.starts_with("level:")) {
        auto n = parse_dec(s.substr(6));
        if (!n || *n > 254) return std::nullopt;
        cmd.op = wire::ClusterCommand::Op::SetLevel;
        cmd.level = static_cast<uint8_t>(*n);
        return cmd;
    }
    if (s.starts_with("color:")) {
        auto n = parse_dec(s.substr(6));
        if (!n || *n > 0xFFFF) return std::nullopt;
        cmd.op = wire::ClusterCommand::Op::SetColor;
        cmd.hue = static_cast<uint16_t>(*n);
        return cmd;
    }
    return std::nullopt;
}

// Parser state shared by the section handlers.
struct Parser {
    Scenario sc;
    std::vector<Issue> issues;
    bool master_key_set = false;

    void perr(int line, int col, std::string field, std::string msg) {
        issues.push_back({Issue::Kind::Parse, line, col, std::move(field), std::move(msg)});
    }
    void verr(int line, int col, std::string field, std::string msg) {
        issues.push_back({Issue::Kind::Validation, line, col, std::move(field), std::move(msg)});
    }
};

// Splits "key=value" at the first '='; values may themselves contain '='.
std::optional<std::pair<std::string, std::string>> split_kv(const std::string& tok) {
    size_t eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) return std::nullopt;
    return std::pair{tok.substr(0, eq), tok.substr(eq + 1)};
}

void parse_top_level(Parser& p, const Tok& tok, int line_no) {
    auto kv = split_kv(tok.text);
    if (!kv) {
        p.perr(line_no, tok.col, "", "expected key=value before the [nodes] section");
        return;
    }
    const auto& [key, value] = *kv;
    if (key == "seed") {
        auto v = parse_dec(value);
        if (!v) return p.perr(line_no, tok.col, key, "seed must be a decimal integer");
        p.sc.seed = *v;
    } else if (key == "master_key") {
        auto k = crypto::Key128::from_hex(value);
        if (!k) return p.perr(line_no, tok.col, key, "master_key must be 32 hex digits");
        p.sc.master_key = *k;
        p.master_key_set = true;
    } else if (key == "path_loss_reference") {
        auto v = parse_double(value);
        if (!v) return p.perr(line_no, tok.col, key, "expected a number");
        p.sc.path_loss_reference = *v;
    } else if (key == "path_loss_exponent") {
        auto v = parse_double(value);
        if (!v) return p.perr(line_no, tok.col, key, "expected a number");
        p.sc.path_loss_exponent = *v;
    } else if (key == "noise_floor") {
        auto v = parse_double(value);
        if (!v) return p.perr(line_no, tok.col, key, "expected a number");
        p.sc.noise_floor = *v;
    } else {
        p.perr(line_no, tok.col, key, "unknown top-level key");
    }
}

void parse_node_line(Parser& p, const std::vector<Tok>& toks, int line_no) {
    NodeSpec n;
    n.name = toks[0].text;
    if (n.name.find('=') != std::string::npos) {
        p.perr(line_no, toks[0].col, "name", "node line must start with a bare node name");
        return;
    }
    bool have_profile = false;
    for (size_t i = 1; i < toks.size(); ++i) {
        auto kv = split_kv(toks[i].text);
        if (!kv) {
            p.perr(line_no, toks[i].col, "", "expected key=value");
            continue;
        }
        const auto& [key, value] = *kv;
        int col = toks[i].col;
        auto hex_field = [&](std::string_view what, uint64_t max) -> std::optional<uint64_t> {
            auto v = parse_hex(value);
            if (!v) {
                p.perr(line_no, col, std::string(what), "expected a hex integer");
                return std::nullopt;
            }
            if (*v > max) {
                p.verr(line_no, col, std::string(what), "value out of range");
                return std::nullopt;
            }
            return v;
        };
        if (key == "profile") {
            n.profile = value;
            have_profile = true;
        } else if (key == "pos") {
            auto xy = parse_pos(value);
            if (!xy) {
                p.perr(line_no, col, key, "expected pos=<x>,<y>");
                continue;
            }
            n.x = xy->first;
            n.y = xy->second;
        } else if (key == "tx") {
            auto v = parse_double(value);
            if (!v) {
                p.perr(line_no, col, key, "expected a number (dBm)");
                continue;
            }
            n.tx_power = *v;
        } else if (key == "ext") {
            if (auto v = hex_field(key, UINT64_MAX)) n.ext = *v;
        } else if (key == "epid") {
            if (auto v = hex_field(key, UINT64_MAX)) n.epid = *v;
        } else if (key == "pan") {
            if (auto v = hex_field(key, 0xFFFF)) n.pan = static_cast<uint16_t>(*v);
        } else if (key == "channel") {
            auto v = parse_dec(value);
            if (!v) {
                p.perr(line_no, col, key, "expected a decimal channel number");
                continue;
            }
            if (!wire::channel_valid(static_cast<uint8_t>(std::min<uint64_t>(*v, 255)))) {
                p.verr(line_no, col, key, "channel must be in 11..26");
                continue;
            }
            n.channel = static_cast<uint8_t>(*v);
        } else if (key == "update") {
            auto v = parse_dec(value);
            if (!v || *v > 255) {
                p.verr(line_no, col, key, "update must be 0..255");
                continue;
            }
            n.update = static_cast<uint8_t>(*v);
        } else if (key == "key") {
            if (value != "auto" && !crypto::Key128::from_hex(value)) {
                p.verr(line_no, col, key, "key must be \"auto\" or 32 hex digits");
                continue;
            }
            n.key = value;
        } else if (key == "short") {
            if (auto v = hex_field(key, 0xFFFF)) n.short_addr = static_cast<uint16_t>(*v);
        } else if (key == "joined") {
            n.joined = value;
        } else if (key == "spoof") {
            n.spoof = value;
        } else if (key == "master") {
            if (value != "scenario" && !crypto::Key128::from_hex(value)) {
                p.verr(line_no, col, key, "master must be \"scenario\" or 32 hex digits");
                continue;
            }
            n.master = value;
        } else {
            p.perr(line_no, col, key, "unknown node key");
        }
    }
    if (!have_profile) p.perr(line_no, toks[0].col, "profile", "node line needs profile=<name>");
    p.sc.nodes.push_back(std::move(n));
}

void parse_script_line(Parser& p, const std::vector<Tok>& toks, int line_no) {
    if (toks.size() < 3 || toks[0].text != "at") {
        p.perr(line_no, toks[0].col, "at", "script line must start with: at <time> <verb>");
        return;
    }
    Action a;
    a.line = line_no;
    auto t = parse_time(toks[1].text);
    if (!t) {
        p.perr(line_no, toks[1].col, "at", "expected a time like 250ms, 5s, or 100us");
        return;
    }
    a.at_us = *t;
    a.verb = toks[2].text;
    for (size_t i = 3; i < toks.size(); ++i) {
        auto kv = split_kv(toks[i].text);
        if (!kv) {
            p.perr(line_no, toks[i].col, "", "expected key=value");
            return;
        }
        a.args.emplace_back(kv->first, kv->second);
    }
    p.sc.script.push_back(std::move(a));
}

// Cross-reference validation once the whole file is in.
void validate(Parser& p) {
    std::set<std::string> names;
    std::map<std::string, const NodeSpec*> by_name;
    for (const auto& n : p.sc.nodes) {
        if (!names.insert(n.name).second)
            p.verr(0, 0, "name", "duplicate node name '" + n.name + "'");
        else
            by_name[n.name] = &n;
    }
    std::set<uint64_t> exts;
    for (const auto& n : p.sc.nodes) {
        // An empty profile already produced a parse error; don't pile on.
        if (!n.profile.empty() && n.profile != "attacker" && !devices::find_profile(n.profile))
            p.verr(0, 0, "profile", "node '" + n.name + "': unknown profile '" + n.profile + "'");
        if (n.ext) {
            if (*n.ext == 0)
                p.verr(0, 0, "ext", "node '" + n.name + "': extended address must be nonzero");
            else if (!exts.insert(*n.ext).second)
                p.verr(0, 0, "ext", "node '" + n.name + "': duplicate extended address");
        }
        if (n.joined) {
            auto it = by_name.find(*n.joined);
            if (!is_bulb_profile(n.profile))
                p.verr(0, 0, "joined", "node '" + n.name + "': only bulbs can use joined=");
            else if (it == by_name.end() || !is_initiator_profile(it->second->profile))
                p.verr(0, 0, "joined",
                       "node '" + n.name + "': joined= must name an initiator node");
        }
        if (n.spoof && by_name.find(*n.spoof) == by_name.end() && !parse_hex(*n.spoof))
            p.verr(0, 0, "spoof",
                   "node '" + n.name + "': spoof= must name a node or give a hex address");
        if ((n.spoof || n.master) && n.profile != "attacker")
            p.verr(0, 0, n.spoof ? "spoof" : "master",
                   "node '" + n.name + "': only attackers take spoof=/master=");
    }

    uint64_t last_at = 0;
    bool first = true;
    for (const auto& a : p.sc.script) {
        auto it = verb_table().find(a.verb);
        if (it == verb_table().end()) {
            p.verr(a.line, 0, "verb", "unknown verb '" + a.verb + "'");
            continue;
        }
        const VerbSpec& spec = it->second;
        if (!first && a.at_us < last_at)
            p.verr(a.line, 0, "at", "script times must be non-decreasing");
        last_at = a.at_us;
        first = false;

        auto allowed = [&](std::string_view key) {
            if (key == "node" && (spec.needs_node || a.verb == "expect")) return true;
            if (std::find(spec.required.begin(), spec.required.end(), key) != spec.required.end())
                return true;
            return std::find(spec.allowed.begin(), spec.allowed.end(), key) != spec.allowed.end();
        };
        for (const auto& [k, v] : a.args)
            if (!allowed(k))
                p.verr(a.line, 0, k, "unknown argument '" + k + "' for " + a.verb);
        for (auto req : spec.required)
            if (!find_arg(a, req))
                p.verr(a.line, 0, std::string(req), a.verb + " requires " + std::string(req) + "=");

        const std::string* node = find_arg(a, "node");
        if (spec.needs_node && !node)
            p.verr(a.line, 0, "node", a.verb + " requires node=");
        if (node && by_name.find(*node) == by_name.end())
            p.verr(a.line, 0, "node", "no node named '" + *node + "'");
        if (const std::string* target = find_arg(a, "target"))
            if (by_name.find(*target) == by_name.end() && !parse_hex(*target))
                p.verr(a.line, 0, "target",
                       "target '" + *target + "' is neither a node nor a hex address");
        if (a.verb == "expect") {
            bool form_last = find_arg(a, "last") != nullptr;
            bool form_field = find_arg(a, "node") && find_arg(a, "field") && find_arg(a, "value");
            if (form_last == form_field)
                p.verr(a.line, 0, "expect",
                       "expect takes either last=<result> or node=/field=/value=");
        }
        if (a.verb == "inject") {
            if (const std::string* key = find_arg(a, "key")) {
                bool ok = *key == "extracted" || crypto::Key128::from_hex(*key).has_value();
                if (key->starts_with("net:")) {
                    auto it2 = by_name.find(key->substr(4));
                    ok = it2 != by_name.end() && is_initiator_profile(it2->second->profile);
                    if (!ok)
                        p.verr(a.line, 0, "key",
                               "key=net:<node> must name an initiator node");
                } else if (!ok) {
                    p.verr(a.line, 0, "key",
                           "key must be 32 hex digits, \"extracted\", or net:<initiator>");
                }
            }
        }
    }
}

}  // namespace

std::string issue_text(const Issue& issue) {
    std::ostringstream os;
    os << (issue.kind == Issue::Kind::Parse ? "parse error" : "validation error");
    if (issue.line > 0) {
        os << " at line " << issue.line;
        if (issue.column > 0) os << ", column " << issue.column;
    }
    if (!issue.field.empty()) os << " [" << issue.field << "]";
    os << ": " << issue.message;
    return os.str();
}

ParseResult parse_scenario(std::string_view text) {
    Parser p;
    enum class Section { Top, Nodes, Script } section = Section::Top;

    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view raw =
            text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        std::string_view line = raw;
        if (size_t hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        auto toks = tokenize(line);
        if (toks.empty()) continue;

        if (toks[0].text == "[nodes]") {
            section = Section::Nodes;
            continue;
        }
        if (toks[0].text == "[script]") {
            section = Section::Script;
            continue;
        }
        if (toks[0].text.front() == '[') {
            p.perr(line_no, toks[0].col, "", "unknown section '" + toks[0].text + "'");
            continue;
        }

        switch (section) {
            case Section::Top:
                for (const auto& t : toks) parse_top_level(p, t, line_no);
                break;
            case Section::Nodes:
                parse_node_line(p, toks, line_no);
                break;
            case Section::Script:
                parse_script_line(p, toks, line_no);
                break;
        }
    }

    if (!p.master_key_set) p.sc.master_key = *crypto::Key128::from_hex(kDefaultMasterKeyHex);
    validate(p);

    ParseResult result;
    result.issues = std::move(p.issues);
    if (result.issues.empty()) result.scenario = std::move(p.sc);
    return result;
}

std::string serialize_scenario(const Scenario& s) {
    std::ostringstream os;
    os << "seed=" << s.seed << "\n";
    os << "master_key=" << s.master_key.to_hex() << "\n";
    if (s.path_loss_reference) os << "path_loss_reference=" << fmt_double(*s.path_loss_reference) << "\n";
    if (s.path_loss_exponent) os << "path_loss_exponent=" << fmt_double(*s.path_loss_exponent) << "\n";
    if (s.noise_floor) os << "noise_floor=" << fmt_double(*s.noise_floor) << "\n";

    os << "\n[nodes]\n";
    for (const auto& n : s.nodes) {
        os << n.name << " profile=" << n.profile << " pos=" << fmt_double(n.x) << ","
           << fmt_double(n.y);
        if (n.tx_power) os << " tx=" << fmt_double(*n.tx_power);
        if (n.ext) os << " ext=0x" << hexn(*n.ext, 16);
        if (n.epid) os << " epid=0x" << hexn(*n.epid, 16);
        if (n.pan) os << " pan=0x" << hexn(*n.pan, 4);
        if (n.channel) os << " channel=" << int(*n.channel);
        if (n.update) os << " update=" << int(*n.update);
        if (n.key) os << " key=" << *n.key;
        if (n.short_addr) os << " short=0x" << hexn(*n.short_addr, 4);
        if (n.joined) os << " joined=" << *n.joined;
        if (n.spoof) os << " spoof=" << *n.spoof;
        if (n.master) os << " master=" << *n.master;
        os << "\n";
    }

    os << "\n[script]\n";
    for (const auto& a : s.script) {
        os << "at " << a.at_us << "us " << a.verb;
        for (const auto& [k, v] : a.args) os << " " << k << "=" << v;
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Runner

namespace {

radio::PathLossModel model_for(const Scenario& s) {
    radio::PathLossModel m;
    if (s.path_loss_reference) m.reference_loss_db = *s.path_loss_reference;
    if (s.path_loss_exponent) m.exponent = *s.path_loss_exponent;
    if (s.noise_floor) m.noise_floor_dbm = *s.noise_floor;
    return m;
}

}  // namespace

Run::Run(const Scenario& s) : scenario_(s), sim_(s.seed, model_for(s)) {
    result_.report = "scenario seed=" + std::to_string(s.seed) + "\n";

    // Extended addresses: explicit ones win, the rest fill in from 1 up.
    std::set<uint64_t> used;
    for (const auto& n : scenario_.nodes)
        if (n.ext) used.insert(*n.ext);
    std::map<std::string, uint64_t> ext_of;
    uint64_t next_ext = 1;
    for (const auto& n : scenario_.nodes) {
        if (n.ext) {
            ext_of[n.name] = *n.ext;
            continue;
        }
        while (used.count(next_ext)) ++next_ext;
        ext_of[n.name] = next_ext;
        used.insert(next_ext);
    }

    // Initiator networks resolve first (key=auto draws happen here, in file
    // order) so bulbs with joined= can copy them regardless of declaration
    // order.
    std::map<std::string, devices::NetworkParams> nets;
    int idx = 0;
    for (const auto& n : scenario_.nodes) {
        ++idx;
        if (!is_initiator_profile(n.profile)) continue;
        devices::NetworkParams net;
        net.extended_pan_id = n.epid.value_or(ext_of[n.name]);
        net.pan_id = n.pan.value_or(static_cast<uint16_t>(0x1000 + idx));
        net.channel = n.channel.value_or(devices::kDefaultListenChannel);
        net.network_update_id = n.update.value_or(0);
        net.short_addr = n.short_addr.value_or(0x0001);
        if (n.key && *n.key != "auto")
            net.network_key = *crypto::Key128::from_hex(*n.key);
        else
            net.network_key = sim_.rng().next_key();
        nets[n.name] = net;
        initiator_keys_[n.name] = net.network_key;
    }

    // Short addresses for pre-joined bulbs: explicit ones win, the rest
    // count up from 0x0002 per initiator.
    std::map<std::string, std::set<uint16_t>> shorts_taken;
    for (const auto& n : scenario_.nodes)
        if (n.joined && n.short_addr) shorts_taken[*n.joined].insert(*n.short_addr);
    std::map<std::string, uint16_t> next_short;
    std::map<std::string, uint16_t> bulb_short;
    for (const auto& n : scenario_.nodes) {
        if (!n.joined) continue;
        if (n.short_addr) {
            bulb_short[n.name] = *n.short_addr;
            continue;
        }
        uint16_t& cursor = next_short.try_emplace(*n.joined, 0x0002).first->second;
        auto& taken = shorts_taken[*n.joined];
        while (taken.count(cursor)) ++cursor;
        bulb_short[n.name] = cursor;
        taken.insert(cursor++);
    }

    for (const auto& n : scenario_.nodes) {
        uint64_t ext = ext_of[n.name];
        if (n.profile == "attacker") {
            auto& node = sim_.add_attacker(n.name, ext, n.x, n.y, n.tx_power.value_or(26.0));
            node.attacker_channel = n.channel.value_or(devices::kDefaultListenChannel);
            AttackerMemory mem;
            if (n.spoof) {
                auto it = ext_of.find(*n.spoof);
                mem.cfg.spoof_extended_src =
                    it != ext_of.end() ? it->second : parse_hex(*n.spoof).value_or(0);
            }
            if (n.master) {
                mem.cfg.master_key = *n.master == "scenario"
                                         ? scenario_.master_key
                                         : *crypto::Key128::from_hex(*n.master);
            }
            attackers_[n.name] = std::move(mem);
        } else if (is_initiator_profile(n.profile)) {
            devices::InitiatorState st;
            st.profile = devices::find_profile(n.profile);
            st.extended_addr = ext;
            st.master_key = scenario_.master_key;
            st.net = nets[n.name];
            st.listen_channel = st.net->channel;
            uint16_t high = st.net->short_addr;
            for (const auto& b : scenario_.nodes)
                if (b.joined && *b.joined == n.name) high = std::max(high, bulb_short[b.name]);
            st.next_assigned_short = std::max<uint16_t>(0x0002, high + 1);
            sim_.add_initiator(n.name, std::move(st), n.x, n.y, n.tx_power.value_or(0.0));
        } else {
            devices::EndDeviceState st;
            st.profile = devices::find_profile(n.profile);
            st.extended_addr = ext;
            st.master_key = scenario_.master_key;
            st.listen_channel = n.channel.value_or(devices::kDefaultListenChannel);
            if (n.joined) {
                st.factory_new = false;
                st.net = nets[*n.joined];
                st.net->short_addr = bulb_short[n.name];
            }
            sim_.add_end_device(n.name, std::move(st), n.x, n.y, n.tx_power.value_or(0.0));
        }
    }
}

std::optional<uint64_t> Run::resolve_ext(const std::string& ref) const {
    if (const airsim::Node* n = sim_.find(ref)) return n->extended_addr();
    return parse_hex(ref);
}

void Run::store_scan(const std::string& attacker,
                     const std::vector<attacks::DiscoveredDevice>& found) {
    auto& mem = attackers_[attacker];
    for (const auto& d : found) mem.discovered[d.extended_addr] = d;  // newest wins
}

const attacks::DiscoveredDevice* Run::require_target(const std::string& attacker,
                                                     const std::string& ref) {
    auto ext = resolve_ext(ref);
    if (!ext) return nullptr;
    auto& mem = attackers_[attacker];
    auto it = mem.discovered.find(*ext);
    if (it == mem.discovered.end() || sim_.now() >= it->second.ctx.expires_at) {
        // No live transaction with this device: sweep for one.
        store_scan(attacker, attacks::active_scan(sim_, attacker, mem.cfg));
        it = mem.discovered.find(*ext);
    }
    return it == mem.discovered.end() ? nullptr : &it->second;
}

void Run::note_expectation(bool passed, const std::string& text) {
    if (passed) {
        result_.report += "EXPECT OK " + text + "\n";
        return;
    }
    result_.report += "EXPECT FAIL " + text + "\n";
    ++result_.expectations_failed;
    if (result_.first_failure.empty()) result_.first_failure = text;
}

bool Run::perform(const Action& action) {
    if (action.at_us > sim_.now()) sim_.run_until(action.at_us);

    std::string args_text;
    for (const auto& [k, v] : action.args) args_text += " " + k + "=" + v;
    result_.report += "-- t=" + fmt_time(sim_.now()) + " " + action.verb + args_text + "\n";
    result_.states += "== t=" + fmt_time(sim_.now()) + " before action=" + action.verb +
                      " line=" + std::to_string(action.line) + "\n" + sim_.snapshot();

    auto fail = [&](const std::string& msg) {
        result_.report += "ERROR " + msg + "\n";
        last_result_ = "error";
        result_.states += "== t=" + fmt_time(sim_.now()) + " after action=" + action.verb +
                          " line=" + std::to_string(action.line) + "\n" + sim_.snapshot();
        return false;
    };
    auto arg = [&](std::string_view key) { return find_arg(action, key); };
    auto node_arg = [&]() -> airsim::Node* {
        const std::string* name = arg("node");
        return name ? sim_.find(*name) : nullptr;
    };
    auto finish_outcome = [&](attacks::Outcome o) {
        last_result_ = attacks::verdict_name(o.verdict);
        result_.report += attacks::report_text(o);
        last_outcome_ = std::move(o);
    };
    auto attack_setup = [&](airsim::Node*& nd, const attacks::DiscoveredDevice*& target,
                            std::string& err) {
        nd = node_arg();
        if (!nd || nd->kind != airsim::NodeKind::Attacker) {
            err = "attack verbs need node=<attacker>";
            return false;
        }
        const std::string* ref = arg("target");
        if (!ref) {
            err = action.verb + " requires target=";
            return false;
        }
        target = require_target(nd->name, *ref);
        if (!target) {
            attacks::Outcome o;
            o.attack = action.verb;
            o.verdict = Verdict::NoDeviceFound;
            o.target_extended = resolve_ext(*ref).value_or(0);
            o.detail = "target never answered a scan";
            finish_outcome(std::move(o));
        }
        return true;
    };

    bool ok = true;
    const std::string* a = nullptr;

    if (action.verb == "press_button") {
        airsim::Node* nd = node_arg();
        if (!nd || !nd->initiator) return fail("press_button needs node=<initiator>");
        devices::press_button(*nd->initiator, sim_.now());
        result_.report += "button pressed\n";
        last_result_ = "ok";
    } else if (action.verb == "join") {
        airsim::Node* nd = node_arg();
        if (!nd || !nd->initiator) return fail("join needs node=<initiator>");
        std::optional<uint64_t> target;
        if ((a = arg("target"))) {
            target = resolve_ext(*a);
            if (!target) return fail("unknown join target '" + *a + "'");
        }
        uint8_t key_index = wire::kMasterKeyIndex;
        if ((a = arg("key_index"))) {
            auto v = parse_dec(*a);
            if (!v || *v > 255) return fail("bad key_index");
            key_index = static_cast<uint8_t>(*v);
        }
        auto rep = procedures::run_touchlink_join(sim_, nd->name, target, key_index);
        std::ostringstream os;
        os << "join result=" << procedures::join_result_name(rep.result) << " target=0x"
           << hexn(rep.target_extended, 16) << " assigned_short=0x" << hexn(rep.assigned_short, 4)
           << " transaction=0x" << hexn(rep.transaction_id, 8) << "\n";
        for (const auto& step : rep.exchange) os << "  " << step << "\n";
        result_.report += os.str();
        last_result_ = procedures::join_result_name(rep.result);
        ok = rep.result == procedures::JoinResult::Success;
    } else if (action.verb == "scan") {
        airsim::Node* nd = node_arg();
        if (!nd || nd->kind != airsim::NodeKind::Attacker)
            return fail("scan needs node=<attacker>");
        std::optional<uint8_t> only;
        if ((a = arg("channel"))) {
            auto v = parse_dec(*a);
            if (!v || *v > 255) return fail("bad channel");
            only = static_cast<uint8_t>(*v);
        }
        auto found = attacks::active_scan(sim_, nd->name, attackers_[nd->name].cfg, only);
        store_scan(nd->name, found);
        std::ostringstream os;
        os << "scan found=" << found.size() << "\n";
        for (const auto& d : found) {
            char rssi[16];
            std::snprintf(rssi, sizeof rssi, "%.1f", d.rssi_dbm);
            os << "  device ext=0x" << hexn(d.extended_addr, 16) << " channel=" << int(d.channel)
               << " rssi=" << rssi << " factory_new=" << int(d.scan_response.factory_new)
               << " ack_requested=" << int(d.ack_requested)
               << " ack_observed=" << int(d.ack_observed) << "\n";
        }
        result_.report += os.str();
        last_result_ = "found:" + std::to_string(found.size());
        ok = !found.empty();
    } else if (action.verb == "blink") {
        airsim::Node* nd = nullptr;
        const attacks::DiscoveredDevice* target = nullptr;
        std::string err;
        if (!attack_setup(nd, target, err)) return fail(err);
        if (target) {
            uint64_t duration = 0xFFFE;
            if ((a = arg("duration"))) {
                auto v = parse_any(*a);
                if (!v || *v > 0xFFFF) return fail("bad duration");
                duration = *v;
            }
            finish_outcome(attacks::blink_attack(sim_, nd->name, attackers_[nd->name].cfg,
                                                 *target, static_cast<uint16_t>(duration)));
        }
        ok = last_outcome_ && last_outcome_->verdict == Verdict::Success;
    } else if (action.verb == "reset") {
        airsim::Node* nd = nullptr;
        const attacks::DiscoveredDevice* target = nullptr;
        std::string err;
        if (!attack_setup(nd, target, err)) return fail(err);
        if (target)
            finish_outcome(attacks::reset_attack(sim_, nd->name, attackers_[nd->name].cfg,
                                                 *target));
        ok = last_outcome_ && last_outcome_->verdict == Verdict::Success;
    } else if (action.verb == "dos_channel") {
        airsim::Node* nd = nullptr;
        const attacks::DiscoveredDevice* target = nullptr;
        std::string err;
        if (!attack_setup(nd, target, err)) return fail(err);
        if (target) {
            a = arg("channel");
            if (!a) return fail("dos_channel requires channel=");
            auto ch = parse_dec(*a);
            if (!ch || *ch > 255) return fail("bad channel");
            std::optional<uint8_t> update;
            if ((a = arg("update"))) {
                auto v = parse_dec(*a);
                if (!v || *v > 255) return fail("bad update");
                update = static_cast<uint8_t>(*v);
            }
            finish_outcome(attacks::dos_channel_change(sim_, nd->name, attackers_[nd->name].cfg,
                                                       *target, static_cast<uint8_t>(*ch),
                                                       update));
        }
        ok = last_outcome_ && last_outcome_->verdict == Verdict::Success;
    } else if (action.verb == "dos_join") {
        airsim::Node* nd = nullptr;
        const attacks::DiscoveredDevice* target = nullptr;
        std::string err;
        if (!attack_setup(nd, target, err)) return fail(err);
        if (target)
            finish_outcome(attacks::dos_join_phantom(sim_, nd->name, attackers_[nd->name].cfg,
                                                     *target));
        ok = last_outcome_ && last_outcome_->verdict == Verdict::Success;
    } else if (action.verb == "hijack") {
        airsim::Node* nd = nullptr;
        const attacks::DiscoveredDevice* target = nullptr;
        std::string err;
        if (!attack_setup(nd, target, err)) return fail(err);
        if (target) {
            attacks::HijackParams params;
            if ((a = arg("epid"))) {
                auto v = parse_hex(*a);
                if (!v) return fail("bad epid");
                params.extended_pan_id = *v;
            }
            if ((a = arg("pan"))) {
                auto v = parse_hex(*a);
                if (!v || *v > 0xFFFF) return fail("bad pan");
                params.pan_id = static_cast<uint16_t>(*v);
            }
            if ((a = arg("channel"))) {
                auto v = parse_dec(*a);
                if (!v || *v > 255) return fail("bad channel");
                params.channel = static_cast<uint8_t>(*v);
            }
            if ((a = arg("short"))) {
                auto v = parse_hex(*a);
                if (!v || *v > 0xFFFF) return fail("bad short");
                params.short_addr = static_cast<uint16_t>(*v);
            }
            if ((a = arg("update"))) {
                auto v = parse_dec(*a);
                if (!v || *v > 255) return fail("bad update");
                params.network_update_id = static_cast<uint8_t>(*v);
            }
            if ((a = arg("key"))) {
                auto k = crypto::Key128::from_hex(*a);
                if (!k) return fail("bad key");
                params.network_key = *k;
            }
            attacks::AttackerConfig cfg = attackers_[nd->name].cfg;
            if ((a = arg("master"))) {
                auto k = crypto::Key128::from_hex(*a);
                if (!k) return fail("bad master key");
                cfg.master_key = *k;
            }
            finish_outcome(attacks::hijack(sim_, nd->name, cfg, *target, params));
        }
        ok = last_outcome_ && last_outcome_->verdict == Verdict::Success;
    } else if (action.verb == "extract_key") {
        airsim::Node* nd = node_arg();
        if (!nd || nd->kind != airsim::NodeKind::Attacker)
            return fail("extract_key needs node=<attacker>");
        auto& mem = attackers_[nd->name];
        crypto::Key128 master = scenario_.master_key;
        if (mem.cfg.master_key) master = *mem.cfg.master_key;
        if ((a = arg("master"))) {
            auto k = crypto::Key128::from_hex(*a);
            if (!k) return fail("bad master key");
            master = *k;
        }
        auto r = attacks::extract_network_key(nd->inbox, master);
        std::ostringstream os;
        os << "extract verdict=" << attacks::verdict_name(r.verdict) << " transaction=0x"
           << hexn(r.transaction_id, 8) << " target=0x" << hexn(r.target_extended, 16)
           << " key=" << (r.network_key ? r.network_key->to_hex() : "-") << "\n";
        result_.report += os.str();
        if (r.network_key) mem.extracted_key = r.network_key;
        last_result_ = attacks::verdict_name(r.verdict);
        last_extraction_ = std::move(r);
        ok = last_extraction_->verdict == Verdict::Success;
    } else if (action.verb == "inject") {
        airsim::Node* nd = node_arg();
        if (!nd || nd->kind != airsim::NodeKind::Attacker)
            return fail("inject needs node=<attacker>");
        a = arg("key");
        if (!a) return fail("inject requires key=");
        std::optional<crypto::Key128> key;
        if (*a == "extracted") {
            key = attackers_[nd->name].extracted_key;
            if (!key) {
                attacks::Outcome o;
                o.attack = "inject";
                o.verdict = Verdict::Rejected;
                o.detail = "no extracted key available";
                finish_outcome(std::move(o));
                result_.states += "== t=" + fmt_time(sim_.now()) +
                                  " after action=" + action.verb +
                                  " line=" + std::to_string(action.line) + "\n" + sim_.snapshot();
                return false;
            }
        } else if (a->starts_with("net:")) {
            auto it = initiator_keys_.find(a->substr(4));
            if (it == initiator_keys_.end()) return fail("key=net: names no initiator");
            key = it->second;
        } else {
            key = crypto::Key128::from_hex(*a);
            if (!key) return fail("bad key");
        }
        auto need_hex = [&](std::string_view name, uint64_t max) -> std::optional<uint64_t> {
            const std::string* v = find_arg(action, name);
            if (!v) return std::nullopt;
            auto n = parse_hex(*v);
            if (!n || *n > max) return std::nullopt;
            return n;
        };
        auto pan = need_hex("pan", 0xFFFF);
        auto dst = need_hex("dst", 0xFFFF);
        if (!pan || !dst) return fail("inject requires pan= and dst= (hex)");
        a = arg("channel");
        auto ch = a ? parse_dec(*a) : std::nullopt;
        if (!ch || *ch > 255) return fail("inject requires channel=");
        a = arg("counter");
        auto counter = a ? parse_dec(*a) : std::nullopt;
        if (!counter || *counter > 0xFFFFFFFF) return fail("inject requires counter=");
        a = arg("command");
        auto cmd = a ? parse_command(*a) : std::nullopt;
        if (!cmd) return fail("inject requires command=on|off|level:<n>|color:<n>");
        uint16_t src = 0x00AA;
        if ((a = arg("src"))) {
            auto v = parse_hex(*a);
            if (!v || *v > 0xFFFF) return fail("bad src");
            src = static_cast<uint16_t>(*v);
        }
        finish_outcome(attacks::inject_command(
            sim_, nd->name, *key, static_cast<uint16_t>(*pan), static_cast<uint8_t>(*ch), *cmd,
            static_cast<uint16_t>(*dst), static_cast<uint32_t>(*counter), src));
        ok = last_outcome_ && last_outcome_->verdict == Verdict::Success;
    } else if (action.verb == "user_command") {
        airsim::Node* nd = node_arg();
        if (!nd || !nd->initiator) return fail("user_command needs node=<initiator>");
        a = arg("command");
        auto cmd = a ? parse_command(*a) : std::nullopt;
        if (!cmd) return fail("user_command requires command=on|off|level:<n>|color:<n>");
        uint16_t dst = wire::kBroadcastShortAddr;
        if ((a = arg("dst"))) {
            auto v = parse_hex(*a);
            if (!v || *v > 0xFFFF) return fail("bad dst");
            dst = static_cast<uint16_t>(*v);
        }
        bool sent = procedures::send_user_command(sim_, nd->name, *cmd, dst);
        result_.report += std::string("user_command delivered=") + (sent ? "1" : "0") + "\n";
        last_result_ = sent ? "ok" : "not_networked";
        ok = sent;
    } else if (action.verb == "recover") {
        airsim::Node* nd = node_arg();
        if (!nd || !nd->initiator) return fail("recover needs node=<initiator>");
        a = arg("target");
        auto target = a ? resolve_ext(*a) : std::nullopt;
        if (!target) return fail("recover requires target=");
        auto rep = procedures::bridge_touchlink_recovery(sim_, nd->name, *target);
        std::ostringstream os;
        os << "recovery found=" << int(rep.found) << " switched=" << int(rep.switched)
           << " channel=" << int(rep.channel) << " update=" << int(rep.update_id) << "\n";
        result_.report += os.str();
        last_result_ = rep.switched ? "switched" : (rep.found ? "found" : "lost");
    } else if (action.verb == "physical_reset") {
        airsim::Node* nd = node_arg();
        if (!nd || !nd->end_device) return fail("physical_reset needs node=<bulb>");
        bool supported = devices::physical_reset(*nd->end_device);
        result_.report += std::string("physical_reset supported=") + (supported ? "1" : "0") +
                          "\n";
        last_result_ = supported ? "ok" : "unsupported";
        ok = supported;
    } else if (action.verb == "advance") {
        result_.report += "time advanced\n";
        last_result_ = "ok";
    } else if (action.verb == "move") {
        airsim::Node* nd = node_arg();
        if (!nd) return fail("move needs node=");
        a = arg("pos");
        auto xy = a ? parse_pos(*a) : std::nullopt;
        if (!xy) return fail("move requires pos=<x>,<y>");
        nd->x = xy->first;
        nd->y = xy->second;
        result_.report += "moved to " + fmt_double(nd->x) + "," + fmt_double(nd->y) + "\n";
        last_result_ = "ok";
    } else if (action.verb == "expect") {
        if ((a = arg("last"))) {
            note_expectation(last_result_ == *a,
                             "last=" + *a + " got=" + (last_result_.empty() ? "-" : last_result_));
        } else {
            const std::string* node = arg("node");
            const std::string* field = arg("field");
            const std::string* value = arg("value");
            if (!node || !field || !value)
                return fail("expect takes last=<result> or node=/field=/value=");
            airsim::Node* nd = sim_.find(*node);
            if (!nd) return fail("no node named '" + *node + "'");
            std::string line = airsim::node_snapshot_line(*nd);
            std::string actual = "-";
            std::string prefix = *field + "=";
            for (const auto& tok : tokenize(line)) {
                if (tok.text.rfind(prefix, 0) == 0) {
                    actual = tok.text.substr(prefix.size());
                    break;
                }
            }
            note_expectation(actual == *value, "node=" + *node + " field=" + *field +
                                                   " value=" + *value + " got=" + actual);
        }
    } else {
        return fail("unknown verb '" + action.verb + "'");
    }

    result_.states += "== t=" + fmt_time(sim_.now()) + " after action=" + action.verb +
                      " line=" + std::to_string(action.line) + "\n" + sim_.snapshot();
    return ok;
}

void Run::run_script() {
    for (const auto& action : scenario_.script) perform(action);
}

RunResult Run::finish() {
    result_.events_log = sim_.log_text();
    result_.final_snapshot = sim_.snapshot();
    result_.states += "== t=" + fmt_time(sim_.now()) + " final\n" + result_.final_snapshot;
    for (const auto& n : sim_.nodes()) {
        if (n.kind != airsim::NodeKind::Attacker) continue;
        result_.capture +=
            "capture node=" + n.name + " frames=" + std::to_string(n.inbox.size()) + "\n";
        for (const auto& f : n.inbox) {
            char rssi[16];
            std::snprintf(rssi, sizeof rssi, "%.1f", f.rssi_dbm);
            result_.capture += "at=" + fmt_time(f.at_us) + " ch=" + std::to_string(f.channel) +
                               " rssi=" + rssi + " from=" + f.from +
                               " frame=" + wire::frame_name(f.frame) +
                               " raw=" + wire::to_hex(f.raw) + "\n";
        }
    }
    result_.expectations_ok = result_.expectations_failed == 0;
    return std::move(result_);
}

RunResult run_scenario(const Scenario& s) {
    Run run(s);
    run.run_script();
    return run.finish();
}

}  // namespace touchlink::scenario
