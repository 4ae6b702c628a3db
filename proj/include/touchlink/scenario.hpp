#ifndef TOUCHLINK_SCENARIO_HPP
#define TOUCHLINK_SCENARIO_HPP

// Scenario files: a line-oriented text format describing a deployment (the
// [nodes] section) and a timed script of actions ([script]), plus the engine
// that executes one against the radio simulator and collects artifacts. The
// format is specified normatively in docs/scenario-format.md.

#include "touchlink/airsim.hpp"
#include "touchlink/attacks.hpp"
#include "touchlink/crypto.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace touchlink::scenario {

// Master key scenarios fall back to when the file does not set one. A
// stand-in, not any real vendor secret; supply your own via `master_key=`.
inline constexpr std::string_view kDefaultMasterKeyHex = "00112233445566778899aabbccddeeff";

struct Issue {
    enum class Kind : uint8_t { Parse, Validation };
    Kind kind = Kind::Parse;
    int line = 0;    // 1-based; 0 = whole file
    int column = 0;  // 1-based; 0 = whole line
    std::string field;
    std::string message;
};

std::string issue_text(const Issue& issue);

// One node declaration. Optional fields keep "not written in the file"
// distinguishable from defaults so serialization round-trips exactly.
struct NodeSpec {
    std::string name;
    std::string profile;  // vendor profile name, or "attacker"
    double x = 0.0;
    double y = 0.0;
    std::optional<double> tx_power;  // dBm; defaults: devices 0, attackers 26
    std::optional<uint64_t> ext;     // auto-assigned when omitted

    // Network block (initiators; also an attacker's listen channel).
    std::optional<uint64_t> epid;
    std::optional<uint16_t> pan;
    std::optional<uint8_t> channel;
    std::optional<uint8_t> update;
    std::optional<std::string> key;  // "auto" or 32 hex digits
    std::optional<uint16_t> short_addr;

    std::optional<std::string> joined;  // bulbs: initiator whose network they start on
    std::optional<std::string> spoof;   // attackers: node name or 16-hex address
    std::optional<std::string> master;  // attackers: "scenario" or 32 hex digits

    bool operator==(const NodeSpec&) const = default;
};

struct Action {
    uint64_t at_us = 0;
    std::string verb;
    std::vector<std::pair<std::string, std::string>> args;  // file order preserved
    int line = 0;

    // Line number is incidental to identity: round-trip equality must hold
    // even though serialization renumbers lines.
    bool operator==(const Action& other) const {
        return at_us == other.at_us && verb == other.verb && args == other.args;
    }
};

struct Scenario {
    uint64_t seed = 1;
    crypto::Key128 master_key{};  // parse fills in the default when unset
    std::optional<double> path_loss_reference;
    std::optional<double> path_loss_exponent;
    std::optional<double> noise_floor;
    std::vector<NodeSpec> nodes;
    std::vector<Action> script;

    bool operator==(const Scenario&) const = default;
};

struct ParseResult {
    std::optional<Scenario> scenario;  // set iff issues is empty
    std::vector<Issue> issues;

    bool ok() const { return scenario.has_value(); }
};

ParseResult parse_scenario(std::string_view text);

// Inverse of parse: emits a file that parses back to an equal Scenario.
std::string serialize_scenario(const Scenario& s);

// Everything a run leaves behind. The runner never touches the filesystem;
// callers decide where these strings land.
struct RunResult {
    bool expectations_ok = true;
    int expectations_failed = 0;
    std::string first_failure;  // first violated expectation, empty when ok
    std::string events_log;     // simulator event log
    std::string states;         // node snapshots before/after every action
    std::string report;         // per-action outcome report
    std::string capture;        // attacker sniffer captures, hex frames
    std::string final_snapshot;
};

// One scenario bound to a live simulator. The CLI's per-attack subcommands
// run the scripted setup first, then feed a single synthetic action through
// the same perform() the script uses.
class Run {
  public:
    explicit Run(const Scenario& s);

    // Executes every scripted action in order.
    void run_script();

    // Advances to the action's time (when ahead of now) and executes it.
    // Returns false for a malformed action, with the report explaining why.
    bool perform(const Action& action);

    // Outcome of the most recent attack-type action, when there was one.
    const std::optional<attacks::Outcome>& last_outcome() const { return last_outcome_; }
    const std::optional<attacks::ExtractionResult>& last_extraction() const {
        return last_extraction_;
    }

    airsim::Simulator& sim() { return sim_; }

    // Collects the artifacts. Call once, after the last action.
    RunResult finish();

  private:
    struct AttackerMemory {
        attacks::AttackerConfig cfg;
        std::map<uint64_t, attacks::DiscoveredDevice> discovered;  // newest per address
        std::optional<crypto::Key128> extracted_key;
    };

    std::optional<uint64_t> resolve_ext(const std::string& ref) const;
    const attacks::DiscoveredDevice* require_target(const std::string& attacker,
                                                    const std::string& ref);
    void store_scan(const std::string& attacker,
                    const std::vector<attacks::DiscoveredDevice>& found);
    void note_expectation(bool passed, const std::string& text);

    Scenario scenario_;
    airsim::Simulator sim_;
    std::map<std::string, AttackerMemory> attackers_;
    std::map<std::string, crypto::Key128> initiator_keys_;  // resolved network keys
    std::optional<attacks::Outcome> last_outcome_;
    std::optional<attacks::ExtractionResult> last_extraction_;
    std::string last_result_;  // verdict/result name of the latest action
    RunResult result_;
};

// Parses, builds, runs the whole script, and finishes, in one call.
RunResult run_scenario(const Scenario& s);

}  // namespace touchlink::scenario

#endif
