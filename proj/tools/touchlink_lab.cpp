// touchlink-lab: scenario runner and attack console for the touchlink
// simulator. `run` executes a scenario script end to end; the per-attack
// subcommands execute the scripted setup first, then fire one attack built
// from command-line flags.
//
// Exit codes: 0 success, 1 usage/parse/validation error, 2 the attack or a
// scripted expectation failed.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "touchlink/crypto.hpp"
#include "touchlink/scenario.hpp"

namespace fs = std::filesystem;
using namespace touchlink;

namespace {

struct Common {
    std::string scenario_path;
    std::string out_dir = ".";
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--scenario", c.scenario_path, "scenario file to load")
        ->required()
        ->type_name("FILE");
    sub->add_option("--out", c.out_dir, "directory for events.log/states.txt/report.txt/capture.txt")
        ->envname("TOUCHLINK_LAB_OUT")
        ->type_name("DIR");
    sub->add_option("--seed", c.seed, "override the scenario's RNG seed");
}

bool valid_hex(const std::string& s, size_t max_digits) {
    std::string_view v = s;
    if (v.starts_with("0x") || v.starts_with("0X")) v.remove_prefix(2);
    if (v.empty() || v.size() > max_digits) return false;
    return v.find_first_not_of("0123456789abcdefABCDEF") == std::string_view::npos;
}

bool valid_command(const std::string& s) {
    return s == "on" || s == "off" || s.rfind("level:", 0) == 0 || s.rfind("color:", 0) == 0;
}

// Loads and validates the scenario; prints issues to stderr on failure.
std::optional<scenario::Scenario> load(const Common& c) {
    std::ifstream in(c.scenario_path);
    if (!in) {
        std::cerr << "cannot open scenario file '" << c.scenario_path << "'\n";
        return std::nullopt;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    auto parsed = scenario::parse_scenario(ss.str());
    if (!parsed.ok()) {
        for (const auto& issue : parsed.issues) std::cerr << scenario::issue_text(issue) << "\n";
        return std::nullopt;
    }
    scenario::Scenario sc = std::move(*parsed.scenario);
    if (c.seed) sc.seed = *c.seed;
    return sc;
}

bool write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    return bool(out);
}

bool write_artifacts(const Common& c, const scenario::RunResult& r) {
    std::error_code ec;
    fs::create_directories(c.out_dir, ec);
    fs::path dir = c.out_dir;
    if (!write_file(dir / "events.log", r.events_log) ||
        !write_file(dir / "states.txt", r.states) ||
        !write_file(dir / "report.txt", r.report) ||
        !write_file(dir / "capture.txt", r.capture)) {
        std::cerr << "cannot write artifacts under '" << c.out_dir << "'\n";
        return false;
    }
    return true;
}

// The report block of the most recent action (the one the CLI synthesized).
std::string last_report_block(const std::string& report) {
    size_t pos = report.rfind("\n-- t=");
    return pos == std::string::npos ? report : report.substr(pos + 1);
}

const scenario::NodeSpec* find_attacker(const scenario::Scenario& sc, const std::string& name) {
    for (const auto& n : sc.nodes) {
        if (n.profile != "attacker") continue;
        if (name.empty() || n.name == name) return &n;
    }
    return nullptr;
}

struct AttackFlags {
    std::string attacker;
    std::string target;
    std::string duration = "0xFFFE";
    std::optional<int> channel;
    std::optional<int> update;
    std::string key;
    std::string master;
    std::string epid;
    std::string pan;
    std::string short_addr;
    std::string dst;
    std::string src;
    std::optional<uint32_t> counter;
    std::string command;
};

// Runs scripted setup, then one synthesized action. Returns the exit code.
int run_attack(const Common& c, const std::string& verb,
               std::vector<std::pair<std::string, std::string>> args,
               const std::string& attacker_flag) {
    auto sc = load(c);
    if (!sc) return 1;
    const scenario::NodeSpec* attacker = find_attacker(*sc, attacker_flag);
    if (!attacker) {
        std::cerr << (attacker_flag.empty()
                          ? "the scenario declares no attacker node"
                          : "no attacker node named '" + attacker_flag + "' in the scenario")
                  << "\n";
        return 1;
    }
    if (verb == "hijack") {
        bool has_master = attacker->master.has_value();
        for (const auto& [k, v] : args) has_master |= (k == "master");
        if (!has_master) {
            std::cerr << "hijack needs the master key: give the attacker node master=... in the "
                         "scenario or pass --master\n";
            return 1;
        }
    }

    scenario::Run run(*sc);
    run.run_script();

    scenario::Action action;
    action.at_us = run.sim().now();
    action.verb = verb;
    action.args.emplace_back("node", attacker->name);
    for (auto& kv : args) action.args.push_back(std::move(kv));

    bool ok = run.perform(action);
    scenario::RunResult result = run.finish();
    std::cout << last_report_block(result.report);
    if (!write_artifacts(c, result)) return 1;
    return ok ? 0 : 2;
}

int run_scenario_file(const Common& c) {
    auto sc = load(c);
    if (!sc) return 1;
    scenario::RunResult result = scenario::run_scenario(*sc);
    if (!write_artifacts(c, result)) return 1;
    if (!result.expectations_ok) {
        std::cerr << "expectation failed: " << result.first_failure << "\n";
        std::cout << "expectations failed: " << result.expectations_failed << "\n";
        return 2;
    }
    std::cout << "expectations: all passed\n";
    return 0;
}

// Resolves --master: "scenario" means the scenario file's key.
bool resolve_master(const scenario::Scenario& sc, std::string& master) {
    if (master == "scenario") {
        master = sc.master_key.to_hex();
        return true;
    }
    return crypto::Key128::from_hex(master).has_value();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"touchlink commissioning simulator and attack console"};
    app.require_subcommand(1);
    int rc = 0;

    Common run_c;
    CLI::App* cmd_run = app.add_subcommand("run", "execute a scenario script end to end");
    add_common(cmd_run, run_c);
    cmd_run->callback([&] { rc = run_scenario_file(run_c); });

    struct Sub {
        Common common;
        AttackFlags f;
    };
    auto subs = std::make_shared<std::vector<std::unique_ptr<Sub>>>();
    auto make_sub = [&](const std::string& name, const std::string& help) {
        CLI::App* cmd = app.add_subcommand(name, help);
        subs->push_back(std::make_unique<Sub>());
        Sub* s = subs->back().get();
        add_common(cmd, s->common);
        cmd->add_option("--attacker", s->f.attacker,
                        "attacker node to act as (default: first in the scenario)");
        return std::pair{cmd, s};
    };

    {
        auto [cmd, s] = make_sub("scan", "sweep the band for touchlink devices");
        cmd->add_option("--channel", s->f.channel, "scan a single channel")
            ->check(CLI::Range(0, 255));
        cmd->callback([&rc, s] {
            std::vector<std::pair<std::string, std::string>> args;
            if (s->f.channel) args.emplace_back("channel", std::to_string(*s->f.channel));
            rc = run_attack(s->common, "scan", std::move(args), s->f.attacker);
        });
    }
    {
        auto [cmd, s] = make_sub("blink", "lock the target's identify effect on");
        cmd->add_option("--target", s->f.target, "node name or hex extended address")->required();
        cmd->add_option("--duration", s->f.duration, "seconds, decimal or 0x-hex (default 0xFFFE)");
        cmd->callback([&rc, s] {
            if (!valid_hex(s->f.duration, 16) && s->f.duration.find_first_not_of("0123456789") !=
                                                     std::string::npos) {
                std::cerr << "--duration must be a decimal or 0x-hex number\n";
                rc = 1;
                return;
            }
            rc = run_attack(s->common, "blink",
                            {{"target", s->f.target}, {"duration", s->f.duration}},
                            s->f.attacker);
        });
    }
    {
        auto [cmd, s] = make_sub("reset", "wipe the target back to factory new");
        cmd->add_option("--target", s->f.target, "node name or hex extended address")->required();
        cmd->callback([&rc, s] {
            rc = run_attack(s->common, "reset", {{"target", s->f.target}}, s->f.attacker);
        });
    }
    {
        auto [cmd, s] = make_sub("dos-channel", "move the target to another channel");
        cmd->add_option("--target", s->f.target, "node name or hex extended address")->required();
        cmd->add_option("--channel", s->f.channel, "channel to move the target to")
            ->required()
            ->check(CLI::Range(0, 255));
        cmd->add_option("--update", s->f.update, "network update id to claim")
            ->check(CLI::Range(0, 255));
        cmd->callback([&rc, s] {
            std::vector<std::pair<std::string, std::string>> args = {
                {"target", s->f.target}, {"channel", std::to_string(*s->f.channel)}};
            if (s->f.update) args.emplace_back("update", std::to_string(*s->f.update));
            rc = run_attack(s->common, "dos_channel", std::move(args), s->f.attacker);
        });
    }
    {
        auto [cmd, s] = make_sub("dos-join", "join the target to a phantom network");
        cmd->add_option("--target", s->f.target, "node name or hex extended address")->required();
        cmd->callback([&rc, s] {
            rc = run_attack(s->common, "dos_join", {{"target", s->f.target}}, s->f.attacker);
        });
    }
    {
        auto [cmd, s] = make_sub("hijack", "take the target onto an attacker network");
        cmd->add_option("--target", s->f.target, "node name or hex extended address")->required();
        cmd->add_option("--key", s->f.key, "network key to plant (32 hex digits)");
        cmd->add_option("--channel", s->f.channel, "channel for the rogue network")
            ->check(CLI::Range(0, 255));
        cmd->add_option("--pan", s->f.pan, "PAN id for the rogue network (hex)");
        cmd->add_option("--epid", s->f.epid, "extended PAN id for the rogue network (hex)");
        cmd->add_option("--short", s->f.short_addr, "short address to assign (hex)");
        cmd->add_option("--update", s->f.update, "network update id to claim")
            ->check(CLI::Range(0, 255));
        cmd->add_option("--master", s->f.master, "master key (32 hex digits, or \"scenario\")");
        cmd->callback([&rc, s] {
            auto sc = load(s->common);
            if (!sc) {
                rc = 1;
                return;
            }
            std::vector<std::pair<std::string, std::string>> args = {{"target", s->f.target}};
            if (!s->f.key.empty()) {
                if (!crypto::Key128::from_hex(s->f.key)) {
                    std::cerr << "--key must be 32 hex digits\n";
                    rc = 1;
                    return;
                }
                args.emplace_back("key", s->f.key);
            }
            if (s->f.channel) args.emplace_back("channel", std::to_string(*s->f.channel));
            if (s->f.update) args.emplace_back("update", std::to_string(*s->f.update));
            for (auto [name, value] :
                 {std::pair{"pan", &s->f.pan}, {"epid", &s->f.epid}, {"short", &s->f.short_addr}}) {
                if (value->empty()) continue;
                if (!valid_hex(*value, 16)) {
                    std::cerr << "--" << name << " must be a hex number\n";
                    rc = 1;
                    return;
                }
                args.emplace_back(name, *value);
            }
            if (!s->f.master.empty()) {
                if (!resolve_master(*sc, s->f.master)) {
                    std::cerr << "--master must be 32 hex digits or \"scenario\"\n";
                    rc = 1;
                    return;
                }
                args.emplace_back("master", s->f.master);
            }
            rc = run_attack(s->common, "hijack", std::move(args), s->f.attacker);
        });
    }
    {
        auto [cmd, s] = make_sub("extract-key", "recover a network key from the sniffer capture");
        cmd->add_option("--master", s->f.master, "master key (32 hex digits, or \"scenario\")");
        cmd->callback([&rc, s] {
            std::vector<std::pair<std::string, std::string>> args;
            if (!s->f.master.empty()) {
                auto sc = load(s->common);
                if (!sc) {
                    rc = 1;
                    return;
                }
                if (!resolve_master(*sc, s->f.master)) {
                    std::cerr << "--master must be 32 hex digits or \"scenario\"\n";
                    rc = 1;
                    return;
                }
                args.emplace_back("master", s->f.master);
            }
            rc = run_attack(s->common, "extract_key", std::move(args), s->f.attacker);
        });
    }
    {
        auto [cmd, s] = make_sub("inject", "send one secured command on an arbitrary network");
        cmd->add_option("--key", s->f.key,
                        "network key: 32 hex digits, \"extracted\", or net:<initiator>")
            ->required();
        cmd->add_option("--pan", s->f.pan, "PAN id (hex)")->required();
        cmd->add_option("--channel", s->f.channel, "channel to transmit on")
            ->required()
            ->check(CLI::Range(0, 255));
        cmd->add_option("--dst", s->f.dst, "destination short address (hex)")->required();
        cmd->add_option("--counter", s->f.counter, "frame counter to claim")->required();
        cmd->add_option("--command", s->f.command, "on | off | level:<n> | color:<n>")
            ->required();
        cmd->add_option("--src", s->f.src, "source short address (hex)");
        cmd->callback([&rc, s] {
            bool key_ok = s->f.key == "extracted" || s->f.key.rfind("net:", 0) == 0 ||
                          crypto::Key128::from_hex(s->f.key).has_value();
            if (!key_ok) {
                std::cerr << "--key must be 32 hex digits, \"extracted\", or net:<initiator>\n";
                rc = 1;
                return;
            }
            if (!valid_hex(s->f.pan, 4) || !valid_hex(s->f.dst, 4) ||
                (!s->f.src.empty() && !valid_hex(s->f.src, 4))) {
                std::cerr << "--pan/--dst/--src must be hex short values\n";
                rc = 1;
                return;
            }
            if (!valid_command(s->f.command)) {
                std::cerr << "--command must be on, off, level:<n>, or color:<n>\n";
                rc = 1;
                return;
            }
            std::vector<std::pair<std::string, std::string>> args = {
                {"key", s->f.key},
                {"pan", s->f.pan},
                {"channel", std::to_string(*s->f.channel)},
                {"dst", s->f.dst},
                {"counter", std::to_string(*s->f.counter)},
                {"command", s->f.command}};
            if (!s->f.src.empty()) args.emplace_back("src", s->f.src);
            rc = run_attack(s->common, "inject", std::move(args), s->f.attacker);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return rc;
}
