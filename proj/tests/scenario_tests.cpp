#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "touchlink/attacks.hpp"
#include "touchlink/crypto.hpp"
#include "touchlink/scenario.hpp"
#include "touchlink/wire.hpp"

using namespace touchlink;
namespace s = touchlink::scenario;

namespace {

s::Scenario parse_ok(const std::string& text) {
    auto r = s::parse_scenario(text);
    for (const auto& i : r.issues) INFO(s::issue_text(i));
    REQUIRE(r.ok());
    return *r.scenario;
}

// Parses text expected to produce exactly one issue.
s::Issue single_issue(const std::string& text) {
    auto r = s::parse_scenario(text);
    CHECK(!r.ok());
    REQUIRE(r.issues.size() == 1);
    return r.issues.front();
}

}  // namespace

TEST_CASE("empty scenario carries the documented defaults") {
    s::Scenario sc = parse_ok("");
    CHECK(sc.seed == 1);
    CHECK(sc.master_key.to_hex() == s::kDefaultMasterKeyHex);
    CHECK(!sc.path_loss_reference);
    CHECK(!sc.path_loss_exponent);
    CHECK(!sc.noise_floor);
    CHECK(sc.nodes.empty());
    CHECK(sc.script.empty());
}

TEST_CASE("parse reads every section, comments, and time units") {
    s::Scenario sc = parse_ok(
        "# deployment under test\n"
        "seed=42\n"
        "master_key=a0a1a2a3a4a5a6a7a8a9aaabacadaeaf\n"
        "path_loss_exponent=2.5\n"
        "noise_floor=-80\n"
        "\n"
        "[nodes]\n"
        "bridge profile=hue-bridge pos=0,0 ext=0x00000000000000aa pan=0x2222 channel=15\n"
        "bulb profile=lightify-bulb pos=0.5,0.25 joined=bridge  # pre-commissioned\n"
        "mallory profile=attacker pos=2,0 channel=15 spoof=bulb master=scenario\n"
        "\n"
        "[script]\n"
        "at 0s press_button node=bridge\n"
        "at 100ms scan node=mallory channel=15\n"
        "at 1s blink node=mallory target=bulb duration=0xFFFE\n"
        "at 1500000us expect last=success\n");

    CHECK(sc.seed == 42);
    CHECK(sc.master_key.to_hex() == "a0a1a2a3a4a5a6a7a8a9aaabacadaeaf");
    CHECK(sc.path_loss_exponent == 2.5);
    CHECK(sc.noise_floor == -80.0);

    REQUIRE(sc.nodes.size() == 3);
    CHECK(sc.nodes[0].name == "bridge");
    CHECK(sc.nodes[0].profile == "hue-bridge");
    CHECK(sc.nodes[0].ext == 0xAA);
    CHECK(sc.nodes[0].pan == 0x2222);
    CHECK(sc.nodes[0].channel == 15);
    CHECK(!sc.nodes[0].tx_power);
    CHECK(sc.nodes[1].x == 0.5);
    CHECK(sc.nodes[1].y == 0.25);
    CHECK(sc.nodes[1].joined == "bridge");
    CHECK(sc.nodes[2].spoof == "bulb");
    CHECK(sc.nodes[2].master == "scenario");

    REQUIRE(sc.script.size() == 4);
    CHECK(sc.script[0].at_us == 0);
    CHECK(sc.script[1].at_us == 100'000);
    CHECK(sc.script[2].at_us == 1'000'000);
    CHECK(sc.script[3].at_us == 1'500'000);
    CHECK(sc.script[2].verb == "blink");
    REQUIRE(sc.script[2].args.size() == 3);
    CHECK(sc.script[2].args[0] == std::pair<std::string, std::string>{"node", "mallory"});
    CHECK(sc.script[2].args[2] == std::pair<std::string, std::string>{"duration", "0xFFFE"});
    CHECK(sc.script[1].line == 14);
}

TEST_CASE("serialize round-trips through parse") {
    s::Scenario sc = parse_ok(
        "seed=42\n"
        "master_key=a0a1a2a3a4a5a6a7a8a9aaabacadaeaf\n"
        "path_loss_reference=34\n"
        "path_loss_exponent=2.5\n"
        "noise_floor=-80\n"
        "[nodes]\n"
        "bridge profile=hue-bridge pos=0,0 tx=1.5 ext=0xaa epid=0xfeedbeefcafef00d pan=0x2222 "
        "channel=15 update=3 key=0f0e0d0c0b0a09080706050403020100 short=0x0001\n"
        "bulb profile=lightify-bulb pos=0.5,0.25 joined=bridge short=0x0010\n"
        "lamp profile=hue-bulb pos=-1,3 key=auto\n"
        "mallory profile=attacker pos=2,0 tx=26 channel=15 spoof=00000000000000bb "
        "master=ffeeddccbbaa99887766554433221100\n"
        "[script]\n"
        "at 0s press_button node=bridge\n"
        "at 100ms scan node=mallory channel=15\n"
        "at 1s inject node=mallory key=net:bridge pan=2222 channel=15 dst=ffff counter=7 "
        "command=level:42\n"
        "at 2s expect node=bulb field=lamp value=on/42/0\n"
        "at 2s expect last=success\n");

    std::string text = s::serialize_scenario(sc);
    auto again = s::parse_scenario(text);
    REQUIRE(again.ok());
    CHECK(*again.scenario == sc);
    CHECK(s::serialize_scenario(*again.scenario) == text);
}

TEST_CASE("parse errors carry line and column") {
    SUBCASE("bad seed") {
        s::Issue i = single_issue("seed=xyz\n");
        CHECK(i.kind == s::Issue::Kind::Parse);
        CHECK(s::issue_text(i) ==
              "parse error at line 1, column 1 [seed]: seed must be a decimal integer");
    }
    SUBCASE("bad master key") {
        s::Issue i = single_issue("master_key=tooshort\n");
        CHECK(i.kind == s::Issue::Kind::Parse);
        CHECK(i.field == "master_key");
    }
    SUBCASE("bad time token") {
        s::Issue i = single_issue("[script]\nat tomorrow scan node=x\n");
        CHECK(i.kind == s::Issue::Kind::Parse);
        CHECK(i.line == 2);
        CHECK(i.column == 4);
        CHECK(i.field == "at");
    }
    SUBCASE("bare token where key=value expected") {
        s::Issue i = single_issue("[nodes]\nlamp profile=hue-bulb wat\n");
        CHECK(i.kind == s::Issue::Kind::Parse);
        CHECK(i.line == 2);
        CHECK(i.column == 23);
    }
    SUBCASE("unknown node key") {
        s::Issue i = single_issue("[nodes]\nlamp profile=hue-bulb flavor=mint\n");
        CHECK(i.kind == s::Issue::Kind::Parse);
        CHECK(i.field == "flavor");
    }
    SUBCASE("unknown section") {
        s::Issue i = single_issue("[stuff]\n");
        CHECK(i.kind == s::Issue::Kind::Parse);
        CHECK(i.line == 1);
    }
    SUBCASE("missing profile") {
        s::Issue i = single_issue("[nodes]\nlamp pos=0,0\n");
        CHECK(i.field == "profile");
    }
}

TEST_CASE("validation names the offending field") {
    SUBCASE("channel out of band") {
        s::Issue i = single_issue("[nodes]\nlamp profile=hue-bulb pos=0,0 channel=27\n");
        CHECK(i.kind == s::Issue::Kind::Validation);
        CHECK(s::issue_text(i) ==
              "validation error at line 2, column 31 [channel]: channel must be in 11..26");
    }
    SUBCASE("duplicate node name") {
        s::Issue i = single_issue(
            "[nodes]\nlamp profile=hue-bulb pos=0,0\nlamp profile=hue-bulb pos=1,0\n");
        CHECK(i.kind == s::Issue::Kind::Validation);
        CHECK(i.field == "name");
    }
    SUBCASE("unknown profile") {
        s::Issue i = single_issue("[nodes]\nlamp profile=toaster pos=0,0\n");
        CHECK(i.kind == s::Issue::Kind::Validation);
        CHECK(i.field == "profile");
    }
    SUBCASE("joined must name an initiator") {
        s::Issue i = single_issue(
            "[nodes]\na profile=hue-bulb pos=0,0\nb profile=hue-bulb pos=1,0 joined=a\n");
        CHECK(i.field == "joined");
    }
    SUBCASE("spoof must resolve") {
        s::Issue i = single_issue("[nodes]\nm profile=attacker pos=0,0 spoof=zz\n");
        CHECK(i.field == "spoof");
    }
    SUBCASE("script times must be non-decreasing") {
        s::Issue i = single_issue("[script]\nat 2s advance\nat 1s advance\n");
        CHECK(i.field == "at");
        CHECK(i.line == 3);
    }
    SUBCASE("unknown verb") {
        s::Issue i = single_issue("[script]\nat 0s frobnicate\n");
        CHECK(i.field == "verb");
    }
    SUBCASE("missing required argument") {
        s::Issue i = single_issue(
            "[nodes]\nm profile=attacker pos=0,0\nlamp profile=hue-bulb pos=1,0\n"
            "[script]\nat 0s dos_channel node=m target=lamp\n");
        CHECK(i.field == "channel");
        CHECK(i.line == 5);
    }
    SUBCASE("unknown argument for a verb") {
        s::Issue i = single_issue(
            "[nodes]\nm profile=attacker pos=0,0\n[script]\nat 0s scan node=m bogus=1\n");
        CHECK(i.field == "bogus");
    }
    SUBCASE("script node must exist") {
        s::Issue i = single_issue("[script]\nat 0s scan node=ghost\n");
        CHECK(i.field == "node");
    }
    SUBCASE("target must be a node or hex address") {
        s::Issue i = single_issue(
            "[nodes]\nm profile=attacker pos=0,0\n[script]\nat 0s blink node=m target=zzz\n");
        CHECK(i.field == "target");
    }
    SUBCASE("expect takes exactly one form") {
        s::Issue i = single_issue(
            "[nodes]\nlamp profile=hue-bulb pos=0,0\n[script]\n"
            "at 0s expect last=ok node=lamp field=f value=v\n");
        CHECK(i.field == "expect");
    }
    SUBCASE("inject key=net must name an initiator") {
        s::Issue i = single_issue(
            "[nodes]\nm profile=attacker pos=0,0\nlamp profile=hue-bulb pos=1,0\n[script]\n"
            "at 0s inject node=m key=net:lamp pan=1111 channel=11 dst=0002 counter=1 "
            "command=on\n");
        CHECK(i.field == "key");
    }
}

TEST_CASE("builder applies documented defaults") {
    s::Scenario sc = parse_ok(
        "[nodes]\n"
        "hub profile=link-hub pos=0,0 ext=0x0000000000000002\n"
        "bulbA profile=hue-bulb pos=1,0 joined=hub\n"
        "bulbB profile=hue-bulb pos=2,0 joined=hub short=0x0005\n"
        "mallory profile=attacker pos=3,0\n");
    s::Run run(sc);
    auto& sim = run.sim();

    // Extended addresses: explicit one wins, the rest fill from 1 up.
    CHECK(sim.find("hub")->extended_addr() == 2);
    CHECK(sim.find("bulbA")->extended_addr() == 1);
    CHECK(sim.find("bulbB")->extended_addr() == 3);
    CHECK(sim.find("mallory")->extended_addr() == 4);

    const auto& hub = *sim.find("hub")->initiator;
    REQUIRE(hub.net);
    CHECK(hub.net->extended_pan_id == 2);     // defaults to the node's address
    CHECK(hub.net->pan_id == 0x1001);         // 0x1000 + declaration index
    CHECK(hub.net->channel == 11);
    CHECK(hub.net->network_update_id == 0);
    CHECK(hub.net->short_addr == 0x0001);
    CHECK(hub.next_assigned_short == 0x0006);  // past the explicit 0x0005

    const auto& a = *sim.find("bulbA")->end_device;
    const auto& b = *sim.find("bulbB")->end_device;
    CHECK(!a.factory_new);
    REQUIRE(a.net);
    CHECK(a.net->short_addr == 0x0002);
    CHECK(b.net->short_addr == 0x0005);
    CHECK(a.net->network_key == hub.net->network_key);  // key=auto flows down
    CHECK(a.net->pan_id == 0x1001);

    CHECK(sim.find("mallory")->tx_power_dbm == 26.0);
    CHECK(sim.find("mallory")->attacker_channel == 11);
    CHECK(sim.find("bulbA")->tx_power_dbm == 0.0);

    // Same scenario, same seed: the auto-drawn key is reproducible.
    s::Run run2(sc);
    CHECK(run2.sim().find("hub")->initiator->net->network_key == hub.net->network_key);
}

TEST_CASE("script runs a legitimate join and user commands") {
    s::Scenario sc = parse_ok(
        "seed=9\n"
        "[nodes]\n"
        "bridge profile=hue-bridge pos=0,0 pan=0x1a2b\n"
        "bulb profile=hue-bulb pos=0.5,0\n"
        "[script]\n"
        "at 0s join node=bridge target=bulb\n"
        "at 2s expect last=success\n"
        "at 2s expect node=bulb field=factory_new value=0\n"
        "at 2s expect node=bulb field=short value=0x0002\n"
        "at 2s user_command node=bridge command=level:42\n"
        "at 3s expect node=bulb field=lamp value=on/42/0\n");
    s::RunResult r = s::run_scenario(sc);

    CHECK(r.expectations_ok);
    CHECK(r.expectations_failed == 0);
    CHECK(r.first_failure.empty());
    CHECK(r.report.rfind("scenario seed=9\n", 0) == 0);
    CHECK(r.report.find("join result=success") != std::string::npos);
    CHECK(r.report.find("user_command delivered=1") != std::string::npos);
    CHECK(r.events_log.find("TX") != std::string::npos);
    CHECK(r.states.find("== t=000000000000 before action=join line=6") != std::string::npos);
    CHECK(r.states.find(" final\n") != std::string::npos);
    CHECK(r.final_snapshot.find("lamp=on/42/0") != std::string::npos);
}

TEST_CASE("attack verbs find their target without an explicit scan") {
    s::Scenario sc = parse_ok(
        "seed=5\n"
        "[nodes]\n"
        "bridge profile=hue-bridge pos=0,0\n"
        "bulb profile=hue-bulb pos=0.5,0 joined=bridge\n"
        "mallory profile=attacker pos=1,0\n"
        "[script]\n"
        "at 0s dos_channel node=mallory target=bulb channel=26\n"
        "at 1s expect last=success\n"
        "at 1s expect node=bulb field=channel value=26\n"
        "at 1s expect node=bridge field=channel value=11\n");
    s::RunResult r = s::run_scenario(sc);
    CHECK(r.expectations_ok);
    CHECK(r.report.find("attack=dos_channel\nverdict=success") != std::string::npos);
}

TEST_CASE("blink through the script reports the effective duration") {
    s::Scenario sc = parse_ok(
        "[nodes]\n"
        "bulb profile=hue-bulb pos=0.5,0\n"
        "mallory profile=attacker pos=1,0\n"
        "[script]\n"
        "at 0s blink node=mallory target=bulb\n"
        "at 1s expect last=success\n"
        "at 1s expect node=bulb field=identify value=1\n");
    s::RunResult r = s::run_scenario(sc);
    CHECK(r.expectations_ok);
    CHECK(r.report.find("identify effective 65534 s") != std::string::npos);
}

TEST_CASE("extraction and injection run end to end from a script") {
    s::Scenario sc = parse_ok(
        "seed=7\n"
        "[nodes]\n"
        "bridge profile=hue-bridge pos=0,0 pan=0x1a2b\n"
        "bulb profile=hue-bulb pos=0.5,0\n"
        "mallory profile=attacker pos=2,0 master=scenario\n"
        "[script]\n"
        "at 0s join node=bridge target=bulb\n"
        "at 9s extract_key node=mallory\n"
        "at 9s expect last=success\n"
        "at 9s inject node=mallory key=extracted pan=1a2b channel=11 dst=0002 counter=5 "
        "command=off\n"
        "at 10s expect node=bulb field=lamp value=off/254/0\n");
    s::Run run(sc);
    run.run_script();
    REQUIRE(run.last_outcome());
    CHECK(run.last_outcome()->attack == "inject");
    REQUIRE(run.last_extraction());
    REQUIRE(run.last_extraction()->network_key);
    CHECK(*run.last_extraction()->network_key ==
          run.sim().find("bulb")->end_device->net->network_key);

    s::RunResult r = run.finish();
    CHECK(r.expectations_ok);
    CHECK(r.report.find("extract verdict=success") != std::string::npos);

    // The sniffer capture lists raw frames that decode back to real frames.
    REQUIRE(r.capture.rfind("capture node=mallory frames=", 0) == 0);
    size_t raw = r.capture.find(" raw=");
    REQUIRE(raw != std::string::npos);
    size_t end = r.capture.find('\n', raw);
    auto bytes = wire::from_hex(r.capture.substr(raw + 5, end - raw - 5));
    REQUIRE(bytes);
    CHECK(wire::decode_frame(*bytes).ok());
}

TEST_CASE("failed expectations are reported but do not stop the run") {
    s::Scenario sc = parse_ok(
        "[nodes]\n"
        "lamp profile=hue-bulb pos=0,0\n"
        "[script]\n"
        "at 0s expect node=lamp field=factory_new value=0\n"
        "at 0s expect node=lamp field=factory_new value=1\n"
        "at 0s expect node=lamp field=nonsense value=5\n");
    s::RunResult r = s::run_scenario(sc);
    CHECK(!r.expectations_ok);
    CHECK(r.expectations_failed == 2);
    CHECK(r.first_failure == "node=lamp field=factory_new value=0 got=1");
    CHECK(r.report.find("EXPECT FAIL node=lamp field=factory_new value=0 got=1") !=
          std::string::npos);
    CHECK(r.report.find("EXPECT OK node=lamp field=factory_new value=1 got=1") !=
          std::string::npos);
    CHECK(r.report.find("EXPECT FAIL node=lamp field=nonsense value=5 got=-") !=
          std::string::npos);
}

TEST_CASE("recovery after a channel change works from a script") {
    s::Scenario sc = parse_ok(
        "seed=3\n"
        "[nodes]\n"
        "bridge profile=hue-bridge pos=0,0\n"
        "bulb profile=hue-bulb pos=0.5,0 joined=bridge\n"
        "mallory profile=attacker pos=1,0\n"
        "[script]\n"
        "at 0s dos_channel node=mallory target=bulb channel=20\n"
        "at 1s expect last=success\n"
        "at 1s recover node=bridge target=bulb\n"
        "at 2s expect last=switched\n"
        "at 2s expect node=bridge field=channel value=20\n"
        "at 2s expect node=bulb field=channel value=20\n");
    s::RunResult r = s::run_scenario(sc);
    CHECK(r.expectations_ok);
    CHECK(r.report.find("recovery found=1 switched=1 channel=20") != std::string::npos);
}

TEST_CASE("move and scan interact; physical reset follows vendor support") {
    s::Scenario sc = parse_ok(
        "[nodes]\n"
        "hue profile=hue-bulb pos=0.5,0\n"
        "osram profile=lightify-bulb pos=0.5,0.2\n"
        "mallory profile=attacker pos=0,0\n"
        "[script]\n"
        "at 0s scan node=mallory channel=11\n"
        "at 5s expect last=found:2\n"
        "at 5s move node=mallory pos=1000,0\n"
        "at 5s scan node=mallory channel=11\n"
        "at 10s expect last=found:0\n"
        "at 10s physical_reset node=hue\n"
        "at 10s expect last=unsupported\n"
        "at 10s physical_reset node=osram\n"
        "at 10s expect last=ok\n");
    s::RunResult r = s::run_scenario(sc);
    CHECK(r.expectations_ok);
    CHECK(r.report.find("moved to 1000,0") != std::string::npos);
    CHECK(r.report.find("physical_reset supported=0") != std::string::npos);
    CHECK(r.report.find("physical_reset supported=1") != std::string::npos);
}

TEST_CASE("synthetic actions run against a finished script") {
    s::Scenario sc = parse_ok(
        "[nodes]\n"
        "bridge profile=hue-bridge pos=0,0\n"
        "bulb profile=hue-bulb pos=0.5,0 joined=bridge\n"
        "mallory profile=attacker pos=1,0\n");
    s::Run run(sc);
    run.run_script();  // empty setup

    s::Action extra;
    extra.at_us = run.sim().now();
    extra.verb = "hijack";
    extra.args = {{"node", "mallory"}, {"target", "bulb"},
                  {"key", "a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5"}};
    CHECK(!run.perform(extra));  // no master key configured for mallory
    REQUIRE(run.last_outcome());
    CHECK(run.last_outcome()->verdict == attacks::Verdict::Rejected);

    s::Action dos;
    dos.at_us = run.sim().now();
    dos.verb = "dos_channel";
    dos.args = {{"node", "mallory"}, {"target", "bulb"}, {"channel", "26"}};
    CHECK(run.perform(dos));
    CHECK(run.last_outcome()->verdict == attacks::Verdict::Success);
    s::RunResult r = run.finish();
    CHECK(r.final_snapshot.find("channel=26") != std::string::npos);
}

TEST_CASE("a run is deterministic end to end") {
    s::Scenario sc = parse_ok(
        "seed=11\n"
        "[nodes]\n"
        "bridge profile=hue-bridge pos=0,0\n"
        "bulb profile=hue-bulb pos=0.5,0\n"
        "mallory profile=attacker pos=2,0 master=scenario\n"
        "[script]\n"
        "at 0s join node=bridge target=bulb\n"
        "at 9s extract_key node=mallory\n"
        "at 9s inject node=mallory key=extracted pan=0x1001 channel=11 dst=0002 counter=3 "
        "command=on\n"
        "at 10s expect node=bulb field=lamp value=on/254/0\n");
    s::RunResult r1 = s::run_scenario(sc);
    s::RunResult r2 = s::run_scenario(sc);
    CHECK(r1.expectations_ok);
    CHECK(r1.events_log == r2.events_log);
    CHECK(r1.report == r2.report);
    CHECK(r1.states == r2.states);
    CHECK(r1.capture == r2.capture);
}
