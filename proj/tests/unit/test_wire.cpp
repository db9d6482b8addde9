#include <doctest.h>

#include <cmath>
#include <string>

#include "acfleet/errors.hpp"
#include "acfleet/fleet.hpp"
#include "acfleet/wire.hpp"

using namespace acfleet;
using namespace acfleet::wire;

namespace {

Measurement fleet_measurement(std::size_t n) {
    fleet::FleetSpec spec;
    spec.n_houses = n;
    spec.n_remote = 0;
    const auto layout = fleet::generate_fleet(spec);
    auto st = fleet::initialize_fleet(layout, 32.2);
    fleet::set_mode(st, fleet::DeviceMode::Packetized);
    std::vector<house::SwitchCommand> none(n);
    fleet::TelemetryFrame fr;
    for (int k = 0; k < 20; ++k) fr = fleet::step_fleet(st, layout, 32.2, none, 2.0);
    Measurement m{20, fr.time, {}, false};
    for (std::size_t i = 0; i < n; ++i) m.devices.push_back({layout.houses[i].id, fr.devices[i]});
    return m;
}

} // namespace

TEST_CASE("a full fleet measurement round-trips exactly") {
    const auto m = fleet_measurement(543);
    const auto back = decode(encode(m));
    CHECK(equal(Message{m}, back));
    const auto& b = std::get<Measurement>(back);
    REQUIRE(b.devices.size() == 543);
    bool any_request = false;
    for (const auto& e : b.devices) {
        CHECK_FALSE(e.data.corrupt);
        any_request = any_request || e.data.request.kind != fleet::RequestKind::None;
    }
    CHECK(any_request);
}

TEST_CASE("commands round-trip, with and without a mode change") {
    Command c{7, 14.0, {{"h000", house::Target::On}, {"h001", house::Target::Off}}, std::nullopt};
    CHECK(equal(Message{c}, decode(encode(c))));
    c.mode = ModeChange{fleet::DeviceMode::Packetized, {90.0, 45.0, false}};
    const auto back = decode(encode(c));
    CHECK(equal(Message{c}, back));
    CHECK(std::get<Command>(back).mode->packet.epoch_length == 90.0);
}

TEST_CASE("an empty heartbeat is valid") {
    Command c{3, 6.0, {}, std::nullopt};
    const auto back = std::get<Command>(decode(encode(c)));
    CHECK(back.devices.empty());
    CHECK(back.seq == 3);
    ErrorReply e{1, 2.0, "nope"};
    CHECK(equal(Message{e}, decode(encode(e))));
}

TEST_CASE("a NaN temperature flags that device only") {
    auto m = fleet_measurement(5);
    m.devices[2].data.measured = std::nan("");
    const auto b = std::get<Measurement>(decode(encode(m)));
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(b.devices[i].data.corrupt == (i == 2));
        if (i != 2) CHECK(equal(b.devices[i].data, m.devices[i].data));
    }
}

TEST_CASE("infeasible device values are flagged, not fatal") {
    const std::string head = R"({"type":"meas","seq":1,"t":2.0,"devices":[)";
    auto dev = [&](const std::string& body) {
        return std::get<Measurement>(decode(head + body + "]}")).devices.at(0).data;
    };
    CHECK(dev(R"({"id":"a","temp":22,"power":-5,"state":"on","pos":0.5})").corrupt);
    CHECK(dev(R"({"id":"a","temp":22,"power":5,"state":"sideways","pos":0.5})").corrupt);
    CHECK(dev(R"({"id":"a","temp":"Infinity","power":5,"state":"on","pos":0.5})").corrupt);
    CHECK(dev(R"({"id":"a","temp":"warm","power":5,"state":"on","pos":0.5})").corrupt);
    CHECK(dev(R"({"id":"a","temp":22,"power":5,"pos":0.5})").corrupt);
    CHECK_FALSE(dev(R"({"id":"a","temp":22,"power":5,"state":"on","pos":0.5})").corrupt);
}

TEST_CASE("structural problems are protocol errors") {
    for (const char* bad : {
             "",
             "not json",
             "[1,2]",
             R"({"seq":1,"t":0,"devices":[]})",
             R"({"type":"cmd","t":0,"devices":[]})",
             R"({"type":"cmd","seq":-1,"t":0,"devices":[]})",
             R"({"type":"cmd","seq":1,"t":"NaN","devices":[]})",
             R"({"type":"cmd","seq":1,"t":0})",
             R"({"type":"cmd","seq":1,"t":0,"devices":{}})",
             R"({"type":"cmd","seq":1,"t":0,"devices":[{"id":"a","target":"up"}]})",
             R"({"type":"cmd","seq":1,"t":0,"devices":[{"id":"a","target":"on"},{"id":"a","target":"off"}]})",
             R"({"type":"cmd","seq":1,"t":0,"devices":[{"target":"on"}]})",
             R"({"type":"cmd","seq":1,"t":0,"devices":[],"mode":"turbo"})",
             R"({"type":"ping","seq":1,"t":0,"devices":[]})",
             R"({"type":"meas","seq":1,"t":0,"devices":[{"id":"a","pos":-0.4e99999}]})",
         })
        CHECK_THROWS_AS(decode(bad), ProtocolError);
}
