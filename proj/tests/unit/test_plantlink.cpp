#include <doctest.h>

#include <thread>

#include "acfleet/errors.hpp"
#include "acfleet/fleet.hpp"
#include "acfleet/plantlink.hpp"

using namespace acfleet;
using namespace acfleet::plantlink;

namespace {

fleet::FleetLayout layout_of(std::size_t n) {
    fleet::FleetSpec spec;
    spec.n_houses = n;
    spec.n_remote = n;
    return fleet::generate_fleet(spec);
}

struct Served {
    PlantServer server;
    std::thread thread;
    AggregatorClient client;

    Served(const fleet::FleetLayout& layout, fleet::FleetState state, double timeout, std::uint64_t steps)
        : server(layout, std::move(state), ServerOptions{"127.0.0.1", 0, 2.0, timeout, 32.2, {}}) {
        const auto port = server.listen();
        thread = std::thread([this, steps] { server.serve(steps); });
        client.connect("127.0.0.1", port);
    }
    ~Served() {
        client.close();
        server.stop();
        if (thread.joinable()) thread.join();
    }
};

} // namespace

TEST_CASE("a missed command lets the plant free-run and says so") {
    const auto layout = layout_of(8);
    const auto init = fleet::initialize_fleet(layout, 32.2);
    auto local = init;
    Served s(layout, init, 0.1, 2);

    const auto m0 = s.client.receive(2000);
    CHECK(m0.seq == 0);
    CHECK_FALSE(m0.missed_command);
    const auto m1 = s.client.receive(2000); // nothing sent for step 0
    CHECK(m1.seq == 1);
    CHECK(m1.missed_command);
    std::vector<house::SwitchCommand> none(8);
    const auto fr = fleet::step_fleet(local, layout, 32.2, none, 2.0);
    for (std::size_t i = 0; i < 8; ++i) CHECK(m1.devices[i].data.measured == fr.devices[i].measured);

    s.client.send({1, m1.t, {}, std::nullopt});
    const auto m2 = s.client.receive(2000);
    CHECK_FALSE(m2.missed_command);
    s.thread.join();
    CHECK(s.server.log().missed_steps == 1);
    CHECK(s.server.log().commands_received == 1);
}

TEST_CASE("a command into lockout is refused and echoed") {
    const auto layout = layout_of(4);
    auto init = fleet::initialize_fleet(layout, 32.2);
    init.houses[0] = house::initial_state(layout.houses[0], 32.2, 0.6, false);
    init.houses[0].compressor = house::Compressor::LockedOff;
    init.houses[0].lock_remaining = 100;
    Served s(layout, init, 2.0, 1);

    const auto m0 = s.client.receive(2000);
    s.client.send({0, m0.t, {{m0.devices[0].id, house::Target::On}}, std::nullopt});
    const auto m1 = s.client.receive(2000);
    CHECK_FALSE(m1.devices[0].data.accepted);
    CHECK(m1.devices[0].data.compressor == house::Compressor::LockedOff);
    for (std::size_t i = 1; i < 4; ++i) CHECK(m1.devices[i].data.accepted);
    s.thread.join();
    REQUIRE(s.server.log().applied.size() == 1);
    CHECK_FALSE(s.server.log().applied[0].accepted);
    CHECK(s.server.log().applied[0].id == m0.devices[0].id);
}

TEST_CASE("the plant owns the clock") {
    const auto layout = layout_of(6);
    Served s(layout, fleet::initialize_fleet(layout, 32.2), 2.0, 30);
    for (std::uint64_t k = 0; k <= 30; ++k) {
        const auto m = s.client.receive(2000);
        CHECK(m.seq == k);
        CHECK(m.t == doctest::Approx(2.0 * static_cast<double>(k)).epsilon(1e-12));
        if (k < 30) s.client.send({k, m.t, {}, std::nullopt});
    }
    s.thread.join();
    CHECK(s.server.log().frames_sent == 31);
    CHECK(s.server.log().missed_steps == 0);
}

TEST_CASE("bad lines get an error reply and the step still completes") {
    const auto layout = layout_of(3);
    Served s(layout, fleet::initialize_fleet(layout, 32.2), 2.0, 1);
    const auto m0 = s.client.receive(2000);
    s.client.send({5, m0.t, {}, std::nullopt}); // wrong step
    s.client.send({0, m0.t, {{"nobody", house::Target::On}}, std::nullopt});
    const auto m1 = s.client.receive(2000);
    CHECK(m1.seq == 1);
    CHECK_FALSE(m1.missed_command);
    s.thread.join();
    CHECK(s.server.log().protocol_errors == 2);
    CHECK(s.client.log().errors_received == 2);
}

TEST_CASE("client times out without a plant frame") {
    const auto layout = layout_of(2);
    PlantServer server(layout, fleet::initialize_fleet(layout, 32.2), {});
    const auto port = server.listen();
    AggregatorClient c;
    c.connect("127.0.0.1", port); // accepted by the backlog, never served
    CHECK_THROWS_AS(c.receive(100), ProtocolError);
}
