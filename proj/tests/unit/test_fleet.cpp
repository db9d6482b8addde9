#include <doctest.h>

#include <cmath>
#include <vector>

#include "acfleet/errors.hpp"
#include "acfleet/fleet.hpp"

using namespace acfleet;
using namespace acfleet::fleet;
using house::SwitchCommand;
using house::Target;

namespace {

FleetSpec small(std::size_t n, double h, std::uint64_t seed = 1) {
    FleetSpec s;
    s.n_houses = n;
    s.n_remote = 0;
    s.heterogeneity = h;
    s.seed = seed;
    return s;
}

std::vector<SwitchCommand> none(std::size_t n) { return std::vector<SwitchCommand>(n); }

double ratio(double v, double nominal) { return v / nominal; }

} // namespace

TEST_CASE("zero heterogeneity gives identical houses") {
    const auto f = generate_fleet(small(30, 0.0));
    for (const auto& p : f.houses) {
        CHECK(p.thermal == f.houses[0].thermal);
        CHECK(p.ac == f.houses[0].ac);
        CHECK(p.sensor_lag == f.houses[0].sensor_lag);
    }
}

TEST_CASE("heterogeneous parameters stay within the spread") {
    const auto spec = small(200, 0.2);
    const auto f = generate_fleet(spec);
    const auto& n = spec.nominal;
    const double s = f.power_scale;
    bool any_spread = false;
    for (const auto& p : f.houses) {
        for (double r : {ratio(p.thermal.water_capacity, s * n.thermal.water_capacity),
                         ratio(p.thermal.air_capacity, s * n.thermal.air_capacity),
                         ratio(p.thermal.wall_conductance, s * n.thermal.wall_conductance),
                         ratio(p.thermal.water_air_conductance, s * n.thermal.water_air_conductance),
                         ratio(p.ac.cooling_prefactor, s * n.ac.cooling_prefactor),
                         ratio(p.ac.friction_power, s * n.ac.friction_power),
                         ratio(p.sensor_lag, n.sensor_lag)}) {
            CHECK(r >= 0.8 - 1e-12);
            CHECK(r <= 1.2 + 1e-12);
            any_spread = any_spread || std::abs(r - 1) > 0.1;
        }
        CHECK(p.thermal.thermometer_water_fraction <= 1.0);
        CHECK(p.ac.loss_factor >= 1.0);
        CHECK(p.setpoint == n.setpoint);
    }
    CHECK(any_spread);
}

TEST_CASE("same seed gives the same fleet, a different seed does not") {
    const auto a = generate_fleet(small(50, 0.2, 9));
    const auto b = generate_fleet(small(50, 0.2, 9));
    const auto c = generate_fleet(small(50, 0.2, 10));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.houses[i].thermal == b.houses[i].thermal);
    CHECK_FALSE(a.houses[3].thermal == c.houses[3].thermal);

    auto sa = initialize_fleet(a, 32.2);
    auto sb = initialize_fleet(b, 32.2);
    for (int k = 0; k < 50; ++k) {
        const auto fa = step_fleet(sa, a, 32.2, none(50), 2.0);
        const auto fb = step_fleet(sb, b, 32.2, none(50), 2.0);
        CHECK(fa.aggregate_power == fb.aggregate_power);
    }
}

TEST_CASE("mean rated on-power hits the target") {
    const auto spec = small(543, 0.2);
    const auto f = generate_fleet(spec);
    double sum = 0;
    for (const auto& p : f.houses) sum += rated_on_power(p, spec.reference_ambient);
    CHECK(sum / 543.0 == doctest::Approx(2600.0).epsilon(1e-9));
}

TEST_CASE("trailing houses are remote") {
    FleetSpec spec;
    const auto f = generate_fleet(spec);
    CHECK(f.size() == 543);
    std::size_t remote = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (f.partitions[i] == Partition::RemotePlant) {
            CHECK(i >= 523);
            ++remote;
        }
    CHECK(remote == 20);
    CHECK(f.subset(Partition::RemotePlant).size() == 20);
    CHECK(f.subset(Partition::LocalVirtual).size() == 523);
}

TEST_CASE("counts always add up and power matches the running set") {
    const auto f = generate_fleet(small(100, 0.2));
    auto st = initialize_fleet(f, 32.2);
    for (int k = 0; k < 300; ++k) {
        const auto fr = step_fleet(st, f, 32.2, none(100), 2.0);
        CHECK(fr.counts.on + fr.counts.off + fr.counts.locked == 100);
        double p = 0;
        std::size_t running = 0;
        for (const auto& d : fr.devices) {
            p += d.power;
            if (d.compressor == house::Compressor::On || d.compressor == house::Compressor::LockedOn)
                ++running;
            else
                CHECK(d.power == 0.0);
        }
        CHECK(fr.aggregate_power == doctest::Approx(p));
        CHECK(running == fr.counts.on);
    }
}

TEST_CASE("no heat and a cool day means no power") {
    auto spec = small(20, 0.2);
    spec.nominal.heat = {0, 0, 0, 0};
    const auto f = generate_fleet(spec);
    auto st = initialize_fleet(f, 15.0);
    std::vector<SwitchCommand> off(20, SwitchCommand{Target::Off, house::Source::Aggregator});
    step_fleet(st, f, 15.0, off, 2.0);
    for (int k = 0; k < 200; ++k) CHECK(step_fleet(st, f, 15.0, none(20), 2.0).aggregate_power == 0.0);
}

TEST_CASE("free-running duty cycle is moderate") {
    const auto f = generate_fleet(small(100, 0.2));
    auto st = initialize_fleet(f, 32.2);
    double on = 0;
    int n = 0;
    for (int k = 0; k < 3600; ++k) {
        const auto fr = step_fleet(st, f, 32.2, none(100), 2.0);
        if (k < 900) continue;
        on += static_cast<double>(fr.counts.on) / 100.0;
        ++n;
    }
    const double duty = on / n;
    CHECK(duty >= 0.2);
    CHECK(duty <= 0.8);
}

TEST_CASE("synchronizing toward a state already reached issues nothing") {
    const auto f = generate_fleet(small(10, 0.0));
    auto st = initialize_fleet(f, 32.2);
    for (std::size_t i = 0; i < 10; ++i) st.houses[i] = house::initial_state(f.houses[i], 32.2, 0.5, true);
    const auto r = force_synchronize(st, f, SyncDirection::AllOn, 32.2, 2.0, 60.0);
    CHECK(r.commands_issued == 0);
    CHECK(r.shared_fraction == 1.0);
}

TEST_CASE("AllOff synchronization converges") {
    const auto f = generate_fleet(small(100, 0.2));
    auto st = initialize_fleet(f, 32.2);
    const auto r = force_synchronize(st, f, SyncDirection::AllOff, 32.2, 2.0, 600.0);
    CHECK(r.shared_fraction >= 0.95);
    CHECK(r.commands_issued > 0);
}

TEST_CASE("request probability") {
    PacketConfig cfg;
    const double mid = 1.0 - std::exp(-2.0 / cfg.mean_time_to_request);
    CHECK(request_probability(cfg, RequestKind::On, 0.5, 2.0) == doctest::Approx(mid));
    CHECK(request_probability(cfg, RequestKind::Off, 0.5, 2.0) == doctest::Approx(mid));
    CHECK(request_probability(cfg, RequestKind::On, 0.0, 2.0) == 0.0);
    CHECK(request_probability(cfg, RequestKind::On, 1.0, 2.0) == 1.0);
    CHECK(request_probability(cfg, RequestKind::Off, 1.0, 2.0) == 0.0);
    CHECK(request_probability(cfg, RequestKind::Off, 0.0, 2.0) == 1.0);
    CHECK(request_probability(cfg, RequestKind::None, 0.7, 2.0) == 0.0);
    CHECK(request_probability(cfg, RequestKind::On, 0.8, 2.0) > request_probability(cfg, RequestKind::On, 0.6, 2.0));
}

TEST_CASE("a subset steps exactly like the same houses inside the full fleet") {
    auto spec = small(40, 0.2, 4);
    spec.n_remote = 7;
    const auto full = generate_fleet(spec);
    const auto part = full.subset(Partition::RemotePlant);
    auto sf = initialize_fleet(full, 32.2);
    auto sp = initialize_fleet(part, 32.2);
    for (int k = 0; k < 200; ++k) {
        const auto ff = step_fleet(sf, full, 32.2, none(40), 2.0);
        const auto fp = step_fleet(sp, part, 32.2, none(7), 2.0);
        for (std::size_t j = 0; j < 7; ++j) {
            CHECK(fp.devices[j].measured == ff.devices[33 + j].measured);
            CHECK(fp.devices[j].compressor == ff.devices[33 + j].compressor);
        }
    }
}

TEST_CASE("worker count does not change results") {
    const auto f = generate_fleet(small(60, 0.2));
    auto a = initialize_fleet(f, 32.2);
    auto b = initialize_fleet(f, 32.2);
    for (int k = 0; k < 100; ++k) {
        const auto fa = step_fleet(a, f, 32.2, none(60), 2.0, {1.0, 1});
        const auto fb = step_fleet(b, f, 32.2, none(60), 2.0, {1.0, 4});
        CHECK(fa.aggregate_power == fb.aggregate_power);
    }
}

TEST_CASE("bad inputs") {
    CHECK_THROWS_AS(generate_fleet(small(0, 0.2)), ConfigError);
    CHECK_THROWS_AS(generate_fleet(small(5, 1.0)), ConfigError);
    const auto f = generate_fleet(small(5, 0.2));
    auto st = initialize_fleet(f, 30);
    CHECK_THROWS_AS(step_fleet(st, f, 30, none(4), 2.0), ConfigError);
}
