#include <doctest.h>

#include <cmath>
#include <vector>

#include "acfleet/calibration.hpp"
#include "acfleet/errors.hpp"
#include "acfleet/house.hpp"
#include "acfleet/thermal.hpp"
#include "../support/oracle.hpp"

using namespace acfleet;
using namespace acfleet::thermal;

namespace {

ThermalState at(double t1, double t2) {
    ThermalState s;
    s.evaporator = t1;
    s.condenser = t2;
    return s;
}

const house::HouseParams kHouse{};

} // namespace

TEST_CASE("cooling rate is zero when off and rises with evaporator temperature") {
    AcParams ac;
    CHECK(cooling_rate(at(5, 40), ac, false) == 0.0);
    CHECK(cooling_rate(at(10, 40), ac, true) > cooling_rate(at(5, 40), ac, true));
    // A exp(-L/T1)/T1 written out by hand
    const double k = 10.0 + 273.15;
    CHECK(cooling_rate(at(10, 40), ac, true) ==
          doctest::Approx(ac.cooling_prefactor * std::exp(-ac.vapor_temperature / k) / k).epsilon(1e-12));
}

TEST_CASE("cooling rate outside the model band is a divergence") {
    AcParams ac;
    CHECK_THROWS_AS(cooling_rate(at(-60, 40), ac, true), ModelDivergence);
    CHECK_THROWS_AS(cooling_rate(at(75, 40), ac, true), ModelDivergence);
    CHECK_NOTHROW(cooling_rate(at(-60, 40), ac, false));
}

TEST_CASE("ac power") {
    AcParams ac;
    CHECK(ac_power(at(8, 45), ac, false) == 0.0);
    CHECK(ac_power(at(12, 12), ac, true) == doctest::Approx(ac.friction_power));
    const double k = 8.0 + 273.15;
    const double q = ac.cooling_prefactor * std::exp(-ac.vapor_temperature / k) / k;
    CHECK(ac_power(at(8, 45), ac, true) ==
          doctest::Approx(ac.loss_factor * q * 37.0 / k + ac.friction_power).epsilon(1e-12));
    CHECK(ac_power(at(8, 45), ac, true) > ac.friction_power);
}

TEST_CASE("calibrated defaults hit the nameplate") {
    const auto op = steady_on_point(kHouse.thermal, AcParams{}, 26.7, 35.0);
    CHECK(op.cooling == doctest::Approx(1465.0).epsilon(1e-6));
    CHECK(op.power == doctest::Approx(455.0).epsilon(1e-6));
    CHECK(ambient_power_slope(kHouse.thermal, AcParams{}, 26.7, 35.0) == doctest::Approx(0.0136).epsilon(1e-4));
}

TEST_CASE("calibrated defaults equal calibrate_ac output") {
    const auto fit = calibrate_ac(kHouse.thermal, AcParams{});
    const AcParams def;
    CHECK(def.cooling_prefactor == doctest::Approx(fit.cooling_prefactor).epsilon(1e-9));
    CHECK(def.loss_factor == doctest::Approx(fit.loss_factor).epsilon(1e-9));
    CHECK(def.friction_power == doctest::Approx(fit.friction_power).epsilon(1e-9));
}

TEST_CASE("calibration rejects targets that need gamma below 1") {
    CalibrationTargets t;
    t.ambient_power_slope = 0.001;
    CHECK_THROWS_AS(calibrate_ac(kHouse.thermal, AcParams{}, t), ConfigError);
}

TEST_CASE("power at 30 C vs 25 C ambient tracks the calibrated slope") {
    const double p30 = steady_on_point(kHouse.thermal, AcParams{}, 22.0, 30.0).power;
    const double p25 = steady_on_point(kHouse.thermal, AcParams{}, 22.0, 25.0).power;
    CHECK(p30 / p25 == doctest::Approx(1.0 + 5 * 0.0136).epsilon(0.01));
}

TEST_CASE("thermometer reading mixes air and water") {
    ThermalParams p;
    ThermalState s;
    s.air = 22;
    s.water = 30;
    p.thermometer_water_fraction = 0;
    CHECK(thermometer_reading(s, p) == 22.0);
    p.thermometer_water_fraction = 1;
    CHECK(thermometer_reading(s, p) == 30.0);
    p.thermometer_water_fraction = 0.5;
    CHECK(thermometer_reading(s, p) == doctest::Approx(26.0));
}

TEST_CASE("all at ambient with no heat is a fixed point") {
    ThermalState s{27, 27, 27, 27, 27};
    HeatInputs none{0, 0, 0, 0};
    const auto next = step_thermal(s, ThermalParams{}, AcParams{}, none, false, 1.0);
    CHECK(next == s);
}

TEST_CASE("off steady state matches the closed form") {
    ThermalParams p;
    HeatInputs in{300, 20, 125, 0.25};
    const double amb = 30;
    ThermalState s{amb, amb, amb, amb, amb};
    for (int i = 0; i < 1000000; ++i) s = step_thermal(s, p, AcParams{}, in, false, 2.0);
    CHECK(s.air - amb == doctest::Approx((300 + 20 + 125) / p.wall_conductance).epsilon(1e-6));
    CHECK(s.water - s.air == doctest::Approx((300 + 0.75 * 125) / p.water_air_conductance).epsilon(1e-6));
    const auto eq = off_equilibrium(p, in, amb);
    CHECK(eq.air == doctest::Approx(s.air).epsilon(1e-9));
    CHECK(eq.water == doctest::Approx(s.water).epsilon(1e-9));
}

TEST_CASE("step_thermal validates dt") {
    CHECK_THROWS_AS(step_thermal(ThermalState{}, ThermalParams{}, AcParams{}, HeatInputs{}, false, 0.0),
                    ConfigError);
}

TEST_CASE("cycle durations match a fine-step reference") {
    const auto band = kHouse.deadband();
    for (double q : {200.0, 600.0}) {
        HeatInputs in;
        in.water_heat = q;
        const auto r = cycle_durations(kHouse.thermal, kHouse.ac, in, band, 25.0);
        const auto ref = oracle::reference_cycle({kHouse.thermal, kHouse.ac, in, 25.0}, band.lower, band.upper, 0.01);
        CHECK(r.on_time == doctest::Approx(ref.on).epsilon(0.01));
        CHECK(r.off_time == doctest::Approx(ref.off).epsilon(0.01));
    }
}

TEST_CASE("slowly settling cycles still land on the limit") {
    // An air-side thermometer approaches its limit cycle over many cycles.
    auto p = kHouse.thermal;
    p.thermometer_water_fraction = 0.15;
    HeatInputs in;
    in.water_heat = 375;
    const auto band = kHouse.deadband();
    const auto r = cycle_durations(p, kHouse.ac, in, band, 32.0);
    const auto ref = oracle::reference_cycle({p, kHouse.ac, in, 32.0}, band.lower, band.upper, 0.01, 2000);
    CHECK(r.cycles > 10);
    CHECK(r.on_time == doctest::Approx(ref.on).epsilon(0.01));
    CHECK(r.off_time == doctest::Approx(ref.off).epsilon(0.01));
}

TEST_CASE("cycle energy balance closes") {
    HeatInputs in;
    in.water_heat = 375;
    const auto r = cycle_durations(kHouse.thermal, kHouse.ac, in, kHouse.deadband(), 32.2);
    CHECK(std::abs(r.heat_injected - r.heat_removed) < 0.01 * r.heat_injected);
}

TEST_CASE("cycle errors at both ends") {
    HeatInputs cold{0, 0, 0, 0};
    CHECK_THROWS_AS(cycle_durations(kHouse.thermal, kHouse.ac, cold, kHouse.deadband(), 18.0), NeverOnError);
    HeatInputs hot;
    hot.water_heat = 5000;
    CHECK_THROWS_AS(cycle_durations(kHouse.thermal, kHouse.ac, hot, kHouse.deadband(), 32.2), NeverOffError);
}

TEST_CASE("low-injection off time scales as 1/Q") {
    // Q_tot includes the wall leak at mid-band. The lumped estimate
    // (C_a + C_w) dT / Q_tot bounds the off time from above; the product
    // off_time * Q_tot stays within 20% across the range.
    const auto& p = kHouse.thermal;
    const double amb = 25.0;
    std::vector<double> product;
    for (double q : {20.0, 50.0, 100.0, 200.0}) {
        HeatInputs in{q, 0, 0, 0};
        const auto r = cycle_durations(p, kHouse.ac, in, kHouse.deadband(), amb);
        const double qtot = q + p.wall_conductance * (amb - kHouse.setpoint);
        const double lumped = (p.air_capacity + p.water_capacity) * 1.0 / qtot;
        CHECK(r.off_time < lumped);
        CHECK(r.off_time > p.air_capacity * 1.0 / qtot);
        product.push_back(r.off_time * qtot);
    }
    for (double x : product) CHECK(x == doctest::Approx(product.front()).epsilon(0.2));
}

TEST_CASE("cycle duration rises as the thermometer moves to the water") {
    HeatInputs in;
    in.water_heat = 375;
    double last = 0;
    for (double f = 0.05; f < 0.96; f += 0.1) {
        auto p = kHouse.thermal;
        p.thermometer_water_fraction = f;
        const double period = cycle_durations(p, kHouse.ac, in, kHouse.deadband(), 25.0).period();
        CHECK(period > last);
        last = period;
    }
}
