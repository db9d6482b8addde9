#include "acfleet/house.hpp"

#include <algorithm>
#include <cmath>

#include "acfleet/errors.hpp"
#include "acfleet/ode.hpp"

namespace acfleet::house {

namespace {

constexpr double kEventResolution = 0.01; // s

using Vec5 = ode::Vec<5>;

// Advances continuous state and timers without any switching.
HouseState advance(const HouseState& s, const HouseParams& p, double h) {
    const bool on = s.is_on();
    const double ambient = s.thermal.ambient;
    const double lag = p.sensor_lag;
    auto f = [&](const Vec5& y) {
        const thermal::ThermalState ts{y[0], y[1], y[2], y[3], ambient};
        const auto r = thermal::rates(ts, p.thermal, p.ac, p.heat, on);
        const double sensor =
            lag > 0 ? (thermal::thermometer_reading(ts, p.thermal) - y[4]) / lag : 0.0;
        return Vec5{r.water, r.air, r.evaporator, r.condenser, sensor};
    };
    const Vec5 y0{s.thermal.water, s.thermal.air, s.thermal.evaporator, s.thermal.condenser,
                  s.measured};
    const Vec5 y = ode::rk4_step(f, y0, h);
    for (double v : y)
        if (!std::isfinite(v)) throw IntegrationFailure("non-finite house state");

    HouseState out = s;
    out.thermal = {y[0], y[1], y[2], y[3], ambient};
    out.measured = lag > 0 ? y[4] : thermal::thermometer_reading(out.thermal, p.thermal);
    out.time_in_state += h;
    if (on) out.on_time += h;
    if (out.compressor == Compressor::LockedOff || out.compressor == Compressor::LockedOn) {
        out.lock_remaining = std::max(0.0, out.lock_remaining - h);
        // Snap tiny residues so bisection can land exactly on expiry.
        if (out.lock_remaining <= 1e-9) {
            out.lock_remaining = 0.0;
            out.compressor =
                out.compressor == Compressor::LockedOff ? Compressor::Off : Compressor::On;
        }
    }
    return out;
}

} // namespace

std::string_view to_string(Compressor c) {
    switch (c) {
    case Compressor::On: return "on";
    case Compressor::Off: return "off";
    case Compressor::LockedOff: return "locked_off";
    case Compressor::LockedOn: return "locked_on";
    }
    return "off";
}

std::optional<Compressor> parse_compressor(std::string_view s) {
    if (s == "on") return Compressor::On;
    if (s == "off") return Compressor::Off;
    if (s == "locked_off") return Compressor::LockedOff;
    if (s == "locked_on") return Compressor::LockedOn;
    return std::nullopt;
}

void HouseParams::validate() const {
    thermal.validate();
    ac.validate();
    heat.validate();
    if (!(deadband_halfwidth > 0)) throw ConfigError("deadband half-width must be positive");
    if (!(sensor_lag >= 0)) throw ConfigError("sensor lag must be >= 0");
}

HouseState initial_state(const HouseParams& p, double ambient, double position, bool on) {
    const auto band = p.deadband();
    const double t = band.lower + std::clamp(position, 0.0, 1.0) * (band.upper - band.lower);
    HouseState s;
    s.thermal.ambient = ambient;
    // Put the thermometer reading at `t` with the water offset that carries
    // the programmed heat into the air.
    const double water_offset = p.heat.into_water() / p.thermal.water_air_conductance;
    s.thermal.air = t - p.thermal.thermometer_water_fraction * water_offset;
    s.thermal.water = s.thermal.air + water_offset;
    if (on) {
        const auto op = thermal::steady_on_point(p.thermal, p.ac, s.thermal.air, ambient);
        s.thermal.evaporator = op.evaporator;
        s.thermal.condenser = op.condenser;
        s.compressor = Compressor::On;
    } else {
        s.thermal.evaporator = s.thermal.air;
        s.thermal.condenser = ambient;
        s.compressor = Compressor::Off;
    }
    s.measured = thermal::thermometer_reading(s.thermal, p.thermal);
    return s;
}

SwitchCommand thermostat_decision(const HouseState& s, const HouseParams& p) {
    const auto band = p.deadband();
    SwitchCommand cmd{Target::NoChange, Source::Thermostat};
    if (s.compressor == Compressor::Off && s.measured >= band.upper) cmd.target = Target::On;
    else if (s.compressor == Compressor::On && s.measured <= band.lower) cmd.target = Target::Off;
    return cmd;
}

CommandOutcome apply_command(const HouseState& s, SwitchCommand cmd, const HouseParams& p) {
    const auto band = p.deadband();
    const bool external = cmd.source != Source::Thermostat;
    HouseState out = s;
    switch (cmd.target) {
    case Target::NoChange: return {s, true};
    case Target::On:
        if (s.is_on()) return {s, true};
        if (s.compressor == Compressor::LockedOff) return {s, false};
        if (external && s.measured <= band.lower) return {s, false};
        out.compressor = p.ac.min_on_duration > 0 ? Compressor::LockedOn : Compressor::On;
        out.lock_remaining = p.ac.min_on_duration;
        out.time_in_state = 0.0;
        out.on_time = 0.0;
        out.just_started = true;
        return {out, true};
    case Target::Off:
        if (!s.is_on()) return {s, true};
        if (s.compressor == Compressor::LockedOn) return {s, false};
        if (external && s.measured >= band.upper) return {s, false};
        out.compressor = p.ac.lockout_duration > 0 ? Compressor::LockedOff : Compressor::Off;
        out.lock_remaining = p.ac.lockout_duration;
        out.time_in_state = 0.0;
        out.just_started = false;
        return {out, true};
    }
    return {s, false};
}

HouseState step_house(const HouseState& state, const HouseParams& p, double ambient, double dt) {
    if (!(dt > 0)) throw ConfigError("house step requires dt > 0");
    HouseState s = state;
    // A start commanded right before this step is still reported by this step.
    s.just_started = state.just_started && state.on_time == 0.0;
    s.thermal.ambient = ambient;
    double remaining = dt;
    // Each pass either finishes the step or performs one thermostat switch;
    // lockout makes more than a couple of switches per step impossible.
    for (int pass = 0; pass < 8 && remaining > 0; ++pass) {
        HouseState next = advance(s, p, remaining);
        if (thermostat_decision(next, p).target == Target::NoChange) {
            s = next;
            remaining = 0;
            break;
        }
        double lo = 0.0, hi = remaining;
        while (hi - lo > kEventResolution) {
            const double mid = 0.5 * (lo + hi);
            const HouseState trial = advance(s, p, mid);
            (thermostat_decision(trial, p).target != Target::NoChange ? hi : lo) = mid;
        }
        s = advance(s, p, hi);
        remaining -= hi;
        const bool started = s.just_started;
        s = apply_command(s, thermostat_decision(s, p), p).state;
        s.just_started = s.just_started || started;
    }
    if (remaining > 0) s = advance(s, p, remaining);
    return s;
}

PowerSample instantaneous_power(const HouseState& s, const HouseParams& p) {
    PowerSample out{0.0, std::nullopt};
    if (!s.is_on()) return out;
    out.active = thermal::ac_power(s.thermal, p.ac, true);
    if (s.just_started || s.on_time < p.ac.inrush_duration)
        out.inrush = InrushEvent{p.ac.inrush_multiple * out.active, p.ac.inrush_duration};
    return out;
}

} // namespace acfleet::house
