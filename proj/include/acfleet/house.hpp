#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "acfleet/thermal.hpp"

namespace acfleet::house {

enum class Compressor { On, Off, LockedOff, LockedOn };

std::string_view to_string(Compressor c);
std::optional<Compressor> parse_compressor(std::string_view s);

enum class Target { On, Off, NoChange };
enum class Source { Thermostat, Aggregator, Device };

struct SwitchCommand {
    Target target = Target::NoChange;
    Source source = Source::Aggregator;
};

struct HouseParams {
    std::string id;
    thermal::ThermalParams thermal;
    thermal::AcParams ac;
    thermal::HeatInputs heat;
    double setpoint = 22.0;           // °C
    double deadband_halfwidth = 0.5;  // °C
    double sensor_lag = 12.0;         // s, first-order lag of the thermostat sensor

    thermal::Deadband deadband() const {
        return {setpoint - deadband_halfwidth, setpoint + deadband_halfwidth};
    }
    /// Position of a temperature inside the deadband: 0 at the lower edge, 1 at the upper.
    double position(double temp) const {
        return (temp - (setpoint - deadband_halfwidth)) / (2.0 * deadband_halfwidth);
    }
    void validate() const;
};

struct HouseState {
    thermal::ThermalState thermal;
    double measured = 22.0;      // lagged thermostat sensor, °C
    Compressor compressor = Compressor::Off;
    double lock_remaining = 0.0; // s, meaningful in LockedOff / LockedOn
    double time_in_state = 0.0;  // s since the last on/off transition
    double on_time = 0.0;        // s since the last off->on transition
    bool just_started = false;   // turned on during the last step or command

    bool is_on() const { return compressor == Compressor::On || compressor == Compressor::LockedOn; }
};

/// House placed at `position` within its deadband with the thermal nodes
/// near their cycle-average operating point.
HouseState initial_state(const HouseParams& params, double ambient, double position, bool on);

SwitchCommand thermostat_decision(const HouseState& state, const HouseParams& params);

struct CommandOutcome {
    HouseState state;
    bool accepted;
};

/// Feasibility-filtered state transition. Rejected commands leave the state
/// untouched. Besides the lockout guards, an aggregator On below the lower
/// deadband edge and an aggregator Off above the upper edge are rejected,
/// since the thermostat would reverse them within the same step.
CommandOutcome apply_command(const HouseState& state, SwitchCommand cmd, const HouseParams& params);

/// Advances physics, sensor lag and lockout timers by `dt`; thermostat
/// switching inside the step is located by bisection to 10 ms.
HouseState step_house(const HouseState& state, const HouseParams& params, double ambient, double dt);

struct InrushEvent {
    double peak_power; // W
    double duration;   // s
};

struct PowerSample {
    double active; // W, energy-accurate compressor power
    std::optional<InrushEvent> inrush;
};

PowerSample instantaneous_power(const HouseState& state, const HouseParams& params);

} // namespace acfleet::house
