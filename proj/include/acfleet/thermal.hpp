#pragma once

#include <array>
#include <cstddef>

namespace acfleet::thermal {

inline constexpr double kKelvinOffset = 273.15;

/// Lumped heat capacities and conductances of one model house.
///
/// Four thermal nodes: the water loop (stands in for the solid mass of a
/// real house), the room air, the AC evaporator and the AC condenser.
struct ThermalParams {
    double water_capacity = 4.0e5;        // J/°C
    double air_capacity = 3.0e4;          // J/°C
    double evaporator_capacity = 3.0e3;   // J/°C
    double condenser_capacity = 5.0e3;    // J/°C
    double water_air_conductance = 200.0; // W/°C
    double evaporator_conductance = 120.0;
    double condenser_conductance = 150.0;
    double wall_conductance = 5.0;
    /// Fraction of the thermometer reading contributed by the water node.
    double thermometer_water_fraction = 0.6;

    void validate() const;
    bool operator==(const ThermalParams&) const = default;
};

/// Lossy Carnot heat pump with an ideal-gas vapor-pressure mass flow.
struct AcParams {
    /// Pumped-heat prefactor (W·K); absorbs displacement, gas constant and
    /// vapor-pressure amplitude.
    double cooling_prefactor = 1652425011.0;
    /// Latent heat over specific gas constant of the refrigerant (K).
    double vapor_temperature = 2380.0;
    double loss_factor = 1.166831304;
    double friction_power = 257.053967; // W
    double inrush_multiple = 5.5;
    double inrush_duration = 0.125;  // s
    double lockout_duration = 180.0; // s
    double min_on_duration = 0.0;    // s

    void validate() const;
    bool operator==(const AcParams&) const = default;
};

struct ThermalState {
    double water = 22.0; // °C
    double air = 22.0;
    double evaporator = 22.0;
    double condenser = 22.0;
    double ambient = 22.0;

    bool operator==(const ThermalState&) const = default;
};

struct HeatInputs {
    double water_heat = 200.0; // programmable heater, W
    double air_heat = 0.0;     // direct air injection, W
    double fixed_heat = 125.0; // pump + duct fan, W
    /// Share of the fixed load deposited in the air node; rest goes to water.
    double fixed_air_fraction = 0.0;

    double total() const { return water_heat + air_heat + fixed_heat; }
    double into_water() const { return water_heat + (1.0 - fixed_air_fraction) * fixed_heat; }
    double into_air() const { return air_heat + fixed_air_fraction * fixed_heat; }

    void validate() const;
};

/// Evaporator temperature band (°C) outside which `cooling_rate` reports divergence.
inline constexpr double kMinEvaporatorTemp = -50.0;
inline constexpr double kMaxEvaporatorTemp = 60.0;

/// Heat pumped out of the evaporator (W). Zero when the compressor is off.
double cooling_rate(const ThermalState& state, const AcParams& ac, bool on);

/// Electrical power of the compressor (W). Zero when off.
double ac_power(const ThermalState& state, const AcParams& ac, bool on);

double thermometer_reading(const ThermalState& state, const ThermalParams& params);

struct ThermalRates {
    double water, air, evaporator, condenser; // °C/s
};

ThermalRates rates(const ThermalState& state, const ThermalParams& params, const AcParams& ac,
                   const HeatInputs& inputs, bool on);

/// One classical RK4 step. Ambient is held constant over the step.
ThermalState step_thermal(const ThermalState& state, const ThermalParams& params,
                          const AcParams& ac, const HeatInputs& inputs, bool on, double dt);

/// Equilibrium with the compressor off (all rates zero).
ThermalState off_equilibrium(const ThermalParams& params, const HeatInputs& inputs, double ambient);

/// Quasi-steady operating point with the compressor running and the room air
/// held at `air_temp` (the thermostat keeps it in the deadband).
struct OnOperatingPoint {
    double evaporator;   // °C
    double condenser;    // °C
    double cooling;      // W
    double power;        // W
};

OnOperatingPoint steady_on_point(const ThermalParams& params, const AcParams& ac, double air_temp,
                                 double ambient);

struct Deadband {
    double lower; // °C
    double upper;
};

struct CycleOptions {
    double dt = 1.0;                    // s
    double event_resolution = 0.01;     // s, bisection stop for threshold crossings
    double convergence_tol = 0.005;     // relative distance to the limit cycle, extrapolated
    std::size_t min_cycles = 3;
    std::size_t max_cycles = 400;
    double max_phase_duration = 2.0e5;  // s, a phase longer than this diverges
};

struct CycleResult {
    double on_time;        // s
    double off_time;       // s
    double heat_injected;  // J over the last full cycle, including wall leak
    double heat_removed;   // J pumped by the evaporator over the same cycle
    double electric_energy; // J drawn by the compressor over the same cycle
    std::size_t cycles;    // cycles simulated before convergence

    double period() const { return on_time + off_time; }
    double duty() const { return on_time / period(); }
};

/// Steady limit cycle of an ideal (lag-free) thermostat acting on the
/// thermometer reading. Throws NeverOnError / NeverOffError when the house
/// cannot cycle.
CycleResult cycle_durations(const ThermalParams& params, const AcParams& ac,
                            const HeatInputs& inputs, Deadband deadband, double ambient,
                            const CycleOptions& options = {});

} // namespace acfleet::thermal
