#include "acfleet/thermal.hpp"

#include <cmath>
#include <string>

#include "acfleet/errors.hpp"
#include "acfleet/ode.hpp"

namespace acfleet::thermal {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
}

double to_kelvin(double celsius) { return celsius + kKelvinOffset; }

// Vapor-pressure driven mass flow times latent heat, per unit prefactor.
double unit_cooling(double evaporator_c, double vapor_temperature) {
    const double t = to_kelvin(evaporator_c);
    return std::exp(-vapor_temperature / t) / t;
}

// State layout used by the integrators: water, air, evaporator, condenser,
// then three running integrals (heat in incl. wall leak, heat pumped, work).
using Aug = ode::Vec<7>;

ThermalState unpack(const Aug& y, double ambient) {
    return ThermalState{y[0], y[1], y[2], y[3], ambient};
}

Aug pack(const ThermalState& s) { return Aug{s.water, s.air, s.evaporator, s.condenser, 0, 0, 0}; }

Aug augmented_rates(const Aug& y, double ambient, const ThermalParams& p, const AcParams& ac,
                    const HeatInputs& in, bool on) {
    const ThermalState s = unpack(y, ambient);
    const double pumped = cooling_rate(s, ac, on);
    const double work = on ? ac.loss_factor * pumped * (s.condenser - s.evaporator) /
                                     to_kelvin(s.evaporator) +
                                 ac.friction_power
                           : 0.0;
    const double wall = p.wall_conductance * (ambient - s.air);
    const double water_to_air = p.water_air_conductance * (s.water - s.air);
    const double air_to_evap = p.evaporator_conductance * (s.air - s.evaporator);
    Aug d;
    d[0] = (-water_to_air + in.into_water()) / p.water_capacity;
    d[1] = (wall + water_to_air + in.into_air() - air_to_evap) / p.air_capacity;
    d[2] = (air_to_evap - pumped) / p.evaporator_capacity;
    d[3] = (p.condenser_conductance * (ambient - s.condenser) + pumped + work) /
           p.condenser_capacity;
    d[4] = in.total() + wall;
    d[5] = pumped;
    d[6] = work;
    return d;
}

Aug advance(const Aug& y, double ambient, const ThermalParams& p, const AcParams& ac,
            const HeatInputs& in, bool on, double dt) {
    auto f = [&](const Aug& v) { return augmented_rates(v, ambient, p, ac, in, on); };
    Aug out = ode::rk4_step(f, y, dt);
    for (double v : out)
        if (!std::isfinite(v)) throw IntegrationFailure("non-finite thermal state");
    return out;
}

double reading(const Aug& y, const ThermalParams& p) {
    return (1.0 - p.thermometer_water_fraction) * y[1] + p.thermometer_water_fraction * y[0];
}

// Evaporator temperature at which the running AC balances all heat entering
// the house; monotone in the evaporator temperature so bisection suffices.
double on_equilibrium_evaporator(const ThermalParams& p, const AcParams& ac,
                                 const HeatInputs& in, double ambient) {
    auto balance = [&](double evap) {
        const double q = ac.cooling_prefactor * unit_cooling(evap, ac.vapor_temperature);
        const double air = evap + q / p.evaporator_conductance;
        return p.wall_conductance * (ambient - air) + in.total() - q;
    };
    double lo = kMinEvaporatorTemp, hi = kMaxEvaporatorTemp;
    if (balance(hi) > 0) return hi;
    if (balance(lo) < 0) return lo;
    for (int i = 0; i < 200 && hi - lo > 1e-10; ++i) {
        const double mid = 0.5 * (lo + hi);
        (balance(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

void ThermalParams::validate() const {
    require(water_capacity > 0 && air_capacity > 0 && evaporator_capacity > 0 &&
                condenser_capacity > 0,
            "heat capacities must be positive");
    require(water_air_conductance > 0 && evaporator_conductance > 0 &&
                condenser_conductance > 0 && wall_conductance > 0,
            "conductances must be positive");
    require(thermometer_water_fraction >= 0 && thermometer_water_fraction <= 1,
            "thermometer water fraction must lie in [0, 1]");
}

void AcParams::validate() const {
    require(cooling_prefactor > 0, "cooling prefactor must be positive");
    require(vapor_temperature > 0, "vapor temperature must be positive");
    require(loss_factor >= 1, "loss factor must be >= 1");
    require(friction_power >= 0, "friction power must be >= 0");
    require(inrush_multiple >= 1, "inrush multiple must be >= 1");
    require(inrush_duration >= 0, "inrush duration must be >= 0");
    require(lockout_duration >= 0, "lockout duration must be >= 0");
    require(min_on_duration >= 0, "minimum on duration must be >= 0");
}

void HeatInputs::validate() const {
    require(water_heat >= 0 && air_heat >= 0 && fixed_heat >= 0, "heat inputs must be >= 0");
    require(fixed_air_fraction >= 0 && fixed_air_fraction <= 1,
            "fixed heat air fraction must lie in [0, 1]");
}

double cooling_rate(const ThermalState& state, const AcParams& ac, bool on) {
    if (!on) return 0.0;
    if (!(state.evaporator >= kMinEvaporatorTemp && state.evaporator <= kMaxEvaporatorTemp))
        throw ModelDivergence("evaporator temperature " + std::to_string(state.evaporator) +
                              " °C outside model band");
    return ac.cooling_prefactor * unit_cooling(state.evaporator, ac.vapor_temperature);
}

double ac_power(const ThermalState& state, const AcParams& ac, bool on) {
    if (!on) return 0.0;
    const double pumped = cooling_rate(state, ac, on);
    return ac.loss_factor * pumped * (state.condenser - state.evaporator) /
               to_kelvin(state.evaporator) +
           ac.friction_power;
}

double thermometer_reading(const ThermalState& state, const ThermalParams& params) {
    return (1.0 - params.thermometer_water_fraction) * state.air +
           params.thermometer_water_fraction * state.water;
}

ThermalRates rates(const ThermalState& state, const ThermalParams& params, const AcParams& ac,
                   const HeatInputs& inputs, bool on) {
    const Aug d = augmented_rates(pack(state), state.ambient, params, ac, inputs, on);
    return ThermalRates{d[0], d[1], d[2], d[3]};
}

ThermalState step_thermal(const ThermalState& state, const ThermalParams& params,
                          const AcParams& ac, const HeatInputs& inputs, bool on, double dt) {
    if (!(dt > 0)) throw ConfigError("thermal step requires dt > 0");
    return unpack(advance(pack(state), state.ambient, params, ac, inputs, on, dt), state.ambient);
}

ThermalState off_equilibrium(const ThermalParams& params, const HeatInputs& inputs,
                             double ambient) {
    ThermalState s;
    s.ambient = ambient;
    s.air = ambient + inputs.total() / params.wall_conductance;
    s.water = s.air + inputs.into_water() / params.water_air_conductance;
    s.evaporator = s.air;
    s.condenser = ambient;
    return s;
}

OnOperatingPoint steady_on_point(const ThermalParams& params, const AcParams& ac,
                                 double air_temp, double ambient) {
    auto excess = [&](double evap) {
        return params.evaporator_conductance * (air_temp - evap) -
               ac.cooling_prefactor * unit_cooling(evap, ac.vapor_temperature);
    };
    double lo = kMinEvaporatorTemp, hi = air_temp;
    if (excess(lo) < 0) throw ModelDivergence("no evaporator operating point inside the band");
    for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) > 0 ? lo : hi) = mid;
    }
    OnOperatingPoint op{};
    op.evaporator = 0.5 * (lo + hi);
    op.cooling = ac.cooling_prefactor * unit_cooling(op.evaporator, ac.vapor_temperature);
    // Condenser balance is linear in its temperature once the evaporator is fixed.
    const double c = ac.loss_factor * op.cooling / to_kelvin(op.evaporator);
    const double h2 = params.condenser_conductance;
    op.condenser = (h2 * ambient + op.cooling + ac.friction_power - c * op.evaporator) / (h2 - c);
    op.power = c * (op.condenser - op.evaporator) + ac.friction_power;
    return op;
}

CycleResult cycle_durations(const ThermalParams& params, const AcParams& ac,
                            const HeatInputs& inputs, Deadband deadband, double ambient,
                            const CycleOptions& options) {
    params.validate();
    ac.validate();
    inputs.validate();
    if (!(deadband.upper > deadband.lower)) throw ConfigError("deadband upper must exceed lower");

    const ThermalState off_eq = off_equilibrium(params, inputs, ambient);
    if (thermometer_reading(off_eq, params) <= deadband.upper)
        throw NeverOnError("off-state equilibrium reading stays below the upper deadband edge");

    const double evap_eq = on_equilibrium_evaporator(params, ac, inputs, ambient);
    {
        const double q = ac.cooling_prefactor * unit_cooling(evap_eq, ac.vapor_temperature);
        ThermalState on_eq;
        on_eq.air = evap_eq + q / params.evaporator_conductance;
        on_eq.water = on_eq.air + inputs.into_water() / params.water_air_conductance;
        if (thermometer_reading(on_eq, params) >= deadband.lower)
            throw NeverOffError("heat injection meets or exceeds cooling capacity");
    }

    const double mid = 0.5 * (deadband.lower + deadband.upper);
    ThermalState init;
    init.ambient = ambient;
    init.air = mid;
    init.water = mid + inputs.into_water() / params.water_air_conductance;
    init.evaporator = mid;
    init.condenser = ambient;
    Aug y = pack(init);

    bool on = false;
    double phase_time = 0.0;
    double last_on = -1, last_off = -1;
    Aug cycle_start = y; // integrals at the start of the current off phase
    double prev_on = -1, prev_off = -1;
    double prev_d_on = -1, prev_d_off = -1;
    CycleResult result{};
    std::size_t cycles = 0;

    auto crossed = [&](const Aug& v) {
        const double r = reading(v, params);
        return on ? r <= deadband.lower : r >= deadband.upper;
    };

    for (;;) {
        Aug next = advance(y, ambient, params, ac, inputs, on, options.dt);
        double h = options.dt;
        if (crossed(next)) {
            double lo = 0.0, hi = options.dt;
            while (hi - lo > options.event_resolution) {
                const double m = 0.5 * (lo + hi);
                const Aug trial = advance(y, ambient, params, ac, inputs, on, m);
                (crossed(trial) ? hi : lo) = m;
            }
            h = hi;
            next = advance(y, ambient, params, ac, inputs, on, h);
            y = next;
            phase_time += h;
            if (on) {
                last_on = phase_time;
                // A full cycle closes at the end of an on phase.
                if (last_off >= 0) {
                    ++cycles;
                    result.on_time = last_on;
                    result.off_time = last_off;
                    result.heat_injected = y[4] - cycle_start[4];
                    result.heat_removed = y[5] - cycle_start[5];
                    result.electric_energy = y[6] - cycle_start[6];
                    result.cycles = cycles;
                    bool settled = false;
                    if (prev_on > 0) {
                        const double d_on = std::abs(last_on - prev_on);
                        const double d_off = std::abs(last_off - prev_off);
                        // The approach is geometric, so the distance left to the
                        // limit is the last change over (1 - ratio). Changes below
                        // the event resolution are bisection noise.
                        auto remaining = [&](double d, double d_prev) {
                            if (d <= 2 * options.event_resolution) return d;
                            if (d_prev <= 0 || d >= d_prev) return HUGE_VAL;
                            return d / (1.0 - d / d_prev);
                        };
                        settled = remaining(d_on, prev_d_on) < options.convergence_tol * last_on &&
                                  remaining(d_off, prev_d_off) < options.convergence_tol * last_off;
                        prev_d_on = d_on;
                        prev_d_off = d_off;
                    }
                    if (settled && cycles >= options.min_cycles) return result;
                    if (cycles >= options.max_cycles)
                        throw ConvergenceTimeout("limit cycle did not settle");
                    prev_on = last_on;
                    prev_off = last_off;
                }
                cycle_start = y;
            } else {
                last_off = phase_time;
            }
            on = !on;
            phase_time = 0.0;
            continue;
        }
        y = next;
        phase_time += h;
        if (phase_time > options.max_phase_duration) {
            if (on) throw NeverOffError("on phase exceeded the maximum phase duration");
            throw NeverOnError("off phase exceeded the maximum phase duration");
        }
    }
}

} // namespace acfleet::thermal
