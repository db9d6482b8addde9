#include "acfleet/calibration.hpp"

#include <cmath>

#include "acfleet/errors.hpp"

namespace acfleet::thermal {

AcParams calibrate_ac(const ThermalParams& params, AcParams base,
                      const CalibrationTargets& t) {
    params.validate();
    const double q = t.rated_cooling;
    const double evap = t.rating_air_temp - q / params.evaporator_conductance;
    const double evap_k = evap + kKelvinOffset;
    base.cooling_prefactor = q * evap_k * std::exp(base.vapor_temperature / evap_k);

    // With the evaporator pinned, power is affine in the condenser temperature:
    //   P = c (T2 - T1) + W_f,  c = loss_factor * q / T1[K]
    // and the condenser balance gives dP/dT_amb = c h2 / (h2 - c).
    const double h2 = params.condenser_conductance;
    const double p = t.rated_power;
    const double c = t.ambient_power_slope * p * h2 / (h2 + t.ambient_power_slope * p);
    base.loss_factor = c * evap_k / q;
    base.friction_power =
        (p * (h2 - c) - c * (h2 * (t.rating_ambient - evap) + q)) / h2;
    if (base.loss_factor < 1.0)
        throw ConfigError("calibration targets imply a loss factor below 1");
    if (base.friction_power < 0.0)
        throw ConfigError("calibration targets imply negative friction power");
    return base;
}

double ambient_power_slope(const ThermalParams& params, const AcParams& ac, double air_temp,
                           double ambient, double delta) {
    const double lo = steady_on_point(params, ac, air_temp, ambient - delta).power;
    const double hi = steady_on_point(params, ac, air_temp, ambient + delta).power;
    const double mid = steady_on_point(params, ac, air_temp, ambient).power;
    return (hi - lo) / (2.0 * delta) / mid;
}

} // namespace acfleet::thermal
