#pragma once

#include "acfleet/thermal.hpp"

namespace acfleet::thermal {

/// Nameplate and lab anchors the AC model is fitted to.
struct CalibrationTargets {
    double rated_cooling = 1465.0;     // W, 5000 BTU/h
    double rated_power = 455.0;        // W at the rating point
    double rating_air_temp = 26.7;     // °C (80 °F indoor)
    double rating_ambient = 35.0;      // °C (95 °F outdoor)
    double ambient_power_slope = 0.0136; // fractional power change per °C
};

/// Closed-form fit of the cooling prefactor, loss factor and friction power
/// so that the steady on-point hits the targets exactly. Throws ConfigError
/// if the targets imply a loss factor below 1 or negative friction.
AcParams calibrate_ac(const ThermalParams& params, AcParams base,
                      const CalibrationTargets& targets = {});

/// Fractional change of steady on-power per °C of ambient, by central difference.
double ambient_power_slope(const ThermalParams& params, const AcParams& ac, double air_temp,
                           double ambient, double delta = 0.5);

} // namespace acfleet::thermal
