#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace acfleet::signal {

/// Uniformly sampled power target.
struct ReferenceSignal {
    double start = 0.0;  // s, time of samples[0]
    double period = 2.0; // s
    std::vector<double> samples; // W
    double baseline = 0.0;
    double amplitude_fraction = 0.0;

    /// Sample-and-hold lookup; times past the end hold the last value.
    double at(double t) const;
    double duration() const { return period * static_cast<double>(samples.size()); }
};

ReferenceSignal square_wave(double baseline, double amplitude_fraction, double period,
                            double duration, double sample_period = 2.0);

/// Normalized trace, values nominally in [-1, 1].
struct Trace {
    std::vector<double> time;
    std::vector<double> value;
};

Trace read_trace(const std::filesystem::path& file);
Trace parse_trace(const std::string& text);
void write_trace(const std::filesystem::path& file, const Trace& trace);

/// baseline * (1 + af * value), linearly resampled onto the control grid
/// starting at the first trace timestamp.
ReferenceSignal from_trace(const Trace& trace, double baseline, double amplitude_fraction,
                           double sample_period = 2.0, double duration = 0.0);

ReferenceSignal load_trace(const std::filesystem::path& file, double baseline,
                           double amplitude_fraction, double sample_period = 2.0,
                           double duration = 0.0);

/// Band-limited zero-mean RegD-like trace: white noise through two cascaded
/// first-order low-pass stages, mean removed, peak scaled to 1.
struct RegdSpec {
    double duration = 2400.0;    // s
    double step = 2.0;           // s
    double time_constant = 60.0; // s, per low-pass stage
    std::uint64_t seed = 7;
};

Trace synthetic_regd(const RegdSpec& spec);

/// Time average of `power` sampled every `dt`. Throws InsufficientData if
/// the window is shorter than `min_periods` natural cycle periods.
double baseline_power(std::span<const double> power, double dt, double natural_period,
                      double min_periods = 3.0);

} // namespace acfleet::signal
