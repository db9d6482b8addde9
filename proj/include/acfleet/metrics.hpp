#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace acfleet::metrics {

/// sqrt(mean((achieved - reference)^2)) / mean(reference).
double nrmse(std::span<const double> reference, std::span<const double> achieved);

struct ScoreOptions {
    double dt = 2.0;          // s between samples
    double window = 300.0;    // s per scored block
    double max_delay = 300.0; // s searched for the best-correlating lag
};

struct PjmScore {
    double correlation = 0.0;
    double delay = 0.0;
    double precision = 0.0;
    double composite = 0.0;
    std::size_t windows = 0;
};

/// Per window: correlation is the best Pearson correlation of the response
/// shifted by 0..max_delay against the reference, delay is
/// 1 - lag/max_delay at that best lag, precision is
/// 1 - mean|error| / mean(reference). Each is clamped to [0, 1]; the
/// composite is their mean. Window results are averaged.
PjmScore pjm_score(std::span<const double> reference, std::span<const double> achieved,
                   const ScoreOptions& options = {});

/// Sum of the selected devices' power per frame. `power` is frame-major.
std::vector<double> group_series(const std::vector<std::vector<double>>& power,
                                 std::span<const std::size_t> devices);

/// Variance of a group's power, scaled up to the aggregate mean, around
/// the reference.
double scaled_tracking_variance(std::span<const double> group, std::span<const double> aggregate,
                                std::span<const double> reference);

struct FairnessReport {
    double remote_variance = 0.0;
    std::vector<double> virtual_variances;
    double min_virtual = 0.0;
    double max_virtual = 0.0;
    bool inside = false;
};

/// Compares the remote group against `n_groups` random disjoint groups of
/// `group_size` virtual devices.
FairnessReport fairness_variance(const std::vector<std::vector<double>>& power,
                                 std::span<const double> reference,
                                 std::span<const std::size_t> remote,
                                 std::span<const std::size_t> virtual_devices,
                                 std::size_t group_size, std::size_t n_groups, std::uint64_t seed);

struct SwitchingReport {
    double remote_rate = 0.0;  // switches per device-hour
    double virtual_rate = 0.0;
    double group_std = 0.0;    // spread of random virtual group means
    bool within = false;       // |remote - virtual| < 2 group_std
};

SwitchingReport switching_comparison(std::span<const double> switches_per_device, double hours,
                                     std::span<const std::size_t> remote,
                                     std::span<const std::size_t> virtual_devices,
                                     std::size_t group_size, std::size_t n_groups,
                                     std::uint64_t seed);

} // namespace acfleet::metrics
