#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "acfleet/fleet.hpp"

namespace acfleet::grid {

struct TransformerSpec {
    std::string id;
    double rating = 1.0; // W at 1.0 p.u.
    std::vector<std::size_t> houses; // fleet indices
};

enum class SizeLaw { Uniform, Random };

/// Partitions houses over transformers. Uniform shuffles the houses and
/// deals them round-robin (sizes differ by at most one); Random picks a
/// transformer per house. Ratings start at 1 W until sized.
std::vector<TransformerSpec> assign_houses(std::size_t n_houses, std::size_t n_transformers,
                                           SizeLaw law, std::uint64_t seed);

/// Raw power (W) carried by each transformer in one frame.
std::vector<double> transformer_power(const std::vector<TransformerSpec>& specs,
                                      const fleet::TelemetryFrame& frame);

/// rating = peak / headroom; zero peaks fall back to the houses' expected
/// on-power.
void set_ratings(std::vector<TransformerSpec>& specs, std::span<const double> peaks,
                 double headroom, double fallback_device_power);

/// Sets each rating so the largest loading seen over `frames` equals
/// `headroom` p.u. Transformers that never carried load get the sum of
/// their houses' expected on-power.
void size_ratings(std::vector<TransformerSpec>& specs,
                  std::span<const fleet::TelemetryFrame> frames, double headroom,
                  double fallback_device_power);

struct TransformerStats {
    double peak_pu = 0.0;
    double max_consecutive_overload = 0.0; // s
    double current_overload = 0.0;         // s, running streak
    std::size_t overload_samples = 0;
    double overload_excess = 0.0;          // sum of (loading - 1) over overloaded samples
    std::size_t simultaneous_inrush = 0;   // frames with >= 2 starts
    double peak_inrush_pu = 0.0;
};

struct OverloadReport {
    std::vector<TransformerStats> transformers;
    double max_consecutive_overload() const;
    double peak_pu() const;
    /// Mean loading above 1 p.u. over every overloaded sample of every transformer.
    double mean_overload_excess() const;
    std::size_t simultaneous_inrush() const;
};

class OverloadTracker {
  public:
    OverloadTracker(std::vector<TransformerSpec> specs, std::size_t n_houses);

    /// Folds one frame of duration `dt`; returns loading per transformer.
    std::vector<double> update(const fleet::TelemetryFrame& frame, double dt);

    const OverloadReport& report() const { return report_; }
    const std::vector<TransformerSpec>& specs() const { return specs_; }

  private:
    std::vector<TransformerSpec> specs_;
    std::vector<std::size_t> owner_;
    OverloadReport report_;
};

} // namespace acfleet::grid
