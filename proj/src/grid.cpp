#include "acfleet/grid.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>

#include "acfleet/errors.hpp"
#include "acfleet/rng.hpp"

namespace acfleet::grid {

std::vector<TransformerSpec> assign_houses(std::size_t n_houses, std::size_t n_tx, SizeLaw law,
                                           std::uint64_t seed) {
    if (n_tx < 1) throw ConfigError("need at least one transformer");
    std::vector<TransformerSpec> specs(n_tx);
    char buf[32];
    for (std::size_t t = 0; t < n_tx; ++t) {
        std::snprintf(buf, sizeof buf, "tx%03zu", t);
        specs[t].id = buf;
    }
    Rng rng(seed);
    if (law == SizeLaw::Uniform) {
        std::vector<std::size_t> order(n_houses);
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, rng);
        for (std::size_t k = 0; k < n_houses; ++k) specs[k % n_tx].houses.push_back(order[k]);
    } else {
        for (std::size_t h = 0; h < n_houses; ++h)
            specs[static_cast<std::size_t>(rng.below(n_tx))].houses.push_back(h);
    }
    for (auto& s : specs) std::sort(s.houses.begin(), s.houses.end());
    return specs;
}

std::vector<double> transformer_power(const std::vector<TransformerSpec>& specs,
                                      const fleet::TelemetryFrame& fr) {
    std::vector<double> out(specs.size(), 0.0);
    for (std::size_t t = 0; t < specs.size(); ++t)
        for (std::size_t h : specs[t].houses) {
            if (h >= fr.devices.size()) throw AccountingError("frame misses an assigned house");
            out[t] += fr.devices[h].power;
        }
    return out;
}

void set_ratings(std::vector<TransformerSpec>& specs, std::span<const double> peaks,
                 double headroom, double fallback_device_power) {
    if (!(headroom > 0)) throw ConfigError("headroom must be positive");
    if (peaks.size() != specs.size()) throw ConfigError("one peak per transformer required");
    for (std::size_t t = 0; t < specs.size(); ++t) {
        double peak = peaks[t];
        if (peak <= 0.0) peak = fallback_device_power * static_cast<double>(specs[t].houses.size());
        specs[t].rating = peak > 0.0 ? peak / headroom : 1.0;
    }
}

void size_ratings(std::vector<TransformerSpec>& specs,
                  std::span<const fleet::TelemetryFrame> frames, double headroom,
                  double fallback_device_power) {
    std::vector<double> peaks(specs.size(), 0.0);
    for (const auto& fr : frames) {
        const auto p = transformer_power(specs, fr);
        for (std::size_t t = 0; t < specs.size(); ++t) peaks[t] = std::max(peaks[t], p[t]);
    }
    set_ratings(specs, peaks, headroom, fallback_device_power);
}

double OverloadReport::max_consecutive_overload() const {
    double m = 0.0;
    for (const auto& t : transformers) m = std::max(m, t.max_consecutive_overload);
    return m;
}

double OverloadReport::peak_pu() const {
    double m = 0.0;
    for (const auto& t : transformers) m = std::max(m, t.peak_pu);
    return m;
}

double OverloadReport::mean_overload_excess() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : transformers) {
        sum += t.overload_excess;
        n += t.overload_samples;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

std::size_t OverloadReport::simultaneous_inrush() const {
    std::size_t n = 0;
    for (const auto& t : transformers) n += t.simultaneous_inrush;
    return n;
}

OverloadTracker::OverloadTracker(std::vector<TransformerSpec> specs, std::size_t n_houses)
    : specs_(std::move(specs)), owner_(n_houses, std::numeric_limits<std::size_t>::max()) {
    for (std::size_t t = 0; t < specs_.size(); ++t) {
        if (!(specs_[t].rating > 0)) throw ConfigError("transformer rating must be positive");
        for (std::size_t h : specs_[t].houses) {
            if (h >= n_houses) throw AccountingError("assigned house index out of range");
            if (owner_[h] != std::numeric_limits<std::size_t>::max())
                throw AccountingError("house assigned to two transformers");
            owner_[h] = t;
        }
    }
    for (std::size_t h = 0; h < n_houses; ++h)
        if (owner_[h] == std::numeric_limits<std::size_t>::max())
            throw AccountingError("house not assigned to any transformer");
    report_.transformers.resize(specs_.size());
}

std::vector<double> OverloadTracker::update(const fleet::TelemetryFrame& fr, double dt) {
    if (fr.devices.size() != owner_.size()) throw AccountingError("frame size does not match grid");
    std::vector<double> load(specs_.size(), 0.0), inrush(specs_.size(), 0.0);
    std::vector<std::size_t> starts(specs_.size(), 0);
    for (const auto& d : fr.devices) {
        const std::size_t t = owner_[d.index];
        load[t] += d.power;
        if (d.started) {
            ++starts[t];
            inrush[t] += d.inrush_peak - d.power;
        }
    }
    for (std::size_t t = 0; t < specs_.size(); ++t) {
        auto& st = report_.transformers[t];
        load[t] /= specs_[t].rating;
        st.peak_pu = std::max(st.peak_pu, load[t]);
        if (load[t] > 1.0) {
            st.current_overload += dt;
            ++st.overload_samples;
            st.overload_excess += load[t] - 1.0;
            st.max_consecutive_overload = std::max(st.max_consecutive_overload, st.current_overload);
        } else {
            st.current_overload = 0.0;
        }
        if (starts[t] >= 2) ++st.simultaneous_inrush;
        if (starts[t] > 0)
            st.peak_inrush_pu = std::max(st.peak_inrush_pu, load[t] + inrush[t] / specs_[t].rating);
    }
    return load;
}

} // namespace acfleet::grid
