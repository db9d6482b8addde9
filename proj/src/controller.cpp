#include "acfleet/controller.hpp"

#include <algorithm>
#include <cmath>

#include "acfleet/errors.hpp"

namespace acfleet::control {

using fleet::DeviceTelemetry;
using fleet::RequestKind;
using house::Compressor;
using house::Source;
using house::SwitchCommand;
using house::Target;

bool can_turn_on(const DeviceTelemetry& d) {
    return !d.corrupt && d.compressor == Compressor::Off && d.position > 0.0;
}

bool can_turn_off(const DeviceTelemetry& d) {
    return !d.corrupt && d.compressor == Compressor::On && d.position < 1.0;
}

namespace {

const fleet::TelemetryFrame& frame_of(const Observation& obs) {
    if (!obs.frame) throw ConfigError("controller step needs a telemetry frame");
    return *obs.frame;
}

// Switches each eligible device independently with probability p.
std::size_t broadcast(const fleet::TelemetryFrame& fr, Target target, double p, Rng& rng,
                      std::vector<SwitchCommand>& out) {
    std::size_t issued = 0;
    if (p <= 0.0) return 0;
    const auto eligible = target == Target::On ? can_turn_on : can_turn_off;
    for (const auto& d : fr.devices) {
        if (!eligible(d)) continue;
        if (rng.bernoulli(p)) {
            out[d.index] = {target, Source::Aggregator};
            ++issued;
        }
    }
    return issued;
}

} // namespace

// ---------------------------------------------------------------- PI

double pi_step(const PiConfig& cfg, double error, double dt, double limit, PiState& st) {
    if (cfg.kp < 0 || cfg.ki < 0) throw ConfigError("PI gains must be non-negative");
    st.integral = std::clamp(st.integral + error * dt, -limit, limit);
    return cfg.kp * error + cfg.ki * st.integral;
}

PiController::PiController(PiConfig cfg, std::size_t n, double avg_on_power, double dt,
                           std::uint64_t seed)
    : cfg_(cfg), n_(n), avg_on_power_(avg_on_power), dt_(dt), rng_(seed) {
    if (!(avg_on_power > 0) || !(dt > 0)) throw ConfigError("PI needs positive power and dt");
    limit_ = cfg.anti_windup_limit > 0 ? cfg.anti_windup_limit
                                       : 10.0 * static_cast<double>(n) * avg_on_power * dt;
}

CommandBatch PiController::step(const Observation& obs) {
    const auto& fr = frame_of(obs);
    CommandBatch out;
    out.commands.assign(fr.devices.size(), SwitchCommand{Target::NoChange, Source::Aggregator});
    const double demand = pi_step(cfg_, obs.reference - fr.aggregate_power, dt_, limit_, state_);
    if (demand == 0.0) return out;
    const Target target = demand > 0 ? Target::On : Target::Off;
    const auto eligible = target == Target::On ? can_turn_on : can_turn_off;
    const auto n_eligible = static_cast<double>(
        std::count_if(fr.devices.begin(), fr.devices.end(), eligible));
    const double wanted = std::abs(demand) / avg_on_power_;
    if (n_eligible == 0) {
        out.saturated = true;
        return out;
    }
    out.saturated = wanted > n_eligible;
    out.issued = broadcast(fr, target, std::min(1.0, wanted / n_eligible), rng_, out.commands);
    return out;
}

// ---------------------------------------------------------------- Markov

std::size_t MarkovBins::temp_bin(double position) const {
    const double x = std::floor(position * static_cast<double>(n_temp_bins));
    return static_cast<std::size_t>(std::clamp(x, 0.0, static_cast<double>(n_temp_bins - 1)));
}

std::size_t MarkovBins::bin_of(const DeviceTelemetry& d) const {
    std::size_t branch = 0;
    switch (d.compressor) {
    case Compressor::On:
    case Compressor::LockedOn:
        branch = use_delayed_dynamics && d.time_in_state < recent_hold ? 3 : 0;
        break;
    case Compressor::Off: branch = 1; break;
    case Compressor::LockedOff: branch = 2; break;
    }
    return branch * n_temp_bins + temp_bin(d.position);
}

bool MarkovBins::is_on(std::size_t bin) const {
    const std::size_t branch = bin / n_temp_bins;
    return branch == 0 || branch == 3;
}

bool MarkovBins::is_off_unlocked(std::size_t bin) const { return bin / n_temp_bins == 1; }

std::vector<double> propagate(const std::vector<std::vector<double>>& m,
                              std::span<const double> x) {
    if (m.size() != x.size()) throw ConfigError("occupancy and transition matrix sizes differ");
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == 0.0) continue;
        for (std::size_t j = 0; j < x.size(); ++j) y[j] += x[i] * m[i][j];
    }
    return y;
}

void check_row_stochastic(const std::vector<std::vector<double>>& m) {
    for (const auto& row : m) {
        if (row.size() != m.size()) throw ConfigError("transition matrix must be square");
        double s = 0.0;
        for (double v : row) {
            if (!(v >= 0.0)) throw ConfigError("transition matrix has a negative entry");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ConfigError("transition matrix row does not sum to 1");
    }
}

MarkovDecision markov_step(const MarkovConfig& cfg, std::span<const double> x, double reference,
                           std::size_t n, double observed_power, double eligible_on,
                           double eligible_off) {
    const auto next = propagate(cfg.transition, x);
    double on_now = 0.0, on_next = 0.0;
    for (std::size_t b = 0; b < x.size(); ++b) {
        if (!cfg.bins.is_on(b)) continue;
        on_now += x[b];
        on_next += next[b];
    }
    const double scale = cfg.avg_on_power * static_cast<double>(n);
    MarkovDecision d;
    d.predicted = scale * on_next;
    if (cfg.bias_correction) d.predicted += observed_power - scale * on_now;
    const double gap = reference - d.predicted;
    const double capacity = scale * (gap > 0 ? eligible_on : eligible_off);
    if (gap == 0.0) return d;
    if (capacity <= 0.0) {
        d.saturated = true;
        return d;
    }
    d.u = gap / capacity;
    if (std::abs(d.u) > 1.0) {
        d.saturated = true;
        d.u = std::clamp(d.u, -1.0, 1.0);
    }
    return d;
}

TransitionCounter::TransitionCounter(MarkovBins bins)
    : bins_(bins), counts_(bins.size(), std::vector<double>(bins.size(), 0.0)) {}

void TransitionCounter::add(const fleet::TelemetryFrame& before, const fleet::TelemetryFrame& after) {
    const auto& a = before.devices;
    const auto& b = after.devices;
    if (a.size() != b.size()) throw ConfigError("frames differ in device count");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].corrupt || b[i].corrupt) continue;
        counts_[bins_.bin_of(a[i])][bins_.bin_of(b[i])] += 1.0;
    }
}

std::vector<std::vector<double>> TransitionCounter::matrix() const {
    auto m = counts_;
    for (std::size_t i = 0; i < m.size(); ++i) {
        double s = 0.0;
        for (double v : m[i]) s += v;
        if (s == 0.0) {
            m[i][i] = 1.0;
            continue;
        }
        for (double& v : m[i]) v /= s;
    }
    return m;
}

std::vector<std::vector<double>> estimate_transitions(
    const MarkovBins& bins, std::span<const fleet::TelemetryFrame> frames) {
    TransitionCounter c(bins);
    for (std::size_t f = 1; f < frames.size(); ++f) c.add(frames[f - 1], frames[f]);
    return c.matrix();
}

double mean_on_power(std::span<const fleet::TelemetryFrame> frames) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& fr : frames)
        for (const auto& d : fr.devices)
            if (!d.corrupt && (d.compressor == Compressor::On || d.compressor == Compressor::LockedOn)) {
                sum += d.power;
                ++n;
            }
    if (n == 0) throw InsufficientData("no running devices to estimate on-power");
    return sum / static_cast<double>(n);
}

MarkovController::MarkovController(MarkovConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), rng_(seed) {
    if (cfg_.transition.size() != cfg_.bins.size())
        throw ConfigError("transition matrix does not match the bin layout");
    check_row_stochastic(cfg_.transition);
}

CommandBatch MarkovController::step(const Observation& obs) {
    const auto& fr = frame_of(obs);
    CommandBatch out;
    out.commands.assign(fr.devices.size(), SwitchCommand{Target::NoChange, Source::Aggregator});
    const std::size_t n = fr.devices.size();
    if (n == 0) {
        out.saturated = true;
        return out;
    }
    std::vector<double> x(cfg_.bins.size(), 0.0);
    double on = 0.0, off = 0.0;
    const double w = 1.0 / static_cast<double>(n);
    for (const auto& d : fr.devices) {
        x[cfg_.bins.bin_of(d)] += w;
        if (can_turn_on(d)) on += w;
        if (can_turn_off(d)) off += w;
    }
    last_ = markov_step(cfg_, x, obs.reference, n, fr.aggregate_power, on, off);
    out.saturated = last_.saturated;
    if (last_.u != 0.0)
        out.issued = broadcast(fr, last_.u > 0 ? Target::On : Target::Off, std::abs(last_.u), rng_,
                               out.commands);
    return out;
}

// ---------------------------------------------------------------- PEM

PemDecision pem_step(const PemConfig&, std::span<const PendingRequest> requests,
                     double current_power, double reference) {
    PemDecision d;
    d.granted.assign(requests.size(), false);
    d.projected = current_power;
    double largest = 0.0;
    for (const auto& r : requests) {
        if (r.request.kind == RequestKind::On && r.request.extension)
            d.projected -= r.request.power;
        largest = std::max(largest, r.request.power);
    }
    bool all_on = true, all_off = true;
    for (std::size_t i = 0; i < requests.size(); ++i) {
        const auto& r = requests[i].request;
        if (r.kind == RequestKind::On) {
            if (d.projected + r.power <= reference) {
                d.granted[i] = true;
                d.projected += r.power;
            } else {
                all_on = false;
            }
        } else if (r.kind == RequestKind::Off) {
            if (d.projected - r.power >= reference) {
                d.granted[i] = true;
                d.projected -= r.power;
            } else {
                all_off = false;
            }
        }
    }
    d.saturated = requests.empty() || (all_on && reference - d.projected > largest) ||
                  (all_off && d.projected - reference > largest);
    return d;
}

PemController::PemController(PemConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

CommandBatch PemController::step(const Observation& obs) {
    const auto& fr = frame_of(obs);
    CommandBatch out;
    out.commands.assign(fr.devices.size(), SwitchCommand{Target::NoChange, Source::Aggregator});
    if (last_position_.size() != fr.devices.size()) last_position_.assign(fr.devices.size(), NAN);

    // Thermostat switches expected before the next frame, extrapolating each
    // device's deadband position one step.
    double base = fr.aggregate_power, on_power = 0.0;
    std::size_t n_on = 0;
    for (const auto& d : fr.devices)
        if (!d.corrupt && d.power > 0.0) {
            on_power += d.power;
            ++n_on;
        }
    on_power = n_on ? on_power / static_cast<double>(n_on) : 0.0;
    std::vector<PendingRequest> pending;
    for (const auto& d : fr.devices) {
        double& last = last_position_[d.index];
        const double next = std::isnan(last) ? d.position : 2.0 * d.position - last;
        last = d.position;
        if (d.corrupt) continue;
        const bool forced_on = d.compressor == Compressor::Off && next >= 1.0;
        const bool forced_off = d.compressor == Compressor::On && next <= 0.0 &&
                                d.request.kind != RequestKind::On;
        if (forced_on) base += d.request.kind == RequestKind::On ? d.request.power : on_power;
        if (forced_off) base -= d.power;
        if (d.request.kind != RequestKind::None && !forced_on && !forced_off)
            pending.push_back({d.index, d.request});
    }
    shuffle(pending, rng_);
    const auto d = pem_step(cfg_, pending, base, obs.reference);
    out.saturated = d.saturated;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (!d.granted[i]) continue;
        const Target t = pending[i].request.kind == RequestKind::On ? Target::On : Target::Off;
        out.commands[pending[i].device] = {t, Source::Aggregator};
        ++out.issued;
    }
    return out;
}

} // namespace acfleet::control
