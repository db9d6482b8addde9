#include <algorithm>
#include <cmath>
#include <numeric>

#include "acfleet/errors.hpp"
#include "acfleet/runner.hpp"
#include "acfleet/thermal.hpp"

namespace acfleet::runner {

using house::Source;
using house::SwitchCommand;
using house::Target;
using nlohmann::json;

namespace {

constexpr double kAmbient = 32.2;

struct Sim {
    fleet::FleetLayout layout;
    fleet::FleetState state;
    double ambient;
    double dt;

    Sim(const fleet::FleetSpec& spec, double amb, double step)
        : layout(fleet::generate_fleet(spec)), state(fleet::initialize_fleet(layout, amb)),
          ambient(amb), dt(step) {}

    fleet::TelemetryFrame step(const std::vector<SwitchCommand>& cmds) {
        return fleet::step_fleet(state, layout, ambient, cmds, dt);
    }
    fleet::TelemetryFrame idle() { return step(std::vector<SwitchCommand>(layout.size())); }
    std::size_t size() const { return layout.size(); }
};

std::vector<SwitchCommand> all(std::size_t n, Target t) {
    return std::vector<SwitchCommand>(n, SwitchCommand{t, Source::Aggregator});
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double period_of(const fleet::FleetSpec& spec, double ambient) {
    const auto& h = spec.nominal;
    return thermal::cycle_durations(h.thermal, h.ac, h.heat, h.deadband(), ambient).period();
}

// Mean aggregate power of an undisturbed fleet, after one period of warmup.
double free_run_mean(const fleet::FleetSpec& spec, double ambient, double dt, double period) {
    Sim s(spec, ambient, dt);
    const auto warm = static_cast<std::size_t>(period / dt);
    std::vector<double> p;
    for (std::size_t k = 0; k < 4 * warm; ++k) {
        const auto fr = s.idle();
        if (k >= warm) p.push_back(fr.aggregate_power);
    }
    return mean(p);
}

// Forces everything off, holds, then releases house i at release[i] seconds
// after the hold. Returns power sampled every dt from the earliest release.
std::vector<double> sync_and_release(const fleet::FleetSpec& spec, double ambient, double hold,
                                     const std::vector<double>& release, double record, double dt) {
    Sim s(spec, ambient, dt);
    fleet::force_synchronize(s.state, s.layout, fleet::SyncDirection::AllOff, ambient, dt, 4 * 3600.0);
    const auto off = all(s.size(), Target::Off);
    for (double t = 0; t < hold; t += dt) s.step(off);
    std::vector<double> p;
    const auto steps = static_cast<std::size_t>(std::llround(record / dt));
    for (std::size_t k = 0; k < steps; ++k) {
        std::vector<SwitchCommand> cmds(s.size());
        const double t = static_cast<double>(k) * dt;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (t < release[i]) cmds[i] = {Target::Off, Source::Aggregator};
        p.push_back(s.step(cmds).aggregate_power);
    }
    return p;
}

// (mean power in command-on halves - mean in off halves) / full-fleet on power,
// ignoring the first command cycle.
double forced_amplitude(const fleet::FleetSpec& spec, double ambient, double period, double dt) {
    Sim s(spec, ambient, dt);
    for (double t = 0; t < 1800.0; t += dt) s.idle();
    double full = 0.0;
    for (const auto& h : s.layout.houses) full += fleet::rated_on_power(h, ambient);
    const double duration = std::max(5.0 * period, 2400.0);
    double on_sum = 0, off_sum = 0;
    std::size_t on_n = 0, off_n = 0;
    for (double t = 0; t < duration; t += dt) {
        const bool high = std::fmod(t, period) < period / 2;
        const auto fr = s.step(all(s.size(), high ? Target::On : Target::Off));
        if (t < period) continue;
        (high ? on_sum : off_sum) += fr.aggregate_power;
        ++(high ? on_n : off_n);
    }
    return (on_sum / static_cast<double>(on_n) - off_sum / static_cast<double>(off_n)) / full;
}

fleet::FleetSpec base_spec(std::uint64_t seed, double h = 0.2) {
    fleet::FleetSpec spec;
    spec.seed = seed;
    spec.heterogeneity = h;
    spec.n_remote = 0;
    return spec;
}

Verdict check(std::string name, bool pass, std::string detail) {
    return {std::move(name), pass, std::move(detail)};
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// First window in 1..within with envelope at or below half the first one; 0 if none.
std::size_t halving_cycle(const std::vector<double>& env, std::size_t within) {
    for (std::size_t k = 1; k <= within && k < env.size(); ++k)
        if (env[k] <= 0.5 * env[0]) return k;
    return 0;
}

ValidationResult exp1(std::uint64_t seed) {
    ValidationResult r{"exp1", {}, {}};
    auto spec = base_spec(seed);
    Sim s(spec, kAmbient, 2.0);
    constexpr std::size_t kBins = 11;
    std::vector<double> hist(kBins, 0.0), power;
    for (double t = 0; t < 6 * 3600.0; t += s.dt) {
        const auto fr = s.idle();
        power.push_back(fr.aggregate_power);
        for (const auto& d : fr.devices) {
            const double x = std::clamp(d.position, 0.0, 1.0) * kBins;
            hist[std::min(kBins - 1, static_cast<std::size_t>(x))] += 1.0;
        }
    }
    const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
    for (double& h : hist) h /= total;
    const double m = mean(power);
    double var = 0;
    for (double p : power) var += (p - m) * (p - m);
    const double cv = std::sqrt(var / static_cast<double>(power.size())) / m;
    const std::size_t mid = kBins / 2;
    r.verdicts.push_back(check("no_sync_alarm", cv < 0.25, fmt("aggregate power CV %.3f (alarm at 0.25)", cv)));
    r.verdicts.push_back(check("bimodal_histogram", hist.front() > hist[mid] && hist.back() > hist[mid],
                               fmt("edge bins %.3f / %.3f, centre %.3f", hist.front(), hist.back(), hist[mid])));
    r.data = {{"histogram", hist}, {"mean_power_w", m}, {"power_cv", cv}};
    return r;
}

ValidationResult exp2(std::uint64_t seed) {
    ValidationResult r{"exp2", {}, {}};
    const auto d = desync_experiment(base_spec(seed, 0.2), kAmbient, 600.0, 6.0);
    const auto k = halving_cycle(d.envelope, 3);
    r.verdicts.push_back(check("desync_within_3_cycles", k > 0,
                               k ? "halved in cycle " + std::to_string(k) : "envelope did not halve"));
    r.data = {{"natural_period_s", d.natural_period}, {"mean_power_w", d.mean_power}, {"envelope_w", d.envelope}};
    return r;
}

ValidationResult exp3(std::uint64_t seed) {
    ValidationResult r{"exp3", {}, {}};
    auto spec = base_spec(seed);
    spec.n_houses = 100;
    const std::vector<double> periods{40, 80, 160, 320, 640, 1280};
    std::vector<double> amp;
    for (double p : periods) amp.push_back(forced_amplitude(spec, kAmbient, p, 2.0));
    const double peak = *std::max_element(amp.begin(), amp.end());
    r.verdicts.push_back(check("short_period_attenuated", amp.front() < 0.5 * peak,
                               fmt("amplitude %.3f at 40 s vs peak %.3f", amp.front(), peak)));
    // Below the peak, shorter command periods give smaller swings.
    const auto top = static_cast<std::size_t>(std::max_element(amp.begin(), amp.end()) - amp.begin());
    bool rising = top > 0;
    for (std::size_t i = 1; i <= top; ++i) rising = rising && amp[i - 1] < amp[i];
    r.verdicts.push_back(check("falls_toward_lockout_band", rising,
                               fmt("monotone below the peak at %.0f s (%.3f)", periods[top], amp[top])));
    r.data = {{"periods_s", periods}, {"amplitude_pu", amp}};
    return r;
}

// Two halves forced off half a natural period apart.
ValidationResult exp4(std::uint64_t seed) {
    ValidationResult r{"exp4", {}, {}};
    auto spec = base_spec(seed);
    const double period = period_of(spec, kAmbient);
    const double dt = 2.0;
    Sim s(spec, kAmbient, dt);
    const std::size_t n = s.size(), half = n / 2;
    fleet::force_synchronize(s.state, s.layout, fleet::SyncDirection::AllOff, kAmbient, dt, 4 * 3600.0);
    for (double t = 0; t < 600.0; t += dt) s.step(all(n, Target::Off));
    std::vector<double> a, b, agg;
    for (double t = 0; t < 4 * period; t += dt) {
        std::vector<SwitchCommand> cmds(n);
        if (t < period / 2)
            for (std::size_t i = half; i < n; ++i) cmds[i] = {Target::Off, Source::Aggregator};
        const auto fr = s.step(cmds);
        double pa = 0, pb = 0;
        for (std::size_t i = 0; i < n; ++i) (i < half ? pa : pb) += fr.devices[i].power;
        a.push_back(pa);
        b.push_back(pb);
        agg.push_back(fr.aggregate_power);
    }
    // Correlation of the two group powers over cycles 2..3.
    const auto from = static_cast<std::size_t>(period / dt * 1.5);
    const std::vector<double> ta(a.begin() + static_cast<long>(from), a.end());
    const std::vector<double> tb(b.begin() + static_cast<long>(from), b.end());
    const double ma = mean(ta), mb = mean(tb);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        sab += (ta[i] - ma) * (tb[i] - mb);
        saa += (ta[i] - ma) * (ta[i] - ma);
        sbb += (tb[i] - mb) * (tb[i] - mb);
    }
    const double corr = sab / std::sqrt(saa * sbb);
    const auto whole = desync_experiment(spec, kAmbient, 600.0, 4.0, dt);
    const double m = free_run_mean(spec, kAmbient, dt, period);
    const auto split_env = oscillation_envelope(agg, dt, period, m);
    r.verdicts.push_back(check("two_populations", corr < 0.0, fmt("group power correlation %.3f", corr)));
    r.verdicts.push_back(check("smaller_aggregate_swing", split_env[1] < whole.envelope[1],
                               fmt("second-cycle envelope %.0f W vs %.0f W single population",
                                   split_env[1], whole.envelope[1])));
    r.data = {{"group_correlation", corr}, {"envelope_w", split_env}, {"single_envelope_w", whole.envelope}};
    return r;
}

ValidationResult exp5(std::uint64_t seed) {
    ValidationResult r{"exp5", {}, {}};
    const auto het = desync_experiment(base_spec(seed, 0.2), kAmbient, 600.0, 6.0);
    const auto hom = desync_experiment(base_spec(seed, 0.0), kAmbient, 600.0, 6.0);
    const auto k = halving_cycle(het.envelope, 3);
    r.verdicts.push_back(check("heterogeneous_desyncs", k > 0,
                               k ? "halved in cycle " + std::to_string(k) : "envelope did not halve"));
    bool persists = hom.envelope.size() >= 6;
    for (std::size_t c = 1; c <= 5 && c < hom.envelope.size(); ++c)
        persists = persists && hom.envelope[c] > 0.5 * hom.envelope[0];
    r.verdicts.push_back(check("homogeneous_persists_5_cycles", persists,
                               fmt("cycle-5 envelope %.2f of initial",
                                   hom.envelope.size() > 5 ? hom.envelope[5] / hom.envelope[0] : 0.0)));
    r.data = {{"heterogeneous_envelope_w", het.envelope}, {"homogeneous_envelope_w", hom.envelope}};
    return r;
}

ValidationResult exp6(std::uint64_t seed) {
    ValidationResult r{"exp6", {}, {}};
    auto low = base_spec(seed);
    auto high = base_spec(seed);
    low.nominal.heat.water_heat = 200.0;
    high.nominal.heat.water_heat = 900.0;
    const double amb_low = 25.0, amb_high = 37.8;
    const auto& hl = low.nominal;
    const auto& hh = high.nominal;
    const double duty_low = thermal::cycle_durations(hl.thermal, hl.ac, hl.heat, hl.deadband(), amb_low).duty();
    const double duty_high = thermal::cycle_durations(hh.thermal, hh.ac, hh.heat, hh.deadband(), amb_high).duty();
    const auto dl = desync_experiment(low, amb_low, 600.0, 5.0);
    const auto dh = desync_experiment(high, amb_high, 600.0, 5.0);
    auto decays = [](const DesyncResult& d) {
        return *std::min_element(d.envelope.begin() + 1, d.envelope.end()) < d.envelope[0];
    };
    r.verdicts.push_back(check("duty_levels", duty_low < 0.4 && duty_high > 0.6,
                               fmt("nominal duty %.2f low, %.2f high", duty_low, duty_high)));
    r.verdicts.push_back(check("low_duty_decays", decays(dl), fmt("envelope %.0f -> min later", dl.envelope[0])));
    r.verdicts.push_back(check("high_duty_decays", decays(dh), fmt("envelope %.0f -> min later", dh.envelope[0])));
    r.data = {{"duty_low", duty_low}, {"duty_high", duty_high},
              {"low_envelope_w", dl.envelope}, {"high_envelope_w", dh.envelope}};
    return r;
}

// Same release command delivered after a fixed delay or after a random one.
ValidationResult exp7(std::uint64_t seed) {
    ValidationResult r{"exp7", {}, {}};
    const auto spec = base_spec(seed);
    const double dt = 2.0;
    const double period = period_of(spec, kAmbient);
    const double m = free_run_mean(spec, kAmbient, dt, period);
    const std::size_t n = spec.n_houses;
    Rng rng(derive_seed(seed, 0x7D));
    std::vector<double> fixed(n, 18.0), random(n);
    for (double& x : random) x = rng.uniform(0.0, 120.0);
    const auto pf = sync_and_release(spec, kAmbient, 600.0, fixed, 5 * period, dt);
    const auto pr = sync_and_release(spec, kAmbient, 600.0, random, 5 * period, dt);
    const auto ef = oscillation_envelope(pf, dt, period, m);
    const auto er = oscillation_envelope(pr, dt, period, m);
    r.verdicts.push_back(check("random_delay_weakens_sync", er[0] < ef[0],
                               fmt("first-cycle envelope %.0f W random vs %.0f W fixed", er[0], ef[0])));
    r.data = {{"fixed_envelope_w", ef}, {"random_envelope_w", er}};
    return r;
}

} // namespace

bool ValidationResult::pass() const {
    return !verdicts.empty() &&
           std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

std::vector<std::string> validation_presets() {
    return {"exp1", "exp2", "exp3", "exp4", "exp5", "exp6", "exp7"};
}

ValidationResult run_validation(const std::string& preset, std::uint64_t seed) {
    if (preset == "exp1") return exp1(seed);
    if (preset == "exp2") return exp2(seed);
    if (preset == "exp3") return exp3(seed);
    if (preset == "exp4") return exp4(seed);
    if (preset == "exp5") return exp5(seed);
    if (preset == "exp6") return exp6(seed);
    if (preset == "exp7") return exp7(seed);
    throw ConfigError("unknown validation preset '" + preset + "'");
}

std::vector<double> oscillation_envelope(const std::vector<double>& power, double dt, double period,
                                         double mean_power) {
    if (!(dt > 0 && period >= dt)) throw ConfigError("envelope needs period >= dt > 0");
    const auto w = static_cast<std::size_t>(std::llround(period / dt));
    std::vector<double> env;
    for (std::size_t start = 0; start + w <= power.size(); start += w) {
        double e = 0.0;
        for (std::size_t i = start; i < start + w; ++i) e = std::max(e, std::abs(power[i] - mean_power));
        env.push_back(e);
    }
    return env;
}

DesyncResult desync_experiment(const fleet::FleetSpec& spec, double ambient, double hold,
                               double cycles, double dt) {
    DesyncResult d;
    d.dt = dt;
    d.natural_period = period_of(spec, ambient);
    d.mean_power = free_run_mean(spec, ambient, dt, d.natural_period);
    // Record whole envelope windows so the last cycle is not cut short by rounding.
    const double window = static_cast<double>(std::llround(d.natural_period / dt)) * dt;
    d.power = sync_and_release(spec, ambient, hold, std::vector<double>(spec.n_houses, 0.0),
                               std::ceil(cycles) * window, dt);
    d.envelope = oscillation_envelope(d.power, dt, d.natural_period, d.mean_power);
    return d;
}

} // namespace acfleet::runner
