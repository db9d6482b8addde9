#include "acfleet/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "acfleet/errors.hpp"
#include "acfleet/rng.hpp"

namespace acfleet::signal {

double ReferenceSignal::at(double t) const {
    if (samples.empty()) return baseline;
    const double k = std::floor((t - start) / period + 1e-9);
    if (k <= 0) return samples.front();
    const auto i = static_cast<std::size_t>(k);
    return i >= samples.size() ? samples.back() : samples[i];
}

ReferenceSignal square_wave(double baseline, double af, double period, double duration,
                            double sample_period) {
    if (!(period > 0)) throw ConfigError("square wave period must be positive");
    if (!(sample_period > 0)) throw ConfigError("sample period must be positive");
    ReferenceSignal s;
    s.period = sample_period;
    s.baseline = baseline;
    s.amplitude_fraction = af;
    const auto n = static_cast<std::size_t>(std::llround(duration / sample_period));
    s.samples.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * sample_period;
        const bool high = std::fmod(t, period) < 0.5 * period;
        s.samples.push_back(baseline * (1.0 + (high ? af : -af)));
    }
    return s;
}

Trace parse_trace(const std::string& text) {
    Trace tr;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line == "time_s,value") continue;
            throw IngestionError(lineno, "expected header 'time_s,value'");
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw IngestionError(lineno, "expected two comma-separated columns");
        double t = 0, v = 0;
        try {
            std::size_t used = 0;
            const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
            t = std::stod(a, &used);
            if (used != a.size()) throw std::invalid_argument("time");
            v = std::stod(b, &used);
            if (used != b.size()) throw std::invalid_argument("value");
        } catch (const std::exception&) {
            throw IngestionError(lineno, "malformed number");
        }
        if (!std::isfinite(t) || !std::isfinite(v)) throw IngestionError(lineno, "non-finite value");
        if (!tr.time.empty() && t <= tr.time.back())
            throw IngestionError(lineno, "timestamps must be strictly increasing");
        tr.time.push_back(t);
        tr.value.push_back(v);
    }
    if (!header_seen) throw IngestionError(0, "empty trace file");
    if (tr.time.empty()) throw IngestionError(lineno, "trace has no samples");
    return tr;
}

Trace read_trace(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open trace file " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trace(ss.str());
}

void write_trace(const std::filesystem::path& file, const Trace& tr) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw ConfigError("cannot write trace file " + file.string());
    out << "time_s,value\n";
    char buf[64];
    for (std::size_t i = 0; i < tr.time.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.3f,%.9f\n", tr.time[i], tr.value[i]);
        out << buf;
    }
}

ReferenceSignal from_trace(const Trace& tr, double baseline, double af, double sample_period,
                           double duration) {
    if (tr.time.empty()) throw IngestionError(0, "trace has no samples");
    if (!(sample_period > 0)) throw ConfigError("sample period must be positive");
    ReferenceSignal s;
    s.period = sample_period;
    s.baseline = baseline;
    s.amplitude_fraction = af;
    const double t0 = tr.time.front();
    const double span = duration > 0 ? duration : tr.time.back() - t0 + sample_period;
    const auto n = static_cast<std::size_t>(std::llround(span / sample_period));
    std::size_t j = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = t0 + static_cast<double>(k) * sample_period;
        while (j + 1 < tr.time.size() && tr.time[j + 1] <= t) ++j;
        double v;
        if (t <= tr.time.front()) v = tr.value.front();
        else if (j + 1 >= tr.time.size()) v = tr.value.back();
        else {
            const double w = (t - tr.time[j]) / (tr.time[j + 1] - tr.time[j]);
            v = tr.value[j] + w * (tr.value[j + 1] - tr.value[j]);
        }
        s.samples.push_back(baseline * (1.0 + af * v));
    }
    return s;
}

ReferenceSignal load_trace(const std::filesystem::path& file, double baseline, double af,
                           double sample_period, double duration) {
    return from_trace(read_trace(file), baseline, af, sample_period, duration);
}

Trace synthetic_regd(const RegdSpec& spec) {
    if (!(spec.step > 0 && spec.duration > 0 && spec.time_constant > 0))
        throw ConfigError("invalid synthetic trace spec");
    Rng rng(spec.seed);
    const auto n = static_cast<std::size_t>(std::llround(spec.duration / spec.step));
    const double a = std::exp(-spec.step / spec.time_constant);
    double s1 = 0.0, s2 = 0.0;
    // Warm the filter up so the start is not pinned at zero.
    const auto warm = static_cast<std::size_t>(5.0 * spec.time_constant / spec.step);
    Trace tr;
    for (std::size_t k = 0; k < warm + n; ++k) {
        s1 = a * s1 + (1 - a) * rng.normal();
        s2 = a * s2 + (1 - a) * s1;
        if (k < warm) continue;
        tr.time.push_back(static_cast<double>(k - warm) * spec.step);
        tr.value.push_back(s2);
    }
    double mean = 0.0;
    for (double v : tr.value) mean += v;
    mean /= static_cast<double>(n);
    double peak = 0.0;
    for (double& v : tr.value) {
        v -= mean;
        peak = std::max(peak, std::abs(v));
    }
    if (peak > 0)
        for (double& v : tr.value) v /= peak;
    return tr;
}

double baseline_power(std::span<const double> power, double dt, double natural_period,
                      double min_periods) {
    const double window = dt * static_cast<double>(power.size());
    if (power.empty() || window < min_periods * natural_period)
        throw InsufficientData("baseline window shorter than the required natural cycles");
    double sum = 0.0;
    for (double p : power) sum += p;
    return sum / static_cast<double>(power.size());
}

} // namespace acfleet::signal
