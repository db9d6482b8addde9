#include "acfleet/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "acfleet/errors.hpp"
#include "acfleet/rng.hpp"

namespace acfleet::metrics {

namespace {

double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Pearson correlation; constant inputs count as 1 on exact match, else 0.
double correlation(std::span<const double> a, std::span<const double> b) {
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::equal(a.begin(), a.end(), b.begin()) ? 1.0 : 0.0;
    return sab / std::sqrt(saa * sbb);
}

std::vector<std::vector<std::size_t>> random_groups(std::span<const std::size_t> pool,
                                                    std::size_t size, std::size_t n,
                                                    std::uint64_t seed) {
    if (size == 0 || size * n > pool.size())
        throw InsufficientData("not enough devices for the requested groups");
    std::vector<std::size_t> order(pool.begin(), pool.end());
    Rng rng(seed);
    shuffle(order, rng);
    std::vector<std::vector<std::size_t>> groups(n);
    for (std::size_t g = 0; g < n; ++g)
        groups[g].assign(order.begin() + static_cast<std::ptrdiff_t>(g * size),
                         order.begin() + static_cast<std::ptrdiff_t>((g + 1) * size));
    return groups;
}

} // namespace

double nrmse(std::span<const double> ref, std::span<const double> ach) {
    if (ref.size() != ach.size()) throw ConfigError("series lengths differ");
    if (ref.empty()) throw InsufficientData("empty tracking record");
    const double m = mean(ref);
    if (m == 0.0) throw UndefinedNormalization("reference mean is zero");
    double se = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) se += (ach[i] - ref[i]) * (ach[i] - ref[i]);
    return std::sqrt(se / static_cast<double>(ref.size())) / m;
}

PjmScore pjm_score(std::span<const double> ref, std::span<const double> ach,
                   const ScoreOptions& o) {
    if (ref.size() != ach.size()) throw ConfigError("series lengths differ");
    if (!(o.dt > 0 && o.window > 0 && o.max_delay > 0)) throw ConfigError("invalid score options");
    const auto w = static_cast<std::size_t>(std::llround(o.window / o.dt));
    const auto lags = static_cast<std::size_t>(std::llround(o.max_delay / o.dt));
    if (w == 0 || ref.size() < w) throw InsufficientData("record shorter than one scoring window");

    PjmScore total;
    for (std::size_t start = 0; start + w <= ref.size(); start += w) {
        const auto r = ref.subspan(start, w);
        double best = -2.0;
        std::size_t best_lag = 0;
        for (std::size_t lag = 0; lag <= lags && start + lag + w <= ach.size(); ++lag) {
            const double c = correlation(r, ach.subspan(start + lag, w));
            if (c > best) {
                best = c;
                best_lag = lag;
            }
        }
        const double mr = mean(r);
        if (mr == 0.0) throw UndefinedNormalization("reference mean is zero in a window");
        double abs_err = 0.0;
        for (std::size_t i = 0; i < w; ++i) abs_err += std::abs(ach[start + i] - r[i]);
        const double c = clamp01(best);
        const double d = clamp01(1.0 - static_cast<double>(best_lag) / static_cast<double>(lags));
        const double p = clamp01(1.0 - abs_err / static_cast<double>(w) / std::abs(mr));
        total.correlation += c;
        total.delay += d;
        total.precision += p;
        ++total.windows;
    }
    const auto n = static_cast<double>(total.windows);
    total.correlation /= n;
    total.delay /= n;
    total.precision /= n;
    total.composite = (total.correlation + total.delay + total.precision) / 3.0;
    return total;
}

std::vector<double> group_series(const std::vector<std::vector<double>>& power,
                                 std::span<const std::size_t> devices) {
    std::vector<double> out(power.size(), 0.0);
    for (std::size_t k = 0; k < power.size(); ++k)
        for (std::size_t i : devices) {
            if (i >= power[k].size()) throw AccountingError("device index out of range");
            out[k] += power[k][i];
        }
    return out;
}

double scaled_tracking_variance(std::span<const double> group, std::span<const double> aggregate,
                                std::span<const double> reference) {
    if (group.size() != aggregate.size() || group.size() != reference.size())
        throw ConfigError("series lengths differ");
    if (group.size() < 2) throw InsufficientData("need at least two samples");
    const double mg = mean(group);
    if (mg == 0.0) throw UndefinedNormalization("group never consumed power");
    const double k = mean(aggregate) / mg;
    std::vector<double> e(group.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = k * group[i] - reference[i];
    const double me = mean(e);
    double v = 0.0;
    for (double x : e) v += (x - me) * (x - me);
    return v / static_cast<double>(e.size() - 1);
}

FairnessReport fairness_variance(const std::vector<std::vector<double>>& power,
                                 std::span<const double> reference,
                                 std::span<const std::size_t> remote,
                                 std::span<const std::size_t> virtual_devices,
                                 std::size_t group_size, std::size_t n_groups,
                                 std::uint64_t seed) {
    std::vector<double> aggregate(power.size(), 0.0);
    for (std::size_t k = 0; k < power.size(); ++k)
        for (double p : power[k]) aggregate[k] += p;
    FairnessReport rep;
    rep.remote_variance =
        scaled_tracking_variance(group_series(power, remote), aggregate, reference);
    for (const auto& g : random_groups(virtual_devices, group_size, n_groups, seed))
        rep.virtual_variances.push_back(
            scaled_tracking_variance(group_series(power, g), aggregate, reference));
    const auto [lo, hi] =
        std::minmax_element(rep.virtual_variances.begin(), rep.virtual_variances.end());
    rep.min_virtual = *lo;
    rep.max_virtual = *hi;
    rep.inside = rep.remote_variance >= rep.min_virtual && rep.remote_variance <= rep.max_virtual;
    return rep;
}

SwitchingReport switching_comparison(std::span<const double> switches, double hours,
                                     std::span<const std::size_t> remote,
                                     std::span<const std::size_t> virtual_devices,
                                     std::size_t group_size, std::size_t n_groups,
                                     std::uint64_t seed) {
    if (!(hours > 0)) throw InsufficientData("zero-length run");
    auto rate = [&](std::span<const std::size_t> ids) {
        double s = 0.0;
        for (std::size_t i : ids) s += switches[i];
        return s / static_cast<double>(ids.size()) / hours;
    };
    SwitchingReport rep;
    rep.remote_rate = rate(remote);
    rep.virtual_rate = rate(virtual_devices);
    std::vector<double> means;
    for (const auto& g : random_groups(virtual_devices, group_size, n_groups, seed))
        means.push_back(rate(g));
    const double m = mean(means);
    double v = 0.0;
    for (double x : means) v += (x - m) * (x - m);
    rep.group_std = std::sqrt(v / static_cast<double>(means.size() - 1));
    rep.within = std::abs(rep.remote_rate - rep.virtual_rate) < 2.0 * rep.group_std;
    return rep;
}

} // namespace acfleet::metrics
