#include <doctest.h>

#include <set>

#include "acfleet/errors.hpp"
#include "acfleet/grid.hpp"
#include "acfleet/runner.hpp"

using namespace acfleet;
using namespace acfleet::grid;

namespace {

fleet::TelemetryFrame frame(std::size_t n, double power_each) {
    fleet::TelemetryFrame fr;
    for (std::size_t i = 0; i < n; ++i) {
        fleet::DeviceTelemetry d;
        d.index = i;
        d.power = power_each;
        fr.devices.push_back(d);
    }
    return fr;
}

} // namespace

TEST_CASE("a single transformer holds every house") {
    const auto s = assign_houses(543, 1, SizeLaw::Uniform, 1);
    REQUIRE(s.size() == 1);
    CHECK(s[0].houses.size() == 543);
}

TEST_CASE("uniform assignment deals 5 or 6 houses to each of 100 transformers") {
    const auto s = assign_houses(543, 100, SizeLaw::Uniform, 3);
    std::set<std::size_t> seen;
    for (const auto& t : s) {
        CHECK((t.houses.size() == 5 || t.houses.size() == 6));
        seen.insert(t.houses.begin(), t.houses.end());
    }
    CHECK(seen.size() == 543);
}

TEST_CASE("random assignment covers every house exactly once") {
    const auto s = assign_houses(543, 100, SizeLaw::Random, 3);
    std::size_t total = 0;
    std::set<std::size_t> seen;
    for (const auto& t : s) {
        total += t.houses.size();
        seen.insert(t.houses.begin(), t.houses.end());
    }
    CHECK(total == 543);
    CHECK(seen.size() == 543);
}

TEST_CASE("assignment is deterministic in the seed") {
    const auto a = assign_houses(100, 10, SizeLaw::Uniform, 42);
    const auto b = assign_houses(100, 10, SizeLaw::Uniform, 42);
    const auto c = assign_houses(100, 10, SizeLaw::Uniform, 43);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t].houses == b[t].houses);
    bool differs = false;
    for (std::size_t t = 0; t < a.size(); ++t) differs = differs || a[t].houses != c[t].houses;
    CHECK(differs);
    CHECK_THROWS_AS(assign_houses(10, 0, SizeLaw::Uniform, 1), ConfigError);
}

TEST_CASE("all off is zero loading") {
    auto s = assign_houses(20, 4, SizeLaw::Uniform, 1);
    for (auto& t : s) t.rating = 1e4;
    OverloadTracker tr(s, 20);
    const auto load = tr.update(frame(20, 0.0), 2.0);
    for (double l : load) CHECK(l == 0.0);
    CHECK(tr.report().peak_pu() == 0.0);
}

TEST_CASE("overload streaks are measured in seconds and reset") {
    auto s = assign_houses(10, 1, SizeLaw::Uniform, 1);
    s[0].rating = 10 * 2600.0;
    OverloadTracker tr(s, 10);
    for (int k = 0; k < 60; ++k) tr.update(frame(10, 2700.0), 2.0);
    CHECK(tr.report().max_consecutive_overload() == doctest::Approx(120.0));
    tr.update(frame(10, 2000.0), 2.0);
    CHECK(tr.report().transformers[0].current_overload == 0.0);
    for (int k = 0; k < 10; ++k) tr.update(frame(10, 2700.0), 2.0);
    CHECK(tr.report().max_consecutive_overload() == doctest::Approx(120.0));
    CHECK(tr.report().transformers[0].overload_samples == 70);
    CHECK(tr.report().peak_pu() == doctest::Approx(2700.0 / 2600.0));
}

TEST_CASE("simultaneous starts are counted with their inrush") {
    auto s = assign_houses(4, 1, SizeLaw::Uniform, 1);
    s[0].rating = 4 * 2600.0;
    OverloadTracker tr(s, 4);
    auto fr = frame(4, 2600.0);
    fr.devices[0].started = fr.devices[1].started = true;
    fr.devices[0].inrush_peak = fr.devices[1].inrush_peak = 5.5 * 2600.0;
    tr.update(fr, 2.0);
    CHECK(tr.report().simultaneous_inrush() == 1);
    CHECK(tr.report().transformers[0].peak_inrush_pu == doctest::Approx(1.0 + 2 * 4.5 / 4));
}

TEST_CASE("ratings follow the peak over headroom") {
    auto s = assign_houses(6, 2, SizeLaw::Uniform, 1);
    std::vector<double> peaks{9000.0, 0.0};
    set_ratings(s, peaks, 0.9, 2600.0);
    CHECK(s[0].rating == doctest::Approx(10000.0));
    CHECK(s[1].rating == doctest::Approx(3 * 2600.0 / 0.9));
    CHECK_THROWS_AS(set_ratings(s, peaks, 0.0, 2600.0), ConfigError);
}

TEST_CASE("tracker rejects inconsistent assignments") {
    auto s = assign_houses(4, 2, SizeLaw::Uniform, 1);
    for (auto& t : s) t.rating = 1.0;
    s[1].houses.push_back(s[0].houses.front());
    CHECK_THROWS_AS(OverloadTracker(s, 4), AccountingError);
    auto missing = assign_houses(4, 2, SizeLaw::Uniform, 1);
    for (auto& t : missing) t.rating = 1.0;
    missing[0].houses.pop_back();
    CHECK_THROWS_AS(OverloadTracker(missing, 4), AccountingError);
}

TEST_CASE("nominal tracking overloads on the order of minutes by a small margin") {
    runner::ExperimentConfig cfg;
    cfg = runner::with_conditions(cfg, runner::standard_cases().front().conditions);
    cfg.controller = runner::ControllerKind::PI;
    const auto r = runner::run_experiment(cfg);
    const double s = r.overload.max_consecutive_overload();
    CHECK(s >= 30.0);
    CHECK(s <= 3000.0);
    // With five or six houses per transformer one extra compressor is a
    // large step, so the check is on the mean excess while overloaded.
    CHECK(r.overload.mean_overload_excess() > 0.0);
    CHECK(r.overload.mean_overload_excess() < 0.2);
}
