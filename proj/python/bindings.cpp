#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "acfleet/calibration.hpp"
#include "acfleet/errors.hpp"
#include "acfleet/house.hpp"
#include "acfleet/metrics.hpp"
#include "acfleet/runner.hpp"
#include "acfleet/signal.hpp"
#include "acfleet/thermal.hpp"

namespace py = pybind11;
using namespace acfleet;

namespace {

// Configs and results cross the boundary as JSON text; the Python side
// turns them into dicts.

runner::ExperimentConfig parse_config(const std::string& text) {
    if (text.empty()) return {};
    try {
        return runner::config_from_json(nlohmann::json::parse(text, nullptr, true, true));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string run_experiment_json(const std::string& config, bool series) {
    runner::ExperimentResult r;
    {
        py::gil_scoped_release release;
        r = runner::run_experiment(parse_config(config));
    }
    auto j = r.metrics_json();
    if (series) {
        j["reference"] = r.reference;
        j["achieved"] = r.achieved;
    }
    return j.dump();
}

std::string case_config_json(int case_id, const std::string& base) {
    const auto cases = runner::standard_cases();
    if (case_id < 1 || case_id > static_cast<int>(cases.size()))
        throw ConfigError("case id must be in 1.." + std::to_string(cases.size()));
    return runner::config_to_json(runner::with_conditions(parse_config(base), cases[case_id - 1].conditions)).dump();
}

py::dict cycle_durations(double ambient, double water_heat, double fixed_heat, double thermometer_water_fraction) {
    house::HouseParams h;
    h.thermal.thermometer_water_fraction = thermometer_water_fraction;
    thermal::HeatInputs in;
    in.water_heat = water_heat;
    in.fixed_heat = fixed_heat;
    const auto r = thermal::cycle_durations(h.thermal, h.ac, in, h.deadband(), ambient);
    py::dict d;
    d["on_time"] = r.on_time;
    d["off_time"] = r.off_time;
    d["period"] = r.period();
    d["duty"] = r.duty();
    d["heat_injected"] = r.heat_injected;
    d["heat_removed"] = r.heat_removed;
    d["electric_energy"] = r.electric_energy;
    d["cycles"] = r.cycles;
    return d;
}

py::dict calibrate(double rated_cooling, double rated_power, double rating_air_temp, double rating_ambient,
                   double ambient_power_slope) {
    const house::HouseParams h;
    const thermal::CalibrationTargets t{rated_cooling, rated_power, rating_air_temp, rating_ambient,
                                        ambient_power_slope};
    const auto ac = thermal::calibrate_ac(h.thermal, h.ac, t);
    py::dict d;
    d["cooling_prefactor"] = ac.cooling_prefactor;
    d["loss_factor"] = ac.loss_factor;
    d["friction_power"] = ac.friction_power;
    d["slope_check"] = thermal::ambient_power_slope(h.thermal, ac, rating_air_temp, rating_ambient);
    return d;
}

py::dict pjm_score(const std::vector<double>& reference, const std::vector<double>& achieved, double dt,
                   double window, double max_delay) {
    const auto s = metrics::pjm_score(reference, achieved, {dt, window, max_delay});
    py::dict d;
    d["correlation"] = s.correlation;
    d["delay"] = s.delay;
    d["precision"] = s.precision;
    d["composite"] = s.composite;
    d["windows"] = s.windows;
    return d;
}

std::string validation_json(const std::string& preset, std::uint64_t seed) {
    runner::ValidationResult r;
    {
        py::gil_scoped_release release;
        r = runner::run_validation(preset, seed);
    }
    nlohmann::json j{{"preset", r.preset}, {"pass", r.pass()}, {"data", r.data}};
    auto& v = j["verdicts"] = nlohmann::json::array();
    for (const auto& x : r.verdicts) v.push_back({{"name", x.name}, {"pass", x.pass}, {"detail", x.detail}});
    return j.dump();
}

py::tuple synthetic_trace(double duration, double step, double time_constant, std::uint64_t seed) {
    const auto tr = signal::synthetic_regd({duration, step, time_constant, seed});
    return py::make_tuple(tr.time, tr.value);
}

} // namespace

PYBIND11_MODULE(_acfleet, m) {
    m.doc() = "Air-conditioner fleet simulation and control";

    auto base = py::register_exception<Error>(m, "AcfleetError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<NeverOnError>(m, "NeverOnError", base.ptr());
    py::register_exception<NeverOffError>(m, "NeverOffError", base.ptr());
    py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
    py::register_exception<UndefinedNormalization>(m, "UndefinedNormalization", base.ptr());

    m.def("default_config_json", [] { return runner::config_to_json(runner::ExperimentConfig{}).dump(); });
    m.def("resolve_config_json", [](const std::string& c) { return runner::config_to_json(parse_config(c)).dump(); },
          py::arg("config"));
    m.def("load_config_json", [](const std::string& path) { return runner::config_to_json(runner::load_config(path)).dump(); },
          py::arg("path"));
    m.def("config_hash_json", [](const std::string& c) { return runner::config_hash(parse_config(c)); },
          py::arg("config"));
    m.def("run_experiment_json", &run_experiment_json, py::arg("config"), py::arg("series") = false);
    m.def("case_config_json", &case_config_json, py::arg("case_id"), py::arg("base") = "");
    m.def("case_count", [] { return runner::standard_cases().size(); });
    m.def("cycle_durations", &cycle_durations, py::arg("ambient"), py::arg("water_heat") = 200.0,
          py::arg("fixed_heat") = 125.0, py::arg("thermometer_water_fraction") = house::HouseParams{}.thermal.thermometer_water_fraction);
    const thermal::CalibrationTargets t;
    m.def("calibrate", &calibrate, py::arg("rated_cooling") = t.rated_cooling, py::arg("rated_power") = t.rated_power,
          py::arg("rating_air_temp") = t.rating_air_temp, py::arg("rating_ambient") = t.rating_ambient,
          py::arg("ambient_power_slope") = t.ambient_power_slope);
    m.def("nrmse", [](const std::vector<double>& r, const std::vector<double>& a) { return metrics::nrmse(r, a); },
          py::arg("reference"), py::arg("achieved"));
    const metrics::ScoreOptions so;
    m.def("pjm_score", &pjm_score, py::arg("reference"), py::arg("achieved"), py::arg("dt") = so.dt,
          py::arg("window") = so.window, py::arg("max_delay") = so.max_delay);
    m.def("validation_presets", &runner::validation_presets);
    m.def("validation_json", &validation_json, py::arg("preset"), py::arg("seed") = 1);
    const signal::RegdSpec rs;
    m.def("synthetic_trace", &synthetic_trace, py::arg("duration") = rs.duration, py::arg("step") = rs.step,
          py::arg("time_constant") = rs.time_constant, py::arg("seed") = rs.seed);
}
