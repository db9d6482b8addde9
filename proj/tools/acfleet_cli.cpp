// acfleet command line: experiments, the case matrix, validation presets,
// a standalone plant server and AC calibration.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "acfleet/calibration.hpp"
#include "acfleet/errors.hpp"
#include "acfleet/plantlink.hpp"
#include "acfleet/runner.hpp"

using namespace acfleet;
using nlohmann::json;

namespace {

runner::ExperimentConfig base_config(const std::string& path, std::optional<std::uint64_t> seed,
                                     const std::string& out) {
    runner::ExperimentConfig cfg = path.empty() ? runner::ExperimentConfig{} : runner::load_config(path);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    return cfg;
}

void print_result(const runner::ExperimentResult& r) {
    std::printf("%-10s %-6s nrmse %6.2f%%", r.name.c_str(), r.controller.c_str(), 100.0 * r.nrmse);
    if (r.score) std::printf("  score %.3f", r.score->composite);
    std::printf("  overload %.0f s  hash %s\n", r.overload.max_consecutive_overload(), r.config_hash.c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"AC fleet aggregation simulator"};
    app.require_subcommand(1);

    std::string config, out;
    std::optional<std::uint64_t> seed;

    auto* run = app.add_subcommand("run", "run one experiment");
    std::string controller;
    int case_id = 0;
    bool telemetry = false, tcp = false;
    run->add_option("-c,--config", config, "experiment config (JSON)");
    run->add_option("--seed", seed, "override the master seed");
    run->add_option("-o,--out", out, "output directory");
    run->add_option("--controller", controller, "PI, Markov, PEM or none");
    run->add_option("--case", case_id, "apply the conditions of matrix case 1..10")->check(CLI::Range(1, 10));
    run->add_flag("--telemetry", telemetry, "write the per-house telemetry CSV");
    run->add_flag("--tcp", tcp, "serve the remote partition over loopback TCP");

    auto* matrix = app.add_subcommand("matrix", "run cases x {PI, Markov, PEM}");
    std::string matrix_file, csv = "matrix.csv";
    unsigned parallel = 1;
    matrix->add_option("-c,--config", config, "base experiment config");
    matrix->add_option("-m,--matrix", matrix_file, "case CSV (default: the ten standard cases)");
    matrix->add_option("--seed", seed, "override the master seed");
    matrix->add_option("-o,--out", out, "per-run output directory");
    matrix->add_option("--csv", csv, "result table path");
    matrix->add_option("-j,--parallel", parallel, "concurrent runs")->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate", "open-loop validation presets");
    std::vector<std::string> presets;
    std::string json_out;
    validate->add_option("preset", presets, "exp1..exp7 (default: all)");
    validate->add_option("--seed", seed, "fleet seed");
    validate->add_option("--json", json_out, "write verdicts and data as JSON");

    auto* serve = app.add_subcommand("serve-plant", "serve the remote partition of a fleet over TCP");
    std::string address = "127.0.0.1";
    std::uint16_t port = 0;
    std::uint64_t steps = 0;
    double timeout = 0.0;
    serve->add_option("-c,--config", config, "experiment config for the fleet and ambient");
    serve->add_option("--seed", seed, "override the master seed");
    serve->add_option("--address", address, "bind address");
    serve->add_option("-p,--port", port, "port (0 picks one)");
    serve->add_option("--steps", steps, "steps to serve (0: until the peer leaves)");
    serve->add_option("--timeout", timeout, "seconds to wait for each command");

    auto* calibrate = app.add_subcommand("calibrate", "fit AC parameters to nameplate targets");
    thermal::CalibrationTargets targets;
    calibrate->add_option("--cooling", targets.rated_cooling, "rated cooling, W");
    calibrate->add_option("--power", targets.rated_power, "rated electrical power, W");
    calibrate->add_option("--air", targets.rating_air_temp, "indoor rating temperature, C");
    calibrate->add_option("--ambient", targets.rating_ambient, "outdoor rating temperature, C");
    calibrate->add_option("--slope", targets.ambient_power_slope, "power change per C of ambient");

    auto* trace = app.add_subcommand("make-trace", "write a synthetic regulation trace");
    signal::RegdSpec rs;
    std::string trace_out = "regd_synthetic.csv";
    trace->add_option("-o,--out", trace_out, "CSV path");
    trace->add_option("--duration", rs.duration, "s");
    trace->add_option("--step", rs.step, "sample period, s");
    trace->add_option("--tau", rs.time_constant, "filter time constant, s");
    trace->add_option("--seed", rs.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto cfg = base_config(config, seed, out);
            if (case_id > 0) cfg = runner::with_conditions(cfg, runner::standard_cases()[case_id - 1].conditions);
            if (!controller.empty()) cfg.controller = runner::parse_controller(controller);
            if (telemetry) cfg.write_telemetry = true;
            if (tcp) cfg.plant.remote_via_tcp = true;
            print_result(runner::run_experiment(cfg));
            return 0;
        }
        if (*matrix) {
            const auto cfg = base_config(config, seed, out);
            const auto cases = matrix_file.empty() ? runner::standard_cases() : runner::load_matrix(matrix_file);
            const auto rows = runner::run_matrix(cases, cfg, parallel);
            runner::write_matrix_csv(csv, rows);
            int failed = 0;
            for (const auto& r : rows)
                for (std::size_t k = 0; k < r.results.size(); ++k) {
                    if (!r.errors[k].empty()) {
                        ++failed;
                        std::fprintf(stderr, "case %d controller %zu failed: %s\n", r.c.id, k, r.errors[k].c_str());
                        continue;
                    }
                    print_result(r.results[k]);
                }
            std::printf("wrote %s\n", csv.c_str());
            return failed ? 1 : 0;
        }
        if (*validate) {
            if (presets.empty()) presets = runner::validation_presets();
            json all = json::object();
            bool ok = true;
            for (const auto& p : presets) {
                const auto r = runner::run_validation(p, seed.value_or(1));
                for (const auto& v : r.verdicts)
                    std::printf("%s %-32s %s  %s\n", p.c_str(), v.name.c_str(), v.pass ? "PASS" : "FAIL",
                                v.detail.c_str());
                json verdicts = json::array();
                for (const auto& v : r.verdicts)
                    verdicts.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
                all[p] = {{"pass", r.pass()}, {"verdicts", verdicts}, {"data", r.data}};
                ok = ok && r.pass();
            }
            if (!json_out.empty()) std::ofstream(json_out) << all.dump(2) << "\n";
            return ok ? 0 : 1;
        }
        if (*serve) {
            auto cfg = base_config(config, seed, "");
            auto spec = cfg.fleet;
            spec.seed = cfg.seed;
            spec.nominal.heat.water_heat = cfg.resolved_heat_gain();
            const auto layout = fleet::generate_fleet(spec).subset(fleet::Partition::RemotePlant);
            if (layout.size() == 0) throw ConfigError("the fleet has no remote partition (n_remote = 0)");
            plantlink::ServerOptions so;
            so.address = address;
            so.port = port;
            so.dt = cfg.dt_control;
            so.timeout = timeout;
            so.ambient = cfg.resolved_ambient();
            so.step = {cfg.dt_physics, cfg.workers};
            plantlink::PlantServer server(layout, fleet::initialize_fleet(layout, so.ambient), so);
            server.set_keep_applied_log(false);
            std::printf("listening on %s:%u with %zu houses\n", address.c_str(), server.listen(), layout.size());
            std::fflush(stdout);
            server.serve(steps);
            const auto& log = server.log();
            std::printf("frames %llu commands %llu missed %llu protocol errors %llu\n",
                        static_cast<unsigned long long>(log.frames_sent),
                        static_cast<unsigned long long>(log.commands_received),
                        static_cast<unsigned long long>(log.missed_steps),
                        static_cast<unsigned long long>(log.protocol_errors));
            return 0;
        }
        if (*calibrate) {
            const house::HouseParams h;
            const auto ac = thermal::calibrate_ac(h.thermal, h.ac, targets);
            const auto op = thermal::steady_on_point(h.thermal, ac, targets.rating_air_temp, targets.rating_ambient);
            const json j{{"cooling_prefactor", ac.cooling_prefactor},
                         {"vapor_temperature", ac.vapor_temperature},
                         {"loss_factor", ac.loss_factor},
                         {"friction_power", ac.friction_power},
                         {"check",
                          {{"cooling_w", op.cooling},
                           {"power_w", op.power},
                           {"slope_per_c", thermal::ambient_power_slope(h.thermal, ac, targets.rating_air_temp,
                                                                        targets.rating_ambient)}}}};
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (*trace) {
            signal::write_trace(trace_out, signal::synthetic_regd(rs));
            std::printf("wrote %s\n", trace_out.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
