#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acfleet/channel.hpp"
#include "acfleet/controller.hpp"
#include "acfleet/fleet.hpp"
#include "acfleet/grid.hpp"
#include "acfleet/metrics.hpp"
#include "acfleet/signal.hpp"

namespace acfleet::runner {

enum class ControllerKind { None, PI, Markov, PEM };
enum class SignalKind { RegD, Square };
enum class Level { Nominal, Extreme };

std::string to_string(ControllerKind k);
ControllerKind parse_controller(const std::string& s);

struct Conditions {
    SignalKind signal = SignalKind::RegD;
    double amplitude_fraction = 0.10;
    Level voltage = Level::Nominal; // recorded only; no power flow is modeled
    Level comm = Level::Nominal;
    Level outdoor = Level::Nominal;
};

struct SignalSpec {
    double square_period = 600.0;  // s
    std::string trace_file;        // empty: generate the synthetic trace in memory
    signal::RegdSpec synthetic;
};

struct GridSpec {
    std::size_t n_transformers = 100;
    grid::SizeLaw law = grid::SizeLaw::Uniform;
    double headroom = 0.9;
};

struct PlantSpec {
    bool remote_via_tcp = false; // serve the remote partition over loopback
    double timeout = 0.0;        // s of wall time per step, 0 means 2*dt_control
};

struct ExperimentConfig {
    std::string name = "run";
    std::uint64_t seed = 1;
    fleet::FleetSpec fleet;
    Conditions conditions;
    std::optional<double> ambient;   // °C; default from the outdoor level
    std::optional<double> heat_gain; // W per house before scaling; default from the outdoor level
    ControllerKind controller = ControllerKind::PEM;
    control::PiConfig pi;
    control::MarkovBins markov_bins;
    bool markov_bias_correction = true;
    fleet::PacketConfig pem;
    SignalSpec signal;
    channel::ChannelModel channel; // mode and seed are derived from conditions and seed
    GridSpec grid;
    PlantSpec plant;
    double settle = 1800.0;       // s, uncontrolled
    double warmup = 300.0;        // s at the start of settle excluded from estimates
    double duration = 2400.0;     // s, tracking
    double dt_control = 2.0;      // s
    double dt_physics = 1.0;      // s
    unsigned workers = 1;
    std::filesystem::path output_dir; // empty: no files written
    bool write_telemetry = false;

    double resolved_ambient() const;
    double resolved_heat_gain() const;
    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& file);
/// FNV-1a over the canonical JSON of the resolved config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct ExperimentResult {
    std::string name;
    std::string controller;
    std::string config_hash;
    std::uint64_t seed = 0;
    double baseline = 0.0;
    double nrmse = 0.0;
    std::optional<metrics::PjmScore> score; // absent for square waves
    grid::OverloadReport overload;
    std::optional<metrics::FairnessReport> fairness;
    std::optional<metrics::SwitchingReport> switching;
    double loss_rate = 0.0;
    std::size_t commands_issued = 0;
    std::size_t commands_delivered = 0;
    std::size_t commands_rejected = 0;
    std::size_t stale_dropped = 0;
    std::size_t saturated_steps = 0;
    std::uint64_t plant_frames = 0;
    std::uint64_t aggregator_steps = 0;
    std::optional<std::uint64_t> first_command_step; // plant step of the first delivered command
    std::uint64_t settle_steps = 0;
    std::vector<double> reference;
    std::vector<double> achieved;
    std::vector<double> settle_power;
    std::filesystem::path telemetry_path;

    nlohmann::json metrics_json() const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Applies the comm, outdoor and signal levels to the config.
ExperimentConfig with_conditions(ExperimentConfig cfg, const Conditions& c);

struct MatrixCase {
    int id = 0;
    Conditions conditions;
};

/// The ten standard test cases.
std::vector<MatrixCase> standard_cases();

struct MatrixRow {
    MatrixCase c;
    std::vector<ExperimentResult> results; // PI, Markov, PEM
    std::vector<std::string> errors;       // per controller, empty when fine
};

std::vector<MatrixRow> run_matrix(const std::vector<MatrixCase>& cases, const ExperimentConfig& base,
                                  unsigned parallel = 1);
std::vector<MatrixCase> load_matrix(const std::filesystem::path& file);
void write_matrix_csv(const std::filesystem::path& file, const std::vector<MatrixRow>& rows);

// ---------------------------------------------------------------- validation presets

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ValidationResult {
    std::string preset;
    std::vector<Verdict> verdicts;
    nlohmann::json data;
    bool pass() const;
};

ValidationResult run_validation(const std::string& preset, std::uint64_t seed = 1);
std::vector<std::string> validation_presets();

/// Envelope of |P - mean| per window of `period` seconds.
std::vector<double> oscillation_envelope(const std::vector<double>& power, double dt, double period,
                                         double mean);

struct DesyncResult {
    double natural_period = 0.0;
    double mean_power = 0.0;
    std::vector<double> envelope; // per natural period after release
    std::vector<double> power;
    double dt = 0.0;
};

/// Forces every house off until the fleet shares that state, holds for
/// `hold` seconds, then releases and records `cycles` natural periods.
DesyncResult desync_experiment(const fleet::FleetSpec& spec, double ambient, double hold,
                               double cycles, double dt = 2.0);

} // namespace acfleet::runner
