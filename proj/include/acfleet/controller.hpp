#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "acfleet/fleet.hpp"
#include "acfleet/rng.hpp"

namespace acfleet::control {

struct Observation {
    double time = 0.0;
    double reference = 0.0; // W, target for the end of the coming step
    const fleet::TelemetryFrame* frame = nullptr;
};

struct CommandBatch {
    std::vector<house::SwitchCommand> commands; // one per device, NoChange allowed
    bool saturated = false;
    std::size_t issued = 0;
};

class Controller {
  public:
    virtual ~Controller() = default;
    virtual std::string name() const = 0;
    virtual CommandBatch step(const Observation& obs) = 0;
};

/// Devices the aggregator may switch on / off without the plant rejecting it.
bool can_turn_on(const fleet::DeviceTelemetry& d);
bool can_turn_off(const fleet::DeviceTelemetry& d);

// ---------------------------------------------------------------- PI

struct PiConfig {
    double kp = 0.5;             // W of switched capacity per W of error
    double ki = 0.01;            // 1/s
    double anti_windup_limit = 0; // W·s; 0 selects 10x the per-step fleet capacity
};

struct PiState {
    double integral = 0.0; // W·s
};

/// Signed switching demand in W: positive means switch devices on.
double pi_step(const PiConfig& cfg, double error, double dt, double limit, PiState& state);

class PiController final : public Controller {
  public:
    PiController(PiConfig cfg, std::size_t n_devices, double avg_on_power, double dt,
                 std::uint64_t seed);
    std::string name() const override { return "PI"; }
    CommandBatch step(const Observation& obs) override;
    const PiState& state() const { return state_; }

  private:
    PiConfig cfg_;
    PiState state_;
    std::size_t n_;
    double avg_on_power_;
    double dt_;
    double limit_;
    Rng rng_;
};

// ---------------------------------------------------------------- Markov

struct MarkovBins {
    std::size_t n_temp_bins = 20;
    bool use_delayed_dynamics = false;
    double recent_hold = 12.0; // s a device stays in the recently-switched branch

    // Layout: [on | off unlocked | off locked | (recently on)] x n_temp_bins
    std::size_t size() const { return n_temp_bins * (use_delayed_dynamics ? 4 : 3); }
    std::size_t bin_of(const fleet::DeviceTelemetry& d) const;
    bool is_on(std::size_t bin) const;
    bool is_off_unlocked(std::size_t bin) const;
    std::size_t temp_bin(double position) const;
};

struct MarkovConfig {
    MarkovBins bins;
    std::vector<std::vector<double>> transition; // row-stochastic, bins.size() square
    double avg_on_power = 2600.0;                // W
    bool bias_correction = true; // anchor the prediction to the observed power
};

struct MarkovDecision {
    double predicted = 0.0; // W
    double u = 0.0;         // broadcast probability, signed (+ on, - off)
    bool saturated = false;
};

std::vector<double> propagate(const std::vector<std::vector<double>>& m,
                              std::span<const double> occupancy);

/// One-step prediction and broadcast probability. `eligible_on` /
/// `eligible_off` are the occupancy fractions the plant would accept.
MarkovDecision markov_step(const MarkovConfig& cfg, std::span<const double> occupancy,
                           double reference, std::size_t n_devices, double observed_power,
                           double eligible_on, double eligible_off);

/// Accumulates bin-to-bin moves between consecutive frames.
class TransitionCounter {
  public:
    explicit TransitionCounter(MarkovBins bins);
    void add(const fleet::TelemetryFrame& before, const fleet::TelemetryFrame& after);
    /// Row-normalized counts; unvisited rows become self-loops.
    std::vector<std::vector<double>> matrix() const;

  private:
    MarkovBins bins_;
    std::vector<std::vector<double>> counts_;
};

/// Counts bin-to-bin moves over consecutive frames and normalizes rows.
/// Rows never visited become self-loops.
std::vector<std::vector<double>> estimate_transitions(const MarkovBins& bins,
                                                      std::span<const fleet::TelemetryFrame> frames);

/// Mean per-device power of running devices over the frames.
double mean_on_power(std::span<const fleet::TelemetryFrame> frames);

void check_row_stochastic(const std::vector<std::vector<double>>& m);

class MarkovController final : public Controller {
  public:
    MarkovController(MarkovConfig cfg, std::uint64_t seed);
    std::string name() const override { return "Markov"; }
    CommandBatch step(const Observation& obs) override;
    const MarkovDecision& last() const { return last_; }

  private:
    MarkovConfig cfg_;
    MarkovDecision last_;
    Rng rng_;
};

// ---------------------------------------------------------------- PEM

struct PemConfig {
    fleet::PacketConfig packet;
};

struct PendingRequest {
    std::size_t device = 0;
    fleet::Request request;
};

struct PemDecision {
    std::vector<bool> granted; // parallel to the request list
    double projected = 0.0;    // W after grants
    bool saturated = false;
};

/// Greedy fill in the given order. Extension requests count as already
/// running, so their power is removed from the projection until granted.
PemDecision pem_step(const PemConfig& cfg, std::span<const PendingRequest> requests,
                     double current_power, double reference);

class PemController final : public Controller {
  public:
    PemController(PemConfig cfg, std::uint64_t seed);
    std::string name() const override { return "PEM"; }
    CommandBatch step(const Observation& obs) override;

  private:
    PemConfig cfg_;
    Rng rng_;
    std::vector<double> last_position_;
};

} // namespace acfleet::control
