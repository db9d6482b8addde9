#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "acfleet/house.hpp"
#include "acfleet/rng.hpp"

namespace acfleet::fleet {

/// Where a house lives: simulated in-process, or behind the plant link.
/// Controllers never see this tag.
enum class Partition { LocalVirtual, RemotePlant };

enum class DeviceMode { Thermostat, Packetized };

/// Device-side behaviour under packetized control.
struct PacketConfig {
    double epoch_length = 60.0;          // s, duration of one granted on-packet
    double mean_time_to_request = 60.0; // s, at mid-deadband
    bool allow_turn_off_requests = true;
};

struct FleetSpec {
    std::size_t n_houses = 543;
    std::size_t n_remote = 20; // trailing houses tagged RemotePlant
    house::HouseParams nominal;
    double heterogeneity = 0.20;
    std::uint64_t seed = 1;
    double avg_on_power_target = 2600.0; // W
    double reference_ambient = 32.2;     // °C, where on-power is rated
};

/// Houses plus the bookkeeping needed to rebuild any subset of them with
/// identical behaviour (streams are tied to the global house number).
struct FleetLayout {
    std::vector<house::HouseParams> houses;
    std::vector<Partition> partitions;
    std::vector<std::uint64_t> streams;
    std::uint64_t seed = 0;
    double power_scale = 1.0;

    std::size_t size() const { return houses.size(); }
    FleetLayout subset(Partition which) const;
};

/// Multiplies every extensive parameter (capacities, conductances, cooling
/// prefactor, friction, heat inputs) by `factor`. Temperatures are unchanged
/// and powers scale linearly.
house::HouseParams scale_house(const house::HouseParams& params, double factor);

/// Steady on-power at setpoint for the given ambient.
double rated_on_power(const house::HouseParams& params, double ambient);

FleetLayout generate_fleet(const FleetSpec& spec);

enum class RequestKind { None, On, Off };

struct Request {
    RequestKind kind = RequestKind::None;
    double power = 0.0;     // W the request would add (On) or shed (Off)
    bool extension = false; // On request from a running device whose packet is ending
};

/// Probability that a device at deadband `position` issues a request of
/// `kind` within `dt`. On-requests grow toward the upper edge, off-requests
/// toward the lower edge; both equal 1 - exp(-dt/MTTR) at mid-band.
double request_probability(const PacketConfig& cfg, RequestKind kind, double position, double dt);

struct DeviceTelemetry {
    std::size_t index = 0;
    house::Compressor compressor = house::Compressor::Off;
    double measured = 0.0;   // °C
    double power = 0.0;      // W
    double lock_remaining = 0.0;
    double time_in_state = 0.0;
    double position = 0.0;   // deadband position of `measured`
    bool accepted = true;    // last command applied to this device
    bool started = false;    // turned on during the frame
    double inrush_peak = 0.0;
    Request request;
    bool corrupt = false;    // set by decoders on infeasible data
};

struct Counts {
    std::size_t on = 0, off = 0, locked = 0;
};

struct TelemetryFrame {
    double time = 0.0;
    double aggregate_power = 0.0;
    Counts counts;
    std::size_t starts = 0;
    std::vector<DeviceTelemetry> devices;
};

struct DeviceAgent {
    Rng rng;
    bool in_packet = false;
    double packet_remaining = 0.0;
    bool pending_extension = false;
    double expected_power = 0.0;
};

struct FleetState {
    std::vector<house::HouseState> houses;
    std::vector<DeviceAgent> agents;
    std::vector<bool> accepted;
    double time = 0.0;
    double aggregate_power = 0.0;
    Counts counts;
    DeviceMode mode = DeviceMode::Thermostat;
    PacketConfig packet;
};

/// Houses at independent random points of their cycle, deterministic in the
/// layout's streams.
FleetState initialize_fleet(const FleetLayout& layout, double ambient);

/// Switches device behaviour. Entering packetized mode gives running devices
/// a packet with a uniformly random remaining length.
void set_mode(FleetState& state, DeviceMode mode, const PacketConfig& packet = {});

struct StepOptions {
    double dt_physics = 1.0;
    unsigned workers = 1;
};

/// Applies `commands` (one per house, NoChange allowed) through the
/// feasibility filter, advances every house by `dt`, and emits telemetry.
/// Physics failures are rethrown as HouseFailure naming the house.
TelemetryFrame step_fleet(FleetState& state, const FleetLayout& layout, double ambient,
                          std::span<const house::SwitchCommand> commands, double dt,
                          const StepOptions& options = {});

/// Telemetry of the current state without advancing time.
TelemetryFrame observe(const FleetState& state, const FleetLayout& layout);

enum class SyncDirection { AllOn, AllOff };

struct SyncReport {
    std::size_t commands_issued = 0;
    double elapsed = 0.0;
    double shared_fraction = 0.0;
};

/// Repeatedly commands every house toward `direction` (feasible commands
/// only) until at least `threshold` of houses share that compressor state.
/// Throws ConvergenceTimeout after `horizon` seconds.
SyncReport force_synchronize(FleetState& state, const FleetLayout& layout, SyncDirection direction,
                             double ambient, double dt, double horizon,
                             double threshold = 0.95, const StepOptions& options = {});

double shared_fraction(const FleetState& state, SyncDirection direction);

} // namespace acfleet::fleet
