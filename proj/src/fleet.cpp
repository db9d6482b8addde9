#include "acfleet/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "acfleet/errors.hpp"

namespace acfleet::fleet {

using house::Compressor;
using house::HouseParams;
using house::HouseState;
using house::SwitchCommand;
using house::Target;

namespace {

constexpr std::uint64_t kParamStream = 0;
constexpr std::uint64_t kStateStream = 1;
constexpr std::uint64_t kDeviceStream = 2;

std::string house_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "h%04zu", i);
    return buf;
}

Counts count(const std::vector<HouseState>& houses) {
    Counts c;
    for (const auto& h : houses) {
        switch (h.compressor) {
        case Compressor::On:
        case Compressor::LockedOn: ++c.on; break;
        case Compressor::Off: ++c.off; break;
        case Compressor::LockedOff: ++c.locked; break;
        }
    }
    return c;
}

template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    if (workers <= 1 || n < 64) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace

double request_probability(const PacketConfig& cfg, RequestKind kind, double position,
                           double dt) {
    if (kind == RequestKind::None) return 0.0;
    const double x = kind == RequestKind::On ? position : 1.0 - position;
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double rate = x / (1.0 - x) / cfg.mean_time_to_request;
    return 1.0 - std::exp(-rate * dt);
}

FleetLayout FleetLayout::subset(Partition which) const {
    FleetLayout out;
    out.seed = seed;
    out.power_scale = power_scale;
    for (std::size_t i = 0; i < houses.size(); ++i) {
        if (partitions[i] != which) continue;
        out.houses.push_back(houses[i]);
        out.partitions.push_back(partitions[i]);
        out.streams.push_back(streams[i]);
    }
    return out;
}

HouseParams scale_house(const HouseParams& in, double f) {
    HouseParams p = in;
    auto& t = p.thermal;
    t.water_capacity *= f;
    t.air_capacity *= f;
    t.evaporator_capacity *= f;
    t.condenser_capacity *= f;
    t.water_air_conductance *= f;
    t.evaporator_conductance *= f;
    t.condenser_conductance *= f;
    t.wall_conductance *= f;
    p.ac.cooling_prefactor *= f;
    p.ac.friction_power *= f;
    p.heat.water_heat *= f;
    p.heat.air_heat *= f;
    p.heat.fixed_heat *= f;
    return p;
}

double rated_on_power(const HouseParams& p, double ambient) {
    return thermal::steady_on_point(p.thermal, p.ac, p.setpoint, ambient).power;
}

FleetLayout generate_fleet(const FleetSpec& spec) {
    if (spec.n_houses < 1) throw ConfigError("fleet needs at least one house");
    if (!(spec.heterogeneity >= 0 && spec.heterogeneity < 1))
        throw ConfigError("heterogeneity fraction must lie in [0, 1)");
    if (spec.n_remote > spec.n_houses) throw ConfigError("more remote houses than houses");
    spec.nominal.validate();

    FleetLayout layout;
    layout.seed = spec.seed;
    const double h = spec.heterogeneity;
    for (std::size_t i = 0; i < spec.n_houses; ++i) {
        Rng rng(derive_seed(derive_seed(spec.seed, i), kParamStream));
        auto vary = [&](double& v) { v *= rng.uniform(1.0 - h, 1.0 + h); };
        HouseParams p = spec.nominal;
        // Draw order is part of the determinism contract.
        vary(p.thermal.water_capacity);
        vary(p.thermal.air_capacity);
        vary(p.thermal.evaporator_capacity);
        vary(p.thermal.condenser_capacity);
        vary(p.thermal.water_air_conductance);
        vary(p.thermal.evaporator_conductance);
        vary(p.thermal.condenser_conductance);
        vary(p.thermal.wall_conductance);
        vary(p.thermal.thermometer_water_fraction);
        vary(p.ac.cooling_prefactor);
        vary(p.ac.loss_factor);
        vary(p.ac.friction_power);
        vary(p.heat.water_heat);
        vary(p.heat.fixed_heat);
        vary(p.sensor_lag);
        p.thermal.thermometer_water_fraction = std::min(p.thermal.thermometer_water_fraction, 1.0);
        p.ac.loss_factor = std::max(p.ac.loss_factor, 1.0);
        p.id = house_name(i);
        layout.houses.push_back(std::move(p));
        layout.partitions.push_back(i + spec.n_remote >= spec.n_houses ? Partition::RemotePlant
                                                                       : Partition::LocalVirtual);
        layout.streams.push_back(i);
    }

    double mean_power = 0.0;
    for (const auto& p : layout.houses) mean_power += rated_on_power(p, spec.reference_ambient);
    mean_power /= static_cast<double>(layout.houses.size());
    layout.power_scale = spec.avg_on_power_target > 0 ? spec.avg_on_power_target / mean_power : 1.0;
    for (auto& p : layout.houses) p = scale_house(p, layout.power_scale);
    return layout;
}

FleetState initialize_fleet(const FleetLayout& layout, double ambient) {
    FleetState st;
    st.houses.reserve(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& p = layout.houses[i];
        const std::uint64_t base = derive_seed(layout.seed, layout.streams[i]);
        Rng rng(derive_seed(base, kStateStream));
        // Start on with probability of a typical duty cycle so the fleet does
        // not begin in a synchronized state.
        const bool on = rng.bernoulli(0.3);
        const double position = rng.uniform();
        st.houses.push_back(house::initial_state(p, ambient, position, on));
        DeviceAgent agent;
        agent.rng = Rng(derive_seed(base, kDeviceStream));
        agent.expected_power = rated_on_power(p, ambient);
        st.agents.push_back(agent);
    }
    st.accepted.assign(layout.size(), true);
    st.counts = count(st.houses);
    for (std::size_t i = 0; i < layout.size(); ++i)
        st.aggregate_power += house::instantaneous_power(st.houses[i], layout.houses[i]).active;
    return st;
}

void set_mode(FleetState& st, DeviceMode mode, const PacketConfig& packet) {
    st.mode = mode;
    st.packet = packet;
    for (std::size_t i = 0; i < st.houses.size(); ++i) {
        auto& a = st.agents[i];
        a.pending_extension = false;
        if (mode == DeviceMode::Packetized && st.houses[i].is_on()) {
            a.in_packet = true;
            a.packet_remaining = a.rng.uniform() * packet.epoch_length;
        } else {
            a.in_packet = false;
            a.packet_remaining = 0.0;
        }
    }
}

TelemetryFrame observe(const FleetState& st, const FleetLayout& layout) {
    TelemetryFrame fr;
    fr.time = st.time;
    fr.counts = st.counts;
    fr.devices.resize(st.houses.size());
    for (std::size_t i = 0; i < st.houses.size(); ++i) {
        const auto& h = st.houses[i];
        const auto& p = layout.houses[i];
        auto& d = fr.devices[i];
        const auto sample = house::instantaneous_power(h, p);
        d.index = i;
        d.compressor = h.compressor;
        d.measured = h.measured;
        d.power = sample.active;
        d.lock_remaining = h.lock_remaining;
        d.time_in_state = h.time_in_state;
        d.position = p.position(h.measured);
        d.accepted = st.accepted[i];
        d.started = h.just_started;
        d.inrush_peak = sample.inrush ? sample.inrush->peak_power : 0.0;
        fr.aggregate_power += d.power;
        if (d.started) ++fr.starts;
    }
    return fr;
}

TelemetryFrame step_fleet(FleetState& st, const FleetLayout& layout, double ambient,
                          std::span<const SwitchCommand> commands, double dt,
                          const StepOptions& options) {
    const std::size_t n = st.houses.size();
    if (commands.size() != n) throw ConfigError("command list length must equal fleet size");
    if (!(dt > 0)) throw ConfigError("fleet step requires dt > 0");
    const bool packetized = st.mode == DeviceMode::Packetized;
    const int substeps = std::max(1, static_cast<int>(std::lround(dt / options.dt_physics)));
    const double h = dt / substeps;
    std::vector<Request> requests(n);

    parallel_for(n, options.workers, [&](std::size_t i) {
        const auto& p = layout.houses[i];
        auto& hs = st.houses[i];
        auto& agent = st.agents[i];
        try {
            const SwitchCommand cmd = commands[i];
            bool accepted = true;
            if (cmd.target != Target::NoChange) {
                const auto out = house::apply_command(hs, cmd, p);
                accepted = out.accepted;
                hs = out.state;
                if (packetized && accepted && cmd.source == house::Source::Aggregator) {
                    if (cmd.target == Target::On) {
                        agent.in_packet = true;
                        agent.packet_remaining = st.packet.epoch_length;
                    } else {
                        agent.in_packet = false;
                    }
                }
            }
            if (packetized && agent.pending_extension && cmd.target != Target::On) {
                // Extension not granted: the packet ends now.
                hs = house::apply_command(hs, {Target::Off, house::Source::Device}, p).state;
                agent.in_packet = false;
            }
            agent.pending_extension = false;
            st.accepted[i] = accepted;

            bool started = hs.just_started;
            for (int k = 0; k < substeps; ++k) {
                hs = house::step_house(hs, p, ambient, h);
                started = started || hs.just_started;
            }
            hs.just_started = started && hs.is_on();

            if (packetized) {
                if (!hs.is_on()) agent.in_packet = false;
                if (agent.in_packet) agent.packet_remaining -= dt;
                if (hs.is_on())
                    agent.expected_power = house::instantaneous_power(hs, p).active;
                const double pos = p.position(hs.measured);
                Request& r = requests[i];
                if (agent.in_packet && agent.packet_remaining <= dt) {
                    if (pos > 0.0) {
                        r = {RequestKind::On, agent.expected_power, true};
                        agent.pending_extension = true;
                    } else {
                        hs = house::apply_command(hs, {Target::Off, house::Source::Device}, p)
                                 .state;
                        agent.in_packet = false;
                    }
                } else if (agent.in_packet) {
                    if (st.packet.allow_turn_off_requests &&
                        agent.rng.bernoulli(request_probability(st.packet, RequestKind::Off, pos, dt)))
                        r = {RequestKind::Off, agent.expected_power, false};
                } else if (hs.compressor == Compressor::Off) {
                    if (agent.rng.bernoulli(request_probability(st.packet, RequestKind::On, pos, dt)))
                        r = {RequestKind::On, agent.expected_power, false};
                }
            }
        } catch (const HouseFailure&) {
            throw;
        } catch (const Error& e) {
            throw HouseFailure(p.id, st.time, e.what());
        }
    });

    st.time += dt;
    st.counts = count(st.houses);
    TelemetryFrame fr = observe(st, layout);
    for (std::size_t i = 0; i < n; ++i) fr.devices[i].request = requests[i];
    st.aggregate_power = fr.aggregate_power;
    return fr;
}

double shared_fraction(const FleetState& st, SyncDirection direction) {
    const Counts c = count(st.houses);
    const double n = static_cast<double>(st.houses.size());
    return direction == SyncDirection::AllOn ? c.on / n : (c.off + c.locked) / n;
}

SyncReport force_synchronize(FleetState& st, const FleetLayout& layout, SyncDirection direction,
                             double ambient, double dt, double horizon, double threshold,
                             const StepOptions& options) {
    SyncReport report;
    const Target target = direction == SyncDirection::AllOn ? Target::On : Target::Off;
    std::vector<SwitchCommand> cmds(st.houses.size());
    for (;;) {
        report.shared_fraction = shared_fraction(st, direction);
        if (report.shared_fraction >= threshold) return report;
        if (report.elapsed >= horizon)
            throw ConvergenceTimeout("forced synchronization did not converge within horizon");
        for (std::size_t i = 0; i < st.houses.size(); ++i) {
            const SwitchCommand c{target, house::Source::Aggregator};
            const auto& h = st.houses[i];
            const bool needed = direction == SyncDirection::AllOn ? !h.is_on() : h.is_on();
            if (needed && house::apply_command(h, c, layout.houses[i]).accepted) {
                cmds[i] = c;
                ++report.commands_issued;
            } else {
                cmds[i] = SwitchCommand{};
            }
        }
        step_fleet(st, layout, ambient, cmds, dt, options);
        report.elapsed += dt;
    }
}

} // namespace acfleet::fleet
