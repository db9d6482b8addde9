#include "acfleet/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "acfleet/errors.hpp"
#include "acfleet/plantlink.hpp"
#include "acfleet/thermal.hpp"

namespace acfleet::runner {

using nlohmann::json;
using house::SwitchCommand;
using house::Target;

namespace {

// Stream tags for derive_seed; fixed so results do not depend on call order.
constexpr std::uint64_t kControllerStream = 0xC0;
constexpr std::uint64_t kChannelStream = 0xC1;
constexpr std::uint64_t kGridStream = 0xC2;
constexpr std::uint64_t kFairnessStream = 0xC3;

std::string level_name(Level l) { return l == Level::Extreme ? "extreme" : "nominal"; }

Level parse_level(const std::string& s) {
    if (s == "nominal" || s == "nom") return Level::Nominal;
    if (s == "extreme" || s == "ext") return Level::Extreme;
    throw ConfigError("unknown condition level '" + s + "'");
}

std::string signal_name(SignalKind k) { return k == SignalKind::Square ? "square" : "regd"; }

SignalKind parse_signal(const std::string& s) {
    if (s == "regd") return SignalKind::RegD;
    if (s == "square") return SignalKind::Square;
    throw ConfigError("unknown signal type '" + s + "'");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError(std::string("unknown key '") + k + "' in " + where);
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("bad value for '") + key + "'");
        }
    }
}

bool device_on(const fleet::DeviceTelemetry& d) {
    return d.compressor == house::Compressor::On || d.compressor == house::Compressor::LockedOn;
}

// Local fleet plus an optional remote partition behind the plant link.
// Frames are always assembled in global house order so a hybrid run and an
// all-local run produce the same controller input.
class HybridPlant {
  public:
    HybridPlant(const fleet::FleetLayout& layout, double ambient, double dt,
                const fleet::StepOptions& opts, const PlantSpec& spec, std::uint64_t total_steps)
        : n_(layout.size()), ambient_(ambient), opts_(opts) {
        remote_ = spec.remote_via_tcp &&
                  std::any_of(layout.partitions.begin(), layout.partitions.end(),
                              [](auto p) { return p == fleet::Partition::RemotePlant; });
        for (std::size_t i = 0; i < n_; ++i)
            (remote_ && layout.partitions[i] == fleet::Partition::RemotePlant ? remote_idx_
                                                                              : local_idx_)
                .push_back(i);
        local_layout_ = remote_ ? layout.subset(fleet::Partition::LocalVirtual) : layout;
        local_ = fleet::initialize_fleet(local_layout_, ambient);
        if (!remote_) return;

        auto remote_layout = layout.subset(fleet::Partition::RemotePlant);
        for (const auto& h : remote_layout.houses) remote_ids_.push_back(h.id);
        plantlink::ServerOptions so;
        so.dt = dt;
        so.ambient = ambient;
        so.timeout = spec.timeout > 0 ? spec.timeout : 2.0 * dt;
        so.step = opts;
        timeout_ms_ = static_cast<int>(so.timeout * 1000.0) + 5000;
        server_ = std::make_unique<plantlink::PlantServer>(
            remote_layout, fleet::initialize_fleet(remote_layout, ambient), so);
        server_->set_keep_applied_log(false);
        const auto port = server_->listen();
        thread_ = std::thread([this, total_steps] {
            try {
                server_->serve(total_steps);
            } catch (...) {
                server_error_ = std::current_exception();
            }
        });
        client_.connect("127.0.0.1", port);
    }

    ~HybridPlant() {
        if (server_) {
            server_->stop();
            client_.close();
        }
        if (thread_.joinable()) thread_.join();
    }

    fleet::TelemetryFrame initial() {
        auto local = fleet::observe(local_, local_layout_);
        return merge(local, remote_ ? receive() : wire::Measurement{});
    }

    fleet::TelemetryFrame step(std::span<const SwitchCommand> cmds,
                               const std::optional<wire::ModeChange>& mode, double dt) {
        if (remote_) {
            wire::Command c;
            c.seq = seq_;
            c.t = local_.time;
            c.mode = mode;
            for (std::size_t k = 0; k < remote_idx_.size(); ++k) {
                const auto& s = cmds[remote_idx_[k]];
                if (s.target != Target::NoChange) c.devices.push_back({remote_ids_[k], s.target});
            }
            client_.send(c);
        }
        if (!first_command_)
            for (const auto& c : cmds)
                if (c.target != Target::NoChange) {
                    first_command_ = seq_;
                    break;
                }
        std::vector<SwitchCommand> local_cmds(local_idx_.size());
        for (std::size_t k = 0; k < local_idx_.size(); ++k) local_cmds[k] = cmds[local_idx_[k]];
        if (mode) fleet::set_mode(local_, mode->mode, mode->packet);
        auto local = fleet::step_fleet(local_, local_layout_, ambient_, local_cmds, dt, opts_);
        ++seq_;
        return merge(local, remote_ ? receive() : wire::Measurement{});
    }

    std::uint64_t plant_frames() const { return client_.log().frames_received; }
    std::uint64_t aggregator_steps() const { return client_.log().steps_sent; }
    bool remote() const { return remote_; }
    std::optional<std::uint64_t> first_command() const { return first_command_; }

  private:
    wire::Measurement receive() {
        try {
            auto m = client_.receive(timeout_ms_);
            if (m.seq != seq_) throw ProtocolError("plant frame out of step");
            if (m.devices.size() != remote_idx_.size())
                throw ProtocolError("plant frame has the wrong device count");
            return m;
        } catch (...) {
            if (server_error_) std::rethrow_exception(server_error_);
            throw;
        }
    }

    fleet::TelemetryFrame merge(const fleet::TelemetryFrame& local, const wire::Measurement& remote) {
        fleet::TelemetryFrame fr;
        fr.time = local.time;
        fr.devices.resize(n_);
        for (std::size_t k = 0; k < local_idx_.size(); ++k) fr.devices[local_idx_[k]] = local.devices[k];
        for (std::size_t k = 0; k < remote_idx_.size(); ++k)
            fr.devices[remote_idx_[k]] = remote.devices[k].data;
        for (std::size_t i = 0; i < n_; ++i) {
            auto& d = fr.devices[i];
            d.index = i;
            fr.aggregate_power += d.power;
            if (d.started) ++fr.starts;
            switch (d.compressor) {
            case house::Compressor::On:
            case house::Compressor::LockedOn: ++fr.counts.on; break;
            case house::Compressor::Off: ++fr.counts.off; break;
            case house::Compressor::LockedOff: ++fr.counts.locked; break;
            }
        }
        return fr;
    }

    std::size_t n_;
    double ambient_;
    fleet::StepOptions opts_;
    bool remote_ = false;
    std::vector<std::size_t> local_idx_, remote_idx_;
    std::vector<std::string> remote_ids_;
    fleet::FleetLayout local_layout_;
    fleet::FleetState local_;
    std::unique_ptr<plantlink::PlantServer> server_;
    std::thread thread_;
    std::exception_ptr server_error_;
    plantlink::AggregatorClient client_;
    std::uint64_t seq_ = 0;
    std::optional<std::uint64_t> first_command_;
    int timeout_ms_ = 10000;
};

double natural_period(const house::HouseParams& p, double ambient) {
    const auto r = thermal::cycle_durations(p.thermal, p.ac, p.heat, p.deadband(), ambient);
    return r.period();
}

} // namespace

std::string to_string(ControllerKind k) {
    switch (k) {
    case ControllerKind::PI: return "PI";
    case ControllerKind::Markov: return "Markov";
    case ControllerKind::PEM: return "PEM";
    case ControllerKind::None: break;
    }
    return "none";
}

ControllerKind parse_controller(const std::string& s) {
    std::string l;
    for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (l == "pi") return ControllerKind::PI;
    if (l == "markov") return ControllerKind::Markov;
    if (l == "pem") return ControllerKind::PEM;
    if (l == "none") return ControllerKind::None;
    throw ConfigError("unknown controller '" + s + "'");
}

double ExperimentConfig::resolved_ambient() const {
    if (ambient) return *ambient;
    return conditions.outdoor == Level::Extreme ? 37.8 : 32.2; // 100 °F / 90 °F
}

double ExperimentConfig::resolved_heat_gain() const {
    if (heat_gain) return *heat_gain;
    return conditions.outdoor == Level::Extreme ? 375.0 : 200.0;
}

void ExperimentConfig::validate() const {
    if (!(dt_control > 0 && dt_physics > 0)) throw ConfigError("time steps must be positive");
    if (dt_physics > dt_control) throw ConfigError("dt_physics must not exceed dt_control");
    if (!(settle > warmup && warmup >= 0)) throw ConfigError("settle must exceed warmup");
    if (!(duration > 0)) throw ConfigError("duration must be positive");
    if (!(conditions.amplitude_fraction >= 0 && conditions.amplitude_fraction < 1))
        throw ConfigError("amplitude fraction must lie in [0, 1)");
    channel.validate();
}

json config_to_json(const ExperimentConfig& c) {
    const auto& h = c.fleet.nominal;
    json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["fleet"] = {{"n_houses", c.fleet.n_houses},
                  {"n_remote", c.fleet.n_remote},
                  {"heterogeneity", c.fleet.heterogeneity},
                  {"avg_on_power_target", c.fleet.avg_on_power_target},
                  {"reference_ambient", c.fleet.reference_ambient},
                  {"house",
                   {{"setpoint", h.setpoint},
                    {"deadband_halfwidth", h.deadband_halfwidth},
                    {"sensor_lag", h.sensor_lag},
                    {"thermometer_water_fraction", h.thermal.thermometer_water_fraction},
                    {"fixed_heat", h.heat.fixed_heat},
                    {"fixed_air_fraction", h.heat.fixed_air_fraction},
                    {"lockout", h.ac.lockout_duration},
                    {"min_on", h.ac.min_on_duration}}}};
    j["conditions"] = {{"signal", signal_name(c.conditions.signal)},
                       {"amplitude", c.conditions.amplitude_fraction},
                       {"voltage", level_name(c.conditions.voltage)},
                       {"comm", level_name(c.conditions.comm)},
                       {"outdoor", level_name(c.conditions.outdoor)}};
    j["ambient_c"] = c.resolved_ambient();
    j["heat_gain_w"] = c.resolved_heat_gain();
    j["controller"] = {{"type", to_string(c.controller)},
                       {"pi", {{"kp", c.pi.kp}, {"ki", c.pi.ki}, {"anti_windup", c.pi.anti_windup_limit}}},
                       {"markov",
                        {{"bins", c.markov_bins.n_temp_bins},
                         {"delayed", c.markov_bins.use_delayed_dynamics},
                         {"recent_hold", c.markov_bins.recent_hold},
                         {"bias_correction", c.markov_bias_correction}}},
                       {"pem",
                        {{"epoch", c.pem.epoch_length},
                         {"mttr", c.pem.mean_time_to_request},
                         {"allow_off", c.pem.allow_turn_off_requests}}}};
    j["signal"] = {{"square_period", c.signal.square_period},
                   {"trace_file", c.signal.trace_file},
                   {"synthetic",
                    {{"step", c.signal.synthetic.step},
                     {"time_constant", c.signal.synthetic.time_constant},
                     {"seed", c.signal.synthetic.seed}}}};
    j["channel"] = {{"delay_mean", c.channel.delay_mean},
                    {"delay_std", c.channel.delay_std},
                    {"loss_min", c.channel.loss_rate_min},
                    {"loss_max", c.channel.loss_rate_max},
                    {"redraw_loss", c.channel.redraw_loss_per_message}};
    j["grid"] = {{"transformers", c.grid.n_transformers},
                 {"law", c.grid.law == grid::SizeLaw::Uniform ? "uniform" : "random"},
                 {"headroom", c.grid.headroom}};
    j["plant"] = {{"remote_via_tcp", c.plant.remote_via_tcp}, {"timeout", c.plant.timeout}};
    j["timing"] = {{"settle", c.settle},
                   {"warmup", c.warmup},
                   {"duration", c.duration},
                   {"dt_control", c.dt_control},
                   {"dt_physics", c.dt_physics}};
    j["workers"] = c.workers;
    j["output"] = {{"dir", c.output_dir.string()}, {"telemetry", c.write_telemetry}};
    return j;
}

ExperimentConfig config_from_json(const json& j, ExperimentConfig c) {
    check_keys(j, {"name", "seed", "fleet", "conditions", "ambient_c", "heat_gain_w", "controller",
                   "signal", "channel", "grid", "plant", "timing", "workers", "output"},
               "config");
    read(j, "name", c.name);
    read(j, "seed", c.seed);
    if (auto it = j.find("fleet"); it != j.end()) {
        const auto& f = *it;
        check_keys(f, {"n_houses", "n_remote", "heterogeneity", "avg_on_power_target",
                       "reference_ambient", "house"},
                   "fleet");
        read(f, "n_houses", c.fleet.n_houses);
        read(f, "n_remote", c.fleet.n_remote);
        read(f, "heterogeneity", c.fleet.heterogeneity);
        read(f, "avg_on_power_target", c.fleet.avg_on_power_target);
        read(f, "reference_ambient", c.fleet.reference_ambient);
        if (auto h = f.find("house"); h != f.end()) {
            check_keys(*h, {"setpoint", "deadband_halfwidth", "sensor_lag",
                            "thermometer_water_fraction", "fixed_heat", "fixed_air_fraction",
                            "lockout", "min_on"},
                       "fleet.house");
            auto& n = c.fleet.nominal;
            read(*h, "setpoint", n.setpoint);
            read(*h, "deadband_halfwidth", n.deadband_halfwidth);
            read(*h, "sensor_lag", n.sensor_lag);
            read(*h, "thermometer_water_fraction", n.thermal.thermometer_water_fraction);
            read(*h, "fixed_heat", n.heat.fixed_heat);
            read(*h, "fixed_air_fraction", n.heat.fixed_air_fraction);
            read(*h, "lockout", n.ac.lockout_duration);
            read(*h, "min_on", n.ac.min_on_duration);
        }
    }
    if (auto it = j.find("conditions"); it != j.end()) {
        check_keys(*it, {"signal", "amplitude", "voltage", "comm", "outdoor"}, "conditions");
        std::string s;
        if (it->contains("signal")) c.conditions.signal = parse_signal(it->at("signal").get<std::string>());
        read(*it, "amplitude", c.conditions.amplitude_fraction);
        if (it->contains("voltage")) c.conditions.voltage = parse_level(it->at("voltage").get<std::string>());
        if (it->contains("comm")) c.conditions.comm = parse_level(it->at("comm").get<std::string>());
        if (it->contains("outdoor")) c.conditions.outdoor = parse_level(it->at("outdoor").get<std::string>());
    }
    if (auto it = j.find("ambient_c"); it != j.end() && !it->is_null()) c.ambient = it->get<double>();
    if (auto it = j.find("heat_gain_w"); it != j.end() && !it->is_null()) c.heat_gain = it->get<double>();
    if (auto it = j.find("controller"); it != j.end()) {
        check_keys(*it, {"type", "pi", "markov", "pem"}, "controller");
        if (it->contains("type")) c.controller = parse_controller(it->at("type").get<std::string>());
        if (auto p = it->find("pi"); p != it->end()) {
            check_keys(*p, {"kp", "ki", "anti_windup"}, "controller.pi");
            read(*p, "kp", c.pi.kp);
            read(*p, "ki", c.pi.ki);
            read(*p, "anti_windup", c.pi.anti_windup_limit);
        }
        if (auto m = it->find("markov"); m != it->end()) {
            check_keys(*m, {"bins", "delayed", "recent_hold", "bias_correction"}, "controller.markov");
            read(*m, "bins", c.markov_bins.n_temp_bins);
            read(*m, "delayed", c.markov_bins.use_delayed_dynamics);
            read(*m, "recent_hold", c.markov_bins.recent_hold);
            read(*m, "bias_correction", c.markov_bias_correction);
        }
        if (auto p = it->find("pem"); p != it->end()) {
            check_keys(*p, {"epoch", "mttr", "allow_off"}, "controller.pem");
            read(*p, "epoch", c.pem.epoch_length);
            read(*p, "mttr", c.pem.mean_time_to_request);
            read(*p, "allow_off", c.pem.allow_turn_off_requests);
        }
    }
    if (auto it = j.find("signal"); it != j.end()) {
        check_keys(*it, {"square_period", "trace_file", "synthetic"}, "signal");
        read(*it, "square_period", c.signal.square_period);
        read(*it, "trace_file", c.signal.trace_file);
        if (auto s = it->find("synthetic"); s != it->end()) {
            check_keys(*s, {"step", "time_constant", "seed"}, "signal.synthetic");
            read(*s, "step", c.signal.synthetic.step);
            read(*s, "time_constant", c.signal.synthetic.time_constant);
            read(*s, "seed", c.signal.synthetic.seed);
        }
    }
    if (auto it = j.find("channel"); it != j.end()) {
        check_keys(*it, {"delay_mean", "delay_std", "loss_min", "loss_max", "redraw_loss"}, "channel");
        read(*it, "delay_mean", c.channel.delay_mean);
        read(*it, "delay_std", c.channel.delay_std);
        read(*it, "loss_min", c.channel.loss_rate_min);
        read(*it, "loss_max", c.channel.loss_rate_max);
        read(*it, "redraw_loss", c.channel.redraw_loss_per_message);
    }
    if (auto it = j.find("grid"); it != j.end()) {
        check_keys(*it, {"transformers", "law", "headroom"}, "grid");
        read(*it, "transformers", c.grid.n_transformers);
        read(*it, "headroom", c.grid.headroom);
        if (it->contains("law")) {
            const auto law = it->at("law").get<std::string>();
            if (law == "uniform") c.grid.law = grid::SizeLaw::Uniform;
            else if (law == "random") c.grid.law = grid::SizeLaw::Random;
            else throw ConfigError("unknown grid law '" + law + "'");
        }
    }
    if (auto it = j.find("plant"); it != j.end()) {
        check_keys(*it, {"remote_via_tcp", "timeout"}, "plant");
        read(*it, "remote_via_tcp", c.plant.remote_via_tcp);
        read(*it, "timeout", c.plant.timeout);
    }
    if (auto it = j.find("timing"); it != j.end()) {
        check_keys(*it, {"settle", "warmup", "duration", "dt_control", "dt_physics"}, "timing");
        read(*it, "settle", c.settle);
        read(*it, "warmup", c.warmup);
        read(*it, "duration", c.duration);
        read(*it, "dt_control", c.dt_control);
        read(*it, "dt_physics", c.dt_physics);
    }
    read(j, "workers", c.workers);
    if (auto it = j.find("output"); it != j.end()) {
        check_keys(*it, {"dir", "telemetry"}, "output");
        std::string dir;
        read(*it, "dir", dir);
        c.output_dir = dir;
        read(*it, "telemetry", c.write_telemetry);
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config " + file.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
    auto j = config_to_json(cfg);
    // Fields that cannot change the metrics.
    j.erase("name");
    j.erase("workers");
    j.erase("output");
    j.erase("plant");
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json ExperimentResult::metrics_json() const {
    json j{{"name", name},
           {"controller", controller},
           {"config_hash", config_hash},
           {"seed", seed},
           {"baseline_w", baseline},
           {"nrmse", nrmse},
           {"loss_rate", loss_rate},
           {"commands",
            {{"issued", commands_issued},
             {"delivered", commands_delivered},
             {"rejected", commands_rejected},
             {"stale_dropped", stale_dropped}}},
           {"saturated_steps", saturated_steps},
           {"plant_frames", plant_frames},
           {"aggregator_steps", aggregator_steps}};
    j["score"] = score ? json{{"composite", score->composite},
                              {"correlation", score->correlation},
                              {"delay", score->delay},
                              {"precision", score->precision}}
                       : json(nullptr);
    json tx = json::array();
    for (const auto& t : overload.transformers)
        tx.push_back({{"max_consecutive_overload_s", t.max_consecutive_overload},
                      {"peak_loading_pu", t.peak_pu},
                      {"overload_sample_count", t.overload_samples},
                      {"simultaneous_inrush", t.simultaneous_inrush}});
    j["overload"] = {{"max_consecutive_overload_s", overload.max_consecutive_overload()},
                     {"peak_loading_pu", overload.peak_pu()},
                     {"mean_overload_excess_pu", overload.mean_overload_excess()},
                     {"simultaneous_inrush", overload.simultaneous_inrush()},
                     {"transformers", tx}};
    if (fairness)
        j["fairness"] = {{"remote_variance", fairness->remote_variance},
                         {"virtual_min", fairness->min_virtual},
                         {"virtual_max", fairness->max_virtual},
                         {"inside", fairness->inside}};
    if (switching)
        j["switching"] = {{"remote_rate_per_h", switching->remote_rate},
                          {"virtual_rate_per_h", switching->virtual_rate},
                          {"group_std", switching->group_std},
                          {"within", switching->within}};
    if (!telemetry_path.empty()) j["telemetry"] = telemetry_path.string();
    return j;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const double ambient = cfg.resolved_ambient();
    const double dt = cfg.dt_control;
    fleet::FleetSpec spec = cfg.fleet;
    spec.seed = cfg.seed;
    spec.nominal.heat.water_heat = cfg.resolved_heat_gain();
    const auto layout = fleet::generate_fleet(spec);
    const std::size_t n = layout.size();

    ExperimentResult res;
    res.name = cfg.name;
    res.controller = to_string(cfg.controller);
    res.config_hash = config_hash(cfg);
    res.seed = cfg.seed;

    const auto settle_steps = static_cast<std::uint64_t>(std::llround(cfg.settle / dt));
    const auto warm_steps = static_cast<std::uint64_t>(std::llround(cfg.warmup / dt));
    const auto track_steps = static_cast<std::uint64_t>(std::llround(cfg.duration / dt));
    fleet::StepOptions opts{cfg.dt_physics, cfg.workers};
    HybridPlant plant(layout, ambient, dt, opts, cfg.plant, settle_steps + track_steps);

    std::ofstream telemetry;
    if (cfg.write_telemetry && !cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        res.telemetry_path = cfg.output_dir / (cfg.name + ".telemetry.csv");
        telemetry.open(res.telemetry_path);
        telemetry << "t,house_id,state,power_w,temp_c\n";
    }
    auto log_frame = [&](const fleet::TelemetryFrame& fr) {
        if (!telemetry.is_open()) return;
        char buf[128];
        for (const auto& d : fr.devices) {
            std::snprintf(buf, sizeof buf, "%.1f,%s,%s,%.3f,%.4f\n", fr.time,
                          layout.houses[d.index].id.c_str(),
                          std::string(house::to_string(d.compressor)).c_str(), d.power, d.measured);
            telemetry << buf;
        }
    };

    // Settle: thermostat only, no commands.
    auto frame = plant.initial();
    control::TransitionCounter transitions(cfg.markov_bins);
    auto tx = grid::assign_houses(n, cfg.grid.n_transformers, cfg.grid.law,
                                  derive_seed(cfg.seed, kGridStream));
    std::vector<double> peaks(tx.size(), 0.0);
    double on_power_sum = 0.0;
    std::size_t on_samples = 0;
    const std::vector<SwitchCommand> idle(n);
    for (std::uint64_t k = 0; k < settle_steps; ++k) {
        auto next = plant.step(idle, std::nullopt, dt);
        log_frame(next);
        if (k >= warm_steps) {
            transitions.add(frame, next);
            res.settle_power.push_back(next.aggregate_power);
            const auto p = grid::transformer_power(tx, next);
            for (std::size_t t = 0; t < tx.size(); ++t) peaks[t] = std::max(peaks[t], p[t]);
            for (const auto& d : next.devices)
                if (device_on(d)) {
                    on_power_sum += d.power;
                    ++on_samples;
                }
        }
        frame = std::move(next);
    }
    if (on_samples == 0) throw InsufficientData("no device ran during the settle phase");
    const double avg_on = on_power_sum / static_cast<double>(on_samples);
    res.baseline = signal::baseline_power(res.settle_power, dt, natural_period(spec.nominal, ambient));
    grid::set_ratings(tx, peaks, cfg.grid.headroom, avg_on);
    grid::OverloadTracker overload(tx, n);

    // Reference.
    signal::ReferenceSignal ref;
    const double af = cfg.conditions.amplitude_fraction;
    if (cfg.conditions.signal == SignalKind::Square) {
        ref = signal::square_wave(res.baseline, af, cfg.signal.square_period, cfg.duration, dt);
    } else {
        signal::Trace tr;
        if (cfg.signal.trace_file.empty()) {
            auto rs = cfg.signal.synthetic;
            rs.duration = cfg.duration;
            tr = signal::synthetic_regd(rs);
        } else {
            tr = signal::read_trace(cfg.signal.trace_file);
        }
        ref = signal::from_trace(tr, res.baseline, af, dt, cfg.duration);
    }

    // Controller.
    const std::uint64_t cseed = derive_seed(cfg.seed, kControllerStream);
    std::unique_ptr<control::Controller> ctl;
    std::optional<wire::ModeChange> mode;
    switch (cfg.controller) {
    case ControllerKind::PI:
        ctl = std::make_unique<control::PiController>(cfg.pi, n, avg_on, dt, cseed);
        break;
    case ControllerKind::Markov: {
        control::MarkovConfig mc;
        mc.bins = cfg.markov_bins;
        mc.transition = transitions.matrix();
        mc.avg_on_power = avg_on;
        mc.bias_correction = cfg.markov_bias_correction;
        ctl = std::make_unique<control::MarkovController>(std::move(mc), cseed);
        break;
    }
    case ControllerKind::PEM:
        ctl = std::make_unique<control::PemController>(control::PemConfig{cfg.pem}, cseed);
        mode = wire::ModeChange{fleet::DeviceMode::Packetized, cfg.pem};
        break;
    case ControllerKind::None: break;
    }

    channel::ChannelModel cm = cfg.channel;
    cm.mode = cfg.conditions.comm == Level::Extreme ? channel::Mode::Impaired : channel::Mode::Perfect;
    cm.seed = derive_seed(cfg.seed, kChannelStream);
    channel::Channel link(cm);
    res.loss_rate = link.loss_rate();
    channel::DelayQueue queue;
    channel::StaleFilter stale(n);

    std::vector<std::vector<double>> device_power;
    device_power.reserve(track_steps);
    std::vector<double> switches(n, 0.0);
    for (std::uint64_t k = 0; k < track_steps; ++k) {
        const double t = frame.time;
        const double r = ref.samples[k];
        std::vector<SwitchCommand> cmds(n);
        if (ctl) {
            const auto batch = ctl->step({t, r, &frame});
            if (batch.saturated) ++res.saturated_steps;
            for (std::size_t i = 0; i < n; ++i) {
                if (batch.commands[i].target == Target::NoChange) continue;
                ++res.commands_issued;
                if (auto at = link.transmit(t)) queue.push({*at, k, i, batch.commands[i], 0});
            }
        }
        // Delivery happens at control-step resolution.
        for (const auto& e : queue.pop_due(t + 1e-9)) {
            if (!stale.admit(e.device, e.seq)) {
                ++res.stale_dropped;
                continue;
            }
            cmds[e.device] = e.command;
            ++res.commands_delivered;
        }
        auto next = plant.step(cmds, k == 0 ? mode : std::nullopt, dt);
        for (std::size_t i = 0; i < n; ++i) {
            if (cmds[i].target != Target::NoChange && !next.devices[i].accepted)
                ++res.commands_rejected;
            if (device_on(next.devices[i]) != device_on(frame.devices[i])) switches[i] += 1.0;
        }
        overload.update(next, dt);
        log_frame(next);
        res.reference.push_back(r);
        res.achieved.push_back(next.aggregate_power);
        std::vector<double> row(n);
        for (std::size_t i = 0; i < n; ++i) row[i] = next.devices[i].power;
        device_power.push_back(std::move(row));
        frame = std::move(next);
    }
    res.plant_frames = plant.plant_frames();
    res.aggregator_steps = plant.aggregator_steps();
    res.first_command_step = plant.first_command();
    res.settle_steps = settle_steps;

    res.nrmse = metrics::nrmse(res.reference, res.achieved);
    if (cfg.conditions.signal == SignalKind::RegD)
        res.score = metrics::pjm_score(res.reference, res.achieved, {dt, 300.0, 300.0});
    res.overload = overload.report();

    std::vector<std::size_t> remote, local;
    for (std::size_t i = 0; i < n; ++i)
        (layout.partitions[i] == fleet::Partition::RemotePlant ? remote : local).push_back(i);
    constexpr std::size_t kGroup = 20, kGroups = 25;
    if (remote.size() >= 2 && local.size() >= kGroup * kGroups) {
        const auto fseed = derive_seed(cfg.seed, kFairnessStream);
        res.fairness = metrics::fairness_variance(device_power, res.reference, remote, local,
                                                  remote.size(), kGroups, fseed);
        res.switching = metrics::switching_comparison(switches, cfg.duration / 3600.0, remote, local,
                                                      remote.size(), kGroups, fseed);
    }

    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        std::ofstream out(cfg.output_dir / (cfg.name + ".metrics.json"));
        auto j = res.metrics_json();
        j["config"] = config_to_json(cfg);
        out << j.dump(2) << "\n";
    }
    return res;
}

ExperimentConfig with_conditions(ExperimentConfig cfg, const Conditions& c) {
    cfg.conditions = c;
    cfg.ambient.reset();
    cfg.heat_gain.reset();
    return cfg;
}

std::vector<MatrixCase> standard_cases() {
    using L = Level;
    using S = SignalKind;
    auto mk = [](int id, S s, double a, L v, L c, L o) { return MatrixCase{id, {s, a, v, c, o}}; };
    return {
        mk(1, S::RegD, 0.20, L::Nominal, L::Nominal, L::Nominal),
        mk(2, S::Square, 0.30, L::Nominal, L::Nominal, L::Nominal),
        mk(3, S::RegD, 0.30, L::Nominal, L::Extreme, L::Nominal),
        mk(4, S::RegD, 0.10, L::Nominal, L::Nominal, L::Extreme),
        mk(5, S::RegD, 0.10, L::Extreme, L::Extreme, L::Nominal),
        mk(6, S::RegD, 0.30, L::Extreme, L::Nominal, L::Extreme),
        mk(7, S::Square, 0.10, L::Nominal, L::Extreme, L::Extreme),
        mk(8, S::Square, 0.10, L::Extreme, L::Nominal, L::Nominal),
        mk(9, S::RegD, 0.20, L::Nominal, L::Nominal, L::Extreme),
        mk(10, S::Square, 0.30, L::Extreme, L::Extreme, L::Extreme),
    };
}

std::vector<MatrixRow> run_matrix(const std::vector<MatrixCase>& cases, const ExperimentConfig& base,
                                  unsigned parallel) {
    const ControllerKind kinds[] = {ControllerKind::PI, ControllerKind::Markov, ControllerKind::PEM};
    std::vector<MatrixRow> rows(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        rows[i].c = cases[i];
        rows[i].results.resize(3);
        rows[i].errors.resize(3);
    }
    const std::size_t jobs = cases.size() * 3;
    std::size_t next = 0;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            std::size_t job;
            {
                std::lock_guard lock(mu);
                if (next >= jobs) return;
                job = next++;
            }
            const std::size_t row = job / 3, col = job % 3;
            auto cfg = with_conditions(base, cases[row].conditions);
            cfg.controller = kinds[col];
            cfg.name = "case" + std::to_string(cases[row].id) + "_" + to_string(kinds[col]);
            try {
                rows[row].results[col] = run_experiment(cfg);
            } catch (const std::exception& e) {
                rows[row].errors[col] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < std::max(1u, parallel); ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return rows;
}

std::vector<MatrixCase> load_matrix(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open matrix " + file.string());
    std::vector<MatrixCase> out;
    std::string line;
    std::size_t lineno = 0;
    bool seen_content = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        // The header may follow leading comments.
        if (!seen_content && line.rfind("case", 0) == 0) {
            seen_content = true;
            continue;
        }
        seen_content = true;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 6) throw IngestionError(lineno, "expected case,signal,amplitude,voltage,comm,outdoor");
        try {
            MatrixCase c;
            c.id = std::stoi(f[0]);
            c.conditions.signal = parse_signal(f[1]);
            c.conditions.amplitude_fraction = std::stod(f[2]);
            if (!(c.conditions.amplitude_fraction >= 0 && c.conditions.amplitude_fraction <= 1))
                throw ConfigError("amplitude is a fraction in [0, 1]");
            c.conditions.voltage = parse_level(f[3]);
            c.conditions.comm = parse_level(f[4]);
            c.conditions.outdoor = parse_level(f[5]);
            out.push_back(c);
        } catch (const std::invalid_argument&) {
            throw IngestionError(lineno, "case id and amplitude must be numbers");
        } catch (const std::out_of_range&) {
            throw IngestionError(lineno, "number out of range");
        } catch (const std::exception& e) {
            throw IngestionError(lineno, e.what());
        }
    }
    return out;
}

void write_matrix_csv(const std::filesystem::path& file, const std::vector<MatrixRow>& rows) {
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write " + file.string());
    out << "case,signal_type,signal_amp_pct,voltage_reg,comm_net,outdoor_temp,"
           "nrmse_pct_pi,nrmse_pct_markov,nrmse_pct_pem,"
           "score_pi,score_markov,score_pem,"
           "overload_s_pi,overload_s_markov,overload_s_pem\n";
    char buf[64];
    for (const auto& r : rows) {
        const auto& c = r.c.conditions;
        out << r.c.id << ',' << signal_name(c.signal) << ',' << std::lround(c.amplitude_fraction * 100)
            << ',' << level_name(c.voltage) << ',' << level_name(c.comm) << ','
            << level_name(c.outdoor);
        for (int col = 0; col < 3; ++col) {
            out << ',';
            if (r.errors[col].empty()) {
                std::snprintf(buf, sizeof buf, "%.2f", 100.0 * r.results[col].nrmse);
                out << buf;
            }
        }
        for (int col = 0; col < 3; ++col) {
            out << ',';
            if (r.errors[col].empty() && r.results[col].score) {
                std::snprintf(buf, sizeof buf, "%.2f", r.results[col].score->composite);
                out << buf;
            }
        }
        for (int col = 0; col < 3; ++col) {
            out << ',';
            if (r.errors[col].empty())
                out << std::lround(r.results[col].overload.max_consecutive_overload());
        }
        out << '\n';
    }
}

} // namespace acfleet::runner
