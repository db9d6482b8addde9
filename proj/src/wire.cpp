#include "acfleet/wire.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "acfleet/errors.hpp"

namespace acfleet::wire {

using nlohmann::json;
using fleet::DeviceTelemetry;
using fleet::RequestKind;

namespace {

// JSON has no NaN/Inf; they travel as strings so the decoder can flag them.
json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "NaN";
    return v > 0 ? "Infinity" : "-Infinity";
}

// Returns nullopt for anything that is not a number or a non-finite marker.
std::optional<double> read_number(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto& s = j.get_ref<const std::string&>();
        if (s == "NaN") return std::nan("");
        if (s == "Infinity") return INFINITY;
        if (s == "-Infinity") return -INFINITY;
    }
    return std::nullopt;
}

std::string_view kind_name(RequestKind k) {
    switch (k) {
    case RequestKind::On: return "on";
    case RequestKind::Off: return "off";
    case RequestKind::None: break;
    }
    return "none";
}

std::string_view target_name(house::Target t) {
    switch (t) {
    case house::Target::On: return "on";
    case house::Target::Off: return "off";
    case house::Target::NoChange: break;
    }
    return "none";
}

json envelope(std::string_view type, std::uint64_t seq, double t) {
    return json{{"type", type}, {"seq", seq}, {"t", number(t)}};
}

json encode_device(const MeasurementEntry& e) {
    const auto& d = e.data;
    json j{{"id", e.id},
           {"temp", number(d.measured)},
           {"power", number(d.power)},
           {"state", house::to_string(d.compressor)},
           {"lock", number(d.lock_remaining)},
           {"tis", number(d.time_in_state)},
           {"pos", number(d.position)},
           {"acc", d.accepted},
           {"start", d.started},
           {"inrush", number(d.inrush_peak)}};
    if (d.request.kind != RequestKind::None)
        j["req"] = json{{"kind", kind_name(d.request.kind)},
                        {"power", number(d.request.power)},
                        {"ext", d.request.extension}};
    if (d.corrupt) j["corrupt"] = true;
    return j;
}

const json& field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ProtocolError(std::string("missing field '") + key + "'");
    return *it;
}

std::uint64_t read_seq(const json& j) {
    const auto& s = field(j, "seq");
    if (!s.is_number_unsigned()) throw ProtocolError("'seq' must be an unsigned integer");
    return s.get<std::uint64_t>();
}

double read_time(const json& j) {
    const auto v = read_number(field(j, "t"));
    if (!v || !std::isfinite(*v)) throw ProtocolError("'t' must be a finite number");
    return *v;
}

std::string read_id(const json& d, std::set<std::string>& seen) {
    const auto& id = field(d, "id");
    if (!id.is_string()) throw ProtocolError("device 'id' must be a string");
    auto s = id.get<std::string>();
    if (!seen.insert(s).second) throw ProtocolError("duplicate device id '" + s + "'");
    return s;
}

MeasurementEntry decode_device(const json& d, std::set<std::string>& seen) {
    MeasurementEntry e;
    e.id = read_id(d, seen);
    auto& t = e.data;
    bool bad = false;
    auto num = [&](const char* key, double& out) {
        auto it = d.find(key);
        if (it == d.end()) return;
        const auto v = read_number(*it);
        if (!v) {
            bad = true;
            out = std::nan("");
            return;
        }
        out = *v;
    };
    auto flag = [&](const char* key, bool& out) {
        auto it = d.find(key);
        if (it == d.end()) return;
        if (!it->is_boolean()) {
            bad = true;
            return;
        }
        out = it->get<bool>();
    };
    num("temp", t.measured);
    num("power", t.power);
    num("lock", t.lock_remaining);
    num("tis", t.time_in_state);
    num("pos", t.position);
    num("inrush", t.inrush_peak);
    flag("acc", t.accepted);
    flag("start", t.started);
    flag("corrupt", t.corrupt);
    if (auto it = d.find("state"); it != d.end()) {
        std::optional<house::Compressor> c;
        if (it->is_string()) c = house::parse_compressor(it->get<std::string>());
        if (c) t.compressor = *c;
        else bad = true;
    } else {
        bad = true;
    }
    if (auto it = d.find("req"); it != d.end()) {
        if (!it->is_object()) {
            bad = true;
        } else {
            const auto k = it->value("kind", std::string{});
            if (k == "on") t.request.kind = RequestKind::On;
            else if (k == "off") t.request.kind = RequestKind::Off;
            else bad = true;
            if (auto p = it->find("power"); p != it->end()) {
                const auto v = read_number(*p);
                if (v && std::isfinite(*v) && *v >= 0) t.request.power = *v;
                else bad = true;
            }
            if (auto x = it->find("ext"); x != it->end() && x->is_boolean())
                t.request.extension = x->get<bool>();
        }
    }
    if (!std::isfinite(t.measured) || !std::isfinite(t.power) || t.power < 0 ||
        !std::isfinite(t.position) || !(t.lock_remaining >= 0))
        bad = true;
    t.corrupt = t.corrupt || bad;
    return e;
}

} // namespace

std::string encode(const Message& msg) {
    json j;
    if (const auto* c = std::get_if<Command>(&msg)) {
        j = envelope("cmd", c->seq, c->t);
        json devs = json::array();
        for (const auto& e : c->devices) devs.push_back({{"id", e.id}, {"target", target_name(e.target)}});
        j["devices"] = std::move(devs);
        if (c->mode) {
            j["mode"] = c->mode->mode == fleet::DeviceMode::Packetized ? "packetized" : "thermostat";
            j["packet"] = {{"epoch", c->mode->packet.epoch_length},
                           {"mttr", c->mode->packet.mean_time_to_request},
                           {"allow_off", c->mode->packet.allow_turn_off_requests}};
        }
    } else if (const auto* m = std::get_if<Measurement>(&msg)) {
        j = envelope("meas", m->seq, m->t);
        json devs = json::array();
        for (const auto& e : m->devices) devs.push_back(encode_device(e));
        j["devices"] = std::move(devs);
        if (m->missed_command) j["missed"] = true;
    } else {
        const auto& e = std::get<ErrorReply>(msg);
        j = envelope("err", e.seq, e.t);
        j["devices"] = json::array();
        j["error"] = e.message;
    }
    return j.dump();
}

static Message decode_object(const json& j);

Message decode(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("invalid JSON: ") + e.what());
    }
    try {
        return decode_object(j);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed message: ") + e.what());
    }
}

static Message decode_object(const json& j) {
    if (!j.is_object()) throw ProtocolError("message must be a JSON object");
    const auto& type = field(j, "type");
    if (!type.is_string()) throw ProtocolError("'type' must be a string");
    const auto& devs = field(j, "devices");
    if (!devs.is_array()) throw ProtocolError("'devices' must be an array");
    const std::uint64_t seq = read_seq(j);
    const double t = read_time(j);
    const auto& ty = type.get_ref<const std::string&>();
    std::set<std::string> seen;

    if (ty == "cmd") {
        Command c{seq, t, {}, std::nullopt};
        for (const auto& d : devs) {
            if (!d.is_object()) throw ProtocolError("device entry must be an object");
            CommandEntry e;
            e.id = read_id(d, seen);
            const auto& tg = field(d, "target");
            const std::string s = tg.is_string() ? tg.get<std::string>() : "";
            if (s == "on") e.target = house::Target::On;
            else if (s == "off") e.target = house::Target::Off;
            else if (s == "none") e.target = house::Target::NoChange;
            else throw ProtocolError("unknown command target for device '" + e.id + "'");
            c.devices.push_back(std::move(e));
        }
        if (auto it = j.find("mode"); it != j.end()) {
            ModeChange mc;
            const std::string m = it->is_string() ? it->get<std::string>() : "";
            if (m == "packetized") mc.mode = fleet::DeviceMode::Packetized;
            else if (m == "thermostat") mc.mode = fleet::DeviceMode::Thermostat;
            else throw ProtocolError("unknown mode");
            if (auto p = j.find("packet"); p != j.end() && p->is_object()) {
                mc.packet.epoch_length = p->value("epoch", mc.packet.epoch_length);
                mc.packet.mean_time_to_request = p->value("mttr", mc.packet.mean_time_to_request);
                mc.packet.allow_turn_off_requests = p->value("allow_off", mc.packet.allow_turn_off_requests);
            }
            c.mode = mc;
        }
        return c;
    }
    if (ty == "meas") {
        Measurement m{seq, t, {}, j.value("missed", false)};
        m.devices.reserve(devs.size());
        for (const auto& d : devs) {
            if (!d.is_object()) throw ProtocolError("device entry must be an object");
            m.devices.push_back(decode_device(d, seen));
            m.devices.back().data.index = m.devices.size() - 1;
        }
        return m;
    }
    if (ty == "err") {
        const auto it = j.find("error");
        return ErrorReply{seq, t, it != j.end() && it->is_string() ? it->get<std::string>() : ""};
    }
    throw ProtocolError("unknown message type '" + ty + "'");
}

bool equal(const DeviceTelemetry& a, const DeviceTelemetry& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.index == b.index && a.compressor == b.compressor && same(a.measured, b.measured) &&
           same(a.power, b.power) && same(a.lock_remaining, b.lock_remaining) &&
           same(a.time_in_state, b.time_in_state) && same(a.position, b.position) &&
           a.accepted == b.accepted && a.started == b.started &&
           same(a.inrush_peak, b.inrush_peak) && a.request.kind == b.request.kind &&
           same(a.request.power, b.request.power) && a.request.extension == b.request.extension &&
           a.corrupt == b.corrupt;
}

bool equal(const Message& a, const Message& b) {
    if (a.index() != b.index()) return false;
    if (const auto* x = std::get_if<Command>(&a)) {
        const auto& y = std::get<Command>(b);
        if (x->seq != y.seq || x->t != y.t || x->devices.size() != y.devices.size()) return false;
        for (std::size_t i = 0; i < x->devices.size(); ++i)
            if (x->devices[i].id != y.devices[i].id || x->devices[i].target != y.devices[i].target)
                return false;
        if (x->mode.has_value() != y.mode.has_value()) return false;
        if (x->mode) {
            const auto &p = x->mode->packet, &q = y.mode->packet;
            return x->mode->mode == y.mode->mode && p.epoch_length == q.epoch_length &&
                   p.mean_time_to_request == q.mean_time_to_request &&
                   p.allow_turn_off_requests == q.allow_turn_off_requests;
        }
        return true;
    }
    if (const auto* x = std::get_if<Measurement>(&a)) {
        const auto& y = std::get<Measurement>(b);
        if (x->seq != y.seq || x->t != y.t || x->missed_command != y.missed_command ||
            x->devices.size() != y.devices.size())
            return false;
        for (std::size_t i = 0; i < x->devices.size(); ++i)
            if (x->devices[i].id != y.devices[i].id || !equal(x->devices[i].data, y.devices[i].data))
                return false;
        return true;
    }
    const auto& x = std::get<ErrorReply>(a);
    const auto& y = std::get<ErrorReply>(b);
    return x.seq == y.seq && x.t == y.t && x.message == y.message;
}

} // namespace acfleet::wire
