#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "acfleet/fleet.hpp"

namespace acfleet::wire {

struct MeasurementEntry {
    std::string id;
    fleet::DeviceTelemetry data;
};

struct Measurement {
    std::uint64_t seq = 0;
    double t = 0.0;
    std::vector<MeasurementEntry> devices;
    bool missed_command = false; // the previous step ran without a command
};

struct CommandEntry {
    std::string id;
    house::Target target = house::Target::NoChange;
};

struct ModeChange {
    fleet::DeviceMode mode = fleet::DeviceMode::Thermostat;
    fleet::PacketConfig packet;
};

struct Command {
    std::uint64_t seq = 0;
    double t = 0.0;
    std::vector<CommandEntry> devices;
    std::optional<ModeChange> mode;
};

struct ErrorReply {
    std::uint64_t seq = 0;
    double t = 0.0;
    std::string message;
};

using Message = std::variant<Command, Measurement, ErrorReply>;

/// One JSON object, no trailing newline.
std::string encode(const Message& msg);

/// Parses one line. Structural problems (bad JSON, missing or mistyped
/// envelope fields, duplicate ids) throw ProtocolError. Infeasible device
/// values in a measurement (non-finite temperature, negative power,
/// unknown state) set `corrupt` on that entry and keep the rest.
Message decode(std::string_view line);

bool equal(const fleet::DeviceTelemetry& a, const fleet::DeviceTelemetry& b);
bool equal(const Message& a, const Message& b);

} // namespace acfleet::wire
