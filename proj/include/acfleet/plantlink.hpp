#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acfleet/fleet.hpp"
#include "acfleet/wire.hpp"

namespace acfleet::plantlink {

/// Blocking newline-delimited stream over a connected TCP socket.
class LineSocket {
  public:
    LineSocket() = default;
    explicit LineSocket(int fd) : fd_(fd) {}
    ~LineSocket();
    LineSocket(LineSocket&& o) noexcept;
    LineSocket& operator=(LineSocket&& o) noexcept;
    LineSocket(const LineSocket&) = delete;
    LineSocket& operator=(const LineSocket&) = delete;

    bool valid() const { return fd_ >= 0; }
    /// Next line without its terminator; nullopt on timeout. Throws
    /// ProtocolError when the peer closes or a line exceeds the size cap.
    std::optional<std::string> read_line(int timeout_ms);
    void write_line(const std::string& line);
    void close();

  private:
    int fd_ = -1;
    std::string buffer_;
};

LineSocket connect_to(const std::string& host, std::uint16_t port, int timeout_ms = 5000);

struct ServerOptions {
    std::string address = "127.0.0.1";
    std::uint16_t port = 0; // 0 picks a free port
    double dt = 2.0;        // s of plant time per step
    double timeout = 0.0;   // s of wall time to wait for a command; 0 means 2*dt
    double ambient = 32.2;
    fleet::StepOptions step;
};

struct AppliedCommand {
    std::uint64_t seq = 0;
    double t = 0.0;
    std::string id;
    house::Target target = house::Target::NoChange;
    bool accepted = false;
};

struct ServerLog {
    std::uint64_t frames_sent = 0;
    std::uint64_t commands_received = 0;
    std::uint64_t missed_steps = 0;
    std::uint64_t protocol_errors = 0;
    std::vector<AppliedCommand> applied;
};

/// Plant side of the link. Owns the clock: each step it publishes a
/// measurement, waits for the matching command, filters and applies it,
/// then advances the fleet.
class PlantServer {
  public:
    PlantServer(fleet::FleetLayout layout, fleet::FleetState state, ServerOptions options);
    ~PlantServer();

    /// Binds and listens; returns the bound port.
    std::uint16_t listen();
    std::uint16_t port() const { return port_; }

    /// Accepts one aggregator and serves `steps` steps (0 = until the peer
    /// disconnects or stop() is called). Sends a final measurement after the
    /// last step.
    void serve(std::uint64_t steps = 0);
    void stop() { stop_ = true; }

    const ServerLog& log() const { return log_; }
    const fleet::FleetState& state() const { return state_; }
    void set_keep_applied_log(bool keep) { keep_applied_ = keep; }

  private:
    wire::Measurement measurement(std::uint64_t seq, bool missed) const;

    fleet::FleetLayout layout_;
    fleet::FleetState state_;
    ServerOptions opt_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stop_{false};
    bool keep_applied_ = true;
    ServerLog log_;
};

struct ClientLog {
    std::uint64_t frames_received = 0;
    std::uint64_t steps_sent = 0;
    std::uint64_t errors_received = 0;
};

/// Aggregator side: purely reactive to plant frames.
class AggregatorClient {
  public:
    void connect(const std::string& host, std::uint16_t port, int timeout_ms = 5000);
    /// Next measurement; error replies are counted and skipped.
    wire::Measurement receive(int timeout_ms);
    void send(const wire::Command& cmd);
    void close() { sock_.close(); }
    const ClientLog& log() const { return log_; }

  private:
    LineSocket sock_;
    ClientLog log_;
};

} // namespace acfleet::plantlink
