#include "acfleet/plantlink.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <unordered_map>

#include "acfleet/errors.hpp"

namespace acfleet::plantlink {

namespace {

constexpr std::size_t kMaxLine = 64u << 20;

[[noreturn]] void sys_fail(const std::string& what) {
    throw ProtocolError(what + ": " + std::strerror(errno));
}

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1)
        throw ConfigError("invalid IPv4 address '" + host + "'");
    return a;
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    return static_cast<int>(std::max<long long>(0, left.count()));
}

} // namespace

// ---------------------------------------------------------------- LineSocket

LineSocket::~LineSocket() { close(); }

LineSocket::LineSocket(LineSocket&& o) noexcept : fd_(o.fd_), buffer_(std::move(o.buffer_)) {
    o.fd_ = -1;
}

LineSocket& LineSocket::operator=(LineSocket&& o) noexcept {
    if (this != &o) {
        close();
        fd_ = o.fd_;
        buffer_ = std::move(o.buffer_);
        o.fd_ = -1;
    }
    return *this;
}

void LineSocket::close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    buffer_.clear();
}

std::optional<std::string> LineSocket::read_line(int timeout_ms) {
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        if (buffer_.size() > kMaxLine) throw ProtocolError("line exceeds size limit");
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, remaining_ms(deadline));
        if (r < 0) {
            if (errno == EINTR) continue;
            sys_fail("poll");
        }
        if (r == 0) return std::nullopt;
        char buf[65536];
        const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            sys_fail("recv");
        }
        if (n == 0) throw ProtocolError("peer closed the connection");
        buffer_.append(buf, static_cast<std::size_t>(n));
    }
}

void LineSocket::write_line(const std::string& line) {
    std::string out = line;
    out.push_back('\n');
    std::size_t sent = 0;
    while (sent < out.size()) {
        const ssize_t n = ::send(fd_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            sys_fail("send");
        }
        sent += static_cast<std::size_t>(n);
    }
}

LineSocket connect_to(const std::string& host, std::uint16_t port, int timeout_ms) {
    const auto addr = make_addr(host, port);
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) sys_fail("socket");
        if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
            set_nodelay(fd);
            return LineSocket(fd);
        }
        ::close(fd);
        if (Clock::now() >= deadline) sys_fail("connect");
        ::usleep(20000);
    }
}

// ---------------------------------------------------------------- PlantServer

PlantServer::PlantServer(fleet::FleetLayout layout, fleet::FleetState state, ServerOptions options)
    : layout_(std::move(layout)), state_(std::move(state)), opt_(std::move(options)) {
    if (!(opt_.dt > 0)) throw ConfigError("plant dt must be positive");
    if (opt_.timeout <= 0) opt_.timeout = 2.0 * opt_.dt;
}

PlantServer::~PlantServer() {
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

std::uint16_t PlantServer::listen() {
    const auto addr = make_addr(opt_.address, opt_.port);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) sys_fail("socket");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0)
        sys_fail("bind");
    if (::listen(listen_fd_, 1) != 0) sys_fail("listen");
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    return port_;
}

wire::Measurement PlantServer::measurement(std::uint64_t seq, bool missed) const {
    const auto fr = fleet::observe(state_, layout_);
    wire::Measurement m;
    m.seq = seq;
    m.t = state_.time;
    m.missed_command = missed;
    m.devices.reserve(fr.devices.size());
    for (std::size_t i = 0; i < fr.devices.size(); ++i)
        m.devices.push_back({layout_.houses[i].id, fr.devices[i]});
    return m;
}

void PlantServer::serve(std::uint64_t steps) {
    if (listen_fd_ < 0) listen();
    int fd = -1;
    while (fd < 0) {
        if (stop_) return;
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 200) > 0) fd = ::accept(listen_fd_, nullptr, nullptr);
    }
    set_nodelay(fd);
    LineSocket sock(fd);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < layout_.size(); ++i) index.emplace(layout_.houses[i].id, i);
    const int timeout_ms = static_cast<int>(opt_.timeout * 1000.0);
    // Requests raised during a step ride on the next frame.
    std::vector<fleet::Request> pending(layout_.size());

    bool missed = false;
    for (std::uint64_t seq = 0; !stop_; ++seq) {
        auto meas = measurement(seq, missed);
        for (std::size_t i = 0; i < pending.size(); ++i) meas.devices[i].data.request = pending[i];
        sock.write_line(wire::encode(meas));
        ++log_.frames_sent;
        if (steps > 0 && seq == steps) break;

        std::vector<house::SwitchCommand> cmds(layout_.size());
        std::optional<wire::Command> cmd;
        const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
        while (!cmd) {
            std::optional<std::string> line;
            try {
                line = sock.read_line(remaining_ms(deadline));
            } catch (const ProtocolError&) {
                return; // peer went away
            }
            if (!line) break;
            try {
                auto msg = wire::decode(*line);
                auto* c = std::get_if<wire::Command>(&msg);
                if (!c) throw ProtocolError("plant accepts only 'cmd' messages");
                if (c->seq != seq) throw ProtocolError("command for another step");
                cmd = std::move(*c);
            } catch (const ProtocolError& e) {
                ++log_.protocol_errors;
                sock.write_line(wire::encode(wire::ErrorReply{seq, state_.time, e.what()}));
            }
        }
        missed = !cmd;
        if (missed) {
            ++log_.missed_steps;
        } else {
            ++log_.commands_received;
            if (cmd->mode) fleet::set_mode(state_, cmd->mode->mode, cmd->mode->packet);
            for (const auto& e : cmd->devices) {
                auto it = index.find(e.id);
                if (it == index.end()) {
                    ++log_.protocol_errors;
                    sock.write_line(wire::encode(
                        wire::ErrorReply{seq, state_.time, "unknown device '" + e.id + "'"}));
                    continue;
                }
                cmds[it->second] = {e.target, house::Source::Aggregator};
            }
        }
        // Judge feasibility against the state the command meets.
        std::vector<bool> feasible(layout_.size(), true);
        for (std::size_t i = 0; i < cmds.size(); ++i)
            if (cmds[i].target != house::Target::NoChange)
                feasible[i] = house::apply_command(state_.houses[i], cmds[i], layout_.houses[i]).accepted;
        const double t = state_.time;
        const auto fr = fleet::step_fleet(state_, layout_, opt_.ambient, cmds, opt_.dt, opt_.step);
        for (std::size_t i = 0; i < cmds.size(); ++i) {
            pending[i] = fr.devices[i].request;
            if (cmds[i].target == house::Target::NoChange) continue;
            if (keep_applied_)
                log_.applied.push_back({seq, t, layout_.houses[i].id, cmds[i].target, feasible[i]});
        }
    }
}

// ---------------------------------------------------------------- AggregatorClient

void AggregatorClient::connect(const std::string& host, std::uint16_t port, int timeout_ms) {
    sock_ = connect_to(host, port, timeout_ms);
}

wire::Measurement AggregatorClient::receive(int timeout_ms) {
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
        auto line = sock_.read_line(remaining_ms(deadline));
        if (!line) throw ProtocolError("timed out waiting for a plant frame");
        auto msg = wire::decode(*line);
        if (auto* m = std::get_if<wire::Measurement>(&msg)) {
            ++log_.frames_received;
            return std::move(*m);
        }
        ++log_.errors_received;
    }
}

void AggregatorClient::send(const wire::Command& cmd) {
    sock_.write_line(wire::encode(cmd));
    ++log_.steps_sent;
}

} // namespace acfleet::plantlink
