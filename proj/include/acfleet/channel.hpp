#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <queue>
#include <vector>

#include "acfleet/house.hpp"
#include "acfleet/rng.hpp"

namespace acfleet::channel {

enum class Mode { Perfect, Impaired };

struct ChannelModel {
    Mode mode = Mode::Perfect;
    double delay_mean = 18.0; // s
    double delay_std = 3.0;   // s
    double loss_rate_min = 0.05;
    double loss_rate_max = 0.10;
    bool redraw_loss_per_message = false;
    std::uint64_t seed = 0;

    void validate() const;
    static ChannelModel perfect() { return {}; }
    static ChannelModel impaired(std::uint64_t seed) {
        ChannelModel m;
        m.mode = Mode::Impaired;
        m.seed = seed;
        return m;
    }
};

/// Stateful sampler for one run. The loss rate is drawn once at
/// construction unless `redraw_loss_per_message` is set.
class Channel {
  public:
    explicit Channel(const ChannelModel& model);

    /// Delivery time of a message sent at `send_time`, or nothing if lost.
    std::optional<double> transmit(double send_time);

    double loss_rate() const { return loss_rate_; }
    const ChannelModel& model() const { return model_; }

  private:
    ChannelModel model_;
    Rng rng_;
    double loss_rate_ = 0.0;
};

/// One per-device command in flight.
struct Envelope {
    double deliver_time = 0.0;
    std::uint64_t seq = 0; // aggregator step that issued it
    std::size_t device = 0;
    house::SwitchCommand command;
    std::uint64_t order = 0; // tie-break so equal delivery times stay FIFO
};

/// Commands waiting inside the network, ordered by delivery time.
class DelayQueue {
  public:
    void push(Envelope e);
    /// Removes and returns every envelope with deliver_time <= t, in
    /// delivery order.
    std::vector<Envelope> pop_due(double t);
    std::size_t size() const { return heap_.size(); }

  private:
    struct Later {
        bool operator()(const Envelope& a, const Envelope& b) const {
            if (a.deliver_time != b.deliver_time) return a.deliver_time > b.deliver_time;
            return a.order > b.order;
        }
    };
    std::priority_queue<Envelope, std::vector<Envelope>, Later> heap_;
    std::uint64_t next_order_ = 0;
};

/// Drops commands older than the newest one already applied to the same
/// device.
class StaleFilter {
  public:
    explicit StaleFilter(std::size_t n_devices) : last_(n_devices, 0), seen_(n_devices, false) {}
    bool admit(std::size_t device, std::uint64_t seq);

  private:
    std::vector<std::uint64_t> last_;
    std::vector<bool> seen_;
};

} // namespace acfleet::channel
