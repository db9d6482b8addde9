#include "acfleet/channel.hpp"

#include <algorithm>

#include "acfleet/errors.hpp"

namespace acfleet::channel {

void ChannelModel::validate() const {
    if (!(loss_rate_min >= 0 && loss_rate_min <= loss_rate_max && loss_rate_max <= 1))
        throw ConfigError("loss rates must satisfy 0 <= min <= max <= 1");
    if (!(delay_std >= 0)) throw ConfigError("delay std must be >= 0");
}

Channel::Channel(const ChannelModel& model) : model_(model), rng_(model.seed) {
    model_.validate();
    if (model_.mode == Mode::Impaired)
        loss_rate_ = rng_.uniform(model_.loss_rate_min, model_.loss_rate_max);
}

std::optional<double> Channel::transmit(double send_time) {
    if (model_.mode == Mode::Perfect) return send_time;
    const double loss = model_.redraw_loss_per_message
                            ? rng_.uniform(model_.loss_rate_min, model_.loss_rate_max)
                            : loss_rate_;
    if (rng_.bernoulli(loss)) return std::nullopt;
    return send_time + std::max(0.0, rng_.normal(model_.delay_mean, model_.delay_std));
}

void DelayQueue::push(Envelope e) {
    e.order = next_order_++;
    heap_.push(e);
}

std::vector<Envelope> DelayQueue::pop_due(double t) {
    std::vector<Envelope> out;
    while (!heap_.empty() && heap_.top().deliver_time <= t) {
        out.push_back(heap_.top());
        heap_.pop();
    }
    return out;
}

bool StaleFilter::admit(std::size_t device, std::uint64_t seq) {
    if (device >= last_.size()) throw AccountingError("stale filter: unknown device");
    if (seen_[device] && seq < last_[device]) return false;
    seen_[device] = true;
    last_[device] = seq;
    return true;
}

} // namespace acfleet::channel
