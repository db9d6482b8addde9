#include <doctest.h>

#include <cmath>

#include "acfleet/channel.hpp"
#include "acfleet/errors.hpp"

using namespace acfleet;
using namespace acfleet::channel;

TEST_CASE("perfect channel passes everything through immediately") {
    Channel c(ChannelModel::perfect());
    for (double t : {0.0, 2.0, 1234.5}) {
        const auto r = c.transmit(t);
        REQUIRE(r.has_value());
        CHECK(*r == t);
    }
    CHECK(c.loss_rate() == 0.0);
}

TEST_CASE("certain loss delivers nothing") {
    auto m = ChannelModel::impaired(5);
    m.loss_rate_min = m.loss_rate_max = 1.0;
    Channel c(m);
    for (int i = 0; i < 1000; ++i) CHECK_FALSE(c.transmit(i).has_value());
}

TEST_CASE("impaired channel statistics") {
    Channel c(ChannelModel::impaired(11));
    CHECK(c.loss_rate() >= 0.05);
    CHECK(c.loss_rate() <= 0.10);
    const int n = 10000;
    double sum = 0, sq = 0;
    int delivered = 0;
    for (int i = 0; i < n; ++i) {
        const auto r = c.transmit(100.0);
        if (!r) continue;
        const double d = *r - 100.0;
        CHECK(d >= 0.0);
        sum += d;
        sq += d * d;
        ++delivered;
    }
    const double mean = sum / delivered;
    const double sd = std::sqrt(sq / delivered - mean * mean);
    CHECK(mean == doctest::Approx(18.0).epsilon(0.3 / 18.0));
    CHECK(sd == doctest::Approx(3.0).epsilon(0.1));
    const double lost = 1.0 - static_cast<double>(delivered) / n;
    const double sigma = std::sqrt(c.loss_rate() * (1 - c.loss_rate()) / n);
    CHECK(std::abs(lost - c.loss_rate()) < 3 * sigma);
}

TEST_CASE("loss rate redrawn per message stays inside its range on average") {
    auto m = ChannelModel::impaired(3);
    m.redraw_loss_per_message = true;
    Channel c(m);
    int lost = 0;
    for (int i = 0; i < 20000; ++i) lost += !c.transmit(0).has_value();
    const double rate = lost / 20000.0;
    CHECK(rate > 0.06);
    CHECK(rate < 0.09);
}

TEST_CASE("same seed, same channel") {
    Channel a(ChannelModel::impaired(9)), b(ChannelModel::impaired(9));
    for (int i = 0; i < 500; ++i) CHECK(a.transmit(i) == b.transmit(i));
}

TEST_CASE("invalid models are rejected") {
    auto m = ChannelModel::impaired(1);
    m.loss_rate_min = 0.2;
    m.loss_rate_max = 0.1;
    CHECK_THROWS_AS(Channel{m}, ConfigError);
    m = ChannelModel::impaired(1);
    m.delay_std = -1;
    CHECK_THROWS_AS(Channel{m}, ConfigError);
}

TEST_CASE("delay queue releases in delivery order, FIFO on ties") {
    DelayQueue q;
    q.push({5.0, 1, 0, {}, 0});
    q.push({3.0, 2, 1, {}, 0});
    q.push({5.0, 3, 2, {}, 0});
    q.push({9.0, 4, 3, {}, 0});
    CHECK(q.pop_due(2.9).empty());
    const auto due = q.pop_due(5.0);
    REQUIRE(due.size() == 3);
    CHECK(due[0].seq == 2);
    CHECK(due[1].seq == 1);
    CHECK(due[2].seq == 3);
    CHECK(q.size() == 1);
    CHECK(q.pop_due(100).front().seq == 4);
}

TEST_CASE("stale filter drops commands older than the last applied") {
    StaleFilter f(3);
    CHECK(f.admit(0, 5));
    CHECK_FALSE(f.admit(0, 4));
    CHECK(f.admit(0, 5));
    CHECK(f.admit(0, 7));
    CHECK(f.admit(1, 0));
    CHECK(f.admit(2, 3));
    CHECK_THROWS_AS(f.admit(3, 1), AccountingError);
}
