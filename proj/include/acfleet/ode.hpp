#pragma once

#include <array>
#include <cstddef>

namespace acfleet::ode {

template <std::size_t N>
using Vec = std::array<double, N>;

template <std::size_t N>
Vec<N> axpy(const Vec<N>& y, double a, const Vec<N>& k) {
    Vec<N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = y[i] + a * k[i];
    return out;
}

// Classical fourth-order Runge-Kutta, fixed step. `f` maps Vec<N> -> Vec<N>.
template <std::size_t N, class F>
Vec<N> rk4_step(F&& f, const Vec<N>& y, double dt) {
    const Vec<N> k1 = f(y);
    const Vec<N> k2 = f(axpy(y, 0.5 * dt, k1));
    const Vec<N> k3 = f(axpy(y, 0.5 * dt, k2));
    const Vec<N> k4 = f(axpy(y, dt, k3));
    Vec<N> out;
    for (std::size_t i = 0; i < N; ++i)
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

} // namespace acfleet::ode
