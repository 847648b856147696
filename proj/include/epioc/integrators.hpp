#pragma once

// Fixed-step Euler / RK2 / RK4 and adaptive Dormand-Prince RK45, forward or
// backward in time. Controls are given per grid node (stage values use the
// endpoint average) or as a function of time.

#include "epioc/core.hpp"
#include "epioc/types.hpp"

#include <algorithm>
#include <functional>
#include <string>

namespace epioc {

using VectorField = std::function<void(double t, const Vec& x, const Vec& u, Vec& dx)>;
using ControlFunction = std::function<Vec(double t)>;

inline VectorField field_of(const Dynamics& d) {
    return [&d](double t, const Vec& x, const Vec& u, Vec& dx) { d.rhs(t, x, u, dx); };
}

struct Trajectory {
    Vec times;
    Mat states;    // node x state
    Mat controls;  // node x control (may have zero columns)
    Mat costates;  // node x state, empty unless produced by an OC solver

    int nodes() const { return static_cast<int>(times.size()); }
    Vec state(int i) const { return states.row(i).transpose(); }
    Vec control(int i) const { return controls.row(i).transpose(); }
};

enum class Method { euler, rk2, rk4, rk45 };

inline Method method_from_string(const std::string& s) {
    if (s == "euler") return Method::euler;
    if (s == "rk2") return Method::rk2;
    if (s == "rk4") return Method::rk4;
    if (s == "rk45") return Method::rk45;
    throw ValidationError("unknown integration method '" + s + "'");
}

struct Rk45Options {
    double abs_tol = 1e-8;
    double rel_tol = 1e-8;
    double initial_step = 0.0;  // 0: span/100
    double min_step = 0.0;      // 0: 1e-12 * span
    int max_steps = 10'000'000;
};

namespace detail {
inline void check_finite(const Vec& v, double t, const char* what) {
    if (!v.allFinite()) throw IntegrationError(std::string("non-finite ") + what, t);
}
}  // namespace detail

inline Vec step_euler(const VectorField& f, double t, const Vec& x, const Vec& u, double h) {
    Vec k(x.size());
    f(t, x, u, k);
    detail::check_finite(k, t, "derivative");
    return x + h * k;
}

/// Heun's method; u0 at the left node, u1 at the right node.
inline Vec step_rk2(const VectorField& f, double t, const Vec& x, const Vec& u0, const Vec& u1, double h) {
    Vec k1(x.size()), k2(x.size());
    f(t, x, u0, k1);
    f(t + h, x + h * k1, u1, k2);
    detail::check_finite(k2, t, "derivative");
    return x + 0.5 * h * (k1 + k2);
}

inline Vec step_rk4(const VectorField& f, double t, const Vec& x, const Vec& u_start, const Vec& u_mid,
                    const Vec& u_end, double h) {
    const Eigen::Index n = x.size();
    Vec k1(n), k2(n), k3(n), k4(n);
    f(t, x, u_start, k1);
    f(t + 0.5 * h, x + 0.5 * h * k1, u_mid, k2);
    f(t + 0.5 * h, x + 0.5 * h * k2, u_mid, k3);
    f(t + h, x + h * k3, u_end, k4);
    Vec out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::check_finite(out, t, "state");
    return out;
}

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DoPri {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

// Adaptive integration from t0 to t1 landing exactly on t1; h carries the
// step size between calls (sign follows the direction of integration).
inline Vec rk45_segment(const VectorField& f, const ControlFunction& u, double t0, double t1, Vec x,
                        double& h, const Rk45Options& opt, double h_min) {
    using D = DoPri;
    const Eigen::Index n = x.size();
    Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y(n), err(n);
    const double dir = t1 > t0 ? 1.0 : -1.0;
    double t = t0;
    if (h * dir <= 0.0) h = dir * std::abs(h);
    f(t, x, u(t), k1);
    int steps = 0;
    while ((t1 - t) * dir > 0.0) {
        if (++steps > opt.max_steps) throw IntegrationError("rk45 step budget exhausted", t);
        bool last = false;
        double hs = h;
        if ((t + hs - t1) * dir >= 0.0 || std::abs(t1 - (t + hs)) < 1e-13 * std::abs(hs)) {
            hs = t1 - t;
            last = true;
        }
        f(t + D::c2 * hs, x + hs * (D::a21 * k1), u(t + D::c2 * hs), k2);
        f(t + D::c3 * hs, x + hs * (D::a31 * k1 + D::a32 * k2), u(t + D::c3 * hs), k3);
        f(t + D::c4 * hs, x + hs * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3), u(t + D::c4 * hs), k4);
        f(t + D::c5 * hs, x + hs * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4),
          u(t + D::c5 * hs), k5);
        f(t + hs, x + hs * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5),
          u(t + hs), k6);
        y = x + hs * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
        const double tn = last ? t1 : t + hs;
        f(tn, y, u(tn), k7);
        err = hs * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);
        double e = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc = opt.abs_tol + opt.rel_tol * std::max(std::abs(x[i]), std::abs(y[i]));
            e = std::max(e, std::abs(err[i]) / sc);
        }
        if (!std::isfinite(e)) e = 1e10;
        if (e <= 1.0) {
            t = tn;
            x = y;
            k1 = k7;  // first-same-as-last
            check_finite(x, t, "state");
            if (!last) h = hs * (e == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(e, -0.2))));
        } else {
            h = hs * std::max(0.2, 0.9 * std::pow(e, -0.2));
            if (std::abs(h) < h_min) throw IntegrationError("rk45 step size underflow", t);
        }
    }
    return x;
}

}  // namespace detail

/// Integrates over an explicit monotone node sequence (decreasing for
/// backward integration). `controls` has one row per node.
inline Trajectory integrate(const VectorField& f, const Vec& times, const Vec& x0, const Mat& controls,
                            Method method, const Rk45Options& opt = {}) {
    const int N = static_cast<int>(times.size());
    if (N < 2) throw ValidationError("integrate: need at least two nodes");
    if (controls.rows() != N) throw ValidationError("integrate: control rows must equal node count");
    Trajectory tr;
    tr.times = times;
    tr.controls = controls;
    tr.states.resize(N, x0.size());
    tr.states.row(0) = x0.transpose();
    Vec x = x0;
    if (method == Method::rk45) {
        ControlFunction u = [&](double t) -> Vec {
            // piecewise linear between nodes
            const bool fwd = times[N - 1] > times[0];
            int lo = 0, hi = N - 1;
            while (hi - lo > 1) {
                const int mid = (lo + hi) / 2;
                if ((fwd && times[mid] <= t) || (!fwd && times[mid] >= t))
                    lo = mid;
                else
                    hi = mid;
            }
            const double w = (t - times[lo]) / (times[hi] - times[lo]);
            const double a = std::clamp(w, 0.0, 1.0);
            return ((1.0 - a) * controls.row(lo) + a * controls.row(hi)).transpose();
        };
        const double span = std::abs(times[N - 1] - times[0]);
        double h = opt.initial_step > 0.0 ? opt.initial_step : span / 100.0;
        const double h_min = opt.min_step > 0.0 ? opt.min_step : 1e-12 * span;
        for (int i = 0; i + 1 < N; ++i) {
            x = detail::rk45_segment(f, u, times[i], times[i + 1], x, h, opt, h_min);
            tr.states.row(i + 1) = x.transpose();
        }
        return tr;
    }
    for (int i = 0; i + 1 < N; ++i) {
        const double t = times[i], h = times[i + 1] - times[i];
        const Vec u0 = controls.row(i).transpose();
        const Vec u1 = controls.row(i + 1).transpose();
        switch (method) {
        case Method::euler: x = step_euler(f, t, x, u0, h); break;
        case Method::rk2: x = step_rk2(f, t, x, u0, u1, h); break;
        default: x = step_rk4(f, t, x, u0, 0.5 * (u0 + u1), u1, h); break;
        }
        detail::check_finite(x, t + h, "state");
        tr.states.row(i + 1) = x.transpose();
    }
    return tr;
}

inline Trajectory integrate(const VectorField& f, const TimeGrid& grid, const Vec& x0, const Mat& controls,
                            Method method, const Rk45Options& opt = {}) {
    return integrate(f, grid.times(), x0, controls, method, opt);
}

/// Control given as a function of time. Fixed-step methods sample it at
/// nodes (RK4 stages use the endpoint average); rk45 evaluates it exactly.
inline Trajectory integrate(const VectorField& f, const TimeGrid& grid, const Vec& x0,
                            const ControlFunction& u, int nu, Method method, const Rk45Options& opt = {}) {
    const Vec times = grid.times();
    const int N = grid.nodes();
    Mat controls(N, nu);
    for (int i = 0; i < N; ++i)
        if (nu) controls.row(i) = u(times[i]).transpose();
    if (method != Method::rk45) return integrate(f, times, x0, controls, method, opt);
    Trajectory tr;
    tr.times = times;
    tr.controls = controls;
    tr.states.resize(N, x0.size());
    tr.states.row(0) = x0.transpose();
    Vec x = x0;
    double h = opt.initial_step > 0.0 ? opt.initial_step : (grid.tf - grid.t0) / 100.0;
    const double h_min = opt.min_step > 0.0 ? opt.min_step : 1e-12 * (grid.tf - grid.t0);
    for (int i = 0; i + 1 < N; ++i) {
        // evaluate the schedule just inside the segment so that switching
        // times on nodes take the value of the interval being integrated
        const double a = times[i], b = times[i + 1];
        ControlFunction seg = [&](double t) {
            const double eps = 1e-12 * (b - a);
            return u(std::clamp(t, a + eps, b - eps));
        };
        x = detail::rk45_segment(f, nu ? seg : u, a, b, x, h, opt, h_min);
        tr.states.row(i + 1) = x.transpose();
    }
    return tr;
}

/// Composite Simpson rule on uniformly spaced samples; an odd interval count
/// closes with Simpson's 3/8 rule on the last three intervals.
inline double simpson(const Vec& y, double h) {
    const Eigen::Index n = y.size() - 1;  // intervals
    if (n < 1) return 0.0;
    if (n == 1) return 0.5 * h * (y[0] + y[1]);
    auto even = [&](Eigen::Index m) {
        double s = y[0] + y[m];
        for (Eigen::Index i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * y[i];
        return s * h / 3.0;
    };
    if (n % 2 == 0) return even(n);
    const Eigen::Index m = n - 3;
    const double tail = 3.0 * h / 8.0 * (y[m] + 3.0 * y[m + 1] + 3.0 * y[m + 2] + y[m + 3]);
    return (m > 0 ? even(m) : 0.0) + tail;
}

}  // namespace epioc
