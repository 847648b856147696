#pragma once

// Indirect solution of optimal control problems: forward-backward sweep on the
// state/costate system and single shooting on the initial costate.

#include "epioc/core.hpp"
#include "epioc/integrators.hpp"
#include "epioc/log.hpp"
#include "epioc/models.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace epioc {

struct OCProblem {
    std::shared_ptr<const Dynamics> dynamics;
    Vec x0;
    TimeGrid grid;
    std::vector<Bound> bounds;

    const Dynamics& dyn() const { return *dynamics; }

    void validate() const {
        if (!dynamics) throw ValidationError("optimal control problem without dynamics");
        grid.validate();
        if (x0.size() != dynamics->nx()) throw ValidationError("initial state dimension mismatch");
        if (static_cast<int>(bounds.size()) != dynamics->nu())
            throw ValidationError("need one bound per control");
        for (const auto& b : bounds)
            if (!(b.lo <= b.hi)) throw ValidationError("control bound with lo > hi");
    }
};

/// Builds the problem for a scenario in optimize mode (bounds from the
/// scenario, falling back to the catalog limits).
inline OCProblem make_problem(const Scenario& s) {
    const ModelInfo& mi = s.info();
    if (!mi.oc) throw ValidationError("model " + mi.name + " has no optimal control formulation");
    OCProblem p;
    p.dynamics = std::make_shared<ModelSystem>(s.system());
    p.x0 = s.initial_vector();
    p.grid = s.grid;
    p.bounds = s.control_bounds();
    p.validate();
    return p;
}

struct IterationRecord {
    int iteration = 0;
    double objective = 0.0;
    double change = std::numeric_limits<double>::quiet_NaN();
};

struct OCSolution {
    Trajectory trajectory;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    double final_relative_change = std::numeric_limits<double>::quiet_NaN();
    std::vector<IterationRecord> history;
    std::string method;
};

/// Simpson quadrature of the running cost plus the terminal payoff.
inline double objective_value(const Dynamics& d, const Vec& times, const Mat& X, const Mat& U) {
    const Eigen::Index n = times.size();
    Vec L(n);
    for (Eigen::Index i = 0; i < n; ++i)
        L[i] = d.running_cost(times[i], X.row(i).transpose(), U.row(i).transpose());
    const double h = (times[n - 1] - times[0]) / static_cast<double>(n - 1);
    return simpson(L, h) + d.terminal_cost(X.row(n - 1).transpose());
}

namespace detail {

inline double relative_change(const Mat& a, const Mat& b) {
    if (a.size() == 0) return 0.0;
    return (a - b).cwiseAbs().maxCoeff() / (a.cwiseAbs().maxCoeff() + 1e-12);
}

// Costates backward from the transversality value; stages use the state and
// control at i+1, their averages, and the values at i.
inline Mat backward_costate(const Dynamics& d, const Vec& times, const Mat& X, const Mat& U) {
    const int N = static_cast<int>(times.size());
    const int nx = d.nx();
    Mat Lam(N, nx);
    Vec lam = d.terminal_gradient(X.row(N - 1).transpose());
    Lam.row(N - 1) = lam.transpose();
    for (int i = N - 1; i > 0; --i) {
        const double h = times[i] - times[i - 1];
        const double t = times[i];
        const Vec x1 = X.row(i).transpose(), x0 = X.row(i - 1).transpose();
        const Vec u1 = U.row(i).transpose(), u0 = U.row(i - 1).transpose();
        const Vec xm = 0.5 * (x0 + x1), um = 0.5 * (u0 + u1);
        const Vec k1 = d.adjoint_rhs(t, x1, lam, u1);
        const Vec k2 = d.adjoint_rhs(t - 0.5 * h, xm, lam - 0.5 * h * k1, um);
        const Vec k3 = d.adjoint_rhs(t - 0.5 * h, xm, lam - 0.5 * h * k2, um);
        const Vec k4 = d.adjoint_rhs(t - h, x0, lam - h * k3, u0);
        lam = lam - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!lam.allFinite()) throw IntegrationError("non-finite costate", t - h);
        Lam.row(i - 1) = lam.transpose();
    }
    return Lam;
}

}  // namespace detail

struct SweepConfig {
    double tol = 1e-4;
    int max_iter = 1000;
    double relaxation = 0.5;
    Mat initial_control;  // empty: neutral control clamped to the bounds
};

/// Forward-backward sweep. Controls are updated as (1-w) u + w u_law; an
/// update that raises the objective is retried with w halved, and the solve
/// stops with diagnostics if that does not help.
inline OCSolution sweep(const OCProblem& prob, const SweepConfig& cfg = {}) {
    prob.validate();
    if (!(cfg.tol > 0.0) || cfg.max_iter < 1 || !(cfg.relaxation > 0.0 && cfg.relaxation <= 1.0))
        throw ValidationError("sweep: invalid tol / max_iter / relaxation");
    const Dynamics& d = prob.dyn();
    const Vec times = prob.grid.times();
    const int N = prob.grid.nodes(), nu = d.nu();
    const VectorField f = field_of(d);

    Mat U(N, nu);
    if (cfg.initial_control.size()) {
        if (cfg.initial_control.rows() != N || cfg.initial_control.cols() != nu)
            throw ValidationError("sweep: initial control has the wrong shape");
        U = cfg.initial_control;
    } else {
        Vec g = d.neutral_control();
        for (int j = 0; j < nu; ++j) g[j] = clamp(g[j], prob.bounds[j]);
        U = g.transpose().replicate(N, 1);
    }
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < nu; ++j) U(i, j) = clamp(U(i, j), prob.bounds[j]);

    Mat X = integrate(f, times, prob.x0, U, Method::rk4).states;
    Mat Lam = detail::backward_costate(d, times, X, U);
    double J = objective_value(d, times, X, U);

    OCSolution sol;
    sol.method = "sweep";
    sol.history.push_back({0, J, std::numeric_limits<double>::quiet_NaN()});
    log::debug("sweep start: objective {:.10g}", J);

    const double w_min = cfg.relaxation / 64.0;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        Mat Ulaw(N, nu);
        for (int i = 0; i < N; ++i)
            Ulaw.row(i) = d.control_law(times[i], X.row(i).transpose(), Lam.row(i).transpose(), prob.bounds,
                                        U.row(i).transpose())
                              .transpose();
        double w = cfg.relaxation;
        Mat Un, Xn;
        double Jn = 0.0;
        for (;;) {
            Un = (1.0 - w) * U + w * Ulaw;
            Xn = integrate(f, times, prob.x0, Un, Method::rk4).states;
            Jn = objective_value(d, times, Xn, Un);
            if (std::isfinite(Jn) && Jn <= J + 1e-12 * std::max(1.0, std::abs(J))) break;
            w *= 0.5;
            if (w < w_min) {
                log::error("sweep: objective increase {:.3e} at iteration {} persists with relaxation {:.3g}; "
                           "stopping",
                           Jn - J, it, 2.0 * w);
                sol.converged = sol.final_relative_change < cfg.tol;
                sol.iterations = it - 1;
                sol.objective = J;
                sol.trajectory = {times, X, U, Lam};
                return sol;
            }
        }
        const Mat Lamn = detail::backward_costate(d, times, Xn, Un);
        const double dx = detail::relative_change(Xn, X), dl = detail::relative_change(Lamn, Lam),
                     du = detail::relative_change(Un, U);
        const double delta = std::max({dx, dl, du});
        X = std::move(Xn);
        U = std::move(Un);
        Lam = Lamn;
        J = Jn;
        sol.history.push_back({it, J, delta});
        sol.final_relative_change = delta;
        sol.iterations = it;
        log::debug("sweep it {}: objective {:.10g} change {:.3e} (state {:.1e} costate {:.1e} control {:.1e}) "
                   "relaxation {:.3g}",
                   it, J, delta, dx, dl, du, w);
        // a shrunken step understates the change, so only a full step may stop the loop
        if (delta < cfg.tol && w == cfg.relaxation) {
            sol.converged = true;
            break;
        }
    }
    if (!sol.converged) log::error("sweep: no convergence after {} iterations (change {:.3e})", sol.iterations,
                                   sol.final_relative_change);
    sol.objective = J;
    sol.trajectory = {times, X, U, Lam};
    return sol;
}

struct ShootingConfig {
    double tol = 1e-10;
    int max_iter = 50;
    double fd_step = 1e-7;
};

/// Single shooting on the initial costate: the coupled state/costate system
/// with the pointwise control law is propagated by rk4 and Newton drives the
/// terminal mismatch lambda(tf) - phi'(x(tf)) to zero.
inline OCSolution single_shooting(const OCProblem& prob, const Vec& guess, const ShootingConfig& cfg = {}) {
    prob.validate();
    const Dynamics& d = prob.dyn();
    const int nx = d.nx(), nu = d.nu(), N = prob.grid.nodes();
    const Vec times = prob.grid.times();
    if (guess.size() != nx) throw ValidationError("shooting guess must have one entry per state");

    auto law = [&](double t, const Vec& x, const Vec& lam) {
        return nu ? d.control_law(t, x, lam, prob.bounds) : Vec(Vec::Zero(0));
    };
    auto field = [&](double t, const Vec& z) {
        const Vec x = z.head(nx), lam = z.tail(nx);
        const Vec u = law(t, x, lam);
        Vec out(2 * nx);
        out.head(nx) = d.rhs(t, x, u);
        out.tail(nx) = d.adjoint_rhs(t, x, lam, u);
        return out;
    };
    auto propagate = [&](const Vec& lam0, Mat* Z) {
        Vec z(2 * nx);
        z << prob.x0, lam0;
        if (Z) Z->row(0) = z.transpose();
        for (int i = 0; i + 1 < N; ++i) {
            const double t = times[i], h = times[i + 1] - times[i];
            const Vec k1 = field(t, z);
            const Vec k2 = field(t + 0.5 * h, z + 0.5 * h * k1);
            const Vec k3 = field(t + 0.5 * h, z + 0.5 * h * k2);
            const Vec k4 = field(t + h, z + h * k3);
            z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!z.allFinite()) throw IntegrationError("non-finite state/costate in shooting", t + h);
            if (Z) Z->row(i + 1) = z.transpose();
        }
        return z;
    };
    auto residual = [&](const Vec& lam0) {
        const Vec z = propagate(lam0, nullptr);
        return Vec(z.tail(nx) - d.terminal_gradient(z.head(nx)));
    };

    OCSolution sol;
    sol.method = "shooting";
    Vec lam0 = guess;
    Vec r = residual(lam0);
    for (int it = 0; it < cfg.max_iter && r.norm() >= cfg.tol; ++it) {
        Mat S(nx, nx);
        for (int j = 0; j < nx; ++j) {
            const double h = cfg.fd_step * std::max(1.0, std::abs(lam0[j]));
            Vec lp = lam0, lm = lam0;
            lp[j] += h;
            lm[j] -= h;
            S.col(j) = (residual(lp) - residual(lm)) / (2.0 * h);
        }
        Eigen::FullPivLU<Mat> lu(S);
        if (!lu.isInvertible()) throw ConvergenceError("shooting sensitivity matrix is singular");
        const Vec step = lu.solve(-r);
        double a = 1.0;
        Vec cand = lam0 + step, rc = residual(cand);
        while (!(rc.norm() < r.norm()) && a > 1e-6) {
            a *= 0.5;
            cand = lam0 + a * step;
            rc = residual(cand);
        }
        lam0 = cand;
        r = rc;
        sol.iterations = it + 1;
        sol.history.push_back({it + 1, std::numeric_limits<double>::quiet_NaN(), r.norm()});
        log::debug("shooting it {}: residual {:.3e}", it + 1, r.norm());
    }
    sol.final_relative_change = r.norm();
    sol.converged = r.norm() < cfg.tol;
    if (!sol.converged) throw ConvergenceError("single shooting did not converge (residual " + std::to_string(r.norm()) + ")");

    Mat Z(N, 2 * nx);
    propagate(lam0, &Z);
    Mat X = Z.leftCols(nx), Lam = Z.rightCols(nx), U(N, nu);
    for (int i = 0; i < N; ++i) U.row(i) = law(times[i], X.row(i).transpose(), Lam.row(i).transpose()).transpose();
    sol.trajectory = {times, X, U, Lam};
    sol.objective = objective_value(d, times, X, U);
    for (auto& h : sol.history) h.objective = sol.objective;
    return sol;
}

namespace demos {

// x' = x + u, L = x + u^2/2
struct PmpExampleFn {
    template <class T>
    void rhs(double, const T* x, const T* u, T* dx) const {
        dx[0] = x[0] + u[0];
    }
    template <class T>
    T cost(double, const T* x, const T* u) const {
        return x[0] + 0.5 * u[0] * u[0];
    }
};

// x' = alpha x - u, L = u^2
struct TumorFn {
    double alpha;
    template <class T>
    void rhs(double, const T* x, const T* u, T* dx) const {
        dx[0] = alpha * x[0] - u[0];
    }
    template <class T>
    T cost(double, const T*, const T* u) const {
        return u[0] * u[0];
    }
};

/// Tumor model with terminal payoff phi(x) = x.
class TumorDynamics : public AutoDynamics<TumorFn> {
public:
    explicit TumorDynamics(double alpha) : AutoDynamics(TumorFn{alpha}, 1, 1) {}
    double terminal_cost(const Vec& x) const override { return x[0]; }
    Vec terminal_gradient(const Vec&) const override { return Vec::Ones(1); }
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Unconstrained scalar problem on [0, 2] with x(0) = e^2/2 - 1.
inline OCProblem pmp_example(int n_steps = 2000) {
    OCProblem p;
    p.dynamics = std::make_shared<AutoDynamics<PmpExampleFn>>(PmpExampleFn{}, 1, 1);
    p.x0 = Vec::Constant(1, 0.5 * std::exp(2.0) - 1.0);
    p.grid = TimeGrid{0.0, 2.0, n_steps, {}};
    p.bounds = {Bound{-kInf, kInf}};
    return p;
}

inline OCProblem tumor_problem(double alpha, double x0, double tf, int n_steps = 1000) {
    if (!(alpha > 0.0)) throw ValidationError("tumor growth rate must be positive");
    OCProblem p;
    p.dynamics = std::make_shared<TumorDynamics>(alpha);
    p.x0 = Vec::Constant(1, x0);
    p.grid = TimeGrid{0.0, tf, n_steps, {}};
    p.bounds = {Bound{-kInf, kInf}};
    return p;
}

}  // namespace demos

/// Sweep on the tumor payoff problem (terminal costate 1).
inline OCSolution tumor_payoff_demo(double alpha, double x0, double tf) {
    SweepConfig cfg;
    cfg.tol = 1e-10;
    return sweep(demos::tumor_problem(alpha, x0, tf), cfg);
}

}  // namespace epioc
