#pragma once

// Direct method: Mayer augmentation, Euler / Heun transcription, and a
// reduced-space projected-gradient solver whose gradient comes from the
// discrete adjoint of the scheme.

#include "epioc/integrators.hpp"
#include "epioc/log.hpp"
#include "epioc/ocp_indirect.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <string>

namespace epioc {

/// Appends the running-cost accumulator as an extra state; the objective
/// becomes its terminal value (plus any terminal payoff of the base problem).
class MayerDynamics : public Dynamics {
public:
    explicit MayerDynamics(std::shared_ptr<const Dynamics> base) : base_(std::move(base)) {}

    int nx() const override { return base_->nx() + 1; }
    int nu() const override { return base_->nu(); }
    const Dynamics& base() const { return *base_; }

    void rhs(double t, const Vec& z, const Vec& u, Vec& dz) const override {
        const int n = base_->nx();
        Vec dx;
        base_->rhs(t, z.head(n), u, dx);
        dz.resize(n + 1);
        dz.head(n) = dx;
        dz[n] = base_->running_cost(t, z.head(n), u);
    }
    using Dynamics::rhs;

    double running_cost(double, const Vec&, const Vec&) const override { return 0.0; }

    void linearize(double t, const Vec& z, const Vec& u, Mat& fx, Mat& fu, Vec& lx, Vec& lu) const override {
        const int n = base_->nx(), m = base_->nu();
        Mat bx, bu;
        Vec bl, bm;
        base_->linearize(t, z.head(n), u, bx, bu, bl, bm);
        fx = Mat::Zero(n + 1, n + 1);
        fx.topLeftCorner(n, n) = bx;
        fx.row(n).head(n) = bl.transpose();
        fu.resize(n + 1, m);
        fu.topRows(n) = bu;
        fu.row(n) = bm.transpose();
        lx = Vec::Zero(n + 1);
        lu = Vec::Zero(m);
    }

    double terminal_cost(const Vec& z) const override {
        const int n = base_->nx();
        return z[n] + base_->terminal_cost(z.head(n));
    }
    Vec terminal_gradient(const Vec& z) const override {
        const int n = base_->nx();
        Vec g(n + 1);
        g.head(n) = base_->terminal_gradient(z.head(n));
        g[n] = 1.0;
        return g;
    }
    Vec neutral_control() const override { return base_->neutral_control(); }

private:
    std::shared_ptr<const Dynamics> base_;
};

inline OCProblem to_mayer(const OCProblem& p) {
    p.validate();
    OCProblem m = p;
    m.dynamics = std::make_shared<MayerDynamics>(p.dynamics);
    m.x0.resize(p.x0.size() + 1);
    m.x0 << p.x0, 0.0;
    return m;
}

enum class Scheme { euler, rk2 };

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "euler") return Scheme::euler;
    if (s == "rk2") return Scheme::rk2;
    throw ValidationError("unknown transcription scheme '" + s + "'");
}

inline const char* to_string(Scheme s) { return s == Scheme::euler ? "euler" : "rk2"; }

/// Full simultaneous NLP: all node states and controls are variables,
/// interleaved per node as [x_i, u_i]. Initial states are fixed through their
/// bounds, so only the scheme updates count as constraints.
struct NLPInstance {
    OCProblem problem;  // Mayer form
    Scheme scheme = Scheme::euler;
    int n_intervals = 0;
    int n_vars = 0;
    int n_constraints = 0;
    Vec lower, upper;

    int nx() const { return problem.dyn().nx(); }
    int nu() const { return problem.dyn().nu(); }
    int state_index(int node, int comp) const { return node * (nx() + nu()) + comp; }
    int control_index(int node, int comp) const { return node * (nx() + nu()) + nx() + comp; }

    double objective(const Vec& z) const {
        return problem.dyn().terminal_cost(z.segment(state_index(n_intervals, 0), nx()));
    }

    Vec constraint_residual(const Vec& z) const;

    /// Decision vector for given node controls with states propagated by the scheme.
    Vec pack(const Mat& X, const Mat& U) const {
        Vec z(n_vars);
        for (int i = 0; i <= n_intervals; ++i) {
            z.segment(state_index(i, 0), nx()) = X.row(i).transpose();
            if (nu()) z.segment(control_index(i, 0), nu()) = U.row(i).transpose();
        }
        return z;
    }
};

namespace detail {

inline Vec scheme_step(const Dynamics& d, Scheme s, double t, double h, const Vec& x, const Vec& u0,
                       const Vec& u1) {
    const Vec k1 = d.rhs(t, x, u0);
    if (s == Scheme::euler) return x + h * k1;
    const Vec k2 = d.rhs(t + h, x + h * k1, u1);
    return x + 0.5 * h * (k1 + k2);
}

}  // namespace detail

inline Vec NLPInstance::constraint_residual(const Vec& z) const {
    const Dynamics& d = problem.dyn();
    const int n = nx(), m = nu();
    const double h = problem.grid.h();
    Vec r(n_constraints);
    for (int i = 0; i < n_intervals; ++i) {
        const Vec x = z.segment(state_index(i, 0), n);
        const Vec u0 = m ? Vec(z.segment(control_index(i, 0), m)) : Vec();
        const Vec u1 = m ? Vec(z.segment(control_index(i + 1, 0), m)) : Vec();
        r.segment(i * n, n) =
            z.segment(state_index(i + 1, 0), n) - detail::scheme_step(d, scheme, problem.grid.node(i), h, x, u0, u1);
    }
    return r;
}

inline NLPInstance transcribe(const OCProblem& mayer, Scheme scheme, double h) {
    mayer.validate();
    const double span = mayer.grid.tf - mayer.grid.t0;
    const double ratio = span / h;
    const double steps = std::round(ratio);
    if (!(h > 0.0) || std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio))
        throw ValidationError("transcription step does not divide the horizon");
    NLPInstance nlp;
    nlp.problem = mayer;
    nlp.problem.grid.n_steps = static_cast<int>(steps);
    nlp.scheme = scheme;
    nlp.n_intervals = static_cast<int>(steps);
    const int n = nlp.nx(), m = nlp.nu(), N = nlp.n_intervals;
    nlp.n_vars = (n + m) * (N + 1);
    nlp.n_constraints = n * N;
    constexpr double inf = std::numeric_limits<double>::infinity();
    nlp.lower = Vec::Constant(nlp.n_vars, -inf);
    nlp.upper = Vec::Constant(nlp.n_vars, inf);
    for (int c = 0; c < n; ++c) nlp.lower[nlp.state_index(0, c)] = nlp.upper[nlp.state_index(0, c)] = mayer.x0[c];
    for (int i = 0; i <= N; ++i)
        for (int j = 0; j < m; ++j) {
            nlp.lower[nlp.control_index(i, j)] = mayer.bounds[j].lo;
            nlp.upper[nlp.control_index(i, j)] = mayer.bounds[j].hi;
        }
    return nlp;
}

struct DirectConfig {
    int max_iter = 5000;
    double tol = 1e-6;          // projected-gradient infinity norm (L2-scaled gradient)
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    double initial_step = 1.0;
    bool spectral_step = true;  // Barzilai-Borwein trial step after the first iteration
    double min_step = 1e-14;
    double objective_rtol = 1e-12;  // stop after 20 consecutive iterations below this relative decrease
    Mat initial_control;            // empty: neutral control clamped to the bounds
};

/// Reduced objective: controls in, states by forward propagation of the scheme.
struct ReducedProblem {
    const NLPInstance& nlp;

    Mat propagate(const Mat& U) const {
        const Dynamics& d = nlp.problem.dyn();
        const double h = nlp.problem.grid.h();
        const int N = nlp.n_intervals;
        Mat X(N + 1, nlp.nx());
        Vec x = nlp.problem.x0;
        X.row(0) = x.transpose();
        for (int i = 0; i < N; ++i) {
            x = detail::scheme_step(d, nlp.scheme, nlp.problem.grid.node(i), h, x, U.row(i).transpose(),
                                    U.row(i + 1).transpose());
            if (!x.allFinite()) throw IntegrationError("non-finite state in transcription", nlp.problem.grid.node(i + 1));
            X.row(i + 1) = x.transpose();
        }
        return X;
    }

    double objective(const Mat& X) const { return nlp.problem.dyn().terminal_cost(X.row(X.rows() - 1).transpose()); }

    /// Exact gradient of the discrete objective with respect to node controls.
    Mat gradient(const Mat& X, const Mat& U) const {
        const Dynamics& d = nlp.problem.dyn();
        const double h = nlp.problem.grid.h();
        const int N = nlp.n_intervals, n = nlp.nx(), m = nlp.nu();
        Mat G = Mat::Zero(N + 1, m);
        Vec p = d.terminal_gradient(X.row(N).transpose());
        Mat A1, B1, A2, B2;
        Vec lx, lu;
        for (int i = N - 1; i >= 0; --i) {
            const double t = nlp.problem.grid.node(i);
            const Vec x = X.row(i).transpose(), u0 = U.row(i).transpose(), u1 = U.row(i + 1).transpose();
            d.linearize(t, x, u0, A1, B1, lx, lu);
            if (nlp.scheme == Scheme::euler) {
                G.row(i) += (h * B1.transpose() * p).transpose();
                p = p + h * A1.transpose() * p;
                continue;
            }
            const Vec y = x + h * d.rhs(t, x, u0);
            d.linearize(t + h, y, u1, A2, B2, lx, lu);
            const Mat dy_dx = Mat::Identity(n, n) + h * A1;
            const Mat Dx = Mat::Identity(n, n) + 0.5 * h * (A1 + A2 * dy_dx);
            const Mat Du0 = 0.5 * h * (B1 + h * A2 * B1);
            const Mat Du1 = 0.5 * h * B2;
            G.row(i) += (Du0.transpose() * p).transpose();
            G.row(i + 1) += (Du1.transpose() * p).transpose();
            p = Dx.transpose() * p;
        }
        return G;
    }
};

namespace detail {
inline Mat project(Mat U, const std::vector<Bound>& b) {
    for (Eigen::Index i = 0; i < U.rows(); ++i)
        for (Eigen::Index j = 0; j < U.cols(); ++j) U(i, j) = clamp(U(i, j), b[j]);
    return U;
}
}  // namespace detail

/// Projected gradient with Armijo backtracking from a spectral trial step.
/// The discrete gradient is divided by h so that step lengths refer to the L2
/// metric on controls and do not shrink with the grid.
inline OCSolution solve_direct(const NLPInstance& nlp, const DirectConfig& cfg = {}) {
    const Dynamics& d = nlp.problem.dyn();
    const auto& bounds = nlp.problem.bounds;
    const int N = nlp.n_intervals, m = nlp.nu();
    const double h = nlp.problem.grid.h();
    ReducedProblem rp{nlp};

    Mat U(N + 1, m);
    if (cfg.initial_control.size()) {
        if (cfg.initial_control.rows() != N + 1 || cfg.initial_control.cols() != m)
            throw ValidationError("direct: initial control has the wrong shape");
        U = cfg.initial_control;
    } else {
        const Vec g = d.neutral_control();
        U = g.transpose().replicate(N + 1, 1);
    }
    U = detail::project(U, bounds);

    Mat X = rp.propagate(U);
    double J = rp.objective(X);
    if (!std::isfinite(J)) throw ConvergenceError("direct: non-finite initial objective");

    OCSolution sol;
    sol.method = "direct";
    sol.history.push_back({0, J, std::numeric_limits<double>::quiet_NaN()});
    int stagnant = 0;
    Mat U_prev, g_prev;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        const Mat G = rp.gradient(X, U);
        const Mat g = G / h;
        const double pg = (detail::project(U - g, bounds) - U).cwiseAbs().maxCoeff();
        sol.final_relative_change = pg;
        if (pg < cfg.tol) {
            sol.converged = true;
            break;
        }
        // spectral (Barzilai-Borwein) trial step, then Armijo backtracking
        double a = cfg.initial_step;
        if (cfg.spectral_step && U_prev.size()) {
            const double ss = (U - U_prev).squaredNorm();
            const double sy = ((U - U_prev).array() * (g - g_prev).array()).sum();
            a = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : 1e10;
        }
        bool accepted = false;
        Mat Un, Xn;
        double Jn = 0.0;
        while (a >= cfg.min_step) {
            Un = detail::project(U - a * g, bounds);
            try {
                Xn = rp.propagate(Un);
                Jn = rp.objective(Xn);
            } catch (const IntegrationError&) {
                Jn = std::numeric_limits<double>::infinity();
            }
            const double decrease = (G.array() * (Un - U).array()).sum();
            if (std::isfinite(Jn) && Jn <= J + cfg.armijo_c1 * decrease) {
                accepted = true;
                break;
            }
            a *= cfg.backtrack;
        }
        if (!accepted) {
            log::info("direct: line search failed at iteration {} (projected gradient {:.3e})", it, pg);
            sol.converged = pg < std::sqrt(cfg.tol);
            break;
        }
        const double rel = (J - Jn) / std::max(std::abs(J), 1e-300);
        U_prev = std::move(U);
        g_prev = g;
        U = std::move(Un);
        X = std::move(Xn);
        J = Jn;
        sol.iterations = it;
        sol.history.push_back({it, J, pg});
        log::debug("direct it {}: objective {:.10g} projected gradient {:.3e} step {:.3g}", it, J, pg, a);
        stagnant = rel < cfg.objective_rtol ? stagnant + 1 : 0;
        if (stagnant >= 20) {
            sol.converged = true;
            break;
        }
    }
    if (!sol.converged) log::info("direct: stopped after {} iterations (projected gradient {:.3e})", sol.iterations,
                                  sol.final_relative_change);
    const bool mayer = dynamic_cast<const MayerDynamics*>(&d) != nullptr;
    const int nb = mayer ? nlp.nx() - 1 : nlp.nx();
    sol.objective = J;
    sol.trajectory.times = nlp.problem.grid.times();
    sol.trajectory.states = X.leftCols(nb);
    sol.trajectory.controls = U;
    return sol;
}

/// Lagrange problem -> Mayer form -> transcription on the problem grid -> solve.
inline OCSolution solve_direct(const OCProblem& prob, Scheme scheme, const DirectConfig& cfg = {}) {
    return solve_direct(transcribe(to_mayer(prob), scheme, prob.grid.h()), cfg);
}

}  // namespace epioc
