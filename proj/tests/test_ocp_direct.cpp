#include "support.hpp"

#include <gtest/gtest.h>

using namespace epioc;
using namespace epioc::testing;

namespace {

OCProblem dengue() { return make_problem(preset("dengue-goodwill")); }

OCProblem shortened(OCProblem p, double tf, int n) {
    p.grid = TimeGrid{0.0, tf, n, {}};
    return p;
}

void expect_size(const NLPInstance& nlp, int vars, int cons) {
    EXPECT_NEAR(nlp.n_vars, vars, 0.02 * vars);
    EXPECT_NEAR(nlp.n_constraints, cons, 0.02 * cons);
}

}  // namespace

TEST(Mayer, AugmentsWithRunningCost) {
    const OCProblem m = to_mayer(dengue());
    EXPECT_EQ(m.dyn().nx(), 5);
    EXPECT_EQ(m.x0.size(), 5);
    EXPECT_EQ(m.x0[4], 0.0);
    const Vec z = (Vec(5) << 1.0, 0.1, 0.01, 0.05, 0.3).finished();
    const Vec u = (Vec(2) << 0.2, 0.4).finished();
    EXPECT_DOUBLE_EQ(m.dyn().rhs(0.0, z, u)[4], dengue().dyn().running_cost(0.0, z.head(4), u));
    EXPECT_DOUBLE_EQ(m.dyn().terminal_cost(z), 0.3);
}

TEST(Mayer, ZeroRunningCostGivesZeroObjective) {
    const Scenario s = preset("capeverde-seirasei-oc");
    OCProblem p = make_problem(s);
    p.dynamics = std::make_shared<ModelSystem>(s.model, s.param_vector(), Vec(), true);
    const NLPInstance nlp = transcribe(to_mayer(p), Scheme::euler, p.grid.h());
    const Mat U = Mat::Constant(nlp.n_intervals + 1, 1, 0.3);
    const Mat X = ReducedProblem{nlp}.propagate(U);
    EXPECT_EQ(X.col(8).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(nlp.objective(nlp.pack(X, U)), 0.0);
}

TEST(Mayer, TerminalStateMatchesQuadrature) {
    // oracle: Simpson quadrature of the running cost along the same discrete trajectory
    const OCProblem base = demos::pmp_example(2000);
    for (Scheme sc : {Scheme::euler, Scheme::rk2}) {
        const NLPInstance nlp = transcribe(to_mayer(base), sc, 1e-3);
        Mat U(nlp.n_intervals + 1, 1);
        for (int i = 0; i <= nlp.n_intervals; ++i) U(i, 0) = std::sin(nlp.problem.grid.node(i));
        const Mat X = ReducedProblem{nlp}.propagate(U);
        Vec L(X.rows());
        for (int i = 0; i < X.rows(); ++i)
            L[i] = base.dyn().running_cost(0.0, X.row(i).head(1).transpose(), U.row(i).transpose());
        const double q = simpson(L, 1e-3);
        EXPECT_LT(rel_err(X(X.rows() - 1, 1), q), sc == Scheme::euler ? 1e-3 : 1e-5) << to_string(sc);
    }
}

TEST(Transcribe, DengueSizes) {
    const OCProblem m = to_mayer(dengue());
    expect_size(transcribe(m, Scheme::euler, 0.5), 727, 519);
    expect_size(transcribe(m, Scheme::euler, 0.25), 1455, 1039);
    expect_size(transcribe(m, Scheme::euler, 0.125), 2911, 2079);
    expect_size(transcribe(m, Scheme::rk2, 0.5), 728, 520);
    expect_size(transcribe(m, Scheme::rk2, 0.25), 1456, 1040);
    expect_size(transcribe(m, Scheme::rk2, 0.125), 2912, 2080);
}

TEST(Transcribe, BoundsAndResiduals) {
    const NLPInstance nlp = transcribe(to_mayer(dengue()), Scheme::rk2, 0.5);
    EXPECT_EQ(nlp.lower[nlp.state_index(0, 2)], 0.004);
    EXPECT_EQ(nlp.upper[nlp.state_index(0, 4)], 0.0);
    EXPECT_EQ(nlp.lower[nlp.control_index(7, 1)], 0.0);
    EXPECT_EQ(nlp.upper[nlp.control_index(7, 1)], 1.0);
    const Mat U = Mat::Constant(nlp.n_intervals + 1, 2, 0.1);
    const Vec z = nlp.pack(ReducedProblem{nlp}.propagate(U), U);
    EXPECT_LT(nlp.constraint_residual(z).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(transcribe(to_mayer(dengue()), Scheme::euler, 0.3), ValidationError);
    EXPECT_THROW(scheme_from_string("collocation"), ValidationError);
}

TEST(DiscreteAdjoint, GradientMatchesFiniteDifferences) {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> ud(0.1, 0.9);
    // moderate controls: strong mechanical control empties the dengue compartments
    const double scale[] = {0.05, 1.0, 1.0, 1.0};
    const OCProblem problems[] = {shortened(dengue(), 10.0, 40),
                                  shortened(make_problem(preset("capeverde-seirasei-oc")), 10.0, 40),
                                  shortened(make_problem(preset("capeverde-sirasi-oc")), 10.0, 40),
                                  shortened(make_problem(preset("vaccine-epidemic-oc")), 10.0, 100)};
    for (int k = 0; k < 4; ++k) {
        const OCProblem& p = problems[k];
        for (Scheme sc : {Scheme::euler, Scheme::rk2}) {
            const NLPInstance nlp = transcribe(to_mayer(p), sc, p.grid.h());
            const ReducedProblem rp{nlp};
            Mat U(nlp.n_intervals + 1, nlp.nu());
            for (Eigen::Index i = 0; i < U.rows(); ++i)
                for (int j = 0; j < nlp.nu(); ++j)
                    U(i, j) = p.bounds[j].lo + scale[k] * ud(rng) * (p.bounds[j].hi - p.bounds[j].lo);
            const Mat G = rp.gradient(rp.propagate(U), U);
            const Vec u0 = Eigen::Map<const Vec>(U.data(), U.size());
            const Vec fd = fd_gradient(
                [&](const Vec& v) { return rp.objective(rp.propagate(Eigen::Map<const Mat>(v.data(), U.rows(), U.cols()))); },
                u0, 1e-6);
            const Vec g = Eigen::Map<const Vec>(G.data(), G.size());
            EXPECT_LT((g - fd).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff(), 1e-5) << to_string(sc);
        }
    }
}

TEST(SolveDirect, DengueObjective) {
    const OCSolution sol = solve_direct(dengue(), Scheme::euler);
    EXPECT_TRUE(sol.converged);
    EXPECT_GE(sol.objective, 1e-3);
    EXPECT_LE(sol.objective, 6e-3);
    EXPECT_GE(sol.trajectory.controls.minCoeff(), 0.0);
    EXPECT_LE(sol.trajectory.controls.maxCoeff(), 1.0);
    EXPECT_EQ(sol.trajectory.states.cols(), 4);
}

TEST(SolveDirect, CapeVerdeCaseAAgreesWithSweep) {
    const OCProblem prob = make_problem(preset("capeverde-seirasei-oc"));
    const OCSolution direct = solve_direct(prob, Scheme::rk2);
    EXPECT_TRUE(direct.converged);
    EXPECT_NEAR(direct.objective, 0.0470, 0.15 * 0.0470);
    const OCSolution ind = sweep(prob);
    EXPECT_LT(rel_err(direct.objective, ind.objective), 0.15);
}

TEST(SolveDirect, SirAsiCaseA) {
    const OCSolution sol = solve_direct(make_problem(preset("capeverde-sirasi-oc")), Scheme::rk2);
    EXPECT_TRUE(sol.converged);
    EXPECT_NEAR(sol.objective, 0.0669, 0.25 * 0.0669);
    const auto b = preset("capeverde-sirasi-oc").control_bounds();
    for (int j = 0; j < 3; ++j) {
        EXPECT_GE(sol.trajectory.controls.col(j).minCoeff(), b[j].lo);
        EXPECT_LE(sol.trajectory.controls.col(j).maxCoeff(), b[j].hi);
    }
}

TEST(SolveDirect, UnconstrainedPmpExample) {
    const OCSolution sol = solve_direct(demos::pmp_example(2000), Scheme::rk2);
    EXPECT_TRUE(sol.converged);
    double e = 0.0;
    for (int i = 0; i < sol.trajectory.nodes(); ++i)
        e = std::max(e, std::abs(sol.trajectory.controls(i, 0) - (1.0 - std::exp(2.0 - sol.trajectory.times[i]))));
    EXPECT_LT(e, 1e-3);
}

TEST(SolveDirect, ObjectiveNeverIncreases) {
    const OCSolution sol = solve_direct(shortened(dengue(), 26.0, 52), Scheme::euler);
    for (std::size_t i = 1; i < sol.history.size(); ++i)
        EXPECT_LE(sol.history[i].objective, sol.history[i - 1].objective);
}
