#include "support.hpp"

#include <gtest/gtest.h>

using namespace epioc;
using namespace epioc::testing;

namespace {

AnalysisInput input_of(const std::string& name) { return AnalysisInput::from(preset(name)); }

Vec host_vector_base() { return preset("vaccine-epidemic").param_vector().head(12); }

Vec with_extras(const Vec& base, std::initializer_list<double> extra) {
    Vec p(base.size() + static_cast<Eigen::Index>(extra.size()));
    p.head(base.size()) = base;
    Eigen::Index i = base.size();
    for (double v : extra) p[i++] = v;
    return p;
}

// Random valid parameters (and constant controls) for every model with a closed-form R0.
AnalysisInput random_input(ModelId id, std::mt19937& rng) {
    auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    auto hv = [&] {
        Vec p = host_vector_base();
        for (int i = 0; i < 12; ++i)
            if (i != 0 && i != 2 && i != 3) p[i] *= U(0.7, 1.3);
        p[2] = U(0.2, 0.6), p[3] = U(0.2, 0.6);
        return p;
    };
    switch (id) {
    case ModelId::SIS:
    case ModelId::SIR_NODEMO: return {id, (Vec(2) << U(0.1, 3), U(0.05, 1)).finished(), Vec()};
    case ModelId::SIR_DEMO: return {id, (Vec(3) << U(0.1, 3), U(0.05, 1), U(0.001, 0.1)).finished(), Vec()};
    case ModelId::SEIR:
        return {id, (Vec(4) << U(0.1, 3), U(0.1, 2), U(0.05, 1), U(0.001, 0.1)).finished(), Vec()};
    case ModelId::MSEIR:
        return {id, (Vec(5) << U(0.1, 3), U(0.1, 2), U(0.05, 1), U(0.001, 0.1), U(0.1, 2)).finished(), Vec()};
    case ModelId::SEIT:
        return {id,
                (Vec(8) << U(0.1, 3), U(0.1, 3), U(0.1, 2), U(0.05, 1), U(0.05, 1), U(0, 1), U(0.001, 0.1),
                 U(100, 1000))
                    .finished(),
                Vec()};
    case ModelId::RUBELLA:
        return {id, (Vec(6) << U(0.005, 0.05), U(10, 50), U(10, 50), U(0, 1), U(0, 1), U(100, 800)).finished(),
                Vec::Constant(1, U(0, 0.9))};
    case ModelId::SEIR_ASEI:
        return {id, with_extras(hv(), {U(0.1, 0.5), U(0.05, 0.2)}), Vec::Constant(1, U(0, 0.05))};
    case ModelId::SIR_ASI:
        return {id, hv(), (Vec(3) << U(0, 0.1), U(0, 0.05), U(0.3, 1)).finished()};
    case ModelId::SVIR_PEDIATRIC: return {id, with_extras(hv(), {U(0, 1)}), Vec()};
    case ModelId::SVIR_MASS: return {id, with_extras(hv(), {U(0, 0.1)}), Vec()};
    case ModelId::SVIR_IMPERFECT: return {id, with_extras(hv(), {U(0, 0.1), U(0, 1)}), Vec()};
    case ModelId::SVIR_WANING: return {id, with_extras(hv(), {U(0, 0.1), U(0, 0.1)}), Vec()};
    case ModelId::SIR_ASI_VACCINE_CONTROL: return {id, with_extras(hv(), {U(0, 0.1)}), Vec::Constant(1, U(0, 0.2))};
    default: throw std::logic_error("no random draw for this model");
    }
}

std::vector<ModelId> autonomous_models() {
    std::vector<ModelId> out;
    for (ModelId id : kAllModels)
        if (model_info(id).autonomous) out.push_back(id);
    return out;
}

}  // namespace

TEST(R0, ClosedFormReproductions) {
    EXPECT_NEAR(closed_form_r0(input_of("trachoma")).value, 2.76, 0.01);
    EXPECT_NEAR(closed_form_r0(input_of("influenza")).value, 3.652, 0.001);
    EXPECT_NEAR(closed_form_r0(input_of("capeverde-seirasei")).value, 2.396, 0.005);
    EXPECT_NEAR(closed_form_r0(input_of("vaccine-epidemic")).value, 2.46, 0.01);
    EXPECT_NEAR(closed_form_r0(input_of("vaccine-endemic")).value, 1.29, 0.01);
}

TEST(R0, NextGenerationAtBrdfe) {
    const AnalysisInput in = input_of("capeverde-seirasei");
    const auto dfe = relevant_dfe(in);
    EXPECT_EQ(dfe.kind, EquilibriumKind::BRDFE);
    const R0Report r = next_generation_r0(in, dfe);
    EXPECT_NEAR(r.value, 2.396, 0.005);
    EXPECT_EQ(r.method, "next_generation");
    EXPECT_EQ(r.params_hash, closed_form_r0(in).params_hash);
}

TEST(R0, NextGenerationMatchesClosedFormOnRandomDraws) {
    std::mt19937 rng(2024);
    for (ModelId id : autonomous_models()) {
        SCOPED_TRACE(model_info(id).name);
        for (int draw = 0; draw < 50; ++draw) {
            const AnalysisInput in = random_input(id, rng);
            const double cf = closed_form_r0(in).value;
            const double ng = next_generation_r0(in, relevant_dfe(in)).value;
            EXPECT_LT(rel_err(ng, cf), 1e-10) << "draw " << draw;
        }
    }
}

TEST(R0, SeitWithoutPrimaryTransmissionIsZero) {
    std::mt19937 rng(1);
    AnalysisInput in = random_input(ModelId::SEIT, rng);
    in.p[0] = 0.0;
    EXPECT_EQ(next_generation_r0(in, relevant_dfe(in)).value, 0.0);
    EXPECT_EQ(closed_form_r0(in).value, 0.0);
}

TEST(R0, SeasonalModelHasNoThreshold) {
    EXPECT_THROW(closed_form_r0(input_of("dengue-goodwill")), ValidationError);
}

TEST(R0, NeedsSustainableMosquitoes) {
    AnalysisInput in = input_of("capeverde-sirasi");
    in.p[7] = 0.1;  // varphi small: M < 0
    EXPECT_LT(offspring_M(in), 0.0);
    EXPECT_THROW(closed_form_r0(in), ValidationError);
}

TEST(VaccinationR0, Definitions) {
    const Vec base = host_vector_base();
    const double R0 = base_vaccine_r0(base);
    EXPECT_NEAR(R0, 2.46, 0.01);
    EXPECT_DOUBLE_EQ(vaccination_r0(ModelId::SVIR_PEDIATRIC, with_extras(base, {0.0})), R0);
    EXPECT_NEAR(vaccination_r0(ModelId::SVIR_PEDIATRIC, with_extras(base, {0.5})), 0.5 * R0, 1e-14);
    const double mu = base[4];
    EXPECT_NEAR(vaccination_r0(ModelId::SVIR_MASS, with_extras(base, {0.01})), R0 * mu / (mu + 0.01), 1e-14);
}

TEST(VaccinationR0, Monotonicity) {
    const Vec base = host_vector_base();
    double prev = std::numeric_limits<double>::infinity();
    for (double p = 0.0; p <= 1.0; p += 0.1) {
        const double r = vaccination_r0(ModelId::SVIR_PEDIATRIC, with_extras(base, {p}));
        EXPECT_LT(r, prev);
        prev = r;
    }
    prev = std::numeric_limits<double>::infinity();
    for (double psi = 0.0; psi <= 0.1; psi += 0.01) {
        const double r = vaccination_r0(ModelId::SVIR_MASS, with_extras(base, {psi}));
        EXPECT_LT(r, prev);
        prev = r;
        EXPECT_DOUBLE_EQ(vaccination_r0(ModelId::SVIR_WANING, with_extras(base, {psi, 0.3})), r);
    }
    prev = -1.0;
    for (double sigma = 0.0; sigma <= 1.0; sigma += 0.1) {
        const double r = vaccination_r0(ModelId::SVIR_IMPERFECT, with_extras(base, {0.02, sigma}));
        EXPECT_GT(r, prev);
        prev = r;
    }
}

TEST(VaccinationR0, SpectralRadiusMonotoneToo) {
    const Vec base = host_vector_base();
    auto r = [&](ModelId id, std::initializer_list<double> x) {
        return closed_form_r0({id, with_extras(base, x), Vec()}).value;
    };
    EXPECT_GT(r(ModelId::SVIR_PEDIATRIC, {0.2}), r(ModelId::SVIR_PEDIATRIC, {0.4}));
    EXPECT_GT(r(ModelId::SVIR_MASS, {0.001}), r(ModelId::SVIR_MASS, {0.01}));
    EXPECT_LT(r(ModelId::SVIR_IMPERFECT, {0.01, 0.1}), r(ModelId::SVIR_IMPERFECT, {0.01, 0.5}));
    EXPECT_GT(r(ModelId::SVIR_WANING, {0.01, 0.1}), r(ModelId::SVIR_WANING, {0.01, 0.01}));
}

TEST(Critical, PediatricCoverage) {
    const Vec p = with_extras(host_vector_base(), {0.0});
    EXPECT_NEAR(critical_pediatric_coverage(p), 1.0 - 1.0 / 2.46, 0.005);
    const AnalysisInput in{ModelId::SVIR_PEDIATRIC, p, Vec()};
    const double pc = critical_control(in, "p", {0.0, 1.0},
                                       [](const AnalysisInput& a) { return vaccination_r0(a.model, a.p); });
    EXPECT_NEAR(pc, critical_pediatric_coverage(p), 1e-10);
}

TEST(Critical, MassRate) {
    const Vec p = with_extras(host_vector_base(), {0.0});
    const AnalysisInput in{ModelId::SVIR_MASS, p, Vec()};
    const double psi = critical_control(in, "psi", {0.0, 1.0},
                                        [](const AnalysisInput& a) { return vaccination_r0(a.model, a.p); });
    EXPECT_NEAR(psi, critical_mass_rate(p), 1e-12);
}

TEST(Critical, AdulticideThresholdIsTheRootOfR0) {
    // oracle: the closed-form R0 (which agrees with the next-generation radius) is 1 there
    const AnalysisInput in = input_of("capeverde-seirasei");
    const double c = critical_control(in, "c", {0.0, 1.0});
    AnalysisInput at = in;
    at.u[0] = c;
    EXPECT_NEAR(next_generation_r0(at, relevant_dfe(at)).value, 1.0, 1e-9);
    for (double dc : {-1e-3, 1e-3}) {
        AnalysisInput a = in;
        a.u[0] = c + dc;
        const auto pt = classify_stability(a, relevant_dfe(a));
        EXPECT_EQ(pt.stability, dc < 0 ? Stability::unstable : Stability::stable);
    }
}

TEST(Critical, BracketWithoutSignChange) {
    const AnalysisInput in = input_of("capeverde-seirasei");
    EXPECT_THROW(critical_control(in, "m", {1.0, 10.0}), ValidationError);
    EXPECT_THROW(critical_control(in, "zeta", {0.0, 1.0}), ValidationError);
}

TEST(Stability, ScalarDecay) {
    EquilibriumPoint pt;
    pt.state = Vec::Zero(1);
    pt = classify_jacobian(pt, Mat::Constant(1, 1, -1.0));
    EXPECT_EQ(pt.stability, Stability::stable);
    EXPECT_DOUBLE_EQ(pt.leading_eigenvalue_real_part, -1.0);
}

TEST(Stability, CapeVerdeBrdfe) {
    AnalysisInput in = input_of("capeverde-seirasei");
    EXPECT_EQ(classify_stability(in, relevant_dfe(in)).stability, Stability::unstable);
    in.u[0] = 0.157;
    EXPECT_EQ(classify_stability(in, relevant_dfe(in)).stability, Stability::stable);
}

TEST(Stability, DfeSignMatchesR0OnRandomDraws) {
    std::mt19937 rng(99);
    for (ModelId id : autonomous_models()) {
        if (id == ModelId::SIR_NODEMO) continue;  // every S is an equilibrium: a continuum, not isolated
        SCOPED_TRACE(model_info(id).name);
        for (int draw = 0; draw < 20; ++draw) {
            const AnalysisInput in = random_input(id, rng);
            const double R0 = closed_form_r0(in).value;
            if (std::abs(R0 - 1.0) < 1e-3) continue;
            const auto pt = classify_stability(in, relevant_dfe(in));
            EXPECT_EQ(pt.stability, R0 < 1.0 ? Stability::stable : Stability::unstable)
                << "draw " << draw << " R0 " << R0;
        }
    }
}

TEST(Equilibria, SirAsiHasThreePoints) {
    const AnalysisInput in = input_of("capeverde-sirasi");
    EXPECT_NEAR(offspring_M(in), 0.447, 0.001);
    const auto eq = find_equilibria(in);
    ASSERT_EQ(eq.size(), 3u);
    EXPECT_EQ(eq[0].kind, EquilibriumKind::trivial_DFE);
    EXPECT_EQ(eq[1].kind, EquilibriumKind::BRDFE);
    EXPECT_EQ(eq[2].kind, EquilibriumKind::endemic);
    EXPECT_EQ(eq[2].stability, Stability::stable);
}

TEST(Equilibria, OnlyTrivialWithoutMosquitoes) {
    AnalysisInput in = input_of("capeverde-sirasi");
    in.p[7] = 0.1;
    const auto eq = find_equilibria(in);
    ASSERT_EQ(eq.size(), 1u);
    EXPECT_EQ(eq[0].kind, EquilibriumKind::trivial_DFE);
    Vec e1 = Vec::Zero(6);
    e1[0] = in.p[0];
    EXPECT_EQ(eq[0].state, e1);
}

TEST(Equilibria, ResidualsSmallOnPresetsAndDraws) {
    auto check = [](const AnalysisInput& in) {
        for (const auto& e : find_equilibria(in)) {
            const double scale = std::max(1.0, e.state.cwiseAbs().maxCoeff());
            const Vec u = in.u.size() ? in.u : Vec();
            EXPECT_LT(model_rhs(in.model, 0.0, e.state, u, in.p).cwiseAbs().maxCoeff(), 1e-8 * scale)
                << model_info(in.model).name << " " << to_string(e.kind);
            EXPECT_GE(e.state.minCoeff(), -1e-9 * scale);
        }
    };
    for (const char* name : {"trachoma", "influenza", "rubella", "capeverde-seirasei", "capeverde-sirasi",
                             "vaccine-epidemic", "vaccine-endemic"})
        check(input_of(name));
    std::mt19937 rng(5);
    for (ModelId id : autonomous_models())
        for (int draw = 0; draw < 5; ++draw) check(random_input(id, rng));
}

TEST(Equilibria, TrachomaEndemicClosedForm) {
    // SIS: I* = 1 - gamma/beta
    const auto eq = find_equilibria(input_of("trachoma"));
    ASSERT_EQ(eq.size(), 2u);
    EXPECT_NEAR(eq[1].state[1], 1.0 - 0.017 / 0.047, 1e-10);
    EXPECT_EQ(eq[1].stability, Stability::stable);
}
