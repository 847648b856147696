#pragma once

// Threshold analysis: basic reproduction number (closed form and
// next-generation), equilibria, local stability, critical control levels.

#include "epioc/core.hpp"
#include "epioc/integrators.hpp"
#include "epioc/models.hpp"

#include <Eigen/Eigenvalues>

#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace epioc {

struct R0Report {
    double value = 0.0;
    std::string method;  // closed_form | next_generation
    ModelId model = ModelId::SIS;
    std::string params_hash;
};

enum class EquilibriumKind { trivial_DFE, BRDFE, endemic };
enum class Stability { unknown, stable, unstable, marginal };

inline const char* to_string(EquilibriumKind k) {
    switch (k) {
    case EquilibriumKind::trivial_DFE: return "trivial_DFE";
    case EquilibriumKind::BRDFE: return "BRDFE";
    default: return "endemic";
    }
}

inline const char* to_string(Stability s) {
    switch (s) {
    case Stability::stable: return "stable";
    case Stability::unstable: return "unstable";
    case Stability::marginal: return "marginal";
    default: return "unknown";
    }
}

struct EquilibriumPoint {
    Vec state;
    EquilibriumKind kind = EquilibriumKind::trivial_DFE;
    double residual = 0.0;
    Stability stability = Stability::unknown;
    double leading_eigenvalue_real_part = 0.0;
};

/// Model parameters plus the constant control levels at which the analysis
/// is carried out (adulticide c, vaccination u, ...).
struct AnalysisInput {
    ModelId model;
    Vec p;
    Vec u;

    static AnalysisInput from(const Scenario& s) {
        const ModelInfo& mi = s.info();
        Vec u = Eigen::Map<const Vec>(mi.neutral.data(), mi.nu());
        for (int i = 0; i < mi.nu(); ++i) {
            auto it = s.control.levels.find(mi.controls[i]);
            if (it != s.control.levels.end()) u[i] = it->second;
        }
        return {s.model, s.param_vector(), u};
    }
};

namespace detail {

inline std::string params_digest(const Vec& p, const Vec& u) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index i = 0; i < p.size(); ++i) os << p[i] << ';';
    for (Eigen::Index i = 0; i < u.size(); ++i) os << u[i] << ';';
    std::ostringstream hex;
    hex << std::hex << std::hash<std::string>{}(os.str());
    return hex.str();
}

inline void require_autonomous(ModelId id) {
    if (!model_info(id).autonomous)
        throw ValidationError("model " + model_info(id).name + " is seasonally forced; threshold analysis undefined");
}

// Jacobian by forward-mode AD of g: R^n -> R^m.
template <class G>
Mat ad_jacobian(const G& g, const Vec& x, int m) {
    const int n = static_cast<int>(x.size());
    std::vector<ADScalar> z(n), out(m);
    for (int i = 0; i < n; ++i) z[i] = ADScalar(x[i], n, i);
    g(z.data(), out.data());
    Mat J = Mat::Zero(m, n);
    for (int r = 0; r < m; ++r)
        if (out[r].derivatives().size()) J.row(r) = out[r].derivatives().transpose();
    return J;
}


}  // namespace detail

/// Mosquito offspring quantity M; the mosquito population persists iff M > 0.
inline double offspring_M(const AnalysisInput& in) {
    const detail::HostVector h(in.p.data());
    switch (in.model) {
    case ModelId::SEIR_ASEI:
        return h.varphi * h.eta_A - (h.eta_A + h.mu_A) * (h.mu_m + in.u[0]);
    case ModelId::SIR_ASI:
        return h.varphi * h.eta_A - (h.eta_A + h.mu_A + in.u[0]) * (h.mu_m + in.u[1]);
    case ModelId::SVIR_PEDIATRIC:
    case ModelId::SVIR_MASS:
    case ModelId::SVIR_IMPERFECT:
    case ModelId::SVIR_WANING:
    case ModelId::SIR_ASI_VACCINE_CONTROL:
        return h.varphi * h.eta_A - (h.eta_A + h.mu_A) * h.mu_m;
    default:
        throw ValidationError("offspring quantity M is defined for host-vector models only");
    }
}

inline bool is_host_vector(ModelId id) {
    switch (id) {
    case ModelId::SEIR_ASEI:
    case ModelId::SIR_ASI:
    case ModelId::SVIR_PEDIATRIC:
    case ModelId::SVIR_MASS:
    case ModelId::SVIR_IMPERFECT:
    case ModelId::SVIR_WANING:
    case ModelId::SIR_ASI_VACCINE_CONTROL:
        return true;
    default:
        return false;
    }
}

/// Basic reproduction number of the host-vector vaccination models before
/// any vaccination (k B^2 beta_hm beta_mh M / (varphi (eta_h+mu_h) mu_m^2))^(1/2).
inline double base_vaccine_r0(const Vec& p) {
    const detail::HostVector h(p.data());
    const double M = h.varphi * h.eta_A - (h.eta_A + h.mu_A) * h.mu_m;
    if (M <= 0.0) throw ValidationError("mosquito population not sustainable (M <= 0)");
    return std::sqrt(h.k * h.B * h.B * h.bhm * h.bmh * M / (h.varphi * (h.eta_h + h.mu_h) * h.mu_m * h.mu_m));
}

/// Disease-free equilibria in closed form: the trivial one first, then the
/// mosquito-sustaining one when M > 0.
inline std::vector<EquilibriumPoint> disease_free_equilibria(const AnalysisInput& in) {
    detail::require_autonomous(in.model);
    const ModelInfo& mi = model_info(in.model);
    const Vec& p = in.p;
    std::vector<EquilibriumPoint> out;
    auto add = [&](Vec x, EquilibriumKind k) {
        EquilibriumPoint e;
        e.state = std::move(x);
        e.kind = k;
        out.push_back(e);
    };
    Vec x = Vec::Zero(mi.nx());
    switch (in.model) {
    case ModelId::SIS:
    case ModelId::SIR_NODEMO:
    case ModelId::SIR_DEMO:
    case ModelId::SEIR:
        x[0] = 1.0;
        add(x, EquilibriumKind::trivial_DFE);
        return out;
    case ModelId::MSEIR:
        x[1] = 1.0;
        add(x, EquilibriumKind::trivial_DFE);
        return out;
    case ModelId::SEIT:
        x[0] = p[7];
        add(x, EquilibriumKind::trivial_DFE);
        return out;
    case ModelId::RUBELLA:
        x[0] = p[0] / (p[0] + in.u[0]);
        x[3] = 1.0;
        add(x, EquilibriumKind::trivial_DFE);
        return out;
    default:
        break;
    }
    const detail::HostVector h(p.data());
    const double M = offspring_M(in);
    // human disease-free split (S_h, V_h or R_h) in the absence of mosquitoes
    Vec hum = Vec::Zero(mi.nx());
    switch (in.model) {
    case ModelId::SEIR_ASEI:
    case ModelId::SIR_ASI:
        hum[0] = h.N;
        break;
    case ModelId::SVIR_PEDIATRIC:
        hum[0] = (1.0 - p[12]) * h.N;
        hum[1] = p[12] * h.N;
        break;
    case ModelId::SVIR_MASS:
    case ModelId::SVIR_IMPERFECT: {
        const double psi = p[12];
        hum[0] = h.mu_h * h.N / (h.mu_h + psi);
        hum[1] = psi * h.N / (h.mu_h + psi);
        break;
    }
    case ModelId::SVIR_WANING: {
        const double psi = p[12], theta = p[13];
        hum[0] = h.N * (theta + h.mu_h) / (theta + h.mu_h + psi);
        hum[1] = h.N * psi / (theta + h.mu_h + psi);
        break;
    }
    case ModelId::SIR_ASI_VACCINE_CONTROL: {
        const double theta = p[12], v = in.u[0];
        hum[0] = h.N * (theta * v + h.mu_h) / (theta * v + h.mu_h + v);
        hum[2] = h.N * v / (theta * v + h.mu_h + v);
        break;
    }
    default:
        throw ValidationError("no disease-free equilibrium for model " + mi.name);
    }
    add(hum, EquilibriumKind::trivial_DFE);
    if (M <= 0.0) return out;
    Vec br = hum;
    const int a = mi.state_index("A_m"), s = mi.state_index("S_m");
    double alpha = 1.0, kill = 0.0;
    if (in.model == ModelId::SEIR_ASEI) kill = in.u[0];
    if (in.model == ModelId::SIR_ASI) kill = in.u[1], alpha = in.u[2];
    br[a] = alpha * h.k * h.N * M / (h.eta_A * h.varphi);
    br[s] = alpha * h.k * h.N * M / ((h.mu_m + kill) * h.varphi);
    add(br, EquilibriumKind::BRDFE);
    return out;
}

/// The disease-free point the threshold refers to (BRDFE when it exists).
inline EquilibriumPoint relevant_dfe(const AnalysisInput& in) { return disease_free_equilibria(in).back(); }

inline R0Report closed_form_r0(const AnalysisInput& in) {
    detail::require_autonomous(in.model);
    const Vec& p = in.p;
    R0Report r;
    r.method = "closed_form";
    r.model = in.model;
    r.params_hash = detail::params_digest(p, in.u);
    switch (in.model) {
    case ModelId::SIS:
    case ModelId::SIR_NODEMO:
        r.value = p[0] / p[1];
        break;
    case ModelId::SIR_DEMO:
        r.value = p[0] / (p[1] + p[2]);
        break;
    case ModelId::SEIR:
    case ModelId::MSEIR: {
        const double beta = p[0], nu = p[1], gamma = p[2], mu = p[3];
        r.value = beta * nu / ((gamma + mu) * (nu + mu));
        break;
    }
    case ModelId::SEIT: {
        const double b1 = p[0], nu = p[2], r1 = p[3], r2 = p[4], q = p[5], mu = p[6];
        r.value = b1 * nu / ((nu + r1 + mu) * (r2 + mu) - nu * (1.0 - q) * r2);
        break;
    }
    case ModelId::RUBELLA: {
        const double b = p[0], e = p[1], g = p[2], pv = p[3], beta = p[5];
        const double S = b / (b + in.u[0]);
        r.value = (b * pv + beta * S * e / (g + b)) / (e + b);
        break;
    }
    case ModelId::SEIR_ASEI: {
        const detail::HostVector h(p.data());
        const double nu_h = p[12], eta_m = p[13], c = in.u[0];
        const double M = offspring_M(in);
        if (M <= 0.0) throw ValidationError("mosquito population not sustainable (M <= 0)");
        const double Sh0 = h.N, Sm0 = h.k * h.N * M / (h.varphi * (h.mu_m + c));
        const double r2 = h.B * h.B * h.bhm * h.bmh * eta_m * nu_h * Sh0 * Sm0 /
                          (h.N * h.N * (h.eta_h + h.mu_h) * (c + h.mu_m) * (c + eta_m + h.mu_m) * (h.mu_h + nu_h));
        r.value = std::sqrt(r2);
        break;
    }
    case ModelId::SIR_ASI: {
        const detail::HostVector h(p.data());
        const double cm = in.u[1], alpha = in.u[2];
        const double M = offspring_M(in);
        if (M <= 0.0) throw ValidationError("mosquito population not sustainable (M <= 0)");
        const double xi = h.varphi * (h.mu_m + cm) * (h.mu_m + cm) * (h.eta_h + h.mu_h);
        const double chi = alpha * h.k * h.B * h.B * h.bhm * h.bmh * M;
        r.value = std::sqrt(chi / xi);
        break;
    }
    case ModelId::SVIR_PEDIATRIC:
    case ModelId::SVIR_MASS:
    case ModelId::SVIR_IMPERFECT:
    case ModelId::SVIR_WANING:
    case ModelId::SIR_ASI_VACCINE_CONTROL: {
        // host-side factor enters one of the two transmission legs, hence the root
        const Vec dfe = disease_free_equilibria(in).front().state;
        const double N = p[0];
        double susceptible = dfe[0];
        if (in.model == ModelId::SVIR_IMPERFECT) susceptible += p[13] * dfe[1];
        r.value = base_vaccine_r0(p) * std::sqrt(susceptible / N);
        break;
    }
    default:
        throw ValidationError("no closed-form R0 for model " + model_info(in.model).name);
    }
    return r;
}

/// Spectral radius of F V^{-1}, with F and V the Jacobians of the
/// new-infection and transition terms at the disease-free point.
inline R0Report next_generation_r0(const AnalysisInput& in, const EquilibriumPoint& dfe) {
    detail::require_autonomous(in.model);
    const ModelInfo& mi = model_info(in.model);
    if (dfe.kind == EquilibriumKind::endemic) throw ValidationError("next-generation method needs a disease-free point");
    const int n = mi.nx(), m = static_cast<int>(mi.infected.size());
    const Vec f0 = model_rhs(in.model, 0.0, dfe.state, in.u, in.p);
    const double scale = std::max(1.0, dfe.state.cwiseAbs().maxCoeff());
    if (f0.cwiseAbs().maxCoeff() > 1e-8 * scale) throw ValidationError("disease-free point residual above tolerance");
    const Mat Jf = detail::ad_jacobian(
        [&](const ADScalar* x, ADScalar* out) {
            std::vector<ADScalar> u(mi.nu());
            for (int j = 0; j < mi.nu(); ++j) u[j] = ADScalar(in.u[j], ADDer::Zero(n));
            detail::rhs(in.model, 0.0, x, u.data(), in.p.data(), out);
        },
        dfe.state, n);
    const Mat JF = detail::ad_jacobian(
        [&](const ADScalar* x, ADScalar* out) { detail::infections(in.model, x, in.p.data(), out); }, dfe.state, m);
    Mat F(m, m), V(m, m);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            F(r, c) = JF(r, mi.infected[c]);
            V(r, c) = JF(r, mi.infected[c]) - Jf(mi.infected[r], mi.infected[c]);
        }
    Eigen::FullPivLU<Mat> lu(V);
    if (!lu.isInvertible()) throw ValidationError("transition matrix V is singular");
    const Mat K = F * lu.inverse();
    // Host-vector NGMs are imprimitive (eigenvalues +-R0), so plain power
    // iteration oscillates; take the spectral radius from the full spectrum.
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(K, false).eigenvalues();
    R0Report r;
    r.value = ev.cwiseAbs().maxCoeff();
    r.method = "next_generation";
    r.model = in.model;
    r.params_hash = detail::params_digest(in.p, in.u);
    return r;
}

/// Vaccination thresholds as defined for the SVIR variants:
/// R0^p = (1-p) R0, R0^psi = R0 mu_h/(mu_h+psi), R0^sigma = (1+sigma psi) R0^psi,
/// R0^theta = R0^psi. These are coverage heuristics; the spectral radius of
/// the same systems is closed_form_r0 / next_generation_r0.
inline double vaccination_r0(ModelId id, const Vec& p) {
    const double R0 = base_vaccine_r0(p), mu_h = p[4];
    switch (id) {
    case ModelId::SVIR_PEDIATRIC: return (1.0 - p[12]) * R0;
    case ModelId::SVIR_MASS:
    case ModelId::SVIR_WANING: return R0 * mu_h / (mu_h + p[12]);
    case ModelId::SVIR_IMPERFECT: return (1.0 + p[13] * p[12]) * R0 * mu_h / (mu_h + p[12]);
    default: throw ValidationError("vaccination R0 defined for SVIR variants only");
    }
}

/// Critical newborn coverage p_c = 1 - 1/R0.
inline double critical_pediatric_coverage(const Vec& p) { return 1.0 - 1.0 / base_vaccine_r0(p); }

/// Critical mass-vaccination rate psi_c = (R0 - 1) mu_h.
inline double critical_mass_rate(const Vec& p) { return (base_vaccine_r0(p) - 1.0) * p[4]; }

/// Knob value at which R0 crosses 1, by bisection on [lo, hi]. The knob may
/// name a parameter or a control.
inline double critical_control(const AnalysisInput& in, const std::string& knob, Bound bracket,
                               const std::function<double(const AnalysisInput&)>& r0 = {}) {
    const ModelInfo& mi = model_info(in.model);
    const int pi = mi.param_index(knob), ci = mi.control_index(knob);
    if (pi < 0 && ci < 0) throw ValidationError("unknown knob '" + knob + "' for model " + mi.name);
    auto eval = [&](double v) {
        AnalysisInput a = in;
        if (pi >= 0) a.p[pi] = v;
        else a.u[ci] = v;
        return (r0 ? r0(a) : closed_form_r0(a).value) - 1.0;
    };
    double lo = bracket.lo, hi = bracket.hi;
    double flo = eval(lo), fhi = eval(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) throw ValidationError("bracket does not straddle R0 = 1 for knob '" + knob + "'");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = eval(mid);
        if (std::abs(fm) < 1e-8 && hi - lo < 1e-12) return mid;
        if ((fm > 0.0) == (flo > 0.0))
            lo = mid, flo = fm;
        else
            hi = mid;
        if (hi - lo <= 1e-15 * std::max(1.0, std::abs(mid))) break;
    }
    return 0.5 * (lo + hi);
}

inline EquilibriumPoint classify_jacobian(EquilibriumPoint pt, const Mat& J, double tol = 1e-7) {
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(J, false).eigenvalues();
    double lead = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i) lead = std::max(lead, ev[i].real());
    pt.leading_eigenvalue_real_part = lead;
    pt.stability = lead < -tol ? Stability::stable : (lead > tol ? Stability::unstable : Stability::marginal);
    return pt;
}

/// Fills in stability from the eigenvalues of a central-difference Jacobian.
/// Linear conserved quantities are projected out first; otherwise their zero
/// eigenvalue would make every point marginal.
inline EquilibriumPoint classify_stability(const AnalysisInput& in, EquilibriumPoint pt, double tol = 1e-7) {
    const ModelInfo& mi = model_info(in.model);
    const int n = mi.nx();
    Mat J(n, n);
    for (int j = 0; j < n; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(pt.state[j]));
        Vec xp = pt.state, xm = pt.state;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (model_rhs(in.model, 0.0, xp, in.u, in.p) - model_rhs(in.model, 0.0, xm, in.u, in.p)) / (2.0 * h);
    }
    Mat Jr = J;
    if (!mi.invariants.empty()) {
        Mat C(n, static_cast<int>(mi.invariants.size()));
        for (std::size_t c = 0; c < mi.invariants.size(); ++c)
            for (int i = 0; i < n; ++i) C(i, c) = mi.invariants[c][i];
        Eigen::HouseholderQR<Mat> qr(C);
        const Mat Q = qr.householderQ() * Mat::Identity(n, n);
        const int k = static_cast<int>(C.cols());
        const Mat B = Q.rightCols(n - k);
        Jr = B.transpose() * J * B;
    }
    return classify_jacobian(std::move(pt), Jr, tol);
}


namespace detail {

// Damped Gauss-Newton on rhs(x) = 0, with conserved totals pinned to their
// seed values. Returns nullopt when the residual does not drop below tol.
inline std::optional<Vec> newton_equilibrium(const AnalysisInput& in, Vec x, double tol, int max_iter = 100) {
    const ModelInfo& mi = model_info(in.model);
    const int n = mi.nx(), k = static_cast<int>(mi.invariants.size());
    Mat C(k, n);
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < n; ++i) C(c, i) = mi.invariants[c][i];
    const Vec totals = C * x;
    Vec sc = Vec::Ones(n);
    if (mi.normalizable) sc = normalization_scales(in.model, in.p).cwiseInverse();
    auto residual = [&](const Vec& y) {
        Vec r(n + k);
        r.head(n) = model_rhs(in.model, 0.0, y, in.u, in.p).cwiseQuotient(sc);
        if (k) r.tail(k) = C * y - totals;
        return r;
    };
    Vec r = residual(x);
    for (int it = 0; it < max_iter; ++it) {
        if (r.head(n).cwiseProduct(sc).cwiseAbs().maxCoeff() < tol) return x;
        Mat J(n + k, n);
        J.topRows(n) = ad_jacobian(
            [&](const ADScalar* z, ADScalar* out) {
                std::vector<ADScalar> u(mi.nu());
                for (int j = 0; j < mi.nu(); ++j) u[j] = ADScalar(in.u[j], ADDer::Zero(n));
                detail::rhs(in.model, 0.0, z, u.data(), in.p.data(), out);
            },
            x, n);
        for (int i = 0; i < n; ++i) J.row(i) /= sc[i];
        if (k) J.bottomRows(k) = C;
        const Vec dx = J.colPivHouseholderQr().solve(-r);
        double step = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls) {
            const Vec xn = x + step * dx;
            const Vec rn = residual(xn);
            if (rn.allFinite() && rn.norm() < r.norm()) {
                x = xn;
                r = rn;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    if (r.head(n).cwiseProduct(sc).cwiseAbs().maxCoeff() < tol) return x;
    return std::nullopt;
}

}  // namespace detail

inline double equilibrium_scale(const Vec& x) { return std::max(1.0, x.cwiseAbs().maxCoeff()); }

/// All biologically meaningful equilibria with stability filled in.
/// Endemic points are located by Newton from a late-time trajectory seed and
/// accepted only after their residual is checked.
inline std::vector<EquilibriumPoint> find_equilibria(const AnalysisInput& in) {
    const ModelInfo& mi = model_info(in.model);
    std::vector<EquilibriumPoint> out = disease_free_equilibria(in);
    for (auto& e : out) {
        e.residual = model_rhs(in.model, 0.0, e.state, in.u, in.p).cwiseAbs().maxCoeff();
        e = classify_stability(in, e);
    }
    const bool conservative_without_turnover = in.model == ModelId::SIR_NODEMO;
    double R0 = 0.0;
    try {
        R0 = closed_form_r0(in).value;
    } catch (const ValidationError&) {
        return out;
    }
    if (conservative_without_turnover || R0 <= 1.0) return out;

    // seed: run from the relevant DFE with a small infected perturbation
    Vec x0 = out.back().state;
    const double scale = equilibrium_scale(x0);
    for (int i : mi.infected) x0[i] += 1e-3 * scale;
    // keep conserved totals: the infection is taken out of the susceptibles
    if (!mi.invariants.empty()) x0[0] -= 1e-3 * scale * static_cast<double>(mi.infected.size());
    double slow = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < in.p.size(); ++i) {
        const std::string& nm = mi.params[i];
        if (nm.rfind("mu", 0) == 0 || nm == "gamma" || nm == "b") slow = std::min(slow, in.p[i] > 0 ? in.p[i] : slow);
    }
    const double horizon = std::isfinite(slow) ? 20.0 / slow : 1e4;
    TimeGrid g{0.0, horizon, 200, {}};
    Vec seed = x0;
    try {
        const Mat U = in.u.size() ? Mat(in.u.transpose().replicate(g.nodes(), 1)) : Mat(g.nodes(), 0);
        const auto tr = integrate(
            [&](double t, const Vec& x, const Vec& u, Vec& dx) { dx = model_rhs(in.model, t, x, u, in.p); }, g, x0,
            U, Method::rk45);
        seed = tr.state(tr.nodes() - 1);
    } catch (const IntegrationError&) {
    }
    const double tol = 1e-8 * scale;
    auto root = detail::newton_equilibrium(in, seed, tol);
    if (!root) return out;
    bool infected = false;
    for (int i : mi.infected) infected = infected || (*root)[i] > 1e-9 * scale;
    if (!infected || (root->array() < -1e-9 * scale).any()) return out;
    EquilibriumPoint e;
    e.state = *root;
    e.kind = EquilibriumKind::endemic;
    e.residual = model_rhs(in.model, 0.0, e.state, in.u, in.p).cwiseAbs().maxCoeff();
    out.push_back(classify_stability(in, e));
    return out;
}

}  // namespace epioc
