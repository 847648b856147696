#pragma once

// Model catalog: metadata, templated right-hand sides and running costs, and
// the Dynamics interface that the integrators and optimal-control solvers use.

#include "epioc/types.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace epioc {

enum class ModelId {
    SIS,
    SIR_NODEMO,
    SIR_DEMO,
    SEIR,
    MSEIR,
    SEIT,
    DENGUE_GOODWILL,
    SEIR_ASEI,
    SIR_ASI,
    SVIR_PEDIATRIC,
    SVIR_MASS,
    SVIR_IMPERFECT,
    SVIR_WANING,
    SIR_ASI_VACCINE_CONTROL,
    RUBELLA,
};

inline constexpr std::array<ModelId, 15> kAllModels = {
    ModelId::SIS,         ModelId::SIR_NODEMO,     ModelId::SIR_DEMO,
    ModelId::SEIR,        ModelId::MSEIR,          ModelId::SEIT,
    ModelId::DENGUE_GOODWILL, ModelId::SEIR_ASEI,  ModelId::SIR_ASI,
    ModelId::SVIR_PEDIATRIC,  ModelId::SVIR_MASS,  ModelId::SVIR_IMPERFECT,
    ModelId::SVIR_WANING, ModelId::SIR_ASI_VACCINE_CONTROL, ModelId::RUBELLA,
};

struct ModelInfo {
    ModelId id;
    std::string name;
    std::vector<std::string> states;
    std::vector<std::string> controls;
    std::vector<std::string> params;
    std::vector<std::string> weights;
    std::vector<Bound> limits;     // admissible control range
    std::vector<double> neutral;   // control values meaning "no intervention"
    std::vector<int> infected;     // infected compartments for the next-generation method
    std::vector<std::vector<double>> invariants;  // linear conserved quantities c.x
    std::string unit;
    bool oc = false;
    bool normalizable = false;
    bool autonomous = true;

    int nx() const { return static_cast<int>(states.size()); }
    int nu() const { return static_cast<int>(controls.size()); }

    int param_index(std::string_view n) const {
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i] == n) return static_cast<int>(i);
        return -1;
    }
    int control_index(std::string_view n) const {
        for (std::size_t i = 0; i < controls.size(); ++i)
            if (controls[i] == n) return static_cast<int>(i);
        return -1;
    }
    int state_index(std::string_view n) const {
        for (std::size_t i = 0; i < states.size(); ++i)
            if (states[i] == n) return static_cast<int>(i);
        return -1;
    }
    int weight_index(std::string_view n) const {
        for (std::size_t i = 0; i < weights.size(); ++i)
            if (weights[i] == n) return static_cast<int>(i);
        return -1;
    }

    /// State names of the fractional (normalized) form: S_h -> s_h.
    std::vector<std::string> normalized_states() const {
        std::vector<std::string> out;
        for (auto s : states) {
            if (!s.empty()) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
            out.push_back(s);
        }
        return out;
    }
};

namespace detail {

inline const std::vector<std::string> kHostVector = {
    "N_h", "B", "beta_mh", "beta_hm", "mu_h", "eta_h", "mu_m", "varphi", "mu_A", "eta_A", "m", "k"};

inline std::vector<std::string> host_vector_plus(std::vector<std::string> extra) {
    auto v = kHostVector;
    v.insert(v.end(), extra.begin(), extra.end());
    return v;
}

inline std::vector<ModelInfo> build_catalog() {
    std::vector<ModelInfo> c;
    const Bound unit{0.0, 1.0};

    c.push_back({ModelId::SIS, "SIS", {"S", "I"}, {}, {"beta", "gamma"}, {}, {}, {}, {1},
                 {{1, 1}}, "years"});
    c.push_back({ModelId::SIR_NODEMO, "SIR_NODEMO", {"S", "I", "R"}, {}, {"beta", "gamma"}, {}, {}, {},
                 {1}, {{1, 1, 1}}, "days"});
    c.push_back({ModelId::SIR_DEMO, "SIR_DEMO", {"S", "I", "R"}, {}, {"beta", "gamma", "mu"}, {}, {},
                 {}, {1}, {}, "years"});
    c.push_back({ModelId::SEIR, "SEIR", {"S", "E", "I", "R"}, {}, {"beta", "nu", "gamma", "mu"}, {}, {},
                 {}, {1, 2}, {}, "years"});
    c.push_back({ModelId::MSEIR, "MSEIR", {"M", "S", "E", "I", "R"}, {},
                 {"beta", "nu", "gamma", "mu", "delta"}, {}, {}, {}, {2, 3}, {}, "years"});
    c.push_back({ModelId::SEIT, "SEIT", {"S", "E", "I", "T"}, {},
                 {"beta1", "beta2", "nu", "r1", "r2", "q", "mu", "N"}, {}, {}, {}, {1, 2}, {}, "years"});

    ModelInfo g{ModelId::DENGUE_GOODWILL, "DENGUE_GOODWILL", {"x1", "x2", "x3", "x4"}, {"u1", "u2"},
                {"alpha_R", "alpha_M", "beta", "eta", "mu", "rho", "theta", "tau", "phi", "omega", "P"},
                {"gamma_D", "gamma_S", "gamma_E"}, {unit, unit}, {0.0, 0.0}, {}, {}, "weeks"};
    g.oc = true;
    g.autonomous = false;
    c.push_back(g);

    ModelInfo a{ModelId::SEIR_ASEI, "SEIR_ASEI",
                {"S_h", "E_h", "I_h", "R_h", "A_m", "S_m", "E_m", "I_m"}, {"c"},
                host_vector_plus({"nu_h", "eta_m"}), {"gamma_D", "gamma_S"}, {unit}, {0.0},
                {1, 2, 6, 7}, {}, "days"};
    a.oc = true;
    a.normalizable = true;
    c.push_back(a);

    ModelInfo s{ModelId::SIR_ASI, "SIR_ASI", {"S_h", "I_h", "R_h", "A_m", "S_m", "I_m"},
                {"c_A", "c_m", "alpha"}, kHostVector, {"gamma_D", "gamma_S", "gamma_L", "gamma_E"},
                {unit, unit, Bound{0.01, 1.0}}, {0.0, 0.0, 1.0}, {1, 5}, {}, "days"};
    s.oc = true;
    s.normalizable = true;
    c.push_back(s);

    const std::vector<std::string> svir = {"S_h", "V_h", "I_h", "R_h", "A_m", "S_m", "I_m"};
    const std::pair<ModelId, std::vector<std::string>> variants[] = {
        {ModelId::SVIR_PEDIATRIC, {"p"}},
        {ModelId::SVIR_MASS, {"psi"}},
        {ModelId::SVIR_IMPERFECT, {"psi", "sigma"}},
        {ModelId::SVIR_WANING, {"psi", "theta"}},
    };
    const char* names[] = {"SVIR_PEDIATRIC", "SVIR_MASS", "SVIR_IMPERFECT", "SVIR_WANING"};
    for (int i = 0; i < 4; ++i) {
        ModelInfo v{variants[i].first, names[i], svir, {}, host_vector_plus(variants[i].second), {},
                    {}, {}, {2, 6}, {}, "days"};
        v.normalizable = true;
        c.push_back(v);
    }

    ModelInfo vc{ModelId::SIR_ASI_VACCINE_CONTROL, "SIR_ASI_VACCINE_CONTROL",
                 {"S_h", "I_h", "R_h", "A_m", "S_m", "I_m"}, {"u"}, host_vector_plus({"theta"}),
                 {"gamma_D", "gamma_V"}, {unit}, {0.0}, {1, 5}, {}, "days"};
    vc.oc = true;
    vc.normalizable = true;
    c.push_back(vc);

    ModelInfo r{ModelId::RUBELLA, "RUBELLA", {"S", "E", "I", "N"}, {"u"},
                {"b", "e", "g", "p", "q", "beta"}, {"A"}, {Bound{0.0, 0.9}}, {0.0}, {1, 2}, {}, "years"};
    r.oc = true;
    c.push_back(r);
    return c;
}

}  // namespace detail

inline const ModelInfo& model_info(ModelId id) {
    static const std::vector<ModelInfo> catalog = detail::build_catalog();
    for (const auto& m : catalog)
        if (m.id == id) return m;
    throw ValidationError("unknown model id");
}

inline std::string to_string(ModelId id) { return model_info(id).name; }

inline ModelId model_from_string(std::string_view s) {
    for (auto id : kAllModels)
        if (model_info(id).name == s) return id;
    throw ValidationError("unknown model '" + std::string(s) + "'");
}

namespace detail {

// Unpacks the twelve shared host-vector parameters.
struct HostVector {
    double N, B, bmh, bhm, mu_h, eta_h, mu_m, varphi, mu_A, eta_A, m, k;
    explicit HostVector(const double* p)
        : N(p[0]), B(p[1]), bmh(p[2]), bhm(p[3]), mu_h(p[4]), eta_h(p[5]), mu_m(p[6]),
          varphi(p[7]), mu_A(p[8]), eta_A(p[9]), m(p[10]), k(p[11]) {}
};

template <class T>
void rhs(ModelId id, double t, const T* x, const T* u, const double* p, T* dx) {
    using std::sin;
    switch (id) {
    case ModelId::SIS: {
        const double beta = p[0], gamma = p[1];
        dx[0] = gamma * x[1] - beta * x[0] * x[1];
        dx[1] = beta * x[0] * x[1] - gamma * x[1];
        return;
    }
    case ModelId::SIR_NODEMO: {
        const double beta = p[0], gamma = p[1];
        dx[0] = -beta * x[0] * x[1];
        dx[1] = beta * x[0] * x[1] - gamma * x[1];
        dx[2] = gamma * x[1];
        return;
    }
    case ModelId::SIR_DEMO: {
        const double beta = p[0], gamma = p[1], mu = p[2];
        dx[0] = mu - beta * x[0] * x[1] - mu * x[0];
        dx[1] = beta * x[0] * x[1] - (gamma + mu) * x[1];
        dx[2] = gamma * x[1] - mu * x[2];
        return;
    }
    case ModelId::SEIR: {
        const double beta = p[0], nu = p[1], gamma = p[2], mu = p[3];
        dx[0] = mu - (beta * x[2] + mu) * x[0];
        dx[1] = beta * x[0] * x[2] - (nu + mu) * x[1];
        dx[2] = nu * x[1] - (gamma + mu) * x[2];
        dx[3] = gamma * x[2] - mu * x[3];
        return;
    }
    case ModelId::MSEIR: {
        // Newborns of susceptible mothers enter S, the rest enter M.
        const double beta = p[0], nu = p[1], gamma = p[2], mu = p[3], delta = p[4];
        dx[0] = mu * (1.0 - x[1]) - (delta + mu) * x[0];
        dx[1] = delta * x[0] - beta * x[1] * x[3];
        dx[2] = beta * x[1] * x[3] - (nu + mu) * x[2];
        dx[3] = nu * x[2] - (gamma + mu) * x[3];
        dx[4] = gamma * x[3] - mu * x[4];
        return;
    }
    case ModelId::SEIT: {
        const double b1 = p[0], b2 = p[1], nu = p[2], r1 = p[3], r2 = p[4], q = p[5], mu = p[6],
                     N = p[7];
        dx[0] = mu * N - (b1 * x[2] / N + mu) * x[0];
        dx[1] = b1 * x[2] * x[0] / N + b2 * x[2] * x[3] / N + (1.0 - q) * r2 * x[2] -
                (nu + r1 + mu) * x[1];
        dx[2] = nu * x[1] - (r2 + mu) * x[2];
        dx[3] = r1 * x[1] + q * r2 * x[2] - (b2 * x[2] / N + mu) * x[3];
        return;
    }
    case ModelId::DENGUE_GOODWILL: {
        const double aR = p[0], aM = p[1], beta = p[2], eta = p[3], mu = p[4], rho = p[5],
                     theta = p[6], tau = p[7], phi = p[8], omega = p[9], P = p[10];
        const T growth = aR * (1.0 - mu * sin(omega * t + phi)) - aM - x[3];
        dx[0] = growth * x[0] - u[0];
        dx[1] = growth * x[1] + beta * (x[0] - x[1]) * x[2] - u[0];
        dx[2] = -eta * x[2] + rho * x[1] * (P - x[2]);
        dx[3] = -tau * x[3] + theta * x[2] + u[1];
        return;
    }
    case ModelId::SEIR_ASEI: {
        const HostVector h(p);
        const double nu_h = p[12], eta_m = p[13];
        const T& c = u[0];
        const T force_h = h.B * h.bmh * x[7] / h.N;
        const T force_m = h.B * h.bhm * x[2] / h.N;
        dx[0] = h.mu_h * h.N - (force_h + h.mu_h) * x[0];
        dx[1] = force_h * x[0] - (nu_h + h.mu_h) * x[1];
        dx[2] = nu_h * x[1] - (h.eta_h + h.mu_h) * x[2];
        dx[3] = h.eta_h * x[2] - h.mu_h * x[3];
        dx[4] = h.varphi * (1.0 - x[4] / (h.k * h.N)) * (x[5] + x[6] + x[7]) -
                (h.eta_A + h.mu_A) * x[4];
        dx[5] = h.eta_A * x[4] - (force_m + h.mu_m) * x[5] - c * x[5];
        dx[6] = force_m * x[5] - (h.mu_m + eta_m) * x[6] - c * x[6];
        dx[7] = eta_m * x[6] - h.mu_m * x[7] - c * x[7];
        return;
    }
    case ModelId::SIR_ASI: {
        const HostVector h(p);
        const T &cA = u[0], &cm = u[1], &alpha = u[2];
        const T force_h = h.B * h.bmh * x[5] / h.N;
        const T force_m = h.B * h.bhm * x[1] / h.N;
        dx[0] = h.mu_h * h.N - (force_h + h.mu_h) * x[0];
        dx[1] = force_h * x[0] - (h.eta_h + h.mu_h) * x[1];
        dx[2] = h.eta_h * x[1] - h.mu_h * x[2];
        dx[3] = h.varphi * (1.0 - x[3] / (alpha * h.k * h.N)) * (x[4] + x[5]) -
                (h.eta_A + h.mu_A + cA) * x[3];
        dx[4] = h.eta_A * x[3] - (force_m + h.mu_m + cm) * x[4];
        dx[5] = force_m * x[4] - (h.mu_m + cm) * x[5];
        return;
    }
    case ModelId::SVIR_PEDIATRIC:
    case ModelId::SVIR_MASS:
    case ModelId::SVIR_IMPERFECT:
    case ModelId::SVIR_WANING: {
        const HostVector h(p);
        const T force_h = h.B * h.bmh * x[6] / h.N;
        const T force_m = h.B * h.bhm * x[2] / h.N;
        if (id == ModelId::SVIR_PEDIATRIC) {
            const double pv = p[12];
            dx[0] = (1.0 - pv) * h.mu_h * h.N - (force_h + h.mu_h) * x[0];
            dx[1] = pv * h.mu_h * h.N - h.mu_h * x[1];
            dx[2] = force_h * x[0] - (h.eta_h + h.mu_h) * x[2];
        } else if (id == ModelId::SVIR_MASS) {
            const double psi = p[12];
            dx[0] = h.mu_h * h.N - (force_h + psi + h.mu_h) * x[0];
            dx[1] = psi * x[0] - h.mu_h * x[1];
            dx[2] = force_h * x[0] - (h.eta_h + h.mu_h) * x[2];
        } else if (id == ModelId::SVIR_IMPERFECT) {
            const double psi = p[12], sigma = p[13];
            dx[0] = h.mu_h * h.N - (force_h + psi + h.mu_h) * x[0];
            dx[1] = psi * x[0] - (sigma * force_h + h.mu_h) * x[1];
            dx[2] = force_h * (x[0] + sigma * x[1]) - (h.eta_h + h.mu_h) * x[2];
        } else {
            const double psi = p[12], theta = p[13];
            dx[0] = h.mu_h * h.N + theta * x[1] - (force_h + psi + h.mu_h) * x[0];
            dx[1] = psi * x[0] - (theta + h.mu_h) * x[1];
            dx[2] = force_h * x[0] - (h.eta_h + h.mu_h) * x[2];
        }
        dx[3] = h.eta_h * x[2] - h.mu_h * x[3];
        dx[4] = h.varphi * (1.0 - x[4] / (h.k * h.N)) * (x[5] + x[6]) - (h.eta_A + h.mu_A) * x[4];
        dx[5] = h.eta_A * x[4] - (force_m + h.mu_m) * x[5];
        dx[6] = force_m * x[5] - h.mu_m * x[6];
        return;
    }
    case ModelId::SIR_ASI_VACCINE_CONTROL: {
        const HostVector h(p);
        const double theta = p[12];
        const T& v = u[0];
        const T force_h = h.B * h.bmh * x[5] / h.N;
        const T force_m = h.B * h.bhm * x[1] / h.N;
        dx[0] = h.mu_h * h.N - (force_h + h.mu_h + v) * x[0] + theta * v * x[2];
        dx[1] = force_h * x[0] - (h.eta_h + h.mu_h) * x[1];
        dx[2] = h.eta_h * x[1] + v * x[0] - (theta * v + h.mu_h) * x[2];
        dx[3] = h.varphi * (1.0 - x[3] / (h.k * h.N)) * (x[4] + x[5]) - (h.eta_A + h.mu_A) * x[3];
        dx[4] = h.eta_A * x[3] - (force_m + h.mu_m) * x[4];
        dx[5] = force_m * x[4] - h.mu_m * x[5];
        return;
    }
    case ModelId::RUBELLA: {
        const double b = p[0], e = p[1], g = p[2], pv = p[3], q = p[4], beta = p[5];
        dx[0] = b - b * (pv * x[1] + q * x[2]) - b * x[0] - beta * x[0] * x[2] - u[0] * x[0];
        dx[1] = b * pv * x[1] + beta * x[0] * x[2] - (e + b) * x[1];
        dx[2] = e * x[1] - (g + b) * x[2];
        dx[3] = b - b * x[3];
        return;
    }
    }
}

template <class T>
T running_cost(ModelId id, const T* x, const T* u, const double* w) {
    switch (id) {
    case ModelId::DENGUE_GOODWILL:
        return w[0] * x[2] * x[2] + w[1] * u[0] * u[0] + w[2] * u[1] * u[1];
    case ModelId::SEIR_ASEI:
        return w[0] * x[2] * x[2] + w[1] * u[0] * u[0];
    case ModelId::SIR_ASI: {
        const T gap = 1.0 - u[2];
        return w[0] * x[1] * x[1] + w[1] * u[1] * u[1] + w[2] * u[0] * u[0] + w[3] * gap * gap;
    }
    case ModelId::SIR_ASI_VACCINE_CONTROL:
        return w[0] * x[1] * x[1] + w[1] * u[0] * u[0];
    case ModelId::RUBELLA:
        return w[0] * x[2] + u[0] * u[0];
    default:
        return T(0.0);
    }
}

// New-infection terms, one per entry of ModelInfo::infected.
template <class T>
void infections(ModelId id, const T* x, const double* p, T* F) {
    switch (id) {
    case ModelId::SIS:
    case ModelId::SIR_NODEMO:
    case ModelId::SIR_DEMO:
        F[0] = p[0] * x[0] * x[1];
        return;
    case ModelId::SEIR:
        F[0] = p[0] * x[0] * x[2];
        F[1] = T(0.0);
        return;
    case ModelId::MSEIR:
        F[0] = p[0] * x[1] * x[3];
        F[1] = T(0.0);
        return;
    case ModelId::SEIT:
        F[0] = p[0] * x[2] * x[0] / p[7] + p[1] * x[2] * x[3] / p[7];
        F[1] = T(0.0);
        return;
    case ModelId::SEIR_ASEI: {
        const HostVector h(p);
        F[0] = h.B * h.bmh * x[7] / h.N * x[0];
        F[1] = T(0.0);
        F[2] = h.B * h.bhm * x[2] / h.N * x[5];
        F[3] = T(0.0);
        return;
    }
    case ModelId::SIR_ASI:
    case ModelId::SIR_ASI_VACCINE_CONTROL: {
        const HostVector h(p);
        F[0] = h.B * h.bmh * x[5] / h.N * x[0];
        F[1] = h.B * h.bhm * x[1] / h.N * x[4];
        return;
    }
    case ModelId::SVIR_PEDIATRIC:
    case ModelId::SVIR_MASS:
    case ModelId::SVIR_WANING:
    case ModelId::SVIR_IMPERFECT: {
        const HostVector h(p);
        const double sigma = id == ModelId::SVIR_IMPERFECT ? p[13] : 0.0;
        F[0] = h.B * h.bmh * x[6] / h.N * (x[0] + sigma * x[1]);
        F[1] = h.B * h.bhm * x[2] / h.N * x[5];
        return;
    }
    case ModelId::RUBELLA:
        F[0] = p[0] * p[3] * x[1] + p[5] * x[0] * x[2];
        F[1] = T(0.0);
        return;
    case ModelId::DENGUE_GOODWILL:
        return;
    }
}

}  // namespace detail

/// Per-state factors mapping counts to fractions (x_norm = scale .* x).
inline Vec normalization_scales(ModelId id, const Vec& p) {
    const ModelInfo& mi = model_info(id);
    if (!mi.normalizable) throw ValidationError("model " + mi.name + " has no normalized form");
    const double N = p[0], m = p[10], k = p[11];
    Vec s(mi.nx());
    for (int i = 0; i < mi.nx(); ++i) {
        const std::string& n = mi.states[i];
        if (n.size() > 2 && n.substr(n.size() - 2) == "_h")
            s[i] = 1.0 / N;
        else if (n == "A_m")
            s[i] = 1.0 / (k * N);
        else
            s[i] = 1.0 / (m * N);
    }
    return s;
}

using ADDer = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 24, 1>;
using ADScalar = Eigen::AutoDiffScalar<ADDer>;

/// Continuous-time controlled system with a Lagrange running cost and an
/// optional terminal payoff.
class Dynamics {
public:
    virtual ~Dynamics() = default;

    virtual int nx() const = 0;
    virtual int nu() const = 0;
    virtual void rhs(double t, const Vec& x, const Vec& u, Vec& dx) const = 0;
    virtual double running_cost(double t, const Vec& x, const Vec& u) const = 0;

    /// fx = df/dx, fu = df/du, lx = dL/dx, lu = dL/du.
    virtual void linearize(double t, const Vec& x, const Vec& u, Mat& fx, Mat& fu, Vec& lx,
                           Vec& lu) const = 0;

    virtual double terminal_cost(const Vec&) const { return 0.0; }
    virtual Vec terminal_gradient(const Vec& x) const { return Vec::Zero(x.size()); }

    /// Controls with no effect (used as the sweep's initial guess).
    virtual Vec neutral_control() const { return Vec::Zero(nu()); }

    Vec rhs(double t, const Vec& x, const Vec& u) const {
        Vec dx(nx());
        rhs(t, x, u, dx);
        return dx;
    }

    double hamiltonian(double t, const Vec& x, const Vec& lambda, const Vec& u) const {
        return running_cost(t, x, u) + lambda.dot(rhs(t, x, u));
    }

    /// lambda' = -dH/dx
    Vec adjoint_rhs(double t, const Vec& x, const Vec& lambda, const Vec& u) const {
        Mat fx, fu;
        Vec lx, lu;
        linearize(t, x, u, fx, fu, lx, lu);
        return -(lx + fx.transpose() * lambda);
    }

    Vec hamiltonian_du(double t, const Vec& x, const Vec& lambda, const Vec& u) const {
        Mat fx, fu;
        Vec lx, lu;
        linearize(t, x, u, fx, fu, lx, lu);
        return lu + fu.transpose() * lambda;
    }

    /// Pointwise minimizer of H over the control box. Each control is handled
    /// in turn with the others held at `guess`; H is quadratic in every control
    /// of the catalog except the mechanical-control share, which falls back to
    /// a bracketed 1-D search.
    virtual Vec control_law(double t, const Vec& x, const Vec& lambda, const std::vector<Bound>& bounds,
                            const Vec& guess) const {
        Vec u = guess;
        for (int i = 0; i < nu(); ++i) u[i] = minimize_component(t, x, lambda, bounds[i], u, i);
        return u;
    }

    Vec control_law(double t, const Vec& x, const Vec& lambda, const std::vector<Bound>& bounds) const {
        Vec g = neutral_control();
        for (int i = 0; i < nu(); ++i) g[i] = clamp(g[i], bounds[i]);
        return control_law(t, x, lambda, bounds, g);
    }

protected:
    double minimize_component(double t, const Vec& x, const Vec& lambda, const Bound& b, Vec u,
                              int i) const {
        auto slope = [&](double v) {
            u[i] = v;
            return hamiltonian_du(t, x, lambda, u)[i];
        };
        const bool finite = std::isfinite(b.lo) && std::isfinite(b.hi);
        const double v0 = finite ? b.lo : 0.0;
        const double v1 = finite ? b.hi : 1.0;
        const double vm = 0.5 * (v0 + v1);
        const double g0 = slope(v0), g1 = slope(v1), gm = slope(vm);
        const double curv = (g1 - g0) / (v1 - v0);
        const double lin_err = std::abs(gm - 0.5 * (g0 + g1));
        const double scale = std::abs(g0) + std::abs(g1) + 1e-300;
        if (lin_err <= 1e-9 * scale + 1e-14) {
            if (curv > 0.0) return clamp(v0 - g0 / curv, b);
            if (!finite) throw ConvergenceError("unbounded control with non-convex Hamiltonian");
            // linear in u: bang-bang, lower bound on ties
            return g0 + g1 < 0.0 ? b.hi : b.lo;
        }
        if (!finite) throw ConvergenceError("non-quadratic Hamiltonian needs finite control bounds");
        auto H = [&](double v) {
            u[i] = v;
            return hamiltonian(t, x, lambda, u);
        };
        const int n = 64;
        int best = 0;
        double hbest = H(b.lo);
        for (int j = 1; j <= n; ++j) {
            const double hj = H(b.lo + (b.hi - b.lo) * j / n);
            if (hj < hbest) hbest = hj, best = j;
        }
        const double lo = b.lo + (b.hi - b.lo) * std::max(0, best - 1) / n;
        const double hi = b.lo + (b.hi - b.lo) * std::min(n, best + 1) / n;
        auto r = boost::math::tools::brent_find_minima(H, lo, hi, 50);
        return r.second <= hbest ? r.first : b.lo + (b.hi - b.lo) * best / n;
    }
};

/// Dynamics built from a functor with templated `rhs` and `cost` members;
/// derivatives come from forward-mode automatic differentiation.
///
///   template <class T> void rhs(double t, const T* x, const T* u, T* dx) const;
///   template <class T> T cost(double t, const T* x, const T* u) const;
template <class Fn>
class AutoDynamics : public Dynamics {
public:
    AutoDynamics(Fn fn, int nx, int nu) : fn_(std::move(fn)), nx_(nx), nu_(nu) {}

    int nx() const override { return nx_; }
    int nu() const override { return nu_; }
    const Fn& functor() const { return fn_; }

    void rhs(double t, const Vec& x, const Vec& u, Vec& dx) const override {
        dx.resize(nx_);
        fn_.rhs(t, x.data(), u.data(), dx.data());
    }
    using Dynamics::rhs;

    double running_cost(double t, const Vec& x, const Vec& u) const override {
        return fn_.cost(t, x.data(), u.data());
    }

    void linearize(double t, const Vec& x, const Vec& u, Mat& fx, Mat& fu, Vec& lx,
                   Vec& lu) const override {
        const int nz = nx_ + nu_;
        std::array<ADScalar, 24> zx, zu, dz;
        for (int i = 0; i < nx_; ++i) zx[i] = ADScalar(x[i], nz, i);
        for (int j = 0; j < nu_; ++j) zu[j] = ADScalar(u[j], nz, nx_ + j);
        fn_.rhs(t, zx.data(), zu.data(), dz.data());
        fx.resize(nx_, nx_);
        fu.resize(nx_, nu_);
        for (int i = 0; i < nx_; ++i) {
            const auto& d = dz[i].derivatives();
            for (int j = 0; j < nz; ++j) {
                const double v = d.size() ? d[j] : 0.0;
                if (j < nx_)
                    fx(i, j) = v;
                else
                    fu(i, j - nx_) = v;
            }
        }
        const ADScalar L = fn_.cost(t, zx.data(), zu.data());
        lx = Vec::Zero(nx_);
        lu = Vec::Zero(nu_);
        if (L.derivatives().size()) {
            lx = L.derivatives().head(nx_);
            lu = L.derivatives().tail(nu_);
        }
    }

protected:
    Fn fn_;
    int nx_, nu_;
};

namespace detail {

struct CatalogFn {
    ModelId id;
    Vec p;
    Vec w;
    Vec scale;  // empty: original units

    template <class T>
    void rhs(double t, const T* x, const T* u, T* dx) const {
        const int n = model_info(id).nx();
        if (scale.size() == 0) {
            detail::rhs(id, t, x, u, p.data(), dx);
            return;
        }
        std::array<T, 24> X{};
        for (int i = 0; i < n; ++i) X[i] = x[i] / scale[i];
        detail::rhs(id, t, X.data(), u, p.data(), dx);
        for (int i = 0; i < n; ++i) dx[i] = dx[i] * scale[i];
    }

    template <class T>
    T cost(double, const T* x, const T* u) const {
        if (w.size() == 0) return T(0.0);
        return detail::running_cost(id, x, u, w.data());
    }
};

}  // namespace detail

/// A catalog model bound to parameters, cost weights and a state scaling.
class ModelSystem : public AutoDynamics<detail::CatalogFn> {
public:
    ModelSystem(ModelId id, Vec params, Vec weights, bool normalized)
        : AutoDynamics(make_fn(id, std::move(params), std::move(weights), normalized),
                       model_info(id).nx(), model_info(id).nu()),
          normalized_(normalized) {}

    ModelId id() const { return fn_.id; }
    bool normalized() const { return normalized_; }
    const Vec& params() const { return fn_.p; }
    const Vec& weights() const { return fn_.w; }

    Vec neutral_control() const override {
        const auto& n = model_info(fn_.id).neutral;
        return Eigen::Map<const Vec>(n.data(), static_cast<Eigen::Index>(n.size()));
    }

private:
    static detail::CatalogFn make_fn(ModelId id, Vec p, Vec w, bool normalized) {
        const ModelInfo& mi = model_info(id);
        if (p.size() != static_cast<Eigen::Index>(mi.params.size()))
            throw ValidationError("parameter vector length mismatch for " + mi.name);
        if (w.size() != 0 && w.size() != static_cast<Eigen::Index>(mi.weights.size()))
            throw ValidationError("weight vector length mismatch for " + mi.name);
        Vec s;
        if (normalized) s = normalization_scales(id, p);
        return detail::CatalogFn{id, std::move(p), std::move(w), std::move(s)};
    }
    bool normalized_;
};

/// Right-hand side evaluated in original units.
inline Vec model_rhs(ModelId id, double t, const Vec& x, const Vec& u, const Vec& p) {
    Vec dx(x.size());
    detail::rhs(id, t, x.data(), u.data(), p.data(), dx.data());
    return dx;
}

}  // namespace epioc
