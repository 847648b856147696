#pragma once

// Scenario configuration: parameters, initial state, grid, control mode,
// weights and solver settings, with JSON load/serialize and normalization.

#include "epioc/models.hpp"
#include "epioc/types.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace epioc {

using ParameterSet = std::map<std::string, double>;

struct TimeGrid {
    double t0 = 0.0;
    double tf = 1.0;
    int n_steps = 1;
    std::optional<std::string> unit;

    int nodes() const { return n_steps + 1; }
    double h() const { return (tf - t0) / n_steps; }
    double node(int i) const { return i == n_steps ? tf : t0 + i * h(); }
    Vec times() const {
        Vec t(nodes());
        for (int i = 0; i < nodes(); ++i) t[i] = node(i);
        return t;
    }
    void validate() const {
        if (!(std::isfinite(t0) && std::isfinite(tf) && tf > t0))
            throw ValidationError("grid: tf must be greater than t0");
        if (n_steps < 1) throw ValidationError("grid: n_steps must be >= 1");
    }
};

struct PulseSpec {
    double period = 7.0;
    double duty = 1.0 / 7.0;  // fraction of each period spent at `level`
    double level = 1.0;
};

struct ControlSpec {
    enum class Mode { constant, pulse, optimize };
    Mode mode = Mode::constant;
    std::map<std::string, double> levels;     // constant mode
    std::map<std::string, PulseSpec> pulses;  // pulse mode
    std::map<std::string, Bound> bounds;      // optimize mode
};

struct SolverConfig {
    std::optional<std::string> method;  // euler|rk2|rk4|rk45|sweep|direct
    std::optional<double> tol;
    std::optional<int> max_iter;
    std::optional<double> relaxation;   // sweep only
    std::optional<std::string> scheme;  // direct only: euler|rk2
};

struct Scenario {
    ModelId model = ModelId::SIS;
    ParameterSet params;
    std::map<std::string, double> initial;
    TimeGrid grid;
    ControlSpec control;
    std::map<std::string, double> weights;
    SolverConfig solver;
    bool normalized = false;  // inferred from lower-case host-vector state names

    const ModelInfo& info() const { return model_info(model); }

    std::vector<std::string> state_names() const {
        return normalized ? info().normalized_states() : info().states;
    }

    Vec param_vector() const {
        const auto& mi = info();
        Vec p(static_cast<Eigen::Index>(mi.params.size()));
        for (std::size_t i = 0; i < mi.params.size(); ++i) p[i] = params.at(mi.params[i]);
        return p;
    }

    Vec initial_vector() const {
        const auto names = state_names();
        Vec x(static_cast<Eigen::Index>(names.size()));
        for (std::size_t i = 0; i < names.size(); ++i) x[i] = initial.at(names[i]);
        return x;
    }

    /// Weight vector in model order; missing weights read as zero.
    Vec weight_vector() const {
        const auto& mi = info();
        Vec w = Vec::Zero(static_cast<Eigen::Index>(mi.weights.size()));
        for (std::size_t i = 0; i < mi.weights.size(); ++i) {
            auto it = weights.find(mi.weights[i]);
            if (it != weights.end()) w[i] = it->second;
        }
        return w;
    }

    std::vector<Bound> control_bounds() const {
        const auto& mi = info();
        std::vector<Bound> b = mi.limits;
        for (std::size_t i = 0; i < mi.controls.size(); ++i) {
            auto it = control.bounds.find(mi.controls[i]);
            if (it != control.bounds.end()) b[i] = it->second;
        }
        return b;
    }

    ModelSystem system() const { return ModelSystem(model, param_vector(), weight_vector(), normalized); }
};

namespace detail {

inline const std::set<std::string> kProbabilities = {"beta_mh", "beta_hm", "p", "q", "sigma", "psi"};
inline const std::set<std::string> kPositive = {"N_h", "P", "K", "N", "m", "k", "omega"};

inline void check_param(const ModelInfo& mi, const std::string& name, double v) {
    auto fail = [&](const std::string& why) {
        throw ValidationError("params." + name + ": " + why);
    };
    if (!std::isfinite(v)) fail("not finite");
    if (mi.id == ModelId::DENGUE_GOODWILL && name == "phi") return;  // phase, any real
    if (mi.id == ModelId::DENGUE_GOODWILL && name == "mu") {
        if (v < 0.0 || v > 1.0) fail("seasonal amplitude must lie in [0,1]");
        return;
    }
    if (kProbabilities.count(name)) {
        if (v < 0.0 || v > 1.0) fail("probability must lie in [0,1]");
        return;
    }
    if (kPositive.count(name)) {
        if (v <= 0.0) fail("must be > 0");
        return;
    }
    if (v < 0.0) fail("must be >= 0");
}

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ValidationError(where + ": unknown key '" + it.key() + "'");
}

inline double number(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number()) throw ValidationError(where + ": expected a number");
    return j.get<double>();
}

inline std::map<std::string, double> number_map(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    std::map<std::string, double> out;
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = number(it.value(), where + "." + it.key());
    return out;
}

}  // namespace detail

/// Checks every Scenario invariant; throws ValidationError naming the field.
inline void validate(const Scenario& s) {
    const ModelInfo& mi = s.info();
    for (const auto& n : mi.params)
        if (!s.params.count(n)) throw ValidationError("params." + n + ": missing");
    for (const auto& [n, v] : s.params) {
        if (mi.param_index(n) < 0) throw ValidationError("params." + n + ": not a parameter of " + mi.name);
        detail::check_param(mi, n, v);
    }
    const auto names = s.state_names();
    for (const auto& n : names)
        if (!s.initial.count(n)) throw ValidationError("initial." + n + ": missing");
    for (const auto& [n, v] : s.initial) {
        if (std::find(names.begin(), names.end(), n) == names.end())
            throw ValidationError("initial." + n + ": not a state of " + mi.name);
        if (!std::isfinite(v) || v < 0.0) throw ValidationError("initial." + n + ": must be finite and >= 0");
    }
    s.grid.validate();
    for (const auto& [n, v] : s.weights) {
        if (mi.weight_index(n) < 0) throw ValidationError("weights." + n + ": not a weight of " + mi.name);
        if (!std::isfinite(v) || v < 0.0) throw ValidationError("weights." + n + ": must be >= 0");
    }
    auto check_control = [&](const std::string& n, const std::string& where) {
        const int i = mi.control_index(n);
        if (i < 0) throw ValidationError(where + "." + n + ": not a control of " + mi.name);
        return i;
    };
    auto in_limits = [&](int i, double v, const std::string& where) {
        const Bound& b = mi.limits[i];
        if (!(v >= b.lo && v <= b.hi)) throw ValidationError(where + ": level outside control limits");
    };
    const auto& c = s.control;
    for (const auto& [n, v] : c.levels) in_limits(check_control(n, "control.levels"), v, "control.levels." + n);
    for (const auto& [n, ps] : c.pulses) {
        const int i = check_control(n, "control.pulses");
        if (!(ps.period > 0.0)) throw ValidationError("control.pulses." + n + ".period: must be > 0");
        if (!(ps.duty > 0.0 && ps.duty <= 1.0)) throw ValidationError("control.pulses." + n + ".duty: must lie in (0,1]");
        in_limits(i, ps.level, "control.pulses." + n + ".level");
    }
    for (const auto& [n, b] : c.bounds) {
        check_control(n, "control.bounds");
        if (!(std::isfinite(b.lo) && std::isfinite(b.hi) && b.lo <= b.hi))
            throw ValidationError("control.bounds." + n + ": need finite lo <= hi");
    }
    if (c.mode == ControlSpec::Mode::optimize) {
        if (!mi.oc) throw ValidationError("control.mode: model " + mi.name + " has no optimal-control layer");
        for (const auto& n : mi.controls)
            if (!c.bounds.count(n)) throw ValidationError("control.bounds." + n + ": missing in optimize mode");
    }
    if (s.solver.tol && !(*s.solver.tol > 0.0)) throw ValidationError("solver.tol: must be > 0");
    if (s.solver.max_iter && *s.solver.max_iter < 1) throw ValidationError("solver.max_iter: must be >= 1");
    if (s.solver.relaxation && !(*s.solver.relaxation > 0.0 && *s.solver.relaxation <= 1.0))
        throw ValidationError("solver.relaxation: must lie in (0,1]");
    if (s.solver.method) {
        static const std::set<std::string> ok = {"euler", "rk2", "rk4", "rk45", "sweep", "direct"};
        if (!ok.count(*s.solver.method)) throw ValidationError("solver.method: unknown '" + *s.solver.method + "'");
    }
    if (s.solver.scheme && *s.solver.scheme != "euler" && *s.solver.scheme != "rk2")
        throw ValidationError("solver.scheme: expected euler or rk2");
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
    using detail::number;
    using detail::reject_unknown;
    reject_unknown(j, {"model", "params", "initial", "grid", "control", "weights", "solver"}, "scenario");
    for (const char* k : {"model", "params", "initial", "grid"})
        if (!j.contains(k)) throw ValidationError(std::string(k) + ": missing");
    if (!j["model"].is_string()) throw ValidationError("model: expected a string");

    Scenario s;
    s.model = model_from_string(j["model"].get<std::string>());
    s.params = detail::number_map(j["params"], "params");
    s.initial = detail::number_map(j["initial"], "initial");
    if (!s.initial.empty() && s.info().normalizable)
        s.normalized = s.initial.count(s.info().normalized_states().front()) > 0;

    const auto& g = j["grid"];
    reject_unknown(g, {"t0", "tf", "n_steps", "unit"}, "grid");
    for (const char* k : {"t0", "tf", "n_steps"})
        if (!g.contains(k)) throw ValidationError(std::string("grid.") + k + ": missing");
    s.grid.t0 = number(g["t0"], "grid.t0");
    s.grid.tf = number(g["tf"], "grid.tf");
    if (!g["n_steps"].is_number_integer()) throw ValidationError("grid.n_steps: expected an integer");
    s.grid.n_steps = g["n_steps"].get<int>();
    if (g.contains("unit")) {
        if (!g["unit"].is_string()) throw ValidationError("grid.unit: expected a string");
        s.grid.unit = g["unit"].get<std::string>();
    }

    if (j.contains("control")) {
        const auto& c = j["control"];
        reject_unknown(c, {"mode", "levels", "pulses", "bounds"}, "control");
        const std::string mode = c.value("mode", "constant");
        if (mode == "constant")
            s.control.mode = ControlSpec::Mode::constant;
        else if (mode == "pulse")
            s.control.mode = ControlSpec::Mode::pulse;
        else if (mode == "optimize")
            s.control.mode = ControlSpec::Mode::optimize;
        else
            throw ValidationError("control.mode: unknown '" + mode + "'");
        if (c.contains("levels")) s.control.levels = detail::number_map(c["levels"], "control.levels");
        if (c.contains("pulses")) {
            const auto& ps = c["pulses"];
            if (!ps.is_object()) throw ValidationError("control.pulses: expected an object");
            for (auto it = ps.begin(); it != ps.end(); ++it) {
                const std::string where = "control.pulses." + it.key();
                reject_unknown(it.value(), {"period", "duty", "level"}, where);
                PulseSpec p;
                for (const char* k : {"period", "duty", "level"})
                    if (!it.value().contains(k)) throw ValidationError(where + "." + k + ": missing");
                p.period = number(it.value()["period"], where + ".period");
                p.duty = number(it.value()["duty"], where + ".duty");
                p.level = number(it.value()["level"], where + ".level");
                s.control.pulses[it.key()] = p;
            }
        }
        if (c.contains("bounds")) {
            const auto& bs = c["bounds"];
            if (!bs.is_object()) throw ValidationError("control.bounds: expected an object");
            for (auto it = bs.begin(); it != bs.end(); ++it) {
                const std::string where = "control.bounds." + it.key();
                if (!it.value().is_array() || it.value().size() != 2)
                    throw ValidationError(where + ": expected [lo, hi]");
                s.control.bounds[it.key()] = Bound{number(it.value()[0], where), number(it.value()[1], where)};
            }
        }
    }
    if (j.contains("weights")) s.weights = detail::number_map(j["weights"], "weights");
    if (j.contains("solver")) {
        const auto& v = j["solver"];
        reject_unknown(v, {"method", "tol", "max_iter", "relaxation", "scheme"}, "solver");
        if (v.contains("method")) {
            if (!v["method"].is_string()) throw ValidationError("solver.method: expected a string");
            s.solver.method = v["method"].get<std::string>();
        }
        if (v.contains("tol")) s.solver.tol = number(v["tol"], "solver.tol");
        if (v.contains("max_iter")) {
            if (!v["max_iter"].is_number_integer()) throw ValidationError("solver.max_iter: expected an integer");
            s.solver.max_iter = v["max_iter"].get<int>();
        }
        if (v.contains("relaxation")) s.solver.relaxation = number(v["relaxation"], "solver.relaxation");
        if (v.contains("scheme")) {
            if (!v["scheme"].is_string()) throw ValidationError("solver.scheme: expected a string");
            s.solver.scheme = v["scheme"].get<std::string>();
        }
    }
    validate(s);
    return s;
}

inline Scenario load_scenario(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("parse error: ") + e.what());
    }
    return scenario_from_json(j);
}

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json j;  // std::map-backed objects: keys come out sorted
    j["model"] = s.info().name;
    j["params"] = s.params;
    j["initial"] = s.initial;
    j["grid"] = {{"t0", s.grid.t0}, {"tf", s.grid.tf}, {"n_steps", s.grid.n_steps}};
    if (s.grid.unit) j["grid"]["unit"] = *s.grid.unit;
    nlohmann::json c;
    static const char* modes[] = {"constant", "pulse", "optimize"};
    c["mode"] = modes[static_cast<int>(s.control.mode)];
    if (!s.control.levels.empty()) c["levels"] = s.control.levels;
    for (const auto& [n, p] : s.control.pulses)
        c["pulses"][n] = {{"period", p.period}, {"duty", p.duty}, {"level", p.level}};
    for (const auto& [n, b] : s.control.bounds) c["bounds"][n] = {b.lo, b.hi};
    j["control"] = c;
    if (!s.weights.empty()) j["weights"] = s.weights;
    nlohmann::json v = nlohmann::json::object();
    if (s.solver.method) v["method"] = *s.solver.method;
    if (s.solver.tol) v["tol"] = *s.solver.tol;
    if (s.solver.max_iter) v["max_iter"] = *s.solver.max_iter;
    if (s.solver.relaxation) v["relaxation"] = *s.solver.relaxation;
    if (s.solver.scheme) v["scheme"] = *s.solver.scheme;
    if (!v.empty()) j["solver"] = v;
    return j;
}

/// Canonical text: sorted keys, two-space indent.
inline std::string serialize(const Scenario& s) { return to_json(s).dump(2); }

/// Rewrites a host-vector scenario over fractional compartments
/// (humans / N_h, aquatic / (k N_h), adult mosquitoes / (m N_h)).
inline Scenario normalize_scenario(const Scenario& s) {
    if (s.normalized) return s;
    const ModelInfo& mi = s.info();
    if (!mi.normalizable) throw ValidationError("model " + mi.name + " has no normalized form");
    const Vec scale = normalization_scales(s.model, s.param_vector());
    const auto lower = mi.normalized_states();
    Scenario out = s;
    out.initial.clear();
    for (int i = 0; i < mi.nx(); ++i) out.initial[lower[i]] = s.initial.at(mi.states[i]) * scale[i];
    out.normalized = true;
    return out;
}

}  // namespace epioc
