#pragma once

// Non-optimal control policies: constant and periodic pulse schedules,
// outbreak metrics, budget accounting, ranking and parameter sweeps.

#include "epioc/core.hpp"
#include "epioc/integrators.hpp"
#include "epioc/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace epioc {

struct ControlSchedule {
    enum class Kind { constant, pulse };
    Kind kind = Kind::constant;
    double level = 0.0;
    double period = 0.0;  // pulse only
    double duty = 1.0;    // fraction of each period at `level`

    static ControlSchedule constant(double level) { return {Kind::constant, level, 0.0, 1.0}; }
    static ControlSchedule pulse(double period, double duty, double level) {
        return {Kind::pulse, level, period, duty};
    }

    void validate(const Bound& b) const {
        if (!(level >= b.lo && level <= b.hi)) throw ValidationError("schedule level outside control bounds");
        if (kind == Kind::pulse) {
            if (!(period > 0.0)) throw ValidationError("pulse period must be positive");
            if (!(duty > 0.0 && duty <= 1.0)) throw ValidationError("pulse duty must lie in (0, 1]");
        }
    }

    /// Level at time t; pulses are on for [k P, k P + duty P) measured from t0.
    double value(double t, double t0) const {
        if (kind == Kind::constant) return level;
        const double s = t - t0;
        const double phase = s - period * std::floor(s / period);
        return phase < duty * period ? level : 0.0;
    }

    /// Exact integral of the schedule over [t0, tf].
    double amount(double t0, double tf) const {
        const double T = tf - t0;
        if (kind == Kind::constant) return level * T;
        const double full = std::floor(T / period);
        const double rest = T - full * period, on = duty * period;
        return level * (full * on + std::min(on, rest));
    }

    std::string label() const {
        if (kind == Kind::constant) return fmt::format("constant:{:g}", level);
        return fmt::format("pulse:{:g}:{:g}:{:g}", period, duty * period, level);
    }
};

/// Parses "constant:LEVEL" or "pulse:PERIOD:ON:LEVEL" (ON in the same time
/// unit as PERIOD).
inline ControlSchedule parse_schedule(const std::string& spec) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = spec.find(':', start);
        parts.push_back(spec.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    auto num = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("bad number '" + s + "' in schedule '" + spec + "'");
        }
    };
    if (parts[0] == "constant" && parts.size() == 2) return ControlSchedule::constant(num(parts[1]));
    if (parts[0] == "pulse" && parts.size() == 4) {
        const double period = num(parts[1]), on = num(parts[2]);
        if (!(period > 0.0)) throw ValidationError("pulse period must be positive in '" + spec + "'");
        return ControlSchedule::pulse(period, on / period, num(parts[3]));
    }
    throw ValidationError("schedule '" + spec + "' is not constant:LEVEL or pulse:PERIOD:ON:LEVEL");
}

/// One schedule per control name; controls left out stay at their neutral value.
using ScheduleSet = std::map<std::string, ControlSchedule>;

/// Schedules implied by the scenario's constant / pulse control block.
inline ScheduleSet schedules_from_scenario(const Scenario& s) {
    ScheduleSet out;
    if (s.control.mode == ControlSpec::Mode::optimize) return out;
    for (const auto& [n, v] : s.control.levels) out[n] = ControlSchedule::constant(v);
    for (const auto& [n, p] : s.control.pulses) out[n] = ControlSchedule::pulse(p.period, p.duty, p.level);
    return out;
}

struct OutbreakMetrics {
    double peak_infected_humans = 0.0;
    double peak_time = 0.0;
    double cumulative_infected = 0.0;
    std::map<std::string, double> total_control_amount;
    Vec final_state;
};

/// Index of the infected-human compartment used for peak tracking.
inline int infected_human_index(const ModelInfo& mi) {
    for (const char* n : {"I_h", "I"}) {
        const int i = mi.state_index(n);
        if (i >= 0) return i;
    }
    if (mi.id == ModelId::DENGUE_GOODWILL) return 2;
    return mi.infected.empty() ? 0 : mi.infected.back();
}

namespace detail {

inline Vec control_at(const ModelInfo& mi, const ScheduleSet& sched, double t, double t0) {
    Vec u = Eigen::Map<const Vec>(mi.neutral.data(), mi.nu());
    for (const auto& [name, sc] : sched) u[mi.control_index(name)] = sc.value(t, t0);
    return u;
}

inline void check_schedules(const Scenario& s, const ScheduleSet& sched) {
    const ModelInfo& mi = s.info();
    const auto bounds = s.control_bounds();
    for (const auto& [name, sc] : sched) {
        const int j = mi.control_index(name);
        if (j < 0) throw ValidationError("model " + mi.name + " has no control '" + name + "'");
        sc.validate(mi.limits[j]);
        (void)bounds;
    }
}

}  // namespace detail

/// Outbreak metrics on a trajectory in the scenario's own units. Incidence is
/// the first new-infection term, integrated by the trapezoid rule.
inline OutbreakMetrics outbreak_metrics(const Scenario& s, const Trajectory& tr, const ScheduleSet& sched) {
    const ModelInfo& mi = s.info();
    OutbreakMetrics m;
    const int ih = infected_human_index(mi);
    const Vec col = tr.states.col(ih);
    Eigen::Index arg = 0;
    m.peak_infected_humans = col.maxCoeff(&arg);
    m.peak_time = tr.times[arg];
    if (!mi.infected.empty()) {
        const Vec p = s.param_vector();
        Vec scale = Vec::Ones(mi.nx());
        if (s.normalized) scale = normalization_scales(s.model, p);
        const int first = mi.infected.front();
        std::vector<double> F(mi.infected.size());
        Vec inc(tr.nodes());
        for (int i = 0; i < tr.nodes(); ++i) {
            const Vec x = tr.state(i).cwiseQuotient(scale);
            detail::infections(s.model, x.data(), p.data(), F.data());
            inc[i] = F[0] * scale[first];
        }
        for (int i = 0; i + 1 < tr.nodes(); ++i)
            m.cumulative_infected += 0.5 * (tr.times[i + 1] - tr.times[i]) * (inc[i] + inc[i + 1]);
    }
    for (int j = 0; j < mi.nu(); ++j) {
        const auto it = sched.find(mi.controls[j]);
        const ControlSchedule sc = it != sched.end() ? it->second : ControlSchedule::constant(mi.neutral[j]);
        m.total_control_amount[mi.controls[j]] = sc.amount(s.grid.t0, s.grid.tf);
    }
    m.final_state = tr.state(tr.nodes() - 1);
    return m;
}

/// Trajectory under the schedules (rk45 unless another method is given).
inline std::pair<Trajectory, OutbreakMetrics> simulate_schedule(const Scenario& s, const ScheduleSet& sched,
                                                               Method method = Method::rk45) {
    validate(s);
    detail::check_schedules(s, sched);
    const ModelInfo& mi = s.info();
    const ModelSystem sys = s.system();
    const double t0 = s.grid.t0;
    ControlFunction u = [&](double t) { return detail::control_at(mi, sched, t, t0); };
    Trajectory tr = integrate(field_of(sys), s.grid, s.initial_vector(), u, mi.nu(), method);
    OutbreakMetrics m = outbreak_metrics(s, tr, sched);
    return {std::move(tr), std::move(m)};
}

/// Plain simulation with the scenario's own control block.
inline std::pair<Trajectory, OutbreakMetrics> simulate(const Scenario& s, Method method = Method::rk45) {
    return simulate_schedule(s, schedules_from_scenario(s), method);
}

struct NamedSchedules {
    std::string name;
    ScheduleSet schedules;
};

struct RankedStrategy {
    int rank = 0;
    std::size_t input_index = 0;
    std::string name;
    OutbreakMetrics metrics;
    double total_amount = 0.0;
};

/// Ranks by peak infected humans, ties by total control amount; stable.
inline std::vector<RankedStrategy> compare_strategies(const Scenario& s, const std::vector<NamedSchedules>& list) {
    if (list.size() < 2) throw ValidationError("compare_strategies needs at least two schedules");
    std::vector<RankedStrategy> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        RankedStrategy r;
        r.input_index = i;
        r.name = list[i].name;
        r.metrics = simulate_schedule(s, list[i].schedules).second;
        for (const auto& [n, a] : r.metrics.total_control_amount) r.total_amount += a;
        out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedStrategy& a, const RankedStrategy& b) {
        if (a.metrics.peak_infected_humans != b.metrics.peak_infected_humans)
            return a.metrics.peak_infected_humans < b.metrics.peak_infected_humans;
        return a.total_amount < b.total_amount;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
    return out;
}

/// One simulation per value of a parameter or a constant control level.
inline std::vector<std::pair<double, OutbreakMetrics>> parameter_sweep(const Scenario& s, const std::string& knob,
                                                                       const std::vector<double>& values) {
    const ModelInfo& mi = s.info();
    const bool is_param = mi.param_index(knob) >= 0;
    const bool is_control = mi.control_index(knob) >= 0;
    if (!is_param && !is_control) throw ValidationError("unknown knob '" + knob + "' for model " + mi.name);
    std::vector<std::pair<double, OutbreakMetrics>> out;
    for (double v : values) {
        Scenario c = s;
        ScheduleSet sched = schedules_from_scenario(s);
        if (is_param)
            c.params[knob] = v;
        else
            sched[knob] = ControlSchedule::constant(v);
        out.emplace_back(v, simulate_schedule(c, sched).second);
    }
    return out;
}

}  // namespace epioc
