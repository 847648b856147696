// epioc: simulate, analyze, optimize and compare control strategies for the
// bundled epidemic models.

#include "epioc/epioc.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace epioc;

namespace {

constexpr int kOk = 0, kValidation = 2, kIntegration = 3, kSolver = 4;

std::string num(double v) { return fmt::format("{:.17g}", v); }

Scenario read_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scenario(ss.str());
}

std::string digest(const Scenario& s) { return fmt::format("{:016x}", std::hash<std::string>{}(serialize(s))); }

struct RunReport {
    std::string command;
    std::string scenario_digest;
    std::vector<std::string> outputs;
    std::vector<std::pair<std::string, double>> summary;
    double runtime = 0.0;

    void print() const {
        fmt::print("command: {}\nscenario: {}\n", command, scenario_digest);
        for (const auto& [k, v] : summary) fmt::print("{}: {}\n", k, num(v));
        fmt::print("runtime_s: {:.3f}\n", runtime);
        for (const auto& o : outputs) fmt::print("wrote: {}\n", o);
    }
};

class Writer {
public:
    Writer(const fs::path& dir, RunReport& rep) : dir_(dir), rep_(rep) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw ValidationError("cannot create output directory '" + dir_.string() + "'");
    }

    void csv(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<std::string>>& rows) {
        std::ostringstream os;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
            os << '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
        text(name, os.str());
    }

    void text(const std::string& name, const std::string& body) {
        const fs::path p = dir_ / name;
        std::ofstream out(p, std::ios::binary);
        out << body;
        if (!out) throw ValidationError("cannot write '" + p.string() + "'");
        rep_.outputs.push_back(p.string());
    }

private:
    fs::path dir_;
    RunReport& rep_;
};

void write_trajectory(Writer& w, const Scenario& s, const Trajectory& tr, const std::string& name = "trajectory.csv") {
    const ModelInfo& mi = s.info();
    std::vector<std::string> header{"t"};
    for (const auto& n : s.state_names()) header.push_back(n);
    for (const auto& n : mi.controls) header.push_back(n);
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < tr.nodes(); ++i) {
        std::vector<std::string> r{num(tr.times[i])};
        for (Eigen::Index j = 0; j < tr.states.cols(); ++j) r.push_back(num(tr.states(i, j)));
        for (Eigen::Index j = 0; j < tr.controls.cols(); ++j) r.push_back(num(tr.controls(i, j)));
        rows.push_back(std::move(r));
    }
    w.csv(name, header, rows);
}

std::vector<std::string> metrics_header(const Scenario& s) {
    std::vector<std::string> h{"schedule", "peak_infected_humans", "peak_time", "cumulative_infected"};
    for (const auto& c : s.info().controls) h.push_back("amount_" + c);
    h.push_back("total_amount");
    for (const auto& n : s.state_names()) h.push_back("final_" + n);
    return h;
}

std::vector<std::string> full_metrics_row(const Scenario& s, const std::string& label, const OutbreakMetrics& m) {
    std::vector<std::string> r{label, num(m.peak_infected_humans), num(m.peak_time), num(m.cumulative_infected)};
    double total = 0.0;
    for (const auto& c : s.info().controls) {
        const double a = m.total_control_amount.at(c);
        total += a;
        r.push_back(num(a));
    }
    r.push_back(num(total));
    for (Eigen::Index i = 0; i < m.final_state.size(); ++i) r.push_back(num(m.final_state[i]));
    return r;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const std::string& path, const std::string& method, const fs::path& out, RunReport& rep) {
    const Scenario s = read_scenario(path);
    rep.scenario_digest = digest(s);
    const auto [tr, m] = simulate(s, method_from_string(method));
    Writer w(out, rep);
    write_trajectory(w, s, tr);
    w.csv("metrics.csv", metrics_header(s), {full_metrics_row(s, "scenario", m)});
    rep.summary = {{"peak_infected_humans", m.peak_infected_humans}, {"cumulative_infected", m.cumulative_infected}};
    return kOk;
}

// ----------------------------------------------------------------- analyze

std::string join_state(const Vec& x) {
    std::string r;
    for (Eigen::Index i = 0; i < x.size(); ++i) r += (i ? ";" : "") + num(x[i]);
    return r;
}

int cmd_analyze(const std::string& path, const std::vector<std::string>& critical, const std::vector<double>& bracket,
                const fs::path& out, RunReport& rep) {
    const Scenario s = read_scenario(path);
    rep.scenario_digest = digest(s);
    const AnalysisInput in = AnalysisInput::from(s);
    const ModelInfo& mi = s.info();
    const std::vector<std::string> header{"item", "kind", "value", "residual", "stability", "leading_real_part",
                                          "state"};
    std::vector<std::vector<std::string>> rows;
    auto scalar = [&](const std::string& item, const std::string& kind, double v) {
        rows.push_back({item, kind, num(v), "", "", "", ""});
    };

    if (!mi.autonomous) {
        log::info("model {} is seasonally forced; thresholds skipped", mi.name);
    } else {
        const R0Report cf = closed_form_r0(in);
        scalar("R0", "closed_form", cf.value);
        rep.summary.push_back({"R0", cf.value});
        const R0Report ng = next_generation_r0(in, relevant_dfe(in));
        scalar("R0", "next_generation", ng.value);
        if (is_host_vector(s.model)) scalar("M", "offspring", offspring_M(in));
        switch (s.model) {
        case ModelId::SVIR_PEDIATRIC:
        case ModelId::SVIR_MASS:
        case ModelId::SVIR_IMPERFECT:
        case ModelId::SVIR_WANING: scalar("R0", "vaccination", vaccination_r0(s.model, in.p)); break;
        default: break;
        }
        for (const auto& e : find_equilibria(in))
            rows.push_back({"equilibrium", to_string(e.kind), "", num(e.residual), to_string(e.stability),
                            num(e.leading_eigenvalue_real_part), join_state(e.state)});
        for (const auto& knob : critical) {
            const Bound b{bracket.at(0), bracket.at(1)};
            const double v = critical_control(in, knob, b);
            scalar("critical", knob, v);
            rep.summary.push_back({"critical_" + knob, v});
        }
    }
    Writer w(out, rep);
    w.csv("analysis.csv", header, rows);
    return kOk;
}

// ---------------------------------------------------------------- optimize

int cmd_optimize(const std::string& path, std::string solver, std::string scheme, bool normalize,
                 const fs::path& out, RunReport& rep) {
    Scenario s = read_scenario(path);
    if (normalize) s = normalize_scenario(s);
    rep.scenario_digest = digest(s);
    if (s.control.mode != ControlSpec::Mode::optimize)
        throw ValidationError("optimize needs a scenario with control mode 'optimize'");
    if (solver.empty()) solver = s.solver.method.value_or("sweep");
    if (scheme.empty()) scheme = s.solver.scheme.value_or("rk2");
    const OCProblem prob = make_problem(s);

    OCSolution sol;
    if (solver == "sweep") {
        SweepConfig cfg;
        if (s.solver.tol) cfg.tol = *s.solver.tol;
        if (s.solver.max_iter) cfg.max_iter = *s.solver.max_iter;
        if (s.solver.relaxation) cfg.relaxation = *s.solver.relaxation;
        sol = sweep(prob, cfg);
    } else if (solver == "direct") {
        DirectConfig cfg;
        // the scenario tolerance is written for the sweep; the direct solver keeps its own
        if (s.solver.method == "direct") {
            if (s.solver.tol) cfg.tol = *s.solver.tol;
            if (s.solver.max_iter) cfg.max_iter = *s.solver.max_iter;
        }
        sol = solve_direct(prob, scheme_from_string(scheme), cfg);
        sol.method = "direct-" + scheme;
    } else {
        throw ValidationError("unknown solver '" + solver + "' (sweep|direct)");
    }

    Writer w(out, rep);
    const Trajectory& tr = sol.trajectory;
    std::vector<std::string> ch{"t"};
    for (const auto& c : s.info().controls) ch.push_back(c);
    std::vector<std::vector<std::string>> crow;
    for (int i = 0; i < tr.nodes(); ++i) {
        std::vector<std::string> r{num(tr.times[i])};
        for (Eigen::Index j = 0; j < tr.controls.cols(); ++j) r.push_back(num(tr.controls(i, j)));
        crow.push_back(std::move(r));
    }
    w.csv("control.csv", ch, crow);
    write_trajectory(w, s, tr);
    if (tr.costates.size()) {
        std::vector<std::string> h{"t"};
        for (Eigen::Index j = 0; j < tr.costates.cols(); ++j) h.push_back(fmt::format("lambda{}", j + 1));
        std::vector<std::vector<std::string>> rows;
        for (int i = 0; i < tr.nodes(); ++i) {
            std::vector<std::string> r{num(tr.times[i])};
            for (Eigen::Index j = 0; j < tr.costates.cols(); ++j) r.push_back(num(tr.costates(i, j)));
            rows.push_back(std::move(r));
        }
        w.csv("costate.csv", h, rows);
    }
    w.text("objective.txt", num(sol.objective) + "\n");
    std::vector<std::vector<std::string>> hist;
    for (const auto& h : sol.history)
        hist.push_back({std::to_string(h.iteration), num(h.objective), std::isnan(h.change) ? "" : num(h.change)});
    w.csv("convergence.csv", {"iteration", "objective", "change"}, hist);
    w.csv("metrics.csv", {"method", "objective", "iterations", "converged", "final_change"},
          {{sol.method, num(sol.objective), std::to_string(sol.iterations), sol.converged ? "true" : "false",
            num(sol.final_relative_change)}});
    rep.summary = {{"objective", sol.objective}, {"iterations", double(sol.iterations)}};
    if (!sol.converged) {
        log::error("{} did not converge", sol.method);
        return kSolver;
    }
    return kOk;
}

// ---------------------------------------------------------------- strategy

int cmd_strategy(const std::string& path, const std::vector<std::string>& specs, const fs::path& out,
                 RunReport& rep) {
    const Scenario s = read_scenario(path);
    rep.scenario_digest = digest(s);
    const ModelInfo& mi = s.info();
    if (mi.nu() == 0) throw ValidationError("model " + mi.name + " has no controls");
    std::vector<NamedSchedules> list;
    for (const auto& spec : specs) {
        // optional "control=" prefix; the first control otherwise
        std::string control = mi.controls.front(), body = spec;
        if (const auto eq = spec.find('='); eq != std::string::npos) {
            control = spec.substr(0, eq);
            body = spec.substr(eq + 1);
        }
        if (mi.control_index(control) < 0) throw ValidationError("model " + mi.name + " has no control '" + control + "'");
        list.push_back({spec, ScheduleSet{{control, parse_schedule(body)}}});
    }
    if (list.empty()) throw ValidationError("strategy needs at least one --schedule");

    std::vector<std::vector<std::string>> rows;
    std::vector<OutbreakMetrics> metrics;
    for (const auto& n : list) {
        metrics.push_back(simulate_schedule(s, n.schedules).second);
        rows.push_back(full_metrics_row(s, n.name, metrics.back()));
    }
    Writer w(out, rep);
    w.csv("metrics.csv", metrics_header(s), rows);
    if (list.size() >= 2) {
        std::vector<std::vector<std::string>> rank;
        for (const auto& r : compare_strategies(s, list))
            rank.push_back({std::to_string(r.rank), r.name, num(r.metrics.peak_infected_humans), num(r.total_amount)});
        w.csv("ranking.csv", {"rank", "schedule", "peak_infected_humans", "total_amount"}, rank);
    }
    rep.summary = {{"schedules", double(list.size())}};
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Epidemic models: simulation, threshold analysis and optimal control"};
    app.require_subcommand(1);
    std::string scenario, out = "./out";

    auto* sim = app.add_subcommand("simulate", "integrate a scenario with its own control block");
    std::string method = "rk45";
    sim->add_option("scenario", scenario, "scenario JSON file")->required();
    sim->add_option("--method", method, "euler|rk2|rk4|rk45")->check(CLI::IsMember({"euler", "rk2", "rk4", "rk45"}));
    sim->add_option("--out", out, "output directory");

    auto* ana = app.add_subcommand("analyze", "R0, equilibria, stability and critical thresholds");
    std::vector<std::string> critical;
    std::vector<double> bracket{0.0, 1.0};
    ana->add_option("scenario", scenario, "scenario JSON file")->required();
    ana->add_option("--critical", critical, "parameter or control to solve R0 = 1 for");
    ana->add_option("--bracket", bracket, "bisection bracket for --critical")->expected(2);
    ana->add_option("--out", out, "output directory");

    auto* opt = app.add_subcommand("optimize", "solve the optimal control problem");
    std::string solver, scheme;
    bool normalize = false;
    opt->add_option("scenario", scenario, "scenario JSON file")->required();
    opt->add_option("--solver", solver, "sweep|direct (default from the scenario)")
        ->check(CLI::IsMember({"sweep", "direct"}));
    opt->add_option("--scheme", scheme, "direct transcription: euler|rk2")->check(CLI::IsMember({"euler", "rk2"}));
    opt->add_flag("--normalize", normalize, "rewrite a host-vector scenario over population fractions first");
    opt->add_option("--out", out, "output directory");

    auto* str = app.add_subcommand("strategy", "compare constant and pulse schedules");
    std::vector<std::string> schedules;
    str->add_option("scenario", scenario, "scenario JSON file")->required();
    str->add_option("--schedule", schedules, "[control=]constant:LEVEL or [control=]pulse:PERIOD:ON:LEVEL")
        ->required();
    str->add_option("--out", out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    RunReport rep;
    const auto t0 = std::chrono::steady_clock::now();
    int code = kOk;
    try {
        if (*sim) {
            rep.command = "simulate";
            code = cmd_simulate(scenario, method, out, rep);
        } else if (*ana) {
            rep.command = "analyze";
            code = cmd_analyze(scenario, critical, bracket, out, rep);
        } else if (*opt) {
            rep.command = "optimize";
            code = cmd_optimize(scenario, solver, scheme, normalize, out, rep);
        } else {
            rep.command = "strategy";
            code = cmd_strategy(scenario, schedules, out, rep);
        }
    } catch (const ValidationError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kValidation;
    } catch (const IntegrationError& e) {
        fmt::print(stderr, "integration failure: {}\n", e.what());
        return kIntegration;
    } catch (const ConvergenceError& e) {
        fmt::print(stderr, "solver failure: {}\n", e.what());
        return kSolver;
    }
    rep.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.print();
    return code;
}
