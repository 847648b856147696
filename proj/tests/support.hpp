#pragma once

#include "epioc/epioc.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace epioc::testing {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string preset_path(const std::string& name) { return std::string(EPIOC_PRESET_DIR) + "/" + name + ".json"; }

inline Scenario preset(const std::string& name) { return load_scenario(read_file(preset_path(name))); }

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Central-difference gradient of a scalar function.
template <class F>
Vec fd_gradient(const F& f, Vec x, double step = 1e-6) {
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = step * std::max(1.0, std::abs(x[i]));
        const double xi = x[i];
        x[i] = xi + h;
        const double fp = f(x);
        x[i] = xi - h;
        const double fm = f(x);
        x[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace epioc::testing
