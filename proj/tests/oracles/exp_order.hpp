#pragma once

// Convergence order of the forward integrator on x' = lambda x, x(0) = 1,
// against the exact solution e^(lambda T).

#include <cmath>
#include <vector>

#include "multiproc/system.hpp"

namespace oracle {

inline multiproc::ProblemSpec exponential_problem(double lambda, double T) {
    using multiproc::Vec;
    multiproc::ControlSystem s;
    s.name = "exp";
    s.state_dim = 1;
    s.integrand = [](double, const Vec&, const Vec&) { return 0.0; };
    s.dynamics = [lambda](double, const Vec& x, const Vec&) -> Vec { return lambda * x; };
    multiproc::ProblemSpec spec;
    spec.systems = {s};
    spec.horizon = {0.0, T};
    return spec;
}

/// Endpoint errors for n, 2n, 4n, ... (levels + 1 grids).
inline std::vector<double> exponential_errors(double lambda, double T, std::size_t n, int levels) {
    const auto spec = exponential_problem(lambda, T);
    const auto strat = multiproc::Partition::constant(1, 1, {0.0, T});
    std::vector<double> err;
    for (int l = 0; l <= levels; ++l) {
        const multiproc::TimeGrid grid(0.0, T, n << l);
        const auto u = multiproc::constant_controls(spec, grid.n_cells(), {multiproc::Vec(0)});
        const auto x = multiproc::forward_integrate(spec, strat, u, multiproc::Vec::Ones(1), grid);
        err.push_back(std::abs(x.back()[0] - std::exp(lambda * T)));
    }
    return err;
}

}  // namespace oracle
