#pragma once

// Multiprocess problems: k control systems sharing one continuous state,
// the switched dynamics x' = A o phi(t, x, u), and the objective
// J = integral of A o f(t, x, u).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "multiproc/errors.hpp"
#include "multiproc/partition.hpp"
#include "multiproc/rk4.hpp"

namespace multiproc {

using ScalarFn = std::function<double(double, const Vec&, const Vec&)>;
using VectorFn = std::function<Vec(double, const Vec&, const Vec&)>;
using MatrixFn = std::function<Mat(double, const Vec&, const Vec&)>;

namespace detail {

inline double fd_step(double value) { return 1e-6 * (1.0 + std::abs(value)); }

}  // namespace detail

/// Box control set U^i; an empty box (dimension 0) means the system has no control.
struct ControlBox {
    Vec lower;
    Vec upper;
    int grid_points = 101;

    static ControlBox none() { return {Vec(0), Vec(0), 1}; }
    static ControlBox interval(double lo, double hi, int points = 101) {
        return {Vec::Constant(1, lo), Vec::Constant(1, hi), points};
    }

    [[nodiscard]] int dim() const { return static_cast<int>(lower.size()); }

    /// Largest amount by which u leaves the box (0 inside).
    [[nodiscard]] double excess(const Vec& u) const {
        double e = 0.0;
        for (int i = 0; i < dim(); ++i) {
            e = std::max({e, lower[i] - u[i], u[i] - upper[i]});
        }
        return e;
    }
};

struct ControlSystem {
    std::string name;
    int state_dim = 0;
    ControlBox controls = ControlBox::none();
    ScalarFn integrand;
    VectorFn dynamics;

    // Optional analytic partials; central differences otherwise.
    VectorFn integrand_x;
    MatrixFn dynamics_x;
    ScalarFn integrand_t;
    VectorFn dynamics_t;
    bool autonomous = false;

    [[nodiscard]] int control_dim() const { return controls.dim(); }

    [[nodiscard]] double f(double t, const Vec& x, const Vec& u) const { return integrand(t, x, u); }
    [[nodiscard]] Vec phi(double t, const Vec& x, const Vec& u) const { return dynamics(t, x, u); }

    [[nodiscard]] Vec f_x(double t, const Vec& x, const Vec& u) const {
        if (integrand_x) {
            return integrand_x(t, x, u);
        }
        Vec g(x.size());
        Vec xp = x;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = detail::fd_step(x[i]);
            xp[i] = x[i] + h;
            const double fp = integrand(t, xp, u);
            xp[i] = x[i] - h;
            const double fm = integrand(t, xp, u);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        return g;
    }

    [[nodiscard]] Mat phi_x(double t, const Vec& x, const Vec& u) const {
        if (dynamics_x) {
            return dynamics_x(t, x, u);
        }
        Mat jac(x.size(), x.size());
        Vec xp = x;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = detail::fd_step(x[i]);
            xp[i] = x[i] + h;
            const Vec fp = dynamics(t, xp, u);
            xp[i] = x[i] - h;
            const Vec fm = dynamics(t, xp, u);
            xp[i] = x[i];
            jac.col(i) = (fp - fm) / (2.0 * h);
        }
        return jac;
    }

    [[nodiscard]] double f_t(double t, const Vec& x, const Vec& u) const {
        if (autonomous) {
            return 0.0;
        }
        if (integrand_t) {
            return integrand_t(t, x, u);
        }
        const double h = detail::fd_step(t);
        return (integrand(t + h, x, u) - integrand(t - h, x, u)) / (2.0 * h);
    }

    [[nodiscard]] Vec phi_t(double t, const Vec& x, const Vec& u) const {
        if (autonomous) {
            return Vec::Zero(x.size());
        }
        if (dynamics_t) {
            return dynamics_t(t, x, u);
        }
        const double h = detail::fd_step(t);
        return (dynamics(t + h, x, u) - dynamics(t - h, x, u)) / (2.0 * h);
    }
};

/// State constraint g(t, x) <= 0.
struct StateConstraint {
    std::string name;
    std::function<double(double, const Vec&)> g;
    std::function<Vec(double, const Vec&)> g_x;
    std::function<double(double, const Vec&)> g_t;

    [[nodiscard]] double value(double t, const Vec& x) const { return g(t, x); }

    [[nodiscard]] Vec gradient(double t, const Vec& x) const {
        if (g_x) {
            return g_x(t, x);
        }
        Vec out(x.size());
        Vec xp = x;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = detail::fd_step(x[i]);
            xp[i] = x[i] + h;
            const double vp = g(t, xp);
            xp[i] = x[i] - h;
            const double vm = g(t, xp);
            xp[i] = x[i];
            out[i] = (vp - vm) / (2.0 * h);
        }
        return out;
    }

    [[nodiscard]] double time_partial(double t, const Vec& x) const {
        if (g_t) {
            return g_t(t, x);
        }
        const double h = detail::fd_step(t);
        return (g(t + h, x) - g(t - h, x)) / (2.0 * h);
    }
};

/// Endpoint condition h(t, x) = 0 with values in R^dim; dim = 0 leaves the endpoint free.
struct BoundaryMap {
    int dim = 0;
    std::function<Vec(double, const Vec&)> value;
    std::function<Mat(double, const Vec&)> jac_x;
    std::function<Vec(double, const Vec&)> jac_t;

    static BoundaryMap none() { return {}; }

    /// h(x) = x - target.
    static BoundaryMap fixed_point(Vec target) {
        BoundaryMap m;
        m.dim = static_cast<int>(target.size());
        m.value = [target](double, const Vec& x) -> Vec { return x - target; };
        m.jac_x = [n = target.size()](double, const Vec&) -> Mat { return Mat::Identity(n, n); };
        m.jac_t = [n = target.size()](double, const Vec&) -> Vec { return Vec::Zero(n); };
        return m;
    }

    [[nodiscard]] Vec eval(double t, const Vec& x) const {
        return dim == 0 ? Vec(0) : value(t, x);
    }

    [[nodiscard]] Mat jacobian_x(double t, const Vec& x) const {
        if (dim == 0) {
            return Mat(0, x.size());
        }
        if (jac_x) {
            return jac_x(t, x);
        }
        Mat jac(dim, x.size());
        Vec xp = x;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = detail::fd_step(x[i]);
            xp[i] = x[i] + h;
            const Vec vp = value(t, xp);
            xp[i] = x[i] - h;
            const Vec vm = value(t, xp);
            xp[i] = x[i];
            jac.col(i) = (vp - vm) / (2.0 * h);
        }
        return jac;
    }

    [[nodiscard]] Vec jacobian_t(double t, const Vec& x) const {
        if (dim == 0) {
            return Vec(0);
        }
        if (jac_t) {
            return jac_t(t, x);
        }
        const double h = detail::fd_step(t);
        return (value(t + h, x) - value(t - h, x)) / (2.0 * h);
    }
};

enum class TimeMode { fixed, free };

struct ProblemSpec {
    std::vector<ControlSystem> systems;
    std::vector<StateConstraint> constraints;
    BoundaryMap h0;
    BoundaryMap h1;
    TimeMode mode = TimeMode::fixed;
    Interval horizon{0.0, 1.0};  // used when mode == fixed

    [[nodiscard]] int k() const { return static_cast<int>(systems.size()); }
    [[nodiscard]] int state_dim() const { return systems.empty() ? 0 : systems.front().state_dim; }

    [[nodiscard]] const ControlSystem& system(int label) const {
        if (label < 1 || label > k()) {
            throw LabelOutOfRange("system label " + std::to_string(label) + " outside 1.." +
                                  std::to_string(k()));
        }
        return systems[static_cast<std::size_t>(label - 1)];
    }

    void validate() const {
        if (systems.empty()) {
            throw DimensionMismatch("problem needs at least one control system");
        }
        for (const auto& s : systems) {
            if (s.state_dim != state_dim()) {
                throw DimensionMismatch("control system '" + s.name + "' has state dim " +
                                        std::to_string(s.state_dim) + ", expected " +
                                        std::to_string(state_dim()));
            }
            if (s.controls.upper.size() != s.controls.lower.size()) {
                throw DimensionMismatch("control box of '" + s.name + "' is inconsistent");
            }
            for (int i = 0; i < s.control_dim(); ++i) {
                if (!(s.controls.lower[i] <= s.controls.upper[i])) {
                    throw DimensionMismatch("control set of '" + s.name + "' is empty");
                }
            }
            if (!s.integrand || !s.dynamics) {
                throw DimensionMismatch("control system '" + s.name + "' lacks f or phi");
            }
        }
    }
};

/// Controls indexed [system][cell]; value is held constant on each cell.
using ControlProgram = std::vector<std::vector<Vec>>;

struct Multiprocess {
    TimeGrid grid;
    std::vector<Vec> x;  // node samples, size n_cells + 1
    ControlProgram u;
    Partition strategy;

    [[nodiscard]] int active_label(std::size_t cell) const {
        return strategy.label_at(grid.midpoint(cell));
    }
    [[nodiscard]] const Vec& control(std::size_t cell) const {
        return u[static_cast<std::size_t>(active_label(cell) - 1)][cell];
    }
};

/// Control program holding each system's control constant over the whole grid.
inline ControlProgram constant_controls(const ProblemSpec& spec, std::size_t n_cells,
                                        const std::vector<Vec>& per_system) {
    ControlProgram u(static_cast<std::size_t>(spec.k()));
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i].assign(n_cells, per_system.at(i));
    }
    return u;
}

/// H^i = <p, phi^i(t, x, u^i)> - lambda0 f^i(t, x, u^i).
inline double pontryagin_i(const ControlSystem& sys, double t, const Vec& x, const Vec& u,
                           const Vec& p, double lambda0) {
    if (p.size() != x.size() || x.size() != sys.state_dim) {
        throw DimensionMismatch("pontryagin_i: state/costate dimension mismatch");
    }
    return p.dot(sys.phi(t, x, u)) - lambda0 * sys.f(t, x, u);
}

/// A o H: the Pontryagin function of the system active at t.
inline double composed_pontryagin(const Partition& strategy, const ProblemSpec& spec, double t,
                                  const Vec& x, const std::vector<Vec>& u, const Vec& p,
                                  double lambda0) {
    if (static_cast<int>(u.size()) != spec.k() || strategy.k() != spec.k()) {
        throw DimensionMismatch("composed_pontryagin: need one control per system");
    }
    const int i = strategy.label_at(t);
    return pontryagin_i(spec.system(i), t, x, u[static_cast<std::size_t>(i - 1)], p, lambda0);
}

/// One RK4 step of system `label` with control held at u.
inline Vec system_step(const ProblemSpec& spec, int label, const Vec& u, double t, const Vec& x,
                       double h) {
    const auto& sys = spec.system(label);
    return rk4_step<Vec>([&](double s, const Vec& y) -> Vec { return sys.phi(s, y, u); }, t, x, h);
}

namespace detail {

inline void check_controls(const ProblemSpec& spec, const ControlProgram& u, std::size_t n_cells) {
    if (static_cast<int>(u.size()) != spec.k()) {
        throw DimensionMismatch("control program must hold one sequence per system");
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i].size() != n_cells) {
            throw DimensionMismatch("control sequence of system " + std::to_string(i + 1) +
                                    " has " + std::to_string(u[i].size()) + " cells, expected " +
                                    std::to_string(n_cells));
        }
    }
}

}  // namespace detail

/// x' = A o phi(t, x, u) by RK4, one step per grid cell. Each cell uses the
/// system active at its midpoint, so switches are effectively snapped to nodes.
inline std::vector<Vec> forward_integrate(const ProblemSpec& spec, const Partition& strategy,
                                          const ControlProgram& u, const Vec& x0,
                                          const TimeGrid& grid) {
    if (x0.size() != spec.state_dim()) {
        throw DimensionMismatch("forward_integrate: initial state has wrong dimension");
    }
    if (!x0.allFinite()) {
        throw NonFiniteState("forward_integrate: initial state is not finite");
    }
    detail::check_controls(spec, u, grid.n_cells());
    std::vector<Vec> x;
    x.reserve(grid.n_nodes());
    x.push_back(x0);
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
        const int label = strategy.label_at(grid.midpoint(j));
        const double t = grid.node(j);
        const double h = grid.node(j + 1) - t;
        Vec next = system_step(spec, label, u[static_cast<std::size_t>(label - 1)][j], t, x.back(), h);
        if (!next.allFinite()) {
            throw NonFiniteState("forward_integrate: state blew up at t = " + std::to_string(t + h));
        }
        x.push_back(std::move(next));
    }
    return x;
}

/// Simulates a multiprocess from x0 under the given strategy and controls.
inline Multiprocess simulate(const ProblemSpec& spec, const Partition& strategy, ControlProgram u,
                             const Vec& x0, const TimeGrid& grid) {
    auto x = forward_integrate(spec, strategy, u, x0, grid);
    return Multiprocess{grid, std::move(x), std::move(u), strategy};
}

/// State at the midpoint of a cell: half RK4 step from the left node.
inline Vec midpoint_state(const ProblemSpec& spec, const Multiprocess& mp, std::size_t cell) {
    const double t = mp.grid.node(cell);
    const double h = 0.5 * (mp.grid.node(cell + 1) - t);
    return system_step(spec, mp.active_label(cell), mp.control(cell), t, mp.x[cell], h);
}

/// Composite midpoint rule for J = integral of A o f. A unit integrand gives the grid span exactly.
inline double objective(const ProblemSpec& spec, const Multiprocess& mp) {
    double sum = 0.0;
    for (std::size_t j = 0; j < mp.grid.n_cells(); ++j) {
        const double tm = mp.grid.midpoint(j);
        const auto& sys = spec.system(mp.active_label(j));
        sum += sys.f(tm, midpoint_state(spec, mp, j), mp.control(j));
    }
    return mp.grid.span() * (sum / static_cast<double>(mp.grid.n_cells()));
}

struct FeasibilityReport {
    double dynamics_residual = 0.0;
    double state_constraint_violation = 0.0;
    double boundary_residual_start = 0.0;
    double boundary_residual_end = 0.0;
    double control_violation = 0.0;

    [[nodiscard]] bool admissible(double tol) const {
        return dynamics_residual <= tol && state_constraint_violation <= tol &&
               boundary_residual_start <= tol && boundary_residual_end <= tol &&
               control_violation <= tol;
    }
};

inline FeasibilityReport feasibility_check(const ProblemSpec& spec, const Multiprocess& mp,
                                           double tol) {
    if (!(tol > 0.0)) {
        throw Error("feasibility_check: tol must be positive");
    }
    if (mp.x.size() != mp.grid.n_nodes()) {
        throw DimensionMismatch("multiprocess state samples do not match the grid");
    }
    detail::check_controls(spec, mp.u, mp.grid.n_cells());
    FeasibilityReport r;
    for (std::size_t j = 0; j < mp.grid.n_cells(); ++j) {
        const double t = mp.grid.node(j);
        const double h = mp.grid.node(j + 1) - t;
        const Vec next = system_step(spec, mp.active_label(j), mp.control(j), t, mp.x[j], h);
        r.dynamics_residual = std::max(r.dynamics_residual, (next - mp.x[j + 1]).lpNorm<Eigen::Infinity>());
        r.control_violation =
            std::max(r.control_violation, spec.system(mp.active_label(j)).controls.excess(mp.control(j)));
    }
    for (const auto& c : spec.constraints) {
        for (std::size_t j = 0; j < mp.grid.n_nodes(); ++j) {
            r.state_constraint_violation =
                std::max(r.state_constraint_violation, c.value(mp.grid.node(j), mp.x[j]));
        }
    }
    const double t0 = mp.grid.t_start();
    const double t1 = mp.grid.t_end();
    if (spec.h0.dim > 0) {
        r.boundary_residual_start = spec.h0.eval(t0, mp.x.front()).norm();
    }
    if (spec.h1.dim > 0) {
        r.boundary_residual_end = spec.h1.eval(t1, mp.x.back()).norm();
    }
    return r;
}

}  // namespace multiproc
