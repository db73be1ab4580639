#pragma once

// Necessary conditions of the maximum principle for multiprocesses,
// evaluated on a candidate (x, u, A): backward adjoint with state-constraint
// measures, transversality, the maximum condition over systems and controls,
// the free end-time Hamiltonian conditions, and needle-variation tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "multiproc/errors.hpp"
#include "multiproc/partition.hpp"
#include "multiproc/system.hpp"

namespace multiproc {

struct Atom {
    double time = 0.0;
    double mass = 0.0;
};

/// mu_j = density dt + sum of point masses. Density is per grid cell (empty means 0).
struct ConstraintMeasure {
    std::vector<double> density;
    std::vector<Atom> atoms;

    [[nodiscard]] double density_at(std::size_t cell) const {
        return density.empty() ? 0.0 : density.at(cell);
    }
    [[nodiscard]] bool is_zero() const {
        return std::all_of(density.begin(), density.end(), [](double d) { return d == 0.0; }) &&
               std::all_of(atoms.begin(), atoms.end(), [](const Atom& a) { return a.mass == 0.0; });
    }
};

struct Multipliers {
    double lambda0 = 1.0;
    Vec l0 = Vec(0);
    Vec l1 = Vec(0);
    std::vector<ConstraintMeasure> measures;

    /// Max norm over (lambda0, l0, l1, mu); zero means the trivial multiplier set.
    [[nodiscard]] double max_norm() const {
        double m = std::abs(lambda0);
        if (l0.size() > 0) {
            m = std::max(m, l0.lpNorm<Eigen::Infinity>());
        }
        if (l1.size() > 0) {
            m = std::max(m, l1.lpNorm<Eigen::Infinity>());
        }
        for (const auto& mu : measures) {
            for (double d : mu.density) {
                m = std::max(m, std::abs(d));
            }
            for (const auto& a : mu.atoms) {
                m = std::max(m, std::abs(a.mass));
            }
        }
        return m;
    }
    [[nodiscard]] bool nontrivial(double eps = 1e-12) const { return max_norm() > eps; }

    [[nodiscard]] Multipliers scaled(double c) const {
        Multipliers out = *this;
        out.lambda0 *= c;
        out.l0 *= c;
        out.l1 *= c;
        for (auto& mu : out.measures) {
            for (auto& d : mu.density) {
                d *= c;
            }
            for (auto& a : mu.atoms) {
                a.mass *= c;
            }
        }
        return out;
    }
};

/// delta = p(time) - p(time+), the jump across an atom.
struct Jump {
    double time = 0.0;
    Vec delta;
};

/// Left-continuous adjoint sampled at nodes; p_right[j] is the limit from the right.
struct AdjointPath {
    TimeGrid grid;
    std::vector<Vec> p;
    std::vector<Vec> p_right;
    std::vector<Vec> p_mid;
    std::vector<Jump> jumps;
    bool endpoint_atom = false;
};

namespace detail {

inline void check_measures(const ProblemSpec& spec, const Multipliers& mult, std::size_t n_cells) {
    if (!mult.measures.empty() && mult.measures.size() != spec.constraints.size()) {
        throw DimensionMismatch("need one measure per state constraint");
    }
    for (const auto& mu : mult.measures) {
        if (!mu.density.empty() && mu.density.size() != n_cells) {
            throw DimensionMismatch("measure density must have one value per cell");
        }
        for (double d : mu.density) {
            if (d < 0.0) {
                throw Error("measure density must be nonnegative");
            }
        }
        for (const auto& a : mu.atoms) {
            if (a.mass < 0.0) {
                throw Error("measure atoms must be nonnegative");
            }
        }
    }
}

/// Sum of g_jx(t, x) * weight_j over constraints, weight_j = density of cell or atom mass at node.
template <class Weight>
Vec constraint_term(const ProblemSpec& spec, double t, const Vec& x, const Weight& weight) {
    Vec acc = Vec::Zero(x.size());
    for (std::size_t c = 0; c < spec.constraints.size(); ++c) {
        const double w = weight(c);
        if (w != 0.0) {
            acc += w * spec.constraints[c].gradient(t, x);
        }
    }
    return acc;
}

/// Total atom mass of constraint c placed at node j (atoms are snapped to nodes).
inline double atom_mass_at_node(const ConstraintMeasure& mu, const TimeGrid& grid, std::size_t j) {
    double m = 0.0;
    for (const auto& a : mu.atoms) {
        if (grid.nearest_node(a.time) == j) {
            m += a.mass;
        }
    }
    return m;
}

}  // namespace detail

/// H_x of system `label`: phi_x^T p - lambda0 f_x.
inline Vec pontryagin_x(const ControlSystem& sys, double t, const Vec& x, const Vec& u, const Vec& p,
                        double lambda0) {
    return sys.phi_x(t, x, u).transpose() * p - lambda0 * sys.f_x(t, x, u);
}

/// H_t of system `label`: <p, phi_t> - lambda0 f_t.
inline double pontryagin_t(const ControlSystem& sys, double t, const Vec& x, const Vec& u, const Vec& p,
                           double lambda0) {
    return p.dot(sys.phi_t(t, x, u)) - lambda0 * sys.f_t(t, x, u);
}

/// Solves p' = -A o H_x + sum_j g_jx lambda_j backward from p(t1) = -h1_x^T l1,
/// applying p(tau) = p(tau+) - g_jx m at atoms. Samples are left limits.
inline AdjointPath backward_adjoint(const ProblemSpec& spec, const Multiprocess& mp,
                                    const Multipliers& mult) {
    const auto& grid = mp.grid;
    const std::size_t n_cells = grid.n_cells();
    const auto n = static_cast<Eigen::Index>(spec.state_dim());
    if (mp.x.size() != grid.n_nodes()) {
        throw DimensionMismatch("backward_adjoint: state samples do not match the grid");
    }
    if (mult.l1.size() != spec.h1.dim) {
        throw DimensionMismatch("backward_adjoint: l1 must have h1 dimension");
    }
    detail::check_measures(spec, mult, n_cells);

    AdjointPath path;
    path.grid = grid;
    path.p.assign(grid.n_nodes(), Vec::Zero(n));
    path.p_right.assign(grid.n_nodes(), Vec::Zero(n));
    path.p_mid.assign(n_cells, Vec::Zero(n));

    auto apply_atoms = [&](std::size_t j, Vec& value) {
        if (mult.measures.empty()) {
            return;
        }
        const double t = grid.node(j);
        const Vec delta = -detail::constraint_term(spec, t, mp.x[j], [&](std::size_t c) {
            return detail::atom_mass_at_node(mult.measures[c], grid, j);
        });
        if (delta.squaredNorm() > 0.0) {
            value += delta;
            path.jumps.push_back({t, delta});
            if (j == 0 || j == n_cells) {
                path.endpoint_atom = true;
            }
        }
    };

    const double t1 = grid.t_end();
    Vec p_end = Vec::Zero(n);
    if (spec.h1.dim > 0) {
        p_end = -spec.h1.jacobian_x(t1, mp.x.back()).transpose() * mult.l1;
    }
    path.p_right[n_cells] = p_end;
    apply_atoms(n_cells, p_end);
    path.p[n_cells] = p_end;

    for (std::size_t jj = n_cells; jj-- > 0;) {
        const int label = mp.active_label(jj);
        const auto& sys = spec.system(label);
        const Vec& u = mp.control(jj);
        const double ta = grid.node(jj);
        const double tb = grid.node(jj + 1);
        const double h = tb - ta;
        const double tm = ta + 0.5 * h;
        const Vec xm = midpoint_state(spec, mp, jj);

        auto rhs = [&](double t, const Vec& x, const Vec& p) -> Vec {
            Vec d = -pontryagin_x(sys, t, x, u, p, mult.lambda0);
            if (!mult.measures.empty()) {
                d += detail::constraint_term(spec, t, x, [&](std::size_t c) {
                    return mult.measures[c].density_at(jj);
                });
            }
            return d;
        };

        const Vec& pb = path.p[jj + 1];
        const Vec k1 = rhs(tb, mp.x[jj + 1], pb);
        const Vec k2 = rhs(tm, xm, pb - 0.5 * h * k1);
        const Vec k3 = rhs(tm, xm, pb - 0.5 * h * k2);
        const Vec k4 = rhs(ta, mp.x[jj], pb - h * k3);
        Vec pa = pb - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!pa.allFinite()) {
            throw NonFiniteState("backward_adjoint: costate blew up at t = " + std::to_string(ta));
        }

        // cubic Hermite midpoint from node values and slopes
        const Vec da = rhs(ta, mp.x[jj], pa);
        path.p_mid[jj] = 0.5 * (pa + pb) + (h / 8.0) * (da - k1);

        path.p_right[jj] = pa;
        apply_atoms(jj, pa);
        path.p[jj] = pa;
    }
    return path;
}

/// Max norm mismatch of the adjoint integral equation, evaluated with Simpson's rule.
inline double adjoint_integral_residual(const ProblemSpec& spec, const Multiprocess& mp,
                                        const Multipliers& mult, const AdjointPath& path) {
    const auto& grid = mp.grid;
    const std::size_t n_cells = grid.n_cells();
    const double t1 = grid.t_end();

    auto atom_term = [&](std::size_t j) -> Vec {
        if (mult.measures.empty()) {
            return Vec::Zero(spec.state_dim());
        }
        return detail::constraint_term(spec, grid.node(j), mp.x[j], [&](std::size_t c) {
            return detail::atom_mass_at_node(mult.measures[c], grid, j);
        });
    };

    Vec integral = Vec::Zero(spec.state_dim());
    if (spec.h1.dim > 0) {
        integral = -spec.h1.jacobian_x(t1, mp.x.back()).transpose() * mult.l1;
    }
    integral -= atom_term(n_cells);
    double worst = (integral - path.p[n_cells]).lpNorm<Eigen::Infinity>();

    for (std::size_t jj = n_cells; jj-- > 0;) {
        const auto& sys = spec.system(mp.active_label(jj));
        const Vec& u = mp.control(jj);
        const double ta = grid.node(jj);
        const double tb = grid.node(jj + 1);
        const double tm = 0.5 * (ta + tb);
        auto integrand = [&](double t, const Vec& x, const Vec& p) -> Vec {
            Vec v = pontryagin_x(sys, t, x, u, p, mult.lambda0);
            if (!mult.measures.empty()) {
                v -= detail::constraint_term(spec, t, x, [&](std::size_t c) {
                    return mult.measures[c].density_at(jj);
                });
            }
            return v;
        };
        const Vec fa = integrand(ta, mp.x[jj], path.p_right[jj]);
        const Vec fm = integrand(tm, midpoint_state(spec, mp, jj), path.p_mid[jj]);
        const Vec fb = integrand(tb, mp.x[jj + 1], path.p[jj + 1]);
        integral += ((tb - ta) / 6.0) * (fa + 4.0 * fm + fb);
        integral -= atom_term(jj);
        worst = std::max(worst, (integral - path.p[jj]).lpNorm<Eigen::Infinity>());
    }
    return worst;
}

struct TransversalityResult {
    double residual = 0.0;
    Vec l0;
};

/// min over l0 of || p(t0) - h0_x^T l0 ||, with the minimizing l0.
inline TransversalityResult transversality_residual(const ProblemSpec& spec, const Multiprocess& mp,
                                                    const AdjointPath& path) {
    const Vec& p0 = path.p.front();
    if (spec.h0.dim == 0) {
        return {p0.norm(), Vec(0)};
    }
    const Mat jt = spec.h0.jacobian_x(mp.grid.t_start(), mp.x.front()).transpose();
    Vec l0 = jt.completeOrthogonalDecomposition().solve(p0);
    return {(p0 - jt * l0).norm(), l0};
}

/// || p(t0) - h0_x^T l0 || for a given l0.
inline double transversality_residual_at(const ProblemSpec& spec, const Multiprocess& mp,
                                         const AdjointPath& path, const Vec& l0) {
    const Vec& p0 = path.p.front();
    if (spec.h0.dim == 0) {
        return p0.norm();
    }
    if (l0.size() != spec.h0.dim) {
        throw DimensionMismatch("l0 must have h0 dimension");
    }
    const Mat jt = spec.h0.jacobian_x(mp.grid.t_start(), mp.x.front()).transpose();
    return (p0 - jt * l0).norm();
}

struct ControlChoice {
    int label = 1;
    Vec u;
    double value = -std::numeric_limits<double>::infinity();
};

namespace detail {

/// Maximizes a scalar function of u over a box: lexicographic grid scan, then
/// golden-section polishing per coordinate around the best grid point.
template <class Fn>
ControlChoice maximize_over_box(const ControlBox& box, const Fn& value_of) {
    const int m = box.dim();
    ControlChoice best;
    if (m == 0) {
        best.u = Vec(0);
        best.value = value_of(best.u);
        return best;
    }

    int points = std::max(2, box.grid_points);
    while (m > 1 && std::pow(static_cast<double>(points), m) > 1e6) {
        points = std::max(2, points / 2);
    }
    auto coord = [&](int i, int idx) {
        if (box.lower[i] == box.upper[i]) {
            return box.lower[i];
        }
        return box.lower[i] + (box.upper[i] - box.lower[i]) * idx / (points - 1);
    };

    std::vector<int> idx(static_cast<std::size_t>(m), 0);
    std::vector<int> best_idx = idx;
    Vec u(m);
    while (true) {
        for (int i = 0; i < m; ++i) {
            u[i] = coord(i, idx[static_cast<std::size_t>(i)]);
        }
        const double v = value_of(u);
        if (v > best.value) {
            best.value = v;
            best.u = u;
            best_idx = idx;
        }
        int pos = m - 1;
        while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == points) {
            idx[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) {
            break;
        }
    }

    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    Vec cand = best.u;
    for (int i = 0; i < m; ++i) {
        if (box.lower[i] == box.upper[i]) {
            continue;
        }
        const double width = (box.upper[i] - box.lower[i]) / (points - 1);
        double lo = std::max(box.lower[i], best.u[i] - width);
        double hi = std::min(box.upper[i], best.u[i] + width);
        auto eval_at = [&](double s) {
            cand[i] = s;
            return value_of(cand);
        };
        double c = hi - invphi * (hi - lo);
        double d = lo + invphi * (hi - lo);
        double fc = eval_at(c);
        double fd = eval_at(d);
        while (hi - lo > 1e-10) {
            if (fc >= fd) {
                hi = d;
                d = c;
                fd = fc;
                c = hi - invphi * (hi - lo);
                fc = eval_at(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + invphi * (hi - lo);
                fd = eval_at(d);
            }
        }
        const double s = 0.5 * (lo + hi);
        const double fs = eval_at(s);
        if (fs > best.value + 1e-14 * (1.0 + std::abs(best.value))) {
            best.value = fs;
            best.u[i] = s;
        }
        cand = best.u;
    }
    return best;
}

}  // namespace detail

/// argmax over (i, u^i) of H^i; ties go to the smallest label, then the
/// lexicographically smallest control.
inline ControlChoice synthesize_pointwise(const ProblemSpec& spec, const Vec& x, const Vec& p,
                                          double lambda0, double t) {
    ControlChoice best;
    for (int label = 1; label <= spec.k(); ++label) {
        const auto& sys = spec.system(label);
        auto choice = detail::maximize_over_box(sys.controls, [&](const Vec& u) {
            return pontryagin_i(sys, t, x, u, p, lambda0);
        });
        if (choice.value > best.value) {
            best = choice;
            best.label = label;
        }
    }
    return best;
}

/// Hamilton function: max over systems and controls of H^i.
inline double hamiltonian(const ProblemSpec& spec, const Vec& x, const Vec& p, double lambda0,
                          double t) {
    return synthesize_pointwise(spec, x, p, lambda0, t).value;
}

/// (max over i, u^i of H^i) - (A o H at the stored control), at the midpoint of `cell`.
inline double max_condition_gap(const ProblemSpec& spec, const Multiprocess& mp,
                                const AdjointPath& path, double lambda0, std::size_t cell) {
    const double tm = mp.grid.midpoint(cell);
    const Vec xm = midpoint_state(spec, mp, cell);
    const Vec& pm = path.p_mid.at(cell);
    const double attained =
        pontryagin_i(spec.system(mp.active_label(cell)), tm, xm, mp.control(cell), pm, lambda0);
    return hamiltonian(spec, xm, pm, lambda0, tm) - attained;
}

struct FreeTimeResiduals {
    std::vector<double> profile;  // Hamilton function at nodes
    std::vector<double> rhs;      // right-hand side of the Hamiltonian integral identity
    double profile_residual = 0.0;
    double start_residual = 0.0;
    double variation = 0.0;  // max - min of the profile
};

/// Free end-time conditions:
///   H(t) = <h1_t, l1> - int_t^t1 A o H_t + sum_j int_t^t1 g_jt dmu_j,
///   H(t0) = -<h0_t, l0>.
inline FreeTimeResiduals free_time_conditions(const ProblemSpec& spec, const Multiprocess& mp,
                                              const Multipliers& mult, const AdjointPath& path,
                                              const Vec& l0) {
    if (spec.mode != TimeMode::free) {
        throw WrongTimeMode("free_time_conditions needs a free end-time problem");
    }
    const auto& grid = mp.grid;
    const std::size_t n_cells = grid.n_cells();
    const double t0 = grid.t_start();
    const double t1 = grid.t_end();
    FreeTimeResiduals r;
    r.profile.resize(grid.n_nodes());
    r.rhs.resize(grid.n_nodes());
    for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
        r.profile[j] = hamiltonian(spec, mp.x[j], path.p[j], mult.lambda0, grid.node(j));
    }

    auto atom_time_term = [&](std::size_t j) {
        double s = 0.0;
        for (std::size_t c = 0; c < mult.measures.size(); ++c) {
            const double m = detail::atom_mass_at_node(mult.measures[c], grid, j);
            if (m != 0.0) {
                s += m * spec.constraints[c].time_partial(grid.node(j), mp.x[j]);
            }
        }
        return s;
    };

    double acc = 0.0;
    if (spec.h1.dim > 0) {
        acc = spec.h1.jacobian_t(t1, mp.x.back()).dot(mult.l1);
    }
    acc += atom_time_term(n_cells);
    r.rhs[n_cells] = acc;
    for (std::size_t jj = n_cells; jj-- > 0;) {
        const auto& sys = spec.system(mp.active_label(jj));
        const Vec& u = mp.control(jj);
        const double ta = grid.node(jj);
        const double tb = grid.node(jj + 1);
        const double tm = 0.5 * (ta + tb);
        auto integrand = [&](double t, const Vec& x, const Vec& p) {
            double v = pontryagin_t(sys, t, x, u, p, mult.lambda0);
            for (std::size_t c = 0; c < mult.measures.size(); ++c) {
                const double d = mult.measures[c].density_at(jj);
                if (d != 0.0) {
                    v -= d * spec.constraints[c].time_partial(t, x);
                }
            }
            return v;
        };
        const double fa = integrand(ta, mp.x[jj], path.p_right[jj]);
        const double fm = integrand(tm, midpoint_state(spec, mp, jj), path.p_mid[jj]);
        const double fb = integrand(tb, mp.x[jj + 1], path.p[jj + 1]);
        acc -= ((tb - ta) / 6.0) * (fa + 4.0 * fm + fb);
        acc += atom_time_term(jj);
        r.rhs[jj] = acc;
    }

    for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
        r.profile_residual = std::max(r.profile_residual, std::abs(r.profile[j] - r.rhs[j]));
    }
    double start_target = 0.0;
    if (spec.h0.dim > 0) {
        if (l0.size() != spec.h0.dim) {
            throw DimensionMismatch("l0 must have h0 dimension");
        }
        start_target = -spec.h0.jacobian_t(t0, mp.x.front()).dot(l0);
    }
    r.start_residual = std::abs(r.profile.front() - start_target);
    const auto [lo, hi] = std::minmax_element(r.profile.begin(), r.profile.end());
    r.variation = *hi - *lo;
    return r;
}

struct PMPReport {
    AdjointPath adjoint;
    double adjoint_residual = 0.0;
    double transversality_residual = 0.0;
    Vec l0;
    std::vector<double> max_gap;  // per cell midpoint
    double max_gap_max = 0.0;
    double max_gap_min = 0.0;
    bool nontrivial = true;
    bool endpoint_atom = false;
    std::optional<double> adjoint_reference_error;  // vs an analytic adjoint, when known
    std::optional<FreeTimeResiduals> free_time;

    /// Largest residual entering the verdict.
    [[nodiscard]] double worst_residual() const {
        double w = std::max({adjoint_residual, transversality_residual, max_gap_max, -max_gap_min});
        if (adjoint_reference_error) {
            w = std::max(w, *adjoint_reference_error);
        }
        if (free_time) {
            w = std::max({w, free_time->profile_residual, free_time->start_residual});
        }
        return w;
    }
    [[nodiscard]] bool pass(double tol) const { return nontrivial && worst_residual() <= tol; }
};

/// Evaluates every necessary condition for a candidate and its multipliers.
inline PMPReport check_pmp(const ProblemSpec& spec, const Multiprocess& mp, const Multipliers& mult) {
    if (mult.lambda0 < 0.0) {
        throw Error("lambda0 must be nonnegative");
    }
    PMPReport r;
    r.adjoint = backward_adjoint(spec, mp, mult);
    r.adjoint_residual = adjoint_integral_residual(spec, mp, mult, r.adjoint);
    auto tr = transversality_residual(spec, mp, r.adjoint);
    r.transversality_residual = tr.residual;
    r.l0 = tr.l0;
    r.max_gap.resize(mp.grid.n_cells());
    for (std::size_t j = 0; j < mp.grid.n_cells(); ++j) {
        r.max_gap[j] = max_condition_gap(spec, mp, r.adjoint, mult.lambda0, j);
    }
    const auto [lo, hi] = std::minmax_element(r.max_gap.begin(), r.max_gap.end());
    r.max_gap_min = *lo;
    r.max_gap_max = *hi;
    Multipliers with_l0 = mult;
    with_l0.l0 = r.l0;
    r.nontrivial = with_l0.nontrivial();
    r.endpoint_atom = r.adjoint.endpoint_atom;
    if (spec.mode == TimeMode::free) {
        r.free_time = free_time_conditions(spec, mp, mult, r.adjoint, r.l0);
    }
    return r;
}

struct MultiplierFit {
    Multipliers multipliers;
    double residual = 0.0;  // transversality residual after the fit
};

/// Least-squares fit of (l0, l1) with lambda0 = 1; falls back to lambda0 = 0
/// with ||(l0, l1)|| = 1 when the normal fit leaves a residual above tol.
/// The measures in `base` are kept as given.
inline MultiplierFit fit_multipliers(const ProblemSpec& spec, const Multiprocess& mp,
                                     const Multipliers& base = {}, double tol = 1e-8) {
    const auto n = static_cast<Eigen::Index>(spec.state_dim());
    const int s0 = spec.h0.dim;
    const int s1 = spec.h1.dim;

    Multipliers normal = base;
    normal.lambda0 = 1.0;
    normal.l1 = Vec::Zero(s1);
    const Vec a = backward_adjoint(spec, mp, normal).p.front();

    Mat m(n, s1 + s0);
    for (int i = 0; i < s1; ++i) {
        Multipliers unit;
        unit.lambda0 = 0.0;
        unit.l1 = Vec::Unit(s1, i);
        m.col(i) = backward_adjoint(spec, mp, unit).p.front();
    }
    if (s0 > 0) {
        m.rightCols(s0) = -spec.h0.jacobian_x(mp.grid.t_start(), mp.x.front()).transpose();
    }

    MultiplierFit fit;
    if (s1 + s0 > 0) {
        const Vec z = m.completeOrthogonalDecomposition().solve(-a);
        fit.residual = (a + m * z).norm();
        normal.l1 = z.head(s1);
        normal.l0 = z.tail(s0);
    } else {
        fit.residual = a.norm();
    }
    fit.multipliers = normal;
    if (fit.residual <= tol || s1 + s0 == 0) {
        return fit;
    }

    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullV);
    const Vec z = svd.matrixV().col(svd.matrixV().cols() - 1);
    Multipliers abnormal;
    abnormal.lambda0 = 0.0;
    abnormal.l1 = z.head(s1);
    abnormal.l0 = z.tail(s0);
    fit.multipliers = abnormal;
    fit.residual = (m * z).norm();
    return fit;
}

struct NeedleResult {
    double delta_j = 0.0;
    double base_j = 0.0;
    double spliced_j = 0.0;
    Multiprocess spliced;
};

/// Splices the candidate strategy and controls onto `base` over M, re-simulates
/// both from base.x[0], and returns J(spliced) - J(base). Negative values show
/// that `base` is not a minimum.
inline NeedleResult needle_improvement(const ProblemSpec& spec, const Multiprocess& base,
                                       const ControlProgram& candidate_controls,
                                       const Partition& candidate_strategy, const IntervalSet& m) {
    const auto& grid = base.grid;
    Partition strategy = needle_splice(base.strategy, candidate_strategy, m);
    ControlProgram u = base.u;
    detail::check_controls(spec, candidate_controls, grid.n_cells());
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
        if (m.contains(grid.midpoint(j))) {
            for (std::size_t i = 0; i < u.size(); ++i) {
                u[i][j] = candidate_controls[i][j];
            }
        }
    }
    const Multiprocess base_sim = simulate(spec, base.strategy, base.u, base.x.front(), grid);
    NeedleResult r{0.0, 0.0, 0.0, simulate(spec, strategy, std::move(u), base.x.front(), grid)};
    r.base_j = objective(spec, base_sim);
    r.spliced_j = objective(spec, r.spliced);
    r.delta_j = r.spliced_j - r.base_j;
    return r;
}

}  // namespace multiproc
