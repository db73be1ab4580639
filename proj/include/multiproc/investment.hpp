#pragma once

// Consumption vs. investment multiprocess on [0, T]:
//   system 1: f = (1-u) x,   phi = u x
//   system 2: f = (1-u) x^a, phi = u x^a,   u in [0, 1],  J -> sup.
// Internally the sup problem is the minimization of -J.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "multiproc/errors.hpp"
#include "multiproc/parallel.hpp"
#include "multiproc/partition.hpp"
#include "multiproc/pmp.hpp"
#include "multiproc/system.hpp"

namespace multiproc::investment {

struct Params {
    double alpha = 0.5;
    double x0 = 1.0;
    double T = 2.0;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) {
            throw InvalidParams("alpha must lie in (0, 1)");
        }
        if (!(x0 > 0.0)) {
            throw InvalidParams("x0 must be positive");
        }
        const double lower = std::max(1.0, std::pow(x0, 1.0 - alpha) / alpha);
        if (!(T > lower)) {
            throw InvalidParams("T must exceed max{1, x0^(1-alpha)/alpha} = " + std::to_string(lower));
        }
    }
};

struct SwitchTimes {
    double t1 = 0.0;     // end of investment, system 1
    double t2 = 0.0;     // end of investment, system 2
    double sigma = 0.0;  // x reaches 1 under system 2 with full investment
};

inline SwitchTimes switch_times(const Params& prm) {
    const double a = prm.alpha;
    const double r = std::pow(prm.x0, 1.0 - a);
    return {prm.T - 1.0, a * prm.T - r, (1.0 - r) / (1.0 - a)};
}

enum class Case { a, b, c, d };

inline char case_letter(Case c) {
    switch (c) {
        case Case::a:
            return 'a';
        case Case::b:
            return 'b';
        case Case::c:
            return 'c';
        case Case::d:
            return 'd';
    }
    return '?';
}

/// T at which cases b and c meet: (1 - a x0^(1-a)) / (a (1-a)).
inline double case_threshold(const Params& prm) {
    const double a = prm.alpha;
    return (1.0 - a * std::pow(prm.x0, 1.0 - a)) / (a * (1.0 - a));
}

inline Case classify_case(const Params& prm) {
    prm.validate();
    if (prm.x0 >= 1.0) {
        return Case::a;
    }
    const double thr = case_threshold(prm);
    if (std::abs(prm.T - thr) <= 1e-12 * std::max(std::abs(prm.T), std::abs(thr))) {
        return Case::d;
    }
    return prm.T < thr ? Case::b : Case::c;
}

/// True when T is within rel. 1e-6 of the b/c threshold but not classified as d.
inline bool near_threshold(const Params& prm) {
    if (prm.x0 >= 1.0) {
        return false;
    }
    const double thr = case_threshold(prm);
    const double rel = std::abs(prm.T - thr) / std::max(std::abs(prm.T), std::abs(thr));
    return rel > 1e-12 && rel <= 1e-6;
}

struct Arc {
    Interval span;
    int system = 1;
    int v = 0;  // investment rate, 0 or 1
};

struct Solution {
    Params params;
    Case case_tag = Case::a;
    SwitchTimes times;
    std::string name;  // candidate name in case d ("B" or "C"), else ""
    bool optimal = true;
    std::vector<Arc> arcs;
    double J = 0.0;  // sup convention

    [[nodiscard]] std::size_t arc_index(double t) const {
        for (std::size_t i = 0; i < arcs.size(); ++i) {
            if (t < arcs[i].span.end) {
                return i;
            }
        }
        return arcs.size() - 1;
    }

    [[nodiscard]] int system_at(double t) const { return arcs[arc_index(t)].system; }
    [[nodiscard]] int control_at(double t) const { return arcs[arc_index(t)].v; }

    /// State at the start of arc i.
    [[nodiscard]] double arc_start_state(std::size_t i) const {
        double x = params.x0;
        for (std::size_t j = 0; j < i; ++j) {
            x = flow(arcs[j], x, arcs[j].span.length());
        }
        return x;
    }

    [[nodiscard]] double state(double t) const {
        const std::size_t i = arc_index(t);
        return flow(arcs[i], arc_start_state(i), t - arcs[i].span.begin);
    }

    [[nodiscard]] Partition strategy() const {
        std::vector<Segment> segs;
        for (const auto& arc : arcs) {
            if (!segs.empty() && segs.back().label == arc.system) {
                segs.back().span.end = arc.span.end;
            } else {
                segs.push_back({arc.span, arc.system});
            }
        }
        return Partition::from_segments(2, std::move(segs), {0.0, params.T});
    }

    /// Exact flow of one arc over duration s from state x.
    [[nodiscard]] double flow(const Arc& arc, double x, double s) const {
        if (arc.v == 0) {
            return x;
        }
        if (arc.system == 1) {
            return x * std::exp(s);
        }
        const double a = params.alpha;
        return std::pow(std::pow(x, 1.0 - a) + (1.0 - a) * s, 1.0 / (1.0 - a));
    }
};

namespace detail {

inline double sup_value(const Params& prm, const std::vector<Arc>& arcs) {
    Solution s;
    s.params = prm;
    s.arcs = arcs;
    double j = 0.0;
    double x = prm.x0;
    for (const auto& arc : arcs) {
        if (arc.v == 0) {
            j += (arc.system == 1 ? x : std::pow(x, prm.alpha)) * arc.span.length();
        }
        x = s.flow(arc, x, arc.span.length());
    }
    return j;
}

inline Solution make_solution(const Params& prm, Case tag, std::string name, bool optimal,
                              std::vector<Arc> arcs) {
    Solution s;
    s.params = prm;
    s.case_tag = tag;
    s.times = switch_times(prm);
    s.name = std::move(name);
    s.optimal = optimal;
    std::erase_if(arcs, [](const Arc& a) { return !(a.span.end > a.span.begin); });
    s.arcs = std::move(arcs);
    s.J = sup_value(prm, s.arcs);
    return s;
}

}  // namespace detail

/// Closed-form J for each case.
inline double closed_form_value(const Params& prm, Case tag) {
    const auto st = switch_times(prm);
    const double a = prm.alpha;
    switch (tag) {
        case Case::a:
            return prm.x0 * std::exp(st.t1);
        case Case::b:
            return std::pow(a, a / (1.0 - a)) *
                   std::pow((1.0 - a) * prm.T + std::pow(prm.x0, 1.0 - a), 1.0 / (1.0 - a));
        case Case::c:
        case Case::d:
            return std::exp(prm.T - 1.0 - st.sigma);
    }
    return 0.0;
}

/// Analytic optimum. Case d yields two candidates, B (system 2 only) first and
/// the optimal C (switch at sigma) second.
inline std::vector<Solution> analytic_solution(const Params& prm) {
    const Case tag = classify_case(prm);
    const auto st = switch_times(prm);
    const double T = prm.T;
    auto b_arcs = [&] { return std::vector<Arc>{{{0.0, st.t2}, 2, 1}, {{st.t2, T}, 2, 0}}; };
    auto c_arcs = [&] {
        return std::vector<Arc>{{{0.0, st.sigma}, 2, 1}, {{st.sigma, st.t1}, 1, 1}, {{st.t1, T}, 1, 0}};
    };
    switch (tag) {
        case Case::a:
            return {detail::make_solution(prm, tag, "", true, {{{0.0, st.t1}, 1, 1}, {{st.t1, T}, 1, 0}})};
        case Case::b:
            return {detail::make_solution(prm, tag, "", true, b_arcs())};
        case Case::c:
            return {detail::make_solution(prm, tag, "", true, c_arcs())};
        case Case::d:
            return {detail::make_solution(prm, tag, "B", false, b_arcs()),
                    detail::make_solution(prm, tag, "C", true, c_arcs())};
    }
    return {};
}

/// Every bang-bang process of the a/b/c shapes that satisfies the maximum
/// principle for these parameters: A when x0 >= 1; otherwise B while its state
/// stays <= 1, and C while sigma <= t1. Sorted by J, best first.
inline std::vector<Solution> pmp_candidates(const Params& prm) {
    const Case tag = classify_case(prm);
    if (tag == Case::a) {
        return analytic_solution(prm);
    }
    const auto st = switch_times(prm);
    const double T = prm.T;
    std::vector<Solution> out;
    if (T <= case_threshold(prm) * (1.0 + 1e-12)) {
        out.push_back(detail::make_solution(prm, tag, "B", false,
                                            {{{0.0, st.t2}, 2, 1}, {{st.t2, T}, 2, 0}}));
    }
    if (st.sigma <= st.t1) {
        out.push_back(detail::make_solution(
            prm, tag, "C", false,
            {{{0.0, st.sigma}, 2, 1}, {{st.sigma, st.t1}, 1, 1}, {{st.t1, T}, 1, 0}}));
    }
    std::stable_sort(out.begin(), out.end(), [](const Solution& l, const Solution& r) { return l.J > r.J; });
    if (!out.empty()) {
        out.front().optimal = true;
    }
    return out;
}

/// Solution of the adjoint equation backward from p(T) = 0, arc by arc.
/// Invest (v = 1) exactly where p > 1.
inline double adjoint_closed_form(const Solution& sol, double t) {
    const double a = sol.params.alpha;
    double p = 0.0;
    for (std::size_t i = sol.arcs.size(); i-- > 0;) {
        const Arc& arc = sol.arcs[i];
        const double b = arc.span.end;
        const bool inside = t >= arc.span.begin;
        const double s = inside ? t : arc.span.begin;
        const double x0 = sol.arc_start_state(i);
        if (arc.system == 1) {
            p = arc.v == 0 ? p + (b - s) : p * std::exp(b - s);
        } else if (arc.v == 0) {
            p += a * std::pow(x0, a - 1.0) * (b - s);
        } else {
            const double xb = sol.flow(arc, x0, arc.span.length());
            const double xs = sol.flow(arc, x0, s - arc.span.begin);
            p *= std::pow(xb / xs, a);
        }
        if (inside) {
            return p;
        }
    }
    return p;
}

/// Minimization form: f^i = -(1-u) x^(e_i), phi^i = u x^(e_i), h0 = x - x0, h1 absent.
inline ProblemSpec build_problem(const Params& prm) {
    prm.validate();
    const double a = prm.alpha;
    ProblemSpec spec;
    auto make = [&](int label) {
        ControlSystem s;
        s.name = label == 1 ? "linear" : "concave";
        s.state_dim = 1;
        s.controls = ControlBox::interval(0.0, 1.0);
        s.autonomous = true;
        const double e = label == 1 ? 1.0 : a;
        auto g = [e](double x) { return e == 1.0 ? x : std::pow(x, e); };
        auto dg = [e](double x) { return e == 1.0 ? 1.0 : e * std::pow(x, e - 1.0); };
        s.integrand = [g](double, const Vec& x, const Vec& u) { return -(1.0 - u[0]) * g(x[0]); };
        s.dynamics = [g](double, const Vec& x, const Vec& u) -> Vec {
            return Vec::Constant(1, u[0] * g(x[0]));
        };
        s.integrand_x = [dg](double, const Vec& x, const Vec& u) -> Vec {
            return Vec::Constant(1, -(1.0 - u[0]) * dg(x[0]));
        };
        s.dynamics_x = [dg](double, const Vec& x, const Vec& u) -> Mat {
            return Mat::Constant(1, 1, u[0] * dg(x[0]));
        };
        s.integrand_t = [](double, const Vec&, const Vec&) { return 0.0; };
        s.dynamics_t = [](double, const Vec&, const Vec&) -> Vec { return Vec::Zero(1); };
        return s;
    };
    spec.systems = {make(1), make(2)};
    spec.h0 = BoundaryMap::fixed_point(Vec::Constant(1, prm.x0));
    spec.h1 = BoundaryMap::none();
    spec.mode = TimeMode::fixed;
    spec.horizon = {0.0, prm.T};
    spec.validate();
    return spec;
}

/// Smallest n in [n_min, 4 n_min] whose uniform grid on [0, T] has every time
/// in `times` on a node (to 1e-9 T); n_min when none does.
inline std::size_t aligned_cells(double T, const std::vector<double>& times, std::size_t n_min) {
    for (std::size_t n = n_min; n <= 4 * n_min; ++n) {
        const bool ok = std::all_of(times.begin(), times.end(), [&](double t) {
            const double k = t / T * static_cast<double>(n);
            return std::abs(k - std::round(k)) * T / static_cast<double>(n) <= 1e-9 * T;
        });
        if (ok) {
            return n;
        }
    }
    return n_min;
}

/// Multiprocess of an analytic solution: strategy and controls from the arcs,
/// state by forward integration.
inline Multiprocess to_multiprocess(const ProblemSpec& spec, const Solution& sol, std::size_t n_cells) {
    std::vector<double> cuts;
    for (const auto& arc : sol.arcs) {
        cuts.push_back(arc.span.begin);
    }
    const TimeGrid grid(0.0, sol.params.T, aligned_cells(sol.params.T, cuts, n_cells));
    ControlProgram u(2, std::vector<Vec>(grid.n_cells()));
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
        const Vec v = Vec::Constant(1, sol.control_at(grid.midpoint(j)));
        u[0][j] = v;
        u[1][j] = v;
    }
    return simulate(spec, snap_to_grid(sol.strategy(), grid), std::move(u),
                    Vec::Constant(1, sol.params.x0), grid);
}

/// Sup-convention objective of a simulated multiprocess.
inline double simulated_value(const ProblemSpec& spec, const Multiprocess& mp) {
    return -objective(spec, mp);
}

/// Maximum principle check of an analytic solution with lambda0 = 1, including
/// the mismatch between numeric and closed-form adjoints at the nodes.
inline PMPReport verify_pmp(const Solution& sol, std::size_t n_cells = 2000) {
    if (n_cells < 100) {
        throw InvalidParams("verify_pmp needs n_cells >= 100");
    }
    const ProblemSpec spec = build_problem(sol.params);
    const Multiprocess mp = to_multiprocess(spec, sol, n_cells);
    Multipliers mult;
    mult.lambda0 = 1.0;
    PMPReport r = check_pmp(spec, mp, mult);
    double err = 0.0;
    for (std::size_t j = 0; j < mp.grid.n_nodes(); ++j) {
        err = std::max(err, std::abs(r.adjoint.p[j][0] - adjoint_closed_form(sol, mp.grid.node(j))));
    }
    r.adjoint_reference_error = err;
    return r;
}

/// Reports for every analytic candidate (two in case d).
inline std::vector<PMPReport> verify_pmp(const Params& prm, std::size_t n_cells = 2000) {
    std::vector<PMPReport> out;
    for (const auto& sol : analytic_solution(prm)) {
        out.push_back(verify_pmp(sol, n_cells));
    }
    return out;
}

struct WitnessResult {
    int n = 0;
    double delta_j = 0.0;    // J(spliced) - J(B), sup convention
    double bound = 0.0;      // (1/n)(1/a - 1 - 1/n)
    double distance = 0.0;   // sup-norm distance of the two state paths
    double expected_distance = 0.0;  // e^(1/n) - 1
    std::size_t n_cells = 0;
};

/// Case d: splices the C strategy with a 1/n-extended investment phase onto the
/// B candidate over [sigma, T] and measures the gain.
inline WitnessResult case_d_witness(const Params& prm, int n, std::size_t n_cells = 2400) {
    if (classify_case(prm) != Case::d) {
        throw WrongCase("case_d_witness applies to case d only");
    }
    const double a = prm.alpha;
    if (!(static_cast<double>(n) > a / (1.0 - a))) {
        throw InvalidParams("n must exceed alpha/(1-alpha)");
    }
    const auto sols = analytic_solution(prm);
    const Solution& b = sols[0];
    const Solution& c = sols[1];
    const double sigma = b.times.sigma;
    const double needle_end = sigma + 1.0 / n;
    if (!(needle_end < prm.T)) {
        throw InvalidParams("needle [sigma, sigma + 1/n) leaves [0, T]");
    }

    const ProblemSpec spec = build_problem(prm);
    const Multiprocess base = to_multiprocess(spec, b, n_cells);
    const auto& grid = base.grid;
    ControlProgram vn(2, std::vector<Vec>(grid.n_cells()));
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
        const double tm = grid.midpoint(j);
        const double v = (tm >= sigma && tm < needle_end) ? 1.0 : b.control_at(tm);
        vn[0][j] = Vec::Constant(1, v);
        vn[1][j] = Vec::Constant(1, v);
    }
    const IntervalSet m{{sigma, prm.T}};
    const auto res = needle_improvement(spec, base, vn, snap_to_grid(c.strategy(), grid), m);

    WitnessResult w;
    w.n = n;
    w.n_cells = grid.n_cells();
    w.delta_j = -res.delta_j;
    w.bound = (1.0 / n) * (1.0 / a - 1.0 - 1.0 / n);
    w.expected_distance = std::exp(1.0 / n) - 1.0;
    for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
        w.distance = std::max(w.distance, std::abs(res.spliced.x[j][0] - base.x[j][0]));
    }
    return w;
}

struct BruteForceResult {
    double J = 0.0;
    std::size_t s1 = 0;  // node indices of the two switch points
    std::size_t s2 = 0;
    std::array<int, 3> system{};
    std::array<int, 3> v{};
};

/// Exhaustive search over programs with at most two switches at grid nodes and
/// bang-bang arcs (system, v) in {1,2} x {0,1}, evaluated with exact arc flows.
/// Ties keep the lexicographically smallest encoding (s1, s2, labels).
inline BruteForceResult brute_force(const Params& prm, std::size_t n_cells = 200) {
    prm.validate();
    const double a = prm.alpha;
    const double h = prm.T / static_cast<double>(n_cells);
    auto run_arc = [&](int code, double x, double len, double& j) {
        const int sys = 1 + (code >> 1);
        const int v = code & 1;
        if (v == 0) {
            j += (sys == 1 ? x : std::pow(x, a)) * len;
            return x;
        }
        if (sys == 1) {
            return x * std::exp(len);
        }
        return std::pow(std::pow(x, 1.0 - a) + (1.0 - a) * len, 1.0 / (1.0 - a));
    };

    const std::size_t nodes = n_cells + 1;
    std::vector<BruteForceResult> best(nodes);
    std::vector<char> found(nodes, 0);
    parallel_for(nodes, [&](std::size_t s1) {
        BruteForceResult local;
        bool any = false;
        for (std::size_t s2 = s1; s2 < nodes; ++s2) {
            const double l0 = static_cast<double>(s1) * h;
            const double l1 = static_cast<double>(s2 - s1) * h;
            const double l2 = prm.T - static_cast<double>(s2) * h;
            for (int code = 0; code < 64; ++code) {
                const int c0 = code >> 4;
                const int c1 = (code >> 2) & 3;
                const int c2 = code & 3;
                double j = 0.0;
                double x = run_arc(c0, prm.x0, l0, j);
                x = run_arc(c1, x, l1, j);
                run_arc(c2, x, l2, j);
                if (!any || j > local.J) {
                    any = true;
                    local = {j, s1, s2, {1 + (c0 >> 1), 1 + (c1 >> 1), 1 + (c2 >> 1)},
                             {c0 & 1, c1 & 1, c2 & 1}};
                }
            }
        }
        best[s1] = local;
        found[s1] = any ? 1 : 0;
    });
    BruteForceResult out;
    bool any = false;
    for (std::size_t s1 = 0; s1 < nodes; ++s1) {
        if (found[s1] && (!any || best[s1].J > out.J)) {
            out = best[s1];
            any = true;
        }
    }
    return out;
}

}  // namespace multiproc::investment
