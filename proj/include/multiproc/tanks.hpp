#pragma once

// Time-optimal control of two coupled tanks.
//   system 1: x1' = -a x1 + u A,  x2' = a x1 - a x2 + (1-u) A,  u in [0, 1]
//   system 2: x1' = -a x1,        x2' = a x1 - a x2
// Optional state constraint x2 >= S.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "multiproc/errors.hpp"
#include "multiproc/parallel.hpp"
#include "multiproc/partition.hpp"
#include "multiproc/pmp.hpp"
#include "multiproc/system.hpp"

namespace multiproc::tanks {

using Vec2 = Eigen::Vector2d;

struct Params {
    double a = 1.0;
    double A = 10.0;
    Vec2 x_init{9.0, 2.0};
    Vec2 x_target{5.0, 5.0};
    std::optional<double> S;

    void validate() const {
        if (!(a > 0.0) || !(A > 0.0) || !std::isfinite(a) || !std::isfinite(A)) {
            throw InvalidParams("tank rates a and A must be positive");
        }
        if (!x_init.allFinite() || !x_target.allFinite()) {
            throw InvalidParams("tank states must be finite");
        }
        if (S) {
            if (!(x_init[1] > *S) || !(x_target[1] > *S)) {
                throw InvalidParams("initial and target level of tank 2 must exceed S");
            }
            if (!(A > a * *S)) {
                throw InvalidParams("the boundary arc needs A > a S");
            }
        }
    }

    [[nodiscard]] Params with_init(const Vec2& x) const {
        Params p = *this;
        p.x_init = x;
        return p;
    }
    [[nodiscard]] Params unconstrained() const {
        Params p = *this;
        p.S.reset();
        return p;
    }
};

// ---------------------------------------------------------------- adjoints

struct Seed {
    double p0 = 0.0;
    double q0 = 0.0;
};

struct Costate {
    double p = 0.0;
    double q = 0.0;
};

/// p(t) = e^{at} (p0 - a t q0), q(t) = e^{at} q0.
inline Costate adjoint_closed_form(const Seed& s, double a, double t) {
    const double e = std::exp(a * t);
    return {e * (s.p0 - a * t * s.q0), e * s.q0};
}

struct SeedInfo {
    int kind = 1;  // 1: q0 = 0, 2: q0 > 0, 3: q0 < 0
    std::optional<double> sigma;   // p = q
    std::optional<double> sigma0;  // p = 0
};

inline SeedInfo classify_seed(const Seed& s, double a) {
    if (s.p0 == 0.0 && s.q0 == 0.0) {
        throw DegenerateSeed("(p0, q0) = (0, 0) gives trivial multipliers or H = -lambda0 != 0");
    }
    SeedInfo info;
    if (s.q0 == 0.0) {
        info.kind = 1;
        return info;
    }
    info.kind = s.q0 > 0.0 ? 2 : 3;
    const double ts = (s.p0 - s.q0) / (a * s.q0);
    if (ts > 0.0) {
        info.sigma = ts;
    }
    const double t0 = s.p0 / (a * s.q0);
    if (t0 > 0.0) {
        info.sigma0 = t0;
    }
    return info;
}

// ---------------------------------------------------------------- modes and flows

/// fill1: system 1, u = 1; fill2: system 1, u = 0; drain: system 2;
/// boundary: system 1 with the singular control holding x2 = S.
enum class Mode { fill1, fill2, drain, boundary };

inline int system_of(Mode m) { return m == Mode::drain ? 2 : 1; }

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::fill1:
            return "fill1";
        case Mode::fill2:
            return "fill2";
        case Mode::drain:
            return "drain";
        case Mode::boundary:
            return "boundary";
    }
    return "?";
}

/// Control u of system 1 in mode m at state x (0 for system 2, which has none).
inline double control_of(const Params& prm, Mode m, const Vec2& x) {
    switch (m) {
        case Mode::fill1:
            return 1.0;
        case Mode::fill2:
        case Mode::drain:
            return 0.0;
        case Mode::boundary:
            return (prm.a * (x[0] - *prm.S) + prm.A) / prm.A;
    }
    return 0.0;
}

namespace detail {

/// Constant input b of the affine system x' = M x + b.
inline Vec2 input(const Params& prm, Mode m) {
    switch (m) {
        case Mode::fill1:
            return {prm.A, 0.0};
        case Mode::fill2:
            return {0.0, prm.A};
        default:
            return {0.0, 0.0};
    }
}

/// Coefficients of x2(s) = k + (a d1 s + d2) e^{-as} on a non-boundary arc.
struct X2Form {
    double k, d1, d2;
};

inline X2Form x2_form(const Params& prm, Mode m, const Vec2& x) {
    const Vec2 b = input(prm, m);
    const double c1 = b[0] / prm.a;
    const double d1 = x[0] - c1;
    const double k = c1 + b[1] / prm.a;
    return {k, d1, x[1] - k};
}

}  // namespace detail

/// Exact state after time s in mode m.
inline Vec2 flow(const Params& prm, Mode m, const Vec2& x, double s) {
    if (m == Mode::boundary) {
        return {x[0] + (prm.A - prm.a * *prm.S) * s, *prm.S};
    }
    const double a = prm.a;
    const Vec2 b = detail::input(prm, m);
    const double e = std::exp(-a * s);
    const double c1 = b[0] / a;
    const double d1 = x[0] - c1;
    const auto f2 = detail::x2_form(prm, m, x);
    return {c1 + d1 * e, f2.k + (a * d1 * s + f2.d2) * e};
}

/// Minimum of x2 over [0, len] of an arc started at x.
inline double arc_min_x2(const Params& prm, Mode m, const Vec2& x, double len) {
    double lo = std::min(x[1], flow(prm, m, x, len)[1]);
    if (m == Mode::boundary) {
        return lo;
    }
    const auto f = detail::x2_form(prm, m, x);
    if (f.d1 != 0.0) {
        const double s = (f.d1 - f.d2) / (prm.a * f.d1);
        if (s > 0.0 && s < len) {
            lo = std::min(lo, flow(prm, m, x, s)[1]);
        }
    }
    return lo;
}

/// First s in (0, len] with x2 = level and x2 decreasing through it.
inline std::optional<double> arc_first_descent(const Params& prm, Mode m, const Vec2& x, double len,
                                               double level) {
    if (m == Mode::boundary) {
        return std::nullopt;
    }
    std::vector<double> knots{0.0};
    const auto f = detail::x2_form(prm, m, x);
    if (f.d1 != 0.0) {
        const double s = (f.d1 - f.d2) / (prm.a * f.d1);
        if (s > 0.0 && s < len) {
            knots.push_back(s);
        }
    }
    knots.push_back(len);
    auto g = [&](double s) { return flow(prm, m, x, s)[1] - level; };
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        double lo = knots[i];
        double hi = knots[i + 1];
        if (!(g(lo) > 0.0 && g(hi) <= 0.0)) {
            continue;
        }
        for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) > 0.0 ? lo : hi) = mid;
        }
        return hi;
    }
    return std::nullopt;
}

/// max over systems and controls of H, minus lambda0:
/// -a x1 p + a q (x1 - x2) + A max{p, q, 0} - lambda0.
inline double hamiltonian(const Params& prm, const Vec2& x, const Costate& c, double lambda0) {
    return -prm.a * x[0] * c.p + prm.a * c.q * (x[0] - x[1]) + prm.A * std::max({c.p, c.q, 0.0}) - lambda0;
}

/// Pointwise argmax of the maximum condition with ties to system 1, then u = 0.
inline Mode best_mode(const Costate& c) {
    Mode m = Mode::fill2;
    double v = c.q;
    if (c.p > v) {
        m = Mode::fill1;
        v = c.p;
    }
    if (0.0 > v) {
        m = Mode::drain;
    }
    return m;
}

// ---------------------------------------------------------------- programs

struct ModeArc {
    Interval span;
    Mode mode = Mode::fill1;
};

struct SeedProgram {
    std::vector<ModeArc> arcs;
    bool unique = true;
    std::vector<ModeArc> alternate;  // second extremal program when not unique
};

/// Arcs of the maximum condition on [0, T] for a costate seed. For p0 < q0 = 0
/// every mix of drain and u = 0 is extremal; the drain program is returned with
/// the u = 0 program as alternate.
inline SeedProgram strategy_from_seed(const Seed& s, double a, double T) {
    if (!(T > 0.0)) {
        throw InvalidParams("strategy_from_seed needs T > 0");
    }
    const auto info = classify_seed(s, a);
    SeedProgram prog;
    if (s.q0 == 0.0 && s.p0 < 0.0) {
        prog.unique = false;
        prog.arcs = {{{0.0, T}, Mode::drain}};
        prog.alternate = {{{0.0, T}, Mode::fill2}};
        return prog;
    }
    std::vector<double> cuts{0.0};
    for (const auto& c : {info.sigma, info.sigma0}) {
        if (c && *c < T) {
            cuts.push_back(*c);
        }
    }
    cuts.push_back(T);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        const Mode m = best_mode(adjoint_closed_form(s, a, mid));
        if (!prog.arcs.empty() && prog.arcs.back().mode == m) {
            prog.arcs.back().span.end = cuts[i + 1];
        } else {
            prog.arcs.push_back({{cuts[i], cuts[i + 1]}, m});
        }
    }
    return prog;
}

inline Vec2 program_endpoint(const Params& prm, const std::vector<ModeArc>& arcs) {
    Vec2 x = prm.x_init;
    for (const auto& arc : arcs) {
        x = flow(prm, arc.mode, x, arc.span.length());
    }
    return x;
}

// ---------------------------------------------------------------- synthesis

enum class Region { X, Y, Z, boundary };

inline std::string region_name(Region r) {
    switch (r) {
        case Region::X:
            return "X";
        case Region::Y:
            return "Y";
        case Region::Z:
            return "Z";
        case Region::boundary:
            return "boundary";
    }
    return "?";
}

/// Arc of a synthesized solution with state and costate (right limits) at its start.
struct TankArc {
    Interval span;
    Mode mode = Mode::fill1;
    Vec2 x_begin{0.0, 0.0};
    Costate c_begin;
};

struct TankSynthesis {
    Params params;
    Region region = Region::boundary;          // from region_classify (unconstrained data)
    Region program_region = Region::boundary;  // read off the synthesized arc structure
    double T = 0.0;
    std::vector<TankArc> arcs;
    std::vector<TankArc> alternate;  // second program when not unique
    bool unique = true;
    Seed seed;  // initial costate, normalized to lambda0 = 1
    double lambda0 = 1.0;
    double endpoint_residual = 0.0;
    bool constrained = false;
    bool has_boundary_arc = false;

    [[nodiscard]] std::size_t arc_index(double t) const {
        for (std::size_t i = 0; i < arcs.size(); ++i) {
            if (t < arcs[i].span.end) {
                return i;
            }
        }
        return arcs.size() - 1;
    }
    [[nodiscard]] Mode mode(double t) const { return arcs[arc_index(t)].mode; }
    [[nodiscard]] int system(double t) const { return system_of(mode(t)); }
    [[nodiscard]] bool on_boundary_arc(double t) const { return mode(t) == Mode::boundary; }

    [[nodiscard]] Vec2 state(double t) const {
        const auto& arc = arcs[arc_index(t)];
        return flow(params, arc.mode, arc.x_begin, t - arc.span.begin);
    }
    [[nodiscard]] double control(double t) const {
        const auto& arc = arcs[arc_index(t)];
        return control_of(params, arc.mode, state(t));
    }
    [[nodiscard]] Costate costate(double t) const {
        const auto& arc = arcs[arc_index(t)];
        if (arc.mode == Mode::boundary) {
            return arc.c_begin;
        }
        return adjoint_closed_form({arc.c_begin.p, arc.c_begin.q}, params.a, t - arc.span.begin);
    }
    [[nodiscard]] double hamiltonian_at(double t) const {
        return tanks::hamiltonian(params, state(t), costate(t), lambda0);
    }
    /// Density of the constraint measure, a (2q - p), on boundary arcs; 0 elsewhere.
    [[nodiscard]] double density(double t) const {
        if (!on_boundary_arc(t)) {
            return 0.0;
        }
        const auto c = costate(t);
        return params.a * (2.0 * c.q - c.p);
    }
    [[nodiscard]] double min_x2() const {
        double lo = std::numeric_limits<double>::infinity();
        for (const auto& arc : arcs) {
            lo = std::min(lo, arc_min_x2(params, arc.mode, arc.x_begin, arc.span.length()));
        }
        return lo;
    }
    [[nodiscard]] Partition strategy() const {
        std::vector<Segment> segs;
        for (const auto& arc : arcs) {
            const int label = system_of(arc.mode);
            if (!segs.empty() && segs.back().label == label) {
                segs.back().span.end = arc.span.end;
            } else {
                segs.push_back({arc.span, label});
            }
        }
        segs.back().span.end = T;
        return Partition::from_segments(2, std::move(segs), {0.0, T});
    }
};

namespace detail {

/// Attaches states and costates (seed flow) to a mode program started at x0.
inline std::vector<TankArc> attach(const Params& prm, const Vec2& x0, const std::vector<ModeArc>& prog,
                                   const Seed& seed) {
    std::vector<TankArc> out;
    Vec2 x = x0;
    for (const auto& m : prog) {
        out.push_back({m.span, m.mode, x, adjoint_closed_form(seed, prm.a, m.span.begin)});
        x = flow(prm, m.mode, x, m.span.length());
    }
    return out;
}

inline Region region_of_program(const SeedProgram& prog) {
    if (!prog.unique) {
        return Region::Z;
    }
    if (prog.arcs.size() == 2) {
        if (prog.arcs[0].mode == Mode::drain && prog.arcs[1].mode == Mode::fill1) {
            return Region::X;
        }
        if (prog.arcs[0].mode == Mode::fill1 && prog.arcs[1].mode == Mode::fill2) {
            return Region::Y;
        }
    }
    return Region::boundary;
}

/// Time for x1 to move from x1 to x1f under x1' = -a x1 + b1; nullopt when unreachable.
inline std::optional<double> x1_travel_time(double a, double b1, double x1, double x1f) {
    const double c = b1 / a;
    const double num = x1 - c;
    const double den = x1f - c;
    if (num == 0.0 || den == 0.0 || (num > 0.0) != (den > 0.0)) {
        return std::nullopt;
    }
    const double t = std::log(num / den) / a;
    if (!(t >= 0.0)) {
        return std::nullopt;
    }
    return t;
}

}  // namespace detail

/// Region of x_init in the phase plane of the unconstrained problem:
///   x1 < x1f: X above the u = 1 curve through the target, Y below;
///   x1 > x1f: X above the drain curve, Z between drain and u = 0 curves, Y below u = 0.
inline Region region_classify(const Params& prm, double tol = 1e-9) {
    prm.validate();
    const Vec2& x = prm.x_init;
    const Vec2& xf = prm.x_target;
    if ((x - xf).norm() <= tol) {
        throw OnBoundary("initial state equals the target");
    }
    if (std::abs(x[0] - xf[0]) <= tol) {
        return x[1] > xf[1] ? Region::X : Region::Y;
    }
    if (x[0] < xf[0]) {
        const auto t = detail::x1_travel_time(prm.a, prm.A, x[0], xf[0]);
        if (!t) {
            throw InvalidParams("x1 target is not reachable with full inflow");
        }
        const double d = flow(prm, Mode::fill1, x, *t)[1] - xf[1];
        if (std::abs(d) <= tol) {
            throw OnBoundary("initial state lies on the u = 1 curve through the target");
        }
        return d > 0.0 ? Region::X : Region::Y;
    }
    const double t = std::log(x[0] / xf[0]) / prm.a;
    const double lo = flow(prm, Mode::drain, x, t)[1];
    const double hi = flow(prm, Mode::fill2, x, t)[1];
    if (std::abs(lo - xf[1]) <= tol || std::abs(hi - xf[1]) <= tol) {
        throw OnBoundary("initial state lies on a separating curve through the target");
    }
    if (xf[1] < lo) {
        return Region::X;
    }
    if (xf[1] > hi) {
        return Region::Y;
    }
    return Region::Z;
}

/// Separating curves through the target, traced backward in time in the
/// fill1, drain, and fill2 modes over [0, duration].
inline std::array<std::vector<Vec2>, 3> separating_curves(const Params& prm, double duration,
                                                          std::size_t samples = 200) {
    std::array<std::vector<Vec2>, 3> out;
    const std::array<Mode, 3> modes{Mode::fill1, Mode::drain, Mode::fill2};
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i <= samples; ++i) {
            const double s = -duration * static_cast<double>(i) / static_cast<double>(samples);
            out[k].push_back(flow(prm, modes[k], prm.x_target, s));
        }
    }
    return out;
}

struct ShootOptions {
    int angles = 16;
    std::vector<double> T_guesses{0.1, 0.3, 0.7, 1.5, 3.0};
    int max_iter = 80;
    double tol = 1e-11;
};

namespace detail {

struct Candidate {
    Seed seed;  // unnormalized
    double T = 0.0;
    SeedProgram program;
    double residual = std::numeric_limits<double>::infinity();
};

inline Vec2 seed_residual(const Params& prm, double theta, double T) {
    Seed s{std::cos(theta), std::sin(theta)};
    if (std::abs(s.q0) < 1e-14) {
        s.q0 = 0.0;
    }
    return program_endpoint(prm, strategy_from_seed(s, prm.a, T).arcs) - prm.x_target;
}

/// Damped Newton on (theta, T) with a forward-difference Jacobian.
inline std::optional<Candidate> newton(const Params& prm, double theta, double T, const ShootOptions& opt) {
    const double scale = 1.0 + prm.x_target.norm();
    Vec2 r = seed_residual(prm, theta, T);
    for (int it = 0; it < opt.max_iter; ++it) {
        if (r.norm() <= opt.tol * scale) {
            break;
        }
        const double ht = 1e-7;
        const double hT = 1e-7 * (1.0 + T);
        Eigen::Matrix2d jac;
        jac.col(0) = (seed_residual(prm, theta + ht, T) - r) / ht;
        jac.col(1) = (seed_residual(prm, theta, T + hT) - r) / hT;
        const Vec2 step = jac.completeOrthogonalDecomposition().solve(-r);
        if (!step.allFinite()) {
            return std::nullopt;
        }
        double lam = 1.0;
        bool moved = false;
        while (lam >= 1.0 / 1024.0) {
            double T_new = T + lam * step[1];
            if (!(T_new > 0.0)) {
                T_new = 0.5 * T;
            }
            const double th_new = theta + lam * step[0];
            const Vec2 r_new = seed_residual(prm, th_new, T_new);
            if (r_new.norm() < r.norm()) {
                theta = th_new;
                T = T_new;
                r = r_new;
                moved = true;
                break;
            }
            lam *= 0.5;
        }
        if (!moved) {
            break;
        }
    }
    if (!(r.norm() <= 1e-8 * scale)) {
        return std::nullopt;
    }
    Candidate c;
    c.seed = {std::cos(theta), std::sin(theta)};
    if (std::abs(c.seed.q0) < 1e-14) {
        c.seed.q0 = 0.0;
    }
    c.T = T;
    c.program = strategy_from_seed(c.seed, prm.a, T);
    c.residual = r.norm();
    return c;
}

/// Bisection for the switch time of a two-arc program [first, second] of total
/// length T that lands x2 on the target; nullopt when the ends do not bracket it.
inline std::optional<double> switch_for_level(const Params& prm, Mode first, Mode second, double T) {
    auto g = [&](double tau) {
        const Vec2 x = flow(prm, first, prm.x_init, tau);
        return flow(prm, second, x, T - tau)[1] - prm.x_target[1];
    };
    double lo = 0.0;
    double hi = T;
    double glo = g(lo);
    const double ghi = g(hi);
    if (glo == 0.0) {
        return lo;
    }
    if (ghi == 0.0) {
        return hi;
    }
    if ((glo > 0.0) == (ghi > 0.0)) {
        return std::nullopt;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-16 * (1.0 + T); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if ((gm > 0.0) == (glo > 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// The q0 = 0, p0 < 0 family: T* = ln(x1/x1f)/a, drain then u = 0 (canonical)
/// and u = 0 then drain (alternate).
inline std::optional<Candidate> degenerate_family(const Params& prm) {
    const Vec2& x = prm.x_init;
    const Vec2& xf = prm.x_target;
    if (!(x[0] > xf[0]) || !(xf[0] > 0.0)) {
        return std::nullopt;
    }
    const double T = std::log(x[0] / xf[0]) / prm.a;
    const auto tau = switch_for_level(prm, Mode::drain, Mode::fill2, T);
    const auto tau_alt = switch_for_level(prm, Mode::fill2, Mode::drain, T);
    if (!tau || !tau_alt) {
        return std::nullopt;
    }
    Candidate c;
    c.seed = {-1.0, 0.0};
    c.T = T;
    c.program.unique = false;
    for (const auto& [first, second, s] :
         {std::tuple{Mode::drain, Mode::fill2, *tau}, std::tuple{Mode::fill2, Mode::drain, *tau_alt}}) {
        std::vector<ModeArc> arcs;
        if (s > 0.0) {
            arcs.push_back({{0.0, s}, first});
        }
        if (s < T) {
            arcs.push_back({{s, T}, second});
        }
        (c.program.arcs.empty() ? c.program.arcs : c.program.alternate) = std::move(arcs);
    }
    c.residual = (program_endpoint(prm, c.program.arcs) - xf).norm();
    return c;
}

inline TankSynthesis finish(const Params& prm, const Candidate& c) {
    const double lambda0 = hamiltonian(prm, prm.x_init, {c.seed.p0, c.seed.q0}, 0.0);
    TankSynthesis syn;
    syn.params = prm;
    syn.T = c.T;
    syn.unique = c.program.unique;
    syn.lambda0 = 1.0;
    syn.seed = {c.seed.p0 / lambda0, c.seed.q0 / lambda0};
    syn.arcs = attach(prm, prm.x_init, c.program.arcs, syn.seed);
    if (!c.program.unique) {
        syn.alternate = attach(prm, prm.x_init, c.program.alternate, syn.seed);
    }
    syn.program_region = region_of_program(c.program);
    syn.endpoint_residual = (program_endpoint(prm, c.program.arcs) - prm.x_target).norm();
    return syn;
}

}  // namespace detail

/// Indirect shooting for the unconstrained problem: unknowns (theta, T) with
/// (p0, q0) = (cos theta, sin theta), multi-start over a ring of seed angles and
/// several T guesses, plus the q0 = 0 family. Keeps the smallest T among
/// candidates with x(T) on target and H(0) > 0 (lambda0 normalized to 1).
inline TankSynthesis shoot(const Params& prm_in, std::optional<Seed> seed_guess = std::nullopt,
                           std::optional<double> T_guess = std::nullopt, const ShootOptions& opt = {}) {
    const Params prm = prm_in.unconstrained();
    prm.validate();
    if ((prm.x_init - prm.x_target).norm() == 0.0) {
        throw OnBoundary("initial state equals the target; T* = 0");
    }
    std::vector<std::pair<double, double>> starts;
    if (seed_guess) {
        starts.emplace_back(std::atan2(seed_guess->q0, seed_guess->p0), T_guess.value_or(1.0));
    }
    for (int k = 0; k < opt.angles; ++k) {
        const double th = 2.0 * std::numbers::pi * (k + 0.5) / opt.angles;
        for (double Tg : opt.T_guesses) {
            starts.emplace_back(th, Tg);
        }
    }

    std::optional<detail::Candidate> best;
    double best_res = std::numeric_limits<double>::infinity();
    auto consider = [&](const detail::Candidate& c) {
        const double h0 = hamiltonian(prm, prm.x_init, {c.seed.p0, c.seed.q0}, 0.0);
        if (!(h0 > 1e-9)) {
            return;
        }
        if (!best || c.T < best->T - 1e-12 * (1.0 + c.T)) {
            best = c;
        }
    };
    for (const auto& [th, Tg] : starts) {
        if (auto c = detail::newton(prm, th, Tg, opt)) {
            consider(*c);
        } else {
            best_res = std::min(best_res, detail::seed_residual(prm, th, Tg).norm());
        }
    }
    if (auto c = detail::degenerate_family(prm)) {
        consider(*c);
    }
    if (!best) {
        throw NoConvergence("shooting failed from all " + std::to_string(starts.size()) +
                            " starts; best start residual " + std::to_string(best_res));
    }
    auto syn = detail::finish(prm, *best);
    try {
        syn.region = region_classify(prm);
    } catch (const OnBoundary&) {
        syn.region = Region::boundary;
    }
    return syn;
}

// ---------------------------------------------------------------- state constraint

struct BoundaryArc {
    double t_entry = 0.0;
    Vec2 x_entry{0.0, 0.0};
    double slope = 0.0;  // x1' = A - a S
    double max_duration = 0.0;  // until u reaches 1 (x1 = S)
    double costate = 0.0;       // p = q = 1/(A - a S) at lambda0 = 1
    double density = 0.0;       // lambda = a (2q - p) = a q

    [[nodiscard]] Vec2 state(double t) const { return {x_entry[0] + slope * (t - t_entry), x_entry[1]}; }
};

/// Arc with x2 held at S from x_entry: u = (a (x1 - S) + A)/A, p = q constant.
inline BoundaryArc constrained_arc(const Params& prm, const Vec2& x_entry, double t_entry) {
    if (!prm.S) {
        throw InvalidParams("constrained_arc needs S");
    }
    const double S = *prm.S;
    if (std::abs(x_entry[1] - S) > 1e-9) {
        throw EntryNotOnBoundary("entry state has x2 = " + std::to_string(x_entry[1]) +
                                 ", expected S = " + std::to_string(S));
    }
    const double u = control_of(prm, Mode::boundary, x_entry);
    if (u < -1e-12 || u > 1.0 + 1e-12) {
        throw ControlOutOfRange("boundary control u = " + std::to_string(u) + " leaves [0, 1]");
    }
    BoundaryArc arc;
    arc.t_entry = t_entry;
    arc.x_entry = {x_entry[0], S};
    arc.slope = prm.A - prm.a * S;
    arc.max_duration = std::max(0.0, (S - x_entry[0]) / arc.slope);
    arc.costate = 1.0 / arc.slope;
    arc.density = prm.a * (2.0 * arc.costate - arc.costate);
    return arc;
}

/// Synthesis under x2 >= S: the unconstrained extremal up to the first descent
/// of x2 through S, a boundary arc, then the unconstrained synthesis from the
/// earliest exit point whose continuation keeps x2 >= S (bisection, 1e-9 in time).
inline TankSynthesis synthesize_constrained(const Params& prm, const ShootOptions& opt = {}) {
    prm.validate();
    if (!prm.S) {
        return shoot(prm, std::nullopt, std::nullopt, opt);
    }
    const double S = *prm.S;
    TankSynthesis free = shoot(prm, std::nullopt, std::nullopt, opt);
    free.params = prm;
    free.constrained = true;

    std::optional<double> entry;
    std::size_t entry_arc = 0;
    for (std::size_t i = 0; i < free.arcs.size() && !entry; ++i) {
        const auto& arc = free.arcs[i];
        if (auto s = arc_first_descent(prm, arc.mode, arc.x_begin, arc.span.length(), S)) {
            entry = arc.span.begin + *s;
            entry_arc = i;
        }
    }
    if (!entry) {
        return free;
    }

    const Vec2 x_entry{flow(prm, free.arcs[entry_arc].mode, free.arcs[entry_arc].x_begin,
                            *entry - free.arcs[entry_arc].span.begin)[0],
                       S};
    const BoundaryArc barc = constrained_arc(prm, x_entry, *entry);

    auto continuation = [&](double s) -> std::optional<TankSynthesis> {
        const Vec2 xs = barc.state(*entry + s);
        if ((xs - prm.x_target).norm() <= 1e-12) {
            return std::nullopt;
        }
        try {
            TankSynthesis c = shoot(prm.unconstrained().with_init(xs), std::nullopt, std::nullopt, opt);
            if (c.min_x2() >= S - 1e-10) {
                return c;
            }
        } catch (const Error&) {
        }
        return std::nullopt;
    };

    double lo = 0.0;
    double hi = barc.max_duration;
    auto cont = continuation(hi);
    if (!cont) {
        throw NoConvergence("no feasible exit from the boundary arc before u reaches 1");
    }
    if (auto c0 = continuation(lo)) {
        hi = lo;
        cont = c0;
    }
    while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        if (auto c = continuation(mid)) {
            hi = mid;
            cont = c;
        } else {
            lo = mid;
        }
    }
    const double t_exit = *entry + hi;

    TankSynthesis syn = free;
    syn.arcs.clear();
    for (std::size_t i = 0; i <= entry_arc; ++i) {
        auto arc = free.arcs[i];
        arc.span.end = std::min(arc.span.end, *entry);
        if (arc.span.end > arc.span.begin) {
            syn.arcs.push_back(arc);
        }
    }
    if (hi > 0.0) {
        syn.arcs.push_back({{*entry, t_exit}, Mode::boundary, x_entry, {barc.costate, barc.costate}});
        syn.has_boundary_arc = true;
    }
    for (auto arc : cont->arcs) {
        arc.span.begin += t_exit;
        arc.span.end += t_exit;
        syn.arcs.push_back(arc);
    }
    syn.T = t_exit + cont->T;
    syn.unique = free.unique && cont->unique;
    syn.alternate.clear();
    Vec2 x_end = syn.arcs.back().x_begin;
    x_end = flow(prm, syn.arcs.back().mode, x_end, syn.arcs.back().span.length());
    syn.endpoint_residual = (x_end - prm.x_target).norm();
    return syn;
}

/// Unconstrained or constrained synthesis depending on params.S.
inline TankSynthesis synthesize(const Params& prm, const ShootOptions& opt = {}) {
    return prm.S ? synthesize_constrained(prm, opt) : shoot(prm, std::nullopt, std::nullopt, opt);
}

// ---------------------------------------------------------------- problem and sampling

/// Free end-time problem: f = 1, h0 = x - x_init, h1 = x - x_target, g = S - x2 when S is set.
inline ProblemSpec build_problem(const Params& prm) {
    prm.validate();
    const double a = prm.a;
    const double A = prm.A;
    ProblemSpec spec;
    auto jac = [a](double, const Vec&, const Vec&) -> Mat {
        Mat m(2, 2);
        m << -a, 0.0, a, -a;
        return m;
    };
    auto zero_t = [](double, const Vec&, const Vec&) -> Vec { return Vec::Zero(2); };
    auto unit = [](double, const Vec&, const Vec&) { return 1.0; };
    auto unit_x = [](double, const Vec&, const Vec&) -> Vec { return Vec::Zero(2); };
    auto unit_t = [](double, const Vec&, const Vec&) { return 0.0; };

    ControlSystem s1;
    s1.name = "inflow";
    s1.state_dim = 2;
    s1.controls = ControlBox::interval(0.0, 1.0);
    s1.autonomous = true;
    s1.integrand = unit;
    s1.dynamics = [a, A](double, const Vec& x, const Vec& u) -> Vec {
        Vec d(2);
        d << -a * x[0] + u[0] * A, a * x[0] - a * x[1] + (1.0 - u[0]) * A;
        return d;
    };
    s1.integrand_x = unit_x;
    s1.dynamics_x = jac;
    s1.integrand_t = unit_t;
    s1.dynamics_t = zero_t;

    ControlSystem s2;
    s2.name = "stopped";
    s2.state_dim = 2;
    s2.controls = ControlBox::none();
    s2.autonomous = true;
    s2.integrand = unit;
    s2.dynamics = [a](double, const Vec& x, const Vec&) -> Vec {
        Vec d(2);
        d << -a * x[0], a * x[0] - a * x[1];
        return d;
    };
    s2.integrand_x = unit_x;
    s2.dynamics_x = jac;
    s2.integrand_t = unit_t;
    s2.dynamics_t = zero_t;

    spec.systems = {s1, s2};
    spec.h0 = BoundaryMap::fixed_point(Vec(prm.x_init));
    spec.h1 = BoundaryMap::fixed_point(Vec(prm.x_target));
    spec.mode = TimeMode::free;
    if (prm.S) {
        const double S = *prm.S;
        StateConstraint g;
        g.name = "floor";
        g.g = [S](double, const Vec& x) { return S - x[1]; };
        g.g_x = [](double, const Vec&) -> Vec { return Vec2(0.0, -1.0); };
        g.g_t = [](double, const Vec&) { return 0.0; };
        spec.constraints.push_back(g);
    }
    spec.validate();
    return spec;
}

/// Multiprocess on a uniform grid over [0, T] with exact node states; each cell
/// takes the mode at its midpoint.
inline Multiprocess to_multiprocess(const TankSynthesis& syn, std::size_t n_cells) {
    const TimeGrid grid(0.0, syn.T, n_cells);
    ControlProgram u(2, std::vector<Vec>(grid.n_cells()));
    std::vector<Segment> segs;
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
        const double tm = grid.midpoint(j);
        u[0][j] = Vec::Constant(1, std::clamp(syn.control(tm), 0.0, 1.0));
        u[1][j] = Vec(0);
        const int label = syn.system(tm);
        if (!segs.empty() && segs.back().label == label) {
            segs.back().span.end = grid.node(j + 1);
        } else {
            segs.push_back({{grid.node(j), grid.node(j + 1)}, label});
        }
    }
    std::vector<Vec> x;
    for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
        x.emplace_back(Vec(syn.state(grid.node(j))));
    }
    return {grid, std::move(x), std::move(u), Partition::from_segments(2, std::move(segs), {0.0, syn.T})};
}

/// Multipliers matching a synthesized unconstrained extremal: lambda0 = 1, l1 = -(p, q)(T).
inline Multipliers multipliers_of(const TankSynthesis& syn) {
    Multipliers m;
    m.lambda0 = syn.lambda0;
    const auto c = syn.costate(syn.T);
    m.l1 = -Vec2(c.p, c.q);
    return m;
}

// ---------------------------------------------------------------- phase portrait

struct PortraitEntry {
    Vec2 x_init{0.0, 0.0};
    bool ok = false;
    std::string error;
    Region region = Region::boundary;
    double T = 0.0;
    bool unique = true;
    bool has_boundary_arc = false;
    std::vector<double> t;
    std::vector<Vec2> x;
};

inline std::vector<Vec2> lattice(const Vec2& lo, const Vec2& hi, std::size_t nx, std::size_t ny) {
    std::vector<Vec2> pts;
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const double fx = nx > 1 ? static_cast<double>(i) / static_cast<double>(nx - 1) : 0.5;
            const double fy = ny > 1 ? static_cast<double>(j) / static_cast<double>(ny - 1) : 0.5;
            pts.emplace_back(lo[0] + (hi[0] - lo[0]) * fx, lo[1] + (hi[1] - lo[1]) * fy);
        }
    }
    return pts;
}

/// Synthesizes every lattice point (in parallel); failures are recorded per point.
inline std::vector<PortraitEntry> phase_portrait(const Params& prm, const std::vector<Vec2>& points,
                                                 std::size_t samples = 50) {
    std::vector<PortraitEntry> out(points.size());
    parallel_for(points.size(), [&](std::size_t i) {
        PortraitEntry& e = out[i];
        e.x_init = points[i];
        try {
            const auto syn = synthesize(prm.with_init(points[i]));
            e.ok = true;
            e.region = syn.region;
            e.T = syn.T;
            e.unique = syn.unique;
            e.has_boundary_arc = syn.has_boundary_arc;
            for (std::size_t k = 0; k <= samples; ++k) {
                const double t = syn.T * static_cast<double>(k) / static_cast<double>(samples);
                e.t.push_back(t);
                e.x.push_back(syn.state(t));
            }
        } catch (const Error& err) {
            e.error = err.what();
        }
    });
    return out;
}

}  // namespace multiproc::tanks
