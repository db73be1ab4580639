#pragma once

// Grid dynamic-programming oracle for the minimum time of the coupled tanks.
// Forward breadth-first search over a binned state space: one representative
// (exact state) per bin, first arrival wins. Actions: u in {0, .25, .5, .75, 1}
// under system 1, plus system 2. Each step is the exact affine map of the
// action over dt, built here by a fine independent RK4.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace oracle {

struct Affine {
    double m11, m12, m21, m22, c1, c2;
};

inline Affine affine_step(double a, double b1, double b2, double dt) {
    // columns: images of e1, e2 under the homogeneous part, plus the image of 0
    auto integrate = [&](double x1, double x2, bool with_input) {
        const int sub = 64;
        const double h = dt / sub;
        auto rhs = [&](double y1, double y2, double& d1, double& d2) {
            d1 = -a * y1 + (with_input ? b1 : 0.0);
            d2 = a * y1 - a * y2 + (with_input ? b2 : 0.0);
        };
        for (int i = 0; i < sub; ++i) {
            double k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b;
            rhs(x1, x2, k1a, k1b);
            rhs(x1 + 0.5 * h * k1a, x2 + 0.5 * h * k1b, k2a, k2b);
            rhs(x1 + 0.5 * h * k2a, x2 + 0.5 * h * k2b, k3a, k3b);
            rhs(x1 + h * k3a, x2 + h * k3b, k4a, k4b);
            x1 += h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a);
            x2 += h / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b);
        }
        return std::array<double, 2>{x1, x2};
    };
    const auto e1 = integrate(1.0, 0.0, false);
    const auto e2 = integrate(0.0, 1.0, false);
    const auto c = integrate(0.0, 0.0, true);
    return {e1[0], e2[0], e1[1], e2[1], c[0], c[1]};
}

struct DpResult {
    double time = 0.0;
    std::size_t expanded = 0;
};

/// Earliest time at which some discrete trajectory passes within hit_tol of the
/// target; dt = horizon_hint / 400, bins of hit_tol / 2.
inline std::optional<DpResult> tank_min_time(double a, double A, std::array<double, 2> x0,
                                             std::array<double, 2> xf, double horizon_hint,
                                             double hit_tol = 0.005, double max_factor = 1.5) {
    const double dt = horizon_hint / 400.0;
    std::vector<Affine> acts;
    for (double u : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        acts.push_back(affine_step(a, u * A, (1.0 - u) * A, dt));
    }
    acts.push_back(affine_step(a, 0.0, 0.0, dt));

    // levels stay inside [0, max(x0, xf, A/a)] up to the start values
    const double bin = 0.5 * hit_tol;
    const double lo = std::min({0.0, x0[0], x0[1]}) - 1.0;
    const double hi = std::max({x0[0], x0[1], xf[0], xf[1], A / a}) + 1.0;
    const auto side = static_cast<std::size_t>(std::ceil((hi - lo) / bin)) + 1;
    std::vector<std::uint8_t> seen(side * side, 0);
    auto visit = [&](double x1, double x2) {
        if (x1 < lo || x2 < lo || x1 >= hi || x2 >= hi) {
            return false;
        }
        const auto i = static_cast<std::size_t>((x1 - lo) / bin);
        const auto j = static_cast<std::size_t>((x2 - lo) / bin);
        auto& cell = seen[i * side + j];
        if (cell) {
            return false;
        }
        cell = 1;
        return true;
    };
    auto seg_hit = [&](double p1, double p2, double q1, double q2) -> std::optional<double> {
        const double d1 = q1 - p1, d2 = q2 - p2;
        const double len2 = d1 * d1 + d2 * d2;
        double s = len2 > 0.0 ? ((xf[0] - p1) * d1 + (xf[1] - p2) * d2) / len2 : 0.0;
        s = std::clamp(s, 0.0, 1.0);
        const double e1 = p1 + s * d1 - xf[0], e2 = p2 + s * d2 - xf[1];
        if (std::sqrt(e1 * e1 + e2 * e2) <= hit_tol) {
            return s;
        }
        return std::nullopt;
    };

    std::vector<std::array<double, 2>> front{x0}, next;
    visit(x0[0], x0[1]);
    DpResult res;
    const auto max_steps = static_cast<std::size_t>(400.0 * max_factor);
    for (std::size_t step = 0; step < max_steps && !front.empty(); ++step) {
        std::optional<double> best;
        next.clear();
        for (const auto& x : front) {
            ++res.expanded;
            for (const auto& m : acts) {
                const double y1 = m.m11 * x[0] + m.m12 * x[1] + m.c1;
                const double y2 = m.m21 * x[0] + m.m22 * x[1] + m.c2;
                if (auto s = seg_hit(x[0], x[1], y1, y2)) {
                    if (!best || *s < *best) {
                        best = s;
                    }
                }
                if (visit(y1, y2)) {
                    next.push_back({y1, y2});
                }
            }
        }
        if (best) {
            res.time = (static_cast<double>(step) + *best) * dt;
            return res;
        }
        front.swap(next);
    }
    return std::nullopt;
}

}  // namespace oracle
