#pragma once

// Randomized property checks for partitions. The reference indicator is a
// linear scan over the raw segment list used to build each partition.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "multiproc/partition.hpp"

namespace oracle {

struct RawPartition {
    int k = 1;
    multiproc::Interval domain;
    std::vector<multiproc::Segment> segs;

    [[nodiscard]] int label(double t) const {
        if (t == domain.end) {
            return segs.back().label;
        }
        for (const auto& s : segs) {
            if (s.span.begin <= t && t < s.span.end) {
                return s.label;
            }
        }
        return 0;
    }
};

inline RawPartition random_partition(std::mt19937_64& rng, int k, multiproc::Interval dom) {
    std::uniform_int_distribution<int> n_seg(1, 8);
    std::uniform_int_distribution<int> lab(1, k);
    std::uniform_real_distribution<double> pos(dom.begin, dom.end);
    std::vector<double> cuts{dom.begin, dom.end};
    const int n = n_seg(rng);
    for (int i = 1; i < n; ++i) {
        cuts.push_back(pos(rng));
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    RawPartition r{k, dom, {}};
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        r.segs.push_back({{cuts[i], cuts[i + 1]}, lab(rng)});
    }
    return r;
}

inline std::vector<multiproc::Interval> random_needle(std::mt19937_64& rng, multiproc::Interval dom) {
    std::uniform_int_distribution<int> n_parts(0, 3);
    std::uniform_real_distribution<double> pos(dom.begin, dom.end);
    std::vector<multiproc::Interval> out;
    const int n = n_parts(rng);
    for (int i = 0; i < n; ++i) {
        double a = pos(rng), b = pos(rng);
        if (a > b) {
            std::swap(a, b);
        }
        out.push_back({a, b});
    }
    return out;
}

struct PropertyCounts {
    std::size_t cases = 0;
    std::size_t one_hot = 0;
    std::size_t linearity = 0;
    std::size_t distribution = 0;
    std::size_t closure = 0;
    std::size_t additivity = 0;
    std::vector<std::string> first_failures;

    [[nodiscard]] std::size_t failures() const {
        return one_hot + linearity + distribution + closure + additivity;
    }
};

/// Runs n randomized cases; each case draws two partitions on a common domain,
/// a needle set, and sample times.
inline PropertyCounts run_partition_properties(std::size_t n, std::uint64_t seed = 20240531) {
    using multiproc::Partition;
    using Fn = std::function<double(double, double, double)>;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> kdist(1, 5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PropertyCounts c;
    auto fail = [&](std::size_t& counter, const std::string& what) {
        ++counter;
        if (c.first_failures.size() < 5) {
            c.first_failures.push_back(what);
        }
    };
    for (std::size_t cs = 0; cs < n; ++cs) {
        ++c.cases;
        const int k = kdist(rng);
        const double t0 = -5.0 + 10.0 * unit(rng);
        const multiproc::Interval dom{t0, t0 + 0.1 + 10.0 * unit(rng)};
        const auto ra = random_partition(rng, k, dom);
        const auto rb = random_partition(rng, k, dom);
        const auto pa = Partition::from_segments(k, ra.segs, dom);
        const auto pb = Partition::from_segments(k, rb.segs, dom);
        const multiproc::IntervalSet m(random_needle(rng, dom));

        // families g^i(t, x, u) = w_i t + v_i x + r_i u and h^i with other weights
        std::vector<Fn> g, h, comb;
        const double alpha = -3.0 + 6.0 * unit(rng);
        const double beta = -3.0 + 6.0 * unit(rng);
        for (int i = 0; i < k; ++i) {
            const double w1 = unit(rng), v1 = unit(rng), r1 = unit(rng);
            const double w2 = unit(rng), v2 = unit(rng), r2 = unit(rng);
            g.push_back([=](double t, double x, double u) { return w1 * t + v1 * x * x + r1 * u; });
            h.push_back([=](double t, double x, double u) { return w2 * std::sin(t) + v2 * x + r2 * u * u; });
            comb.push_back([=](double t, double x, double u) {
                return alpha * (w1 * t + v1 * x * x + r1 * u) + beta * (w2 * std::sin(t) + v2 * x + r2 * u * u);
            });
        }
        std::vector<double> u(static_cast<std::size_t>(k));
        for (auto& ui : u) {
            ui = unit(rng);
        }

        std::optional<Partition> spliced;
        try {
            spliced = multiproc::needle_splice(pa, pb, m);
        } catch (const multiproc::Error& e) {
            fail(c.closure, std::string("needle_splice threw: ") + e.what());
        }

        for (int s = 0; s < 8; ++s) {
            const double t = s == 7 ? dom.end : dom.begin + (dom.end - dom.begin) * unit(rng);
            const double x = -2.0 + 4.0 * unit(rng);
            const auto ind = pa.indicator(t);
            int ones = 0;
            bool binary = true;
            for (int i = 0; i < k; ++i) {
                ones += ind[static_cast<std::size_t>(i)];
                binary = binary && ind[static_cast<std::size_t>(i)] <= 1;
            }
            if (!binary || ones != 1 || ind.active() != ra.label(t)) {
                fail(c.one_hot, "indicator at t = " + std::to_string(t));
            }
            const double lhs = multiproc::compose(pa, comb, t, x, u);
            const double rhs = alpha * multiproc::compose(pa, g, t, x, u) + beta * multiproc::compose(pa, h, t, x, u);
            if (std::abs(lhs - rhs) > 1e-12 * (1.0 + std::abs(lhs))) {
                fail(c.linearity, "linear combination at t = " + std::to_string(t));
            }
            if (spliced) {
                const bool in_m = m.contains(t) && t != dom.end;
                const double want = in_m ? multiproc::compose(pb, g, t, x, u) : multiproc::compose(pa, g, t, x, u);
                const double got = multiproc::compose(*spliced, g, t, x, u);
                const int want_label = in_m ? rb.label(t) : ra.label(t);
                if (t != dom.end && (got != want || spliced->label_at(t) != want_label)) {
                    fail(c.distribution, "splice composition at t = " + std::to_string(t));
                }
            }
        }
        if (spliced) {
            double total = 0.0;
            for (int i = 1; i <= k; ++i) {
                total += spliced->measure_of_class(i);
            }
            if (std::abs(total - (dom.end - dom.begin)) > 1e-12 * (1.0 + std::abs(dom.end - dom.begin))) {
                fail(c.closure, "spliced classes do not cover the domain");
            }
        }
        double total = 0.0;
        double direct = 0.0;
        for (int i = 1; i <= k; ++i) {
            total += pa.measure_of_class(i);
        }
        for (const auto& s : ra.segs) {
            direct += s.span.length();
        }
        if (std::abs(total - direct) > 1e-12 * (1.0 + direct) || std::abs(total - (dom.end - dom.begin)) > 1e-12 * (1.0 + (dom.end - dom.begin))) {
            fail(c.additivity, "class measures sum to " + std::to_string(total));
        }
    }
    return c;
}

}  // namespace oracle
