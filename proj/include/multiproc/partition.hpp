#pragma once

// k-fold partitions of a time interval: the switching strategy of a
// multiprocess. Each class A^i is a finite union of half-open intervals
// [a, b); the closed right end of the domain belongs to the last segment.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "multiproc/errors.hpp"

namespace multiproc {

struct Interval {
    double begin = 0.0;
    double end = 0.0;

    [[nodiscard]] double length() const { return end - begin; }
    [[nodiscard]] bool contains(double t) const { return begin <= t && t < end; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Uniform grid t_j = t_start + j (t_end - t_start) / n_cells, j = 0..n_cells.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t_start, double t_end, std::size_t n_cells)
        : t_start_(t_start), t_end_(t_end), n_cells_(n_cells) {
        if (!(t_start < t_end)) {
            throw Error("TimeGrid: t_start must be < t_end");
        }
        if (n_cells == 0) {
            throw Error("TimeGrid: n_cells must be >= 1");
        }
    }

    [[nodiscard]] double t_start() const { return t_start_; }
    [[nodiscard]] double t_end() const { return t_end_; }
    [[nodiscard]] std::size_t n_cells() const { return n_cells_; }
    [[nodiscard]] std::size_t n_nodes() const { return n_cells_ + 1; }
    [[nodiscard]] double span() const { return t_end_ - t_start_; }
    [[nodiscard]] double step() const { return span() / static_cast<double>(n_cells_); }

    [[nodiscard]] double node(std::size_t j) const {
        if (j >= n_cells_) {
            return t_end_;
        }
        return t_start_ + static_cast<double>(j) * span() / static_cast<double>(n_cells_);
    }
    [[nodiscard]] double midpoint(std::size_t cell) const {
        return 0.5 * (node(cell) + node(cell + 1));
    }
    [[nodiscard]] Interval cell(std::size_t j) const { return {node(j), node(j + 1)}; }

    /// Index of the node closest to t (clamped to the grid).
    [[nodiscard]] std::size_t nearest_node(double t) const {
        const double r = (t - t_start_) / step();
        if (r <= 0.0) {
            return 0;
        }
        const auto j = static_cast<std::size_t>(r + 0.5);
        return std::min(j, n_cells_);
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double t_start_ = 0.0;
    double t_end_ = 1.0;
    std::size_t n_cells_ = 1;
};

/// Finite union of half-open intervals, kept sorted and merged.
class IntervalSet {
public:
    IntervalSet() = default;
    IntervalSet(std::initializer_list<Interval> parts) : IntervalSet(std::vector<Interval>(parts)) {}
    explicit IntervalSet(std::vector<Interval> parts) {
        std::erase_if(parts, [](const Interval& iv) { return !(iv.begin < iv.end); });
        std::sort(parts.begin(), parts.end(),
                  [](const Interval& a, const Interval& b) { return a.begin < b.begin; });
        for (const auto& iv : parts) {
            if (!parts_.empty() && iv.begin <= parts_.back().end) {
                parts_.back().end = std::max(parts_.back().end, iv.end);
            } else {
                parts_.push_back(iv);
            }
        }
    }

    [[nodiscard]] bool empty() const { return parts_.empty(); }
    [[nodiscard]] std::span<const Interval> parts() const { return parts_; }

    [[nodiscard]] bool contains(double t) const {
        auto it = std::upper_bound(parts_.begin(), parts_.end(), t,
                                   [](double v, const Interval& iv) { return v < iv.begin; });
        if (it == parts_.begin()) {
            return false;
        }
        return std::prev(it)->contains(t);
    }

    [[nodiscard]] double measure() const {
        double m = 0.0;
        for (const auto& iv : parts_) {
            m += iv.length();
        }
        return m;
    }

private:
    std::vector<Interval> parts_;
};

struct Segment {
    Interval span;
    int label = 1;  // 1..k
    friend bool operator==(const Segment&, const Segment&) = default;
};

/// One-hot characteristic vector chi_A(t) of a partition at a time point.
class IndicatorVector {
public:
    IndicatorVector(int k, int active_label) : values_(static_cast<std::size_t>(k), 0) {
        if (active_label < 1 || active_label > k) {
            throw LabelOutOfRange("indicator label " + std::to_string(active_label) +
                                  " outside 1.." + std::to_string(k));
        }
        values_[static_cast<std::size_t>(active_label - 1)] = 1;
    }

    [[nodiscard]] int k() const { return static_cast<int>(values_.size()); }
    [[nodiscard]] std::span<const std::uint8_t> values() const { return values_; }
    [[nodiscard]] std::uint8_t operator[](std::size_t i) const { return values_[i]; }

    [[nodiscard]] int active() const {
        auto it = std::find(values_.begin(), values_.end(), std::uint8_t{1});
        return static_cast<int>(it - values_.begin()) + 1;
    }

    [[nodiscard]] bool is_one_hot() const {
        int ones = 0;
        for (auto v : values_) {
            if (v > 1) {
                return false;
            }
            ones += v;
        }
        return ones == 1;
    }

    friend bool operator==(const IndicatorVector&, const IndicatorVector&) = default;

private:
    std::vector<std::uint8_t> values_;
};

class Partition {
public:
    /// Validates and sorts the segments. Endpoints are compared exactly.
    static Partition from_segments(int k, std::vector<Segment> segments, Interval domain) {
        if (k < 1) {
            throw PartitionError("partition needs k >= 1");
        }
        if (segments.empty()) {
            throw PartitionError("partition needs at least one segment");
        }
        if (!(domain.begin < domain.end)) {
            throw PartitionError("partition domain must be a nonempty interval");
        }
        for (const auto& s : segments) {
            if (s.label < 1 || s.label > k) {
                throw LabelOutOfRange("segment label " + std::to_string(s.label) +
                                      " outside 1.." + std::to_string(k));
            }
            if (!(s.span.begin < s.span.end)) {
                throw PartitionError("segment [" + std::to_string(s.span.begin) + ", " +
                                     std::to_string(s.span.end) + ") is empty");
            }
        }
        std::sort(segments.begin(), segments.end(),
                  [](const Segment& a, const Segment& b) { return a.span.begin < b.span.begin; });

        if (segments.front().span.begin < domain.begin || segments.back().span.end > domain.end) {
            throw OutOfDomain("segments extend beyond the partition domain");
        }
        if (segments.front().span.begin > domain.begin) {
            throw CoverageGapError("segments do not cover the start of the domain");
        }
        for (std::size_t i = 1; i < segments.size(); ++i) {
            const double prev_end = segments[i - 1].span.end;
            const double next_begin = segments[i].span.begin;
            if (next_begin < prev_end) {
                throw OverlapError("segments overlap at t = " + std::to_string(next_begin));
            }
            if (next_begin > prev_end) {
                throw CoverageGapError("gap between " + std::to_string(prev_end) + " and " +
                                       std::to_string(next_begin));
            }
        }
        if (segments.back().span.end < domain.end) {
            throw CoverageGapError("segments do not cover the end of the domain");
        }
        Partition p;
        p.k_ = k;
        p.domain_ = domain;
        p.segments_ = std::move(segments);
        return p;
    }

    /// Domain inferred as [min begin, max end] of the segments.
    static Partition from_segments(int k, std::vector<Segment> segments) {
        if (segments.empty()) {
            throw PartitionError("partition needs at least one segment");
        }
        Interval dom{segments.front().span.begin, segments.front().span.end};
        for (const auto& s : segments) {
            dom.begin = std::min(dom.begin, s.span.begin);
            dom.end = std::max(dom.end, s.span.end);
        }
        return from_segments(k, std::move(segments), dom);
    }

    static Partition constant(int k, int label, Interval domain) {
        return from_segments(k, {Segment{domain, label}}, domain);
    }

    [[nodiscard]] int k() const { return k_; }
    [[nodiscard]] Interval domain() const { return domain_; }
    [[nodiscard]] std::span<const Segment> segments() const { return segments_; }

    [[nodiscard]] int label_at(double t) const {
        if (t < domain_.begin || t > domain_.end) {
            throw OutOfDomain("t = " + std::to_string(t) + " outside partition domain");
        }
        if (t == domain_.end) {
            return segments_.back().label;
        }
        auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                                   [](double v, const Segment& s) { return v < s.span.begin; });
        return std::prev(it)->label;
    }

    [[nodiscard]] IndicatorVector indicator(double t) const { return {k_, label_at(t)}; }

    [[nodiscard]] double measure_of_class(int label) const {
        if (label < 1 || label > k_) {
            throw LabelOutOfRange("label " + std::to_string(label) + " outside 1.." +
                                  std::to_string(k_));
        }
        double m = 0.0;
        for (const auto& s : segments_) {
            if (s.label == label) {
                m += s.span.length();
            }
        }
        return m;
    }

    /// The class A^label as an interval union.
    [[nodiscard]] IntervalSet class_set(int label) const {
        std::vector<Interval> parts;
        for (const auto& s : segments_) {
            if (s.label == label) {
                parts.push_back(s.span);
            }
        }
        return IntervalSet(std::move(parts));
    }

    /// Adjacent segments with equal labels merged.
    [[nodiscard]] Partition normalized() const {
        Partition p;
        p.k_ = k_;
        p.domain_ = domain_;
        for (const auto& s : segments_) {
            if (!p.segments_.empty() && p.segments_.back().label == s.label) {
                p.segments_.back().span.end = s.span.end;
            } else {
                p.segments_.push_back(s);
            }
        }
        return p;
    }

    /// Interior times at which the active label changes.
    [[nodiscard]] std::vector<double> switch_times() const {
        std::vector<double> out;
        for (std::size_t i = 1; i < segments_.size(); ++i) {
            if (segments_[i].label != segments_[i - 1].label) {
                out.push_back(segments_[i].span.begin);
            }
        }
        return out;
    }

    /// Same switching strategy (after merging equal neighbours).
    [[nodiscard]] bool equivalent(const Partition& other) const {
        if (k_ != other.k_ || !(domain_ == other.domain_)) {
            return false;
        }
        const auto a = normalized();
        const auto b = other.normalized();
        return a.segments_ == b.segments_;
    }

private:
    Partition() = default;

    int k_ = 1;
    Interval domain_{};
    std::vector<Segment> segments_;
};

/// A o h (t, x, u): the active member h^i evaluated at (t, x, u^i).
/// `family[i]` and `controls[i]` belong to label i + 1; only the active
/// member is called.
template <class Family, class State, class Controls>
auto compose(const Partition& p, const Family& family, double t, const State& x,
             const Controls& controls) {
    if (static_cast<int>(std::size(family)) != p.k() ||
        static_cast<int>(std::size(controls)) != p.k()) {
        throw DimensionMismatch("compose: family and controls must have k members");
    }
    const auto i = static_cast<std::size_t>(p.label_at(t) - 1);
    return family[i](t, x, controls[i]);
}

/// y = chi_A + chi_M (chi_B - chi_A): B's labels on M, A's labels elsewhere.
inline Partition needle_splice(const Partition& a, const Partition& b, const IntervalSet& m) {
    if (a.k() != b.k() || !(a.domain() == b.domain())) {
        throw DomainMismatch("needle_splice: partitions differ in k or domain");
    }
    const Interval dom = a.domain();
    for (const auto& iv : m.parts()) {
        if (iv.begin < dom.begin || iv.end > dom.end) {
            throw OutOfDomain("needle set leaves the partition domain");
        }
    }

    std::vector<double> cuts{dom.begin, dom.end};
    for (const auto& s : a.segments()) {
        cuts.push_back(s.span.begin);
    }
    for (const auto& s : b.segments()) {
        cuts.push_back(s.span.begin);
    }
    for (const auto& iv : m.parts()) {
        cuts.push_back(iv.begin);
        cuts.push_back(iv.end);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::vector<Segment> out;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double c = cuts[i];
        const int label = m.contains(c) ? b.label_at(c) : a.label_at(c);
        if (!out.empty() && out.back().label == label) {
            out.back().span.end = cuts[i + 1];
        } else {
            out.push_back({{c, cuts[i + 1]}, label});
        }
    }
    return Partition::from_segments(a.k(), std::move(out), dom);
}

/// Piecewise constant on grid cells: each cell takes the label at its midpoint.
inline Partition snap_to_grid(const Partition& p, const TimeGrid& grid) {
    if (grid.t_start() != p.domain().begin || grid.t_end() != p.domain().end) {
        throw DomainMismatch("snap_to_grid: grid span differs from partition domain");
    }
    std::vector<Segment> out;
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
        const int label = p.label_at(grid.midpoint(j));
        if (!out.empty() && out.back().label == label) {
            out.back().span.end = grid.node(j + 1);
        } else {
            out.push_back({{grid.node(j), grid.node(j + 1)}, label});
        }
    }
    return Partition::from_segments(p.k(), std::move(out), p.domain());
}

}  // namespace multiproc
