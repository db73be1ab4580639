#include <catch_amalgamated.hpp>

#include "multiproc/partition.hpp"
#include "multiproc/serialize.hpp"
#include "oracles/partition_props.hpp"

using namespace multiproc;
using Catch::Approx;

namespace {

Partition two_piece() { return Partition::from_segments(2, {{{0.0, 3.0}, 1}, {{3.0, 5.0}, 2}}, {0.0, 5.0}); }

}  // namespace

TEST_CASE("from_segments validates covers") {
    CHECK_NOTHROW(two_piece());
    const auto one = Partition::from_segments(1, {{{0.0, 1.0}, 1}}, {0.0, 1.0});
    CHECK(one.indicator(0.5)[0] == 1);
    CHECK_THROWS_AS(Partition::from_segments(2, {{{0.0, 3.0}, 1}, {{2.0, 5.0}, 2}}, {0.0, 5.0}), OverlapError);
    CHECK_THROWS_AS(Partition::from_segments(2, {{{0.0, 2.0}, 1}, {{3.0, 5.0}, 2}}, {0.0, 5.0}), CoverageGapError);
    CHECK_THROWS_AS(Partition::from_segments(2, {{{0.0, 4.0}, 1}}, {0.0, 5.0}), CoverageGapError);
    CHECK_THROWS_AS(Partition::from_segments(2, {{{0.0, 5.0}, 3}}, {0.0, 5.0}), LabelOutOfRange);
    CHECK_THROWS_AS(Partition::from_segments(2, {{{0.0, 6.0}, 1}}, {0.0, 5.0}), OutOfDomain);
}

TEST_CASE("indicator uses half-open segments and the right endpoint") {
    const auto p = two_piece();
    CHECK(p.indicator(1.0) == IndicatorVector(2, 1));
    CHECK(p.indicator(3.0) == IndicatorVector(2, 2));
    CHECK(p.indicator(5.0) == IndicatorVector(2, 2));
    CHECK_THROWS_AS(p.indicator(5.5), OutOfDomain);
    CHECK_THROWS_AS(p.indicator(-0.1), OutOfDomain);
}

TEST_CASE("compose evaluates only the active member") {
    const auto p = two_piece();
    int calls_second = 0;
    std::vector<std::function<double(double, double, double)>> h{
        [](double, double x, double) { return x; },
        [&](double, double x, double) {
            ++calls_second;
            return x * x;
        }};
    const std::vector<double> u{0.0, 0.0};
    CHECK(compose(p, h, 1.0, 3.0, u) == 3.0);
    CHECK(calls_second == 0);
    CHECK(compose(p, h, 4.0, 3.0, u) == 9.0);
    CHECK(calls_second == 1);
    CHECK_THROWS_AS(compose(p, std::vector<std::function<double(double, double, double)>>{h[0]}, 1.0, 3.0, u),
                    DimensionMismatch);
}

TEST_CASE("needle_splice") {
    const Interval dom{0.0, 1.0};
    const auto a = Partition::constant(2, 1, dom);
    const auto b = Partition::constant(2, 2, dom);
    CHECK(needle_splice(a, b, IntervalSet{}).equivalent(a));
    CHECK(needle_splice(a, b, IntervalSet{dom}).equivalent(b));
    const auto y = needle_splice(a, b, IntervalSet{{0.4, 0.6}});
    REQUIRE(y.segments().size() == 3);
    CHECK(y.segments()[0].label == 1);
    CHECK(y.segments()[1].label == 2);
    CHECK(y.segments()[1].span.begin == 0.4);
    CHECK(y.segments()[2].label == 1);
    CHECK_THROWS_AS(needle_splice(a, Partition::constant(3, 2, dom), IntervalSet{}), DomainMismatch);
    CHECK_THROWS_AS(needle_splice(a, Partition::constant(2, 2, {0.0, 2.0}), IntervalSet{}), DomainMismatch);
}

TEST_CASE("measure_of_class") {
    const auto p = two_piece();
    CHECK(p.measure_of_class(1) == 3.0);
    CHECK(p.measure_of_class(2) == 2.0);
    CHECK(Partition::constant(1, 1, {0.0, 7.5}).measure_of_class(1) == 7.5);
    CHECK_THROWS_AS(p.measure_of_class(3), LabelOutOfRange);
}

TEST_CASE("normalized, switch times, snapping") {
    const auto p = Partition::from_segments(2, {{{0.0, 1.0}, 1}, {{1.0, 2.0}, 1}, {{2.0, 3.0}, 2}}, {0.0, 3.0});
    CHECK(p.normalized().segments().size() == 2);
    CHECK(p.switch_times() == std::vector<double>{2.0});
    const TimeGrid grid(0.0, 3.0, 6);
    const auto s = snap_to_grid(Partition::from_segments(2, {{{0.0, 1.1}, 1}, {{1.1, 3.0}, 2}}), grid);
    CHECK(s.switch_times() == std::vector<double>{1.0});
    CHECK_THROWS_AS(snap_to_grid(p, TimeGrid(0.0, 2.0, 4)), DomainMismatch);
}

TEST_CASE("partition json round trip") {
    const auto p = Partition::from_segments(3, {{{0.0, 0.1}, 3}, {{0.1, 2.0 / 3.0}, 1}, {{2.0 / 3.0, 1.0}, 2}});
    const auto j = to_json(p);
    CHECK(j["k"] == 3);
    const auto back = partition_from_json(json::parse(j.dump()));
    CHECK(back.equivalent(p));
    CHECK(back.segments()[1].span.end == 2.0 / 3.0);
    CHECK_THROWS_AS(partition_from_json(json::parse(R"({"k": 2, "domain": [0, 1]})")), PartitionError);
    CHECK_THROWS_AS(partition_from_json(json::parse(R"({"k": 2, "domain": [0, 1], "segments": [[0, 0.5, 1]]})")),
                    CoverageGapError);
}

TEST_CASE("randomized partition properties") {
    const auto c = oracle::run_partition_properties(300, 7);
    INFO((c.first_failures.empty() ? std::string() : c.first_failures.front()));
    CHECK(c.failures() == 0);
    CHECK(c.cases == 300);
}
