#include <catch_amalgamated.hpp>

#include "multiproc/investment.hpp"

using namespace multiproc;
using namespace multiproc::investment;
using Catch::Approx;

TEST_CASE("parameter validation") {
    CHECK_NOTHROW(Params{0.5, 2.0, 5.0}.validate());
    CHECK_THROWS_AS((Params{1.5, 2.0, 5.0}.validate()), InvalidParams);
    CHECK_THROWS_AS((Params{0.5, -1.0, 5.0}.validate()), InvalidParams);
    CHECK_THROWS_AS((Params{0.5, 2.0, 1.0}.validate()), InvalidParams);
    // x0^(1-a)/a = 2 for x0 = 1, a = 0.5
    CHECK_THROWS_AS((Params{0.5, 1.0, 2.0}.validate()), InvalidParams);
}

TEST_CASE("switch times") {
    const auto st = switch_times({0.5, 0.25, 4.0});
    CHECK(st.t1 == 3.0);
    CHECK(st.t2 == 1.5);
    CHECK(st.sigma == 1.0);
    CHECK(switch_times({0.3, 1.0, 7.0}).sigma == 0.0);
    CHECK(switch_times({0.7, 3.0, 9.0}).t1 == 8.0);
}

TEST_CASE("case classification") {
    CHECK(classify_case({0.5, 2.0, 5.0}) == Case::a);
    CHECK(classify_case({0.5, 0.25, 2.5}) == Case::b);
    CHECK(classify_case({0.5, 0.25, 3.0}) == Case::d);
    CHECK(classify_case({0.5, 0.25, 4.0}) == Case::c);
    CHECK(case_threshold({0.5, 0.25, 2.5}) == 3.0);
    CHECK(near_threshold({0.5, 0.25, 3.0 * (1.0 + 1e-8)}));
    CHECK_FALSE(near_threshold({0.5, 0.25, 3.0}));
}

TEST_CASE("closed-form values") {
    CHECK(analytic_solution({0.5, 2.0, 5.0}).front().J == Approx(2.0 * std::exp(4.0)).epsilon(1e-14));
    CHECK(analytic_solution({0.5, 0.25, 4.0}).front().J == Approx(std::exp(2.0)).epsilon(1e-14));
    CHECK(analytic_solution({0.5, 0.25, 2.5}).front().J == Approx(1.53125).epsilon(1e-14));
    const auto d = analytic_solution({0.5, 0.25, 3.0});
    REQUIRE(d.size() == 2);
    CHECK_FALSE(d[0].optimal);
    CHECK(d[1].optimal);
    CHECK(d[0].name == "B");
    CHECK(d[1].name == "C");
}

TEST_CASE("trajectory, strategy and adjoint consistency") {
    for (const Params prm : {Params{0.5, 2.0, 5.0}, Params{0.5, 0.25, 2.5}, Params{0.5, 0.25, 4.0}}) {
        const auto sol = analytic_solution(prm).front();
        CHECK(adjoint_closed_form(sol, prm.T) == 0.0);
        for (int i = 1; i < 400; ++i) {
            const double t = prm.T * i / 400.0;
            const double x = sol.state(t);
            const double p = adjoint_closed_form(sol, t);
            if (std::abs(x - 1.0) > 1e-9) {
                CHECK(sol.system_at(t) == (x > 1.0 ? 1 : 2));
            }
            if (std::abs(p - 1.0) > 1e-9) {
                CHECK(sol.control_at(t) == (p > 1.0 ? 1 : 0));
            }
        }
        // continuity at arc joins
        for (std::size_t i = 1; i < sol.arcs.size(); ++i) {
            const double t = sol.arcs[i].span.begin;
            CHECK(sol.state(t - 1e-12) == Approx(sol.state(t)).epsilon(1e-9));
        }
    }
    const auto a = analytic_solution({0.5, 2.0, 5.0}).front();
    CHECK(adjoint_closed_form(a, 4.5) == Approx(0.5));
    CHECK(adjoint_closed_form(a, a.times.t1) == Approx(1.0));
}

TEST_CASE("PMP verification per case") {
    for (const Params prm : {Params{0.5, 2.0, 5.0}, Params{0.5, 0.25, 2.5}, Params{0.5, 0.25, 4.0}}) {
        const auto reports = verify_pmp(prm, 2000);
        REQUIRE(reports.size() == 1);
        CHECK(reports[0].pass(1e-6));
        CHECK(*reports[0].adjoint_reference_error < 1e-6);
    }
    const auto d = verify_pmp(Params{0.5, 0.25, 3.0}, 2000);
    REQUIRE(d.size() == 2);
    CHECK(d[0].pass(1e-6));
    CHECK(d[1].pass(1e-6));
}

TEST_CASE("flipping the strategy before sigma opens a gap") {
    const Params prm{0.5, 0.25, 4.0};
    const auto sol = analytic_solution(prm).front();
    const auto spec = build_problem(prm);
    auto mp = to_multiprocess(spec, sol, 2000);
    const double s = sol.times.sigma;
    mp.strategy = needle_splice(mp.strategy, Partition::constant(2, 1, {0.0, prm.T}), IntervalSet{{s / 2.0, s}});
    mp = simulate(spec, mp.strategy, mp.u, mp.x.front(), mp.grid);
    Multipliers m;
    const auto r = check_pmp(spec, mp, m);
    double gap_on_set = 0.0;
    for (std::size_t j = 0; j < mp.grid.n_cells(); ++j) {
        const double tm = mp.grid.midpoint(j);
        if (tm > s / 2.0 && tm < s) {
            gap_on_set = std::max(gap_on_set, r.max_gap[j]);
        }
    }
    CHECK(gap_on_set > 1e-3);
}

TEST_CASE("case d witness") {
    const Params prm{0.5, 0.25, 3.0};
    const auto w = case_d_witness(prm, 4);
    CHECK(w.bound == 0.1875);
    CHECK(w.delta_j > 0.1875);
    CHECK(w.distance == Approx(std::exp(0.25) - 1.0).epsilon(1e-6));
    CHECK(case_d_witness(prm, 8).bound < w.bound);
    CHECK_THROWS_AS(case_d_witness(Params{0.5, 0.25, 4.0}, 4), WrongCase);
    CHECK_THROWS_AS(case_d_witness(prm, 1), InvalidParams);
}

TEST_CASE("brute force agrees where the closed form is optimal") {
    for (const Params prm : {Params{0.5, 2.0, 5.0}, Params{0.5, 0.25, 4.0}, Params{0.5, 0.25, 3.0}}) {
        const auto bf = brute_force(prm);
        const double j = analytic_solution(prm).back().J;
        CHECK((bf.J - j) / j <= 1e-4);
        CHECK(bf.J >= j * (1.0 - 1e-4));
    }
}

TEST_CASE("case b: the stated process is an extremal but not the best one") {
    const Params prm{0.5, 0.25, 2.5};
    const auto cands = pmp_candidates(prm);
    REQUIRE(cands.size() == 2);
    CHECK(cands.front().J == Approx(std::exp(0.5)).epsilon(1e-12));
    CHECK(brute_force(prm).J == Approx(std::exp(0.5)).epsilon(1e-6));
    for (const auto& c : cands) {
        CHECK(verify_pmp(c, 2000).pass(1e-6));
    }
}
