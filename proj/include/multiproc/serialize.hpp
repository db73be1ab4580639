#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "multiproc/errors.hpp"
#include "multiproc/investment.hpp"
#include "multiproc/partition.hpp"
#include "multiproc/pmp.hpp"
#include "multiproc/tanks.hpp"

namespace multiproc {

using json = nlohmann::json;

inline json vec_to_json(const Vec& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v[i]);
    }
    return out;
}

inline json to_json(const Partition& p) {
    json segs = json::array();
    for (const auto& s : p.segments()) {
        segs.push_back({s.span.begin, s.span.end, s.label});
    }
    return {{"k", p.k()}, {"domain", {p.domain().begin, p.domain().end}}, {"segments", segs}};
}

/// Inverse of to_json(Partition); malformed input raises PartitionError.
inline Partition partition_from_json(const json& j) {
    try {
        const int k = j.at("k").get<int>();
        const auto& dom = j.at("domain");
        if (!dom.is_array() || dom.size() != 2) {
            throw PartitionError("partition domain must be [t0, t1]");
        }
        std::vector<Segment> segs;
        for (const auto& s : j.at("segments")) {
            if (!s.is_array() || s.size() != 3) {
                throw PartitionError("partition segment must be [a, b, label]");
            }
            segs.push_back({{s[0].get<double>(), s[1].get<double>()}, s[2].get<int>()});
        }
        return Partition::from_segments(k, std::move(segs), {dom[0].get<double>(), dom[1].get<double>()});
    } catch (const json::exception& e) {
        throw PartitionError(std::string("bad partition json: ") + e.what());
    }
}

inline json to_json(const PMPReport& r) {
    const auto& grid = r.adjoint.grid;
    json t = json::array();
    json p = json::array();
    json p_right = json::array();
    for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
        t.push_back(grid.node(j));
        p.push_back(vec_to_json(r.adjoint.p[j]));
        p_right.push_back(vec_to_json(r.adjoint.p_right[j]));
    }
    json jumps = json::array();
    for (const auto& jp : r.adjoint.jumps) {
        jumps.push_back({{"t", jp.time}, {"delta", vec_to_json(jp.delta)}});
    }
    json out = {
        {"pass_tol_1e-6", r.pass(1e-6)},
        {"worst_residual", r.worst_residual()},
        {"adjoint_residual", r.adjoint_residual},
        {"transversality_residual", r.transversality_residual},
        {"l0", vec_to_json(r.l0)},
        {"max_gap_max", r.max_gap_max},
        {"max_gap_min", r.max_gap_min},
        {"nontrivial", r.nontrivial},
        {"endpoint_atom", r.endpoint_atom},
        {"nodes", {{"t", t}, {"p", p}, {"p_right", p_right}}},
        {"cells", {{"max_gap", r.max_gap}}},
        {"jumps", jumps},
    };
    if (r.adjoint_reference_error) {
        out["adjoint_reference_error"] = *r.adjoint_reference_error;
    }
    if (r.free_time) {
        out["free_time"] = {{"profile_residual", r.free_time->profile_residual},
                            {"start_residual", r.free_time->start_residual},
                            {"variation", r.free_time->variation},
                            {"profile", r.free_time->profile}};
    }
    return out;
}

namespace investment {

inline json to_json(const Solution& s) {
    json arcs = json::array();
    for (const auto& a : s.arcs) {
        arcs.push_back({{"begin", a.span.begin}, {"end", a.span.end}, {"system", a.system}, {"v", a.v}});
    }
    return {
        {"alpha", s.params.alpha},
        {"x0", s.params.x0},
        {"T", s.params.T},
        {"case", std::string(1, case_letter(s.case_tag))},
        {"candidate", s.name},
        {"optimal", s.optimal},
        {"J", s.J},
        {"switch_times", {{"t1", s.times.t1}, {"t2", s.times.t2}, {"sigma", s.times.sigma}}},
        {"arcs", arcs},
        {"strategy", multiproc::to_json(s.strategy())},
    };
}

}  // namespace investment

namespace tanks {

inline json arcs_to_json(const std::vector<TankArc>& arcs) {
    json out = json::array();
    for (const auto& a : arcs) {
        out.push_back({{"begin", a.span.begin},
                       {"end", a.span.end},
                       {"mode", mode_name(a.mode)},
                       {"system", system_of(a.mode)},
                       {"x_begin", {a.x_begin[0], a.x_begin[1]}}});
    }
    return out;
}

inline json to_json(const TankSynthesis& s) {
    json out = {
        {"a", s.params.a},
        {"A", s.params.A},
        {"init", {s.params.x_init[0], s.params.x_init[1]}},
        {"target", {s.params.x_target[0], s.params.x_target[1]}},
        {"region", region_name(s.region)},
        {"program_region", region_name(s.program_region)},
        {"T", s.T},
        {"unique", s.unique},
        {"seed", {{"p0", s.seed.p0}, {"q0", s.seed.q0}, {"lambda0", s.lambda0}}},
        {"endpoint_residual", s.endpoint_residual},
        {"arcs", arcs_to_json(s.arcs)},
        {"strategy", multiproc::to_json(s.strategy())},
    };
    if (s.params.S) {
        out["S"] = *s.params.S;
        out["has_boundary_arc"] = s.has_boundary_arc;
    }
    if (!s.unique) {
        out["alternate_arcs"] = arcs_to_json(s.alternate);
    }
    return out;
}

inline json to_json(const PortraitEntry& e) {
    json out = {{"init", {e.x_init[0], e.x_init[1]}}, {"ok", e.ok}};
    if (!e.ok) {
        out["error"] = e.error;
        return out;
    }
    json xs = json::array();
    for (const auto& x : e.x) {
        xs.push_back({x[0], x[1]});
    }
    out["region"] = region_name(e.region);
    out["T"] = e.T;
    out["unique"] = e.unique;
    out["has_boundary_arc"] = e.has_boundary_arc;
    out["t"] = e.t;
    out["x"] = xs;
    return out;
}

}  // namespace tanks

}  // namespace multiproc
