#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "multiproc/csv.hpp"
#include "multiproc/errors.hpp"
#include "multiproc/investment.hpp"
#include "multiproc/pmp.hpp"
#include "multiproc/serialize.hpp"
#include "multiproc/tanks.hpp"

namespace multiproc::cli {

enum class Command { investment, tanks, check_pmp, portrait };

enum class Verdict { pass, fail, nonunique, degenerate };

inline std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::pass:
            return "PASS";
        case Verdict::fail:
            return "FAIL";
        case Verdict::nonunique:
            return "NONUNIQUE";
        case Verdict::degenerate:
            return "DEGENERATE";
    }
    return "?";
}

inline int exit_code(Verdict v) { return v == Verdict::fail ? 1 : 0; }

constexpr int config_error_exit = 2;

struct ScenarioConfig {
    Command command = Command::investment;
    std::string model = "investment";
    investment::Params investment;
    tanks::Params tanks;
    std::size_t n_cells = 2000;
    double tol = 1e-6;
    std::optional<std::size_t> verify;  // investment PMP check grid
    bool brute_force = false;
    std::size_t brute_force_cells = 200;
    std::optional<std::pair<std::size_t, std::size_t>> portrait;
    tanks::Vec2 portrait_lo{1.0, 1.0};
    tanks::Vec2 portrait_hi{9.0, 9.0};
    std::string csv_path;
    std::string json_path;

    void validate() const {
        if (!(tol > 0.0)) {
            throw ConfigError("tol must be positive");
        }
        if (n_cells == 0) {
            throw ConfigError("n_cells must be positive");
        }
        if (model != "investment" && model != "tanks") {
            throw ConfigError("unknown model '" + model + "'");
        }
        if (portrait && (portrait->first == 0 || portrait->second == 0)) {
            throw ConfigError("portrait lattice needs nx, ny >= 1");
        }
        try {
            if (model == "investment") {
                investment.validate();
            } else {
                tanks.validate();
            }
        } catch (const InvalidParams& e) {
            throw ConfigError(e.what());
        }
    }
};

struct Residual {
    std::string name;
    double value = 0.0;
    double tol = 0.0;

    [[nodiscard]] bool ok() const { return value <= tol; }
};

struct RunSummary {
    Verdict verdict = Verdict::pass;
    std::vector<Residual> residuals;
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;
    json result;
};

// ---------------------------------------------------------------- scenario files

/// Line and column (1-based) of a byte offset in text.
inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t offset) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        const auto [line, col] = line_column(text, at);
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": malformed JSON (line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ")");
    }
}

namespace detail {

inline tanks::Vec2 pair_of(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw ConfigError("'" + key + "' must be a pair of numbers");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

inline double number_of(const json& j, const std::string& key) {
    if (!j.is_number()) {
        throw ConfigError("'" + key + "' must be a number");
    }
    return j.get<double>();
}

inline void check_keys(const json& obj, const std::vector<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) {
        throw ConfigError("'" + where + "' must be an object");
    }
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

}  // namespace detail

/// Applies a scenario document {"model", "params", "grid", ...} on top of cfg.
inline void apply_scenario(ScenarioConfig& cfg, const json& doc) {
    detail::check_keys(doc, {"model", "params", "grid", "tol", "verify", "brute_force", "portrait", "output"},
                       "scenario");
    if (!doc.contains("model") || !doc["model"].is_string()) {
        throw ConfigError("scenario needs a string 'model'");
    }
    cfg.model = doc["model"].get<std::string>();
    const json params = doc.value("params", json::object());
    if (cfg.model == "investment") {
        detail::check_keys(params, {"alpha", "x0", "T"}, "params");
        if (params.contains("alpha")) cfg.investment.alpha = detail::number_of(params["alpha"], "alpha");
        if (params.contains("x0")) cfg.investment.x0 = detail::number_of(params["x0"], "x0");
        if (params.contains("T")) cfg.investment.T = detail::number_of(params["T"], "T");
    } else if (cfg.model == "tanks") {
        detail::check_keys(params, {"a", "A", "init", "target", "S"}, "params");
        if (params.contains("a")) cfg.tanks.a = detail::number_of(params["a"], "a");
        if (params.contains("A")) cfg.tanks.A = detail::number_of(params["A"], "A");
        if (params.contains("init")) cfg.tanks.x_init = detail::pair_of(params["init"], "init");
        if (params.contains("target")) cfg.tanks.x_target = detail::pair_of(params["target"], "target");
        if (params.contains("S") && !params["S"].is_null()) cfg.tanks.S = detail::number_of(params["S"], "S");
    } else {
        throw ConfigError("unknown model '" + cfg.model + "'");
    }
    if (doc.contains("grid")) {
        detail::check_keys(doc["grid"], {"n_cells"}, "grid");
        const auto& n = doc["grid"].value("n_cells", json());
        if (!n.is_null()) {
            if (!n.is_number_integer() || n.get<long long>() <= 0) {
                throw ConfigError("grid.n_cells must be a positive integer");
            }
            cfg.n_cells = n.get<std::size_t>();
        }
    }
    if (doc.contains("tol")) cfg.tol = detail::number_of(doc["tol"], "tol");
    if (doc.contains("verify")) {
        const auto& v = doc["verify"];
        if (v.is_boolean()) {
            cfg.verify = v.get<bool>() ? std::optional<std::size_t>(cfg.n_cells) : std::nullopt;
        } else if (v.is_number_integer() && v.get<long long>() > 0) {
            cfg.verify = v.get<std::size_t>();
        } else {
            throw ConfigError("'verify' must be a boolean or a positive integer");
        }
    }
    if (doc.contains("brute_force")) {
        if (!doc["brute_force"].is_boolean()) {
            throw ConfigError("'brute_force' must be a boolean");
        }
        cfg.brute_force = doc["brute_force"].get<bool>();
    }
    if (doc.contains("portrait")) {
        const auto p = detail::pair_of(doc["portrait"], "portrait");
        if (p[0] < 1 || p[1] < 1) {
            throw ConfigError("portrait lattice needs nx, ny >= 1");
        }
        cfg.portrait = {static_cast<std::size_t>(p[0]), static_cast<std::size_t>(p[1])};
    }
    if (doc.contains("output")) {
        detail::check_keys(doc["output"], {"csv", "json"}, "output");
        cfg.csv_path = doc["output"].value("csv", cfg.csv_path);
        cfg.json_path = doc["output"].value("json", cfg.json_path);
    }
}

inline void load_scenario(ScenarioConfig& cfg, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot read config " + path);
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    apply_scenario(cfg, parse_json_text(ss.str(), path));
}

// ---------------------------------------------------------------- runs

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    f << text;
    if (!f.flush()) {
        throw IoError("write to " + path + " failed");
    }
}

inline Verdict from_residuals(const std::vector<Residual>& rs) {
    for (const auto& r : rs) {
        if (!r.ok()) {
            return Verdict::fail;
        }
    }
    return Verdict::pass;
}

inline void add_report(RunSummary& s, const std::string& prefix, const PMPReport& r, double tol) {
    s.residuals.push_back({prefix + "adjoint", r.adjoint_residual, tol});
    if (r.adjoint_reference_error) {
        s.residuals.push_back({prefix + "adjoint_vs_closed_form", *r.adjoint_reference_error, tol});
    }
    s.residuals.push_back({prefix + "transversality", r.transversality_residual, tol});
    s.residuals.push_back({prefix + "max_gap", std::max(r.max_gap_max, -r.max_gap_min), tol});
    if (r.free_time) {
        s.residuals.push_back({prefix + "free_time_profile", r.free_time->profile_residual, tol});
        s.residuals.push_back({prefix + "free_time_start", r.free_time->start_residual, tol});
    }
    s.residuals.push_back({prefix + "nontrivial", r.nontrivial ? 0.0 : 1.0, 0.5});
}

inline RunSummary run_investment(const ScenarioConfig& cfg, bool pmp) {
    RunSummary s;
    const auto& prm = cfg.investment;
    const auto sols = investment::pmp_candidates(prm);
    if (sols.empty()) {
        throw InvalidParams("no PMP candidate for these parameters");
    }
    const auto paper = investment::analytic_solution(prm);
    json cand = json::array();
    for (const auto& sol : sols) {
        cand.push_back(investment::to_json(sol));
    }
    json paper_j = json::array();
    for (const auto& sol : paper) {
        paper_j.push_back(investment::to_json(sol));
    }
    s.result = {{"model", "investment"}, {"case", std::string(1, investment::case_letter(paper.front().case_tag))},
                {"near_threshold", investment::near_threshold(prm)}, {"solutions", paper_j},
                {"candidates", cand}};

    for (const auto& sol : paper) {
        const auto spec = investment::build_problem(prm);
        const auto mp = investment::to_multiprocess(spec, sol, cfg.n_cells);
        const double jsim = investment::simulated_value(spec, mp);
        s.residuals.push_back({"simulated_J_rel" + (sol.name.empty() ? "" : "_" + sol.name),
                               std::abs(jsim - sol.J) / std::abs(sol.J), cfg.tol});
    }
    const std::optional<std::size_t> verify = pmp ? std::optional(cfg.verify.value_or(cfg.n_cells)) : cfg.verify;
    if (verify) {
        json reports = json::array();
        for (const auto& sol : paper) {
            const auto r = investment::verify_pmp(sol, *verify);
            add_report(s, "pmp" + (sol.name.empty() ? "" : "_" + sol.name) + ".", r, cfg.tol);
            reports.push_back(to_json(r));
        }
        s.result["pmp"] = reports;
    }
    if (cfg.brute_force) {
        const auto bf = investment::brute_force(prm, cfg.brute_force_cells);
        const double opt_j = paper.back().J;
        s.result["brute_force"] = {{"J", bf.J}, {"n_cells", cfg.brute_force_cells}};
        s.residuals.push_back({"brute_force_excess_rel", std::max(0.0, (bf.J - opt_j) / std::abs(opt_j)), 1e-4});
    }
    s.verdict = from_residuals(s.residuals);
    if (s.verdict == Verdict::pass && investment::near_threshold(prm)) {
        s.verdict = Verdict::degenerate;
    }
    if (!cfg.csv_path.empty()) {
        emit_csv(investment::trajectory(paper.back()), cfg.csv_path);
        s.outputs.push_back(cfg.csv_path);
    }
    return s;
}

inline RunSummary run_tanks(const ScenarioConfig& cfg, bool pmp) {
    RunSummary s;
    const auto& prm = cfg.tanks;
    if ((prm.x_init - prm.x_target).norm() == 0.0) {
        s.verdict = Verdict::degenerate;
        s.result = {{"model", "tanks"}, {"degenerate", "initial state equals the target"}};
        return s;
    }
    const auto syn = tanks::synthesize(prm);
    s.result = {{"model", "tanks"}, {"synthesis", tanks::to_json(syn)}};

    double h = 0.0;
    double floor = std::numeric_limits<double>::infinity();
    const std::size_t n = cfg.n_cells;
    for (std::size_t i = 0; i <= n; ++i) {
        const double t = syn.T * static_cast<double>(i) / static_cast<double>(n);
        const auto c = syn.costate(t);
        h = std::max(h, std::abs(syn.hamiltonian_at(t)) / (1.0 + std::abs(c.p) + std::abs(c.q)));
        floor = std::min(floor, syn.state(t)[1]);
    }
    s.residuals.push_back({"endpoint", syn.endpoint_residual, cfg.tol});
    s.residuals.push_back({"hamiltonian_scaled", h, cfg.tol});
    if (prm.S) {
        s.residuals.push_back({"floor_violation", std::max(0.0, *prm.S - floor), 1e-9});
    }
    if (pmp && !prm.S) {
        const auto spec = tanks::build_problem(prm);
        const auto mp = tanks::to_multiprocess(syn, n);
        const auto r = check_pmp(spec, mp, tanks::multipliers_of(syn));
        add_report(s, "pmp.", r, cfg.tol);
        s.result["pmp"] = to_json(r);
    }
    if (cfg.portrait) {
        const auto pts = tanks::lattice(cfg.portrait_lo, cfg.portrait_hi, cfg.portrait->first, cfg.portrait->second);
        json recs = json::array();
        for (const auto& e : tanks::phase_portrait(prm, pts)) {
            recs.push_back(tanks::to_json(e));
        }
        s.result["portrait"] = recs;
    }
    s.verdict = from_residuals(s.residuals);
    if (s.verdict == Verdict::pass && !syn.unique) {
        s.verdict = Verdict::nonunique;
    }
    if (!cfg.csv_path.empty()) {
        emit_csv(tanks::trajectory(syn), cfg.csv_path);
        s.outputs.push_back(cfg.csv_path);
    }
    return s;
}

inline RunSummary run_portrait(const ScenarioConfig& cfg) {
    RunSummary s;
    const auto lat = cfg.portrait.value_or(std::pair<std::size_t, std::size_t>{4, 5});
    const auto pts = tanks::lattice(cfg.portrait_lo, cfg.portrait_hi, lat.first, lat.second);
    const auto entries = tanks::phase_portrait(cfg.tanks, pts);
    json recs = json::array();
    std::size_t failed = 0;
    for (const auto& e : entries) {
        recs.push_back(tanks::to_json(e));
        if (!e.ok && (e.x_init - cfg.tanks.x_target).norm() != 0.0) {
            ++failed;
        }
    }
    s.result = {{"model", "tanks"}, {"portrait", recs}};
    s.residuals.push_back({"failed_points", static_cast<double>(failed), 0.0});
    s.verdict = from_residuals(s.residuals);
    return s;
}

}  // namespace detail

/// Executes a scenario and writes its outputs.
inline RunSummary run(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    RunSummary s;
    const bool pmp = cfg.command == Command::check_pmp;
    if (cfg.command == Command::portrait) {
        if (cfg.model != "tanks") {
            throw ConfigError("portrait needs the tanks model");
        }
        s = detail::run_portrait(cfg);
    } else if (cfg.model == "investment") {
        s = detail::run_investment(cfg, pmp);
    } else {
        s = detail::run_tanks(cfg, pmp);
    }
    s.result["verdict"] = verdict_name(s.verdict);
    json table = json::array();
    for (const auto& r : s.residuals) {
        table.push_back({{"name", r.name}, {"value", r.value}, {"tol", r.tol}, {"ok", r.ok()}});
    }
    s.result["residuals"] = table;
    if (!cfg.json_path.empty()) {
        detail::write_text(cfg.json_path, s.result.dump(2) + "\n");
        s.outputs.push_back(cfg.json_path);
    }
    s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return s;
}

/// Residual table followed by the verdict line.
inline std::string format_summary(const RunSummary& s) {
    std::string out;
    char buf[256];
    for (const auto& r : s.residuals) {
        std::snprintf(buf, sizeof buf, "%-34s %12.4e  tol %9.2e  %s\n", r.name.c_str(), r.value, r.tol,
                      r.ok() ? "ok" : "VIOLATED");
        out += buf;
    }
    for (const auto& p : s.outputs) {
        out += "wrote " + p + "\n";
    }
    std::snprintf(buf, sizeof buf, "verdict %s (%.3f s)\n", verdict_name(s.verdict).c_str(), s.wall_seconds);
    out += buf;
    return out;
}

}  // namespace multiproc::cli
