#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "multiproc/cli.hpp"

using namespace multiproc;
using namespace multiproc::cli;

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args, std::string* out = nullptr) {
    const std::string cmd = std::string(MULTIPROC_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string text;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) {
        text += buf;
    }
    const int status = pclose(pipe);
    if (out) {
        *out = text;
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "multiproc_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("emit_csv") {
    Dataset empty{{"t"}, {}};
    CHECK_THROWS_AS(emit_csv(empty, scratch("empty.csv").string()), IoError);
    Dataset d{{"t", "x"}, {{0.1, 1.0 / 3.0}}};
    CHECK(to_csv(d) == "t,x\n0.10000000000000001,0.33333333333333331\n");
    CHECK_THROWS_AS(emit_csv(d, "/nonexistent-dir/x.csv"), IoError);
    Dataset ragged{{"t", "x"}, {{0.0}}};
    CHECK_THROWS_AS(to_csv(ragged), IoError);
}

TEST_CASE("trajectory schemas") {
    const auto inv = investment::trajectory(investment::analytic_solution({0.5, 2.0, 5.0}).front(), 10);
    CHECK(inv.columns == std::vector<std::string>{"t", "x", "v", "system", "p"});
    CHECK(inv.rows.size() == 11);
    tanks::Params prm;
    prm.x_init = {2.0, 8.0};
    const auto tk = tanks::trajectory(tanks::synthesize(prm), 10);
    CHECK(tk.columns ==
          std::vector<std::string>{"t", "x1", "x2", "u1", "active_system", "p", "q", "H", "on_boundary_arc"});
    CHECK(tk.rows.front()[1] == 2.0);
}

TEST_CASE("scenario parsing") {
    ScenarioConfig cfg;
    apply_scenario(cfg, json::parse(R"({"model": "tanks", "params": {"init": [9, 2], "S": 1.5}, "grid": {"n_cells": 50}})"));
    CHECK(cfg.model == "tanks");
    CHECK(cfg.tanks.x_init == tanks::Vec2(9.0, 2.0));
    CHECK(*cfg.tanks.S == 1.5);
    CHECK(cfg.n_cells == 50);
    ScenarioConfig c2;
    CHECK_THROWS_AS(apply_scenario(c2, json::parse(R"({"model": "cstr"})")), ConfigError);
    CHECK_THROWS_AS(apply_scenario(c2, json::parse(R"({"model": "investment", "params": {"beta": 1}})")), ConfigError);
    CHECK_THROWS_AS(apply_scenario(c2, json::parse(R"({"model": "tanks", "grid": {"n_cells": -3}})")), ConfigError);
    try {
        parse_json_text("{\n  \"model\": \"tanks\",\n  \"params\": {,}\n}", "s.json");
        FAIL("no exception");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 3, column 14") != std::string::npos);
    }
}

TEST_CASE("run verdicts") {
    ScenarioConfig cfg;
    cfg.model = "investment";
    cfg.investment = {0.5, 2.0, 5.0};
    cfg.verify = 2000;
    auto s = run(cfg);
    CHECK(s.verdict == Verdict::pass);
    CHECK(exit_code(s.verdict) == 0);

    ScenarioConfig z;
    z.command = Command::tanks;
    z.model = "tanks";
    z.tanks.x_init = {9.0, 2.0};
    s = run(z);
    CHECK(s.verdict == Verdict::nonunique);
    CHECK(s.result["synthesis"].contains("alternate_arcs"));
    CHECK(exit_code(s.verdict) == 0);

    z.tanks.x_init = z.tanks.x_target;
    CHECK(run(z).verdict == Verdict::degenerate);

    ScenarioConfig bad;
    bad.tol = -1.0;
    CHECK_THROWS_AS(run(bad), ConfigError);
}

TEST_CASE("CLI exit codes") {
    std::string out;
    CHECK(run_cli("investment --alpha 0.5 --x0 2 --T 5 --verify 2000 --brute-force", &out) == 0);
    CHECK(out.find("verdict PASS") != std::string::npos);
    CHECK(run_cli("--quiet tanks --init 9,2 --target 5,5") == 0);
    CHECK(run_cli("--config " MULTIPROC_SAMPLES_DIR "/tanks_region_z.json tanks", &out) == 0);
    CHECK(out.find("NONUNIQUE") != std::string::npos);
    // a tolerance nothing can meet
    CHECK(run_cli("--tol 1e-30 investment --alpha 0.5 --x0 0.25 --T 4") == 1);
    CHECK(run_cli("investment --alpha 2 --x0 1 --T 5") == 2);
    CHECK(run_cli("tanks --init 9") == 2);
    CHECK(run_cli("frobnicate") == 2);

    const auto bad = scratch("bad.json");
    std::ofstream(bad) << "{\"model\": \"tanks\",\n \"params\": {\"a\": 1,, }}\n";
    CHECK(run_cli("--config " + bad.string() + " tanks", &out) == 2);
    CHECK(out.find("line 2, column 20") != std::string::npos);
}

TEST_CASE("CLI outputs are deterministic") {
    const auto a = scratch("a.csv");
    const auto b = scratch("b.csv");
    REQUIRE(run_cli("--quiet --emit-csv " + a.string() + " tanks --init 0.5,4 --S 3.5") == 0);
    REQUIRE(run_cli("--quiet --emit-csv " + b.string() + " tanks --init 0.5,4 --S 3.5") == 0);
    const auto text = slurp(a);
    CHECK(text == slurp(b));
    CHECK(text.rfind("t,x1,x2,u1,active_system,p,q,H,on_boundary_arc\n", 0) == 0);
    CHECK(text.back() == '\n');
    std::string j1, j2;
    REQUIRE(run_cli("--json portrait --lattice 2,2", &j1) == 0);
    REQUIRE(run_cli("--json portrait --lattice 2,2", &j2) == 0);
    CHECK(j1 == j2);
    CHECK(json::parse(j1)["portrait"].size() == 4);
}
