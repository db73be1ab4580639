#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "multiproc/cli.hpp"

namespace {

using multiproc::cli::ScenarioConfig;
using multiproc::tanks::Vec2;

Vec2 parse_pair(const std::string& text, const std::string& what) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        throw multiproc::ConfigError(what + " expects two comma-separated numbers, got '" + text + "'");
    }
    try {
        const double a = std::stod(text.substr(0, comma));
        const double b = std::stod(text.substr(comma + 1));
        return {a, b};
    } catch (const std::exception&) {
        throw multiproc::ConfigError(what + " expects two comma-separated numbers, got '" + text + "'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pontryagin conditions for multiprocesses: investment and coupled-tank examples"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    double tol = 0.0;
    bool as_json = false;
    std::string csv_path;
    std::size_t n_cells = 0;
    bool quiet = false;
    app.add_option("--config", config_path, "Scenario JSON file");
    app.add_option("--tol", tol, "Residual tolerance (default 1e-6)");
    app.add_flag("--json", as_json, "Print the JSON result instead of the residual table");
    app.add_option("--emit-csv", csv_path, "Write the trajectory as CSV");
    app.add_option("--n-cells", n_cells, "Grid cells for simulation and checks");
    app.add_flag("--quiet", quiet, "Only set the exit code");

    double alpha = 0.0, x0 = 0.0, horizon = 0.0;
    std::size_t verify = 0;
    bool brute = false;
    auto* inv = app.add_subcommand("investment", "Two-system investment model");
    inv->add_option("--alpha", alpha, "Exponent in (0, 1)");
    inv->add_option("--x0", x0, "Initial capital");
    inv->add_option("--T", horizon, "Horizon");
    inv->add_option("--verify", verify, "Run the PMP check on n cells");
    inv->add_flag("--brute-force", brute, "Compare against the switching brute force");

    double a = 0.0, A = 0.0, S = 0.0;
    std::string init, target, portrait;
    auto add_tank_opts = [&](CLI::App* sub) {
        sub->add_option("--a", a, "Outflow rate");
        sub->add_option("--A", A, "Inflow rate");
        sub->add_option("--init", init, "Initial levels x1,x2");
        sub->add_option("--target", target, "Target levels x1,x2");
        sub->add_option("--S", S, "Floor for tank 2");
    };
    auto* tank = app.add_subcommand("tanks", "Time-optimal coupled tanks");
    add_tank_opts(tank);
    tank->add_option("--portrait", portrait, "Lattice nx,ny for an added phase portrait");

    std::string model;
    auto* check = app.add_subcommand("check-pmp", "Full maximum-principle check of a scenario");
    check->add_option("--model", model, "investment or tanks (else taken from --config)");

    auto* port = app.add_subcommand("portrait", "Phase portrait of the tank synthesis");
    add_tank_opts(port);
    port->add_option("--lattice", portrait, "Lattice nx,ny (default 4,5)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : multiproc::cli::config_error_exit;
    }

    ScenarioConfig cfg;
    try {
        if (!config_path.empty()) {
            multiproc::cli::load_scenario(cfg, config_path);
        }
        if (*inv) {
            cfg.command = multiproc::cli::Command::investment;
            cfg.model = "investment";
        } else if (*tank) {
            cfg.command = multiproc::cli::Command::tanks;
            cfg.model = "tanks";
        } else if (*port) {
            cfg.command = multiproc::cli::Command::portrait;
            cfg.model = "tanks";
        } else {
            cfg.command = multiproc::cli::Command::check_pmp;
            if (!model.empty()) {
                cfg.model = model;
            }
        }
        if (inv->count("--alpha")) cfg.investment.alpha = alpha;
        if (inv->count("--x0")) cfg.investment.x0 = x0;
        if (inv->count("--T")) cfg.investment.T = horizon;
        if (inv->count("--verify")) cfg.verify = verify;
        if (brute) cfg.brute_force = true;
        for (auto* sub : {tank, port}) {
            if (sub->count("--a")) cfg.tanks.a = a;
            if (sub->count("--A")) cfg.tanks.A = A;
            if (sub->count("--init")) cfg.tanks.x_init = parse_pair(init, "--init");
            if (sub->count("--target")) cfg.tanks.x_target = parse_pair(target, "--target");
            if (sub->count("--S")) cfg.tanks.S = S;
        }
        if (!portrait.empty()) {
            const Vec2 p = parse_pair(portrait, "lattice");
            if (p[0] < 1 || p[1] < 1) {
                throw multiproc::ConfigError("lattice needs nx, ny >= 1");
            }
            cfg.portrait = {static_cast<std::size_t>(p[0]), static_cast<std::size_t>(p[1])};
        }
        if (app.count("--tol")) cfg.tol = tol;
        if (app.count("--n-cells")) cfg.n_cells = n_cells;
        if (!csv_path.empty()) cfg.csv_path = csv_path;
        cfg.validate();
    } catch (const multiproc::Error& e) {
        if (!quiet) {
            std::cerr << "config error: " << e.what() << "\n";
        }
        return multiproc::cli::config_error_exit;
    }

    try {
        const auto summary = multiproc::cli::run(cfg);
        if (!quiet) {
            if (as_json) {
                std::cout << summary.result.dump(2) << "\n";
            } else {
                std::cout << multiproc::cli::format_summary(summary);
            }
        }
        return multiproc::cli::exit_code(summary.verdict);
    } catch (const multiproc::ConfigError& e) {
        if (!quiet) {
            std::cerr << "config error: " << e.what() << "\n";
        }
        return multiproc::cli::config_error_exit;
    } catch (const multiproc::Error& e) {
        if (!quiet) {
            std::cerr << "error: " << e.what() << "\n";
        }
        return 1;
    }
}
