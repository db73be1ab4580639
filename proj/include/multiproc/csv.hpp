#pragma once

#include <cstddef>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "multiproc/errors.hpp"
#include "multiproc/investment.hpp"
#include "multiproc/tanks.hpp"

namespace multiproc {

struct Dataset {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string to_csv(const Dataset& d) {
    if (d.rows.empty()) {
        throw IoError("refusing to write an empty dataset");
    }
    std::string out;
    for (std::size_t i = 0; i < d.columns.size(); ++i) {
        out += (i ? "," : "") + d.columns[i];
    }
    out += '\n';
    for (const auto& row : d.rows) {
        if (row.size() != d.columns.size()) {
            throw IoError("row width " + std::to_string(row.size()) + " does not match " +
                          std::to_string(d.columns.size()) + " columns");
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) {
                out += ',';
            }
            out += format_number(row[i]);
        }
        out += '\n';
    }
    return out;
}

inline void emit_csv(const Dataset& d, const std::string& path) {
    const std::string text = to_csv(d);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    f << text;
    if (!f.flush()) {
        throw IoError("write to " + path + " failed");
    }
}

namespace investment {

/// Samples t, x, v, system, p at n + 1 uniform times.
inline Dataset trajectory(const Solution& s, std::size_t n = 500) {
    Dataset d{{"t", "x", "v", "system", "p"}, {}};
    for (std::size_t i = 0; i <= n; ++i) {
        const double t = s.params.T * static_cast<double>(i) / static_cast<double>(n);
        d.rows.push_back({t, s.state(t), static_cast<double>(s.control_at(t)),
                          static_cast<double>(s.system_at(t)), adjoint_closed_form(s, t)});
    }
    return d;
}

}  // namespace investment

namespace tanks {

inline Dataset trajectory(const TankSynthesis& s, std::size_t n = 500) {
    Dataset d{{"t", "x1", "x2", "u1", "active_system", "p", "q", "H", "on_boundary_arc"}, {}};
    for (std::size_t i = 0; i <= n; ++i) {
        const double t = s.T * static_cast<double>(i) / static_cast<double>(n);
        const Vec2 x = s.state(t);
        const Costate c = s.costate(t);
        d.rows.push_back({t, x[0], x[1], s.control(t), static_cast<double>(s.system(t)), c.p, c.q,
                          s.hamiltonian_at(t), s.on_boundary_arc(t) ? 1.0 : 0.0});
    }
    return d;
}

}  // namespace tanks

}  // namespace multiproc
