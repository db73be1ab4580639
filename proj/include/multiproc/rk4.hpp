#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace multiproc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One classical Runge-Kutta step of x' = rhs(t, x) from t to t + h.
/// h may be negative (backward integration).
template <class State, class Rhs>
State rk4_step(const Rhs& rhs, double t, const State& x, double h) {
    const State k1 = rhs(t, x);
    const State k2 = rhs(t + 0.5 * h, State(x + (0.5 * h) * k1));
    const State k3 = rhs(t + 0.5 * h, State(x + (0.5 * h) * k2));
    const State k4 = rhs(t + h, State(x + h * k3));
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace multiproc
