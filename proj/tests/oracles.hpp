#pragma once

// Independent reference implementations used as oracles by the tests. They
// share no code with the library paths they check: dense arithmetic, plain
// Newton loops, and exhaustive searches only.

#include <cmath>
#include <limits>

#include "ropf/netcase.hpp"

namespace oracles {

struct TwoBusState {
    double v2 = 1.0;
    double th2 = 0.0; // radians, bus 1 is the reference
    bool converged = false;
};

// Exact power flow of a single-line two-bus network with the slack voltage
// fixed at v1 and a PQ load (pd, qd) at bus 2.
inline TwoBusState two_bus_pf(double r, double x, double pd, double qd,
                              double v1) {
    const double den = r * r + x * x;
    const double g = r / den, b = -x / den;
    TwoBusState st;
    double v2 = 1.0, th = 0.0;
    for (int it = 0; it < 60; ++it) {
        const double c = std::cos(th), s = std::sin(th);
        // injections at bus 2: Y21 = -(g + jb), Y22 = g + jb
        const double p2 = v2 * v2 * g + v1 * v2 * (-g * c - b * s);
        const double q2 = -v2 * v2 * b + v1 * v2 * (-g * s + b * c);
        const double fp = p2 + pd;
        const double fq = q2 + qd;
        if (std::abs(fp) < 1e-12 && std::abs(fq) < 1e-12) {
            st.converged = true;
            break;
        }
        // dense 2x2 Jacobian
        const double dp_dth = v1 * v2 * (g * s - b * c);
        const double dp_dv = 2.0 * v2 * g + v1 * (-g * c - b * s);
        const double dq_dth = v1 * v2 * (-g * c - b * s);
        const double dq_dv = -2.0 * v2 * b + v1 * (-g * s + b * c);
        const double det = dp_dth * dq_dv - dp_dv * dq_dth;
        if (std::abs(det) < 1e-14) break;
        th += (-fp * dq_dv + fq * dp_dv) / det;
        v2 += (fp * dq_dth - fq * dp_dth) / det;
    }
    st.v2 = v2;
    st.th2 = th;
    return st;
}

struct TwoBusPoint {
    double pg = 0.0, qg = 0.0, p12 = 0.0, p21 = 0.0, th12 = 0.0, v2 = 0.0;
    bool feasible = false;
};

// Evaluate the exact operating point of the 2-bus case at slack voltage v1.
inline TwoBusPoint two_bus_point(const ropf::net::NetworkCase &c, double v1,
                                 double load_scale = 1.0) {
    const ropf::net::Branch &br = c.branches()[0];
    const ropf::net::LoadPoint &ld = c.loads()[0];
    const ropf::net::Generator &gen = c.generators()[0];
    const ropf::net::Bus &bus2 = c.buses()[1];
    const double pd = ld.p_d * load_scale, qd = ld.q_d * load_scale;
    TwoBusPoint pt;
    TwoBusState st = two_bus_pf(br.r, br.x, pd, qd, v1);
    if (!st.converged) return pt;
    const double den = br.r * br.r + br.x * br.x;
    const double g = br.r / den, b = -br.x / den;
    const double c12 = std::cos(-st.th2), s12 = std::sin(-st.th2);
    pt.v2 = st.v2;
    pt.th12 = -st.th2;
    pt.pg = v1 * v1 * g + v1 * st.v2 * (-g * c12 - b * s12);
    pt.qg = -v1 * v1 * b + v1 * st.v2 * (-g * s12 + b * c12);
    pt.p12 = pt.pg; // no shunt: slack injection flows into the line
    const double c21 = std::cos(st.th2), s21 = std::sin(st.th2);
    pt.p21 = st.v2 * st.v2 * g + st.v2 * v1 * (-g * c21 - b * s21);
    pt.feasible = st.v2 >= bus2.v_min - 1e-9 && st.v2 <= bus2.v_max + 1e-9 &&
                  std::abs(pt.th12) <= br.theta_diff_max + 1e-9 &&
                  std::abs(pt.p12) <= br.p_max + 1e-9 &&
                  std::abs(pt.p21) <= br.p_max + 1e-9 &&
                  pt.qg >= gen.q_min - 1e-9 && pt.qg <= gen.q_max + 1e-9 &&
                  pt.pg >= gen.p_min - 1e-9 && pt.pg <= gen.p_max + 1e-9;
    return pt;
}

// Grid search over the slack voltage at 1e-3 resolution; the inner power
// flow is exact, so the only discretization error is in v1.
inline double grid_search_2bus_objective(const ropf::net::NetworkCase &c,
                                         double step = 1e-3,
                                         double load_scale = 1.0) {
    const ropf::net::Generator &gen = c.generators()[0];
    const ropf::net::Bus &bus1 = c.buses()[0];
    double best = std::numeric_limits<double>::infinity();
    for (double v1 = bus1.v_min; v1 <= bus1.v_max + 1e-12; v1 += step) {
        TwoBusPoint pt = two_bus_point(c, v1, load_scale);
        if (!pt.feasible) continue;
        best = std::min(best, gen.a * pt.pg + gen.b);
    }
    return best;
}

} // namespace oracles
