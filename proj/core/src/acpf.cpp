#include "ropf/acpf.hpp"

#include <cmath>

#include <Eigen/SparseLU>

namespace ropf::acpf {

using Eigen::VectorXd;
using net::NetworkCase;
using opf::UncertaintyCoord;

namespace {

struct ScenarioInjections {
    VectorXd p_load, q_load; ///< per bus, deviation applied
    VectorXd p_res;          ///< per bus
    VectorXd q_res_bus;      ///< per bus, scheduled RES reactive after clipping
    VectorXd q_res_unit;     ///< per RES unit
};

ScenarioInjections apply_scenario(const NetworkCase &c,
                                  const robust::RobustSetpoints &sp,
                                  const opf::UncertaintySpec &unc,
                                  const Scenario &scenario) {
    if (scenario.mu.size() != static_cast<long>(unc.coords.size()))
        throw ModelError("scenario deviation dimension does not match |U|");
    const int nb = static_cast<int>(c.buses().size());
    ScenarioInjections inj;
    inj.p_load = VectorXd::Zero(nb);
    inj.q_load = VectorXd::Zero(nb);
    inj.p_res = VectorXd::Zero(nb);
    inj.q_res_bus = VectorXd::Zero(nb);
    inj.q_res_unit = VectorXd::Zero(static_cast<long>(c.res_units().size()));

    for (const net::LoadPoint &l : c.loads()) {
        inj.p_load[c.bus_index(l.bus)] += l.p_d;
        inj.q_load[c.bus_index(l.bus)] += l.q_d;
    }
    std::vector<double> res_mu(c.res_units().size(), 0.0);
    for (size_t j = 0; j < unc.coords.size(); ++j) {
        const UncertaintyCoord &uc = unc.coords[j];
        const double mu = scenario.mu[static_cast<long>(j)];
        const int bi = c.bus_index(uc.bus);
        if (uc.kind == UncertaintyCoord::Kind::load) {
            inj.p_load[bi] += mu;
            inj.q_load[bi] += c.loads()[uc.index].lr * mu;
        } else {
            res_mu[uc.index] += mu;
        }
    }
    for (size_t r = 0; r < c.res_units().size(); ++r) {
        const net::ResUnit &ru = c.res_units()[r];
        const int bi = c.bus_index(ru.bus);
        const double p_hat = ru.p_r + res_mu[r];
        inj.p_res[bi] += p_hat;
        const double cap =
            std::sqrt(std::max(0.0, ru.s_max * ru.s_max - p_hat * p_hat));
        double q = sp.qr_schedule.size() > static_cast<long>(r)
                       ? sp.qr_schedule[static_cast<long>(r)]
                       : 0.0;
        q = std::clamp(q, -cap, cap);
        inj.q_res_unit[static_cast<long>(r)] = q;
        inj.q_res_bus[bi] += q;
    }
    return inj;
}

} // namespace

PfSolution run_pf(const NetworkCase &c, const robust::RobustSetpoints &sp,
                  const opf::UncertaintySpec &unc, const Scenario &scenario,
                  const PfOptions &opts) {
    const int nb = static_cast<int>(c.buses().size());
    const int ng = static_cast<int>(c.generators().size());
    const int ref = c.reference_index();
    const net::AdmittanceMatrix adm = net::build_admittance(c);
    const ScenarioInjections inj = apply_scenario(c, sp, unc, scenario);

    // scheduled generation and AGC shares per bus
    VectorXd pg_bus = VectorXd::Zero(nb), rho_bus = VectorXd::Zero(nb);
    for (int g = 0; g < ng; ++g) {
        const int bi = c.bus_index(c.generators()[g].bus);
        pg_bus[bi] += sp.pg[g];
        rho_bus[bi] += c.generators()[g].participation;
    }

    // generator buses hold V at the robust terminal voltage
    VectorXd v = VectorXd::Ones(nb);
    std::vector<char> v_fixed(nb, 0);
    for (size_t k = 0; k < sp.cii_bus.size(); ++k) {
        v[sp.cii_bus[k]] = std::sqrt(sp.cii[static_cast<long>(k)]);
        v_fixed[sp.cii_bus[k]] = 1;
    }
    VectorXd theta = VectorXd::Zero(nb);

    // unknown ordering: theta (all but ref), V (non-generator buses), psi
    std::vector<int> th_pos(nb, -1), v_pos(nb, -1);
    int nun = 0;
    for (int i = 0; i < nb; ++i)
        if (i != ref) th_pos[i] = nun++;
    for (int i = 0; i < nb; ++i)
        if (!v_fixed[i]) v_pos[i] = nun++;
    const int psi_pos = nun++;
    double psi = 0.0;

    // equations: active balance at all buses, reactive at non-generator buses
    std::vector<int> prow(nb), qrow(nb, -1);
    int neq = 0;
    for (int i = 0; i < nb; ++i) prow[i] = neq++;
    for (int i = 0; i < nb; ++i)
        if (!v_fixed[i]) qrow[i] = neq++;
    if (neq != nun)
        throw ModelError("power flow system is not square");

    // neighbor structure from the bus admittance matrix
    std::vector<std::vector<std::pair<int, std::pair<double, double>>>> nbr(nb);
    for (int outer = 0; outer < adm.g.outerSize(); ++outer)
        for (Eigen::SparseMatrix<double>::InnerIterator it(adm.g, outer); it; ++it)
            if (it.row() != it.col())
                nbr[it.row()].push_back(
                    {static_cast<int>(it.col()),
                     {it.value(), adm.b.coeff(it.row(), it.col())}});

    PfSolution out;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    VectorXd f(neq);

    auto injections = [&](int i, double &pi, double &qi) {
        const double gii = adm.g.coeff(i, i), bii = adm.b.coeff(i, i);
        pi = v[i] * v[i] * gii;
        qi = -v[i] * v[i] * bii;
        for (const auto &[j, gb] : nbr[i]) {
            const double dth = theta[i] - theta[j];
            pi += v[i] * v[j] * (gb.first * std::cos(dth) + gb.second * std::sin(dth));
            qi += v[i] * v[j] * (gb.first * std::sin(dth) - gb.second * std::cos(dth));
        }
    };

    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        // mismatch
        for (int i = 0; i < nb; ++i) {
            double pi, qi;
            injections(i, pi, qi);
            f[prow[i]] = pg_bus[i] + rho_bus[i] * psi + inj.p_res[i] -
                         inj.p_load[i] - pi;
            if (qrow[i] >= 0)
                f[qrow[i]] = inj.q_res_bus[i] - inj.q_load[i] - qi;
        }
        out.mismatch = f.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(out.mismatch)) break;
        if (out.mismatch <= opts.tolerance) {
            out.converged = true;
            break;
        }

        // Jacobian of the residual (note f = schedule - injection)
        std::vector<Eigen::Triplet<double>> jt;
        for (int i = 0; i < nb; ++i) {
            double pi, qi;
            injections(i, pi, qi);
            const double gii = adm.g.coeff(i, i), bii = adm.b.coeff(i, i);
            // diagonal elements
            if (th_pos[i] >= 0) {
                jt.emplace_back(prow[i], th_pos[i], qi + bii * v[i] * v[i]);
                if (qrow[i] >= 0)
                    jt.emplace_back(qrow[i], th_pos[i], -(pi - gii * v[i] * v[i]));
            }
            if (v_pos[i] >= 0) {
                jt.emplace_back(prow[i], v_pos[i], -(pi / v[i] + gii * v[i]));
                if (qrow[i] >= 0)
                    jt.emplace_back(qrow[i], v_pos[i], -(qi / v[i] - bii * v[i]));
            }
            jt.emplace_back(prow[i], psi_pos, rho_bus[i]);
            for (const auto &[j, gb] : nbr[i]) {
                const double dth = theta[i] - theta[j];
                const double gc = gb.first * std::cos(dth), gs = gb.first * std::sin(dth);
                const double bc = gb.second * std::cos(dth), bs = gb.second * std::sin(dth);
                const double dp_dthj = v[i] * v[j] * (gs - bc);
                const double dq_dthj = -v[i] * v[j] * (gc + bs);
                const double dp_dvj = v[i] * (gc + bs);
                const double dq_dvj = v[i] * (gs - bc);
                if (th_pos[j] >= 0) {
                    jt.emplace_back(prow[i], th_pos[j], -dp_dthj);
                    if (qrow[i] >= 0) jt.emplace_back(qrow[i], th_pos[j], -dq_dthj);
                }
                if (v_pos[j] >= 0) {
                    jt.emplace_back(prow[i], v_pos[j], -dp_dvj);
                    if (qrow[i] >= 0) jt.emplace_back(qrow[i], v_pos[j], -dq_dvj);
                }
            }
        }
        Eigen::SparseMatrix<double> jac(neq, nun);
        jac.setFromTriplets(jt.begin(), jt.end());
        lu.compute(jac);
        if (lu.info() != Eigen::Success) break; // singular Jacobian: divergence
        VectorXd du = lu.solve(-f);
        if (!du.allFinite()) break;

        for (int i = 0; i < nb; ++i) {
            if (th_pos[i] >= 0) theta[i] += du[th_pos[i]];
            if (v_pos[i] >= 0) v[i] += du[v_pos[i]];
        }
        psi += du[psi_pos];
    }
    out.iterations = it;
    out.v = v;
    out.theta = theta;
    out.psi = psi;

    // per-generator dispatch
    out.pg_hat.resize(ng);
    for (int g = 0; g < ng; ++g)
        out.pg_hat[g] = sp.pg[g] + c.generators()[g].participation * psi;

    // reactive generation per bus, distributed over the local q ranges
    out.qg_hat = VectorXd::Zero(ng);
    if (out.converged) {
        for (int i = 0; i < nb; ++i) {
            if (!c.has_generator_at(i)) continue;
            double pi, qi;
            injections(i, pi, qi);
            const double q_need = qi + inj.q_load[i] - inj.q_res_bus[i];
            double span = 0.0, qmin_sum = 0.0;
            std::vector<int> local;
            for (int g = 0; g < ng; ++g)
                if (c.bus_index(c.generators()[g].bus) == i) {
                    local.push_back(g);
                    span += c.generators()[g].q_max - c.generators()[g].q_min;
                    qmin_sum += c.generators()[g].q_min;
                }
            for (int g : local) {
                const net::Generator &gen = c.generators()[g];
                if (span > 0)
                    out.qg_hat[g] = gen.q_min + (q_need - qmin_sum) *
                                                    (gen.q_max - gen.q_min) / span;
                else
                    out.qg_hat[g] = q_need / static_cast<double>(local.size());
            }
        }
    }

    // branch flows
    const size_t nbr_count = c.branches().size();
    out.flow_from.resize(nbr_count);
    out.flow_to.resize(nbr_count);
    out.qflow_from.resize(nbr_count);
    out.qflow_to.resize(nbr_count);
    for (size_t b = 0; b < nbr_count; ++b) {
        const net::Branch &br = c.branches()[b];
        const int fi = c.bus_index(br.from), ti = c.bus_index(br.to);
        const double dth = theta[fi] - theta[ti];
        const auto yff = adm.y_ff[b], yft = adm.y_ft[b], ytf = adm.y_tf[b],
                   ytt = adm.y_tt[b];
        out.flow_from[b] = v[fi] * v[fi] * yff.real() +
                           v[fi] * v[ti] * (yft.real() * std::cos(dth) +
                                            yft.imag() * std::sin(dth));
        out.qflow_from[b] = -v[fi] * v[fi] * yff.imag() +
                            v[fi] * v[ti] * (yft.real() * std::sin(dth) -
                                             yft.imag() * std::cos(dth));
        out.flow_to[b] = v[ti] * v[ti] * ytt.real() +
                         v[ti] * v[fi] * (ytf.real() * std::cos(-dth) +
                                          ytf.imag() * std::sin(-dth));
        out.qflow_to[b] = -v[ti] * v[ti] * ytt.imag() +
                          v[ti] * v[fi] * (ytf.real() * std::sin(-dth) -
                                           ytf.imag() * std::cos(-dth));
    }
    out.qr = inj.q_res_unit;
    return out;
}

ViolationRecord evaluate_constraints(const NetworkCase &c,
                                     const opf::UncertaintySpec &unc,
                                     const Scenario &scenario,
                                     const PfSolution &pf,
                                     const opf::BuildOptions &opts) {
    constexpr double kFeasTol = 1e-6;
    ViolationRecord rec;

    auto add = [&rec](const std::string &family, const std::string &element,
                      double margin) {
        for (Violation &v : rec.worst_per_family) {
            if (v.family != family) continue;
            if (margin < v.margin) {
                v.margin = margin;
                v.element = element;
            }
            return;
        }
        rec.worst_per_family.push_back({family, element, margin});
    };

    for (size_t b = 0; b < c.branches().size(); ++b) {
        const net::Branch &br = c.branches()[b];
        const std::string el =
            std::to_string(br.from) + "-" + std::to_string(br.to);
        add("flow", el + " from", br.p_max - std::abs(pf.flow_from[b]));
        add("flow", el + " to", br.p_max - std::abs(pf.flow_to[b]));
        const double dth = pf.theta[c.bus_index(br.from)] -
                           pf.theta[c.bus_index(br.to)];
        add("angle_diff", el, br.theta_diff_max - std::abs(dth));
    }

    const Eigen::VectorXd ramp = opf::resolve_ramp_limits(c, opts);
    for (size_t g = 0; g < c.generators().size(); ++g) {
        const net::Generator &gen = c.generators()[g];
        const std::string el = "gen@" + std::to_string(gen.bus);
        add("gen_p", el, std::min(gen.p_max - pf.pg_hat[static_cast<long>(g)],
                                  pf.pg_hat[static_cast<long>(g)] - gen.p_min));
        add("gen_q", el, std::min(gen.q_max - pf.qg_hat[static_cast<long>(g)],
                                  pf.qg_hat[static_cast<long>(g)] - gen.q_min));
        add("ramp", el,
            ramp[static_cast<long>(g)] -
                std::abs(gen.participation * pf.psi));
    }

    // realized RES reactive capability
    std::vector<double> res_mu(c.res_units().size(), 0.0);
    for (size_t j = 0; j < unc.coords.size(); ++j)
        if (unc.coords[j].kind == UncertaintyCoord::Kind::res)
            res_mu[unc.coords[j].index] += scenario.mu[static_cast<long>(j)];
    for (size_t r = 0; r < c.res_units().size(); ++r) {
        const net::ResUnit &ru = c.res_units()[r];
        const double p_hat = ru.p_r + res_mu[r];
        const double cap =
            std::sqrt(std::max(0.0, ru.s_max * ru.s_max - p_hat * p_hat));
        add("res_q", "res@" + std::to_string(ru.bus),
            cap - std::abs(pf.qr[static_cast<long>(r)]));
    }

    for (size_t i = 0; i < c.buses().size(); ++i) {
        const net::Bus &bus = c.buses()[i];
        const std::string el = "bus " + std::to_string(bus.id);
        add("voltage", el, std::min(bus.v_max - pf.v[static_cast<long>(i)],
                                    pf.v[static_cast<long>(i)] - bus.v_min));
        add("angle", el, std::min(bus.theta_max - pf.theta[static_cast<long>(i)],
                                  pf.theta[static_cast<long>(i)] - bus.theta_min));
    }

    for (const Violation &v : rec.worst_per_family)
        if (v.margin < -kFeasTol) ++rec.violated_families;
    return rec;
}

} // namespace ropf::acpf
