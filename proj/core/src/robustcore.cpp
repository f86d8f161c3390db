#include "ropf/robustcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace ropf::robust {

using conic::ConicProgram;
using conic::ConicSolution;
using conic::RowTerm;
using conic::SolveStatus;
using Eigen::VectorXd;
using opf::RobustBlocks;
using opf::UncertaintyCoord;

namespace {

constexpr double kSignTol = 1e-9;   ///< |R_j| below this is treated as zero
constexpr double kFlipTol = 1e-7;   ///< binding-sign detection, relative

std::string st_row(const std::string &col_name) { return "st." + col_name; }

double default_big_m(const RobustBlocks &rb, const opf::UncertaintySpec &unc) {
    if (unc.big_m > 0) return unc.big_m;
    double scale = 1.0;
    if (rb.primal.eq_rhs().size() > 0)
        scale = std::max(scale, rb.primal.eq_rhs().cwiseAbs().maxCoeff());
    if (rb.primal.ineq_rhs().size() > 0)
        scale = std::max(scale, rb.primal.ineq_rhs().cwiseAbs().maxCoeff());
    return 1e4 * scale;
}

std::vector<int> default_signs(const opf::UncertaintySpec &unc,
                               const VectorXd &alpha) {
    std::vector<int> sig(unc.coords.size(), 0);
    for (size_t j = 0; j < unc.coords.size(); ++j) {
        if (alpha[static_cast<long>(j)] <= 0.0 || unc.coords[j].mu_bar <= 0.0)
            continue;
        sig[j] = unc.coords[j].kind == UncertaintyCoord::Kind::load ? 1 : -1;
    }
    return sig;
}

/// Mechanical conic dual of the robust primal plus the worst-case epigraph.
DualRcProgram make_dual(std::shared_ptr<const RobustBlocks> blocks, RcMode mode,
                        const VectorXd &alpha, const std::vector<int> &signs,
                        double big_m) {
    const ConicProgram &pr = blocks->primal;
    const int nu = static_cast<int>(blocks->coords.size());

    DualRcProgram rc;
    rc.mode = mode;
    rc.alpha = alpha;
    rc.sign_restriction = signs;
    rc.big_m = big_m;
    rc.blocks = blocks;

    ConicProgram &d = rc.program;

    // dual variables per primal row
    std::vector<int> ze(pr.num_eq_rows()), zi(pr.num_ineq_rows());
    for (int r = 0; r < pr.num_eq_rows(); ++r)
        ze[r] = d.add_variable("zE." + pr.eq_row_name(r));
    for (int r = 0; r < pr.num_ineq_rows(); ++r)
        zi[r] = d.add_variable("zI." + pr.ineq_row_name(r), 0.0);

    // worst-case machinery
    for (int j = 0; j < nu; ++j) {
        const std::string js = std::to_string(j);
        rc.r_cols.push_back("R[" + js + "]");
        rc.rp_cols.push_back("Rp[" + js + "]");
        rc.rm_cols.push_back("Rm[" + js + "]");
        rc.t_cols.push_back("t[" + js + "]");
        d.add_variable(rc.r_cols.back());
        double up_p = big_m, up_m = big_m;
        if (j < static_cast<int>(signs.size())) {
            if (signs[j] > 0) up_m = 0.0;
            if (signs[j] < 0) up_p = 0.0;
        }
        d.add_variable(rc.rp_cols.back(), 0.0, up_p);
        d.add_variable(rc.rm_cols.back(), 0.0, up_m);
        d.add_variable(rc.t_cols.back());
    }

    // objective: min f'zE + e'zI - 1't - d  (negated dual maximum)
    for (int r = 0; r < pr.num_eq_rows(); ++r)
        if (pr.eq_rhs()[r] != 0.0) d.set_objective(ze[r], pr.eq_rhs()[r]);
    for (int r = 0; r < pr.num_ineq_rows(); ++r)
        if (pr.ineq_rhs()[r] != 0.0) d.set_objective(zi[r], pr.ineq_rhs()[r]);
    for (int j = 0; j < nu; ++j)
        d.set_objective(d.column(rc.t_cols[j]), -1.0);
    d.set_offset(-pr.offset());

    // cone membership of the linkage-row multipliers
    for (size_t blk = 0; blk < pr.soc_blocks().size(); ++blk) {
        const bool hatted = static_cast<int>(blk) >= blocks->num_unhatted_cones;
        const int q = hatted ? static_cast<int>(blk) - blocks->num_unhatted_cones
                             : static_cast<int>(blk);
        const std::string pre = hatted ? "h." : "";
        const std::string qs = std::to_string(q);
        d.add_soc_block("dcone." + pre + "cone[" + qs + "]",
                        ze[pr.eq_row(pre + "link_C[" + qs + "]")],
                        ze[pr.eq_row(pre + "link_S[" + qs + "]")],
                        ze[pr.eq_row(pre + "link_E[" + qs + "]")],
                        ze[pr.eq_row(pre + "link_D[" + qs + "]")]);
    }

    // stationarity rows, one per primal column except cone members
    std::vector<char> is_cone_member(pr.num_vars(), 0);
    for (const conic::SocBlock &sb : pr.soc_blocks())
        for (int col : {sb.c, sb.s, sb.e, sb.d}) is_cone_member[col] = 1;

    const auto &aeq = pr.eq_matrix();
    const auto &ain = pr.ineq_matrix();
    for (int v = 0; v < pr.num_vars(); ++v) {
        if (is_cone_member[v]) continue;
        std::vector<RowTerm> terms;
        for (Eigen::SparseMatrix<double>::InnerIterator it(aeq, v); it; ++it)
            terms.push_back({ze[static_cast<int>(it.row())], it.value()});
        for (Eigen::SparseMatrix<double>::InnerIterator it(ain, v); it; ++it)
            terms.push_back({zi[static_cast<int>(it.row())], it.value()});
        d.add_eq_row(st_row(pr.column_name(v)), terms, -pr.objective()[v]);
    }
    for (const auto &xc : blocks->x_columns)
        rc.x_row_names.push_back(st_row(xc.name));
    rc.psi_row_name = st_row("psi");

    // R definition, split, and budget-scaled epigraph rows
    std::vector<std::vector<RowTerm>> rdef(nu);
    for (const auto &t : blocks->k_e)
        rdef[t.col()].push_back({ze[t.row()], -t.value()});
    for (int j = 0; j < nu; ++j) {
        const std::string js = std::to_string(j);
        const int rcol = d.column(rc.r_cols[j]);
        const int rp = d.column(rc.rp_cols[j]);
        const int rm = d.column(rc.rm_cols[j]);
        const int tc = d.column(rc.t_cols[j]);
        rdef[j].push_back({rcol, 1.0});
        d.add_eq_row("Rdef[" + js + "]", rdef[j], 0.0);
        d.add_eq_row("Rsplit[" + js + "]",
                     {{rp, 1.0}, {rm, -1.0}, {rcol, -1.0}}, 0.0);
        const double w = alpha[j] * blocks->coords[j].mu_bar;
        d.add_ineq_row("epi_ub[" + js + "]",
                       {{tc, 1.0}, {rp, -w}, {rm, -w}}, 0.0);
        d.add_ineq_row("epi_lb[" + js + "]",
                       {{tc, -1.0}, {rp, -w}, {rm, -w}}, 0.0);
    }

    d.seal();
    return rc;
}

struct RcSolve {
    ConicSolution sol;
    double objective = 0.0; ///< robust maximum
    VectorXd r, rp, rm, t;
};

RcSolve solve_dual(const DualRcProgram &rc, const ipm::SolverSettings &settings) {
    RcSolve out;
    out.sol = ipm::solve(rc.program, settings);
    if (out.sol.status != SolveStatus::optimal)
        throw SolverError("dual robust counterpart solve ended " +
                          conic::to_string(out.sol.status));
    out.objective = -out.sol.objective;
    const int nu = static_cast<int>(rc.r_cols.size());
    out.r.resize(nu);
    out.rp.resize(nu);
    out.rm.resize(nu);
    out.t.resize(nu);
    for (int j = 0; j < nu; ++j) {
        out.r[j] = out.sol.primal[rc.program.column(rc.r_cols[j])];
        out.rp[j] = out.sol.primal[rc.program.column(rc.rp_cols[j])];
        out.rm[j] = out.sol.primal[rc.program.column(rc.rm_cols[j])];
        out.t[j] = out.sol.primal[rc.program.column(rc.t_cols[j])];
    }
    return out;
}

RobustSetpoints recover(const DualRcProgram &rc, const RcSolve &s,
                        int sign_iters) {
    const RobustBlocks &rb = *rc.blocks;
    const ConicProgram &d = rc.program;
    RobustSetpoints sp;

    std::vector<double> pg, cii;
    for (size_t k = 0; k < rb.x_columns.size(); ++k) {
        const double v = s.sol.eq_duals[d.eq_row(rc.x_row_names[k])];
        if (rb.x_columns[k].kind == RobustBlocks::XColumn::Kind::pg) {
            pg.push_back(v);
        } else {
            cii.push_back(v);
            sp.cii_bus.push_back(rb.x_columns[k].ref);
        }
    }
    sp.pg = Eigen::Map<VectorXd>(pg.data(), static_cast<long>(pg.size()));
    sp.cii = Eigen::Map<VectorXd>(cii.data(), static_cast<long>(cii.size()));
    sp.psi_star = s.sol.eq_duals[d.eq_row(rc.psi_row_name)];

    int nres = 0;
    while (true) {
        try {
            d.eq_row(st_row(opf::names::qr(nres)));
            ++nres;
        } catch (const ModelError &) {
            break;
        }
    }
    sp.qr_schedule.resize(nres);
    for (int r = 0; r < nres; ++r)
        sp.qr_schedule[r] = s.sol.eq_duals[d.eq_row(st_row(opf::names::qr(r)))];

    const int nu = static_cast<int>(rb.coords.size());
    sp.mu_star.resize(nu);
    sp.complementarity.resize(nu);
    sp.r_values = s.r;
    sp.alpha = rc.alpha;
    sp.max_r_vs_big_m = 0.0;
    for (int j = 0; j < nu; ++j) {
        const double mb = rb.coords[j].mu_bar;
        if (rc.alpha[j] <= 0.0 || mb <= 0.0) {
            sp.mu_star[j] = 0.0;
            sp.complementarity[j] = 0.0;
            continue;
        }
        sp.mu_star[j] = std::abs(s.r[j]) <= kSignTol ? mb
                        : (s.r[j] > 0.0 ? mb : -mb);
        sp.complementarity[j] = std::min(s.rp[j], s.rm[j]);
        sp.max_r_vs_big_m = std::max(
            sp.max_r_vs_big_m, std::max(s.rp[j], s.rm[j]) / rc.big_m);
    }
    sp.objective = s.objective;
    sp.solver_gap = s.sol.gap;
    sp.sign_iterations = sign_iters;
    sp.solver_trace = s.sol.trace;

    if (sp.max_r_vs_big_m >= 1.0 - 1e-6)
        throw SolverError("worst-case split variable reached the Big-M cap; "
                          "re-solve with a larger big_m");
    return sp;
}

} // namespace

DualRcProgram build_dual_rc(const net::NetworkCase &c,
                            const opf::UncertaintySpec &unc, RcMode mode,
                            const opf::BuildOptions &opts) {
    auto blocks = std::make_shared<RobustBlocks>(
        opf::assemble_robust_blocks(c, unc, opts));
    VectorXd alpha = VectorXd::Ones(unc.size());
    const double big_m = default_big_m(*blocks, unc);
    return make_dual(blocks, mode, alpha, default_signs(unc, alpha), big_m);
}

RobustSetpoints solve_rc_and_recover(const DualRcProgram &rc,
                                     const ipm::SolverSettings &settings) {
    const int max_sign_iters = 8;
    DualRcProgram work = rc;
    RcSolve best;
    double best_obj = -std::numeric_limits<double>::infinity();
    std::set<std::vector<int>> visited;
    int iters = 0;
    DualRcProgram best_work = work;

    for (; iters < max_sign_iters; ++iters) {
        visited.insert(work.sign_restriction);
        RcSolve s = solve_dual(work, settings);
        if (s.objective > best_obj) {
            best_obj = s.objective;
            best = s;
            best_work = work;
        }

        // a restricted coordinate whose R collapsed to zero may sit on the
        // wrong side of the box; flip it and re-solve
        double rmax = 1.0;
        for (int j = 0; j < s.r.size(); ++j)
            rmax = std::max(rmax, std::abs(s.r[j]));
        std::vector<int> next = work.sign_restriction;
        bool any = false;
        for (size_t j = 0; j < next.size(); ++j) {
            if (next[j] == 0 || work.alpha[static_cast<long>(j)] <= 0.0) continue;
            if (std::abs(s.r[static_cast<long>(j)]) <= kFlipTol * rmax) {
                next[j] = -next[j];
                any = true;
            }
        }
        if (!any || visited.count(next)) break;
        work = make_dual(work.blocks, work.mode, work.alpha, next, work.big_m);
    }
    return recover(best_work, best, iters + 1);
}

GapReport cross_check_strong_duality(const net::NetworkCase &c,
                                     const opf::UncertaintySpec &unc,
                                     const RobustSetpoints &sp,
                                     const opf::BuildOptions &opts,
                                     const ipm::SolverSettings &settings) {
    GapReport rep;
    rep.rc_objective = sp.objective;
    RobustBlocks rb = opf::assemble_robust_blocks(c, unc, opts);
    ConicProgram primal = rb.primal_at(sp.mu_star);
    ConicSolution sol = ipm::solve(primal, settings);
    if (sol.status != SolveStatus::optimal) {
        rep.primal_feasible = false;
        rep.primal_objective = std::numeric_limits<double>::quiet_NaN();
        rep.rel_gap = std::numeric_limits<double>::infinity();
        rep.max_setpoint_diff = std::numeric_limits<double>::infinity();
        return rep;
    }
    rep.primal_objective = sol.objective;
    rep.rel_gap = std::abs(sp.objective - sol.objective) /
                  std::max(1e-12, std::abs(sol.objective));
    double diff = 0.0;
    int gi = 0, ci = 0;
    for (const auto &xc : rb.x_columns) {
        const double primal_v = sol.primal[xc.column];
        const double dual_v = xc.kind == RobustBlocks::XColumn::Kind::pg
                                  ? sp.pg[gi++]
                                  : sp.cii[ci++];
        diff = std::max(diff, std::abs(primal_v - dual_v));
    }
    rep.max_setpoint_diff = diff;
    return rep;
}

BudgetSelection select_budget(const net::NetworkCase &c,
                              const opf::UncertaintySpec &unc, int gamma,
                              const opf::BuildOptions &opts,
                              const ipm::SolverSettings &settings) {
    const int nu = unc.size();
    if (gamma < 0 || gamma > nu)
        throw ModelError("budget must lie in [0, |U|]");

    // phase 1: full counterpart, rank by worst-case contribution |t_j|
    DualRcProgram full = build_dual_rc(c, unc, RcMode::full, opts);
    RobustSetpoints sp1 = solve_rc_and_recover(full, settings);
    VectorXd tvals(nu);
    for (int j = 0; j < nu; ++j)
        tvals[j] = unc.coords[j].mu_bar * std::abs(sp1.r_values[j]);

    BudgetSelection out;
    out.ranking.resize(nu);
    std::iota(out.ranking.begin(), out.ranking.end(), 0);
    std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](int a, int b) {
        if (tvals[a] != tvals[b]) return tvals[a] > tvals[b];
        return a < b;
    });

    out.alpha = VectorXd::Zero(nu);
    for (int k = 0; k < gamma; ++k) out.alpha[out.ranking[k]] = 1.0;

    // phase 2: alpha frozen, counterpart re-solved
    std::vector<int> signs(nu, 0);
    for (int j = 0; j < nu; ++j) {
        if (out.alpha[j] <= 0.0 || unc.coords[j].mu_bar <= 0.0) continue;
        signs[j] = sp1.mu_star[j] >= 0.0 ? 1 : -1;
    }
    DualRcProgram restricted =
        make_dual(full.blocks, RcMode::budget, out.alpha, signs, full.big_m);
    out.setpoints = solve_rc_and_recover(restricted, settings);
    return out;
}

ParticipationRefinement refine_participation(const net::NetworkCase &c,
                                             const opf::UncertaintySpec &unc,
                                             const RobustSetpoints &sp,
                                             const opf::BuildOptions &opts,
                                             const ipm::SolverSettings &settings) {
    // pair the frozen psi with a primal re-solve at the worst case; the dual
    // multiplier can sit on the boundary of the feasible psi interval
    RobustBlocks rb = opf::assemble_robust_blocks(c, unc, opts);
    ConicProgram fixed_primal = rb.primal_at(sp.mu_star);
    ConicSolution fixed_sol = ipm::solve(fixed_primal, settings);
    if (fixed_sol.status != SolveStatus::optimal)
        throw SolverError("participation refinement baseline ended " +
                          conic::to_string(fixed_sol.status));
    const double psi_base = fixed_sol.primal[rb.psi_column];

    ConicSolution sol;
    ConicProgram p;
    bool solved = false;
    for (double nudge : {0.0, 1e-7, -1e-7, 1e-6, -1e-6}) {
        p = opf::build_variable_participation(c, unc, sp.mu_star,
                                              psi_base + nudge, opts);
        sol = ipm::solve(p, settings);
        if (sol.status == SolveStatus::optimal) {
            solved = true;
            break;
        }
    }
    if (!solved)
        throw SolverError("participation refinement solve ended " +
                          conic::to_string(sol.status) +
                          " (frozen pair is infeasible)");
    ParticipationRefinement out;
    const int ng = static_cast<int>(c.generators().size());
    out.rho.resize(ng);
    for (int g = 0; g < ng; ++g)
        out.rho[g] = sol.primal[p.column("rho[" + std::to_string(g) + "]")];
    out.objective_fixed = fixed_sol.objective;
    out.objective_refined = sol.objective;
    out.reduction_percent =
        100.0 * (out.objective_fixed - out.objective_refined) /
        std::max(1e-12, std::abs(out.objective_fixed));
    return out;
}

namespace {

struct PairResiduals {
    double cone = 0.0, angle = 0.0, tan = 0.0;
};

PairResiduals pair_residuals(const net::NetworkCase &c, const ConicProgram &p,
                             const ConicSolution &sol, bool hatted) {
    PairResiduals out;
    const auto pairs = opf::bus_pairs(c);
    auto col = [&](const std::string &base, int bus_idx) {
        // generator-bus cii is shared between the blocks
        if (hatted && base == "cii" && c.has_generator_at(bus_idx))
            return p.column(opf::names::cii(bus_idx));
        const std::string name = base == "cii" ? opf::names::cii(bus_idx)
                                               : opf::names::theta(bus_idx);
        return p.column(hatted ? opf::names::hat(name) : name);
    };
    for (size_t q = 0; q < pairs.size(); ++q) {
        const auto [lo, hi] = pairs[q];
        const std::string cs = opf::names::c_pair(static_cast<int>(q));
        const std::string ss = opf::names::s_pair(static_cast<int>(q));
        const double cv = sol.primal[p.column(hatted ? opf::names::hat(cs) : cs)];
        const double sv = sol.primal[p.column(hatted ? opf::names::hat(ss) : ss)];
        const double cl = sol.primal[col("cii", lo)];
        const double ch = sol.primal[col("cii", hi)];
        const double tl = sol.primal[col("th", lo)];
        const double th = sol.primal[col("th", hi)];
        out.cone = std::max(out.cone, std::abs(cv * cv + sv * sv - cl * ch));
        const double dth = tl - th;
        out.angle = std::max(out.angle, std::abs(dth - std::atan2(sv, cv)));
        out.tan = std::max(out.tan, std::abs(std::tan(dth) - sv / cv));
    }
    return out;
}

} // namespace

namespace {

// A frozen-x recovery problem is useful once its returned point is primal
// feasible, even when the scaled complementarity could not be pushed all the
// way to the optimality tolerance.
bool usable_recovery(const ConicSolution &sol) {
    if (sol.status == SolveStatus::optimal) return true;
    return sol.status == SolveStatus::max_iter && sol.primal_residual <= 1e-7;
}

} // namespace

ExactnessReport exactness_check(const net::NetworkCase &c,
                                const opf::UncertaintySpec &unc,
                                const RobustSetpoints &sp,
                                const opf::BuildOptions &opts,
                                const ipm::SolverSettings &settings) {
    ExactnessReport rep;
    VectorXd x_star(sp.pg.size() + sp.cii.size());
    x_star << sp.pg, sp.cii;

    // exact freeze first, then a thin box absorbing multiplier noise
    static constexpr double kFreezeLadder[] = {0.0, 1e-6, 1e-5};

    for (double eps : kFreezeLadder) {
        ConicProgram base = opf::build_qg_feasibility(c, x_star, opts, eps);
        ConicSolution bsol = ipm::solve(base, settings);
        if (!usable_recovery(bsol)) continue;
        rep.base_feasible = true;
        PairResiduals pr = pair_residuals(c, base, bsol, false);
        rep.base_cone_residual = pr.cone;
        rep.base_angle_residual = pr.angle;
        rep.base_tan_residual = pr.tan;
        break;
    }

    if (sp.mu_star.size() == static_cast<long>(unc.coords.size()) &&
        unc.size() > 0) {
        for (double eps : kFreezeLadder) {
            ConicProgram hat = opf::build_qg_feasibility_robust(
                c, unc, sp.mu_star, x_star, opts, eps);
            ConicSolution hsol = ipm::solve(hat, settings);
            if (!usable_recovery(hsol)) continue;
            rep.hat_feasible = true;
            PairResiduals pr = pair_residuals(c, hat, hsol, true);
            rep.hat_cone_residual = pr.cone;
            rep.hat_angle_residual = pr.angle;
            break;
        }
    }
    return rep;
}

double vertex_enumeration_max(const net::NetworkCase &c,
                              const opf::UncertaintySpec &unc,
                              const opf::BuildOptions &opts,
                              const ipm::SolverSettings &settings,
                              VectorXd *argmax_mu) {
    const int nu = unc.size();
    if (nu > 16)
        throw ModelError("vertex enumeration limited to 16 uncertain parameters");
    RobustBlocks rb = opf::assemble_robust_blocks(c, unc, opts);
    double best = -std::numeric_limits<double>::infinity();
    VectorXd mu(nu), best_mu = VectorXd::Zero(nu);
    const long patterns = 1L << nu;
    for (long bits = 0; bits < patterns; ++bits) {
        for (int j = 0; j < nu; ++j)
            mu[j] = (bits >> j & 1) ? unc.coords[j].mu_bar : -unc.coords[j].mu_bar;
        ConicSolution sol = ipm::solve(rb.primal_at(mu), settings);
        if (sol.status != SolveStatus::optimal)
            throw SolverError("vertex solve ended " + conic::to_string(sol.status));
        if (sol.objective > best) {
            best = sol.objective;
            best_mu = mu;
        }
    }
    if (argmax_mu) *argmax_mu = best_mu;
    return best;
}

RobustSetpoints deterministic_setpoints(const net::NetworkCase &c,
                                        const ConicProgram &program,
                                        const ConicSolution &sol) {
    if (sol.status != SolveStatus::optimal)
        throw SolverError("setpoints require an optimal solution");
    RobustSetpoints sp;
    const int ng = static_cast<int>(c.generators().size());
    sp.pg.resize(ng);
    for (int g = 0; g < ng; ++g)
        sp.pg[g] = sol.primal[program.column(opf::names::pg(g))];
    std::vector<double> cii;
    for (size_t i = 0; i < c.buses().size(); ++i) {
        if (!c.has_generator_at(static_cast<int>(i))) continue;
        cii.push_back(sol.primal[program.column(opf::names::cii(static_cast<int>(i)))]);
        sp.cii_bus.push_back(static_cast<int>(i));
    }
    sp.cii = Eigen::Map<VectorXd>(cii.data(), static_cast<long>(cii.size()));
    const int nres = static_cast<int>(c.res_units().size());
    sp.qr_schedule.resize(nres);
    for (int r = 0; r < nres; ++r)
        sp.qr_schedule[r] = sol.primal[program.column(opf::names::qr(r))];
    sp.mu_star = VectorXd::Zero(0);
    sp.alpha = VectorXd::Zero(0);
    sp.objective = sol.objective;
    sp.solver_gap = sol.gap;
    return sp;
}

} // namespace ropf::robust
