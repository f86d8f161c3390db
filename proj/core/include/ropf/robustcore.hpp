#pragma once

#include <memory>

#include "ropf/ipm.hpp"
#include "ropf/opfbuild.hpp"

namespace ropf::robust {

enum class RcMode { full, budget };

/// Dual robust counterpart in solver (min) form. The reported robust
/// objective is the negated optimum. alpha holds the budget status per
/// uncertain coordinate; sign_restriction pins the worst-case side
/// (0 = free) and is what solve_rc_and_recover iterates on.
struct DualRcProgram {
    conic::ConicProgram program;
    RcMode mode = RcMode::full;
    Eigen::VectorXd alpha;
    std::vector<int> sign_restriction;
    double big_m = 0.0;
    std::shared_ptr<const opf::RobustBlocks> blocks;

    // column/row names inside `program`
    std::vector<std::string> x_row_names;  ///< stationarity rows carrying x*
    std::string psi_row_name;
    std::vector<std::string> r_cols, rp_cols, rm_cols, t_cols;
};

DualRcProgram build_dual_rc(const net::NetworkCase &c,
                            const opf::UncertaintySpec &unc, RcMode mode,
                            const opf::BuildOptions &opts = {});

struct RobustSetpoints {
    Eigen::VectorXd pg;           ///< per generator
    Eigen::VectorXd cii;          ///< per generator bus (ascending bus index)
    std::vector<int> cii_bus;     ///< bus indices aligned with cii
    Eigen::VectorXd qr_schedule;  ///< per RES unit, base-case reactive output
    Eigen::VectorXd mu_star;      ///< worst-case deviations
    Eigen::VectorXd alpha;        ///< budget status used
    double psi_star = 0.0;        ///< mismatch at the worst case
    double objective = 0.0;       ///< robust optimum, $/h
    // diagnostics
    Eigen::VectorXd r_values;
    Eigen::VectorXd complementarity; ///< min(R+_j, R-_j)
    double max_r_vs_big_m = 0.0;     ///< max_j max(R+,R-)/T
    double solver_gap = 0.0;
    int sign_iterations = 0;
    std::vector<conic::IterationStat> solver_trace;
};

RobustSetpoints solve_rc_and_recover(const DualRcProgram &rc,
                                     const ipm::SolverSettings &settings = {});

struct GapReport {
    double rc_objective = 0.0;
    double primal_objective = 0.0;
    double rel_gap = 0.0;
    double max_setpoint_diff = 0.0; ///< infinity norm over the x block
    bool primal_feasible = true;
};

/// Re-solves the robust primal at the recovered worst case and compares
/// objectives and setpoints.
GapReport cross_check_strong_duality(const net::NetworkCase &c,
                                     const opf::UncertaintySpec &unc,
                                     const RobustSetpoints &sp,
                                     const opf::BuildOptions &opts = {},
                                     const ipm::SolverSettings &settings = {});

struct BudgetSelection {
    Eigen::VectorXd alpha;
    RobustSetpoints setpoints;
    std::vector<int> ranking; ///< coordinates ordered by phase-1 |t_j|
};

/// Two-phase budget heuristic: rank coordinates by |t_j| from the full RC,
/// fix the top-Gamma alpha to one and re-solve.
BudgetSelection select_budget(const net::NetworkCase &c,
                              const opf::UncertaintySpec &unc, int gamma,
                              const opf::BuildOptions &opts = {},
                              const ipm::SolverSettings &settings = {});

struct ParticipationRefinement {
    Eigen::VectorXd rho;
    double objective_fixed = 0.0;
    double objective_refined = 0.0;
    double reduction_percent = 0.0;
};

/// Re-solves the robust primal at frozen (mu*, psi*) with the participation
/// factors as variables.
ParticipationRefinement refine_participation(const net::NetworkCase &c,
                                             const opf::UncertaintySpec &unc,
                                             const RobustSetpoints &sp,
                                             const opf::BuildOptions &opts = {},
                                             const ipm::SolverSettings &settings = {});

struct ExactnessReport {
    bool base_feasible = false;
    double base_cone_residual = 0.0;  ///< max |c^2 + s^2 - cii cjj|
    double base_angle_residual = 0.0; ///< max |theta_ij - atan(s/c)|
    double base_tan_residual = 0.0;   ///< max |tan(theta_ij) - s/c|
    bool hat_feasible = false;
    double hat_cone_residual = 0.0;
    double hat_angle_residual = 0.0;
};

/// Reactive-headroom recovery with x frozen at the setpoints; reports the
/// nonconvex-equality residuals at the recovered point, and the hatted
/// analogue at the worst case.
ExactnessReport exactness_check(const net::NetworkCase &c,
                                const opf::UncertaintySpec &unc,
                                const RobustSetpoints &sp,
                                const opf::BuildOptions &opts = {},
                                const ipm::SolverSettings &settings = {});

/// Brute-force oracle: solves the robust primal at every sign vertex of the
/// box (2^|U| solves) and returns the maximum objective. Intended for tests
/// and small |U|.
double vertex_enumeration_max(const net::NetworkCase &c,
                              const opf::UncertaintySpec &unc,
                              const opf::BuildOptions &opts = {},
                              const ipm::SolverSettings &settings = {},
                              Eigen::VectorXd *argmax_mu = nullptr);

/// Setpoints read from a solved deterministic program (mu* = 0, psi = 0).
RobustSetpoints deterministic_setpoints(const net::NetworkCase &c,
                                        const conic::ConicProgram &program,
                                        const conic::ConicSolution &sol);

} // namespace ropf::robust
