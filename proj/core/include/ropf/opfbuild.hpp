#pragma once

#include <optional>

#include "ropf/conic.hpp"
#include "ropf/netcase.hpp"

namespace ropf::opf {

/// fraction_of_pmax: constant limit ramp_fraction x p_max.
/// from_base_point: constant limit ramp_fraction x a prior dispatch
/// (base_point_pg).
/// proportional_to_base: limit ramp_fraction x P_g as linear rows coupling
/// the AGC response to the scheduled output; keeps the response inside
/// [(1-f) P_g, (1+f) P_g] for every realization.
enum class RampMode { fraction_of_pmax, from_base_point, proportional_to_base };

struct BuildOptions {
    double eps_theta = 0.05;     ///< arctangent band half width, radians
    double ramp_fraction = 0.75;
    RampMode ramp_mode = RampMode::fraction_of_pmax;
    /// per-generator base points for RampMode::from_base_point
    std::optional<Eigen::VectorXd> base_point_pg;
};

/// One uncertain injection: an active-power load or RES deviation.
struct UncertaintyCoord {
    enum class Kind { load, res };
    Kind kind = Kind::load;
    int index = 0;   ///< position in case.loads() / case.res_units()
    int bus = 0;     ///< bus id
    double nominal = 0.0;
    double mu_bar = 0.0; ///< deviation bound, per unit (symmetric box)
};

struct UncertaintySpec {
    std::vector<UncertaintyCoord> coords;
    int budget = -1;     ///< Gamma; negative = full (|U|)
    double big_m = 0.0;  ///< Big-M T; 0 = derive from data at dual build

    int size() const { return static_cast<int>(coords.size()); }
    Eigen::VectorXd mu_bar() const;

    /// Bounds as fractions of the nominal injections, loads first then RES.
    static UncertaintySpec fractional(const net::NetworkCase &c,
                                      double load_fraction,
                                      double res_fraction, int budget = -1);
};

/// Column naming scheme shared by the deterministic and robust programs.
/// Hatted (worst-case block) copies carry the "h." prefix.
namespace names {
std::string pg(int gen);
std::string qg(int gen);
std::string cii(int bus_idx);
std::string theta(int bus_idx);
std::string c_pair(int pair);
std::string s_pair(int pair);
std::string cone(int pair);
std::string pf(int branch);
std::string pt(int branch);
std::string qr(int res);
std::string pinj(int bus_idx);
std::string qinj(int bus_idx);
std::string hat(const std::string &base);
} // namespace names

/// Static structure of the robust primal: the sealed program at mu = 0 plus
/// the classification the dual transform needs. The equality rhs of `primal`
/// is f; a nonzero mu shifts it by -K_E mu (see primal_at).
struct RobustBlocks {
    conic::ConicProgram primal; ///< both blocks, mu = 0
    std::vector<UncertaintyCoord> coords;
    std::vector<Eigen::Triplet<double>> k_e; ///< (eq row, coord, coef)

    // x block: column index, display name, and meaning
    struct XColumn {
        int column;
        std::string name;
        enum class Kind { pg, cii } kind;
        int ref; ///< generator index / bus index
    };
    std::vector<XColumn> x_columns;
    int psi_column = -1;

    Eigen::VectorXd resolved_ramp;          ///< per generator
    std::vector<std::string> cone_names;     ///< unhatted + hatted block names
    int num_unhatted_cones = 0;

    /// Robust primal with the deviation vector frozen at mu.
    conic::ConicProgram primal_at(const Eigen::VectorXd &mu) const;

    /// Dimension echo for debugging.
    std::string dimensions_json() const;
};

/// Deterministic SOC-relaxed ACOPF (single block).
conic::ConicProgram build_deterministic(const net::NetworkCase &c,
                                        const BuildOptions &opts = {});
conic::ConicProgram build_deterministic(const net::NetworkCase &c,
                                        double eps_theta);

/// All matrix blocks of the robust primal; errors if a tightened RES bound
/// would be imaginary (p_r + mu_bar exceeding the rating).
RobustBlocks assemble_robust_blocks(const net::NetworkCase &c,
                                    const UncertaintySpec &unc,
                                    const BuildOptions &opts = {});

/// Robust primal with mu frozen at the given deviation vector.
conic::ConicProgram build_robust_primal(const net::NetworkCase &c,
                                        const UncertaintySpec &unc,
                                        const Eigen::VectorXd &mu,
                                        const BuildOptions &opts = {});

/// Robust primal at frozen (mu, psi) with the participation factors as
/// variables (sum rho = 1, rho >= 0); used by the refinement study.
conic::ConicProgram build_variable_participation(const net::NetworkCase &c,
                                                 const UncertaintySpec &unc,
                                                 const Eigen::VectorXd &mu,
                                                 double psi,
                                                 const BuildOptions &opts = {});

/// Reactive-headroom feasibility problem: x frozen at x_star (within
/// freeze_eps, clipped to the operational box), objective max sum Qg over
/// the base block (deterministic constraints).
conic::ConicProgram build_qg_feasibility(const net::NetworkCase &c,
                                         const Eigen::VectorXd &x_star,
                                         const BuildOptions &opts = {},
                                         double freeze_eps = 0.0);

/// Hatted analogue at a frozen deviation vector.
conic::ConicProgram build_qg_feasibility_robust(const net::NetworkCase &c,
                                                const UncertaintySpec &unc,
                                                const Eigen::VectorXd &mu,
                                                const Eigen::VectorXd &x_star,
                                                const BuildOptions &opts = {},
                                                double freeze_eps = 0.0);

/// Participation factors and ramp limits actually used by the builders.
Eigen::VectorXd participation_factors(const net::NetworkCase &c);
Eigen::VectorXd resolve_ramp_limits(const net::NetworkCase &c,
                                    const BuildOptions &opts);

/// Unordered connected bus pairs (lo, hi bus indices) in the deterministic
/// order used for the c/s and cone variables.
std::vector<std::pair<int, int>> bus_pairs(const net::NetworkCase &c);

} // namespace ropf::opf
