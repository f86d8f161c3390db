#pragma once

#include <cstdint>
#include <string>

#include "ropf/netcase.hpp"
#include "ropf/opfbuild.hpp"
#include "ropf/robustcore.hpp"

namespace ropf::acpf {

enum class ScenarioLabel { in_range, out_of_range };

struct Scenario {
    Eigen::VectorXd mu;     ///< per uncertain coordinate, per unit
    ScenarioLabel label = ScenarioLabel::in_range;
    std::uint64_t id = 0;   ///< seed-derived identifier
};

struct PfSolution {
    bool converged = false;
    int iterations = 0;
    double mismatch = 0.0;      ///< final infinity norm, per unit
    double psi = 0.0;           ///< distributed-slack mismatch absorbed by AGC
    Eigen::VectorXd v, theta;   ///< per bus
    Eigen::VectorXd pg_hat;     ///< per generator, P_g + rho psi
    Eigen::VectorXd qg_hat;     ///< per generator
    Eigen::VectorXd qr;         ///< per RES unit, after capability clipping
    Eigen::VectorXd flow_from, flow_to;   ///< per branch active flows
    Eigen::VectorXd qflow_from, qflow_to; ///< per branch reactive flows
};

struct PfOptions {
    double tolerance = 1e-8;
    int max_iterations = 50;
};

/// Participation-factored Newton-Raphson power flow. Generator-bus voltage
/// magnitudes are held at sqrt(cii) from the setpoints; the active mismatch
/// is absorbed by all generators through their participation factors.
/// Divergence is reported through the converged flag, not an exception.
PfSolution run_pf(const net::NetworkCase &c, const robust::RobustSetpoints &sp,
                  const opf::UncertaintySpec &unc, const Scenario &scenario,
                  const PfOptions &opts = {});

struct Violation {
    std::string family;  ///< flow, gen_p, gen_q, ramp, res_q, voltage, angle, angle_diff
    std::string element; ///< worst offender, human readable
    double margin = 0.0; ///< negative = violated, per unit / radians
};

struct ViolationRecord {
    std::vector<Violation> worst_per_family; ///< one entry per family
    int violated_families = 0;
    bool any() const { return violated_families > 0; }
};

/// Exact-ACOPF inequality check of a converged power flow at feasibility
/// tolerance 1e-6.
ViolationRecord evaluate_constraints(const net::NetworkCase &c,
                                     const opf::UncertaintySpec &unc,
                                     const Scenario &scenario,
                                     const PfSolution &pf,
                                     const opf::BuildOptions &opts = {});

} // namespace ropf::acpf
