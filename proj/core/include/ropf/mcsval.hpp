#pragma once

#include <map>
#include <optional>

#include "ropf/acpf.hpp"

namespace ropf::mcs {

struct EnvelopeEntry {
    double max_value = -std::numeric_limits<double>::infinity();
    double min_value = std::numeric_limits<double>::infinity();
    double limit = 0.0;
};

struct ValidationReport {
    int n_scenarios = 0;
    acpf::ScenarioLabel mode = acpf::ScenarioLabel::in_range;
    int violated_scenarios = 0; ///< at least one violation or divergence
    int divergences = 0;
    double violation_probability = 0.0;
    bool robust_verdict = false; ///< zero violations and divergences
    std::map<std::string, int> violations_per_family;
    // max/min over scenarios of each monitored quantity, keyed
    // family:element (flows, voltages, generation, ramp use)
    std::map<std::string, EnvelopeEntry> envelopes;
    /// max abs setpoint difference against a reference, when supplied
    std::optional<double> eta;
};

/// Deterministic scenario stream; coordinate j of scenario k depends only on
/// (seed, k, j). In range: uniform on [-mu_bar, mu_bar]. Out of range: a fair
/// coin picks the side, then uniform on the 0.05-of-nominal band outside the
/// box.
std::vector<acpf::Scenario> generate_scenarios(const opf::UncertaintySpec &unc,
                                               acpf::ScenarioLabel mode,
                                               int n_scenarios,
                                               std::uint64_t seed);

struct ValidateOptions {
    acpf::PfOptions pf;
    opf::BuildOptions build;
    int threads = 0; ///< 0 = hardware concurrency
    /// optional reference setpoints for the eta diagnostic
    const robust::RobustSetpoints *reference = nullptr;
};

/// Algorithm: run the participation-factored power flow on every scenario,
/// evaluate the exact inequality constraints, and aggregate.
ValidationReport validate(const net::NetworkCase &c,
                          const robust::RobustSetpoints &sp,
                          const opf::UncertaintySpec &unc,
                          acpf::ScenarioLabel mode, int n_scenarios,
                          std::uint64_t seed, const ValidateOptions &opts = {});

/// Report serialization for the CLI artifacts.
std::string report_to_json(const ValidationReport &r);
std::string envelopes_to_csv(const ValidationReport &r);

} // namespace ropf::mcs
