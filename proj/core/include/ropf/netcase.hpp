#pragma once

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "ropf/errors.hpp"

namespace ropf::net {

enum class BusType { reference, generator, load_only };

struct Bus {
    int id = 0;
    BusType type = BusType::load_only;
    double v_min = 0.94;
    double v_max = 1.06;
    double theta_min = -std::numbers::pi / 2;
    double theta_max = std::numbers::pi / 2;
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_sh = 0.0;     ///< total line charging susceptance
    double tap_mag = 1.0;  ///< off-nominal tap magnitude, 1 = none
    double tap_shift = 0.0; ///< phase shift in radians
    double p_max = 99.0;   ///< active flow limit, per unit
    double theta_diff_max = std::numbers::pi / 4;
};

struct Generator {
    int bus = 0;
    double a = 0.0; ///< linear cost slope, $/pu-h
    double b = 0.0; ///< cost constant, $/h
    double p_min = 0.0;
    double p_max = 0.0;
    double q_min = 0.0;
    double q_max = 0.0;
    double ramp_limit = -1.0;    ///< per unit; negative = unset, resolved by the model builder
    double participation = 0.0;  ///< AGC share; zero = assign default at construction
};

struct LoadPoint {
    int bus = 0;
    double p_d = 0.0;
    double q_d = 0.0;
    double lr = 0.0; ///< reactive coupling Q/P at constant power factor
};

struct ResUnit {
    int bus = 0;
    double p_r = 0.0;
    double s_max = 0.0;
};

/// Immutable, validated power-network description in per-unit.
/// Construction enforces the data invariants; instances are safe to share
/// across threads.
class NetworkCase {
  public:
    static NetworkCase create(double base_mva, std::vector<Bus> buses,
                              std::vector<Branch> branches,
                              std::vector<Generator> generators,
                              std::vector<LoadPoint> loads,
                              std::vector<ResUnit> res_units);

    double base_mva() const { return base_mva_; }
    const std::vector<Bus> &buses() const { return buses_; }
    const std::vector<Branch> &branches() const { return branches_; }
    const std::vector<Generator> &generators() const { return generators_; }
    const std::vector<LoadPoint> &loads() const { return loads_; }
    const std::vector<ResUnit> &res_units() const { return res_units_; }

    /// Dense index of a bus id; throws ModelError for unknown ids.
    int bus_index(int bus_id) const;
    /// Index of the unique reference bus.
    int reference_index() const { return reference_index_; }

    bool has_generator_at(int bus_idx) const { return gen_at_bus_[bus_idx]; }

  private:
    NetworkCase() = default;
    static int bus_index_impl(int bus_id, const std::vector<int> &ids);

    double base_mva_ = 100.0;
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::vector<Generator> generators_;
    std::vector<LoadPoint> loads_;
    std::vector<ResUnit> res_units_;
    std::vector<int> bus_ids_;      // sorted, parallel to buses_
    std::vector<char> gen_at_bus_;  // per bus index
    int reference_index_ = -1;
};

enum class CaseFormat { mcase, native_json };

struct ParseOptions {
    /// Quadratic gencost rows are rejected unless this converts them to the
    /// tangent line at p_max/2.
    bool convert_quadratic_cost = false;
};

/// Parse a case from a stream in the given format. The source name is used
/// in error messages only.
NetworkCase parse_case(std::istream &in, CaseFormat format,
                       const std::string &source_name = "<stream>",
                       const ParseOptions &opts = {});

/// Load from a file, inferring the format from the extension
/// (.m -> mcase, .json -> native JSON).
NetworkCase load_case(const std::filesystem::path &path,
                      const ParseOptions &opts = {});

/// Canonical JSON dump with stable key order, suitable for diffing and
/// for re-parsing as native_json.
std::string to_canonical_json(const NetworkCase &c);

/// Bus admittance matrix plus the per-branch two-port coefficients used by
/// the flow equations. Indices follow NetworkCase bus ordering.
struct AdmittanceMatrix {
    Eigen::SparseMatrix<double> g; ///< real part of Ybus
    Eigen::SparseMatrix<double> b; ///< imaginary part of Ybus
    // per-branch two-port entries: Y_ff, Y_ft, Y_tf, Y_tt
    std::vector<std::complex<double>> y_ff, y_ft, y_tf, y_tt;
};

AdmittanceMatrix build_admittance(const NetworkCase &c);

enum class ResPlacement { largest_load_first, seeded_random };

/// Add RES units at load buses until their total nominal output reaches
/// penetration x (sum of conventional p_max). Each unit is capped by the
/// local load and rated at 1.1 x its nominal output.
NetworkCase place_res(const NetworkCase &c, double penetration, unsigned seed,
                      ResPlacement mode = ResPlacement::largest_load_first);

} // namespace ropf::net
