#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "ropf/errors.hpp"

namespace ropf::conic {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Second-order-cone block over four named columns: ||(c, s, e)|| <= d.
struct SocBlock {
    int c = -1, s = -1, e = -1, d = -1;
    std::string name;
};

struct RowTerm {
    int col;
    double coef;
};

/// Linear-objective program over the nonnegative orthant and second-order
/// cones. Built incrementally, sealed by seal(); immutable afterwards.
class ConicProgram {
  public:
    int add_variable(const std::string &name, double lower = -kInf,
                     double upper = kInf);
    void set_objective(int col, double coef);
    void set_offset(double d) { offset_ = d; }
    void add_offset(double d) { offset_ += d; }
    void set_lower(int col, double lo) { lower_[col] = lo; }
    void set_upper(int col, double up) { upper_[col] = up; }

    int add_eq_row(const std::string &name, const std::vector<RowTerm> &terms,
                   double rhs);
    int add_ineq_row(const std::string &name, const std::vector<RowTerm> &terms,
                     double rhs); ///< sum(terms) <= rhs
    void add_soc_block(const std::string &name, int c, int s, int e, int d);

    /// Freezes the program: builds the sparse matrices and validates indices.
    void seal();
    bool sealed() const { return sealed_; }

    int num_vars() const { return static_cast<int>(lower_.size()); }
    int num_eq_rows() const { return static_cast<int>(eq_rhs_.size()); }
    int num_ineq_rows() const { return static_cast<int>(ineq_rhs_.size()); }

    const Eigen::VectorXd &objective() const { return objective_dense_; }
    double offset() const { return offset_; }
    const Eigen::SparseMatrix<double> &eq_matrix() const { return eq_matrix_; }
    const Eigen::VectorXd &eq_rhs() const { return eq_rhs_dense_; }
    const Eigen::SparseMatrix<double> &ineq_matrix() const { return ineq_matrix_; }
    const Eigen::VectorXd &ineq_rhs() const { return ineq_rhs_dense_; }
    const std::vector<SocBlock> &soc_blocks() const { return soc_blocks_; }
    const std::vector<double> &lower() const { return lower_; }
    const std::vector<double> &upper() const { return upper_; }

    /// Copy of a sealed program with a replaced equality right-hand side
    /// (same rows, same structure).
    ConicProgram with_eq_rhs(const Eigen::VectorXd &rhs) const;
    /// Copy with a replaced linear objective (same columns).
    ConicProgram with_objective(const Eigen::VectorXd &objective,
                                double offset) const;
    /// Copy with one variable fixed to a value.
    ConicProgram with_fixed_variable(int col, double value) const;
    /// Copy with replaced bounds on one variable.
    ConicProgram with_bounds(int col, double lo, double hi) const;

    int column(const std::string &name) const;
    const std::string &column_name(int col) const { return col_names_[col]; }
    int eq_row(const std::string &name) const;
    int ineq_row(const std::string &name) const;
    const std::string &eq_row_name(int r) const { return eq_names_[r]; }
    const std::string &ineq_row_name(int r) const { return ineq_names_[r]; }

  private:
    bool sealed_ = false;
    std::vector<std::string> col_names_;
    std::map<std::string, int> col_index_;
    std::vector<double> lower_, upper_;
    std::vector<std::pair<int, double>> objective_terms_;
    double offset_ = 0.0;

    std::vector<Eigen::Triplet<double>> eq_triplets_, ineq_triplets_;
    std::vector<double> eq_rhs_, ineq_rhs_;
    std::vector<std::string> eq_names_, ineq_names_;
    std::map<std::string, int> eq_index_, ineq_index_;
    std::vector<SocBlock> soc_blocks_;

    Eigen::VectorXd objective_dense_, eq_rhs_dense_, ineq_rhs_dense_;
    Eigen::SparseMatrix<double> eq_matrix_, ineq_matrix_;
};

/// Standard-form problem for the interior-point solver:
///   min c'x  s.t.  A x = b,  G x + s = h,  s in K
/// with K = R+^nonneg x SOC(dims[0]) x ... Solvable directly; row_origin
/// tables translate dual vectors back to the source program's rows.
struct StandardForm {
    Eigen::VectorXd c;
    Eigen::SparseMatrix<double> a;
    Eigen::VectorXd b;
    Eigen::SparseMatrix<double> g;
    Eigen::VectorXd h;
    int nonneg_count = 0;
    std::vector<int> soc_dims;
    double offset = 0.0;

    // provenance of each standard row
    enum class RowKind { model_eq, model_ineq, bound_lower, bound_upper, soc_member };
    struct RowOrigin {
        RowKind kind;
        int index;     ///< model row / column / soc block index
        int component; ///< member position inside a soc block
    };
    std::vector<RowOrigin> eq_origin;  // rows of a
    std::vector<RowOrigin> cone_origin; // rows of g
};

StandardForm assemble_standard_form(const ConicProgram &p);

enum class SolveStatus { optimal, infeasible, unbounded, max_iter };

std::string to_string(SolveStatus s);

struct IterationStat {
    int iter = 0;
    double gap = 0.0;
    double pres = 0.0;
    double dres = 0.0;
    double step = 0.0;
    double sigma = 0.0;
    double tau = 0.0;
    double kappa = 0.0;
};

/// Solution of a ConicProgram in model coordinates.
///
/// Dual sign convention: with L = c'x - sum_r eq_dual_r (a_r'x - b_r)
/// + sum_r ineq_dual_r (m_r'x - e_r) - sum_k cone_dual_k' y_k, stationarity
/// holds and ineq_duals >= 0, cone_duals in the (self-dual) SOC. For
/// min x s.t. x = b this yields eq_dual = dObjective/db.
struct ConicSolution {
    SolveStatus status = SolveStatus::max_iter;
    Eigen::VectorXd primal;      ///< model variables
    Eigen::VectorXd eq_duals;    ///< per model equality row
    Eigen::VectorXd ineq_duals;  ///< per model inequality row, >= 0
    std::vector<Eigen::Vector4d> cone_duals; ///< per soc block (c,s,e,d order)
    Eigen::VectorXd lower_duals, upper_duals; ///< per variable bound
    double objective = 0.0;      ///< c'x + offset
    double gap = 0.0;            ///< complementarity gap of the solver
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
    std::vector<IterationStat> trace;
};

/// Named multiplier table (equality and inequality rows; soc blocks expand
/// to four entries suffixed .c/.s/.e/.d). Requires an optimal solution.
std::map<std::string, double> extract_duals(const ConicSolution &sol,
                                            const ConicProgram &p);

/// Human-readable dump of objective, rows, cones and bounds for diffing
/// against external solvers.
std::string dump_program(const ConicProgram &p);

} // namespace ropf::conic
