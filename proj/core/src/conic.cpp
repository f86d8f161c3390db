#include "ropf/conic.hpp"

#include <cmath>
#include <sstream>

namespace ropf::conic {

int ConicProgram::add_variable(const std::string &name, double lower,
                               double upper) {
    if (sealed_) throw ModelError("program is sealed");
    if (col_index_.count(name))
        throw ModelError("duplicate variable name '" + name + "'");
    if (lower > upper)
        throw ModelError("variable '" + name + "' has empty bound interval");
    int col = num_vars();
    col_index_[name] = col;
    col_names_.push_back(name);
    lower_.push_back(lower);
    upper_.push_back(upper);
    return col;
}

void ConicProgram::set_objective(int col, double coef) {
    if (sealed_) throw ModelError("program is sealed");
    objective_terms_.emplace_back(col, coef);
}

int ConicProgram::add_eq_row(const std::string &name,
                             const std::vector<RowTerm> &terms, double rhs) {
    if (sealed_) throw ModelError("program is sealed");
    if (eq_index_.count(name))
        throw ModelError("duplicate equality row '" + name + "'");
    int row = num_eq_rows();
    for (const RowTerm &t : terms) {
        if (t.col < 0 || t.col >= num_vars())
            throw ModelError("row '" + name + "' references column out of range");
        if (t.coef != 0.0) eq_triplets_.emplace_back(row, t.col, t.coef);
    }
    eq_rhs_.push_back(rhs);
    eq_names_.push_back(name);
    eq_index_[name] = row;
    return row;
}

int ConicProgram::add_ineq_row(const std::string &name,
                               const std::vector<RowTerm> &terms, double rhs) {
    if (sealed_) throw ModelError("program is sealed");
    if (ineq_index_.count(name))
        throw ModelError("duplicate inequality row '" + name + "'");
    int row = num_ineq_rows();
    for (const RowTerm &t : terms) {
        if (t.col < 0 || t.col >= num_vars())
            throw ModelError("row '" + name + "' references column out of range");
        if (t.coef != 0.0) ineq_triplets_.emplace_back(row, t.col, t.coef);
    }
    ineq_rhs_.push_back(rhs);
    ineq_names_.push_back(name);
    ineq_index_[name] = row;
    return row;
}

void ConicProgram::add_soc_block(const std::string &name, int c, int s, int e,
                                 int d) {
    if (sealed_) throw ModelError("program is sealed");
    for (int col : {c, s, e, d})
        if (col < 0 || col >= num_vars())
            throw ModelError("soc block '" + name + "' references column out of range");
    // the d member is nonnegative inside the cone; a contradictory upper
    // bound would make the block empty
    if (upper_[d] < 0.0)
        throw ModelError("soc block '" + name + "' has d bounded negative");
    soc_blocks_.push_back({c, s, e, d, name});
}

void ConicProgram::seal() {
    if (sealed_) return;
    const int n = num_vars();
    objective_dense_ = Eigen::VectorXd::Zero(n);
    for (const auto &[col, coef] : objective_terms_) objective_dense_[col] += coef;

    eq_matrix_.resize(num_eq_rows(), n);
    eq_matrix_.setFromTriplets(eq_triplets_.begin(), eq_triplets_.end());
    ineq_matrix_.resize(num_ineq_rows(), n);
    ineq_matrix_.setFromTriplets(ineq_triplets_.begin(), ineq_triplets_.end());
    eq_rhs_dense_ = Eigen::Map<Eigen::VectorXd>(eq_rhs_.data(),
                                                static_cast<long>(eq_rhs_.size()));
    ineq_rhs_dense_ = Eigen::Map<Eigen::VectorXd>(
        ineq_rhs_.data(), static_cast<long>(ineq_rhs_.size()));
    sealed_ = true;
}

ConicProgram ConicProgram::with_eq_rhs(const Eigen::VectorXd &rhs) const {
    if (!sealed_) throw ModelError("with_eq_rhs requires a sealed program");
    if (rhs.size() != eq_rhs_dense_.size())
        throw ModelError("replacement rhs has wrong dimension");
    ConicProgram p = *this;
    p.eq_rhs_dense_ = rhs;
    for (size_t r = 0; r < p.eq_rhs_.size(); ++r) p.eq_rhs_[r] = rhs[static_cast<long>(r)];
    return p;
}

ConicProgram ConicProgram::with_objective(const Eigen::VectorXd &objective,
                                          double offset) const {
    if (!sealed_) throw ModelError("with_objective requires a sealed program");
    if (objective.size() != num_vars())
        throw ModelError("replacement objective has wrong dimension");
    ConicProgram p = *this;
    p.objective_dense_ = objective;
    p.offset_ = offset;
    return p;
}

ConicProgram ConicProgram::with_fixed_variable(int col, double value) const {
    if (!sealed_) throw ModelError("with_fixed_variable requires a sealed program");
    ConicProgram p = *this;
    p.lower_[col] = value;
    p.upper_[col] = value;
    return p;
}

ConicProgram ConicProgram::with_bounds(int col, double lo, double hi) const {
    if (!sealed_) throw ModelError("with_bounds requires a sealed program");
    if (lo > hi) throw ModelError("with_bounds: empty interval");
    ConicProgram p = *this;
    p.lower_[col] = lo;
    p.upper_[col] = hi;
    return p;
}

int ConicProgram::column(const std::string &name) const {
    auto it = col_index_.find(name);
    if (it == col_index_.end())
        throw ModelError("unknown variable '" + name + "'");
    return it->second;
}

int ConicProgram::eq_row(const std::string &name) const {
    auto it = eq_index_.find(name);
    if (it == eq_index_.end())
        throw ModelError("unknown equality row '" + name + "'");
    return it->second;
}

int ConicProgram::ineq_row(const std::string &name) const {
    auto it = ineq_index_.find(name);
    if (it == ineq_index_.end())
        throw ModelError("unknown inequality row '" + name + "'");
    return it->second;
}

StandardForm assemble_standard_form(const ConicProgram &p) {
    if (!p.sealed()) throw ModelError("program must be sealed before assembly");
    const int n = p.num_vars();

    StandardForm sf;
    sf.c = p.objective();
    sf.offset = p.offset();

    // equality block: model equalities plus fixed variables
    std::vector<Eigen::Triplet<double>> ta;
    std::vector<double> b;
    for (int r = 0; r < p.num_eq_rows(); ++r) {
        sf.eq_origin.push_back({StandardForm::RowKind::model_eq, r, 0});
        b.push_back(p.eq_rhs()[r]);
    }
    for (int k = 0; k < p.eq_matrix().outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(p.eq_matrix(), k); it;
             ++it)
            ta.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                            it.value());
    for (int j = 0; j < n; ++j) {
        if (p.lower()[j] == p.upper()[j]) {
            int r = static_cast<int>(b.size());
            ta.emplace_back(r, j, 1.0);
            b.push_back(p.lower()[j]);
            sf.eq_origin.push_back({StandardForm::RowKind::bound_lower, j, 0});
        }
    }

    // cone block: model inequalities, finite bounds, then soc members
    std::vector<Eigen::Triplet<double>> tg;
    std::vector<double> h;
    for (int r = 0; r < p.num_ineq_rows(); ++r) {
        sf.cone_origin.push_back({StandardForm::RowKind::model_ineq, r, 0});
        h.push_back(p.ineq_rhs()[r]);
    }
    for (int k = 0; k < p.ineq_matrix().outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(p.ineq_matrix(), k); it;
             ++it)
            tg.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                            it.value());
    for (int j = 0; j < n; ++j) {
        if (p.lower()[j] == p.upper()[j]) continue; // handled as equality
        if (std::isfinite(p.lower()[j])) {
            int r = static_cast<int>(h.size());
            tg.emplace_back(r, j, -1.0);
            h.push_back(-p.lower()[j]);
            sf.cone_origin.push_back({StandardForm::RowKind::bound_lower, j, 0});
        }
        if (std::isfinite(p.upper()[j])) {
            int r = static_cast<int>(h.size());
            tg.emplace_back(r, j, 1.0);
            h.push_back(p.upper()[j]);
            sf.cone_origin.push_back({StandardForm::RowKind::bound_upper, j, 0});
        }
    }
    sf.nonneg_count = static_cast<int>(h.size());

    int blk = 0;
    for (const SocBlock &sb : p.soc_blocks()) {
        // s = (d, c, s, e) in SOC(4)
        const int cols[4] = {sb.d, sb.c, sb.s, sb.e};
        for (int m = 0; m < 4; ++m) {
            int r = static_cast<int>(h.size());
            tg.emplace_back(r, cols[m], -1.0);
            h.push_back(0.0);
            sf.cone_origin.push_back({StandardForm::RowKind::soc_member, blk, m});
        }
        sf.soc_dims.push_back(4);
        ++blk;
    }

    sf.a.resize(static_cast<int>(b.size()), n);
    sf.a.setFromTriplets(ta.begin(), ta.end());
    sf.b = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<long>(b.size()));
    sf.g.resize(static_cast<int>(h.size()), n);
    sf.g.setFromTriplets(tg.begin(), tg.end());
    sf.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<long>(h.size()));
    return sf;
}

std::string to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iter: return "max_iter";
    }
    return "unknown";
}

std::map<std::string, double> extract_duals(const ConicSolution &sol,
                                            const ConicProgram &p) {
    if (sol.status != SolveStatus::optimal)
        throw SolverError("duals requested from a non-optimal solution (" +
                          to_string(sol.status) + ")");
    std::map<std::string, double> table;
    for (int r = 0; r < p.num_eq_rows(); ++r)
        table[p.eq_row_name(r)] = sol.eq_duals[r];
    for (int r = 0; r < p.num_ineq_rows(); ++r)
        table[p.ineq_row_name(r)] = sol.ineq_duals[r];
    for (size_t k = 0; k < p.soc_blocks().size(); ++k) {
        const SocBlock &sb = p.soc_blocks()[k];
        const Eigen::Vector4d &z = sol.cone_duals[k];
        table[sb.name + ".c"] = z[0];
        table[sb.name + ".s"] = z[1];
        table[sb.name + ".e"] = z[2];
        table[sb.name + ".d"] = z[3];
    }
    return table;
}

std::string dump_program(const ConicProgram &p) {
    std::ostringstream os;
    os.precision(12);
    os << "minimize";
    bool first = true;
    for (int j = 0; j < p.num_vars(); ++j) {
        double c = p.objective()[j];
        if (c == 0.0) continue;
        os << (first ? " " : " + ") << c << "*" << p.column_name(j);
        first = false;
    }
    if (p.offset() != 0.0) os << " + " << p.offset();
    os << "\n";

    auto write_rows = [&os, &p](const Eigen::SparseMatrix<double> &m,
                                const Eigen::VectorXd &rhs, bool eq,
                                auto name_of) {
        Eigen::SparseMatrix<double, Eigen::RowMajor> rm(m);
        for (int r = 0; r < rm.outerSize(); ++r) {
            os << "  " << name_of(r) << ":";
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rm, r);
                 it; ++it)
                os << " + " << it.value() << "*" << p.column_name(static_cast<int>(it.col()));
            os << (eq ? " == " : " <= ") << rhs[r] << "\n";
        }
    };
    os << "subject to (equalities):\n";
    write_rows(p.eq_matrix(), p.eq_rhs(), true,
               [&p](int r) { return p.eq_row_name(r); });
    os << "subject to (inequalities):\n";
    write_rows(p.ineq_matrix(), p.ineq_rhs(), false,
               [&p](int r) { return p.ineq_row_name(r); });
    os << "cones:\n";
    for (const SocBlock &sb : p.soc_blocks())
        os << "  " << sb.name << ": ||(" << p.column_name(sb.c) << ", "
           << p.column_name(sb.s) << ", " << p.column_name(sb.e) << ")|| <= "
           << p.column_name(sb.d) << "\n";
    os << "bounds:\n";
    for (int j = 0; j < p.num_vars(); ++j) {
        if (p.lower()[j] == -kInf && p.upper()[j] == kInf) continue;
        os << "  " << p.lower()[j] << " <= " << p.column_name(j) << " <= "
           << p.upper()[j] << "\n";
    }
    return os.str();
}

} // namespace ropf::conic
