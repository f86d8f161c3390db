#include "ropf/opfbuild.hpp"

#include <algorithm>

#include <cmath>
#include <map>
#include <sstream>

namespace ropf::opf {

using conic::ConicProgram;
using conic::RowTerm;
using net::NetworkCase;

namespace names {
std::string pg(int gen) { return "Pg[" + std::to_string(gen) + "]"; }
std::string qg(int gen) { return "Qg[" + std::to_string(gen) + "]"; }
std::string cii(int bus_idx) { return "cii[" + std::to_string(bus_idx) + "]"; }
std::string theta(int bus_idx) { return "th[" + std::to_string(bus_idx) + "]"; }
std::string c_pair(int pair) { return "c[" + std::to_string(pair) + "]"; }
std::string s_pair(int pair) { return "s[" + std::to_string(pair) + "]"; }
std::string cone(int pair) { return "cone[" + std::to_string(pair) + "]"; }
std::string pf(int branch) { return "Pf[" + std::to_string(branch) + "]"; }
std::string pt(int branch) { return "Pt[" + std::to_string(branch) + "]"; }
std::string qr(int res) { return "Qr[" + std::to_string(res) + "]"; }
std::string pinj(int bus_idx) { return "Pinj[" + std::to_string(bus_idx) + "]"; }
std::string qinj(int bus_idx) { return "Qinj[" + std::to_string(bus_idx) + "]"; }
std::string hat(const std::string &base) { return "h." + base; }
} // namespace names

Eigen::VectorXd UncertaintySpec::mu_bar() const {
    Eigen::VectorXd v(size());
    for (int j = 0; j < size(); ++j) v[j] = coords[j].mu_bar;
    return v;
}

UncertaintySpec UncertaintySpec::fractional(const NetworkCase &c,
                                            double load_fraction,
                                            double res_fraction, int budget) {
    if (load_fraction < 0 || res_fraction < 0)
        throw ModelError("uncertainty fractions must be nonnegative");
    UncertaintySpec u;
    for (size_t i = 0; i < c.loads().size(); ++i) {
        const net::LoadPoint &l = c.loads()[i];
        UncertaintyCoord uc;
        uc.kind = UncertaintyCoord::Kind::load;
        uc.index = static_cast<int>(i);
        uc.bus = l.bus;
        uc.nominal = l.p_d;
        uc.mu_bar = load_fraction * std::abs(l.p_d);
        u.coords.push_back(uc);
    }
    for (size_t i = 0; i < c.res_units().size(); ++i) {
        const net::ResUnit &r = c.res_units()[i];
        UncertaintyCoord uc;
        uc.kind = UncertaintyCoord::Kind::res;
        uc.index = static_cast<int>(i);
        uc.bus = r.bus;
        uc.nominal = r.p_r;
        uc.mu_bar = res_fraction * std::abs(r.p_r);
        u.coords.push_back(uc);
    }
    u.budget = budget;
    return u;
}

Eigen::VectorXd participation_factors(const NetworkCase &c) {
    Eigen::VectorXd rho(c.generators().size());
    for (size_t g = 0; g < c.generators().size(); ++g)
        rho[static_cast<long>(g)] = c.generators()[g].participation;
    return rho;
}

Eigen::VectorXd resolve_ramp_limits(const NetworkCase &c,
                                    const BuildOptions &opts) {
    const auto &gens = c.generators();
    Eigen::VectorXd ramp(gens.size());
    for (size_t g = 0; g < gens.size(); ++g) {
        if (gens[g].ramp_limit >= 0.0) {
            ramp[static_cast<long>(g)] = gens[g].ramp_limit;
        } else if (opts.ramp_mode == RampMode::fraction_of_pmax) {
            ramp[static_cast<long>(g)] = opts.ramp_fraction * gens[g].p_max;
        } else if (opts.base_point_pg &&
                   opts.base_point_pg->size() == static_cast<long>(gens.size())) {
            ramp[static_cast<long>(g)] =
                opts.ramp_fraction * std::abs((*opts.base_point_pg)[static_cast<long>(g)]);
        } else if (opts.ramp_mode == RampMode::proportional_to_base) {
            // in-model rows couple the limit to P_g; no constant exists yet
            ramp[static_cast<long>(g)] = -1.0;
        } else {
            throw ModelError("ramp mode from_base_point needs base_point_pg");
        }
    }
    return ramp;
}

namespace {

struct ProgramSpec {
    bool robust = false;
    const UncertaintySpec *unc = nullptr;
    bool variable_rho = false;
    double psi_fixed = 0.0;
    enum class Objective { cost, qg_base, qg_hat } objective = Objective::cost;
    RobustBlocks *record = nullptr;
};

// Per-block column handles. The hatted block shares Pg and generator-bus
// cii columns with the base block.
struct BlockCols {
    std::vector<int> qg, cii, th, cp, sp, cc, ss, ee, dd, pf, pt, qr, pinj, qinj;
};

class Builder {
  public:
    Builder(const NetworkCase &c, const BuildOptions &opts)
        : c_(c), opts_(opts), adm_(net::build_admittance(c)),
          rho_(participation_factors(c)), ramp_(resolve_ramp_limits(c, opts)) {
        if (opts.eps_theta <= 0) throw ModelError("eps_theta must be positive");
        build_pairs();
    }

    ConicProgram build(const ProgramSpec &spec) {
        ConicProgram p;
        const int ng = static_cast<int>(c_.generators().size());

        // shared x block
        pg_cols_.clear();
        for (int g = 0; g < ng; ++g)
            pg_cols_.push_back(p.add_variable(names::pg(g)));

        BlockCols base = add_block_columns(p, "");
        gen_bus_cii_shared_ = base.cii;

        BlockCols hat;
        if (spec.robust) {
            if (spec.variable_rho) {
                rho_cols_.clear();
                for (int g = 0; g < ng; ++g)
                    rho_cols_.push_back(
                        p.add_variable("rho[" + std::to_string(g) + "]", 0.0));
            }
            if (!spec.variable_rho)
                psi_col_ = p.add_variable("psi");
            hat = add_block_columns(p, "h.");
        }

        // objective
        if (spec.objective == ProgramSpec::Objective::cost) {
            double offset = 0.0;
            for (int g = 0; g < ng; ++g) {
                p.set_objective(pg_cols_[g], c_.generators()[g].a);
                offset += c_.generators()[g].b;
            }
            p.set_offset(offset);
        } else if (spec.objective == ProgramSpec::Objective::qg_base) {
            for (int g = 0; g < ng; ++g) p.set_objective(base.qg[g], -1.0);
        } else {
            for (int g = 0; g < ng; ++g) p.set_objective(hat.qg[g], -1.0);
        }

        add_block_rows(p, "", base, spec, false);
        if (spec.robust) add_block_rows(p, "h.", hat, spec, true);

        if (spec.robust) {
            // generation change bounded by ramp limits; the proportional
            // mode couples the limit to the scheduled output
            const bool prop = opts_.ramp_mode == RampMode::proportional_to_base;
            for (int g = 0; g < ng; ++g) {
                std::vector<RowTerm> up, dn;
                if (spec.variable_rho) {
                    up = {{rho_cols_[g], spec.psi_fixed}};
                    dn = {{rho_cols_[g], -spec.psi_fixed}};
                } else {
                    up = {{psi_col_, rho_[g]}};
                    dn = {{psi_col_, -rho_[g]}};
                }
                double rhs = 0.0;
                if (prop && c_.generators()[g].ramp_limit < 0.0) {
                    up.push_back({pg_cols_[g], -opts_.ramp_fraction});
                    dn.push_back({pg_cols_[g], -opts_.ramp_fraction});
                } else {
                    rhs = ramp_[g];
                }
                p.add_ineq_row("ramp_ub[" + std::to_string(g) + "]", up, rhs);
                p.add_ineq_row("ramp_lb[" + std::to_string(g) + "]", dn, rhs);
            }
            if (spec.variable_rho) {
                std::vector<RowTerm> sum;
                for (int g = 0; g < ng; ++g) sum.push_back({rho_cols_[g], 1.0});
                p.add_eq_row("rho_sum", sum, 1.0);
            }
        }

        p.seal();

        if (spec.record) {
            RobustBlocks &rb = *spec.record;
            rb.coords = spec.unc->coords;
            rb.k_e = k_e_;
            rb.psi_column = psi_col_;
            rb.resolved_ramp = ramp_;
            for (int g = 0; g < ng; ++g)
                rb.x_columns.push_back({pg_cols_[g], names::pg(g),
                                        RobustBlocks::XColumn::Kind::pg, g});
            for (size_t i = 0; i < c_.buses().size(); ++i)
                if (c_.has_generator_at(static_cast<int>(i)))
                    rb.x_columns.push_back({base.cii[i], names::cii(static_cast<int>(i)),
                                            RobustBlocks::XColumn::Kind::cii,
                                            static_cast<int>(i)});
            rb.num_unhatted_cones = static_cast<int>(pairs_.size());
            for (size_t q = 0; q < pairs_.size(); ++q)
                rb.cone_names.push_back(names::cone(static_cast<int>(q)));
            for (size_t q = 0; q < pairs_.size(); ++q)
                rb.cone_names.push_back(names::hat(names::cone(static_cast<int>(q))));
        }
        return p;
    }

  private:
    void build_pairs() {
        for (size_t b = 0; b < c_.branches().size(); ++b) {
            const net::Branch &br = c_.branches()[b];
            int fi = c_.bus_index(br.from), ti = c_.bus_index(br.to);
            int lo = std::min(fi, ti), hi = std::max(fi, ti);
            auto key = std::make_pair(lo, hi);
            auto it = pair_index_.find(key);
            int q;
            if (it == pair_index_.end()) {
                q = static_cast<int>(pairs_.size());
                pair_index_[key] = q;
                pairs_.push_back(key);
            } else {
                q = it->second;
            }
            branch_pair_.push_back(q);
            branch_sign_.push_back(fi == lo ? 1.0 : -1.0);
        }
    }

    BlockCols add_block_columns(ConicProgram &p, const std::string &pre) {
        BlockCols cols;
        const int nb = static_cast<int>(c_.buses().size());
        const int ng = static_cast<int>(c_.generators().size());
        const bool hatted = !pre.empty();

        for (int g = 0; g < ng; ++g)
            cols.qg.push_back(p.add_variable(pre + names::qg(g)));
        for (int i = 0; i < nb; ++i) {
            if (hatted && c_.has_generator_at(i)) {
                // terminal voltage of conventional generators is part of x
                cols.cii.push_back(gen_bus_cii_shared_[i]);
            } else {
                cols.cii.push_back(p.add_variable(pre + names::cii(i)));
            }
        }
        for (int i = 0; i < nb; ++i)
            cols.th.push_back(p.add_variable(pre + names::theta(i)));
        for (size_t q = 0; q < pairs_.size(); ++q) {
            cols.cp.push_back(p.add_variable(pre + names::c_pair(static_cast<int>(q))));
            cols.sp.push_back(p.add_variable(pre + names::s_pair(static_cast<int>(q))));
        }
        for (size_t q = 0; q < pairs_.size(); ++q) {
            const std::string qs = std::to_string(q);
            cols.cc.push_back(p.add_variable(pre + "C[" + qs + "]"));
            cols.ss.push_back(p.add_variable(pre + "S[" + qs + "]"));
            cols.ee.push_back(p.add_variable(pre + "E[" + qs + "]"));
            cols.dd.push_back(p.add_variable(pre + "D[" + qs + "]"));
        }
        for (size_t b = 0; b < c_.branches().size(); ++b) {
            cols.pf.push_back(p.add_variable(pre + names::pf(static_cast<int>(b))));
            cols.pt.push_back(p.add_variable(pre + names::pt(static_cast<int>(b))));
        }
        for (size_t r = 0; r < c_.res_units().size(); ++r)
            cols.qr.push_back(p.add_variable(pre + names::qr(static_cast<int>(r))));
        for (int i = 0; i < nb; ++i) {
            cols.pinj.push_back(p.add_variable(pre + names::pinj(i)));
            cols.qinj.push_back(p.add_variable(pre + names::qinj(i)));
        }
        return cols;
    }

    void add_block_rows(ConicProgram &p, const std::string &pre,
                        const BlockCols &cols, const ProgramSpec &spec,
                        bool hatted) {
        const int nb = static_cast<int>(c_.buses().size());
        const int ng = static_cast<int>(c_.generators().size());
        const int nres = static_cast<int>(c_.res_units().size());

        // nominal injections per bus
        std::vector<double> pd(nb, 0.0), qd(nb, 0.0), pr(nb, 0.0);
        for (const net::LoadPoint &l : c_.loads()) {
            pd[c_.bus_index(l.bus)] += l.p_d;
            qd[c_.bus_index(l.bus)] += l.q_d;
        }
        for (const net::ResUnit &r : c_.res_units())
            pr[c_.bus_index(r.bus)] += r.p_r;

        // nodal balances
        for (int i = 0; i < nb; ++i) {
            std::vector<RowTerm> prow, qrow;
            for (int g = 0; g < ng; ++g) {
                if (c_.bus_index(c_.generators()[g].bus) != i) continue;
                prow.push_back({pg_cols_[g], 1.0});
                if (hatted) {
                    if (spec.variable_rho)
                        prow.push_back({rho_cols_[g], spec.psi_fixed});
                    else
                        prow.push_back({psi_col_, rho_[g]});
                }
                qrow.push_back({cols.qg[g], 1.0});
            }
            for (int r = 0; r < nres; ++r)
                if (c_.bus_index(c_.res_units()[r].bus) == i)
                    qrow.push_back({cols.qr[r], 1.0});
            prow.push_back({cols.pinj[i], -1.0});
            qrow.push_back({cols.qinj[i], -1.0});
            int prow_id = p.add_eq_row(pre + "pbal[" + std::to_string(i) + "]",
                                       prow, pd[i] - pr[i]);
            int qrow_id = p.add_eq_row(pre + "qbal[" + std::to_string(i) + "]",
                                       qrow, qd[i]);
            if (hatted && spec.unc) {
                for (int j = 0; j < spec.unc->size(); ++j) {
                    const UncertaintyCoord &uc = spec.unc->coords[j];
                    if (c_.bus_index(uc.bus) != i) continue;
                    if (uc.kind == UncertaintyCoord::Kind::load) {
                        k_e_.emplace_back(prow_id, j, -1.0);
                        const double lr = c_.loads()[uc.index].lr;
                        if (lr != 0.0) k_e_.emplace_back(qrow_id, j, -lr);
                    } else {
                        k_e_.emplace_back(prow_id, j, 1.0);
                    }
                }
            }
        }

        // injections from the admittance matrix
        for (int i = 0; i < nb; ++i) {
            std::vector<RowTerm> prow{{cols.cii[i], adm_.g.coeff(i, i)},
                                      {cols.pinj[i], -1.0}};
            std::vector<RowTerm> qrow{{cols.cii[i], -adm_.b.coeff(i, i)},
                                      {cols.qinj[i], -1.0}};
            for (size_t q = 0; q < pairs_.size(); ++q) {
                const auto [lo, hi] = pairs_[q];
                if (lo != i && hi != i) continue;
                const int other = (lo == i) ? hi : lo;
                const double sgn = (lo == i) ? 1.0 : -1.0;
                const double gij = adm_.g.coeff(i, other);
                const double bij = adm_.b.coeff(i, other);
                prow.push_back({cols.cp[q], gij});
                prow.push_back({cols.sp[q], sgn * bij});
                qrow.push_back({cols.sp[q], sgn * gij});
                qrow.push_back({cols.cp[q], -bij});
            }
            p.add_eq_row(pre + "pinj[" + std::to_string(i) + "]", prow, 0.0);
            p.add_eq_row(pre + "qinj[" + std::to_string(i) + "]", qrow, 0.0);
        }

        // branch active flows
        for (size_t b = 0; b < c_.branches().size(); ++b) {
            const net::Branch &br = c_.branches()[b];
            const int fi = c_.bus_index(br.from), ti = c_.bus_index(br.to);
            const int q = branch_pair_[b];
            const double sgn = branch_sign_[b];
            const std::string bs = std::to_string(b);
            p.add_eq_row(pre + "pflow_f[" + bs + "]",
                         {{cols.cii[fi], adm_.y_ff[b].real()},
                          {cols.cp[q], adm_.y_ft[b].real()},
                          {cols.sp[q], sgn * adm_.y_ft[b].imag()},
                          {cols.pf[b], -1.0}},
                         0.0);
            p.add_eq_row(pre + "pflow_t[" + bs + "]",
                         {{cols.cii[ti], adm_.y_tt[b].real()},
                          {cols.cp[q], adm_.y_tf[b].real()},
                          {cols.sp[q], -sgn * adm_.y_tf[b].imag()},
                          {cols.pt[b], -1.0}},
                         0.0);
        }

        // rotated-cone linkage C = 2c, S = 2s, E = cii_lo - cii_hi, D = sum
        for (size_t q = 0; q < pairs_.size(); ++q) {
            const auto [lo, hi] = pairs_[q];
            const std::string qs = std::to_string(q);
            p.add_eq_row(pre + "link_C[" + qs + "]",
                         {{cols.cc[q], 1.0}, {cols.cp[q], -2.0}}, 0.0);
            p.add_eq_row(pre + "link_S[" + qs + "]",
                         {{cols.ss[q], 1.0}, {cols.sp[q], -2.0}}, 0.0);
            p.add_eq_row(pre + "link_E[" + qs + "]",
                         {{cols.ee[q], 1.0}, {cols.cii[lo], -1.0}, {cols.cii[hi], 1.0}},
                         0.0);
            p.add_eq_row(pre + "link_D[" + qs + "]",
                         {{cols.dd[q], 1.0}, {cols.cii[lo], -1.0}, {cols.cii[hi], -1.0}},
                         0.0);
        }

        // reference angle
        p.add_eq_row(pre + "thref", {{cols.th[c_.reference_index()], 1.0}}, 0.0);

        // flow limits
        for (size_t b = 0; b < c_.branches().size(); ++b) {
            const net::Branch &br = c_.branches()[b];
            const std::string bs = std::to_string(b);
            p.add_ineq_row(pre + "Pf_ub[" + bs + "]", {{cols.pf[b], 1.0}}, br.p_max);
            p.add_ineq_row(pre + "Pf_lb[" + bs + "]", {{cols.pf[b], -1.0}}, br.p_max);
            p.add_ineq_row(pre + "Pt_ub[" + bs + "]", {{cols.pt[b], 1.0}}, br.p_max);
            p.add_ineq_row(pre + "Pt_lb[" + bs + "]", {{cols.pt[b], -1.0}}, br.p_max);
        }

        // RES reactive capability; the hatted block uses the tightened bound
        for (int r = 0; r < nres; ++r) {
            const net::ResUnit &ru = c_.res_units()[r];
            double headroom = ru.p_r;
            if (hatted && spec.unc) {
                for (const UncertaintyCoord &uc : spec.unc->coords)
                    if (uc.kind == UncertaintyCoord::Kind::res && uc.index == r)
                        headroom = ru.p_r + uc.mu_bar;
            }
            if (headroom > ru.s_max + 1e-12)
                throw ModelError("res unit at bus " + std::to_string(ru.bus) +
                                 ": p_r + mu_bar exceeds rating s_max");
            const double qcap =
                std::sqrt(std::max(0.0, ru.s_max * ru.s_max - headroom * headroom));
            const std::string rs = std::to_string(r);
            p.add_ineq_row(pre + "Qr_ub[" + rs + "]", {{cols.qr[r], 1.0}}, qcap);
            p.add_ineq_row(pre + "Qr_lb[" + rs + "]", {{cols.qr[r], -1.0}}, qcap);
        }

        // generator capability; the hatted block sees the AGC shift
        for (int g = 0; g < ng; ++g) {
            const net::Generator &gen = c_.generators()[g];
            const std::string gs = std::to_string(g);
            std::vector<RowTerm> up{{pg_cols_[g], 1.0}}, dn{{pg_cols_[g], -1.0}};
            if (hatted) {
                if (spec.variable_rho) {
                    up.push_back({rho_cols_[g], spec.psi_fixed});
                    dn.push_back({rho_cols_[g], -spec.psi_fixed});
                } else {
                    up.push_back({psi_col_, rho_[g]});
                    dn.push_back({psi_col_, -rho_[g]});
                }
            }
            p.add_ineq_row(pre + "Pg_ub[" + gs + "]", up, gen.p_max);
            p.add_ineq_row(pre + "Pg_lb[" + gs + "]", dn, -gen.p_min);
            p.add_ineq_row(pre + "Qg_ub[" + gs + "]", {{cols.qg[g], 1.0}}, gen.q_max);
            p.add_ineq_row(pre + "Qg_lb[" + gs + "]", {{cols.qg[g], -1.0}}, -gen.q_min);
        }

        // voltage and angle boxes
        for (int i = 0; i < nb; ++i) {
            const net::Bus &bus = c_.buses()[i];
            const std::string is = std::to_string(i);
            p.add_ineq_row(pre + "cii_ub[" + is + "]", {{cols.cii[i], 1.0}},
                           bus.v_max * bus.v_max);
            p.add_ineq_row(pre + "cii_lb[" + is + "]", {{cols.cii[i], -1.0}},
                           -bus.v_min * bus.v_min);
            p.add_ineq_row(pre + "th_ub[" + is + "]", {{cols.th[i], 1.0}},
                           bus.theta_max);
            p.add_ineq_row(pre + "th_lb[" + is + "]", {{cols.th[i], -1.0}},
                           -bus.theta_min);
        }

        // angle differences per branch
        for (size_t b = 0; b < c_.branches().size(); ++b) {
            const net::Branch &br = c_.branches()[b];
            const int fi = c_.bus_index(br.from), ti = c_.bus_index(br.to);
            const std::string bs = std::to_string(b);
            p.add_ineq_row(pre + "thd_ub[" + bs + "]",
                           {{cols.th[fi], 1.0}, {cols.th[ti], -1.0}},
                           br.theta_diff_max);
            p.add_ineq_row(pre + "thd_lb[" + bs + "]",
                           {{cols.th[fi], -1.0}, {cols.th[ti], 1.0}},
                           br.theta_diff_max);
        }

        // linearized arctangent band per pair
        for (size_t q = 0; q < pairs_.size(); ++q) {
            const auto [lo, hi] = pairs_[q];
            const std::string qs = std::to_string(q);
            p.add_ineq_row(pre + "atan_ub[" + qs + "]",
                           {{cols.th[lo], 1.0}, {cols.th[hi], -1.0}, {cols.sp[q], -1.0}},
                           opts_.eps_theta);
            p.add_ineq_row(pre + "atan_lb[" + qs + "]",
                           {{cols.th[lo], -1.0}, {cols.th[hi], 1.0}, {cols.sp[q], 1.0}},
                           opts_.eps_theta);
        }

        // rotated cones
        for (size_t q = 0; q < pairs_.size(); ++q)
            p.add_soc_block(pre + names::cone(static_cast<int>(q)), cols.cc[q],
                            cols.ss[q], cols.ee[q], cols.dd[q]);
    }

    const NetworkCase &c_;
    BuildOptions opts_;
    net::AdmittanceMatrix adm_;
    Eigen::VectorXd rho_, ramp_;
    std::vector<std::pair<int, int>> pairs_;
    std::map<std::pair<int, int>, int> pair_index_;
    std::vector<int> branch_pair_;
    std::vector<double> branch_sign_;
    std::vector<int> pg_cols_, rho_cols_;
    std::vector<int> gen_bus_cii_shared_;
    int psi_col_ = -1;
    std::vector<Eigen::Triplet<double>> k_e_;
};

void check_mu(const UncertaintySpec &unc, const Eigen::VectorXd &mu) {
    if (mu.size() != unc.size())
        throw ModelError("deviation vector dimension (" +
                         std::to_string(mu.size()) + ") does not match |U| (" +
                         std::to_string(unc.size()) + ")");
}

} // namespace

std::vector<std::pair<int, int>> bus_pairs(const NetworkCase &c) {
    std::vector<std::pair<int, int>> pairs;
    std::map<std::pair<int, int>, int> seen;
    for (const net::Branch &br : c.branches()) {
        int fi = c.bus_index(br.from), ti = c.bus_index(br.to);
        auto key = std::make_pair(std::min(fi, ti), std::max(fi, ti));
        if (seen.emplace(key, 1).second) pairs.push_back(key);
    }
    return pairs;
}

conic::ConicProgram build_deterministic(const NetworkCase &c,
                                        const BuildOptions &opts) {
    Builder b(c, opts);
    ProgramSpec spec;
    return b.build(spec);
}

conic::ConicProgram build_deterministic(const NetworkCase &c, double eps_theta) {
    BuildOptions opts;
    opts.eps_theta = eps_theta;
    return build_deterministic(c, opts);
}

RobustBlocks assemble_robust_blocks(const NetworkCase &c,
                                    const UncertaintySpec &unc,
                                    const BuildOptions &opts) {
    RobustBlocks rb;
    Builder b(c, opts);
    ProgramSpec spec;
    spec.robust = true;
    spec.unc = &unc;
    spec.record = &rb;
    rb.primal = b.build(spec);
    return rb;
}

conic::ConicProgram RobustBlocks::primal_at(const Eigen::VectorXd &mu) const {
    if (mu.size() != static_cast<long>(coords.size()))
        throw ModelError("deviation vector dimension does not match |U|");
    Eigen::VectorXd rhs = primal.eq_rhs();
    for (const auto &t : k_e) rhs[t.row()] -= t.value() * mu[t.col()];
    return primal.with_eq_rhs(rhs);
}

std::string RobustBlocks::dimensions_json() const {
    std::ostringstream os;
    os << "{\"variables\":" << primal.num_vars()
       << ",\"eq_rows\":" << primal.num_eq_rows()
       << ",\"ineq_rows\":" << primal.num_ineq_rows()
       << ",\"cones\":" << primal.soc_blocks().size()
       << ",\"x_columns\":" << x_columns.size()
       << ",\"uncertain\":" << coords.size() << "}";
    return os.str();
}

conic::ConicProgram build_robust_primal(const NetworkCase &c,
                                        const UncertaintySpec &unc,
                                        const Eigen::VectorXd &mu,
                                        const BuildOptions &opts) {
    check_mu(unc, mu);
    return assemble_robust_blocks(c, unc, opts).primal_at(mu);
}

conic::ConicProgram build_variable_participation(const NetworkCase &c,
    const UncertaintySpec &unc, const Eigen::VectorXd &mu, double psi,
    const BuildOptions &opts) {
    check_mu(unc, mu);
    RobustBlocks rb;
    Builder b(c, opts);
    ProgramSpec spec;
    spec.robust = true;
    spec.unc = &unc;
    spec.variable_rho = true;
    spec.psi_fixed = psi;
    spec.record = &rb;
    rb.primal = b.build(spec);
    return rb.primal_at(mu);
}

namespace {

std::vector<RobustBlocks::XColumn> x_columns_of(const conic::ConicProgram &p,
                                                const NetworkCase &c) {
    std::vector<RobustBlocks::XColumn> xcols;
    for (size_t g = 0; g < c.generators().size(); ++g) {
        const std::string name = names::pg(static_cast<int>(g));
        xcols.push_back({p.column(name), name, RobustBlocks::XColumn::Kind::pg,
                         static_cast<int>(g)});
    }
    for (size_t i = 0; i < c.buses().size(); ++i) {
        if (!c.has_generator_at(static_cast<int>(i))) continue;
        const std::string name = names::cii(static_cast<int>(i));
        xcols.push_back({p.column(name), name, RobustBlocks::XColumn::Kind::cii,
                         static_cast<int>(i)});
    }
    return xcols;
}

conic::ConicProgram fix_x_and_reobjective(conic::ConicProgram program,
                                          const NetworkCase &c,
                                          const std::vector<RobustBlocks::XColumn> &xcols,
                                          const Eigen::VectorXd &x_star,
                                          bool hat_objective,
                                          double freeze_eps) {
    if (x_star.size() != static_cast<long>(xcols.size()))
        throw ModelError("x_star dimension does not match the x block");
    Eigen::VectorXd obj = Eigen::VectorXd::Zero(program.num_vars());
    for (size_t g = 0; g < c.generators().size(); ++g) {
        const std::string name =
            hat_objective ? names::hat(names::qg(static_cast<int>(g)))
                          : names::qg(static_cast<int>(g));
        obj[program.column(name)] = -1.0;
    }
    conic::ConicProgram out = program.with_objective(obj, 0.0);
    // recovered multipliers carry solver-level noise; a nonzero freeze_eps
    // relaxes the exact equality into a thin box clipped to the limits
    for (size_t k = 0; k < xcols.size(); ++k) {
        double v = x_star[static_cast<long>(k)];
        double lo, hi;
        if (xcols[k].kind == RobustBlocks::XColumn::Kind::pg) {
            const net::Generator &g = c.generators()[xcols[k].ref];
            v = std::clamp(v, g.p_min, g.p_max);
            lo = std::max(g.p_min, v - freeze_eps);
            hi = std::min(g.p_max, v + freeze_eps);
        } else {
            const net::Bus &bus = c.buses()[xcols[k].ref];
            v = std::clamp(v, bus.v_min * bus.v_min, bus.v_max * bus.v_max);
            lo = std::max(bus.v_min * bus.v_min, v - freeze_eps);
            hi = std::min(bus.v_max * bus.v_max, v + freeze_eps);
        }
        out = out.with_bounds(xcols[k].column, lo, hi);
    }
    return out;
}

} // namespace

conic::ConicProgram build_qg_feasibility(const NetworkCase &c,
                                         const Eigen::VectorXd &x_star,
                                         const BuildOptions &opts,
                                         double freeze_eps) {
    conic::ConicProgram det = build_deterministic(c, opts);
    return fix_x_and_reobjective(det, c, x_columns_of(det, c), x_star, false,
                                 freeze_eps);
}

conic::ConicProgram build_qg_feasibility_robust(const NetworkCase &c,
                                                const UncertaintySpec &unc,
                                                const Eigen::VectorXd &mu,
                                                const Eigen::VectorXd &x_star,
                                                const BuildOptions &opts,
                                                double freeze_eps) {
    check_mu(unc, mu);
    RobustBlocks rb = assemble_robust_blocks(c, unc, opts);
    conic::ConicProgram at_mu = rb.primal_at(mu);
    return fix_x_and_reobjective(at_mu, c, rb.x_columns, x_star, true,
                                 freeze_eps);
}

} // namespace ropf::opf
