#include <doctest.h>

#include <cstring>

#include "ropf/acpf.hpp"
#include "oracles.hpp"

using namespace ropf;
using acpf::Scenario;
using net::NetworkCase;
using opf::UncertaintySpec;
using robust::RobustSetpoints;

namespace {

NetworkCase load(const std::string &name) {
    return net::load_case(std::string(ROPF_TEST_DATA_DIR) + "/" + name);
}

// setpoints assembled by hand: the power flow contract does not depend on
// how they were produced
RobustSetpoints manual_setpoints(const NetworkCase &c,
                                 const Eigen::VectorXd &pg, double v_gen) {
    RobustSetpoints sp;
    sp.pg = pg;
    std::vector<double> cii;
    for (size_t i = 0; i < c.buses().size(); ++i)
        if (c.has_generator_at(static_cast<int>(i))) {
            cii.push_back(v_gen * v_gen);
            sp.cii_bus.push_back(static_cast<int>(i));
        }
    sp.cii = Eigen::Map<Eigen::VectorXd>(cii.data(), static_cast<long>(cii.size()));
    sp.qr_schedule = Eigen::VectorXd::Zero(static_cast<long>(c.res_units().size()));
    return sp;
}

} // namespace

TEST_CASE("two-bus power flow matches the dense oracle to 1e-8") {
    NetworkCase c = load("case2_lossy.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.0);
    Eigen::VectorXd pg(1);
    pg << 1.0;
    RobustSetpoints sp = manual_setpoints(c, pg, 1.05);

    Scenario sc;
    sc.mu = Eigen::VectorXd::Constant(1, 0.03); // load +3%
    acpf::PfSolution pf = acpf::run_pf(c, sp, unc, sc);
    REQUIRE(pf.converged);
    CHECK(pf.mismatch <= 1e-8);

    // independent dense Newton solve with distributed slack eliminated by
    // hand: psi only shifts the slack injection on this single-gen case
    oracles::TwoBusState st = oracles::two_bus_pf(
        c.branches()[0].r, c.branches()[0].x, 1.03, 0.2 + 0.03 * 0.2, 1.05);
    REQUIRE(st.converged);
    CHECK(pf.v[1] == doctest::Approx(st.v2).epsilon(1e-8));
    CHECK(pf.theta[1] == doctest::Approx(st.th2).epsilon(1e-8));
    // psi covers the deviation plus the loss change
    CHECK(pf.pg_hat[0] == doctest::Approx(pf.psi + 1.0));
}

TEST_CASE("remark-3 behaviour: zero deviation gives zero mismatch") {
    NetworkCase c = load("case2.m"); // lossless
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.0);
    Eigen::VectorXd pg(1);
    pg << 1.0; // exactly the load
    RobustSetpoints sp = manual_setpoints(c, pg, 1.05);
    Scenario sc;
    sc.mu = Eigen::VectorXd::Zero(1);
    acpf::PfSolution pf = acpf::run_pf(c, sp, unc, sc);
    REQUIRE(pf.converged);
    CHECK(std::abs(pf.psi) <= 1e-8);
    CHECK(pf.pg_hat[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zero-load network settles to a flat profile") {
    std::vector<net::Bus> buses{{1, net::BusType::reference, 0.94, 1.06,
                                 -M_PI / 2, M_PI / 2},
                                {2, net::BusType::load_only, 0.94, 1.06,
                                 -M_PI / 2, M_PI / 2}};
    std::vector<net::Branch> branches(1);
    branches[0].from = 1;
    branches[0].to = 2;
    branches[0].x = 0.1;
    branches[0].p_max = 2.0;
    std::vector<net::Generator> gens(1);
    gens[0].bus = 1;
    gens[0].a = 10.0;
    gens[0].p_max = 2.0;
    gens[0].q_min = -1.0;
    gens[0].q_max = 1.0;
    NetworkCase c = NetworkCase::create(100.0, buses, branches, gens, {}, {});
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.0, 0.0);
    Eigen::VectorXd pg = Eigen::VectorXd::Zero(1);
    RobustSetpoints sp = manual_setpoints(c, pg, 1.0);
    Scenario sc;
    sc.mu = Eigen::VectorXd::Zero(0);
    acpf::PfSolution pf = acpf::run_pf(c, sp, unc, sc);
    REQUIRE(pf.converged);
    CHECK(pf.theta.lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK((pf.v.array() - 1.0).abs().maxCoeff() <= 1e-10);
    CHECK(std::abs(pf.psi) <= 1e-10);
}

TEST_CASE("divergence is a flag, not an exception") {
    NetworkCase c = load("case2.m");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.0);
    Eigen::VectorXd pg(1);
    pg << 1.0;
    RobustSetpoints sp = manual_setpoints(c, pg, 1.05);
    Scenario sc;
    sc.mu = Eigen::VectorXd::Constant(1, 50.0); // x500 load deviation
    acpf::PfSolution pf = acpf::run_pf(c, sp, unc, sc);
    CHECK(!pf.converged);
}

TEST_CASE("generator buses hold the scheduled terminal voltage exactly") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    robust::DualRcProgram rc = robust::build_dual_rc(c, unc, robust::RcMode::full);
    RobustSetpoints sp = robust::solve_rc_and_recover(rc);
    Scenario sc;
    sc.mu = 0.5 * unc.mu_bar();
    acpf::PfSolution pf = acpf::run_pf(c, sp, unc, sc);
    REQUIRE(pf.converged);
    for (size_t k = 0; k < sp.cii_bus.size(); ++k)
        CHECK(pf.v[sp.cii_bus[k]] ==
              doctest::Approx(std::sqrt(sp.cii[static_cast<long>(k)])).epsilon(1e-14));
    // distributed slack: deviations proportional to the participation factors
    for (size_t g = 0; g < c.generators().size(); ++g)
        CHECK(pf.pg_hat[static_cast<long>(g)] - sp.pg[static_cast<long>(g)] ==
              doctest::Approx(c.generators()[g].participation * pf.psi)
                  .epsilon(1e-10));
}

TEST_CASE("active power balance closes at convergence") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    robust::DualRcProgram rc = robust::build_dual_rc(c, unc, robust::RcMode::full);
    RobustSetpoints sp = robust::solve_rc_and_recover(rc);
    Scenario sc;
    sc.mu = unc.mu_bar();
    sc.mu[2] = -sc.mu[2];
    acpf::PfSolution pf = acpf::run_pf(c, sp, unc, sc);
    REQUIRE(pf.converged);
    double loss = 0.0;
    for (long b = 0; b < pf.flow_from.size(); ++b)
        loss += pf.flow_from[b] + pf.flow_to[b];
    double gen = pf.pg_hat.sum();
    double res = 0.0, load = 0.0;
    for (int j = 0; j < unc.size(); ++j) {
        const auto &uc = unc.coords[j];
        if (uc.kind == opf::UncertaintyCoord::Kind::res)
            res += uc.nominal + sc.mu[j];
        else
            load += uc.nominal + sc.mu[j];
    }
    CHECK(std::abs(gen + res - load - loss) <= 1e-8);
}

TEST_CASE("identical scenarios give bitwise-identical solutions") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    Eigen::VectorXd pg(2);
    pg << 1.1, 0.1;
    RobustSetpoints sp = manual_setpoints(c, pg, 1.04);
    Scenario sc;
    sc.mu = 0.3 * unc.mu_bar();
    acpf::PfSolution a = acpf::run_pf(c, sp, unc, sc);
    acpf::PfSolution b = acpf::run_pf(c, sp, unc, sc);
    REQUIRE(a.converged);
    CHECK(std::memcmp(a.v.data(), b.v.data(), sizeof(double) * a.v.size()) == 0);
    CHECK(std::memcmp(a.theta.data(), b.theta.data(),
                      sizeof(double) * a.theta.size()) == 0);
    CHECK(a.psi == b.psi);
}

TEST_CASE("constraint evaluation") {
    NetworkCase c = load("case2.m");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.0);
    Eigen::VectorXd pg(1);
    pg << 1.0;
    RobustSetpoints sp = manual_setpoints(c, pg, 1.05);
    Scenario sc;
    sc.mu = Eigen::VectorXd::Zero(1);
    acpf::PfSolution pf = acpf::run_pf(c, sp, unc, sc);
    REQUIRE(pf.converged);

    SUBCASE("strictly interior point reports no violations") {
        acpf::ViolationRecord rec = acpf::evaluate_constraints(c, unc, sc, pf);
        CHECK(!rec.any());
        CHECK(rec.worst_per_family.size() >= 6);
    }
    SUBCASE("synthetic overload is attributed to the flow family") {
        acpf::PfSolution bad = pf;
        bad.flow_from[0] = 1.03 * c.branches()[0].p_max;
        acpf::ViolationRecord rec = acpf::evaluate_constraints(c, unc, sc, bad);
        CHECK(rec.violated_families == 1);
        bool found = false;
        for (const auto &v : rec.worst_per_family)
            if (v.family == "flow") {
                found = true;
                CHECK(v.margin ==
                      doctest::Approx(-0.03 * c.branches()[0].p_max).epsilon(1e-9));
            }
        CHECK(found);
    }
}
