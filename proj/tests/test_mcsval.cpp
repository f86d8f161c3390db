#include <doctest.h>

#include <cstring>

#include "ropf/mcsval.hpp"

using namespace ropf;
using acpf::ScenarioLabel;
using net::NetworkCase;
using opf::UncertaintySpec;

namespace {

NetworkCase load(const std::string &name) {
    return net::load_case(std::string(ROPF_TEST_DATA_DIR) + "/" + name);
}

robust::RobustSetpoints robust_setpoints(const NetworkCase &c,
                                         const UncertaintySpec &unc,
                                         const opf::BuildOptions &opts = {}) {
    robust::DualRcProgram rc =
        robust::build_dual_rc(c, unc, robust::RcMode::full, opts);
    return robust::solve_rc_and_recover(rc);
}

robust::RobustSetpoints det_setpoints(const NetworkCase &c) {
    conic::ConicProgram det = opf::build_deterministic(c);
    conic::ConicSolution s = ipm::solve(det);
    REQUIRE(s.status == conic::SolveStatus::optimal);
    return robust::deterministic_setpoints(c, det, s);
}

} // namespace

TEST_CASE("scenario streams are reproducible from the seed") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    auto a = mcs::generate_scenarios(unc, ScenarioLabel::in_range, 64, 1234);
    auto b = mcs::generate_scenarios(unc, ScenarioLabel::in_range, 64, 1234);
    REQUIRE(a.size() == b.size());
    for (size_t k = 0; k < a.size(); ++k)
        CHECK(std::memcmp(a[k].mu.data(), b[k].mu.data(),
                          sizeof(double) * a[k].mu.size()) == 0);
    auto c2 = mcs::generate_scenarios(unc, ScenarioLabel::in_range, 64, 1235);
    CHECK(std::memcmp(a[0].mu.data(), c2[0].mu.data(),
                      sizeof(double) * a[0].mu.size()) != 0);
}

TEST_CASE("in-range sampling is uniform on the box") {
    NetworkCase c = load("case2.m");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.0);
    const double mu_bar = unc.coords[0].mu_bar;
    const int n = 100000;
    auto scens = mcs::generate_scenarios(unc, ScenarioLabel::in_range, n, 7);
    double mean = 0.0, max_abs = 0.0;
    for (const auto &sc : scens) {
        mean += sc.mu[0];
        max_abs = std::max(max_abs, std::abs(sc.mu[0]));
    }
    mean /= n;
    // uniform on [-b, b]: sigma of the mean is b / sqrt(3 n)
    const double sigma_mean = mu_bar / std::sqrt(3.0 * n);
    CHECK(std::abs(mean) <= 3.0 * sigma_mean);
    CHECK(max_abs <= mu_bar);
    CHECK(max_abs >= 0.99 * mu_bar); // the edge is actually explored
}

TEST_CASE("out-of-range samples sit strictly outside the box") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    auto scens = mcs::generate_scenarios(unc, ScenarioLabel::out_of_range, 2000, 99);
    for (const auto &sc : scens)
        for (int j = 0; j < unc.size(); ++j) {
            const double band = 0.05 * std::abs(unc.coords[j].nominal);
            CHECK(std::abs(sc.mu[j]) > unc.coords[j].mu_bar);
            CHECK(std::abs(sc.mu[j]) <= unc.coords[j].mu_bar + band + 1e-12);
        }
}

TEST_CASE("degenerate out-of-range box is rejected") {
    NetworkCase c = load("case2.m");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.0, 0.0);
    CHECK_THROWS_AS(
        mcs::generate_scenarios(unc, ScenarioLabel::out_of_range, 10, 7),
        ModelError);
}

TEST_CASE("robust setpoints validate clean in range") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    robust::RobustSetpoints sp = robust_setpoints(c, unc);
    mcs::ValidationReport rep =
        mcs::validate(c, sp, unc, ScenarioLabel::in_range, 500, 42);
    CHECK(rep.n_scenarios == 500);
    CHECK(rep.violated_scenarios == 0);
    CHECK(rep.divergences == 0);
    CHECK(rep.robust_verdict);
    CHECK(rep.violation_probability == 0.0);
    // the envelopes dominate the limits with margin data
    CHECK(!rep.envelopes.empty());
    for (const auto &[key, env] : rep.envelopes)
        CHECK(env.max_value >= env.min_value);
}

TEST_CASE("deterministic setpoints break on the stressed fixture") {
    NetworkCase c = load("case14_stressed.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.15);
    robust::RobustSetpoints sp = det_setpoints(c);
    mcs::ValidationReport rep =
        mcs::validate(c, sp, unc, ScenarioLabel::in_range, 400, 11);
    CHECK(rep.violation_probability >= 0.99);
    CHECK(rep.violations_per_family.at("flow") >= 396);
    CHECK(!rep.robust_verdict);
}

TEST_CASE("aggregate report does not depend on the thread split") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    robust::RobustSetpoints sp = robust_setpoints(c, unc);
    mcs::ValidateOptions one, four;
    one.threads = 1;
    four.threads = 4;
    mcs::ValidationReport a =
        mcs::validate(c, sp, unc, ScenarioLabel::in_range, 311, 5, one);
    mcs::ValidationReport b =
        mcs::validate(c, sp, unc, ScenarioLabel::in_range, 311, 5, four);
    CHECK(a.violated_scenarios == b.violated_scenarios);
    CHECK(a.divergences == b.divergences);
    REQUIRE(a.envelopes.size() == b.envelopes.size());
    for (const auto &[key, env] : a.envelopes) {
        CHECK(b.envelopes.at(key).max_value == env.max_value);
        CHECK(b.envelopes.at(key).min_value == env.min_value);
    }
}

TEST_CASE("violation probability grows with the stress level") {
    NetworkCase c = load("case14_stressed.json");
    UncertaintySpec small = UncertaintySpec::fractional(c, 0.01, 0.03);
    UncertaintySpec big = UncertaintySpec::fractional(c, 0.05, 0.15);
    robust::RobustSetpoints sp = det_setpoints(c);
    mcs::ValidationReport a =
        mcs::validate(c, sp, small, ScenarioLabel::in_range, 300, 17);
    mcs::ValidationReport b =
        mcs::validate(c, sp, big, ScenarioLabel::in_range, 300, 17);
    CHECK(b.violation_probability >= a.violation_probability);
}

TEST_CASE("eta compares against a reference solution when supplied") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    robust::RobustSetpoints sp = robust_setpoints(c, unc);
    mcs::ValidateOptions opts;
    opts.reference = &sp;
    mcs::ValidationReport rep =
        mcs::validate(c, sp, unc, ScenarioLabel::in_range, 20, 42, opts);
    REQUIRE(rep.eta.has_value());
    CHECK(*rep.eta == 0.0);
}

TEST_CASE("report serialization carries the verdict and envelopes") {
    NetworkCase c = load("case3.json");
    UncertaintySpec unc = UncertaintySpec::fractional(c, 0.05, 0.05);
    robust::RobustSetpoints sp = robust_setpoints(c, unc);
    mcs::ValidationReport rep =
        mcs::validate(c, sp, unc, ScenarioLabel::in_range, 50, 42);
    const std::string json = mcs::report_to_json(rep);
    CHECK(json.find("violation_probability") != std::string::npos);
    CHECK(json.find("\"robust\": true") != std::string::npos);
    const std::string csv = mcs::envelopes_to_csv(rep);
    CHECK(csv.find("key,max_value,min_value,limit") != std::string::npos);
    CHECK(csv.find("voltage:") != std::string::npos);
}
