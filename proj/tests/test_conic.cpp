#include <doctest.h>

#include <random>
#include <sstream>

#include "ropf/ipm.hpp"
#include "ropf/netcase.hpp"
#include "ropf/opfbuild.hpp"

using namespace ropf;
using conic::ConicProgram;
using conic::StandardForm;

TEST_CASE("assembly of a pure-equality program keeps the matrix") {
    ConicProgram p;
    int x = p.add_variable("x");
    int y = p.add_variable("y");
    p.set_objective(x, 1.0);
    p.add_eq_row("e", {{x, 2.0}, {y, -1.0}}, 3.0);
    p.seal();
    StandardForm sf = conic::assemble_standard_form(p);
    CHECK(sf.a.rows() == 1);
    CHECK(sf.a.coeff(0, x) == 2.0);
    CHECK(sf.a.coeff(0, y) == -1.0);
    CHECK(sf.b[0] == 3.0);
    CHECK(sf.g.rows() == 0);
    CHECK(sf.nonneg_count == 0);
    CHECK(sf.soc_dims.empty());
}

TEST_CASE("assembly appends one nonnegative slack per inequality") {
    ConicProgram p;
    int x = p.add_variable("x");
    p.set_objective(x, 1.0);
    p.add_ineq_row("i", {{x, 1.0}}, 5.0);
    p.seal();
    StandardForm sf = conic::assemble_standard_form(p);
    CHECK(sf.a.rows() == 0);
    CHECK(sf.g.rows() == 1);
    CHECK(sf.nonneg_count == 1);
    CHECK(sf.h[0] == 5.0);
}

TEST_CASE("finite bounds become cone rows, fixed variables equalities") {
    ConicProgram p;
    p.add_variable("x", 0.0, 2.0);
    p.add_variable("y", 1.5, 1.5);
    p.set_objective(0, 1.0);
    p.seal();
    StandardForm sf = conic::assemble_standard_form(p);
    CHECK(sf.a.rows() == 1); // fixed y
    CHECK(sf.g.rows() == 2); // both bounds of x
    CHECK(sf.nonneg_count == 2);
}

TEST_CASE("deterministic 2-bus program matches the hand-counted tally") {
    net::NetworkCase c =
        net::load_case(std::string(ROPF_TEST_DATA_DIR) + "/case2.m");
    ConicProgram p = opf::build_deterministic(c);
    // Pg, Qg, cii x2, th x2, c, s, C, S, E, D, Pf, Pt, Pinj x2, Qinj x2
    CHECK(p.num_vars() == 18);
    CHECK(p.soc_blocks().size() == 1);
    // balances (4), injections (4), flows (2), linkage (4), reference (1)
    CHECK(p.num_eq_rows() == 15);
}

TEST_CASE("extract_duals returns the named multiplier table") {
    ConicProgram p;
    int x = p.add_variable("x");
    p.set_objective(x, 1.0);
    p.add_eq_row("fix", {{x, 1.0}}, 3.0);
    p.seal();
    conic::ConicSolution s = ipm::solve(p);
    REQUIRE(s.status == conic::SolveStatus::optimal);
    auto table = conic::extract_duals(s, p);
    CHECK(table.at("fix") == doctest::Approx(1.0).epsilon(1e-7));
    CHECK_THROWS_AS(p.eq_row("nope"), ModelError);
}

TEST_CASE("extract_duals refuses non-optimal solutions") {
    ConicProgram p;
    int x = p.add_variable("x");
    p.set_objective(x, 1.0);
    p.add_ineq_row("hi", {{x, 1.0}}, 0.0);
    p.seal();
    conic::ConicSolution s = ipm::solve(p); // unbounded
    CHECK_THROWS_AS(conic::extract_duals(s, p), SolverError);
}

TEST_CASE("strong duality and translation round trip on a mixed program") {
    ConicProgram p;
    int x = p.add_variable("x");
    int y = p.add_variable("y", -1.0, 4.0);
    int z = p.add_variable("z", 0.0, 0.0);
    int d = p.add_variable("d");
    p.set_objective(d, 1.0);
    p.set_objective(y, 0.1);
    p.add_eq_row("ex", {{x, 1.0}, {y, 0.5}}, 1.0);
    p.add_ineq_row("iy", {{y, -1.0}}, 0.3);
    p.add_soc_block("n", x, y, z, d);
    p.seal();
    conic::ConicSolution s = ipm::solve(p);
    REQUIRE(s.status == conic::SolveStatus::optimal);
    CHECK(std::abs(s.primal[x] + 0.5 * s.primal[y] - 1.0) <= 1e-7);
    CHECK(-s.primal[y] <= 0.3 + 1e-8);
    CHECK(std::hypot(s.primal[x], s.primal[y]) <= s.primal[d] + 1e-7);
    CHECK(s.gap <= 1e-8);
    CHECK(s.primal_residual <= 1e-8);
    CHECK(s.dual_residual <= 1e-8);
}

TEST_CASE("program dump lists rows, cones, and bounds") {
    ConicProgram p;
    int x = p.add_variable("x", 0.0, 2.0);
    p.set_objective(x, 3.0);
    p.add_eq_row("anchor", {{x, 1.0}}, 1.0);
    p.seal();
    const std::string text = conic::dump_program(p);
    CHECK(text.find("anchor") != std::string::npos);
    CHECK(text.find("minimize") != std::string::npos);
    CHECK(text.find("bounds") != std::string::npos);
}

TEST_CASE("duplicate names and bad indices are rejected") {
    ConicProgram p;
    p.add_variable("x");
    CHECK_THROWS_AS(p.add_variable("x"), ModelError);
    CHECK_THROWS_AS(p.add_eq_row("r", {{5, 1.0}}, 0.0), ModelError);
    p.add_eq_row("r", {{0, 1.0}}, 0.0);
    CHECK_THROWS_AS(p.add_eq_row("r", {{0, 1.0}}, 0.0), ModelError);
}

TEST_CASE("stationarity holds across randomly generated bounded programs") {
    // hand-rolled generator: feasible boxes around a random interior point,
    // random equalities anchored at that point
    std::mt19937_64 rng(321);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 5);
        const int p = 1 + static_cast<int>(rng() % static_cast<unsigned>(n));
        Eigen::VectorXd anchor(n);
        for (int j = 0; j < n; ++j) anchor[j] = 2.0 * u(rng);

        ConicProgram prog;
        for (int j = 0; j < n; ++j)
            prog.add_variable("x" + std::to_string(j), anchor[j] - 3.0,
                              anchor[j] + 3.0);
        for (int j = 0; j < n; ++j) prog.set_objective(j, u(rng));
        for (int r = 0; r < p; ++r) {
            std::vector<conic::RowTerm> terms;
            double rhs = 0.0;
            for (int j = 0; j < n; ++j) {
                const double a = u(rng);
                terms.push_back({j, a});
                rhs += a * anchor[j];
            }
            prog.add_eq_row("e" + std::to_string(r), terms, rhs);
        }
        std::vector<conic::RowTerm> box;
        double cap = 0.0;
        for (int j = 0; j < n; ++j) {
            box.push_back({j, 1.0});
            cap += anchor[j];
        }
        prog.add_ineq_row("cap", box, cap + 1.0);
        prog.seal();

        conic::ConicSolution s = ipm::solve(prog);
        REQUIRE(s.status == conic::SolveStatus::optimal);
        CHECK(s.ineq_duals.minCoeff() >= 0.0);
        CHECK(s.lower_duals.minCoeff() >= 0.0);
        CHECK(s.upper_duals.minCoeff() >= 0.0);
        // c = A' eq_duals - M' ineq_duals + lower_duals - upper_duals
        Eigen::VectorXd stat = prog.objective() -
                               prog.eq_matrix().transpose() * s.eq_duals +
                               prog.ineq_matrix().transpose() * s.ineq_duals -
                               s.lower_duals + s.upper_duals;
        CHECK(stat.lpNorm<Eigen::Infinity>() <= 1e-6);
    }
}
