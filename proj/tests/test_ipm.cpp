#include <doctest.h>

#include <cstring>

#include "ropf/ipm.hpp"

using namespace ropf;
using conic::ConicProgram;
using conic::ConicSolution;
using conic::SolveStatus;

namespace {

ConicSolution run(const ConicProgram &p, ipm::SolverSettings st = {}) {
    return ipm::solve(p, st);
}

} // namespace

TEST_CASE("equality LP: min x s.t. x = 3") {
    ConicProgram p;
    int x = p.add_variable("x");
    p.set_objective(x, 1.0);
    p.add_eq_row("fix", {{x, 1.0}}, 3.0);
    p.seal();
    ConicSolution s = run(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.primal[x] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(s.objective == doctest::Approx(3.0).epsilon(1e-8));
    auto duals = conic::extract_duals(s, p);
    CHECK(duals.at("fix") == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("inequality LP: min x s.t. x >= 1") {
    ConicProgram p;
    int x = p.add_variable("x");
    p.set_objective(x, 1.0);
    p.add_ineq_row("floor", {{x, -1.0}}, -1.0);
    p.seal();
    ConicSolution s = run(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.primal[x] == doctest::Approx(1.0).epsilon(1e-8));
    auto duals = conic::extract_duals(s, p);
    CHECK(duals.at("floor") == doctest::Approx(1.0).epsilon(1e-7));
    // complementary slackness
    const double slack = -1.0 - (-s.primal[x]);
    CHECK(std::abs(slack * duals.at("floor")) < 1e-7);
}

TEST_CASE("two-variable LP with equality and inequality") {
    ConicProgram p;
    int x = p.add_variable("x");
    int y = p.add_variable("y");
    p.set_objective(x, 1.0);
    p.set_objective(y, 1.0);
    p.add_ineq_row("sum", {{x, -1.0}, {y, -1.0}}, -1.0); // x + y >= 1
    p.add_eq_row("tie", {{x, 1.0}, {y, -1.0}}, 0.0);
    p.seal();
    ConicSolution s = run(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.primal[x] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.primal[y] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.gap <= 1e-8);
}

TEST_CASE("second-order cone: min y s.t. ||(3,4)|| <= y") {
    ConicProgram p;
    int a = p.add_variable("a", 3.0, 3.0);
    int b = p.add_variable("b", 4.0, 4.0);
    int z = p.add_variable("z", 0.0, 0.0);
    int y = p.add_variable("y");
    p.set_objective(y, 1.0);
    p.add_soc_block("norm", a, b, z, y);
    p.seal();
    ConicSolution s = run(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.primal[y] == doctest::Approx(5.0).epsilon(1e-8));
    CHECK(s.gap <= 1e-8);
    CHECK(s.primal_residual <= 1e-8);
    CHECK(s.dual_residual <= 1e-8);
}

TEST_CASE("cone maximization: max x s.t. ||(x,y)|| <= 2") {
    ConicProgram p;
    int x = p.add_variable("x");
    int y = p.add_variable("y");
    int z = p.add_variable("z", 0.0, 0.0);
    int d = p.add_variable("d", 2.0, 2.0);
    p.set_objective(x, -1.0);
    p.add_soc_block("ball", x, y, z, d);
    p.seal();
    ConicSolution s = run(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.primal[x] == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(std::abs(s.primal[y]) < 1e-6);
}

TEST_CASE("infeasible LP is certified") {
    ConicProgram p;
    int x = p.add_variable("x");
    p.set_objective(x, 1.0);
    p.add_ineq_row("lo", {{x, -1.0}}, -1.0); // x >= 1
    p.add_ineq_row("hi", {{x, 1.0}}, 0.0);   // x <= 0
    p.seal();
    ConicSolution s = run(p);
    CHECK(s.status == SolveStatus::infeasible);
}

TEST_CASE("unbounded LP is certified") {
    ConicProgram p;
    int x = p.add_variable("x");
    p.set_objective(x, 1.0);
    p.add_ineq_row("hi", {{x, 1.0}}, 0.0); // x <= 0
    p.seal();
    ConicSolution s = run(p);
    CHECK(s.status == SolveStatus::unbounded);
}

TEST_CASE("objective scaling leaves the argmin unchanged and scales duals") {
    auto build = [](double lambda) {
        ConicProgram p;
        int x = p.add_variable("x");
        int y = p.add_variable("y");
        p.set_objective(x, 2.0 * lambda);
        p.set_objective(y, 1.0 * lambda);
        p.add_ineq_row("sum", {{x, -1.0}, {y, -1.0}}, -2.0); // x + y >= 2
        p.add_ineq_row("cap", {{y, 1.0}}, 1.5);              // y <= 1.5
        p.seal();
        return p;
    };
    ConicProgram p1 = build(1.0), p7 = build(7.0);
    ConicSolution s1 = run(p1), s7 = run(p7);
    REQUIRE(s1.status == SolveStatus::optimal);
    REQUIRE(s7.status == SolveStatus::optimal);
    CHECK((s1.primal - s7.primal).lpNorm<Eigen::Infinity>() < 1e-8);
    auto d1 = conic::extract_duals(s1, p1);
    auto d7 = conic::extract_duals(s7, p7);
    CHECK(d7.at("sum") == doctest::Approx(7.0 * d1.at("sum")).epsilon(1e-6));
}

TEST_CASE("identical inputs give bitwise-identical solutions") {
    ConicProgram p;
    int x = p.add_variable("x");
    int y = p.add_variable("y");
    int z = p.add_variable("z", 0.0, 0.0);
    int d = p.add_variable("d");
    p.set_objective(d, 1.0);
    p.add_eq_row("ex", {{x, 1.0}}, 1.2);
    p.add_eq_row("ey", {{y, 1.0}}, -0.7);
    p.add_soc_block("n", x, y, z, d);
    p.seal();
    ConicSolution a = run(p), b = run(p);
    REQUIRE(a.status == SolveStatus::optimal);
    REQUIRE(a.primal.size() == b.primal.size());
    CHECK(std::memcmp(a.primal.data(), b.primal.data(),
                      sizeof(double) * a.primal.size()) == 0);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("cone feasibility of the returned dual point") {
    ConicProgram p;
    int a = p.add_variable("a", 1.0, 1.0);
    int b = p.add_variable("b", -2.0, -2.0);
    int z = p.add_variable("z", 0.5, 0.5);
    int y = p.add_variable("y");
    p.set_objective(y, 1.0);
    p.add_soc_block("norm", a, b, z, y);
    p.seal();
    ConicSolution s = run(p);
    REQUIRE(s.status == SolveStatus::optimal);
    const Eigen::Vector4d zc = s.cone_duals[0]; // (c, s, e, d) order
    CHECK(zc[3] >= -1e-10);
    CHECK(zc.head(3).norm() <= zc[3] + 1e-8);
    CHECK(s.primal[y] == doctest::Approx(std::sqrt(1.0 + 4.0 + 0.25)).epsilon(1e-8));
}

TEST_CASE("max-iter reports a partial iterate") {
    ConicProgram p;
    int x = p.add_variable("x");
    p.set_objective(x, 1.0);
    p.add_ineq_row("lo", {{x, -1.0}}, -1.0);
    p.seal();
    ipm::SolverSettings st;
    st.max_iterations = 1;
    ConicSolution s = run(p, st);
    CHECK(s.status == SolveStatus::max_iter);
    CHECK(s.primal.size() == 1);
}
