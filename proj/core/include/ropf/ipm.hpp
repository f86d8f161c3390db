#pragma once

#include <memory>

#include "ropf/conic.hpp"

namespace ropf::ipm {

struct SolverSettings {
    double tolerance = 1e-8;      ///< gap and residual target
    int max_iterations = 100;
    double regularization = 1e-9; ///< static KKT regularization
    int verbosity = 0;
    double step_fraction = 0.99;  ///< fraction of the step to the cone boundary
    int refine_steps = 1;         ///< iterative-refinement sweeps per KKT solve
    int equilibrate_iters = 3;
};

/// Solver-side solution of a standard-form problem. The final point is
/// already scaled by 1/tau; duals follow c + A'y + G'z = 0.
struct RawSolution {
    conic::SolveStatus status = conic::SolveStatus::max_iter;
    Eigen::VectorXd x, y, z, s;
    double objective = 0.0;
    double gap = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
    std::vector<conic::IterationStat> trace;
};

/// Backend interface so an external conic solver can be substituted.
/// The embedded homogeneous self-dual interior-point method is the default.
class ConicBackend {
  public:
    virtual ~ConicBackend() = default;
    virtual RawSolution solve_standard(const conic::StandardForm &sf,
                                       const SolverSettings &settings) = 0;
};

class EmbeddedIpm final : public ConicBackend {
  public:
    RawSolution solve_standard(const conic::StandardForm &sf,
                               const SolverSettings &settings) override;
};

ConicBackend &default_backend();

/// Solve a standard-form problem with the embedded solver.
RawSolution solve_standard(const conic::StandardForm &sf,
                           const SolverSettings &settings = {});

/// Assemble, solve and translate back to model coordinates.
conic::ConicSolution solve(const conic::ConicProgram &program,
                           const SolverSettings &settings = {},
                           ConicBackend *backend = nullptr);

} // namespace ropf::ipm
