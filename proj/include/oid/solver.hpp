#pragma once

#include "oid/conic.hpp"

#include <string>

#include <Eigen/Dense>

namespace oid {

enum class SolveStatus { optimal, infeasible, unbounded, max_iter, numerical };

const char* to_string(SolveStatus status);

struct SolverSettings {
    double tol_gap = 1e-7;
    double tol_feas = 1e-7;
    int max_iter = 200;
    double step_fraction = 0.99;
    /// static diagonal shift; refinement against the unshifted operator
    /// removes the bias, and the factorization runs without pivoting
    double kkt_regularization = 1e-7;

    /// Dense factorization handles desk-size systems; the sparse path covers
    /// scenario-coupled programs whose KKT systems are large but structured.
    enum class Kkt { automatic, dense, sparse };
    Kkt kkt = Kkt::automatic;

    bool verbose = false;
    std::string iteration_log_path; ///< per-iteration CSV when nonempty
};

struct PrimalDualSolution {
    Eigen::VectorXd primal;    ///< x
    Eigen::VectorXd dual;      ///< equality multipliers y (A'y + s = c)
    Eigen::VectorXd dual_cone; ///< s = c - A'y
    SolveStatus status = SolveStatus::numerical;
    double objective = 0.0; ///< c'x + offset
    double gap = 0.0;
    double primal_res = 0.0;
    double dual_res = 0.0;
    int iterations = 0;
};

struct ResidualReport {
    double primal_res = 0.0; ///< max of equality residual and primal cone distance
    double dual_res = 0.0;   ///< dual cone distance of c - A'y (free blocks must vanish)
    double gap = 0.0;        ///< |c'x - b'y| / max(1, |c'x|, |b'y|)
};

/// Pluggable solver surface: any implementation consuming the serialized
/// ConicProblem format can stand in for the reference method, and must pass
/// the same residuals() check.
class ConicSolver {
  public:
    virtual ~ConicSolver() = default;
    virtual PrimalDualSolution solve(const ConicProblem& problem,
                                     const SolverSettings& settings) = 0;
};

/// Reference primal-dual interior-point method: Nesterov-Todd scaling over
/// the symmetric cones, homogeneous self-dual embedding (infeasibility and
/// unboundedness come out as certificates), Mehrotra predictor-corrector.
class InteriorPointSolver final : public ConicSolver {
  public:
    PrimalDualSolution solve(const ConicProblem& problem,
                             const SolverSettings& settings) override;
};

PrimalDualSolution solve(const ConicProblem& problem, const SolverSettings& settings = {});

/// Recomputes Ax - b, cone distances and the duality gap from scratch; no
/// solver internals are consulted. Downstream acceptance checks treat this
/// as the single source of truth.
ResidualReport residuals(const ConicProblem& problem, const PrimalDualSolution& solution);

} // namespace oid
