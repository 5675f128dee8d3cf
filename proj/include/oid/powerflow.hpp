#pragma once

#include "oid/feeder.hpp"

#include <Eigen/Dense>

namespace oid {

struct PowerFlowResult {
    Eigen::VectorXcd voltages_pu;   ///< per node, slack pinned at angle 0
    Eigen::VectorXcd injections_pu; ///< V_n conj((Y v)_n)
    bool converged = false;
    int iterations = 0;
    double max_mismatch_pu = 0.0;
};

/// Nonlinear AC power flow by Newton iteration on the polar mismatch, flat
/// start. p_house_w / q_house_var are net injections at the feeder's house
/// nodes (ascending node order); poles carry zero injection, node 0 is the
/// slack at v_slack_pu. Throws Diverged when 50 iterations do not reach
/// 1e-10 pu mismatch.
PowerFlowResult newton_power_flow(const FeederModel& feeder, const Eigen::VectorXd& p_house_w,
                                  const Eigen::VectorXd& q_house_var, double v_slack_pu);

struct VoltageRecovery {
    Eigen::VectorXcd v;      ///< best rank-1 factor, angle(v_0) = 0
    double rank_ratio = 0.0; ///< lambda_2 / lambda_1
    bool flagged = false;    ///< rank_ratio above the tolerance
};

/// Leading-eigenpair voltage recovery from a Hermitian PSD matrix, via
/// cyclic Jacobi on the real embedding. Throws NotPsd when
/// lambda_min < -1e-8 * lambda_max.
VoltageRecovery extract_voltages(const Eigen::MatrixXcd& V, double rank_tol = 1e-5);

struct SensitivityBlock {
    Eigen::Matrix4d matrix;        ///< small-angle form (cos->1, sin->theta->0)
    Eigen::Matrix4d exact;         ///< full trigonometric Jacobian
    double decoupling_ratio = 0.0; ///< omega L / R = |B| / G
};

/// Two-node line sensitivity d(P1,P2,Q1,Q2)/d(|V1|,|V2|,th1,th2) at the
/// operating point, for a line of admittance G + jB.
SensitivityBlock sensitivity_matrix(double v1, double v2, double th1, double th2, double G,
                                    double B);

} // namespace oid
