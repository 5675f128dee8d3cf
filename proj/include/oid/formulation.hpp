#pragma once

#include "oid/conic.hpp"
#include "oid/feeder.hpp"
#include "oid/scenario.hpp"
#include "oid/solver.hpp"

#include <vector>

namespace oid {

struct CostConfig {
    double c_L = 1.0;  ///< cost per unit of network losses
    double c_P = 0.5;  ///< cost per unit of curtailed power
    double c_z = 0.9;  ///< selection reward weight (group-sparsity strength)
    double c_R = 1.0;  ///< risk weight on the sample-average CVaR term
    double fairness_weight = 0.0;
};

struct VoltageLimits {
    double v_min = 0.917;
    double v_max = 1.042;
    double v_slack = 1.02;
};

struct AssembleOptions {
    /// Selection and reactive-capability constraints default to second-order
    /// cones; the equivalent 3x3 LMI forms stay available for fidelity tests.
    bool lmi_selection = false;
    bool lmi_capability = false;
    double selection_tol_pu = 1e-4;
};

/// Loads at the feeder's house nodes (ascending order).
struct LoadSet {
    Eigen::VectorXd p_w;
    Eigen::VectorXd q_var;
};

LoadSet loads_from_feeder(const FeederModel& feeder);

/// Dispatch under known available powers: group-sparse inverter selection,
/// PSD-relaxed AC power flow on the voltage outer-product matrix, voltage
/// window, inverter capability region.
ConicProblem assemble_deterministic(const FeederModel& feeder, const Eigen::VectorXd& p_av_w,
                                    const CostConfig& cost, const VoltageLimits& vlim,
                                    const AssembleOptions& opts = {});

/// Risk-aware dispatch: the presumed powers d join the decision vector (box
/// = scenario support), the capability region is taken at d, and the
/// sample-average CVaR of the generation surplus enters the objective
/// through per-scenario epigraph variables.
ConicProblem assemble_risk_aware(const FeederModel& feeder, const ScenarioSet& scenarios,
                                 const LoadSet& loads, const CostConfig& cost,
                                 const VoltageLimits& vlim, double beta,
                                 const AssembleOptions& opts = {});

/// Radial-feeder specialization: replaces the PSD cone on the voltage matrix
/// by one rotated second-order cone per edge; only diagonal and edge entries
/// of V remain as variables. Throws NotRadial otherwise.
ConicProblem socp_form(const ConicProblem& problem, const FeederModel& feeder);

/// Appends the curtailment-fairness epigraph t >= || (I - 11'/|H|) p_c ||_2
/// and weight * t to the objective.
ConicProblem fairness_term(ConicProblem problem, double weight);

/// Membership test for the per-inverter operating region at availability
/// p_av: curtailment within [0, p_av], apparent-power circle, power-factor
/// wedge.
bool oid_region_membership(double p_c, double q_c, double p_av, const InverterSpec& spec,
                           double tol);

struct DispatchSolution {
    Eigen::MatrixXcd V;      ///< pu^2; tree-completed off the stored entries in SOCP form
    Eigen::VectorXcd v;      ///< recovered voltages, pu
    Eigen::VectorXd p_c_w;   ///< per inverter house
    Eigen::VectorXd q_c_var;
    Eigen::VectorXd d_w;     ///< presumed powers (risk mode; availability otherwise)
    Eigen::VectorXd z_va;    ///< selection magnitudes
    double alpha_w = 0.0;    ///< VaR variable (risk mode)
    double cvar_w = 0.0;     ///< filled by the dispatch layer from the scenario set
    std::vector<int> selected; ///< house nodes with ||(P_c, Q_c)|| above tolerance
    double objective = 0.0;
    double rank_ratio = 0.0;
    bool rank_flagged = false;
    SolveStatus solver_status = SolveStatus::numerical;
};

/// Physical quantities out of a solved conic program. rank_tol controls the
/// rank-1 flag; selection_tol_pu the reported selected set.
DispatchSolution recover_dispatch(const ConicProblem& problem,
                                  const PrimalDualSolution& solution,
                                  const FeederModel& feeder, double rank_tol = 1e-5,
                                  double selection_tol_pu = 1e-4);

} // namespace oid
