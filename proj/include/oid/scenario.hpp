#pragma once

#include "oid/parallel.hpp"

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace oid {

/// Per-house forecast of available PV power with a distance-decaying
/// error correlation sigma_h sigma_h' exp(-d(h,h')/tau).
struct ForecastModel {
    Eigen::VectorXd means_w;
    Eigen::VectorXd sigmas_w;
    Eigen::MatrixXd distances_m; ///< pairwise house distances
    double tau_m = 300.0;
    double trunc_lo_pct = 0.3;
    double trunc_hi_pct = 99.7;

    int houses() const { return static_cast<int>(means_w.size()); }
    Eigen::MatrixXd covariance() const;
};

/// Monte Carlo draws of available power; immutable after construction.
struct ScenarioSet {
    Eigen::MatrixXd samples_w; ///< S x |H|
    Eigen::VectorXd box_lo_w;  ///< support box D, per house
    Eigen::VectorXd box_hi_w;
    Eigen::VectorXd means_w;
    std::uint64_t seed = 0;

    int count() const { return static_cast<int>(samples_w.rows()); }
    int houses() const { return static_cast<int>(samples_w.cols()); }
};

struct CvarEstimate {
    double var = 0.0;  ///< alpha_beta, left endpoint of the minimizer interval
    double cvar = 0.0; ///< phi_beta
    double beta = 0.0;
};

/// Draw S correlated truncated-Gaussian scenarios. Deterministic for a given
/// seed in both execution modes: samples are generated in fixed-size blocks,
/// each from its own seed substream, so the block loop parallelizes without
/// changing any draw.
ScenarioSet sample_scenarios(const ForecastModel& forecast, int S, std::uint64_t seed,
                             ExecMode mode = ExecMode::parallel);

enum class SurplusMode { inverter, net };

/// Aggregate positive part of generation above the presumed powers:
/// inverter mode  sum_h [p_h - d_h]_+
/// net mode       sum_h [p_h - load_h - (d_h - ell_h)]_+
double surplus(const Eigen::VectorXd& d, const Eigen::VectorXd& p,
               SurplusMode mode = SurplusMode::inverter,
               const Eigen::VectorXd* loads = nullptr, const Eigen::VectorXd* ell = nullptr);

/// surplus(d, scenario s) for every scenario; the per-sample CVaR kernels run
/// on top of this.
Eigen::VectorXd surplus_batch(const Eigen::VectorXd& d, const ScenarioSet& scenarios,
                              ExecMode mode = ExecMode::parallel);

/// Sample-average Rockafellar-Uryasev function
///   alpha + 1/(S(1-beta)) sum_s [surplus(d, p[s]) - alpha]_+ .
/// beta = 0 is allowed as the limiting mean-surplus case.
double r_hat(double alpha, const Eigen::VectorXd& d, const ScenarioSet& scenarios, double beta,
             ExecMode mode = ExecMode::parallel);

/// Exact minimizer of the sample-average R over alpha: the objective is
/// piecewise linear with breakpoints at the sample values, so candidates are
/// scanned there. Ties resolve to the smallest alpha.
CvarEstimate empirical_cvar(std::vector<double> surplus_samples, double beta);

} // namespace oid
