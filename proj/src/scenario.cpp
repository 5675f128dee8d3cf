#include "oid/scenario.hpp"

#include "oid/errors.hpp"
#include "oid/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

namespace oid {

namespace {

constexpr int kBlockSize = 64;
constexpr int kMaxRedraws = 100;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Standard normal draws via Box-Muller on the engine's uniform output;
/// keeps the draw sequence pinned independent of the C++ library.
class NormalSource {
  public:
    explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

    double next()
    {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    double uniform01()
    {
        // in (0, 1]; log() stays finite
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace

Eigen::MatrixXd ForecastModel::covariance() const
{
    const int h = houses();
    if (sigmas_w.size() != h || distances_m.rows() != h || distances_m.cols() != h) {
        raise(ErrorCode::dimension_mismatch, "forecast model fields disagree on house count");
    }
    if (!(tau_m > 0.0)) {
        raise(ErrorCode::non_psd_covariance, "tau must be positive");
    }
    for (int i = 0; i < h; ++i) {
        if (sigmas_w[i] < 0.0) {
            raise(ErrorCode::non_psd_covariance, "negative sigma");
        }
    }
    Eigen::MatrixXd cov(h, h);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < h; ++j) {
            cov(i, j) = sigmas_w[i] * sigmas_w[j] *
                        std::exp(-0.5 * (distances_m(i, j) + distances_m(j, i)) / tau_m);
        }
    }
    return cov;
}

ScenarioSet sample_scenarios(const ForecastModel& forecast, int S, std::uint64_t seed,
                             ExecMode mode)
{
    if (S < 1) {
        raise(ErrorCode::empty_scenario_set, "need at least one scenario");
    }
    if (!(forecast.trunc_lo_pct > 0.0 && forecast.trunc_hi_pct < 100.0 &&
          forecast.trunc_lo_pct < forecast.trunc_hi_pct)) {
        raise(ErrorCode::invalid_truncation, "percentiles must satisfy 0 < lo < hi < 100");
    }

    const int h = forecast.houses();
    Eigen::MatrixXd cov = forecast.covariance();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) {
        raise(ErrorCode::non_psd_covariance, "eigendecomposition failed");
    }
    const double trace = std::max(cov.trace(), 0.0);
    double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -1e-6 * std::max(trace, 1e-300)) {
        raise(ErrorCode::non_psd_covariance, "covariance is grossly indefinite");
    }
    if (min_eig < -1e-10 * trace) {
        std::fprintf(stderr,
                     "warning: covariance eigenvalue %.3e clipped to zero (trace %.3e)\n",
                     min_eig, trace);
    }
    Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd L = es.eigenvectors() * clipped.cwiseSqrt().asDiagonal();

    const double z_lo = norm_ppf(forecast.trunc_lo_pct / 100.0);
    const double z_hi = norm_ppf(forecast.trunc_hi_pct / 100.0);
    Eigen::VectorXd delta_lo = forecast.sigmas_w * z_lo;
    Eigen::VectorXd delta_hi = forecast.sigmas_w * z_hi;

    ScenarioSet set;
    set.means_w = forecast.means_w;
    set.seed = seed;
    set.box_lo_w = (forecast.means_w + delta_lo).cwiseMax(0.0);
    set.box_hi_w = (forecast.means_w + delta_hi).cwiseMax(0.0);
    set.samples_w.resize(S, h);

    const int blocks = (S + kBlockSize - 1) / kBlockSize;

    auto fill_block = [&](int blk) {
        NormalSource rng(splitmix64(seed ^ (0x517CC1B727220A95ULL * (blk + 1))));
        const int begin = blk * kBlockSize;
        const int end = std::min(S, begin + kBlockSize);
        Eigen::VectorXd g(h), delta(h);
        for (int s = begin; s < end; ++s) {
            // redraw the whole correlated vector on any out-of-bounds
            // coordinate, to preserve the correlation structure; clip after
            // the attempt budget
            bool inside = false;
            for (int attempt = 0; attempt < kMaxRedraws && !inside; ++attempt) {
                for (int i = 0; i < h; ++i) {
                    g[i] = rng.next();
                }
                delta = L * g;
                inside = true;
                for (int i = 0; i < h; ++i) {
                    if (delta[i] < delta_lo[i] - 1e-300 || delta[i] > delta_hi[i] + 1e-300) {
                        inside = false;
                        break;
                    }
                }
            }
            if (!inside) {
                delta = delta.cwiseMax(delta_lo).cwiseMin(delta_hi);
            }
            for (int i = 0; i < h; ++i) {
                double p = forecast.means_w[i] + delta[i];
                set.samples_w(s, i) = std::clamp(p, set.box_lo_w[i], set.box_hi_w[i]);
            }
        }
    };

    if (mode == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
        for (int blk = 0; blk < blocks; ++blk) {
            fill_block(blk);
        }
    } else {
        for (int blk = 0; blk < blocks; ++blk) {
            fill_block(blk);
        }
    }
    return set;
}

double surplus(const Eigen::VectorXd& d, const Eigen::VectorXd& p, SurplusMode mode,
               const Eigen::VectorXd* loads, const Eigen::VectorXd* ell)
{
    if (d.size() != p.size()) {
        raise(ErrorCode::dimension_mismatch, "d and p sizes differ");
    }
    double total = 0.0;
    if (mode == SurplusMode::inverter) {
        for (int i = 0; i < d.size(); ++i) {
            total += std::max(0.0, p[i] - d[i]);
        }
    } else {
        if (loads == nullptr || ell == nullptr || loads->size() != d.size() ||
            ell->size() != d.size()) {
            raise(ErrorCode::dimension_mismatch, "net mode requires loads and ell");
        }
        for (int i = 0; i < d.size(); ++i) {
            total += std::max(0.0, p[i] - (*loads)[i] - (d[i] - (*ell)[i]));
        }
    }
    return total;
}

Eigen::VectorXd surplus_batch(const Eigen::VectorXd& d, const ScenarioSet& scenarios,
                              ExecMode mode)
{
    if (d.size() != scenarios.houses()) {
        raise(ErrorCode::dimension_mismatch, "d does not match scenario house count");
    }
    const int S = scenarios.count();
    Eigen::VectorXd out(S);
    if (mode == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
        for (int s = 0; s < S; ++s) {
            double total = 0.0;
            for (int i = 0; i < d.size(); ++i) {
                total += std::max(0.0, scenarios.samples_w(s, i) - d[i]);
            }
            out[s] = total;
        }
    } else {
        for (int s = 0; s < S; ++s) {
            double total = 0.0;
            for (int i = 0; i < d.size(); ++i) {
                total += std::max(0.0, scenarios.samples_w(s, i) - d[i]);
            }
            out[s] = total;
        }
    }
    return out;
}

double r_hat(double alpha, const Eigen::VectorXd& d, const ScenarioSet& scenarios, double beta,
             ExecMode mode)
{
    if (!(beta >= 0.0 && beta < 1.0)) {
        raise(ErrorCode::beta_out_of_range, "beta must lie in [0, 1)");
    }
    if (scenarios.count() == 0) {
        raise(ErrorCode::empty_scenario_set, "no scenarios");
    }
    Eigen::VectorXd r = surplus_batch(d, scenarios, mode);
    // fixed-order reduction keeps the value independent of thread count
    double acc = 0.0;
    for (int s = 0; s < r.size(); ++s) {
        acc += std::max(0.0, r[s] - alpha);
    }
    return alpha + acc / (static_cast<double>(r.size()) * (1.0 - beta));
}

CvarEstimate empirical_cvar(std::vector<double> surplus_samples, double beta)
{
    if (surplus_samples.empty()) {
        raise(ErrorCode::empty_samples, "empirical_cvar needs samples");
    }
    if (!(beta > 0.0 && beta < 1.0)) {
        raise(ErrorCode::beta_out_of_range, "beta must lie in (0, 1)");
    }
    std::sort(surplus_samples.begin(), surplus_samples.end());
    const int S = static_cast<int>(surplus_samples.size());
    const double w = 1.0 / (S * (1.0 - beta));

    // suffix[k] = sum of samples strictly after position k
    std::vector<double> suffix(S + 1, 0.0);
    for (int k = S - 1; k >= 0; --k) {
        suffix[k] = suffix[k + 1] + surplus_samples[k];
    }

    double best_alpha = 0.0;
    double best_value = std::numeric_limits<double>::infinity();
    for (int k = 0; k < S; ++k) {
        if (k > 0 && surplus_samples[k] == surplus_samples[k - 1]) {
            continue;
        }
        // first index with value > alpha
        int above = static_cast<int>(
            std::upper_bound(surplus_samples.begin(), surplus_samples.end(),
                             surplus_samples[k]) -
            surplus_samples.begin());
        double alpha = surplus_samples[k];
        double value = alpha + w * (suffix[above] - (S - above) * alpha);
        // ascending scan + strict improvement keeps the smallest minimizing
        // alpha (the left endpoint) on ties
        if (std::isinf(best_value) ||
            value < best_value - 1e-15 * std::max(1.0, std::abs(best_value))) {
            best_value = value;
            best_alpha = alpha;
        }
    }

    CvarEstimate est;
    est.var = best_alpha;
    est.cvar = best_value;
    est.beta = beta;
    return est;
}

} // namespace oid
