#include "oid/scenario.hpp"

#include "oid/errors.hpp"
#include "oid/stats.hpp"

#include <cmath>
#include <random>

#include <doctest.h>

using namespace oid;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ForecastModel two_house_forecast(double sigma, double distance)
{
    ForecastModel fm;
    fm.means_w = VectorXd::Constant(2, 1000.0);
    fm.sigmas_w = VectorXd::Constant(2, sigma);
    fm.distances_m = MatrixXd::Zero(2, 2);
    fm.distances_m(0, 1) = fm.distances_m(1, 0) = distance;
    return fm;
}

} // namespace

TEST_CASE("zero sigma degenerates to the mean")
{
    auto fm = two_house_forecast(0.0, 50.0);
    auto set = sample_scenarios(fm, 40, 123);
    for (int s = 0; s < set.count(); ++s) {
        CHECK(set.samples_w(s, 0) == 1000.0);
        CHECK(set.samples_w(s, 1) == 1000.0);
    }
    CHECK(set.box_lo_w[0] == 1000.0);
    CHECK(set.box_hi_w[0] == 1000.0);
}

TEST_CASE("same seed reproduces bitwise; different seed does not")
{
    auto fm = two_house_forecast(100.0, 50.0);
    auto a = sample_scenarios(fm, 300, 42);
    auto b = sample_scenarios(fm, 300, 42);
    CHECK((a.samples_w - b.samples_w).lpNorm<Eigen::Infinity>() == 0.0);
    auto c = sample_scenarios(fm, 300, 43);
    CHECK((a.samples_w - c.samples_w).lpNorm<Eigen::Infinity>() != 0.0);
}

TEST_CASE("coincident houses are perfectly correlated in the large-sample limit")
{
    auto fm = two_house_forecast(1.0, 0.0);
    auto set = sample_scenarios(fm, 100000, 7);
    VectorXd x = set.samples_w.col(0), y = set.samples_w.col(1);
    double mx = x.mean(), my = y.mean();
    double cov = ((x.array() - mx) * (y.array() - my)).mean();
    double sx = std::sqrt(((x.array() - mx).square()).mean());
    double sy = std::sqrt(((y.array() - my).square()).mean());
    CHECK(cov / (sx * sy) >= 0.99);
}

TEST_CASE("samples respect the truncation box and nonnegativity")
{
    ForecastModel fm = two_house_forecast(400.0, 100.0);
    fm.means_w[0] = 300.0; // lower bound clips at zero
    auto set = sample_scenarios(fm, 5000, 11);
    for (int s = 0; s < set.count(); ++s) {
        for (int h = 0; h < 2; ++h) {
            CHECK(set.samples_w(s, h) >= set.box_lo_w[h]);
            CHECK(set.samples_w(s, h) <= set.box_hi_w[h]);
            CHECK(set.samples_w(s, h) >= 0.0);
        }
    }
    CHECK(set.box_lo_w[0] == 0.0);
}

TEST_CASE("grossly indefinite covariance is rejected")
{
    ForecastModel fm = two_house_forecast(1.0, 0.0);
    fm.distances_m(0, 1) = fm.distances_m(1, 0) = -2000.0; // exp(+) > 1 correlation
    CHECK_THROWS_AS(sample_scenarios(fm, 10, 1), Error);
    CHECK_THROWS_AS(sample_scenarios(two_house_forecast(1.0, 1.0), 0, 1), Error);
    ForecastModel bad = two_house_forecast(1.0, 1.0);
    bad.trunc_lo_pct = 99.0;
    bad.trunc_hi_pct = 1.0;
    CHECK_THROWS_AS(sample_scenarios(bad, 10, 1), Error);
}

TEST_CASE("surplus examples")
{
    VectorXd d(2), p(2);
    d << 2, 3;
    p << 3, 2;
    CHECK(surplus(d, p) == 1.0);

    p << 2, 3;
    d << 2, 3;
    CHECK(surplus(d, p) == 0.0);
    d << 5, 9;
    CHECK(surplus(d, p) == 0.0);

    VectorXd d1(1), p1(1), load(1), ell(1);
    p1 << 5;
    load << 2;
    d1 << 4;
    ell << 1;
    CHECK(surplus(d1, p1, SurplusMode::net, &load, &ell) == 0.0);
    load << 1;
    CHECK(surplus(d1, p1, SurplusMode::net, &load, &ell) == doctest::Approx(1.0));

    CHECK_THROWS_AS(surplus(d1, p), Error);
    CHECK_THROWS_AS(surplus(d1, p1, SurplusMode::net, nullptr, nullptr), Error);
}

namespace {

ScenarioSet synthetic_set(const std::vector<double>& values)
{
    // one house; surplus over d = 0 equals the sample value
    ScenarioSet set;
    set.samples_w.resize(static_cast<int>(values.size()), 1);
    for (size_t i = 0; i < values.size(); ++i) {
        set.samples_w(static_cast<int>(i), 0) = values[i];
    }
    set.box_lo_w = VectorXd::Zero(1);
    set.box_hi_w = VectorXd::Constant(1, 1e9);
    set.means_w = VectorXd::Zero(1);
    return set;
}

} // namespace

TEST_CASE("r_hat fixtures")
{
    auto set = synthetic_set({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    VectorXd d = VectorXd::Zero(1);

    // all surpluses <= alpha -> returns alpha
    CHECK(r_hat(10.0, d, set, 0.8) == 10.0);
    CHECK(r_hat(25.0, d, set, 0.8) == 25.0);

    // alpha = 0, beta = 0 -> mean surplus
    CHECK(r_hat(0.0, d, set, 0.0) == doctest::Approx(5.5));

    // hand sum: 8 + (1 + 2) / (10 * 0.2) = 9.5
    CHECK(r_hat(8.0, d, set, 0.8) == doctest::Approx(9.5));

    CHECK_THROWS_AS(r_hat(0.0, d, set, 1.0), Error);
    CHECK_THROWS_AS(r_hat(0.0, d, set, -0.1), Error);
}

TEST_CASE("empirical cvar: breakpoint enumeration fixtures")
{
    auto est = empirical_cvar({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.8);
    CHECK(est.var == 8.0);
    CHECK(est.cvar == doctest::Approx(9.5));

    auto flat = empirical_cvar({3.5, 3.5, 3.5}, 0.4);
    CHECK(flat.var == 3.5);
    CHECK(flat.cvar == 3.5);

    auto pair = empirical_cvar({0.0, 10.0}, 0.5);
    CHECK(pair.var == 0.0);
    CHECK(pair.cvar == doctest::Approx(10.0));

    CHECK_THROWS_AS(empirical_cvar({}, 0.5), Error);
    CHECK_THROWS_AS(empirical_cvar({1.0}, 1.0), Error);
}

TEST_CASE("cvar is nondecreasing in beta and subadditive on paired samples")
{
    std::mt19937 gen(5);
    std::lognormal_distribution<double> dist(0.0, 0.7);
    std::vector<double> xs(400), ys(400), sums(400);
    for (int i = 0; i < 400; ++i) {
        xs[i] = dist(gen);
        ys[i] = 2.0 * dist(gen);
        sums[i] = xs[i] + ys[i];
    }
    double prev = -1e300;
    for (double beta : {0.1, 0.3, 0.5, 0.7, 0.85, 0.95}) {
        double c = empirical_cvar(xs, beta).cvar;
        CHECK(c >= prev - 1e-12);
        prev = c;
    }
    for (double beta : {0.5, 0.9}) {
        CHECK(empirical_cvar(sums, beta).cvar <=
              empirical_cvar(xs, beta).cvar + empirical_cvar(ys, beta).cvar + 1e-9);
    }
    // beta -> 0 limit: cvar approaches the sample mean from above
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= xs.size();
    CHECK(empirical_cvar(xs, 1e-9).cvar == doctest::Approx(mean).epsilon(1e-6));
    CHECK(empirical_cvar(xs, 0.5).cvar >= mean);
}

TEST_CASE("gaussian closed form within 2 percent at 1e5 samples")
{
    const double mu = 50.0, sigma = 10.0;
    std::mt19937_64 gen(2024);
    std::normal_distribution<double> dist(mu, sigma);
    std::vector<double> samples(100000);
    for (auto& v : samples) {
        v = dist(gen);
    }
    for (double beta : {0.85, 0.95, 0.99}) {
        double exact = mu + sigma * norm_pdf(norm_ppf(beta)) / (1.0 - beta);
        double est = empirical_cvar(samples, beta).cvar;
        CHECK(std::abs(est - exact) / exact <= 0.02);
    }
}

TEST_CASE("r_hat dominates the cvar and touches it at the var")
{
    auto set = synthetic_set({0.3, 1.1, 2.7, 2.7, 3.9, 4.1, 5.5, 6.0, 7.7, 9.9, 12.0});
    VectorXd d = VectorXd::Zero(1);
    std::vector<double> vals(set.samples_w.data(),
                             set.samples_w.data() + set.samples_w.rows());
    for (double beta : {0.2, 0.5, 0.8, 0.9}) {
        auto est = empirical_cvar(vals, beta);
        for (double alpha : {-1.0, 0.0, 0.3, 2.0, 3.9, 6.0, 9.9, 15.0}) {
            CHECK(r_hat(alpha, d, set, beta) >= est.cvar - 1e-12);
        }
        CHECK(r_hat(est.var, d, set, beta) == doctest::Approx(est.cvar));
    }
}
