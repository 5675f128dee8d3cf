#pragma once

#include "oid/conic.hpp"
#include "oid/feeder.hpp"

#include <vector>

namespace oid::test {

/// Small builder for hand-written conic fixtures.
class FixtureBuilder {
  public:
    int add_block(ConeKind kind, int size)
    {
        ConeSpec cone{kind, size};
        int first = prob_.num_vars;
        prob_.num_vars += cone.dim();
        prob_.cones.push_back(cone);
        return first;
    }

    void eq(std::vector<std::pair<int, double>> terms, double rhs)
    {
        int row = static_cast<int>(rhs_.size());
        for (auto [col, v] : terms) {
            prob_.equalities.emplace_back(row, col, v);
        }
        rhs_.push_back(rhs);
    }

    void objective(int var, double coeff) { obj_.push_back({var, coeff}); }

    ConicProblem finish()
    {
        prob_.objective = Eigen::VectorXd::Zero(prob_.num_vars);
        for (auto [var, coeff] : obj_) {
            prob_.objective[var] += coeff;
        }
        prob_.rhs = Eigen::Map<Eigen::VectorXd>(rhs_.data(), rhs_.size());
        prob_.check_partition();
        return prob_;
    }

  private:
    ConicProblem prob_;
    std::vector<double> rhs_;
    std::vector<std::pair<int, double>> obj_;
};

/// Fishbone feeder: transformer - chain of poles, two houses per pole.
/// Impedances follow the bundled low-voltage cable constants.
FeederModel make_fishbone(int poles, const std::vector<double>& dc_ratings_w,
                          double load_w = 0.0, double load_var = 0.0);

} // namespace oid::test
