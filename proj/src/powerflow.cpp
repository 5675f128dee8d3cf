#include "oid/powerflow.hpp"

#include "oid/errors.hpp"
#include "oid/linalg.hpp"

#include <cmath>

#include <Eigen/LU>

namespace oid {

using Eigen::MatrixXd;
using Eigen::VectorXd;

PowerFlowResult newton_power_flow(const FeederModel& feeder, const Eigen::VectorXd& p_house_w,
                                  const Eigen::VectorXd& q_house_var, double v_slack_pu)
{
    const auto houses = feeder.house_nodes();
    if (p_house_w.size() != static_cast<int>(houses.size()) ||
        q_house_var.size() != static_cast<int>(houses.size())) {
        raise(ErrorCode::dimension_mismatch, "injection vectors must match the house count");
    }

    const FeederModel pu = feeder.per_unit();
    const int count = pu.num_nodes();
    const int unknowns = count - 1;
    const MatrixXd G = pu.admittance.real();
    const MatrixXd B = pu.admittance.imag();

    VectorXd p_spec = VectorXd::Zero(count);
    VectorXd q_spec = VectorXd::Zero(count);
    for (size_t i = 0; i < houses.size(); ++i) {
        p_spec[houses[i]] = p_house_w[i] / feeder.s_base_va;
        q_spec[houses[i]] = q_house_var[i] / feeder.s_base_va;
    }

    VectorXd vm = VectorXd::Constant(count, v_slack_pu); // flat start
    VectorXd th = VectorXd::Zero(count);

    const int max_iter = 50;
    const double tol = 1e-10;
    PowerFlowResult result;

    VectorXd p_calc(count), q_calc(count);
    auto calc_injections = [&]() {
        for (int n = 0; n < count; ++n) {
            double pn = 0.0, qn = 0.0;
            for (int k = 0; k < count; ++k) {
                double c = std::cos(th[n] - th[k]);
                double s = std::sin(th[n] - th[k]);
                pn += vm[k] * (G(n, k) * c + B(n, k) * s);
                qn += vm[k] * (G(n, k) * s - B(n, k) * c);
            }
            p_calc[n] = vm[n] * pn;
            q_calc[n] = vm[n] * qn;
        }
    };

    double mismatch = 0.0;
    int it = 0;
    for (; it < max_iter; ++it) {
        calc_injections();
        VectorXd f(2 * unknowns);
        for (int n = 1; n < count; ++n) {
            f[n - 1] = p_calc[n] - p_spec[n];
            f[unknowns + n - 1] = q_calc[n] - q_spec[n];
        }
        mismatch = f.lpNorm<Eigen::Infinity>();
        if (mismatch <= tol) {
            break;
        }

        // polar Jacobian over unknowns (theta_1.., vm_1..)
        MatrixXd J(2 * unknowns, 2 * unknowns);
        for (int n = 1; n < count; ++n) {
            for (int k = 1; k < count; ++k) {
                double c = std::cos(th[n] - th[k]);
                double s = std::sin(th[n] - th[k]);
                int rn = n - 1, ck = k - 1;
                if (n == k) {
                    J(rn, ck) = -q_calc[n] - B(n, n) * vm[n] * vm[n];
                    J(rn, unknowns + ck) = p_calc[n] / vm[n] + G(n, n) * vm[n];
                    J(unknowns + rn, ck) = p_calc[n] - G(n, n) * vm[n] * vm[n];
                    J(unknowns + rn, unknowns + ck) = q_calc[n] / vm[n] - B(n, n) * vm[n];
                } else {
                    double gc_bs = G(n, k) * c + B(n, k) * s;
                    double gs_bc = G(n, k) * s - B(n, k) * c;
                    J(rn, ck) = vm[n] * vm[k] * gs_bc;
                    J(rn, unknowns + ck) = vm[n] * gc_bs;
                    J(unknowns + rn, ck) = -vm[n] * vm[k] * gc_bs;
                    J(unknowns + rn, unknowns + ck) = vm[n] * gs_bc;
                }
            }
        }
        VectorXd step = J.partialPivLu().solve(-f);
        for (int n = 1; n < count; ++n) {
            th[n] += step[n - 1];
            vm[n] += step[unknowns + n - 1];
            if (vm[n] < 1e-6) {
                vm[n] = 1e-6;
            }
        }
    }

    if (mismatch > tol) {
        raise(ErrorCode::diverged, "newton power flow: mismatch " + std::to_string(mismatch) +
                                       " pu after " + std::to_string(max_iter) + " iterations");
    }

    result.converged = true;
    result.iterations = it;
    result.max_mismatch_pu = mismatch;
    result.voltages_pu.resize(count);
    for (int n = 0; n < count; ++n) {
        result.voltages_pu[n] = std::polar(vm[n], th[n]);
    }
    result.injections_pu = result.voltages_pu.array() *
                           (pu.admittance * result.voltages_pu).array().conjugate();
    return result;
}

VoltageRecovery extract_voltages(const Eigen::MatrixXcd& V, double rank_tol)
{
    const int count = static_cast<int>(V.rows());
    MatrixXd X = real_embedding(0.5 * (V + V.adjoint()));
    auto ed = jacobi_eigen(X);

    double lam1 = ed.values[0];
    double lam_min = ed.values[2 * count - 1];
    if (lam1 <= 0.0) {
        if (lam_min < -1e-12) {
            raise(ErrorCode::not_psd, "matrix is negative");
        }
        VoltageRecovery zero;
        zero.v = Eigen::VectorXcd::Zero(count);
        return zero;
    }
    if (lam_min < -1e-8 * lam1) {
        raise(ErrorCode::not_psd, "min eigenvalue " + std::to_string(lam_min));
    }

    VoltageRecovery out;
    // embedding eigenvalues pair up; the second Hermitian eigenvalue sits at
    // index 2
    out.rank_ratio = std::max(0.0, ed.values[2]) / lam1;
    out.flagged = out.rank_ratio > rank_tol;

    Eigen::VectorXcd u(count);
    for (int i = 0; i < count; ++i) {
        u[i] = Complex(ed.vectors(i, 0), ed.vectors(count + i, 0));
    }
    u *= std::sqrt(lam1);
    if (std::abs(u[0]) > 1e-12) {
        u *= std::polar(1.0, -std::arg(u[0]));
    }
    out.v = u;
    return out;
}

SensitivityBlock sensitivity_matrix(double v1, double v2, double th1, double th2, double G,
                                    double B)
{
    if (!(v1 > 0.0 && v2 > 0.0)) {
        raise(ErrorCode::index_out_of_range, "voltage magnitudes must be positive");
    }
    SensitivityBlock out;
    const double th = th1 - th2;
    const double c = std::cos(th), s = std::sin(th);

    Eigen::Matrix4d E;
    // rows: P1, P2, Q1, Q2; cols: |V1|, |V2|, th1, th2
    E(0, 0) = 2 * G * v1 - v2 * (G * c + B * s);
    E(0, 1) = -v1 * (G * c + B * s);
    E(0, 2) = v1 * v2 * (G * s - B * c);
    E(0, 3) = -E(0, 2);

    E(1, 0) = -v2 * (G * c - B * s);
    E(1, 1) = 2 * G * v2 - v1 * (G * c - B * s);
    E(1, 2) = v1 * v2 * (G * s + B * c);
    E(1, 3) = -E(1, 2);

    E(2, 0) = -2 * B * v1 - v2 * (G * s - B * c);
    E(2, 1) = -v1 * (G * s - B * c);
    E(2, 2) = -v1 * v2 * (G * c + B * s);
    E(2, 3) = -E(2, 2);

    E(3, 0) = v2 * (B * c + G * s);
    E(3, 1) = -2 * B * v2 + v1 * (B * c + G * s);
    E(3, 2) = v1 * v2 * (G * c - B * s);
    E(3, 3) = -E(3, 2);
    out.exact = E;

    Eigen::Matrix4d M;
    M << 2 * G * v1 - G * v2, -G * v1, -B * v1 * v2, B * v1 * v2, //
        -G * v2, -G * v1 + 2 * G * v2, B * v1 * v2, -B * v1 * v2, //
        -2 * B * v1 + B * v2, B * v1, -G * v1 * v2, G * v1 * v2,  //
        B * v2, B * v1 - 2 * B * v2, G * v1 * v2, -G * v1 * v2;
    out.matrix = M;

    out.decoupling_ratio = G != 0.0 ? std::abs(B) / std::abs(G)
                                    : std::numeric_limits<double>::infinity();
    return out;
}

} // namespace oid
