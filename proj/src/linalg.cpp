#include "oid/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oid {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
}

Eigen::VectorXd svec(const Eigen::MatrixXd& S)
{
    const int q = static_cast<int>(S.rows());
    Eigen::VectorXd v(svec_dim(q));
    int k = 0;
    for (int j = 0; j < q; ++j) {
        v[k++] = S(j, j);
        for (int i = j + 1; i < q; ++i) {
            v[k++] = kSqrt2 * S(i, j);
        }
    }
    return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v, int side)
{
    Eigen::MatrixXd S(side, side);
    int k = 0;
    for (int j = 0; j < side; ++j) {
        S(j, j) = v[k++];
        for (int i = j + 1; i < side; ++i) {
            double x = v[k++] / kSqrt2;
            S(i, j) = x;
            S(j, i) = x;
        }
    }
    return S;
}

Eigen::MatrixXd sym_kron(const Eigen::MatrixXd& Q, ExecMode mode)
{
    const int q = static_cast<int>(Q.rows());
    const int m = svec_dim(q);
    Eigen::MatrixXd K(m, m);

    // Column b corresponds to basis entry (k, l), k >= l; row a to (i, j).
    // K[a,b] = w_a * (Q_ik Q_jk)                      for k == l
    //        = w_a * (Q_ik Q_jl + Q_il Q_jk)/sqrt(2)  for k > l
    // with w_a = 1 on the diagonal and sqrt(2) off it.
    auto fill_column = [&](int b) {
        // invert b -> (k, l)
        int l = 0;
        int rem = b;
        while (rem >= q - l) {
            rem -= q - l;
            ++l;
        }
        int k = l + rem;
        int a = 0;
        for (int j = 0; j < q; ++j) {
            for (int i = j; i < q; ++i) {
                double wa = (i == j) ? 1.0 : kSqrt2;
                double val;
                if (k == l) {
                    val = Q(i, k) * Q(j, k);
                } else {
                    val = (Q(i, k) * Q(j, l) + Q(i, l) * Q(j, k)) / kSqrt2;
                }
                K(a++, b) = wa * val;
            }
        }
    };

    if (mode == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
        for (int b = 0; b < m; ++b) {
            fill_column(b);
        }
    } else {
        for (int b = 0; b < m; ++b) {
            fill_column(b);
        }
    }
    return K;
}

EigenDecomposition jacobi_eigen(Eigen::MatrixXd A)
{
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
    const int max_sweeps = 64;
    const double tol = 1e-14;

    double scale = A.cwiseAbs().maxCoeff();
    if (scale == 0.0) {
        scale = 1.0;
    }

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                off = std::max(off, std::abs(A(p, q)));
            }
        }
        if (off <= tol * scale) {
            break;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = A(p, q);
                if (std::abs(apq) <= 1e-300) {
                    continue;
                }
                double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;

                for (int k = 0; k < n; ++k) {
                    double akp = A(k, p);
                    double akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = A(p, k);
                    double aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = V(k, p);
                    double vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    EigenDecomposition out;
    out.values.resize(n);
    for (int i = 0; i < n; ++i) {
        out.values[i] = A(i, i);
    }
    // sort descending, carrying vectors along
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return out.values[a] > out.values[b]; });
    Eigen::VectorXd vals(n);
    Eigen::MatrixXd vecs(n, n);
    for (int i = 0; i < n; ++i) {
        vals[i] = out.values[order[i]];
        vecs.col(i) = V.col(order[i]);
    }
    out.values = vals;
    out.vectors = vecs;
    return out;
}

Eigen::MatrixXd real_embedding(const Eigen::MatrixXcd& H)
{
    const int n = static_cast<int>(H.rows());
    Eigen::MatrixXd X(2 * n, 2 * n);
    X.topLeftCorner(n, n) = H.real();
    X.bottomRightCorner(n, n) = H.real();
    X.topRightCorner(n, n) = -H.imag();
    X.bottomLeftCorner(n, n) = H.imag();
    return X;
}

} // namespace oid
