#include "oid/solver.hpp"

#include "oid/errors.hpp"
#include "oid/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

namespace oid {

const char* to_string(SolveStatus status)
{
    switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::numerical: return "numerical";
    }
    return "?";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConeBlockInfo {
    ConeKind kind;
    int dim;  ///< vector dimension (svec dim for psd)
    int side; ///< psd matrix side, 0 otherwise
    int x0;   ///< first variable index
    int s0;   ///< offset into the stacked cone vectors
};

struct BlockScaling {
    // nonneg: W = diag(w)
    VectorXd w;
    // soc: W = eta * (2 wbar wbar' - J); explicit small matrices
    MatrixXd Wmat, Winv;
    // psd: W v = svec(R' smat(v) R); lam_diag holds the scaled eigenvalues
    MatrixXd R, Rinv;
    VectorXd lam_diag;
    // scaled point lambda = W z = W^{-T} s for every cone type
    VectorXd lambda;
};

class Cones {
  public:
    explicit Cones(const ConicProblem& p)
    {
        int x0 = 0;
        int s0 = 0;
        for (const auto& cone : p.cones) {
            if (cone.kind == ConeKind::free_vars) {
                x0 += cone.size;
                continue;
            }
            ConeBlockInfo info;
            info.kind = cone.kind;
            info.side = cone.kind == ConeKind::psd ? cone.size : 0;
            info.dim = cone.dim();
            info.x0 = x0;
            info.s0 = s0;
            x0 += info.dim;
            s0 += info.dim;
            blocks.push_back(info);
            if (cone.kind == ConeKind::nonneg) {
                degree += cone.size;
            } else if (cone.kind == ConeKind::soc) {
                degree += 1;
            } else {
                degree += cone.size;
            }
        }
        total_dim = s0;
    }

    std::vector<ConeBlockInfo> blocks;
    int total_dim = 0;
    int degree = 0;

    VectorXd gather(const VectorXd& x) const
    {
        VectorXd out(total_dim);
        for (const auto& b : blocks) {
            out.segment(b.s0, b.dim) = x.segment(b.x0, b.dim);
        }
        return out;
    }

    void scatter_add(const VectorXd& v, VectorXd& x, double factor = 1.0) const
    {
        for (const auto& b : blocks) {
            x.segment(b.x0, b.dim) += factor * v.segment(b.s0, b.dim);
        }
    }

    VectorXd identity() const
    {
        VectorXd e = VectorXd::Zero(total_dim);
        for (const auto& b : blocks) {
            if (b.kind == ConeKind::nonneg) {
                e.segment(b.s0, b.dim).setOnes();
            } else if (b.kind == ConeKind::soc) {
                e[b.s0] = 1.0;
            } else {
                int k = b.s0;
                for (int j = 0; j < b.side; ++j) {
                    e[k] = 1.0;
                    k += b.side - j;
                }
            }
        }
        return e;
    }

    /// smallest t with v + t*e on the cone boundary (negative deep inside)
    double max_step_to_interior(const VectorXd& v) const
    {
        double t = -kInf;
        for (const auto& b : blocks) {
            auto seg = v.segment(b.s0, b.dim);
            if (b.kind == ConeKind::nonneg) {
                t = std::max(t, -seg.minCoeff());
            } else if (b.kind == ConeKind::soc) {
                t = std::max(t, seg.tail(b.dim - 1).norm() - seg[0]);
            } else {
                Eigen::SelfAdjointEigenSolver<MatrixXd> es(smat(seg, b.side),
                                                           Eigen::EigenvaluesOnly);
                t = std::max(t, -es.eigenvalues().minCoeff());
            }
        }
        return t;
    }
};

double soc_max_step(const VectorXd& lam, const VectorXd& dir)
{
    // largest alpha with lam + alpha*dir staying in the cone; lam interior
    const int k = static_cast<int>(lam.size());
    double l0 = lam[0];
    double d0 = dir[0];
    double a = d0 * d0 - dir.tail(k - 1).squaredNorm();
    double b = 2.0 * (l0 * d0 - lam.tail(k - 1).dot(dir.tail(k - 1)));
    double c = l0 * l0 - lam.tail(k - 1).squaredNorm();

    double best = kInf;
    if (std::abs(a) < 1e-300) {
        if (b < 0.0) {
            best = -c / b;
        }
    } else {
        double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
            double sq = std::sqrt(disc);
            double r1 = (-b - sq) / (2.0 * a);
            double r2 = (-b + sq) / (2.0 * a);
            if (r1 > r2) {
                std::swap(r1, r2);
            }
            if (r1 > 0.0) {
                best = r1;
            } else if (r2 > 0.0 && a < 0.0) {
                best = r2;
            } else if (r2 > 0.0 && l0 + r1 * d0 < 0.0) {
                best = r2;
            }
        }
    }
    // also require the head to stay nonnegative
    if (d0 < 0.0) {
        best = std::min(best, -l0 / d0);
    }
    return best;
}

class ScalingSet {
  public:
    bool compute(const Cones& cones, const VectorXd& s, const VectorXd& z)
    {
        blocks.resize(cones.blocks.size());
        lambda.resize(cones.total_dim);
        for (size_t bi = 0; bi < cones.blocks.size(); ++bi) {
            const auto& b = cones.blocks[bi];
            auto& sc = blocks[bi];
            auto sseg = s.segment(b.s0, b.dim);
            auto zseg = z.segment(b.s0, b.dim);
            if (b.kind == ConeKind::nonneg) {
                if ((sseg.array() <= 0.0).any() || (zseg.array() <= 0.0).any()) {
                    return false;
                }
                sc.w = (sseg.array() / zseg.array()).sqrt();
                sc.lambda = (sseg.array() * zseg.array()).sqrt();
            } else if (b.kind == ConeKind::soc) {
                const int k = b.dim;
                double sj = sseg[0] * sseg[0] - sseg.tail(k - 1).squaredNorm();
                double zj = zseg[0] * zseg[0] - zseg.tail(k - 1).squaredNorm();
                if (sj <= 0.0 || zj <= 0.0 || sseg[0] <= 0.0 || zseg[0] <= 0.0) {
                    return false;
                }
                VectorXd sbar = sseg / std::sqrt(sj);
                VectorXd zbar = zseg / std::sqrt(zj);
                double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
                if (!(gamma > 0.0)) {
                    return false;
                }
                VectorXd Jz = zbar;
                Jz.tail(k - 1) = -zbar.tail(k - 1);
                VectorXd wbar = (sbar + Jz) / (2.0 * gamma); // det(wbar) = 1
                double eta = std::pow(sj / zj, 0.25);

                // W = eta * P(wbar^{1/2}); the Jordan square root keeps
                // W z = W^{-1} s (P(wbar) itself would square the scaling)
                VectorXd v = wbar;
                double g2 = std::sqrt((wbar[0] + 1.0) / 2.0);
                v[0] = g2;
                v.tail(k - 1) = wbar.tail(k - 1) / (2.0 * g2);

                MatrixXd J = -MatrixXd::Identity(k, k);
                J(0, 0) = 1.0;
                MatrixXd H = 2.0 * v * v.transpose() - J;
                sc.Wmat = eta * H;
                sc.Winv = (1.0 / eta) * (J * H * J);
                sc.lambda = sc.Wmat * zseg;
            } else {
                const int q = b.side;
                Eigen::LLT<MatrixXd> lltS(smat(sseg, q));
                Eigen::LLT<MatrixXd> lltZ(smat(zseg, q));
                if (lltS.info() != Eigen::Success || lltZ.info() != Eigen::Success) {
                    return false;
                }
                MatrixXd Ls = lltS.matrixL();
                MatrixXd Lz = lltZ.matrixL();
                Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls,
                                               Eigen::ComputeFullU | Eigen::ComputeFullV);
                VectorXd sig = svd.singularValues();
                if (sig.minCoeff() <= 0.0) {
                    return false;
                }
                sc.R = Ls * svd.matrixV() * sig.cwiseSqrt().cwiseInverse().asDiagonal();
                // R^{-1} = diag(sqrt(sig)) V' Ls^{-1}
                MatrixXd LsInv = Ls.triangularView<Eigen::Lower>().solve(
                    MatrixXd::Identity(q, q));
                sc.Rinv = sig.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() * LsInv;
                sc.lam_diag = sig;
                MatrixXd Lam = sig.asDiagonal();
                sc.lambda = svec(Lam);
            }
            lambda.segment(b.s0, b.dim) = sc.lambda;
        }
        return true;
    }

    void identity(const Cones& cones)
    {
        blocks.resize(cones.blocks.size());
        for (size_t bi = 0; bi < cones.blocks.size(); ++bi) {
            const auto& b = cones.blocks[bi];
            auto& sc = blocks[bi];
            if (b.kind == ConeKind::nonneg) {
                sc.w = VectorXd::Ones(b.dim);
            } else if (b.kind == ConeKind::soc) {
                sc.Wmat = MatrixXd::Identity(b.dim, b.dim);
                sc.Winv = sc.Wmat;
            } else {
                sc.R = MatrixXd::Identity(b.side, b.side);
                sc.Rinv = sc.R;
                sc.lam_diag = VectorXd::Ones(b.side);
            }
        }
    }

    VectorXd apply_W(const Cones& cones, const VectorXd& v) const
    {
        return apply(cones, v, Op::W);
    }
    VectorXd apply_Wt(const Cones& cones, const VectorXd& v) const
    {
        return apply(cones, v, Op::Wt);
    }
    VectorXd apply_Wmt(const Cones& cones, const VectorXd& v) const
    {
        return apply(cones, v, Op::Wmt);
    }

    std::vector<BlockScaling> blocks;
    VectorXd lambda;

  private:
    enum class Op { W, Wt, Wmt };

    VectorXd apply(const Cones& cones, const VectorXd& v, Op op) const
    {
        VectorXd out(v.size());
        for (size_t bi = 0; bi < cones.blocks.size(); ++bi) {
            const auto& b = cones.blocks[bi];
            const auto& sc = blocks[bi];
            auto seg = v.segment(b.s0, b.dim);
            if (b.kind == ConeKind::nonneg) {
                switch (op) {
                case Op::W:
                case Op::Wt: out.segment(b.s0, b.dim) = sc.w.cwiseProduct(seg); break;
                case Op::Wmt: out.segment(b.s0, b.dim) = seg.cwiseQuotient(sc.w); break;
                }
            } else if (b.kind == ConeKind::soc) {
                switch (op) {
                case Op::W:
                case Op::Wt: out.segment(b.s0, b.dim) = sc.Wmat * seg; break;
                case Op::Wmt: out.segment(b.s0, b.dim) = sc.Winv * seg; break;
                }
            } else {
                MatrixXd X = smat(seg, b.side);
                MatrixXd Y;
                switch (op) {
                case Op::W: Y = sc.R.transpose() * X * sc.R; break;
                case Op::Wt: Y = sc.R * X * sc.R.transpose(); break;
                case Op::Wmt: Y = sc.Rinv * X * sc.Rinv.transpose(); break;
                }
                out.segment(b.s0, b.dim) = svec(0.5 * (Y + Y.transpose()));
            }
        }
        return out;
    }
};

VectorXd jordan_product(const Cones& cones, const VectorXd& u, const VectorXd& v)
{
    VectorXd out(u.size());
    for (const auto& b : cones.blocks) {
        auto useg = u.segment(b.s0, b.dim);
        auto vseg = v.segment(b.s0, b.dim);
        if (b.kind == ConeKind::nonneg) {
            out.segment(b.s0, b.dim) = useg.cwiseProduct(vseg);
        } else if (b.kind == ConeKind::soc) {
            const int k = b.dim;
            out[b.s0] = useg.dot(vseg);
            out.segment(b.s0 + 1, k - 1) =
                useg[0] * vseg.tail(k - 1) + vseg[0] * useg.tail(k - 1);
        } else {
            MatrixXd U = smat(useg, b.side);
            MatrixXd V = smat(vseg, b.side);
            out.segment(b.s0, b.dim) = svec(0.5 * (U * V + V * U));
        }
    }
    return out;
}

/// solve lambda o x = v blockwise; the psd lambda is diagonal by construction.
VectorXd jordan_divide(const Cones& cones, const ScalingSet& scaling, const VectorXd& v)
{
    VectorXd out(v.size());
    for (size_t bi = 0; bi < cones.blocks.size(); ++bi) {
        const auto& b = cones.blocks[bi];
        const auto& sc = scaling.blocks[bi];
        auto lseg = scaling.lambda.segment(b.s0, b.dim);
        auto vseg = v.segment(b.s0, b.dim);
        if (b.kind == ConeKind::nonneg) {
            out.segment(b.s0, b.dim) = vseg.cwiseQuotient(lseg);
        } else if (b.kind == ConeKind::soc) {
            const int k = b.dim;
            double det = lseg[0] * lseg[0] - lseg.tail(k - 1).squaredNorm();
            double x0 = (lseg[0] * vseg[0] - lseg.tail(k - 1).dot(vseg.tail(k - 1))) / det;
            out[b.s0] = x0;
            out.segment(b.s0 + 1, k - 1) =
                (vseg.tail(k - 1) - x0 * lseg.tail(k - 1)) / lseg[0];
        } else {
            MatrixXd V = smat(vseg, b.side);
            MatrixXd X(b.side, b.side);
            for (int i = 0; i < b.side; ++i) {
                for (int j = 0; j < b.side; ++j) {
                    X(i, j) = 2.0 * V(i, j) / (sc.lam_diag[i] + sc.lam_diag[j]);
                }
            }
            out.segment(b.s0, b.dim) = svec(X);
        }
    }
    return out;
}

/// largest alpha keeping lambda + alpha * dir in the cone (lambda interior)
double max_step_along(const Cones& cones, const ScalingSet& scaling, const VectorXd& dir)
{
    double amax = kInf;
    for (size_t bi = 0; bi < cones.blocks.size(); ++bi) {
        const auto& b = cones.blocks[bi];
        const auto& sc = scaling.blocks[bi];
        auto lseg = scaling.lambda.segment(b.s0, b.dim);
        auto dseg = dir.segment(b.s0, b.dim);
        if (b.kind == ConeKind::nonneg) {
            for (int i = 0; i < b.dim; ++i) {
                if (dseg[i] < 0.0) {
                    amax = std::min(amax, -lseg[i] / dseg[i]);
                }
            }
        } else if (b.kind == ConeKind::soc) {
            amax = std::min(amax, soc_max_step(lseg, dseg));
        } else {
            VectorXd isqrt = sc.lam_diag.cwiseSqrt().cwiseInverse();
            MatrixXd M = isqrt.asDiagonal() * smat(dseg, b.side) * isqrt.asDiagonal();
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()),
                                                       Eigen::EigenvaluesOnly);
            double emin = es.eigenvalues().minCoeff();
            if (emin < 0.0) {
                amax = std::min(amax, -1.0 / emin);
            }
        }
    }
    return amax;
}

double cone_distance(const ConeSpec& cone, const Eigen::Ref<const VectorXd>& v)
{
    switch (cone.kind) {
    case ConeKind::free_vars: return 0.0;
    case ConeKind::nonneg: return std::max(0.0, -v.minCoeff());
    case ConeKind::soc: return std::max(0.0, v.tail(v.size() - 1).norm() - v[0]);
    case ConeKind::psd: {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(smat(v, cone.size),
                                                   Eigen::EigenvaluesOnly);
        return std::max(0.0, -es.eigenvalues().minCoeff());
    }
    }
    return 0.0;
}

/// Full three-block quasi-definite KKT system
///   [ eps*I    A'        G'          ]
///   [ A       -eps*I     0           ]
///   [ G        0        -W'W - eps*I ]
/// with G = -E (cone-coordinate selection). The scaling block is factored in
/// place, never inverted, which keeps the conditioning of degenerate cone
/// boundaries manageable; the regularization error is removed by refinement.
class KktSystem {
  public:
    void setup(const ConicProblem& p, const Cones& cones, double reg, SolverSettings::Kkt mode)
    {
        n = p.num_vars;
        rows = p.num_rows();
        m = cones.total_dim;
        reg_ = reg;
        A = p.equality_matrix();
        At = A.transpose();
        const int dim = n + rows + m;

        use_dense = mode == SolverSettings::Kkt::dense ||
                    (mode == SolverSettings::Kkt::automatic && dim <= 900);

        // scaling-block slots in a fixed enumeration order
        slot_coords.clear();
        for (const auto& b : cones.blocks) {
            int off = n + rows + b.s0;
            if (b.kind == ConeKind::nonneg) {
                for (int i = 0; i < b.dim; ++i) {
                    slot_coords.push_back({off + i, off + i});
                }
            } else {
                for (int jj = 0; jj < b.dim; ++jj) {
                    for (int ii = 0; ii < b.dim; ++ii) {
                        slot_coords.push_back({off + ii, off + jj});
                    }
                }
            }
        }

        if (use_dense) {
            Kd.setZero(dim, dim);
            for (int k = 0; k < A.outerSize(); ++k) {
                for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
                    Kd(n + it.row(), it.col()) = it.value();
                    Kd(it.col(), n + it.row()) = it.value();
                }
            }
            for (const auto& b : cones.blocks) {
                for (int i = 0; i < b.dim; ++i) {
                    Kd(n + rows + b.s0 + i, b.x0 + i) = -1.0;
                    Kd(b.x0 + i, n + rows + b.s0 + i) = -1.0;
                }
            }
            for (int i = 0; i < n; ++i) {
                Kd(i, i) = reg_;
            }
            for (int r = 0; r < rows; ++r) {
                Kd(n + r, n + r) = -reg_;
            }
            return;
        }

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(slot_coords.size() + 2 * A.nonZeros() + 2 * m + n + rows);
        for (const auto& [i, j] : slot_coords) {
            trip.emplace_back(i, j, i == j ? -reg_ : 0.0); // placeholder values
        }
        for (int i = 0; i < n; ++i) {
            trip.emplace_back(i, i, reg_);
        }
        for (int k = 0; k < A.outerSize(); ++k) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
                trip.emplace_back(n + it.row(), it.col(), it.value());
                trip.emplace_back(it.col(), n + it.row(), it.value());
            }
        }
        for (int r = 0; r < rows; ++r) {
            trip.emplace_back(n + r, n + r, -reg_);
        }
        for (const auto& b : cones.blocks) {
            for (int i = 0; i < b.dim; ++i) {
                trip.emplace_back(n + rows + b.s0 + i, b.x0 + i, -1.0);
                trip.emplace_back(b.x0 + i, n + rows + b.s0 + i, -1.0);
            }
        }
        Ks.resize(dim, dim);
        Ks.setFromTriplets(trip.begin(), trip.end());
        Ks.makeCompressed();

        slot_pos.resize(slot_coords.size());
        for (size_t k = 0; k < slot_coords.size(); ++k) {
            auto [i, j] = slot_coords[k];
            slot_pos[k] = &Ks.coeffRef(i, j) - Ks.valuePtr();
        }
        ldlt.analyzePattern(Ks);
    }

    bool factor(const Cones& cones, const ScalingSet& scaling)
    {
        size_t k = 0;
        auto put = [&](double v, int i, int j) {
            double val = -v - (i == j ? reg_ : 0.0);
            if (use_dense) {
                Kd(i, j) = val;
            } else {
                Ks.valuePtr()[slot_pos[k]] = val;
            }
            ++k;
        };
        for (size_t bi = 0; bi < cones.blocks.size(); ++bi) {
            const auto& b = cones.blocks[bi];
            const auto& sc = scaling.blocks[bi];
            int off = n + rows + b.s0;
            if (b.kind == ConeKind::nonneg) {
                for (int i = 0; i < b.dim; ++i) {
                    put(sc.w[i] * sc.w[i], off + i, off + i);
                }
            } else if (b.kind == ConeKind::soc) {
                MatrixXd WW = sc.Wmat * sc.Wmat;
                for (int jj = 0; jj < b.dim; ++jj) {
                    for (int ii = 0; ii < b.dim; ++ii) {
                        put(WW(ii, jj), off + ii, off + jj);
                    }
                }
            } else {
                MatrixXd T = sc.R * sc.R.transpose();
                MatrixXd Kb = sym_kron(T);
                for (int jj = 0; jj < b.dim; ++jj) {
                    for (int ii = 0; ii < b.dim; ++ii) {
                        put(Kb(ii, jj), off + ii, off + jj);
                    }
                }
            }
        }

        if (use_dense) {
            lu.compute(Kd);
            return true;
        }
        ldlt.factorize(Ks);
        return ldlt.info() == Eigen::Success;
    }

    VectorXd solve2(const VectorXd& rhs) const
    {
        if (use_dense) {
            return lu.solve(rhs);
        }
        return ldlt.solve(rhs);
    }

    int n = 0;
    int rows = 0;
    int m = 0;
    bool use_dense = false;

  private:
    double reg_ = 1e-9;
    Eigen::SparseMatrix<double> A, At;
    Eigen::SparseMatrix<double> Ks;
    MatrixXd Kd;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    Eigen::PartialPivLU<MatrixXd> lu;
    std::vector<std::pair<int, int>> slot_coords;
    std::vector<long> slot_pos;

  public:
    const Eigen::SparseMatrix<double>& eqmat() const { return A; }
    const Eigen::SparseMatrix<double>& eqmat_t() const { return At; }
};

struct SolveVectors {
    VectorXd x, y, z;
};

class HsdSolver {
  public:
    HsdSolver(const ConicProblem& p, const SolverSettings& cfg)
        : prob(p), cfg(cfg), cones(p)
    {
        n = p.num_vars;
        rows = p.num_rows();
        m = cones.total_dim;
        c = p.objective;
        b = p.rhs;
        kkt.setup(p, cones, cfg.kkt_regularization, cfg.kkt);
    }

    PrimalDualSolution run()
    {
        PrimalDualSolution sol;
        std::ofstream log;
        if (!cfg.iteration_log_path.empty()) {
            log.open(cfg.iteration_log_path);
            log << "iter,pcost,dcost,pres,dres,relgap,step\n";
        }

        scaling.identity(cones);
        if (!kkt.factor(cones, scaling)) {
            sol.status = SolveStatus::numerical;
            return sol;
        }

        // initial point: least-squares-flavored solves, then shift the cone
        // variables into the interior
        VectorXd e = cones.identity();
        {
            auto pr = kkt_solve(VectorXd::Zero(n), b, VectorXd::Zero(m));
            x = pr.x;
            s = -pr.z; // s = E x at the solution of the init system
            double t = m > 0 ? cones.max_step_to_interior(s) : -1.0;
            if (t >= 0.0) {
                s += (1.0 + t) * e;
            }
            auto du = kkt_solve(-c, VectorXd::Zero(rows), VectorXd::Zero(m));
            y = du.y;
            z = du.z;
            t = m > 0 ? cones.max_step_to_interior(z) : -1.0;
            if (t >= 0.0) {
                z += (1.0 + t) * e;
            }
        }
        tau = 1.0;
        kappa = 1.0;

        const double bnorm = 1.0 + b.norm();
        const double cnorm = 1.0 + c.norm();

        int it = 0;
        for (; it <= cfg.max_iter; ++it) {
            VectorXd res_x = kkt.eqmat_t() * y + c * tau;
            cones.scatter_add(z, res_x, -1.0); // + G'z with G = -E
            VectorXd res_y = kkt.eqmat() * x - b * tau;
            VectorXd res_z = s - cones.gather(x);
            double res_tau = c.dot(x) + b.dot(y) + kappa;

            double pcost = c.dot(x) / tau;
            double dcost = -b.dot(y) / tau;
            double gap = (m > 0 ? s.dot(z) : 0.0) / (tau * tau);
            double relgap = gap / std::max(1.0, std::abs(pcost));
            double pres = std::max(res_y.norm() / tau / bnorm, res_z.norm() / tau / bnorm);
            double dres = res_x.norm() / tau / cnorm;
            double mu = ((m > 0 ? s.dot(z) : 0.0) + tau * kappa) / (cones.degree + 1);

            double metric = std::max({pres / cfg.tol_feas, dres / cfg.tol_feas,
                                      relgap / cfg.tol_gap});
            if (metric < best.metric) {
                best.metric = metric;
                best.x = x;
                best.y = y;
                best.tau = tau;
                best.pres = pres;
                best.dres = dres;
                best.relgap = relgap;
            }

            if (cfg.verbose) {
                std::printf("%3d  pcost % .6e  dcost % .6e  pres %.2e  dres %.2e  gap %.2e"
                            "  tau %.2e kap %.2e step %.2e\n",
                            it, pcost, dcost, pres, dres, relgap, tau, kappa, last_step);
            }
            if (log.is_open()) {
                log << it << "," << pcost << "," << dcost << "," << pres << "," << dres << ","
                    << relgap << "," << last_step << "\n";
            }

            if (pres <= cfg.tol_feas && dres <= cfg.tol_feas && relgap <= cfg.tol_gap) {
                sol.status = SolveStatus::optimal;
                finalize(sol, it, pres, dres, gap / std::max(1.0, std::abs(pcost)));
                return sol;
            }

            // infeasibility certificates
            double hby = -b.dot(y); // b'y in the scs dual sign convention
            if (hby > 0.0) {
                VectorXd cert = kkt.eqmat_t() * y;
                cones.scatter_add(z, cert, -1.0);
                double r = cert.norm() / cnorm / hby;
                if (r <= cfg.tol_feas && tau <= 1e-2 * kappa) {
                    sol.status = SolveStatus::infeasible;
                    finalize_certificate(sol, it);
                    return sol;
                }
            }
            double cx = c.dot(x);
            if (cx < 0.0) {
                double r = std::max((kkt.eqmat() * x).norm() / bnorm,
                                    (cones.gather(x) - s).norm() / bnorm) /
                           (-cx);
                if (r <= cfg.tol_feas && tau <= 1e-2 * kappa) {
                    sol.status = SolveStatus::unbounded;
                    finalize_certificate(sol, it);
                    return sol;
                }
            }

            if (it == cfg.max_iter) {
                break;
            }

            if (m > 0 && !scaling.compute(cones, s, z)) {
                if (std::getenv("OID_SOLVER_DEBUG")) {
                    std::fprintf(stderr, "scaling failed at iter %d: s=[", it);
                    for (int i = 0; i < s.size(); ++i) std::fprintf(stderr, " %.3e", s[i]);
                    std::fprintf(stderr, " ] z=[");
                    for (int i = 0; i < z.size(); ++i) std::fprintf(stderr, " %.3e", z[i]);
                    std::fprintf(stderr, " ]\n");
                }
                sol.status = SolveStatus::numerical;
                finalize_best(sol, it);
                return sol;
            }
            if (!kkt.factor(cones, scaling)) {
                sol.status = SolveStatus::numerical;
                finalize_best(sol, it);
                return sol;
            }

            auto sol1 = kkt_solve(-c, b, VectorXd::Zero(m));
            double dot1 = c.dot(sol1.x) + b.dot(sol1.y);
            double den = dot1 - kappa / tau;
            if (!(std::abs(den) > 1e-300)) {
                sol.status = SolveStatus::numerical;
                finalize_best(sol, it);
                return sol;
            }

            const VectorXd& lam = scaling.lambda;

            // predictor
            VectorXd bs = -lam;
            double bkappa = -tau * kappa;
            VectorXd rz_in = -res_z - scaling.apply_Wt(cones, bs);
            auto sol2 = kkt_solve(-res_x, -res_y, rz_in);
            double dtau = (-res_tau - bkappa / tau - (c.dot(sol2.x) + b.dot(sol2.y))) / den;
            VectorXd dx = sol2.x + dtau * sol1.x;
            VectorXd dy = sol2.y + dtau * sol1.y;
            VectorXd dz = sol2.z + dtau * sol1.z;
            VectorXd ds = scaling.apply_Wt(cones, bs - scaling.apply_W(cones, dz));
            double dkappa = (bkappa - kappa * dtau) / tau;

            VectorXd ws_a = scaling.apply_Wmt(cones, ds);
            VectorXd wz_a = scaling.apply_W(cones, dz);
            double alpha_aff = 1.0;
            if (m > 0) {
                alpha_aff = std::min(alpha_aff, max_step_along(cones, scaling, ws_a));
                alpha_aff = std::min(alpha_aff, max_step_along(cones, scaling, wz_a));
            }
            if (dtau < 0.0) {
                alpha_aff = std::min(alpha_aff, -tau / dtau);
            }
            if (dkappa < 0.0) {
                alpha_aff = std::min(alpha_aff, -kappa / dkappa);
            }
            alpha_aff = std::min(alpha_aff, 1.0);
            double sigma = std::pow(1.0 - alpha_aff, 3);
            sigma = std::clamp(sigma, 0.0, 1.0);

            // corrector
            double eta_r = 1.0 - sigma;
            VectorXd target = -jordan_product(cones, lam, lam);
            target -= jordan_product(cones, ws_a, wz_a);
            target += sigma * mu * cones.identity();
            bs = jordan_divide(cones, scaling, target);
            bkappa = -tau * kappa - dtau * dkappa + sigma * mu;

            rz_in = -eta_r * res_z - scaling.apply_Wt(cones, bs);
            sol2 = kkt_solve(-eta_r * res_x, -eta_r * res_y, rz_in);
            dtau = (-eta_r * res_tau - bkappa / tau - (c.dot(sol2.x) + b.dot(sol2.y))) / den;
            dx = sol2.x + dtau * sol1.x;
            dy = sol2.y + dtau * sol1.y;
            dz = sol2.z + dtau * sol1.z;
            ds = scaling.apply_Wt(cones, bs - scaling.apply_W(cones, dz));
            dkappa = (bkappa - kappa * dtau) / tau;

            double alpha = kInf;
            if (m > 0) {
                alpha = std::min(alpha,
                                 max_step_along(cones, scaling, scaling.apply_Wmt(cones, ds)));
                alpha = std::min(alpha,
                                 max_step_along(cones, scaling, scaling.apply_W(cones, dz)));
            }
            if (dtau < 0.0) {
                alpha = std::min(alpha, -tau / dtau);
            }
            if (dkappa < 0.0) {
                alpha = std::min(alpha, -kappa / dkappa);
            }
            alpha = std::min(1.0, cfg.step_fraction * alpha);
            if (!(alpha > 1e-13)) {
                if (std::getenv("OID_SOLVER_DEBUG")) {
                    std::fprintf(stderr,
                                 "step collapse at iter %d: alpha=%.3e sigma=%.3e aff=%.3e\n",
                                 it, alpha, sigma, alpha_aff);
                }
                sol.status = SolveStatus::numerical;
                finalize_best(sol, it);
                return sol;
            }
            last_step = alpha;

            x += alpha * dx;
            y += alpha * dy;
            z += alpha * dz;
            s += alpha * ds;
            tau += alpha * dtau;
            kappa += alpha * dkappa;
        }

        sol.status = SolveStatus::max_iter;
        finalize_best(sol, it);
        return sol;
    }

  private:
    /// single pass through the regularized factorization
    SolveVectors kkt_solve_once(const VectorXd& rx, const VectorXd& ry,
                                const VectorXd& rz) const
    {
        VectorXd rhs(n + rows + m);
        rhs.head(n) = rx;
        rhs.segment(n, rows) = ry;
        rhs.tail(m) = rz;

        VectorXd u = kkt.solve2(rhs);
        SolveVectors out;
        out.x = u.head(n);
        out.y = u.segment(n, rows);
        out.z = u.tail(m);
        return out;
    }

    /// factorization pass + refinement against the exact (unregularized)
    /// three-block operator
    SolveVectors kkt_solve(const VectorXd& rx, const VectorXd& ry, const VectorXd& rz) const
    {
        SolveVectors u = kkt_solve_once(rx, ry, rz);
        const double scale =
            1.0 + rx.lpNorm<Eigen::Infinity>() + ry.lpNorm<Eigen::Infinity>() +
            (m > 0 ? rz.lpNorm<Eigen::Infinity>() : 0.0);

        auto residual = [&](const SolveVectors& w, VectorXd& r1, VectorXd& r2, VectorXd& r3) {
            r1 = rx - kkt.eqmat_t() * w.y;
            if (m > 0) {
                cones.scatter_add(w.z, r1, 1.0); // minus G'uz with G = -E
            }
            r2 = ry - kkt.eqmat() * w.x;
            if (m > 0) {
                // r3 = rz - (G ux - W'W uz) with G = -E
                r3 = rz + cones.gather(w.x) +
                     scaling.apply_Wt(cones, scaling.apply_W(cones, w.z));
            } else {
                r3 = VectorXd::Zero(0);
            }
            return std::max({r1.lpNorm<Eigen::Infinity>(), r2.lpNorm<Eigen::Infinity>(),
                             m > 0 ? r3.lpNorm<Eigen::Infinity>() : 0.0});
        };

        VectorXd r1, r2, r3;
        double rn = residual(u, r1, r2, r3);
        for (int pass = 0; pass < 3 && rn > 1e-14 * scale; ++pass) {
            SolveVectors d = kkt_solve_once(r1, r2, r3);
            SolveVectors trial = u;
            trial.x += d.x;
            trial.y += d.y;
            if (m > 0) {
                trial.z += d.z;
            }
            VectorXd t1, t2, t3;
            double tn = residual(trial, t1, t2, t3);
            if (!(tn < rn)) {
                break; // refinement stopped contracting; keep the best iterate
            }
            u = std::move(trial);
            rn = tn;
            r1 = std::move(t1);
            r2 = std::move(t2);
            r3 = std::move(t3);
        }
        return u;
    }

    void finalize(PrimalDualSolution& sol, int iters, double pres, double dres, double relgap)
    {
        sol.iterations = iters;
        double t = tau > 0.0 ? tau : 1.0;
        sol.primal = x / t;
        sol.dual = -y / t;
        sol.dual_cone = c - kkt.eqmat_t() * sol.dual;
        sol.objective = c.dot(sol.primal) + prob.objective_offset;
        sol.gap = relgap;
        sol.primal_res = pres;
        sol.dual_res = dres;
    }

    /// stop at the closest-to-converged iterate seen, not the one that broke
    void finalize_best(PrimalDualSolution& sol, int iters)
    {
        if (best.x.size() > 0) {
            x = best.x;
            y = best.y;
            tau = best.tau;
            if (best.metric <= 1.0) {
                sol.status = SolveStatus::optimal;
            }
            finalize(sol, iters, best.pres, best.dres, best.relgap);
        } else {
            finalize(sol, iters, 0.0, 0.0, 0.0);
        }
    }

    struct BestIterate {
        double metric = std::numeric_limits<double>::infinity();
        VectorXd x, y;
        double tau = 1.0;
        double pres = 0.0, dres = 0.0, relgap = 0.0;
    };
    BestIterate best;

    void finalize_certificate(PrimalDualSolution& sol, int iters)
    {
        sol.iterations = iters;
        sol.primal = x;
        sol.dual = -y;
        sol.dual_cone = VectorXd::Zero(n);
        sol.objective = std::numeric_limits<double>::quiet_NaN();
    }

    const ConicProblem& prob;
    SolverSettings cfg;
    Cones cones;
    KktSystem kkt;
    ScalingSet scaling;
    VectorXd c, b;
    VectorXd x, y, s, z;
    double tau = 1.0, kappa = 1.0;
    double last_step = 0.0;
    int n = 0, rows = 0, m = 0;
};

} // namespace

PrimalDualSolution InteriorPointSolver::solve(const ConicProblem& problem,
                                              const SolverSettings& settings)
{
    problem.check_partition();
    HsdSolver solver(problem, settings);
    return solver.run();
}

PrimalDualSolution solve(const ConicProblem& problem, const SolverSettings& settings)
{
    InteriorPointSolver s;
    return s.solve(problem, settings);
}

ResidualReport residuals(const ConicProblem& problem, const PrimalDualSolution& solution)
{
    if (solution.primal.size() != problem.num_vars ||
        solution.dual.size() != problem.num_rows()) {
        raise(ErrorCode::dimension_mismatch, "solution does not match the problem shape");
    }
    const auto& x = solution.primal;
    const auto& y = solution.dual;
    Eigen::SparseMatrix<double> A = problem.equality_matrix();

    VectorXd eq = A * x - problem.rhs;
    double bnorm = 1.0 + problem.rhs.lpNorm<Eigen::Infinity>();
    double xnorm = 1.0 + x.lpNorm<Eigen::Infinity>();
    double pres = eq.lpNorm<Eigen::Infinity>() / bnorm;

    VectorXd s = problem.objective - A.transpose() * y;
    double cnorm = 1.0 + problem.objective.lpNorm<Eigen::Infinity>();
    double dres = 0.0;

    int off = 0;
    for (const auto& cone : problem.cones) {
        int dim = cone.dim();
        auto xseg = x.segment(off, dim);
        auto sseg = s.segment(off, dim);
        if (cone.kind == ConeKind::free_vars) {
            dres = std::max(dres, sseg.lpNorm<Eigen::Infinity>() / cnorm);
        } else {
            pres = std::max(pres, cone_distance(cone, xseg) / xnorm);
            dres = std::max(dres, cone_distance(cone, sseg) / cnorm);
        }
        off += dim;
    }

    double cx = problem.objective.dot(x);
    double by = problem.rhs.dot(y);
    ResidualReport rep;
    rep.primal_res = pres;
    rep.dual_res = dres;
    rep.gap = std::abs(cx - by) / std::max({1.0, std::abs(cx), std::abs(by)});
    return rep;
}

} // namespace oid
