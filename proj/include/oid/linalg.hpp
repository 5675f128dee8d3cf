#pragma once

#include "oid/parallel.hpp"

#include <Eigen/Dense>

namespace oid {

// Symmetric vectorization with the sqrt(2) off-diagonal scaling, so that
// svec(X)' svec(Y) = Tr(XY). Order is column-major over the lower triangle:
// (0,0), (1,0), ..., (q-1,0), (1,1), (2,1), ...

inline int svec_dim(int side) { return side * (side + 1) / 2; }

/// Index of entry (i, j), i >= j, in the svec ordering above.
inline int svec_index(int side, int i, int j)
{
    return j * side - j * (j - 1) / 2 + (i - j);
}

Eigen::VectorXd svec(const Eigen::MatrixXd& S);
Eigen::MatrixXd smat(const Eigen::VectorXd& v, int side);

/// Dense matrix of the map svec(X) -> svec(Q X Q) for symmetric Q
/// (the symmetric Kronecker product of Q with itself).
Eigen::MatrixXd sym_kron(const Eigen::MatrixXd& Q, ExecMode mode = ExecMode::parallel);

struct EigenDecomposition {
    Eigen::VectorXd values;  // descending
    Eigen::MatrixXd vectors; // columns match values
};

/// Cyclic Jacobi eigensolver for real symmetric matrices. Deterministic
/// sweep order; used on the small matrices of the voltage-recovery path.
EigenDecomposition jacobi_eigen(Eigen::MatrixXd A);

/// [[Re H, -Im H], [Im H, Re H]] for Hermitian H. Eigenvalues of the result
/// are those of H, each with multiplicity two.
Eigen::MatrixXd real_embedding(const Eigen::MatrixXcd& H);

} // namespace oid
