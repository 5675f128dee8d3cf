#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace oid {

enum class ConeKind { free_vars, nonneg, soc, psd };

struct ConeSpec {
    ConeKind kind = ConeKind::free_vars;
    int size = 0; ///< variable count; for psd this is the matrix side

    int dim() const { return kind == ConeKind::psd ? size * (size + 1) / 2 : size; }
};

/// Named handles into the assembled variable vector. Indices are -1 / empty
/// when the corresponding quantity is absent from the formulation.
struct VarMap {
    enum class VForm { none, psd_embedding, radial_socp };
    VForm v_form = VForm::none;

    int num_nodes = 0;
    std::vector<int> house_nodes; ///< inverter houses, ascending; defines house order

    std::vector<int> p_c;
    std::vector<int> q_c;
    std::vector<int> z;
    std::vector<int> d;
    int alpha = -1;
    std::vector<int> y;
    std::vector<std::vector<int>> u; ///< [scenario][house]
    int fairness_t = -1;

    // psd_embedding: svec coordinates of the real embedding of V
    int v_psd_offset = -1;
    int v_psd_side = 0;         ///< 2 * num_nodes
    int tie_rows_begin = 0;     ///< equality rows enforcing the embedding structure
    int tie_rows_end = 0;

    // radial_socp: direct V entries
    std::vector<int> v_diag;                               ///< V_nn per node
    std::map<std::pair<int, int>, std::pair<int, int>> v_edge; ///< (hi,lo) -> (re, im)

    /// svec coordinate of Re V_ij (i >= j) in the embedding block.
    int v_re_index(int i, int j) const;
    /// svec coordinate of Im V_ij (i > j) in the embedding block.
    int v_im_index(int i, int j) const;
};

/// Standard-form conic program
///   min c'x + offset   s.t.  A x = b,  x in K1 x K2 x ... ,
/// with the cone list partitioning the variables in order. PSD blocks hold
/// svec coordinates (off-diagonals scaled by sqrt 2).
struct ConicProblem {
    int num_vars = 0;
    Eigen::VectorXd objective;
    double objective_offset = 0.0;
    std::vector<Eigen::Triplet<double>> equalities;
    Eigen::VectorXd rhs;
    std::vector<ConeSpec> cones;
    VarMap var_map;

    int num_rows() const { return static_cast<int>(rhs.size()); }

    /// Throws ConeMismatch unless the cones tile [0, num_vars) exactly and
    /// every triplet/objective index is in range.
    void check_partition() const;

    Eigen::SparseMatrix<double> equality_matrix() const;
};

std::string write_conic_text(const ConicProblem& problem);
ConicProblem read_conic_text(const std::string& text);

void save_conic(const ConicProblem& problem, const std::string& path);
ConicProblem load_conic(const std::string& path);

} // namespace oid
