#include "oid/conic.hpp"

#include "oid/errors.hpp"
#include "oid/linalg.hpp"

#include <fstream>
#include <sstream>

namespace oid {

int VarMap::v_re_index(int i, int j) const
{
    if (i < j) {
        std::swap(i, j);
    }
    return v_psd_offset + svec_index(v_psd_side, i, j);
}

int VarMap::v_im_index(int i, int j) const
{
    // Im V_ij lives in the lower-left block at (num_nodes + i, j); canonical
    // coordinates use i > j.
    return v_psd_offset + svec_index(v_psd_side, num_nodes + i, j);
}

void ConicProblem::check_partition() const
{
    long total = 0;
    for (const auto& cone : cones) {
        if (cone.size <= 0) {
            raise(ErrorCode::cone_mismatch, "cone with nonpositive size");
        }
        total += cone.dim();
    }
    if (total != num_vars) {
        raise(ErrorCode::cone_mismatch,
              "cones cover " + std::to_string(total) + " of " + std::to_string(num_vars) +
                  " variables");
    }
    if (objective.size() != num_vars) {
        raise(ErrorCode::cone_mismatch, "objective length mismatch");
    }
    for (const auto& t : equalities) {
        if (t.row() < 0 || t.row() >= num_rows() || t.col() < 0 || t.col() >= num_vars) {
            raise(ErrorCode::cone_mismatch, "equality triplet out of range");
        }
    }
}

Eigen::SparseMatrix<double> ConicProblem::equality_matrix() const
{
    Eigen::SparseMatrix<double> A(num_rows(), num_vars);
    A.setFromTriplets(equalities.begin(), equalities.end());
    return A;
}

namespace {

const char* cone_name(ConeKind kind)
{
    switch (kind) {
    case ConeKind::free_vars: return "free";
    case ConeKind::nonneg: return "nonneg";
    case ConeKind::soc: return "soc";
    case ConeKind::psd: return "psd";
    }
    return "?";
}

} // namespace

std::string write_conic_text(const ConicProblem& problem)
{
    std::ostringstream out;
    out.precision(17);
    out << "oid-conic 1\n";
    out << "vars " << problem.num_vars << "\n";
    out << "offset " << problem.objective_offset << "\n";
    out << "cones " << problem.cones.size() << "\n";
    for (const auto& cone : problem.cones) {
        out << cone_name(cone.kind) << " " << cone.size << "\n";
    }
    int obj_nnz = 0;
    for (int i = 0; i < problem.objective.size(); ++i) {
        if (problem.objective[i] != 0.0) {
            ++obj_nnz;
        }
    }
    out << "objective " << obj_nnz << "\n";
    for (int i = 0; i < problem.objective.size(); ++i) {
        if (problem.objective[i] != 0.0) {
            out << i << " " << problem.objective[i] << "\n";
        }
    }
    out << "equalities " << problem.num_rows() << " " << problem.equalities.size() << "\n";
    for (const auto& t : problem.equalities) {
        out << t.row() << " " << t.col() << " " << t.value() << "\n";
    }
    out << "rhs " << problem.num_rows() << "\n";
    for (int i = 0; i < problem.num_rows(); ++i) {
        out << problem.rhs[i] << "\n";
    }
    return out.str();
}

ConicProblem read_conic_text(const std::string& text)
{
    std::istringstream in(text);
    std::string tag;
    int version = 0;
    in >> tag >> version;
    if (!in || tag != "oid-conic" || version != 1) {
        raise(ErrorCode::io_error, "not an oid-conic v1 stream");
    }

    ConicProblem p;
    auto expect = [&](const char* word) {
        in >> tag;
        if (!in || tag != word) {
            raise(ErrorCode::io_error, std::string("expected '") + word + "'");
        }
    };

    expect("vars");
    in >> p.num_vars;
    expect("offset");
    in >> p.objective_offset;
    expect("cones");
    int ncones = 0;
    in >> ncones;
    for (int k = 0; k < ncones; ++k) {
        std::string name;
        int size = 0;
        in >> name >> size;
        ConeSpec cone;
        cone.size = size;
        if (name == "free") {
            cone.kind = ConeKind::free_vars;
        } else if (name == "nonneg") {
            cone.kind = ConeKind::nonneg;
        } else if (name == "soc") {
            cone.kind = ConeKind::soc;
        } else if (name == "psd") {
            cone.kind = ConeKind::psd;
        } else {
            raise(ErrorCode::io_error, "unknown cone '" + name + "'");
        }
        p.cones.push_back(cone);
    }

    expect("objective");
    int obj_nnz = 0;
    in >> obj_nnz;
    p.objective = Eigen::VectorXd::Zero(p.num_vars);
    for (int k = 0; k < obj_nnz; ++k) {
        int i;
        double v;
        in >> i >> v;
        if (!in || i < 0 || i >= p.num_vars) {
            raise(ErrorCode::io_error, "objective entry out of range");
        }
        p.objective[i] = v;
    }

    expect("equalities");
    int rows = 0;
    long nnz = 0;
    in >> rows >> nnz;
    p.rhs = Eigen::VectorXd::Zero(rows);
    p.equalities.reserve(nnz);
    for (long k = 0; k < nnz; ++k) {
        int r, c;
        double v;
        in >> r >> c >> v;
        if (!in) {
            raise(ErrorCode::io_error, "truncated equality list");
        }
        p.equalities.emplace_back(r, c, v);
    }
    expect("rhs");
    int rhs_rows = 0;
    in >> rhs_rows;
    if (rhs_rows != rows) {
        raise(ErrorCode::io_error, "rhs length disagrees with equalities");
    }
    for (int i = 0; i < rows; ++i) {
        in >> p.rhs[i];
    }
    if (!in) {
        raise(ErrorCode::io_error, "truncated rhs");
    }
    p.check_partition();
    return p;
}

void save_conic(const ConicProblem& problem, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        raise(ErrorCode::io_error, "cannot open '" + path + "' for writing");
    }
    out << write_conic_text(problem);
}

ConicProblem load_conic(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        raise(ErrorCode::io_error, "cannot open '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return read_conic_text(ss.str());
}

} // namespace oid
