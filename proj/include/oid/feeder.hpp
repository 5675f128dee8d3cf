#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oid {

using Complex = std::complex<double>;

enum class NodeKind { transformer, pole, house };

struct InverterSpec {
    double s_rating_va = 0.0;  ///< apparent power rating S_h
    double min_pf_angle = 0.0; ///< radians; pi/2 disables the power-factor wedge
    double dc_rating_w = 0.0;
    double derate = 1.0;
};

struct NodeSpec {
    int index = 0;
    NodeKind kind = NodeKind::house;
    double load_w = 0.0;   ///< zero unless kind == house
    double load_var = 0.0; ///< zero unless kind == house
    std::optional<InverterSpec> inverter;
};

struct LineSpec {
    int from = 0;
    int to = 0;
    Complex impedance_ohm;               ///< series R + jX, nonzero
    Complex shunt_siemens = Complex(0.0); ///< total line shunt, split in pi-model halves
};

/// Electrical model of a balanced single-phase feeder. Node 0 is the
/// transformer secondary (slack). Immutable after construction; safe for
/// concurrent reads.
struct FeederModel {
    std::vector<NodeSpec> nodes; ///< position == index
    std::vector<LineSpec> edges;
    Eigen::MatrixXcd admittance; ///< (N+1)x(N+1) bus admittance, siemens
    bool radial = false;
    double s_base_va = 1e4;
    double v_base_v = 240.0;

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    double z_base_ohm() const { return v_base_v * v_base_v / s_base_va; }

    /// House nodes carrying a PV inverter (the set H), ascending.
    std::vector<int> inverter_houses() const;
    /// All house nodes, ascending.
    std::vector<int> house_nodes() const;
    std::vector<int> pole_nodes() const;

    /// Copy of the model with admittance, loads and ratings rescaled to
    /// per-unit on (s_base_va, v_base_v); the copy has unit bases.
    FeederModel per_unit() const;
};

struct NodeMatrices {
    Eigen::MatrixXcd A; ///< Tr(A_n v v^H) = active injection at n
    Eigen::MatrixXcd B; ///< Tr(B_n v v^H) = reactive injection at n
    Eigen::MatrixXcd M; ///< Tr(M_n v v^H) = |V_n|^2
};

struct ValidationReport {
    bool connected = false;
    bool radial = false;
    int num_houses = 0;
    int num_inverters = 0;
    int num_poles = 0;
    double condition_estimate = 0.0; ///< cond of the slack-reduced admittance
    std::vector<std::string> findings;
    bool ok() const { return findings.empty(); }
};

FeederModel build_admittance(std::vector<NodeSpec> nodes, std::vector<LineSpec> edges,
                             double s_base_va = 1e4, double v_base_v = 240.0);

NodeMatrices node_matrices(const FeederModel& feeder, int n);

ValidationReport validate_feeder(const FeederModel& feeder);

FeederModel load_feeder(const std::string& path);
FeederModel parse_feeder_json(const std::string& text);

} // namespace oid
