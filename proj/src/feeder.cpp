#include "oid/feeder.hpp"

#include "oid/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace oid {

namespace {

void check_node_indexing(const std::vector<NodeSpec>& nodes)
{
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
        if (nodes[i].index != i) {
            raise(ErrorCode::index_out_of_range,
                  "nodes must be listed with consecutive indices starting at 0");
        }
    }
    if (nodes.empty() || nodes[0].kind != NodeKind::transformer) {
        raise(ErrorCode::index_out_of_range, "node 0 must be the transformer secondary");
    }
}

} // namespace

std::vector<int> FeederModel::inverter_houses() const
{
    std::vector<int> out;
    for (const auto& n : nodes) {
        if (n.kind == NodeKind::house && n.inverter.has_value()) {
            out.push_back(n.index);
        }
    }
    return out;
}

std::vector<int> FeederModel::house_nodes() const
{
    std::vector<int> out;
    for (const auto& n : nodes) {
        if (n.kind == NodeKind::house) {
            out.push_back(n.index);
        }
    }
    return out;
}

std::vector<int> FeederModel::pole_nodes() const
{
    std::vector<int> out;
    for (const auto& n : nodes) {
        if (n.kind == NodeKind::pole) {
            out.push_back(n.index);
        }
    }
    return out;
}

FeederModel FeederModel::per_unit() const
{
    FeederModel pu = *this;
    const double zb = z_base_ohm();
    pu.admittance = admittance * zb;
    for (auto& n : pu.nodes) {
        n.load_w /= s_base_va;
        n.load_var /= s_base_va;
        if (n.inverter) {
            n.inverter->s_rating_va /= s_base_va;
            n.inverter->dc_rating_w /= s_base_va;
        }
    }
    for (auto& e : pu.edges) {
        e.impedance_ohm /= zb;
        e.shunt_siemens *= zb;
    }
    pu.s_base_va = 1.0;
    pu.v_base_v = 1.0;
    return pu;
}

FeederModel build_admittance(std::vector<NodeSpec> nodes, std::vector<LineSpec> edges,
                             double s_base_va, double v_base_v)
{
    check_node_indexing(nodes);
    const int n = static_cast<int>(nodes.size());

    for (const auto& node : nodes) {
        if (node.kind != NodeKind::house && (node.load_w != 0.0 || node.load_var != 0.0)) {
            raise(ErrorCode::index_out_of_range,
                  "loads are only allowed on house nodes (node " +
                      std::to_string(node.index) + ")");
        }
    }

    std::set<std::pair<int, int>> seen;
    for (const auto& e : edges) {
        if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n || e.from == e.to) {
            raise(ErrorCode::index_out_of_range,
                  "edge (" + std::to_string(e.from) + "," + std::to_string(e.to) +
                      ") references an invalid node");
        }
        if (std::abs(e.impedance_ohm) == 0.0) {
            raise(ErrorCode::zero_impedance,
                  "edge (" + std::to_string(e.from) + "," + std::to_string(e.to) + ")");
        }
        if (e.impedance_ohm.real() < 0.0) {
            raise(ErrorCode::zero_impedance, "negative line resistance");
        }
        auto key = std::minmax(e.from, e.to);
        if (!seen.insert(key).second) {
            raise(ErrorCode::duplicate_edge,
                  "edge (" + std::to_string(e.from) + "," + std::to_string(e.to) + ")");
        }
    }

    // connectivity
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : edges) {
        adj[e.from].push_back(e.to);
        adj[e.to].push_back(e.from);
    }
    std::vector<bool> visited(n, false);
    std::vector<int> stack = {0};
    visited[0] = true;
    int reached = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : adj[v]) {
            if (!visited[w]) {
                visited[w] = true;
                ++reached;
                stack.push_back(w);
            }
        }
    }
    if (reached != n) {
        raise(ErrorCode::disconnected_graph,
              std::to_string(n - reached) + " node(s) unreachable from the transformer");
    }

    FeederModel feeder;
    feeder.nodes = std::move(nodes);
    feeder.edges = std::move(edges);
    feeder.s_base_va = s_base_va;
    feeder.v_base_v = v_base_v;
    feeder.radial = static_cast<int>(feeder.edges.size()) == n - 1;

    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& e : feeder.edges) {
        Complex y = 1.0 / e.impedance_ohm;
        Y(e.from, e.to) -= y;
        Y(e.to, e.from) -= y;
        Y(e.from, e.from) += y + 0.5 * e.shunt_siemens;
        Y(e.to, e.to) += y + 0.5 * e.shunt_siemens;
    }
    feeder.admittance = Y;
    return feeder;
}

NodeMatrices node_matrices(const FeederModel& feeder, int n)
{
    const int count = feeder.num_nodes();
    if (n < 0 || n >= count) {
        raise(ErrorCode::index_out_of_range, "node " + std::to_string(n));
    }
    // Y_n = e_n e_n' Y has row n of Y in row n and zeros elsewhere.
    Eigen::MatrixXcd Yn = Eigen::MatrixXcd::Zero(count, count);
    Yn.row(n) = feeder.admittance.row(n);

    NodeMatrices m;
    m.A = 0.5 * (Yn + Yn.adjoint());
    m.B = Complex(0.0, 0.5) * (Yn - Yn.adjoint());
    m.M = Eigen::MatrixXcd::Zero(count, count);
    m.M(n, n) = 1.0;
    return m;
}

ValidationReport validate_feeder(const FeederModel& feeder)
{
    ValidationReport rep;
    const int n = feeder.num_nodes();

    std::vector<std::vector<int>> adj(n);
    for (const auto& e : feeder.edges) {
        adj[e.from].push_back(e.to);
        adj[e.to].push_back(e.from);
    }
    std::vector<bool> visited(n, false);
    std::vector<int> stack = {0};
    visited[0] = true;
    int reached = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : adj[v]) {
            if (!visited[w]) {
                visited[w] = true;
                ++reached;
                stack.push_back(w);
            }
        }
    }
    rep.connected = reached == n;
    if (!rep.connected) {
        rep.findings.push_back("DisconnectedGraph: " + std::to_string(n - reached) +
                               " node(s) unreachable");
    }
    rep.radial = rep.connected && static_cast<int>(feeder.edges.size()) == n - 1;
    rep.num_houses = static_cast<int>(feeder.house_nodes().size());
    rep.num_inverters = static_cast<int>(feeder.inverter_houses().size());
    rep.num_poles = static_cast<int>(feeder.pole_nodes().size());

    double asym = (feeder.admittance - feeder.admittance.transpose()).cwiseAbs().maxCoeff();
    double scale = std::max(1e-300, feeder.admittance.cwiseAbs().maxCoeff());
    if (asym > 1e-12 * scale) {
        rep.findings.push_back("admittance matrix is not symmetric");
    }

    if (n > 1 && rep.connected) {
        Eigen::MatrixXcd Yred = feeder.admittance.block(1, 1, n - 1, n - 1);
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Yred);
        double smin = svd.singularValues().minCoeff();
        double smax = svd.singularValues().maxCoeff();
        rep.condition_estimate = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        if (!(rep.condition_estimate < 1e14)) {
            rep.findings.push_back("slack-reduced admittance is numerically singular");
        }
    }

    for (const auto& node : feeder.nodes) {
        if (node.inverter) {
            const auto& inv = *node.inverter;
            if (!(inv.s_rating_va > 0.0)) {
                rep.findings.push_back("node " + std::to_string(node.index) +
                                       ": inverter rating must be positive");
            }
            if (!(inv.min_pf_angle > 0.0 && inv.min_pf_angle <= M_PI / 2 + 1e-12)) {
                rep.findings.push_back("node " + std::to_string(node.index) +
                                       ": minimum power-factor angle out of (0, pi/2]");
            }
        }
    }
    return rep;
}

FeederModel parse_feeder_json(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        raise(ErrorCode::io_error, std::string("feeder json: ") + e.what());
    }

    std::vector<NodeSpec> nodes;
    std::vector<LineSpec> edges;
    try {
        for (const auto& nj : j.at("nodes")) {
            NodeSpec n;
            n.index = nj.at("index").get<int>();
            std::string kind = nj.at("kind").get<std::string>();
            if (kind == "transformer") {
                n.kind = NodeKind::transformer;
            } else if (kind == "pole") {
                n.kind = NodeKind::pole;
            } else if (kind == "house") {
                n.kind = NodeKind::house;
            } else {
                raise(ErrorCode::io_error, "unknown node kind '" + kind + "'");
            }
            n.load_w = nj.value("load_w", 0.0);
            n.load_var = nj.value("load_var", 0.0);
            if (nj.contains("inverter")) {
                const auto& ij = nj.at("inverter");
                InverterSpec inv;
                inv.s_rating_va = ij.at("s_va").get<double>();
                double min_pf = ij.value("min_pf", 0.0);
                inv.min_pf_angle = min_pf > 0.0 ? std::acos(min_pf) : M_PI / 2;
                inv.dc_rating_w = ij.value("dc_w", 0.0);
                inv.derate = ij.value("derate", 1.0);
                n.inverter = inv;
            }
            nodes.push_back(n);
        }
        for (const auto& lj : j.at("lines")) {
            LineSpec l;
            l.from = lj.at("from").get<int>();
            l.to = lj.at("to").get<int>();
            l.impedance_ohm = Complex(lj.at("r_ohm").get<double>(), lj.at("x_ohm").get<double>());
            l.shunt_siemens = Complex(lj.value("g_shunt_s", 0.0), lj.value("b_shunt_s", 0.0));
            edges.push_back(l);
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        raise(ErrorCode::io_error, std::string("feeder json: ") + e.what());
    }

    std::sort(nodes.begin(), nodes.end(),
              [](const NodeSpec& a, const NodeSpec& b) { return a.index < b.index; });

    double s_base = j.value("s_base_va", 1e4);
    double v_base = j.value("v_base_v", 240.0);
    return build_admittance(std::move(nodes), std::move(edges), s_base, v_base);
}

FeederModel load_feeder(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        raise(ErrorCode::io_error, "cannot open '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_feeder_json(ss.str());
}

} // namespace oid
