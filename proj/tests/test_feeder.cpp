#include "oid/feeder.hpp"

#include "oid/errors.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

#include <doctest.h>

using namespace oid;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

namespace {

NodeSpec xfmr()
{
    NodeSpec n;
    n.index = 0;
    n.kind = NodeKind::transformer;
    return n;
}

NodeSpec house(int idx, double pw = 0.0, double qv = 0.0)
{
    NodeSpec n;
    n.index = idx;
    n.kind = NodeKind::house;
    n.load_w = pw;
    n.load_var = qv;
    return n;
}

NodeSpec pole(int idx)
{
    NodeSpec n;
    n.index = idx;
    n.kind = NodeKind::pole;
    return n;
}

} // namespace

TEST_CASE("two-node admittance identity")
{
    auto f = build_admittance({xfmr(), house(1)}, {{0, 1, Complex(1.0, 0.0), 0.0}});
    CHECK(f.admittance(0, 0) == Complex(1.0, 0.0));
    CHECK(f.admittance(0, 1) == Complex(-1.0, 0.0));
    CHECK(f.admittance(1, 0) == Complex(-1.0, 0.0));
    CHECK(f.admittance(1, 1) == Complex(1.0, 0.0));
    CHECK(f.radial);
}

TEST_CASE("zero impedance rejected")
{
    CHECK_THROWS_WITH_AS(build_admittance({xfmr(), house(1)}, {{0, 1, Complex(0.0, 0.0), 0.0}}),
                         doctest::Contains("ZeroImpedance"), Error);
}

TEST_CASE("duplicate edge rejected")
{
    CHECK_THROWS_WITH_AS(
        build_admittance({xfmr(), house(1)}, {{0, 1, Complex(1.0, 0.0), 0.0},
                                              {1, 0, Complex(2.0, 0.0), 0.0}}),
        doctest::Contains("DuplicateEdge"), Error);
}

TEST_CASE("disconnected graph rejected")
{
    CHECK_THROWS_WITH_AS(
        build_admittance({xfmr(), house(1), house(2)}, {{0, 1, Complex(1.0, 0.0), 0.0}}),
        doctest::Contains("DisconnectedGraph"), Error);
}

TEST_CASE("three-node reactive path: hand-summed branch admittances")
{
    // z01 = z12 = 0.5j: 1/z = -2j, so Y11 = -4j and Y01 = +2j
    auto f = build_admittance({xfmr(), pole(1), house(2)},
                              {{0, 1, Complex(0.0, 0.5), 0.0}, {1, 2, Complex(0.0, 0.5), 0.0}});
    CHECK(f.admittance(1, 1).imag() == doctest::Approx(-4.0));
    CHECK(f.admittance(0, 1).imag() == doctest::Approx(2.0));
    CHECK(f.admittance(1, 1).real() == doctest::Approx(0.0));
}

TEST_CASE("node matrices: flat voltage carries no flow; 0.05 W case")
{
    auto f = build_admittance({xfmr(), house(1)}, {{0, 1, Complex(1.0, 0.0), 0.0}});
    auto nm = node_matrices(f, 0);

    VectorXcd v(2);
    v << 1.0, 1.0;
    MatrixXcd V = v * v.adjoint();
    CHECK(std::abs((nm.A * V).trace()) <= 1e-14);

    v << 1.0, 0.95;
    V = v * v.adjoint();
    // direct S0 = V0 conj((Y v)_0) = 1 * (1 - 0.95) = 0.05 W
    CHECK((nm.A * V).trace().real() == doctest::Approx(0.05).epsilon(1e-12));

    CHECK((nm.A - nm.A.adjoint()).norm() <= 1e-12);
    CHECK((nm.B - nm.B.adjoint()).norm() <= 1e-12);

    CHECK_THROWS_AS(node_matrices(f, 7), Error);
}

TEST_CASE("node matrix identities on random small feeders")
{
    std::mt19937 gen(7);
    std::uniform_real_distribution<double> dist(0.05, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        int n = 3 + trial % 3; // up to 5 nodes
        std::vector<NodeSpec> nodes = {xfmr()};
        std::vector<LineSpec> edges;
        for (int i = 1; i < n; ++i) {
            nodes.push_back(house(i));
            edges.push_back({i - 1, i, Complex(dist(gen), dist(gen)), 0.0});
        }
        auto f = build_admittance(nodes, edges);

        VectorXcd v(n);
        for (int i = 0; i < n; ++i) {
            v[i] = Complex(dist(gen), dist(gen) - 0.5);
        }
        MatrixXcd V = v * v.adjoint();
        VectorXcd injections = f.admittance * v;

        MatrixXcd sumA = MatrixXcd::Zero(n, n);
        MatrixXcd sumM = MatrixXcd::Zero(n, n);
        for (int k = 0; k < n; ++k) {
            auto nm = node_matrices(f, k);
            Complex s_direct = v[k] * std::conj(injections[k]);
            Complex s_trace((nm.A * V).trace().real(), (nm.B * V).trace().real());
            CHECK(std::abs(s_direct - s_trace) <= 1e-10);
            CHECK((nm.M * V).trace().real() == doctest::Approx(std::norm(v[k])));
            sumA += nm.A;
            sumM += nm.M;
        }
        CHECK((sumA - 0.5 * (f.admittance + f.admittance.adjoint())).norm() <= 1e-12);
        CHECK((sumM - MatrixXcd::Identity(n, n)).norm() == 0.0);
    }
}

TEST_CASE("permutation equivariance of build_admittance")
{
    // relabel nodes 1 and 2 of a 4-node feeder; Y rows/cols permute identically
    std::vector<NodeSpec> nodes = {xfmr(), pole(1), house(2), house(3)};
    std::vector<LineSpec> edges = {{0, 1, Complex(0.3, 0.1), 0.0},
                                   {1, 2, Complex(0.2, 0.05), 0.0},
                                   {1, 3, Complex(0.4, 0.15), 0.0}};
    auto f = build_admittance(nodes, edges);

    std::vector<NodeSpec> nodes2 = {xfmr(), house(1), pole(2), house(3)};
    std::vector<LineSpec> edges2 = {{0, 2, Complex(0.3, 0.1), 0.0},
                                    {2, 1, Complex(0.2, 0.05), 0.0},
                                    {2, 3, Complex(0.4, 0.15), 0.0}};
    auto g = build_admittance(nodes2, edges2);

    std::vector<int> perm = {0, 2, 1, 3}; // node k of f maps to perm[k] of g
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            CHECK(f.admittance(i, j) == g.admittance(perm[i], perm[j]));
        }
    }
}

TEST_CASE("validate_feeder: fishbone, ring, degenerate")
{
    auto fish = test::make_fishbone(10, {5520.0, 8000.0, 5700.0});
    auto rep = validate_feeder(fish);
    CHECK(rep.connected);
    CHECK(rep.radial);
    CHECK(rep.num_inverters == 20);
    CHECK(rep.num_poles == 10);
    CHECK(rep.ok());
    CHECK(rep.condition_estimate > 1.0);

    // ring: |edges| = N+1 > N
    auto ring = build_admittance({xfmr(), pole(1), pole(2)},
                                 {{0, 1, Complex(1.0, 0.0), 0.0},
                                  {1, 2, Complex(1.0, 0.0), 0.0},
                                  {2, 0, Complex(1.0, 0.0), 0.0}});
    CHECK_FALSE(validate_feeder(ring).radial);

    // single node with a stranded second node never builds; report path:
    FeederModel lone;
    lone.nodes = {xfmr(), house(1)};
    lone.admittance = Eigen::MatrixXcd::Zero(2, 2);
    auto rep2 = validate_feeder(lone);
    CHECK_FALSE(rep2.connected);
    CHECK_FALSE(rep2.ok());
}

TEST_CASE("per-unit conversion keeps trace identities")
{
    auto fish = test::make_fishbone(2, {5000.0}, 800.0, 200.0);
    auto pu = fish.per_unit();
    CHECK(pu.s_base_va == 1.0);
    // Y_pu = Y * Zbase
    double zb = fish.z_base_ohm();
    CHECK((pu.admittance - fish.admittance * zb).norm() <= 1e-9 * fish.admittance.norm() * zb);
    CHECK(pu.nodes[3].load_w == doctest::Approx(800.0 / fish.s_base_va));
}

TEST_CASE("feeder json round trip")
{
    const char* text = R"({
      "s_base_va": 10000, "v_base_v": 240,
      "nodes": [
        {"index": 0, "kind": "transformer"},
        {"index": 1, "kind": "pole"},
        {"index": 2, "kind": "house", "load_w": 500, "load_var": 240,
         "inverter": {"s_va": 4675, "min_pf": 0.85, "dc_w": 5520, "derate": 0.77}}
      ],
      "lines": [
        {"from": 0, "to": 1, "r_ohm": 0.0045, "x_ohm": 0.00113},
        {"from": 1, "to": 2, "r_ohm": 0.005, "x_ohm": 0.0009}
      ]
    })";
    auto f = parse_feeder_json(text);
    CHECK(f.num_nodes() == 3);
    CHECK(f.radial);
    CHECK(f.inverter_houses() == std::vector<int>{2});
    CHECK(f.nodes[2].inverter->min_pf_angle == doctest::Approx(std::acos(0.85)));
    CHECK_THROWS_AS(parse_feeder_json("{"), Error);
}
