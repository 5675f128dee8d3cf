#include "oid/formulation.hpp"

#include "oid/errors.hpp"
#include "oid/powerflow.hpp"
#include "test_util.hpp"

#include <cmath>

#include <doctest.h>

using namespace oid;
using Eigen::VectorXd;

namespace {

// small feeder with deliberately stiff lines so that a few kW of PV push
// voltages against the upper limit
FeederModel stiff_fishbone(int poles, double dc_w, double load_w = 400.0)
{
    std::vector<NodeSpec> nodes;
    std::vector<LineSpec> edges;
    NodeSpec t;
    t.index = 0;
    t.kind = NodeKind::transformer;
    nodes.push_back(t);
    for (int p = 1; p <= poles; ++p) {
        NodeSpec pole;
        pole.index = p;
        pole.kind = NodeKind::pole;
        nodes.push_back(pole);
        edges.push_back({p - 1, p, Complex(0.10, 0.03), 0.0});
    }
    for (int h = 0; h < 2 * poles; ++h) {
        NodeSpec house;
        house.index = poles + 1 + h;
        house.kind = NodeKind::house;
        house.load_w = load_w;
        house.load_var = load_w * 0.4843; // pf 0.9
        InverterSpec inv;
        inv.dc_rating_w = dc_w;
        inv.derate = 0.77;
        inv.s_rating_va = 1.1 * 0.77 * dc_w;
        inv.min_pf_angle = std::acos(0.85);
        house.inverter = inv;
        nodes.push_back(house);
        edges.push_back({1 + h / 2, house.index, Complex(0.08, 0.02), 0.0});
    }
    return build_admittance(std::move(nodes), std::move(edges));
}

SolverSettings tight()
{
    SolverSettings st;
    st.tol_gap = 1e-9;
    st.tol_feas = 1e-9;
    return st;
}

ScenarioSet degenerate_scenarios(const VectorXd& means_w, int S)
{
    ScenarioSet set;
    set.samples_w = means_w.transpose().replicate(S, 1);
    set.box_lo_w = means_w;
    set.box_hi_w = means_w;
    set.means_w = means_w;
    set.seed = 0;
    return set;
}

} // namespace

TEST_CASE("oid region membership fixtures")
{
    InverterSpec spec;
    spec.s_rating_va = 1.1;
    spec.min_pf_angle = M_PI / 2;
    CHECK(oid_region_membership(0.0, 0.0, 1.0, spec, 0.0));
    CHECK_FALSE(oid_region_membership(0.0, 0.6, 1.0, spec, 1e-9)); // 0.36 > 1.21 - 1

    InverterSpec pf = spec;
    pf.min_pf_angle = std::acos(0.85);
    // tan(theta) * 0.5 = 0.3099 < 0.40
    CHECK_FALSE(oid_region_membership(500.0, 400.0, 1000.0, InverterSpec{1100.0, std::acos(0.85), 0, 1}, 1e-9));
    CHECK(oid_region_membership(500.0, 300.0, 1000.0, InverterSpec{1100.0, std::acos(0.85), 0, 1}, 1e-9));
    CHECK_FALSE(oid_region_membership(-1.0, 0.0, 1.0, spec, 1e-12));
    CHECK_FALSE(oid_region_membership(1.2, 0.0, 1.0, spec, 1e-12));
}

TEST_CASE("deterministic: nothing to dispatch when there is no PV and no load")
{
    auto feeder = stiff_fishbone(1, 5000.0, 0.0);
    CostConfig cost;
    VoltageLimits vlim;
    auto prob = assemble_deterministic(feeder, VectorXd::Zero(2), cost, vlim);
    auto sol = solve(prob, tight());
    REQUIRE(sol.status == SolveStatus::optimal);
    auto dispatch = recover_dispatch(prob, sol, feeder);
    CHECK(dispatch.p_c_w.lpNorm<Eigen::Infinity>() <= 1e-4);
    CHECK(dispatch.q_c_var.lpNorm<Eigen::Infinity>() <= 1e-4);
    CHECK(dispatch.selected.empty());
    CHECK(dispatch.rank_ratio <= 1e-6);
    for (int n = 0; n < feeder.num_nodes(); ++n) {
        CHECK(std::abs(dispatch.v[n]) == doctest::Approx(1.02).epsilon(1e-6));
    }
    CHECK(std::abs(dispatch.objective) <= 1e-8);
}

TEST_CASE("deterministic: sub-threshold PV leaves inverters unselected, objective = loss cost")
{
    auto feeder = stiff_fishbone(1, 5000.0, 300.0);
    VectorXd p_av = VectorXd::Constant(2, 700.0); // mild export, voltage stays legal
    CostConfig cost;
    cost.c_z = 0.9;
    VoltageLimits vlim;
    auto prob = assemble_deterministic(feeder, p_av, cost, vlim);
    auto sol = solve(prob, tight());
    REQUIRE(sol.status == SolveStatus::optimal);
    auto dispatch = recover_dispatch(prob, sol, feeder);
    CHECK(dispatch.selected.empty());

    // oracle: Newton power flow of the uncontrolled feeder gives the losses
    auto loads = loads_from_feeder(feeder);
    auto pf = newton_power_flow(feeder, p_av - loads.p_w, -loads.q_var, vlim.v_slack);
    double loss_pu = pf.injections_pu.real().sum();
    CHECK(dispatch.objective ==
          doctest::Approx(cost.c_L * loss_pu).epsilon(5e-4));

    // differential check: recovered voltages reproduce the nonlinear flow
    for (int n = 0; n < feeder.num_nodes(); ++n) {
        CHECK(std::abs(dispatch.v[n]) ==
              doctest::Approx(std::abs(pf.voltages_pu[n])).epsilon(1e-6));
    }
    CHECK(dispatch.rank_ratio <= 1e-5);
}

TEST_CASE("deterministic: overvoltage pressure forces curtailment within limits")
{
    auto feeder = stiff_fishbone(2, 8000.0, 300.0);
    VectorXd p_av = VectorXd::Constant(4, 0.77 * 8000.0);
    CostConfig cost;
    VoltageLimits vlim;
    auto prob = assemble_deterministic(feeder, p_av, cost, vlim);
    auto sol = solve(prob, tight());
    REQUIRE(sol.status == SolveStatus::optimal);
    auto dispatch = recover_dispatch(prob, sol, feeder);
    CHECK_FALSE(dispatch.selected.empty());
    CHECK(dispatch.rank_ratio <= 1e-5);

    // every voltage within the window at the dispatched operating point
    auto loads = loads_from_feeder(feeder);
    auto pf = newton_power_flow(feeder, p_av - dispatch.p_c_w - loads.p_w,
                                dispatch.q_c_var - loads.q_var, vlim.v_slack);
    for (int n = 0; n < feeder.num_nodes(); ++n) {
        CHECK(std::abs(pf.voltages_pu[n]) <= vlim.v_max + 1e-6);
        CHECK(std::abs(pf.voltages_pu[n]) >= vlim.v_min - 1e-6);
        CHECK(std::abs(pf.voltages_pu[n]) ==
              doctest::Approx(std::abs(dispatch.v[n])).epsilon(1e-6));
    }

    // curtailments stay inside the inverter region
    auto houses = feeder.inverter_houses();
    for (size_t i = 0; i < houses.size(); ++i) {
        CHECK(oid_region_membership(dispatch.p_c_w[i], dispatch.q_c_var[i], p_av[i],
                                    *feeder.nodes[houses[i]].inverter, 1.0));
    }
}

TEST_CASE("socp_form: block structure, ring rejection, objective agreement")
{
    {
        // 2-node feeder: exactly one rotated cone of real dimension 4
        auto feeder = stiff_fishbone(0, 5000.0); // degenerate: no poles
        // stiff_fishbone(0) has no houses; build by hand instead
    }
    {
        NodeSpec t;
        t.index = 0;
        t.kind = NodeKind::transformer;
        NodeSpec h;
        h.index = 1;
        h.kind = NodeKind::house;
        h.load_w = 200.0;
        h.load_var = 100.0;
        InverterSpec inv;
        inv.s_rating_va = 4000.0;
        inv.min_pf_angle = std::acos(0.85);
        h.inverter = inv;
        auto feeder = build_admittance({t, h}, {{0, 1, Complex(0.2, 0.05), 0.0}});

        CostConfig cost;
        VoltageLimits vlim;
        auto sdp = assemble_deterministic(feeder, VectorXd::Constant(1, 3000.0), cost, vlim);
        auto socp = socp_form(sdp, feeder);

        int soc4 = 0;
        for (const auto& cone : socp.cones) {
            CHECK(cone.kind != ConeKind::psd);
            if (cone.kind == ConeKind::soc && cone.size == 4) {
                ++soc4;
            }
        }
        CHECK(soc4 == 1);

        auto s1 = solve(sdp, tight());
        auto s2 = solve(socp, tight());
        REQUIRE(s1.status == SolveStatus::optimal);
        REQUIRE(s2.status == SolveStatus::optimal);
        CHECK(s1.objective ==
              doctest::Approx(s2.objective).epsilon(1e-5));
        auto d1 = recover_dispatch(sdp, s1, feeder);
        auto d2 = recover_dispatch(socp, s2, feeder);
        for (int n = 0; n < feeder.num_nodes(); ++n) {
            CHECK(std::abs(d1.v[n]) == doctest::Approx(std::abs(d2.v[n])).epsilon(1e-5));
        }
    }
    {
        // ring feeder is rejected
        NodeSpec t;
        t.index = 0;
        t.kind = NodeKind::transformer;
        NodeSpec p1;
        p1.index = 1;
        p1.kind = NodeKind::pole;
        NodeSpec p2;
        p2.index = 2;
        p2.kind = NodeKind::pole;
        auto ring = build_admittance({t, p1, p2}, {{0, 1, Complex(0.1, 0.0), 0.0},
                                                   {1, 2, Complex(0.1, 0.0), 0.0},
                                                   {2, 0, Complex(0.1, 0.0), 0.0}});
        CostConfig cost;
        VoltageLimits vlim;
        auto prob = assemble_deterministic(stiff_fishbone(1, 4000.0),
                                           VectorXd::Constant(2, 1000.0), cost, vlim);
        CHECK_THROWS_WITH_AS(socp_form(prob, ring), doctest::Contains("NotRadial"), Error);
    }
}

TEST_CASE("sdp and socp agree on a larger radial instance")
{
    auto feeder = stiff_fishbone(2, 8000.0, 350.0);
    VectorXd p_av = VectorXd::Constant(4, 6160.0);
    CostConfig cost;
    VoltageLimits vlim;
    auto sdp = assemble_deterministic(feeder, p_av, cost, vlim);
    auto socp = socp_form(sdp, feeder);
    auto s1 = solve(sdp, tight());
    auto s2 = solve(socp, tight());
    REQUIRE(s1.status == SolveStatus::optimal);
    REQUIRE(s2.status == SolveStatus::optimal);
    CHECK(std::abs(s1.objective - s2.objective) <=
          1e-5 * std::max(1.0, std::abs(s1.objective)));
    auto d1 = recover_dispatch(sdp, s1, feeder);
    auto d2 = recover_dispatch(socp, s2, feeder);
    for (int n = 0; n < feeder.num_nodes(); ++n) {
        CHECK(std::abs(std::abs(d1.v[n]) - std::abs(d2.v[n])) <= 1e-5);
    }
}

TEST_CASE("risk-aware with a single mean scenario and c_R = 0 matches deterministic")
{
    auto feeder = stiff_fishbone(2, 8000.0, 300.0);
    VectorXd p_av = VectorXd::Constant(4, 5000.0);
    CostConfig cost;
    cost.c_R = 0.0;
    VoltageLimits vlim;

    auto det = assemble_deterministic(feeder, p_av, cost, vlim);
    auto det_sol = solve(det, tight());
    REQUIRE(det_sol.status == SolveStatus::optimal);

    auto scen = degenerate_scenarios(p_av, 1);
    auto risk = assemble_risk_aware(feeder, scen, loads_from_feeder(feeder), cost, vlim, 0.95);
    auto risk_sol = solve(risk, tight());
    REQUIRE(risk_sol.status == SolveStatus::optimal);

    CHECK(det_sol.objective == doctest::Approx(risk_sol.objective).epsilon(1e-6));
    auto d1 = recover_dispatch(det, det_sol, feeder);
    auto d2 = recover_dispatch(risk, risk_sol, feeder);
    CHECK((d1.p_c_w - d2.p_c_w).lpNorm<Eigen::Infinity>() <= 2.0); // watts
    CHECK((d2.d_w - p_av).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("lmi and soc forms of the selection/capability constraints agree")
{
    auto feeder = stiff_fishbone(1, 8000.0, 300.0);
    VectorXd p_av = VectorXd::Constant(2, 6160.0);
    CostConfig cost;
    VoltageLimits vlim;

    AssembleOptions soc_form_opts;
    AssembleOptions lmi_opts;
    lmi_opts.lmi_selection = true;
    lmi_opts.lmi_capability = true;

    auto a = assemble_deterministic(feeder, p_av, cost, vlim, soc_form_opts);
    auto b = assemble_deterministic(feeder, p_av, cost, vlim, lmi_opts);
    auto sa = solve(a, tight());
    auto sb = solve(b, tight());
    REQUIRE(sa.status == SolveStatus::optimal);
    REQUIRE(sb.status == SolveStatus::optimal);
    CHECK(sa.objective == doctest::Approx(sb.objective).epsilon(1e-6));
    auto da = recover_dispatch(a, sa, feeder);
    auto db = recover_dispatch(b, sb, feeder);
    CHECK((da.p_c_w - db.p_c_w).lpNorm<Eigen::Infinity>() <= 2.0);
    CHECK((da.q_c_var - db.q_c_var).lpNorm<Eigen::Infinity>() <= 2.0);
}

TEST_CASE("fairness: centering annihilates uniform curtailment; hand norm")
{
    auto feeder = stiff_fishbone(1, 8000.0, 300.0);
    VectorXd p_av = VectorXd::Constant(2, 6000.0);
    CostConfig cost;
    VoltageLimits vlim;
    auto base = assemble_deterministic(feeder, p_av, cost, vlim);
    int nvars = base.num_vars;

    auto inert = fairness_term(base, 0.0);
    CHECK(inert.num_vars == nvars + 3); // t plus two centered coordinates
    auto s0 = solve(base, tight());
    auto s1 = solve(inert, tight());
    CHECK(s0.objective == doctest::Approx(s1.objective).epsilon(1e-6));

    // hand case: p_c = (1, 0) kW, |H| = 2 -> ||Pi p_c|| = sqrt(2)/2 kW; probe
    // the appended rows directly
    const auto& vm = inert.var_map;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(inert.num_vars);
    x[vm.p_c[0]] = 0.1; // 1 kW in pu
    x[vm.p_c[1]] = 0.0;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
    for (const auto& t : inert.equalities) {
        if (t.row() >= inert.num_rows() - 2) {
            int i = t.row() - (inert.num_rows() - 2);
            if (t.col() != vm.fairness_t + 1 + i) {
                g[i] -= t.value() * x[t.col()];
            }
        }
    }
    CHECK(g.norm() * feeder.s_base_va == doctest::Approx(1000.0 * std::sqrt(2.0) / 2.0));
}

TEST_CASE("risk solution satisfies conic residuals and the cvar equivalence")
{
    auto feeder = stiff_fishbone(2, 8000.0, 300.0);
    ForecastModel fm;
    fm.means_w = VectorXd::Constant(4, 5000.0);
    fm.sigmas_w = 0.1 * fm.means_w;
    fm.distances_m = Eigen::MatrixXd::Constant(4, 4, 60.0);
    fm.distances_m.diagonal().setZero();
    auto scen = sample_scenarios(fm, 60, 17);

    CostConfig cost;
    cost.c_R = 1.0;
    VoltageLimits vlim;
    const double beta = 0.9;
    auto prob = assemble_risk_aware(feeder, scen, loads_from_feeder(feeder), cost, vlim, beta);
    auto socp = socp_form(prob, feeder);
    auto sol = solve(socp, tight());
    REQUIRE(sol.status == SolveStatus::optimal);

    auto rep = residuals(socp, sol);
    CHECK(rep.primal_res <= 1e-7);
    CHECK(rep.dual_res <= 1e-7);
    CHECK(rep.gap <= 1e-7);

    auto dispatch = recover_dispatch(socp, sol, feeder);
    // claim: the solved alpha minimizes the sample-average R at d*
    auto surpluses = surplus_batch(dispatch.d_w, scen);
    std::vector<double> vals(surpluses.data(), surpluses.data() + surpluses.size());
    auto est = empirical_cvar(vals, beta);
    double at_alpha = r_hat(dispatch.alpha_w, dispatch.d_w, scen, beta);
    CHECK(std::abs(at_alpha - est.cvar) <=
          1e-6 * std::max({1.0, std::abs(est.cvar)}));

    // p_c <= d elementwise
    for (int h = 0; h < 4; ++h) {
        CHECK(dispatch.p_c_w[h] <= dispatch.d_w[h] + 1e-3);
    }
}

TEST_CASE("group sparsity: raising c_z empties the selected set")
{
    auto feeder = stiff_fishbone(1, 8000.0, 400.0);
    VectorXd p_av = VectorXd::Constant(2, 2500.0); // uncontrolled flow is feasible
    {
        auto loads = loads_from_feeder(feeder);
        auto pf = newton_power_flow(feeder, p_av - loads.p_w, -loads.q_var, 1.02);
        for (int n = 0; n < feeder.num_nodes(); ++n) {
            REQUIRE(std::abs(pf.voltages_pu[n]) <= 1.042);
        }
    }
    VoltageLimits vlim;
    size_t prev = 100;
    for (double cz : {0.01, 0.3, 2.0, 20.0}) {
        CostConfig cost;
        cost.c_z = cz;
        auto prob = assemble_deterministic(feeder, p_av, cost, vlim);
        auto sol = solve(prob, tight());
        REQUIRE(sol.status == SolveStatus::optimal);
        auto dispatch = recover_dispatch(prob, sol, feeder);
        CHECK(dispatch.selected.size() <= prev);
        prev = dispatch.selected.size();
    }
    CHECK(prev == 0);
}
