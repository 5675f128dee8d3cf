#include "oid/formulation.hpp"

#include "oid/errors.hpp"
#include "oid/linalg.hpp"
#include "oid/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

namespace oid {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

/// Incremental builder: variables are appended block-at-a-time so the cone
/// list tiles the index range by construction.
class Builder {
  public:
    int add_block(ConeKind kind, int size)
    {
        ConeSpec cone{kind, size};
        int first = prob.num_vars;
        prob.num_vars += cone.dim();
        prob.cones.push_back(cone);
        return first;
    }

    int new_row(double rhs)
    {
        rhs_.push_back(rhs);
        return static_cast<int>(rhs_.size()) - 1;
    }

    void coeff(int row, int col, double value)
    {
        if (value != 0.0) {
            prob.equalities.emplace_back(row, col, value);
        }
    }

    void set_rhs(int row, double value) { rhs_[row] = value; }

    int rows() const { return static_cast<int>(rhs_.size()); }

    void row(std::initializer_list<std::pair<int, double>> terms, double rhs)
    {
        int r = new_row(rhs);
        for (auto [col, v] : terms) {
            coeff(r, col, v);
        }
    }

    void objective(int col, double value) { obj_.push_back({col, value}); }

    ConicProblem finish(double offset)
    {
        prob.objective = Eigen::VectorXd::Zero(prob.num_vars);
        for (auto [col, v] : obj_) {
            prob.objective[col] += v;
        }
        prob.rhs = Eigen::Map<Eigen::VectorXd>(rhs_.data(), rhs_.size());
        prob.objective_offset = offset;
        prob.check_partition();
        return std::move(prob);
    }

    ConicProblem prob;

  private:
    std::vector<double> rhs_;
    std::vector<std::pair<int, double>> obj_;
};

/// Coefficients of Tr(H V) over the canonical svec coordinates of the real
/// embedding, for Hermitian H.
void trace_terms(const Eigen::MatrixXcd& H, const VarMap& vm,
                 std::vector<std::pair<int, double>>& out)
{
    const int nodes = vm.num_nodes;
    for (int j = 0; j < nodes; ++j) {
        for (int i = j; i < nodes; ++i) {
            Complex h = H(i, j);
            if (i == j) {
                if (h.real() != 0.0) {
                    out.push_back({vm.v_re_index(i, i), h.real()});
                }
            } else {
                if (h.real() != 0.0) {
                    out.push_back({vm.v_re_index(i, j), kSqrt2 * h.real()});
                }
                if (h.imag() != 0.0) {
                    out.push_back({vm.v_im_index(i, j), kSqrt2 * h.imag()});
                }
            }
        }
    }
}

struct RiskInputs {
    const ScenarioSet* scenarios = nullptr;
    const LoadSet* loads = nullptr;
    double beta = 0.95;
};

ConicProblem assemble(const FeederModel& feeder, const Eigen::VectorXd& p_av_w,
                      const CostConfig& cost, const VoltageLimits& vlim,
                      const AssembleOptions& opts, const RiskInputs* risk)
{
    if (!(vlim.v_min > 0.0 && vlim.v_min < vlim.v_max && vlim.v_slack >= vlim.v_min &&
          vlim.v_slack <= vlim.v_max)) {
        raise(ErrorCode::infeasible_bounds, "voltage limits must satisfy 0 < vmin <= vslack <= vmax");
    }
    if (cost.c_L < 0.0 || cost.c_P < 0.0 || cost.c_z < 0.0 || cost.c_R < 0.0 ||
        cost.fairness_weight < 0.0) {
        raise(ErrorCode::infeasible_bounds, "cost weights must be nonnegative");
    }

    const FeederModel pu = feeder.per_unit();
    const double sbase = feeder.s_base_va;
    const int nodes = pu.num_nodes();
    const auto inv_houses = pu.inverter_houses();
    const auto all_houses = pu.house_nodes();
    const int H = static_cast<int>(inv_houses.size());

    Eigen::VectorXd p_av = p_av_w / sbase;
    for (int h = 0; h < p_av.size(); ++h) {
        if (p_av[h] < 0.0) {
            raise(ErrorCode::negative_available_power,
                  "available power must be nonnegative (house slot " + std::to_string(h) + ")");
        }
    }

    int S = 0;
    double beta = 0.0;
    Eigen::MatrixXd samples_pu;
    Eigen::VectorXd box_lo, box_hi;
    Eigen::VectorXd load_p = Eigen::VectorXd::Zero(all_houses.size());
    Eigen::VectorXd load_q = Eigen::VectorXd::Zero(all_houses.size());
    if (risk != nullptr) {
        const ScenarioSet& sc = *risk->scenarios;
        if (sc.count() < 1) {
            raise(ErrorCode::empty_scenario_set, "risk-aware assembly needs scenarios");
        }
        if (sc.houses() != H) {
            raise(ErrorCode::dimension_mismatch, "scenario houses do not match inverter houses");
        }
        if (!(risk->beta > 0.0 && risk->beta < 1.0)) {
            raise(ErrorCode::beta_out_of_range, "beta must lie in (0, 1)");
        }
        if (risk->loads->p_w.size() != static_cast<int>(all_houses.size()) ||
            risk->loads->q_var.size() != static_cast<int>(all_houses.size())) {
            raise(ErrorCode::dimension_mismatch, "load vectors do not match house nodes");
        }
        S = sc.count();
        beta = risk->beta;
        samples_pu = sc.samples_w / sbase;
        box_lo = sc.box_lo_w / sbase;
        box_hi = sc.box_hi_w / sbase;
        load_p = risk->loads->p_w / sbase;
        load_q = risk->loads->q_var / sbase;
    } else {
        if (p_av.size() != H) {
            raise(ErrorCode::dimension_mismatch, "p_av does not match inverter houses");
        }
        for (size_t i = 0; i < all_houses.size(); ++i) {
            load_p[i] = pu.nodes[all_houses[i]].load_w;
            load_q[i] = pu.nodes[all_houses[i]].load_var;
        }
    }

    Builder b;
    VarMap& vm = b.prob.var_map;
    vm.num_nodes = nodes;
    vm.house_nodes = inv_houses;

    // --- variables ---
    vm.v_form = VarMap::VForm::psd_embedding;
    vm.v_psd_side = 2 * nodes;
    vm.v_psd_offset = b.add_block(ConeKind::psd, 2 * nodes);

    vm.p_c.resize(H);
    vm.q_c.resize(H);
    vm.z.resize(H);
    std::vector<int> sel_lmi(H, -1);
    if (!opts.lmi_selection) {
        for (int h = 0; h < H; ++h) {
            int blk = b.add_block(ConeKind::soc, 3); // (z, P_c, Q_c)
            vm.z[h] = blk;
            vm.p_c[h] = blk + 1;
            vm.q_c[h] = blk + 2;
        }
    } else {
        for (int h = 0; h < H; ++h) {
            int blk = b.add_block(ConeKind::free_vars, 3);
            vm.z[h] = blk;
            vm.p_c[h] = blk + 1;
            vm.q_c[h] = blk + 2;
        }
        for (int h = 0; h < H; ++h) {
            sel_lmi[h] = b.add_block(ConeKind::psd, 3);
        }
    }

    std::vector<int> cap_soc(H, -1), cap_lmi(H, -1);
    if (!opts.lmi_capability) {
        for (int h = 0; h < H; ++h) {
            cap_soc[h] = b.add_block(ConeKind::soc, 3); // (S_h, Q_c, avail - P_c)
        }
    } else {
        for (int h = 0; h < H; ++h) {
            cap_lmi[h] = b.add_block(ConeKind::psd, 3);
        }
    }

    if (risk != nullptr) {
        int dblk = b.add_block(ConeKind::free_vars, H + 1);
        vm.d.resize(H);
        for (int h = 0; h < H; ++h) {
            vm.d[h] = dblk + h;
        }
        vm.alpha = dblk + H;
        int yblk = b.add_block(ConeKind::nonneg, S);
        vm.y.resize(S);
        for (int s = 0; s < S; ++s) {
            vm.y[s] = yblk + s;
        }
        int ublk = b.add_block(ConeKind::nonneg, S * H);
        vm.u.assign(S, std::vector<int>(H));
        for (int s = 0; s < S; ++s) {
            for (int h = 0; h < H; ++h) {
                vm.u[s][h] = ublk + s * H + h;
            }
        }
    }

    // slack bundle: curtailment box (2H), wedge (2 per constrained house),
    // voltage window (2 per node), d box (2 per non-degenerate house),
    // cvar row slacks (S), cvar coupling slacks (S*H)
    std::vector<int> wedge_houses;
    for (int h = 0; h < H; ++h) {
        double theta = pu.nodes[inv_houses[h]].inverter->min_pf_angle;
        if (theta < M_PI / 2 - 1e-12) {
            wedge_houses.push_back(h);
        }
    }
    std::vector<bool> d_degenerate(H, false);
    int n_dbox = 0;
    if (risk != nullptr) {
        for (int h = 0; h < H; ++h) {
            d_degenerate[h] =
                box_hi[h] - box_lo[h] <= 1e-12 * std::max(1.0, std::abs(box_hi[h]));
            if (!d_degenerate[h]) {
                n_dbox += 2;
            }
        }
    }
    const int slack_count = 2 * H + 2 * static_cast<int>(wedge_houses.size()) + 2 * nodes +
                            n_dbox + (risk != nullptr ? S + S * H : 0);
    int slack = b.add_block(ConeKind::nonneg, slack_count);
    auto next_slack = [&slack]() { return slack++; };

    // --- embedding structure ties ---
    vm.tie_rows_begin = 0;
    for (int j = 0; j < nodes; ++j) {
        for (int i = j; i < nodes; ++i) {
            // lower-right Re block equals upper-left
            b.row({{vm.v_psd_offset + svec_index(2 * nodes, nodes + i, nodes + j), 1.0},
                   {vm.v_psd_offset + svec_index(2 * nodes, i, j), -1.0}},
                  0.0);
        }
    }
    for (int j = 0; j < nodes; ++j) {
        for (int i = j + 1; i < nodes; ++i) {
            // Im block antisymmetry
            b.row({{vm.v_psd_offset + svec_index(2 * nodes, nodes + i, j), 1.0},
                   {vm.v_psd_offset + svec_index(2 * nodes, nodes + j, i), 1.0}},
                  0.0);
        }
    }
    for (int i = 0; i < nodes; ++i) {
        b.row({{vm.v_psd_offset + svec_index(2 * nodes, nodes + i, i), 1.0}}, 0.0);
    }
    vm.tie_rows_end = b.rows();

    // --- slack-bus magnitude pin ---
    b.row({{vm.v_re_index(0, 0), 1.0}}, vlim.v_slack * vlim.v_slack);

    // --- nodal balances ---
    auto avail_term = [&](int h) -> std::pair<int, double> {
        // returns (var, coeff) standing for the availability of house h on
        // the lhs; deterministic availability moves to the rhs instead
        if (risk != nullptr) {
            return {vm.d[h], -1.0};
        }
        return {-1, 0.0};
    };

    std::map<int, int> inv_slot; // node -> inverter-house position
    for (int h = 0; h < H; ++h) {
        inv_slot[inv_houses[h]] = h;
    }
    std::map<int, int> house_slot; // node -> house position (loads)
    for (size_t i = 0; i < all_houses.size(); ++i) {
        house_slot[all_houses[i]] = static_cast<int>(i);
    }

    std::vector<std::pair<int, double>> terms;
    for (int n = 1; n < nodes; ++n) {
        const auto& node = pu.nodes[n];
        auto nm = node_matrices(pu, n);
        if (node.kind == NodeKind::pole) {
            terms.clear();
            trace_terms(nm.A, vm, terms);
            int r = b.new_row(0.0);
            for (auto [c, v] : terms) {
                b.coeff(r, c, v);
            }
            terms.clear();
            trace_terms(nm.B, vm, terms);
            r = b.new_row(0.0);
            for (auto [c, v] : terms) {
                b.coeff(r, c, v);
            }
            continue;
        }
        // house: Tr(A_h V) = -P_load + avail - P_c  (avail = d or p_av)
        int slot = house_slot.at(n);
        double rhs_p = -load_p[slot];
        double rhs_q = -load_q[slot];
        terms.clear();
        trace_terms(nm.A, vm, terms);
        int r = b.new_row(0.0);
        for (auto [c, v] : terms) {
            b.coeff(r, c, v);
        }
        double rhs = rhs_p;
        if (inv_slot.count(n)) {
            int h = inv_slot[n];
            b.coeff(r, vm.p_c[h], 1.0);
            auto [dvar, dcoef] = avail_term(h);
            if (dvar >= 0) {
                b.coeff(r, dvar, dcoef);
            } else {
                rhs += p_av[h];
            }
        }
        // patch rhs for this row
        b.set_rhs(r, rhs);

        terms.clear();
        trace_terms(nm.B, vm, terms);
        r = b.new_row(rhs_q);
        for (auto [c, v] : terms) {
            b.coeff(r, c, v);
        }
        if (inv_slot.count(n)) {
            b.coeff(r, vm.q_c[inv_slot[n]], -1.0);
        }
    }

    // --- voltage window ---
    for (int n = 0; n < nodes; ++n) {
        b.row({{vm.v_re_index(n, n), 1.0}, {next_slack(), -1.0}}, vlim.v_min * vlim.v_min);
        b.row({{vm.v_re_index(n, n), 1.0}, {next_slack(), 1.0}}, vlim.v_max * vlim.v_max);
    }

    // --- curtailment box 0 <= p_c <= avail ---
    for (int h = 0; h < H; ++h) {
        b.row({{vm.p_c[h], 1.0}, {next_slack(), -1.0}}, 0.0);
        if (risk != nullptr) {
            b.row({{vm.d[h], 1.0}, {vm.p_c[h], -1.0}, {next_slack(), -1.0}}, 0.0);
        } else {
            b.row({{vm.p_c[h], 1.0}, {next_slack(), 1.0}}, p_av[h]);
        }
    }

    // --- inverter capability (apparent-power circle) ---
    for (int h = 0; h < H; ++h) {
        double s_rating = pu.nodes[inv_houses[h]].inverter->s_rating_va;
        if (!opts.lmi_capability) {
            int blk = cap_soc[h];
            b.row({{blk, 1.0}}, s_rating);
            b.row({{blk + 1, 1.0}, {vm.q_c[h], -1.0}}, 0.0);
            if (risk != nullptr) {
                b.row({{blk + 2, 1.0}, {vm.p_c[h], 1.0}, {vm.d[h], -1.0}}, 0.0);
            } else {
                b.row({{blk + 2, 1.0}, {vm.p_c[h], 1.0}}, p_av[h]);
            }
        } else {
            int X = cap_lmi[h];
            // [[S^2, -Q, -(avail-P)], [-Q, 1, 0], [-(avail-P), 0, 1]] psd
            b.row({{X + svec_index(3, 0, 0), 1.0}}, s_rating * s_rating);
            b.row({{X + svec_index(3, 1, 0), 1.0}, {vm.q_c[h], kSqrt2}}, 0.0);
            int r = b.new_row(risk != nullptr ? 0.0 : -kSqrt2 * p_av[h]);
            b.coeff(r, X + svec_index(3, 2, 0), 1.0);
            b.coeff(r, vm.p_c[h], -kSqrt2);
            if (risk != nullptr) {
                b.coeff(r, vm.d[h], kSqrt2);
            }
            b.row({{X + svec_index(3, 1, 1), 1.0}}, 1.0);
            b.row({{X + svec_index(3, 2, 1), 1.0}}, 0.0);
            b.row({{X + svec_index(3, 2, 2), 1.0}}, 1.0);
        }
    }

    // --- selection LMIs when requested ---
    if (opts.lmi_selection) {
        for (int h = 0; h < H; ++h) {
            int X = sel_lmi[h];
            b.row({{X + svec_index(3, 0, 0), 1.0}, {vm.z[h], -1.0}}, 0.0);
            b.row({{X + svec_index(3, 1, 1), 1.0}, {vm.z[h], -1.0}}, 0.0);
            b.row({{X + svec_index(3, 2, 2), 1.0}, {vm.z[h], -1.0}}, 0.0);
            b.row({{X + svec_index(3, 1, 0), 1.0}}, 0.0);
            b.row({{X + svec_index(3, 2, 0), 1.0}, {vm.p_c[h], -kSqrt2}}, 0.0);
            b.row({{X + svec_index(3, 2, 1), 1.0}, {vm.q_c[h], -kSqrt2}}, 0.0);
        }
    }

    // --- power-factor wedge ---
    for (int h : wedge_houses) {
        double tan_th = std::tan(pu.nodes[inv_houses[h]].inverter->min_pf_angle);
        if (risk != nullptr) {
            b.row({{vm.d[h], tan_th}, {vm.p_c[h], -tan_th}, {vm.q_c[h], -1.0},
                   {next_slack(), -1.0}},
                  0.0);
            b.row({{vm.d[h], tan_th}, {vm.p_c[h], -tan_th}, {vm.q_c[h], 1.0},
                   {next_slack(), -1.0}},
                  0.0);
        } else {
            b.row({{vm.p_c[h], -tan_th}, {vm.q_c[h], -1.0}, {next_slack(), -1.0}},
                  -tan_th * p_av[h]);
            b.row({{vm.p_c[h], -tan_th}, {vm.q_c[h], 1.0}, {next_slack(), -1.0}},
                  -tan_th * p_av[h]);
        }
    }

    // --- risk block: d box and CVaR epigraph ---
    if (risk != nullptr) {
        for (int h = 0; h < H; ++h) {
            if (d_degenerate[h]) {
                b.row({{vm.d[h], 1.0}}, 0.5 * (box_lo[h] + box_hi[h]));
            } else {
                b.row({{vm.d[h], 1.0}, {next_slack(), -1.0}}, box_lo[h]);
                b.row({{vm.d[h], 1.0}, {next_slack(), 1.0}}, box_hi[h]);
            }
        }
        for (int s = 0; s < S; ++s) {
            int r = b.new_row(0.0); // 1'u_s - alpha - y_s + t = 0
            for (int h = 0; h < H; ++h) {
                b.coeff(r, vm.u[s][h], 1.0);
            }
            b.coeff(r, vm.alpha, -1.0);
            b.coeff(r, vm.y[s], -1.0);
            b.coeff(r, next_slack(), 1.0);
            for (int h = 0; h < H; ++h) {
                // u_sh >= p_av[s]_h - d_h
                b.row({{vm.u[s][h], 1.0}, {vm.d[h], 1.0}, {next_slack(), -1.0}},
                      samples_pu(s, h));
            }
        }
    }

    // --- objective ---
    auto nm0 = node_matrices(pu, 0);
    terms.clear();
    trace_terms(nm0.A, vm, terms); // slack active injection P_0 carries the losses
    for (auto [c, v] : terms) {
        b.objective(c, cost.c_L * v);
    }
    double offset = -cost.c_L * load_p.sum();
    for (int h = 0; h < H; ++h) {
        b.objective(vm.p_c[h], cost.c_P - cost.c_L);
        b.objective(vm.z[h], cost.c_z);
        if (risk != nullptr) {
            b.objective(vm.d[h], cost.c_L);
        } else {
            offset += cost.c_L * p_av[h];
        }
    }
    if (risk != nullptr) {
        b.objective(vm.alpha, cost.c_R);
        double w = cost.c_R / (static_cast<double>(S) * (1.0 - beta));
        for (int s = 0; s < S; ++s) {
            b.objective(vm.y[s], w);
        }
    }

    ConicProblem out = b.finish(offset);
    if (cost.fairness_weight > 0.0) {
        out = fairness_term(std::move(out), cost.fairness_weight);
    }
    return out;
}

} // namespace

LoadSet loads_from_feeder(const FeederModel& feeder)
{
    auto houses = feeder.house_nodes();
    LoadSet out;
    out.p_w.resize(houses.size());
    out.q_var.resize(houses.size());
    for (size_t i = 0; i < houses.size(); ++i) {
        out.p_w[i] = feeder.nodes[houses[i]].load_w;
        out.q_var[i] = feeder.nodes[houses[i]].load_var;
    }
    return out;
}

ConicProblem assemble_deterministic(const FeederModel& feeder, const Eigen::VectorXd& p_av_w,
                                    const CostConfig& cost, const VoltageLimits& vlim,
                                    const AssembleOptions& opts)
{
    return assemble(feeder, p_av_w, cost, vlim, opts, nullptr);
}

ConicProblem assemble_risk_aware(const FeederModel& feeder, const ScenarioSet& scenarios,
                                 const LoadSet& loads, const CostConfig& cost,
                                 const VoltageLimits& vlim, double beta,
                                 const AssembleOptions& opts)
{
    RiskInputs risk;
    risk.scenarios = &scenarios;
    risk.loads = &loads;
    risk.beta = beta;
    return assemble(feeder, Eigen::VectorXd::Zero(scenarios.houses()), cost, vlim, opts, &risk);
}

bool oid_region_membership(double p_c, double q_c, double p_av, const InverterSpec& spec,
                           double tol)
{
    if (tol < 0.0) {
        raise(ErrorCode::index_out_of_range, "tolerance must be nonnegative");
    }
    if (p_c < -tol || p_c > p_av + tol) {
        return false;
    }
    double head = p_av - p_c;
    if (q_c * q_c > spec.s_rating_va * spec.s_rating_va - head * head + tol) {
        return false;
    }
    if (spec.min_pf_angle < M_PI / 2 - 1e-12) {
        if (std::abs(q_c) > std::tan(spec.min_pf_angle) * head + tol) {
            return false;
        }
    }
    return true;
}

ConicProblem fairness_term(ConicProblem problem, double weight)
{
    if (weight < 0.0) {
        raise(ErrorCode::infeasible_bounds, "fairness weight must be nonnegative");
    }
    const auto& pc = problem.var_map.p_c;
    const int H = static_cast<int>(pc.size());
    if (H == 0) {
        return problem;
    }

    int t = problem.num_vars;
    problem.num_vars += 1 + H;
    problem.cones.push_back({ConeKind::soc, 1 + H});
    problem.var_map.fairness_t = t;

    Eigen::VectorXd obj = Eigen::VectorXd::Zero(problem.num_vars);
    obj.head(t) = problem.objective;
    obj[t] = weight;
    problem.objective = std::move(obj);

    int row = problem.num_rows();
    Eigen::VectorXd rhs(row + H);
    rhs.head(row) = problem.rhs;
    for (int i = 0; i < H; ++i) {
        // g_i = (centering matrix * p_c)_i
        int r = row + i;
        rhs[r] = 0.0;
        problem.equalities.emplace_back(r, t + 1 + i, 1.0);
        for (int k = 0; k < H; ++k) {
            double pi = (i == k ? 1.0 : 0.0) - 1.0 / H;
            problem.equalities.emplace_back(r, pc[k], -pi);
        }
    }
    problem.rhs = std::move(rhs);
    problem.check_partition();
    return problem;
}

ConicProblem socp_form(const ConicProblem& problem, const FeederModel& feeder)
{
    if (!feeder.radial) {
        raise(ErrorCode::not_radial, "the SOCP specialization needs a radial feeder");
    }
    const VarMap& vm = problem.var_map;
    if (vm.v_form != VarMap::VForm::psd_embedding) {
        raise(ErrorCode::cone_mismatch, "problem does not hold a PSD voltage embedding");
    }
    const int nodes = vm.num_nodes;
    const int side = vm.v_psd_side;
    const int old_dim = svec_dim(side);
    const int o0 = vm.v_psd_offset;

    // new V variables: diagonals, then (re, im) per edge
    const int edges = static_cast<int>(feeder.edges.size());
    const int new_v = nodes + 2 * edges;

    std::map<int, std::pair<int, double>> coord_map; // old var -> (new var, scale)
    std::vector<int> v_diag(nodes);
    for (int n = 0; n < nodes; ++n) {
        v_diag[n] = o0 + n;
        coord_map[vm.v_re_index(n, n)] = {o0 + n, 1.0};
    }
    std::map<std::pair<int, int>, std::pair<int, int>> v_edge;
    for (int e = 0; e < edges; ++e) {
        int hi = std::max(feeder.edges[e].from, feeder.edges[e].to);
        int lo = std::min(feeder.edges[e].from, feeder.edges[e].to);
        int re = o0 + nodes + 2 * e;
        int im = o0 + nodes + 2 * e + 1;
        v_edge[{hi, lo}] = {re, im};
        coord_map[vm.v_re_index(hi, lo)] = {re, kSqrt2};
        coord_map[vm.v_im_index(hi, lo)] = {im, kSqrt2};
    }

    const int shift = new_v - old_dim;
    auto map_var = [&](int col) -> std::pair<int, double> {
        if (col < o0) {
            return {col, 1.0};
        }
        if (col >= o0 + old_dim) {
            return {col + shift, 1.0};
        }
        auto it = coord_map.find(col);
        if (it == coord_map.end()) {
            raise(ErrorCode::cone_mismatch,
                  "constraint references a voltage entry outside edges and diagonal");
        }
        return it->second;
    };

    ConicProblem out;
    out.num_vars = problem.num_vars + shift;
    out.objective_offset = problem.objective_offset;

    // cone list: swap the embedding block for a free block
    for (const auto& cone : problem.cones) {
        if (cone.kind == ConeKind::psd && cone.size == side) {
            // assume the single embedding block has this side
            out.cones.push_back({ConeKind::free_vars, new_v});
        } else {
            out.cones.push_back(cone);
        }
    }

    out.objective = Eigen::VectorXd::Zero(out.num_vars);
    for (int i = 0; i < problem.objective.size(); ++i) {
        if (problem.objective[i] != 0.0) {
            auto [col, scale] = map_var(i);
            out.objective[col] += scale * problem.objective[i];
        }
    }

    // rows: drop the embedding ties, renumber the rest
    const int old_rows = problem.num_rows();
    std::vector<int> row_map(old_rows, -1);
    int new_rows = 0;
    for (int r = 0; r < old_rows; ++r) {
        if (r >= vm.tie_rows_begin && r < vm.tie_rows_end) {
            continue;
        }
        row_map[r] = new_rows++;
    }
    std::vector<double> rhs;
    rhs.reserve(new_rows + 4 * edges);
    for (int r = 0; r < old_rows; ++r) {
        if (row_map[r] >= 0) {
            rhs.push_back(problem.rhs[r]);
        }
    }
    for (const auto& trip : problem.equalities) {
        int r = row_map[trip.row()];
        if (r < 0) {
            continue;
        }
        auto [col, scale] = map_var(trip.col());
        out.equalities.emplace_back(r, col, scale * trip.value());
    }

    // per-edge rotated cones: (Vaa + Vbb, Vaa - Vbb, 2 Re, 2 Im) in soc4
    for (int e = 0; e < edges; ++e) {
        int a = std::min(feeder.edges[e].from, feeder.edges[e].to);
        int bnode = std::max(feeder.edges[e].from, feeder.edges[e].to);
        auto [re, im] = v_edge.at({bnode, a});
        int blk = out.num_vars;
        out.num_vars += 4;
        out.cones.push_back({ConeKind::soc, 4});

        int r0 = new_rows++;
        out.equalities.emplace_back(r0, blk, 1.0);
        out.equalities.emplace_back(r0, v_diag[a], -1.0);
        out.equalities.emplace_back(r0, v_diag[bnode], -1.0);
        rhs.push_back(0.0);
        int r1 = new_rows++;
        out.equalities.emplace_back(r1, blk + 1, 1.0);
        out.equalities.emplace_back(r1, v_diag[a], -1.0);
        out.equalities.emplace_back(r1, v_diag[bnode], 1.0);
        rhs.push_back(0.0);
        int r2 = new_rows++;
        out.equalities.emplace_back(r2, blk + 2, 1.0);
        out.equalities.emplace_back(r2, re, -2.0);
        rhs.push_back(0.0);
        int r3 = new_rows++;
        out.equalities.emplace_back(r3, blk + 3, 1.0);
        out.equalities.emplace_back(r3, im, -2.0);
        rhs.push_back(0.0);
    }
    out.objective.conservativeResize(out.num_vars);
    out.objective.tail(out.num_vars - (problem.num_vars + shift)).setZero();
    out.rhs = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());

    // remap the named handles
    VarMap nvm = vm;
    nvm.v_form = VarMap::VForm::radial_socp;
    nvm.v_psd_offset = -1;
    nvm.v_psd_side = 0;
    nvm.tie_rows_begin = nvm.tie_rows_end = 0;
    nvm.v_diag = v_diag;
    nvm.v_edge = v_edge;
    auto remap = [&](int idx) { return idx < 0 ? idx : map_var(idx).first; };
    for (auto& v : nvm.p_c) v = remap(v);
    for (auto& v : nvm.q_c) v = remap(v);
    for (auto& v : nvm.z) v = remap(v);
    for (auto& v : nvm.d) v = remap(v);
    nvm.alpha = remap(nvm.alpha);
    for (auto& v : nvm.y) v = remap(v);
    for (auto& row : nvm.u) {
        for (auto& v : row) v = remap(v);
    }
    nvm.fairness_t = remap(nvm.fairness_t);
    out.var_map = std::move(nvm);
    out.check_partition();
    return out;
}

DispatchSolution recover_dispatch(const ConicProblem& problem,
                                  const PrimalDualSolution& solution,
                                  const FeederModel& feeder, double rank_tol,
                                  double selection_tol_pu)
{
    const VarMap& vm = problem.var_map;
    const int nodes = vm.num_nodes;
    const int H = static_cast<int>(vm.p_c.size());
    const double sbase = feeder.s_base_va;
    const auto& x = solution.primal;

    DispatchSolution out;
    out.solver_status = solution.status;
    out.objective = solution.objective;

    if (vm.v_form == VarMap::VForm::psd_embedding) {
        Eigen::MatrixXcd V(nodes, nodes);
        for (int j = 0; j < nodes; ++j) {
            V(j, j) = x[vm.v_re_index(j, j)];
            for (int i = j + 1; i < nodes; ++i) {
                Complex entry(x[vm.v_re_index(i, j)] / kSqrt2,
                              x[vm.v_im_index(i, j)] / kSqrt2);
                V(i, j) = entry;
                V(j, i) = std::conj(entry);
            }
        }
        out.V = V;
        auto rec = extract_voltages(V, rank_tol);
        out.v = rec.v;
        out.rank_ratio = rec.rank_ratio;
        out.rank_flagged = rec.flagged;
    } else if (vm.v_form == VarMap::VForm::radial_socp) {
        // tree walk from the slack recovers angles; the edge 2x2 minors give
        // the tightness measure
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(nodes);
        std::vector<double> diag(nodes);
        for (int n = 0; n < nodes; ++n) {
            diag[n] = x[vm.v_diag[n]];
        }
        double ratio = 0.0;
        for (const auto& [key, idx] : vm.v_edge) {
            auto [hi, lo] = key;
            double re = x[idx.first], im = x[idx.second];
            double vii = std::max(diag[hi], 0.0), vjj = std::max(diag[lo], 0.0);
            double tr = vii + vjj;
            double det = vii * vjj - (re * re + im * im);
            double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
            double l1 = 0.5 * (tr + disc), l2 = 0.5 * (tr - disc);
            if (l1 > 0.0) {
                ratio = std::max(ratio, std::max(0.0, l2) / l1);
            }
        }
        out.rank_ratio = ratio;
        out.rank_flagged = ratio > rank_tol;

        std::vector<std::vector<int>> adj(nodes);
        for (const auto& e : feeder.edges) {
            adj[e.from].push_back(e.to);
            adj[e.to].push_back(e.from);
        }
        std::vector<bool> seen(nodes, false);
        std::queue<int> bfs;
        v[0] = std::sqrt(std::max(diag[0], 0.0));
        seen[0] = true;
        bfs.push(0);
        while (!bfs.empty()) {
            int p = bfs.front();
            bfs.pop();
            for (int c : adj[p]) {
                if (seen[c]) {
                    continue;
                }
                seen[c] = true;
                int hi = std::max(p, c), lo = std::min(p, c);
                auto [rei, imi] = vm.v_edge.at({hi, lo});
                Complex Vhl(x[rei], x[imi]); // V(hi, lo) = v_hi conj(v_lo)
                if (std::abs(v[p]) > 1e-12) {
                    if (c == hi) {
                        v[c] = Vhl / std::conj(v[p]);
                    } else {
                        v[c] = std::conj(Vhl / v[p]);
                    }
                } else {
                    v[c] = std::sqrt(std::max(diag[c], 0.0));
                }
                // normalize the magnitude to the solved diagonal
                double mag = std::sqrt(std::max(diag[c], 0.0));
                if (std::abs(v[c]) > 1e-12) {
                    v[c] *= mag / std::abs(v[c]);
                }
                bfs.push(c);
            }
        }
        out.v = v;
        out.V = v * v.adjoint();
        for (const auto& [key, idx] : vm.v_edge) {
            auto [hi, lo] = key;
            out.V(hi, lo) = Complex(x[idx.first], x[idx.second]);
            out.V(lo, hi) = std::conj(out.V(hi, lo));
        }
        for (int n = 0; n < nodes; ++n) {
            out.V(n, n) = diag[n];
        }
    } else {
        raise(ErrorCode::cone_mismatch, "problem has no voltage representation");
    }

    out.p_c_w.resize(H);
    out.q_c_var.resize(H);
    out.z_va.resize(H);
    out.d_w.resize(H);
    for (int h = 0; h < H; ++h) {
        out.p_c_w[h] = x[vm.p_c[h]] * sbase;
        out.q_c_var[h] = x[vm.q_c[h]] * sbase;
        out.z_va[h] = x[vm.z[h]] * sbase;
        out.d_w[h] = vm.d.empty() ? 0.0 : x[vm.d[h]] * sbase;
    }
    out.alpha_w = vm.alpha >= 0 ? x[vm.alpha] * sbase : 0.0;
    for (int h = 0; h < H; ++h) {
        double norm_pu = std::hypot(out.p_c_w[h], out.q_c_var[h]) / sbase;
        if (norm_pu > selection_tol_pu) {
            out.selected.push_back(vm.house_nodes[h]);
        }
    }
    return out;
}

} // namespace oid
