#pragma once

#include "oid/feeder.hpp"
#include "oid/formulation.hpp"
#include "oid/scenario.hpp"
#include "oid/solver.hpp"

#include <optional>
#include <string>
#include <vector>

namespace oid {

/// Hourly inputs: forecast means, loads, and sampling parameters per hour.
struct ScenarioConfig {
    std::vector<int> hours;            ///< hour labels (e.g. 6..20)
    std::vector<int> house_nodes;      ///< column order, must match the feeder
    Eigen::MatrixXd means_w;           ///< |hours| x |houses|
    Eigen::MatrixXd loads_w;           ///< |hours| x |houses|
    Eigen::MatrixXd loads_var;         ///< |hours| x |houses|
    Eigen::MatrixXd positions_m;       ///< |houses| x 2
    double sigma_fraction = 0.10;
    double tau_m = 300.0;
    int scenario_count = 200;
    std::uint64_t seed = 1;
    double beta = 0.95;
    double trunc_lo_pct = 0.3;
    double trunc_hi_pct = 99.7;

    int hour_index(int hour) const;
    Eigen::MatrixXd distances() const;
};

ScenarioConfig load_scenario_config(const std::string& path);
ScenarioConfig parse_scenario_json(const std::string& text);

enum class DispatchMode { deterministic, risk };
enum class FormulationChoice { sdp, socp, automatic };

struct RunConfig {
    std::string feeder_path;
    std::string scenario_path;
    DispatchMode mode = DispatchMode::risk;
    std::vector<int> hours;         ///< empty = all hours in the scenario file
    CostConfig cost;
    VoltageLimits vlim;
    FormulationChoice formulation = FormulationChoice::automatic;
    std::string output_dir;
    std::optional<std::uint64_t> seed;    ///< overrides the scenario file
    std::optional<int> scenario_count;    ///< overrides the scenario file
    double rank_tol = 1e-5;
    AssembleOptions assemble;
    SolverSettings solver;
    ExecMode exec = ExecMode::parallel;
};

struct HourResult {
    int hour = 0;
    DispatchSolution dispatch;
    double var_w = 0.0;
    double cvar_w = 0.0;
    double max_v_pu = 0.0; ///< from the Newton check at the dispatched point
    double min_v_pu = 0.0;
    double newton_gap_pu = 0.0; ///< max | |v_newton| - |v_recovered| |
    bool rank_flagged = false;
};

struct DispatchReport {
    std::vector<HourResult> hours;
    std::vector<int> house_nodes;
    double p_c_tot_wh = 0.0;  ///< sum over non-flagged hours and houses
    double q_c_tot_varh = 0.0;
    int n_tot = 0;
    int flagged_hours = 0;
    DispatchMode mode = DispatchMode::risk;
};

/// One independent conic solve per hour (concurrently when exec = parallel);
/// each rank-1 solution must pass the nonlinear power-flow cross-check
/// before inclusion. Throws SolveFailed / ValidationFailed.
DispatchReport run_dispatch(const FeederModel& feeder, const ScenarioConfig& scenario,
                            const RunConfig& config);
DispatchReport run_dispatch(const RunConfig& config);

enum class SweepParameter { c_R, beta, sigma_fraction, c_z };

const char* to_string(SweepParameter p);

struct SweepRow {
    double value = 0.0;
    double p_c_tot_wh = 0.0;
    double q_c_tot_varh = 0.0;
    int n_tot = 0;
    int flagged_hours = 0;
};

struct SweepTable {
    SweepParameter parameter = SweepParameter::c_R;
    std::vector<SweepRow> rows;
};

/// One report per parameter value, same seed throughout.
SweepTable run_sweep(const FeederModel& feeder, const ScenarioConfig& scenario,
                     const RunConfig& config, SweepParameter parameter,
                     const std::vector<double>& values);

void write_report(const DispatchReport& report, const std::string& dir);
void write_sweep(const SweepTable& table, const std::string& dir);
/// plotdata/curtailment.csv and plotdata/voltage_profile.csv
void emit_plot_data(const DispatchReport& report, const std::string& dir);

std::string report_json(const DispatchReport& report);
std::string hourly_csv(const DispatchReport& report);
std::string sweep_csv(const SweepTable& table);

} // namespace oid
