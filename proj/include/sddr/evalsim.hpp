#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sddr/engine.hpp"

namespace sddr {

/// Smooth shape on [-1, 1], shifted and tilted so that it is orthogonal to 1 and x
/// under the uniform distribution on [-1, 1]. Names: sin, cos, sin2, square, abs,
/// tanh, cubic, exp, bump, logistic.
double shape_value(const std::string& shape, double x);
std::vector<std::string> shape_names();

struct SmoothTruth {
    std::string feature;
    std::string shape;
    double amplitude = 1.0;
};

/// True additive predictor of one distribution parameter.
struct PredictorTruth {
    double intercept = 0.0;
    std::map<std::string, double> linear;
    std::vector<SmoothTruth> smooth;
    bool interaction = false;   // adds the product of all features
};

struct GroupSpec {
    std::string feature = "g";
    int count = 0;
    double tau = 1.0;
    std::size_t parameter = 0;
};

struct Scenario {
    std::string name;
    std::string family;
    int n = 0;
    std::uint64_t seed = 0;
    int replications = 1;
    double test_fraction = 0.0;
    int features = 0;             // x1 .. xp
    double low = -1.0;
    double high = 1.0;
    std::vector<PredictorTruth> predictors;
    std::optional<double> noise_sd;   // normal only: fixed noise sd instead of exp(second predictor)
    std::optional<GroupSpec> groups;

    std::vector<std::string> formulas;
    std::map<std::string, TrunkSpec> trunks;
    FitConfig fit;
    bool warm_start = false;   // fit the structured part alone first
};

Scenario scenario_from_json(const nlohmann::json& j);
/// Reads `name_or_path` as a file when it exists, else as a shipped scenario name.
Scenario load_scenario(const std::string& name_or_path);
std::vector<std::string> shipped_scenarios();

/// Ground truth needed to score a fitted model.
struct Truth {
    std::string scenario;
    std::uint64_t seed = 0;
    double low = -1.0;
    double high = 1.0;
    std::vector<PredictorTruth> predictors;
    std::string group_feature;
    std::map<std::string, double> group_effects;
    std::vector<Eigen::VectorXd> eta;
};

nlohmann::json truth_to_json(const Truth& truth);
Truth truth_from_json(const nlohmann::json& j);

struct Simulation {
    Dataset data;
    Truth truth;
};

/// Draws features x1..xp, optional group labels and the response.
Simulation generate(const Scenario& scenario, std::uint64_t seed);

struct EffectErrors {
    std::optional<double> linear_rmse;   // sqrt(mean (w_hat - beta)^2) over true linear effects
    std::optional<double> smooth_rmse;   // mean over smooths of the centered-curve RMSE on a 200-point grid
    std::optional<double> group_rmse;    // centered group effects
};

/// Scores the first distribution parameter's structured effects against the truth.
EffectErrors effect_rmse(const FittedModel& model, const Truth& truth, std::size_t parameter = 0);

struct ReplicationResult {
    int replication = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double log_score = 0.0;
    EffectErrors errors;
};

struct Summary {
    std::optional<double> median;
    std::optional<double> mad;   // median absolute deviation, unscaled
};

Summary summarize(std::vector<double> values);

struct ScenarioReport {
    std::string scenario;
    std::vector<ReplicationResult> replications;
    Summary log_score, linear_rmse, smooth_rmse, group_rmse;
    int failures = 0;
};

/// Runs one replication: generate, split off the test rows, fit, score.
ReplicationResult run_replication(const Scenario& scenario, int replication);

/// Replications run on up to `threads` workers and are merged in order.
std::vector<ScenarioReport> run_experiment(const std::vector<Scenario>& scenarios, unsigned threads);

std::string report_csv(const std::vector<ScenarioReport>& reports);
nlohmann::json report_json(const std::vector<ScenarioReport>& reports);

/// Worker count from SDDR_THREADS, capped by the hardware; at least 1.
unsigned thread_budget();

}  // namespace sddr
