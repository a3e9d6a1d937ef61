#pragma once

#include "mbo/optimizers.hpp"
#include "mbo/tasks.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mbo {

inline constexpr const char* kResultsFormat = "mbo-results/1";

struct RunConfig {
    std::string task;
    std::string method;
    MethodConfig method_cfg;
    int k = 128;
    int trials = 8;
    std::uint64_t base_seed = 0;
    std::string output_path;
};

struct TrialResult {
    std::uint64_t seed = 0;
    Eigen::VectorXd raw_scores;         // K oracle values
    Eigen::VectorXd normalized_scores;
    double p100 = 0.0;
    double p50 = 0.0;
    std::uint64_t oracle_calls_propose = 0;  // must stay 0
    std::uint64_t oracle_calls_eval = 0;     // must equal K
    std::vector<std::string> notes;
};

struct CiBounds {
    double level = 0.95;
    double lower = 0.0;
    double upper = 0.0;
};

struct AggregateStats {
    Eigen::VectorXd trial_values;
    double mean = 0.0;
    double stddev = 0.0;  // sample convention (divisor n-1), 0 for one trial
    double median = 0.0;
    double iqm_value = 0.0;
    CiBounds ci_mean, ci_median, ci_iqm;
};

struct AggregateReport {
    AggregateStats p100;
    AggregateStats p50;
};

struct RunRecord {
    std::string version = kResultsFormat;
    RunConfig config;
    std::vector<TrialResult> trials;
    AggregateReport report;
    std::vector<TrialResult> dataset_best_trials;  // same seeds, reference method
    AggregateReport dataset_best;
};

// --- Evaluation protocol ------------------------------------------------------

std::vector<std::string> method_names();
MethodConfig default_method_config(const std::string& method);
void apply_method_option(MethodConfig& cfg, const std::string& key, const std::string& value);

// Dispatches to the method's propose operation; never touches the oracle.
CandidateSet propose(const Dataset& dataset, const DesignSpace& space, const std::string& method,
                     const MethodConfig& cfg, int K, std::uint64_t seed);

// Builds the dataset with the trial seed, proposes, then spends exactly K
// oracle calls evaluating the candidates.
TrialResult run_trial(const Task& task, const std::string& method, const MethodConfig& cfg, int K,
                      std::uint64_t seed);

// Sorted ascending, element ceil(P/100 * n) - 1; P=100 is the max, P=50 the
// upper median. No interpolation.
double percentile_score(const Eigen::VectorXd& scores, double P);

// Mean after dropping the floor(n/4) smallest and largest values.
double iqm(const Eigen::VectorXd& values);

double median(Eigen::VectorXd values);

enum class Statistic { Mean, Median, Iqm };

std::pair<double, double> bootstrap_ci(const Eigen::VectorXd& values, Statistic stat, int B,
                                       double level, std::uint64_t seed);

AggregateReport aggregate(const std::vector<TrialResult>& trials, std::uint64_t seed);

// Cross-task aggregation with equal task weight: point statistics on the
// pooled per-trial values, intervals from a stratified bootstrap that
// resamples trials within each task before pooling.
AggregateStats aggregate_pooled(const std::vector<Eigen::VectorXd>& strata, std::uint64_t seed);

// Whole run: trials at seeds base_seed + i (parallel up to MBO_THREADS), plus
// the dataset-best reference row at the same seeds.
RunRecord run(const RunConfig& cfg);

// markdown: one "m +/- s"-style row per method plus the dataset-best row;
// json: every aggregate field plus `meta` and the format version.
std::string emit_report(const std::map<std::string, AggregateReport>& reports,
                        const std::string& format, const nlohmann::json& meta = nlohmann::json());

void save_results(const RunRecord& record, const std::string& path);
RunRecord load_results(const std::string& path);

nlohmann::json method_config_to_json(const MethodConfig& cfg);
MethodConfig method_config_from_json(const std::string& method, const nlohmann::json& j);

}  // namespace mbo
