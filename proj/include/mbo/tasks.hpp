#pragma once

#include "mbo/design_space.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mbo {

/// How a task builds its offline training set: sample a pool (or enumerate),
/// score with the exact oracle, keep the lowest keep_percentile percent.
struct DatasetSpec {
    std::size_t pool_size = 5000;
    double keep_percentile = 50.0;  // in (0, 100]
    std::uint64_t seed = 0;
};

struct Dataset {
    std::vector<Design> designs;
    Eigen::VectorXd scores;
    std::string task_name;
    std::uint64_t build_seed = 0;

    std::size_t size() const { return designs.size(); }
};

/// A synthetic offline-MBO task: exact deterministic oracle plus the recipe
/// for its offline dataset and the bounds used for score normalization.
struct Task {
    std::string name;
    DesignSpace space = DesignSpace::continuous(1, 0.0, 1.0);
    double y_min = 0.0;
    double y_max = 1.0;
    DatasetSpec dataset_spec;

    std::function<double(const Design&)> oracle_fn;
    // Draws one pool sample; null for enumerable discrete tasks.
    std::function<Design(std::mt19937_64&)> sampler_fn;
    bool enumerable = false;

    // Shared so Task copies account to the same tally.
    std::shared_ptr<std::atomic<std::uint64_t>> oracle_calls =
        std::make_shared<std::atomic<std::uint64_t>>(0);
};

struct HistogramPair {
    Eigen::VectorXd edges;  // bins+1 strictly increasing, shared by both histograms
    std::vector<std::size_t> dataset_counts;
    std::vector<std::size_t> resampled_counts;
    double dataset_mean = 0.0;
    double resampled_mean = 0.0;
};

// Largest enumerable discrete space: categories^length <= 2^20.
inline constexpr std::uint64_t kEnumerationCap = 1u << 20;

// --- Task constructors -----------------------------------------------------

// f(x,y) = -x^2 - y^2 on [-2,2]^2; optimum 0 at the origin.
Task make_toy_quadratic();

// Sum of m independent 2-d quadratic wells with seeded centers in [-1,1]^2.
// Each dataset sample is near-optimal in at most one partition, so the joint
// optimum never appears in the data.
Task make_separable(int m, std::uint64_t coeff_seed = 0x5eedc0de);
Eigen::VectorXd separable_centers(int m, std::uint64_t coeff_seed = 0x5eedc0de);

// Categorical sequences scored by per-position values plus adjacent-position
// couplings; fully enumerable, bounds from exhaustive enumeration.
struct LookupTables {
    Eigen::MatrixXd unary;                 // length x categories
    std::vector<Eigen::MatrixXd> pairwise; // (length-1) entries, categories x categories
};
LookupTables make_lookup_tables(int length, int categories, std::uint64_t coeff_seed);
Task make_discrete_lookup(int length = 8, int categories = 4, std::uint64_t coeff_seed = 0x70ab1e5);
Task make_discrete_lookup(LookupTables tables);  // test hook (zeroed / hand-set tables)

// f(x) = sum_p exp(-(x_p-1)^2 / 0.02): a narrow per-coordinate bump, so one
// slightly-off coordinate loses its whole contribution.
Task make_sensitive_ridge(int dim = 16);

std::vector<std::string> task_names();
Task make_task(const std::string& name);

// --- Operations --------------------------------------------------------------

double oracle_evaluate(const Task& task, const Design& design);
Dataset build_dataset(const Task& task, std::uint64_t seed);
double score_normalize(const Task& task, double y);
std::pair<Design, double> enumerate_optimum(const Task& task);
HistogramPair resample_histogram(const Task& task, const Dataset& dataset, std::size_t n,
                                 int bins, std::uint64_t seed);

// Values of the oracle along one coordinate of `at`, swept over [lo, hi] with
// `steps` evenly spaced points; shows how sharply the landscape reacts to a
// single-coordinate change.
std::vector<double> slice_scan(const Task& task, const Design& at, int coord, double lo,
                               double hi, int steps);

// Two-file persistence: <stem>.json manifest + <stem>.csv rows (design values
// then score, 17 significant digits for reals). Loading re-evaluates the
// oracle and rejects rows that disagree (1e-9 continuous, exact discrete).
void save_dataset(const Task& task, const Dataset& dataset, const std::string& stem);
Dataset load_dataset(const Task& task, const std::string& stem);

}  // namespace mbo
