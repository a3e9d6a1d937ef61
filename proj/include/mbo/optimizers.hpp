#pragma once

#include "mbo/density.hpp"
#include "mbo/design_space.hpp"
#include "mbo/surrogate.hpp"
#include "mbo/tasks.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mbo {

// Per-method configuration. Every method also carries the surrogate training
// configuration it uses internally; seeds are derived from the propose seed.

struct GradConfig {
    ReduceMode mode = ReduceMode::Mean;
    int steps = 200;
    double lr = 0.05;  // scaled by sqrt(d) inside
    int ensemble = 5;
    TrainConfig train;
};

struct CmaEsConfig {
    double sigma = 0.5;
    int population = 0;  // 0: max(4 + floor(3 ln d), 2K)
    int iterations = 100;
    double elite_fraction = 0.25;
    TrainConfig train;
};

struct ReinforceConfig {
    int iterations = 100;
    int batch = 128;
    double policy_lr = 0.05;
    double val_threshold = 0.25;  // members above this validation MSE are dropped
    int ensemble = 5;
    TrainConfig train;
};

struct CbasConfig {
    int iterations = 20;
    int samples_per_iter = 512;
    double quantile = 0.9;
    bool autofocus = false;
    int ensemble = 5;
    TrainConfig train;
};

struct MinsConfig {
    double y_margin = 0.5;  // target is max normalized score + margin
    double bandwidth = 0.2;
    TrainConfig train;
};

struct BoQeiConfig {
    int gp_subsample = 256;
    int rounds = 8;
    int batch = 16;
    int mc_samples = 64;
    TrainConfig train;
};

struct ComsConfig {
    // Negative means "pick by space": alpha 2 discrete / 0.5 continuous,
    // ascent_lr 2*sqrt(d) discrete / 0.05*sqrt(d) continuous.
    double alpha = -1.0;
    int ascent_steps = 50;
    double ascent_lr = -1.0;
    TrainConfig train;
};

struct DatasetBestConfig {};

using MethodConfig = std::variant<GradConfig, CmaEsConfig, ReinforceConfig, CbasConfig,
                                  MinsConfig, BoQeiConfig, ComsConfig, DatasetBestConfig>;

struct CandidateSet {
    std::vector<Design> designs;       // exactly K, valid for the space
    Eigen::VectorXd surrogate_scores;  // raw-score units, sorted non-increasing
    std::string method_name;
    std::uint64_t seed = 0;
    std::vector<std::string> notes;    // fallbacks and early stops
};

// All propose operations see only the offline dataset and the space; the
// oracle never enters here.
CandidateSet grad_ascent_propose(const Dataset& dataset, const DesignSpace& space,
                                 const GradConfig& cfg, int K, std::uint64_t seed);
CandidateSet cma_es_propose(const Dataset& dataset, const DesignSpace& space,
                            const CmaEsConfig& cfg, int K, std::uint64_t seed);
CandidateSet reinforce_propose(const Dataset& dataset, const DesignSpace& space,
                               const ReinforceConfig& cfg, int K, std::uint64_t seed);

struct CbasDiagnostics {
    std::vector<Eigen::MatrixXd> iteration_samples;  // continuous spaces only
    std::vector<double> importance_weight_min;       // autofocus, per iteration
    std::vector<double> importance_weight_max;
    int iterations_run = 0;
};

CandidateSet cbas_propose(const Dataset& dataset, const DesignSpace& space, const CbasConfig& cfg,
                          int K, std::uint64_t seed, CbasDiagnostics* diag = nullptr);
CandidateSet autofocused_cbas_propose(const Dataset& dataset, const DesignSpace& space,
                                      const CbasConfig& cfg, int K, std::uint64_t seed,
                                      CbasDiagnostics* diag = nullptr);
CandidateSet mins_propose(const Dataset& dataset, const DesignSpace& space, const MinsConfig& cfg,
                          int K, std::uint64_t seed);
CandidateSet bo_qei_propose(const Dataset& dataset, const DesignSpace& space,
                            const BoQeiConfig& cfg, int K, std::uint64_t seed);
CandidateSet coms_propose(const Dataset& dataset, const DesignSpace& space, const ComsConfig& cfg,
                          int K, std::uint64_t seed);

// Reference "method": the top-K dataset designs by observed score.
CandidateSet dataset_best_propose(const Dataset& dataset, const DesignSpace& space, int K);

// --- Exposed internals (unit-testable pieces of the methods above) ----------

// The shared ascent loop: steps of x += lr * grad(reduce(ensemble, x)).
Eigen::MatrixXd ascend(const SurrogateEnsemble& ensemble, Eigen::MatrixXd X, ReduceMode mode,
                       int steps, double lr);

struct CmaResult {
    Eigen::MatrixXd samples;     // best-by-objective rows, non-increasing value
    Eigen::VectorXd values;
    Eigen::VectorXd final_mean;
};

// Rank-weighted estimation-of-distribution search used by cma_es_propose; the
// objective evaluates a batch of rows. Exposed so an exact objective can be
// substituted for the learned one.
CmaResult cma_es_search(const std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>& objective,
                        const Eigen::VectorXd& mu0, const CmaEsConfig& cfg, int dim, int K,
                        std::uint64_t seed);

// Importance ratio exp(log_a - log_b) with the log difference clamped to
// +/- ln(20).
double clamped_ratio(double log_a, double log_b);

// Per-design refit weights: clamped density ratio p0/pt times the Gaussian
// survival probability Pr(f >= tau) under the ensemble mean/std.
Eigen::VectorXd cbas_weights(const Eigen::VectorXd& log_p0, const Eigen::VectorXd& log_pt,
                             const Eigen::VectorXd& pred_mean, const Eigen::VectorXd& pred_std,
                             double tau);

// Monte-Carlo batch expected improvement over joint posterior draws
// (rows: draws, cols: pool points).
double monte_carlo_qei(const Eigen::MatrixXd& joint_samples, const std::vector<int>& batch,
                       double incumbent_best);

// Ceiling-index order statistic shared with the evaluation protocol:
// sorted ascending, element ceil(q * n) - 1 for q in (0, 1].
double quantile_ceiling(Eigen::VectorXd values, double q);

// Gaussian-process regressor with a squared-exponential kernel, fixed length
// scale and observation noise. Cholesky failures escalate jitter (x10 up to
// 1e-2) before giving up.
class GpRegressor {
public:
    GpRegressor(Eigen::MatrixXd X, Eigen::VectorXd y, double length_scale, double noise);

    void condition_on(const Eigen::MatrixXd& X_new, const Eigen::VectorXd& y_new);
    Eigen::VectorXd posterior_mean(const Eigen::MatrixXd& X_star) const;
    void posterior(const Eigen::MatrixXd& X_star, Eigen::VectorXd& mean,
                   Eigen::MatrixXd& cov) const;

    const Eigen::MatrixXd& train_inputs() const { return X_; }
    const Eigen::VectorXd& train_targets() const { return y_; }
    double length_scale() const { return length_scale_; }

    static double median_pairwise_distance(const Eigen::MatrixXd& X);

private:
    void refit();
    Eigen::MatrixXd kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const;

    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    double length_scale_, noise_, y_mean_ = 0.0;
    Eigen::MatrixXd chol_lower_;
    Eigen::VectorXd alpha_;
};

// The REINFORCE inner loops, exposed so tests can drive them with a known
// objective. Objectives evaluate a whole batch.

struct ReinforceGaussianTrace {
    Eigen::MatrixXd sampled;  // all rows sampled during training
    Eigen::VectorXd values;
    std::vector<Eigen::VectorXd> mean_history;  // includes the initial mean
    Eigen::VectorXd final_mean, final_log_std;
};

ReinforceGaussianTrace reinforce_search_gaussian(
    const std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>& objective,
    const Eigen::VectorXd& mean0, const Eigen::VectorXd& std0, int iterations, int batch,
    double lr, std::uint64_t seed);

struct ReinforceCategoricalTrace {
    std::vector<std::vector<int>> sampled;
    Eigen::VectorXd values;
    Eigen::MatrixXd initial_logits, final_logits;  // length x categories
};

ReinforceCategoricalTrace reinforce_search_categorical(
    const std::function<Eigen::VectorXd(const std::vector<std::vector<int>>&)>& objective,
    const Eigen::MatrixXd& logits0, int iterations, int batch, double lr, std::uint64_t seed);

}  // namespace mbo
