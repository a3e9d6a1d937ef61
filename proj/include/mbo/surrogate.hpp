#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mbo {

/// Small feedforward regressor with tanh hidden layers and a linear output.
/// Smooth everywhere, so input gradients are well defined.
struct MlpModel {
    std::vector<int> layer_sizes;  // input, hidden..., 1
    std::vector<Eigen::MatrixXd> weights;  // per layer, (out x in)
    std::vector<Eigen::VectorXd> biases;
    std::string activation = "tanh";

    int input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
    int num_layers() const { return static_cast<int>(weights.size()); }
};

struct TrainConfig {
    std::vector<int> hidden = {64, 64};
    int epochs = 200;
    int batch = 128;
    double step_size = 1e-3;      // adaptive-moment step
    double val_fraction = 0.2;    // held out after a seeded shuffle
    std::uint64_t seed = 0;
};

struct FitResult {
    MlpModel model;
    double val_loss = 0.0;             // held-out mean squared error
    std::vector<double> step_losses;   // training batch loss per optimizer step
};

FitResult fit_surrogate(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                        const TrainConfig& cfg);

// Weighted squared error; weights are renormalized to mean 1 before use.
FitResult fit_reweighted(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                         const Eigen::VectorXd& weights, const TrainConfig& cfg);

// Conservative training: each batch also ascends the current model from the
// batch designs for ascent_steps steps and penalizes the model's advantage on
// those points, loss = MSE + alpha * mean(f(x_adv) - f(x_data)).
FitResult fit_conservative(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                           const TrainConfig& cfg, double alpha, int ascent_steps,
                           double ascent_lr);

double predict(const MlpModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd predict_batch(const MlpModel& model, const Eigen::MatrixXd& X);
Eigen::VectorXd input_gradient(const MlpModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd input_gradient_batch(const MlpModel& model, const Eigen::MatrixXd& X);

enum class ReduceMode { Single, Min, Mean };
ReduceMode reduce_mode_from_string(const std::string& name);
std::string to_string(ReduceMode mode);

struct SurrogateEnsemble {
    std::vector<MlpModel> models;
    Eigen::VectorXd val_losses;

    int size() const { return static_cast<int>(models.size()); }
};

// Fits n members with per-member seed streams derived from `seed`.
SurrogateEnsemble fit_ensemble(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                               const TrainConfig& cfg, int n, std::uint64_t seed);
SurrogateEnsemble fit_ensemble_reweighted(const Eigen::MatrixXd& inputs,
                                          const Eigen::VectorXd& targets,
                                          const Eigen::VectorXd& weights, const TrainConfig& cfg,
                                          int n, std::uint64_t seed);

struct Reduction {
    double value = 0.0;
    Eigen::VectorXd gradient;
};

// min: minimum member prediction, gradient through the argmin member (ties to
// the lowest index); mean: average value and average gradient.
Reduction ensemble_reduce(const SurrogateEnsemble& ensemble, const Eigen::VectorXd& x,
                          ReduceMode mode);
Eigen::VectorXd ensemble_values(const SurrogateEnsemble& ensemble, const Eigen::MatrixXd& X,
                                ReduceMode mode);
Eigen::MatrixXd ensemble_gradients(const SurrogateEnsemble& ensemble, const Eigen::MatrixXd& X,
                                   ReduceMode mode);
// Per-row mean and standard deviation across ensemble members.
void ensemble_stats(const SurrogateEnsemble& ensemble, const Eigen::MatrixXd& X,
                    Eigen::VectorXd& mean, Eigen::VectorXd& stddev);

// Spearman rank correlation with average ranks for ties.
double spearman_rank_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double validation_rank_correlation(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                   const Eigen::VectorXd& targets);

// Snapshot persistence: <stem>.json manifest + <stem>.csv numeric rows.
void save_model(const MlpModel& model, const std::string& stem);
MlpModel load_model(const std::string& stem);

}  // namespace mbo
