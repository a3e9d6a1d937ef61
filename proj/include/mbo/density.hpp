#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <variant>
#include <vector>

namespace mbo {

/// Full-covariance Gaussian over continuous designs; the stored covariance is
/// the raw weighted covariance, and ridge*I is added before factorization.
class GaussianDensity {
public:
    GaussianDensity(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double ridge = 1e-4);

    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return covariance_; }
    double ridge() const { return ridge_; }
    const Eigen::MatrixXd& chol_lower() const { return chol_lower_; }
    int dim() const { return static_cast<int>(mean_.size()); }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd covariance_;
    double ridge_;
    Eigen::MatrixXd chol_lower_;  // of covariance + ridge*I
    double log_det_ = 0.0;

    friend double log_density(const GaussianDensity&, const Eigen::VectorXd&);
};

/// Independent per-position categorical distributions over sequences.
struct CategoricalSeqDensity {
    Eigen::MatrixXd probs;  // length x categories, rows sum to 1
    double floor = 0.0;     // every entry >= floor

    int length() const { return static_cast<int>(probs.rows()); }
    int categories() const { return static_cast<int>(probs.cols()); }
};

// Weighted maximum-likelihood fits; weight scale cancels.
GaussianDensity fit_weighted(const Eigen::MatrixXd& samples, const Eigen::VectorXd& weights,
                             double ridge = 1e-4);
CategoricalSeqDensity fit_weighted(const std::vector<std::vector<int>>& samples, int categories,
                                   const Eigen::VectorXd& weights, double floor = 1e-3);

Eigen::MatrixXd sample(const GaussianDensity& density, std::size_t n, std::uint64_t seed);
std::vector<std::vector<int>> sample(const CategoricalSeqDensity& density, std::size_t n,
                                     std::uint64_t seed);

double log_density(const GaussianDensity& density, const Eigen::VectorXd& x);
double log_density(const CategoricalSeqDensity& density, const std::vector<int>& seq);

/// Objective-conditioned sampler: kernel weights over normalized scores select
/// which rows dominate a weighted density refit.
struct ConditionalSampler {
    std::variant<Eigen::MatrixXd, std::vector<std::vector<int>>> designs;
    int categories = 0;  // discrete only
    Eigen::VectorXd scores;  // normalized y, one per design row
    double bandwidth = 0.2;

    bool is_continuous() const { return std::holds_alternative<Eigen::MatrixXd>(designs); }
};

ConditionalSampler fit_conditional(Eigen::MatrixXd designs, Eigen::VectorXd scores,
                                   double bandwidth = 0.2);
ConditionalSampler fit_conditional(std::vector<std::vector<int>> designs, int categories,
                                   Eigen::VectorXd scores, double bandwidth = 0.2);

struct ConditionalSamples {
    std::variant<Eigen::MatrixXd, std::vector<std::vector<int>>> designs;
    bool used_nearest_fallback = false;  // all kernel weights underflowed
};

ConditionalSamples sample_conditional(const ConditionalSampler& sampler, double y_star,
                                      std::size_t n, std::uint64_t seed);

}  // namespace mbo
