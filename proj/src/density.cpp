#include "mbo/density.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace mbo {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

GaussianDensity::GaussianDensity(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double ridge)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), ridge_(ridge) {
    if (covariance_.rows() != covariance_.cols() || covariance_.rows() != mean_.size())
        throw std::invalid_argument("GaussianDensity: covariance shape mismatch");
    if (!covariance_.isApprox(covariance_.transpose(), 1e-12))
        throw std::invalid_argument("GaussianDensity: covariance must be symmetric");
    if (ridge_ <= 0.0) throw std::invalid_argument("GaussianDensity: ridge must be positive");
    Eigen::MatrixXd effective =
        covariance_ + ridge_ * Eigen::MatrixXd::Identity(dim(), dim());
    Eigen::LLT<Eigen::MatrixXd> llt(effective);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("GaussianDensity: Cholesky failed despite ridge");
    chol_lower_ = llt.matrixL();
    log_det_ = 2.0 * chol_lower_.diagonal().array().log().sum();
}

GaussianDensity fit_weighted(const Eigen::MatrixXd& samples, const Eigen::VectorXd& weights,
                             double ridge) {
    const Eigen::Index n = samples.rows();
    if (n < 1) throw std::invalid_argument("fit_weighted: no samples");
    if (weights.size() != n) throw std::invalid_argument("fit_weighted: weight count mismatch");
    if (!weights.allFinite() || (weights.array() < 0.0).any())
        throw std::invalid_argument("fit_weighted: weights must be finite and nonnegative");
    const double total = weights.sum();
    if (total <= 0.0) throw std::invalid_argument("fit_weighted: weights must not be all zero");

    const Eigen::VectorXd mean = samples.transpose() * weights / total;
    Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
    Eigen::MatrixXd cov =
        centered.transpose() * weights.asDiagonal() * centered / total;
    cov = 0.5 * (cov + cov.transpose());  // restore exact symmetry
    return GaussianDensity(mean, std::move(cov), ridge);
}

CategoricalSeqDensity fit_weighted(const std::vector<std::vector<int>>& samples, int categories,
                                   const Eigen::VectorXd& weights, double floor) {
    const std::size_t n = samples.size();
    if (n < 1) throw std::invalid_argument("fit_weighted: no samples");
    if (static_cast<std::size_t>(weights.size()) != n)
        throw std::invalid_argument("fit_weighted: weight count mismatch");
    if (!weights.allFinite() || (weights.array() < 0.0).any())
        throw std::invalid_argument("fit_weighted: weights must be finite and nonnegative");
    const double total = weights.sum();
    if (total <= 0.0) throw std::invalid_argument("fit_weighted: weights must not be all zero");
    if (categories < 2) throw std::invalid_argument("fit_weighted: categories must be >= 2");
    const int length = static_cast<int>(samples.front().size());
    if (floor < 0.0 || floor * categories >= 1.0)
        throw std::invalid_argument("fit_weighted: floor out of range");

    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(length, categories);
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<int>(samples[i].size()) != length)
            throw std::invalid_argument("fit_weighted: ragged sequences");
        for (int p = 0; p < length; ++p) {
            const int c = samples[i][p];
            if (c < 0 || c >= categories)
                throw std::invalid_argument("fit_weighted: category out of range");
            probs(p, c) += weights[static_cast<Eigen::Index>(i)];
        }
    }
    probs /= total;
    // Mix toward uniform just enough that every entry lands exactly at or
    // above the floor while rows still sum to 1.
    if (floor > 0.0) probs = (1.0 - categories * floor) * probs.array() + floor;
    return CategoricalSeqDensity{std::move(probs), floor};
}

Eigen::MatrixXd sample(const GaussianDensity& density, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int d = density.dim();
    Eigen::MatrixXd z(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (int j = 0; j < d; ++j) z(i, j) = gauss(rng);
    Eigen::MatrixXd out = z * density.chol_lower().transpose();
    out.rowwise() += density.mean().transpose();
    return out;
}

std::vector<std::vector<int>> sample(const CategoricalSeqDensity& density, std::size_t n,
                                     std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<int>> out(n, std::vector<int>(density.length()));
    for (std::size_t i = 0; i < n; ++i) {
        for (int p = 0; p < density.length(); ++p) {
            const double r = u(rng);
            double acc = 0.0;
            int c = density.categories() - 1;  // inverse CDF, last bucket catches roundoff
            for (int k = 0; k < density.categories(); ++k) {
                acc += density.probs(p, k);
                if (r < acc) {
                    c = k;
                    break;
                }
            }
            out[i][p] = c;
        }
    }
    return out;
}

double log_density(const GaussianDensity& density, const Eigen::VectorXd& x) {
    if (x.size() != density.dim()) throw std::invalid_argument("log_density: length mismatch");
    const Eigen::VectorXd centered = x - density.mean();
    const Eigen::VectorXd solved =
        density.chol_lower().triangularView<Eigen::Lower>().solve(centered);
    return -0.5 * (density.dim() * kLog2Pi + density.log_det_ + solved.squaredNorm());
}

double log_density(const CategoricalSeqDensity& density, const std::vector<int>& seq) {
    if (static_cast<int>(seq.size()) != density.length())
        throw std::invalid_argument("log_density: sequence length mismatch");
    double lp = 0.0;
    for (int p = 0; p < density.length(); ++p) {
        const int c = seq[p];
        if (c < 0 || c >= density.categories())
            throw std::invalid_argument("log_density: category out of range");
        lp += std::log(density.probs(p, c));
    }
    return lp;
}

ConditionalSampler fit_conditional(Eigen::MatrixXd designs, Eigen::VectorXd scores,
                                   double bandwidth) {
    if (designs.rows() < 2) throw std::invalid_argument("fit_conditional: need >= 2 rows");
    if (designs.rows() != scores.size())
        throw std::invalid_argument("fit_conditional: score count mismatch");
    if (bandwidth <= 0.0) throw std::invalid_argument("fit_conditional: bandwidth must be > 0");
    return ConditionalSampler{std::move(designs), 0, std::move(scores), bandwidth};
}

ConditionalSampler fit_conditional(std::vector<std::vector<int>> designs, int categories,
                                   Eigen::VectorXd scores, double bandwidth) {
    if (designs.size() < 2) throw std::invalid_argument("fit_conditional: need >= 2 rows");
    if (static_cast<Eigen::Index>(designs.size()) != scores.size())
        throw std::invalid_argument("fit_conditional: score count mismatch");
    if (bandwidth <= 0.0) throw std::invalid_argument("fit_conditional: bandwidth must be > 0");
    return ConditionalSampler{std::move(designs), categories, std::move(scores), bandwidth};
}

ConditionalSamples sample_conditional(const ConditionalSampler& sampler, double y_star,
                                      std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_conditional: n must be >= 1");
    const Eigen::Index rows = sampler.scores.size();
    Eigen::VectorXd weights(rows);
    const double two_bw2 = 2.0 * sampler.bandwidth * sampler.bandwidth;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double dy = sampler.scores[i] - y_star;
        weights[i] = std::exp(-dy * dy / two_bw2);
    }

    ConditionalSamples out;
    if (weights.sum() <= 0.0) {
        // Every kernel weight underflowed: fall back to the 32 nearest-y rows.
        out.used_nearest_fallback = true;
        std::vector<Eigen::Index> order(rows);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return std::abs(sampler.scores[a] - y_star) < std::abs(sampler.scores[b] - y_star);
        });
        weights.setZero();
        const Eigen::Index keep = std::min<Eigen::Index>(32, rows);
        for (Eigen::Index i = 0; i < keep; ++i) weights[order[i]] = 1.0;
    }

    if (sampler.is_continuous()) {
        const auto& X = std::get<Eigen::MatrixXd>(sampler.designs);
        out.designs = sample(fit_weighted(X, weights), n, seed);
    } else {
        const auto& seqs = std::get<std::vector<std::vector<int>>>(sampler.designs);
        out.designs = sample(fit_weighted(seqs, sampler.categories, weights), n, seed);
    }
    return out;
}

}  // namespace mbo
