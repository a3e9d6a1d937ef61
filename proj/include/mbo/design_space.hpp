#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <variant>
#include <vector>

namespace mbo {

enum class SpaceKind { Continuous, Discrete };

/// A continuous box [lo, hi]^d or a fixed-length categorical sequence space.
class DesignSpace {
public:
    static DesignSpace continuous(Eigen::VectorXd lower, Eigen::VectorXd upper);
    static DesignSpace continuous(int dim, double lo, double hi);
    static DesignSpace discrete(int length, int categories);

    SpaceKind kind() const { return kind_; }
    bool is_continuous() const { return kind_ == SpaceKind::Continuous; }
    bool is_discrete() const { return kind_ == SpaceKind::Discrete; }

    int dim() const;         // continuous only
    int length() const;      // discrete only
    int categories() const;  // discrete only

    // Dimensionality seen by optimizers: dim, or length*categories for the
    // relaxed (logit) representation of a discrete space.
    int relaxed_dim() const;

    const Eigen::VectorXd& lower() const;
    const Eigen::VectorXd& upper() const;

private:
    DesignSpace() = default;

    SpaceKind kind_ = SpaceKind::Continuous;
    Eigen::VectorXd lower_, upper_;  // continuous
    int length_ = 0, categories_ = 0;
};

/// A point in a design space: real vector or categorical sequence.
struct Design {
    std::variant<Eigen::VectorXd, std::vector<int>> values;

    Design() = default;
    explicit Design(Eigen::VectorXd v) : values(std::move(v)) {}
    explicit Design(std::vector<int> s) : values(std::move(s)) {}

    bool is_continuous() const { return std::holds_alternative<Eigen::VectorXd>(values); }
    const Eigen::VectorXd& real() const { return std::get<Eigen::VectorXd>(values); }
    const std::vector<int>& cats() const { return std::get<std::vector<int>>(values); }
};

bool design_valid(const DesignSpace& space, const Design& design);
void require_valid(const DesignSpace& space, const Design& design);

bool operator==(const Design& a, const Design& b);

/// Per-column affine whitening transform fitted to a data matrix.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;  // clamped below at epsilon
    double epsilon = 1e-6;
};

// Population-convention (divisor N) column statistics; stddev clamped at 1e-6.
Normalizer fit_normalizer(const Eigen::MatrixXd& rows);

Eigen::VectorXd normalize(const Normalizer& norm, const Eigen::VectorXd& row);
Eigen::VectorXd denormalize(const Normalizer& norm, const Eigen::VectorXd& row);
Eigen::MatrixXd normalize_rows(const Normalizer& norm, const Eigen::MatrixXd& rows);
Eigen::MatrixXd denormalize_rows(const Normalizer& norm, const Eigen::MatrixXd& rows);

// Relaxation of a discrete design to log-probabilities, flattened
// position-major: mass 1-smoothing on the observed category, the rest spread
// evenly over the alternatives.
Eigen::VectorXd to_logits(const DesignSpace& space, const Design& design, double smoothing = 0.3);

// Per-position argmax decoding; ties break toward the lowest category index.
Design from_logits(const DesignSpace& space, const Eigen::VectorXd& logits);

}  // namespace mbo
