#include "mbo/design_space.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mbo {

DesignSpace DesignSpace::continuous(Eigen::VectorXd lower, Eigen::VectorXd upper) {
    if (lower.size() == 0 || lower.size() != upper.size())
        throw std::invalid_argument("continuous space: bounds must be non-empty and equal length");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
        if (!(lower[i] < upper[i]))
            throw std::invalid_argument("continuous space: lo < hi required on dimension " +
                                        std::to_string(i));
    DesignSpace s;
    s.kind_ = SpaceKind::Continuous;
    s.lower_ = std::move(lower);
    s.upper_ = std::move(upper);
    return s;
}

DesignSpace DesignSpace::continuous(int dim, double lo, double hi) {
    if (dim < 1) throw std::invalid_argument("continuous space: dim must be positive");
    return continuous(Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi));
}

DesignSpace DesignSpace::discrete(int length, int categories) {
    if (length < 1) throw std::invalid_argument("discrete space: length must be >= 1");
    if (categories < 2) throw std::invalid_argument("discrete space: categories must be >= 2");
    DesignSpace s;
    s.kind_ = SpaceKind::Discrete;
    s.length_ = length;
    s.categories_ = categories;
    return s;
}

int DesignSpace::dim() const {
    if (!is_continuous()) throw std::logic_error("dim() on a discrete space");
    return static_cast<int>(lower_.size());
}

int DesignSpace::length() const {
    if (!is_discrete()) throw std::logic_error("length() on a continuous space");
    return length_;
}

int DesignSpace::categories() const {
    if (!is_discrete()) throw std::logic_error("categories() on a continuous space");
    return categories_;
}

int DesignSpace::relaxed_dim() const {
    return is_continuous() ? dim() : length_ * categories_;
}

const Eigen::VectorXd& DesignSpace::lower() const {
    if (!is_continuous()) throw std::logic_error("lower() on a discrete space");
    return lower_;
}

const Eigen::VectorXd& DesignSpace::upper() const {
    if (!is_continuous()) throw std::logic_error("upper() on a discrete space");
    return upper_;
}

bool design_valid(const DesignSpace& space, const Design& design) {
    if (space.is_continuous()) {
        return design.is_continuous() && design.real().size() == space.dim();
    }
    if (design.is_continuous()) return false;
    const auto& s = design.cats();
    if (static_cast<int>(s.size()) != space.length()) return false;
    for (int c : s)
        if (c < 0 || c >= space.categories()) return false;
    return true;
}

void require_valid(const DesignSpace& space, const Design& design) {
    if (!design_valid(space, design))
        throw std::invalid_argument("design does not match its design space");
}

bool operator==(const Design& a, const Design& b) {
    if (a.is_continuous() != b.is_continuous()) return false;
    if (a.is_continuous()) return a.real().size() == b.real().size() && a.real() == b.real();
    return a.cats() == b.cats();
}

Normalizer fit_normalizer(const Eigen::MatrixXd& rows) {
    const Eigen::Index n = rows.rows();
    if (n < 2) throw std::invalid_argument("fit_normalizer: need at least 2 rows");
    Normalizer norm;
    norm.mean = rows.colwise().mean();
    Eigen::MatrixXd centered = rows.rowwise() - norm.mean.transpose();
    norm.stddev = (centered.array().square().colwise().sum() / static_cast<double>(n))
                      .sqrt()
                      .matrix()
                      .transpose();
    norm.stddev = norm.stddev.cwiseMax(norm.epsilon);
    return norm;
}

static void check_len(const Normalizer& norm, const Eigen::VectorXd& row) {
    if (row.size() != norm.mean.size())
        throw std::invalid_argument("normalizer: row length mismatch");
}

Eigen::VectorXd normalize(const Normalizer& norm, const Eigen::VectorXd& row) {
    check_len(norm, row);
    return (row - norm.mean).cwiseQuotient(norm.stddev);
}

Eigen::VectorXd denormalize(const Normalizer& norm, const Eigen::VectorXd& row) {
    check_len(norm, row);
    return row.cwiseProduct(norm.stddev) + norm.mean;
}

Eigen::MatrixXd normalize_rows(const Normalizer& norm, const Eigen::MatrixXd& rows) {
    if (rows.cols() != norm.mean.size())
        throw std::invalid_argument("normalizer: column count mismatch");
    return (rows.rowwise() - norm.mean.transpose()).array().rowwise() /
           norm.stddev.transpose().array();
}

Eigen::MatrixXd denormalize_rows(const Normalizer& norm, const Eigen::MatrixXd& rows) {
    if (rows.cols() != norm.mean.size())
        throw std::invalid_argument("normalizer: column count mismatch");
    return (rows.array().rowwise() * norm.stddev.transpose().array()).matrix().rowwise() +
           norm.mean.transpose();
}

Eigen::VectorXd to_logits(const DesignSpace& space, const Design& design, double smoothing) {
    if (!space.is_discrete()) throw std::invalid_argument("to_logits: discrete space required");
    require_valid(space, design);
    if (!(smoothing > 0.0 && smoothing < 1.0))
        throw std::invalid_argument("to_logits: smoothing must lie in (0,1)");
    const int length = space.length();
    const int cats = space.categories();
    const double on = std::log(1.0 - smoothing);
    const double off = std::log(smoothing / (cats - 1));
    Eigen::VectorXd logits = Eigen::VectorXd::Constant(length * cats, off);
    const auto& seq = design.cats();
    for (int p = 0; p < length; ++p) logits[p * cats + seq[p]] = on;
    return logits;
}

Design from_logits(const DesignSpace& space, const Eigen::VectorXd& logits) {
    if (!space.is_discrete()) throw std::invalid_argument("from_logits: discrete space required");
    const int length = space.length();
    const int cats = space.categories();
    if (logits.size() != static_cast<Eigen::Index>(length) * cats)
        throw std::invalid_argument("from_logits: logits length must be length*categories");
    std::vector<int> seq(length, 0);
    for (int p = 0; p < length; ++p) {
        int best = 0;
        double best_value = logits[p * cats];
        for (int c = 1; c < cats; ++c) {
            const double v = logits[p * cats + c];
            if (v > best_value) {  // strict: ties keep the lowest index
                best_value = v;
                best = c;
            }
        }
        seq[p] = best;
    }
    return Design(std::move(seq));
}

}  // namespace mbo
