#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mbo/design_space.hpp"

#include <cmath>
#include <random>

using namespace mbo;

TEST_CASE("fit_normalizer matches hand statistics") {
    Eigen::MatrixXd rows(2, 1);
    rows << 0.0, 2.0;
    Normalizer n = fit_normalizer(rows);
    CHECK(n.mean[0] == doctest::Approx(1.0));
    CHECK(n.stddev[0] == doctest::Approx(1.0));
}

TEST_CASE("fit_normalizer clamps zero-variance columns") {
    Eigen::MatrixXd rows(3, 1);
    rows << 3.0, 3.0, 3.0;
    Normalizer n = fit_normalizer(rows);
    CHECK(n.mean[0] == doctest::Approx(3.0));
    CHECK(n.stddev[0] == 1e-6);
}

TEST_CASE("fit_normalizer agrees with an independent statistics routine") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd rows(1000, 2);
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(i, j) = gauss(rng);

    // Independent accumulation, population convention.
    for (int j = 0; j < 2; ++j) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < rows.rows(); ++i) sum += rows(i, j);
        const double mean = sum / rows.rows();
        double sq = 0.0;
        for (Eigen::Index i = 0; i < rows.rows(); ++i) sq += (rows(i, j) - mean) * (rows(i, j) - mean);
        const double stddev = std::sqrt(sq / rows.rows());

        Normalizer n = fit_normalizer(rows);
        CHECK(n.mean[j] == doctest::Approx(mean).epsilon(1e-12));
        CHECK(n.stddev[j] == doctest::Approx(stddev).epsilon(1e-12));
        CHECK(std::abs(n.mean[j]) < 0.1);
        CHECK(std::abs(n.stddev[j] - 1.0) < 0.1);
    }
}

TEST_CASE("fit_normalizer rejects fewer than two rows") {
    Eigen::MatrixXd rows(1, 3);
    rows.setZero();
    CHECK_THROWS_AS(fit_normalizer(rows), std::invalid_argument);
}

TEST_CASE("normalize applies the whitening formula") {
    Normalizer n;
    n.mean = Eigen::VectorXd::Constant(1, 1.0);
    n.stddev = Eigen::VectorXd::Constant(1, 2.0);
    Eigen::VectorXd row(1);
    row << 3.0;
    CHECK(normalize(n, row)[0] == doctest::Approx(1.0));
    CHECK(normalize(n, n.mean).isZero(0.0));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    Normalizer m;
    m.mean.resize(4);
    m.stddev.resize(4);
    Eigen::VectorXd x(4);
    for (int i = 0; i < 4; ++i) {
        m.mean[i] = u(rng);
        m.stddev[i] = std::abs(u(rng)) + 0.1;
        x[i] = u(rng);
    }
    const Eigen::VectorXd out = normalize(m, x);
    for (int i = 0; i < 4; ++i)
        CHECK(out[i] == doctest::Approx((x[i] - m.mean[i]) / m.stddev[i]).epsilon(1e-12));

    Eigen::VectorXd wrong(3);
    wrong.setZero();
    CHECK_THROWS_AS(normalize(m, wrong), std::invalid_argument);
}

TEST_CASE("denormalize inverts normalize") {
    Normalizer n;
    n.mean = Eigen::VectorXd::Constant(1, 1.0);
    n.stddev = Eigen::VectorXd::Constant(1, 2.0);
    Eigen::VectorXd one(1);
    one << 1.0;
    CHECK(denormalize(n, one)[0] == doctest::Approx(3.0));
    CHECK(denormalize(n, Eigen::VectorXd::Zero(1))[0] == doctest::Approx(1.0));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    Eigen::MatrixXd rows(50, 3);
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(i, j) = u(rng);
    Normalizer m = fit_normalizer(rows);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd v(3);
        for (int j = 0; j < 3; ++j) v[j] = u(rng);
        CHECK((denormalize(m, normalize(m, v)) - v).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((normalize(m, denormalize(m, v)) - v).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("normalized datasets have unit statistics") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-3.0, 9.0);
    Eigen::MatrixXd rows(257, 5);
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(i, j) = u(rng);
    Normalizer n = fit_normalizer(rows);
    Eigen::MatrixXd z = normalize_rows(n, rows);
    for (int j = 0; j < 5; ++j) {
        const double mean = z.col(j).mean();
        const double stddev = std::sqrt(
            (z.col(j).array() - mean).square().sum() / static_cast<double>(z.rows()));
        CHECK(std::abs(mean) <= 1e-9);
        CHECK(std::abs(stddev - 1.0) <= 1e-9);
    }
}

TEST_CASE("to_logits places smoothed mass on the observed category") {
    DesignSpace binary = DesignSpace::discrete(1, 2);
    const Eigen::VectorXd logits = to_logits(binary, Design(std::vector<int>{0}), 0.5);
    CHECK(logits[0] == doctest::Approx(std::log(0.5)));
    CHECK(logits[1] == doctest::Approx(std::log(0.5)));

    DesignSpace quad = DesignSpace::discrete(1, 4);
    const Eigen::VectorXd l4 = to_logits(quad, Design(std::vector<int>{0}), 0.3);
    CHECK(l4[0] == doctest::Approx(std::log(0.7)));
    for (int c = 1; c < 4; ++c) CHECK(l4[c] == doctest::Approx(std::log(0.1)));

    CHECK_THROWS_AS(to_logits(quad, Design(std::vector<int>{0}), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(to_logits(quad, Design(std::vector<int>{0}), 1.0), std::invalid_argument);
}

TEST_CASE("to_logits rows are valid log-distributions") {
    DesignSpace space = DesignSpace::discrete(6, 4);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(0, 3);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<int> seq(6);
        for (int& c : seq) c = pick(rng);
        const Eigen::VectorXd logits = to_logits(space, Design(seq), 0.3);
        for (int p = 0; p < 6; ++p) {
            double sum = 0.0;
            for (int c = 0; c < 4; ++c) sum += std::exp(logits[p * 4 + c]);
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("from_logits decodes by per-position argmax with low-index ties") {
    DesignSpace space = DesignSpace::discrete(3, 4);
    CHECK(from_logits(space, Eigen::VectorXd::Zero(12)).cats() == std::vector<int>{0, 0, 0});

    Eigen::VectorXd logits = Eigen::VectorXd::Constant(12, -5.0);
    logits[2] = 1.0;   // position 0 -> category 2
    logits[4] = 0.5;   // position 1 -> category 0
    logits[11] = 2.0;  // position 2 -> category 3
    CHECK(from_logits(space, logits).cats() == std::vector<int>{2, 0, 3});

    CHECK_THROWS_AS(from_logits(space, Eigen::VectorXd::Zero(11)), std::invalid_argument);
}

TEST_CASE("from_logits agrees with a brute-force per-position scan") {
    DesignSpace space = DesignSpace::discrete(5, 3);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd logits(15);
        for (int i = 0; i < 15; ++i) logits[i] = gauss(rng);
        const std::vector<int> decoded = from_logits(space, logits).cats();
        for (int p = 0; p < 5; ++p) {
            int best = 0;
            for (int c = 1; c < 3; ++c)
                if (logits[p * 3 + c] > logits[p * 3 + best]) best = c;
            CHECK(decoded[p] == best);
        }
    }
}

TEST_CASE("logit round trip is exact for every length-8 4-category design") {
    DesignSpace space = DesignSpace::discrete(8, 4);
    for (std::uint32_t idx = 0; idx < (1u << 16); ++idx) {
        std::vector<int> seq(8);
        std::uint32_t v = idx;
        for (int p = 0; p < 8; ++p) {
            seq[p] = static_cast<int>(v & 3u);
            v >>= 2;
        }
        const Design d(seq);
        CHECK(from_logits(space, to_logits(space, d, 0.3)).cats() == seq);
    }
}

TEST_CASE("design validity checks shape and category range") {
    DesignSpace cont = DesignSpace::continuous(2, -1.0, 1.0);
    DesignSpace disc = DesignSpace::discrete(3, 2);
    CHECK(design_valid(cont, Design(Eigen::VectorXd::Zero(2))));
    CHECK_FALSE(design_valid(cont, Design(Eigen::VectorXd::Zero(3))));
    CHECK_FALSE(design_valid(cont, Design(std::vector<int>{0, 0})));
    CHECK(design_valid(disc, Design(std::vector<int>{0, 1, 1})));
    CHECK_FALSE(design_valid(disc, Design(std::vector<int>{0, 2, 0})));
    CHECK_FALSE(design_valid(disc, Design(std::vector<int>{0, 1})));
}

TEST_CASE("space constructors enforce invariants") {
    CHECK_THROWS_AS(DesignSpace::continuous(2, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(DesignSpace::discrete(0, 4), std::invalid_argument);
    CHECK_THROWS_AS(DesignSpace::discrete(4, 1), std::invalid_argument);
    CHECK(DesignSpace::discrete(8, 4).relaxed_dim() == 32);
    CHECK(DesignSpace::continuous(5, 0.0, 1.0).relaxed_dim() == 5);
}
