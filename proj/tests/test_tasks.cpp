#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mbo/errors.hpp"
#include "mbo/tasks.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

using namespace mbo;

namespace {

Design rv(std::initializer_list<double> vals) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double v : vals) x[i++] = v;
    return Design(std::move(x));
}

LookupTables zero_tables(int length, int categories) {
    LookupTables t;
    t.unary = Eigen::MatrixXd::Zero(length, categories);
    t.pairwise.assign(length - 1, Eigen::MatrixXd::Zero(categories, categories));
    return t;
}

}  // namespace

TEST_CASE("toy quadratic oracle and bounds") {
    Task task = make_toy_quadratic();
    CHECK(oracle_evaluate(task, rv({0.0, 0.0})) == 0.0);
    CHECK(oracle_evaluate(task, rv({2.0, 2.0})) == -8.0);
    CHECK(oracle_evaluate(task, rv({1.0, 1.0})) == -2.0);
    CHECK(task.y_max == 0.0);
    CHECK(task.y_min == -8.0);
}

TEST_CASE("toy quadratic truncation excludes the near-origin pool") {
    Task task = make_toy_quadratic();
    Dataset kept = build_dataset(task, 5);
    Task full = task;
    full.dataset_spec.keep_percentile = 100.0;
    Dataset pool = build_dataset(full, 5);  // same seed, same sampler stream

    CHECK(kept.size() == 2500);
    CHECK(pool.size() == 5000);
    CHECK(kept.scores.maxCoeff() < 0.0);
    CHECK(kept.scores.maxCoeff() < pool.scores.maxCoeff());
}

TEST_CASE("separable task oracle composes per-partition wells") {
    const int m = 4;
    Task task = make_separable(m);
    const Eigen::VectorXd centers = separable_centers(m);
    CHECK(oracle_evaluate(task, Design(Eigen::VectorXd(centers))) == doctest::Approx(0.0));

    // Additivity: changing only partition j moves the score by that
    // partition's own residual change.
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Eigen::VectorXd x(2 * m), x2(2 * m);
    for (int i = 0; i < 2 * m; ++i) x[i] = u(rng);
    x2 = x;
    x2[2] = u(rng);
    x2[3] = u(rng);
    auto g = [&](const Eigen::VectorXd& v, int j) {
        const double du = v[2 * j] - centers[2 * j];
        const double dv = v[2 * j + 1] - centers[2 * j + 1];
        return -du * du - dv * dv;
    };
    const double lhs = oracle_evaluate(task, Design(Eigen::VectorXd(x))) -
                       oracle_evaluate(task, Design(Eigen::VectorXd(x2)));
    CHECK(lhs == doctest::Approx(g(x, 1) - g(x2, 1)).epsilon(1e-12));

    // Independent per-partition summation oracle.
    double total = 0.0;
    for (int j = 0; j < m; ++j) total += g(x, j);
    CHECK(oracle_evaluate(task, Design(Eigen::VectorXd(x))) == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("separable dataset never contains the joint optimum") {
    const int m = 4;
    Task task = make_separable(m);
    // Headroom: the optimum scores 0, every sample keeps >= 1 partition random.
    // A Monte-Carlo scan of 50 build seeds put the worst (highest) dataset
    // maximum at -0.109; -0.05 is a safely conservative headroom bound and
    // 0.0 the hard one.
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Dataset ds = build_dataset(task, seed);
        CHECK(ds.size() == 5000);
        CHECK(ds.scores.maxCoeff() < -0.05);
    }
}

TEST_CASE("discrete lookup with zeroed tables scores zero everywhere") {
    Task task = make_discrete_lookup(zero_tables(8, 4));
    CHECK(oracle_evaluate(task, Design(std::vector<int>{0, 1, 2, 3, 0, 1, 2, 3})) == 0.0);
    auto [best, score] = enumerate_optimum(task);
    CHECK(score == 0.0);
    CHECK(best.cats() == std::vector<int>(8, 0));  // lexicographic tie-break
}

TEST_CASE("discrete lookup bounds come from exhaustive enumeration") {
    Task task = make_discrete_lookup();
    const LookupTables tables = make_lookup_tables(8, 4, 0x70ab1e5);

    // Independent enumeration with an independently coded scoring loop.
    double best = -1e300, worst = 1e300;
    for (std::uint32_t idx = 0; idx < (1u << 16); ++idx) {
        int seq[8];
        std::uint32_t v = idx;
        for (int p = 0; p < 8; ++p) {
            seq[p] = static_cast<int>(v & 3u);
            v >>= 2;
        }
        double y = 0.0;
        for (int p = 0; p < 8; ++p) y += tables.unary(p, seq[p]);
        for (int p = 0; p < 7; ++p) y += tables.pairwise[p](seq[p], seq[p + 1]);
        best = std::max(best, y);
        worst = std::min(worst, y);
    }
    CHECK(task.y_max == doctest::Approx(best).epsilon(1e-12));
    CHECK(task.y_min == doctest::Approx(worst).epsilon(1e-12));

    auto [arg, score] = enumerate_optimum(task);
    CHECK(score == task.y_max);

    Dataset ds = build_dataset(task, 0);
    CHECK(ds.size() == 32768);  // bottom half of 65536
    CHECK(ds.scores.maxCoeff() < task.y_max);
}

TEST_CASE("enumerate_optimum on a hand-set 2x2 task") {
    LookupTables t = zero_tables(2, 2);
    t.unary << 0.5, -0.2, 0.1, 0.3;
    t.pairwise[0] << 0.0, 1.0, 2.0, -1.0;
    Task task = make_discrete_lookup(t);

    // All four sequences by hand: 00 -> 0.6, 01 -> 1.8, 10 -> 1.9, 11 -> -0.9.
    CHECK(oracle_evaluate(task, Design(std::vector<int>{0, 0})) == doctest::Approx(0.6));
    CHECK(oracle_evaluate(task, Design(std::vector<int>{0, 1})) == doctest::Approx(1.8));
    CHECK(oracle_evaluate(task, Design(std::vector<int>{1, 0})) == doctest::Approx(1.9));
    CHECK(oracle_evaluate(task, Design(std::vector<int>{1, 1})) == doctest::Approx(-0.9));
    auto [best, score] = enumerate_optimum(task);
    CHECK(best.cats() == std::vector<int>{1, 0});
    CHECK(score == doctest::Approx(1.9));
    CHECK(score == task.y_max);
}

TEST_CASE("enumerate_optimum rejects non-enumerable tasks") {
    CHECK_THROWS_AS(enumerate_optimum(make_toy_quadratic()), std::invalid_argument);
}

TEST_CASE("sensitive ridge peaks at the all-ones design") {
    const int dim = 16;
    Task task = make_sensitive_ridge(dim);
    Eigen::VectorXd peak = Eigen::VectorXd::Ones(dim);
    CHECK(oracle_evaluate(task, Design(Eigen::VectorXd(peak))) == doctest::Approx(dim));

    Eigen::VectorXd shifted = peak;
    shifted[3] += 0.5;
    const double y = oracle_evaluate(task, Design(Eigen::VectorXd(shifted)));
    CHECK(y == doctest::Approx(dim - 1).epsilon(4e-6));
    CHECK(dim - y < 1.0 + 4e-6);
}

TEST_CASE("sensitive ridge slices collapse within 0.2 of the peak") {
    Task task = make_sensitive_ridge(16);
    Dataset ds = build_dataset(task, 3);
    const Design& sample = ds.designs[ds.size() / 2];

    const int steps = 401;
    const auto values = slice_scan(task, sample, 0, -2.0, 2.0, steps);
    const double lo = *std::min_element(values.begin(), values.end());
    const double hi = *std::max_element(values.begin(), values.end());
    const double range = hi - lo;
    // Peak of the slice sits at coordinate value 1.
    const int peak_idx =
        static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
    const double step_width = 4.0 / (steps - 1);
    int window = static_cast<int>(std::round(0.2 / step_width));
    double min_near = values[peak_idx];
    for (int i = std::max(0, peak_idx - window);
         i <= std::min(steps - 1, peak_idx + window); ++i)
        min_near = std::min(min_near, values[i]);
    CHECK(values[peak_idx] - min_near >= 0.5 * range);
}

TEST_CASE("build_dataset keeps the requested bottom fraction deterministically") {
    Task task = make_toy_quadratic();

    Task full = task;
    full.dataset_spec.keep_percentile = 100.0;
    Dataset pool = build_dataset(full, 9);
    CHECK(pool.size() == full.dataset_spec.pool_size);

    Dataset half = build_dataset(task, 9);
    const double pool_median = [&] {
        Eigen::VectorXd s = pool.scores;
        std::sort(s.data(), s.data() + s.size());
        return s[s.size() / 2];
    }();
    for (Eigen::Index i = 0; i < half.scores.size(); ++i)
        CHECK(half.scores[i] <= pool_median);

    Dataset again = build_dataset(task, 9);
    REQUIRE(again.size() == half.size());
    for (std::size_t i = 0; i < half.size(); ++i) {
        CHECK(again.designs[i] == half.designs[i]);
        CHECK(again.scores[static_cast<Eigen::Index>(i)] ==
              half.scores[static_cast<Eigen::Index>(i)]);
    }
}

TEST_CASE("truncation maximum is monotone in the keep percentile") {
    Task task = make_toy_quadratic();
    double prev = -1e300;
    double pool_max = 0.0;
    for (double p : {20.0, 50.0, 80.0, 100.0}) {
        Task t = task;
        t.dataset_spec.keep_percentile = p;
        Dataset ds = build_dataset(t, 4);
        CHECK(ds.scores.maxCoeff() >= prev);
        prev = ds.scores.maxCoeff();
        if (p == 100.0) pool_max = ds.scores.maxCoeff();
    }
    CHECK(prev == pool_max);
}

TEST_CASE("oracle evaluation is deterministic and validates designs") {
    Task task = make_toy_quadratic();
    const Design d = rv({0.3, -1.2});
    CHECK(oracle_evaluate(task, d) == oracle_evaluate(task, d));
    CHECK_THROWS_AS(oracle_evaluate(task, rv({1.0})), std::invalid_argument);
    CHECK_THROWS_AS(oracle_evaluate(task, Design(std::vector<int>{0, 0})), std::invalid_argument);

    Task disc = make_discrete_lookup(4, 3, 77);
    CHECK_THROWS_AS(oracle_evaluate(disc, Design(std::vector<int>{0, 1, 2, 3})),
                    std::invalid_argument);
}

TEST_CASE("score_normalize is the fractional distance between the bounds") {
    Task task = make_toy_quadratic();
    CHECK(score_normalize(task, task.y_min) == 0.0);
    CHECK(score_normalize(task, task.y_max) == 1.0);
    Task t = task;
    t.y_min = 0.0;
    t.y_max = 10.0;
    CHECK(score_normalize(t, 5.0) == doctest::Approx(0.5));
    // Values outside the bounds map outside [0,1].
    CHECK(score_normalize(t, 12.0) > 1.0);
    CHECK(score_normalize(t, -1.0) < 0.0);
}

TEST_CASE("resample histogram shares edges and reproduces the left skew") {
    Task toy = make_toy_quadratic();
    Dataset ds = build_dataset(toy, 2);
    HistogramPair h = resample_histogram(toy, ds, 500, 20, 12);
    std::size_t dataset_total = 0, resampled_total = 0;
    for (auto c : h.dataset_counts) dataset_total += c;
    for (auto c : h.resampled_counts) resampled_total += c;
    CHECK(dataset_total == ds.size());
    CHECK(resampled_total == 500);
    CHECK(h.edges.size() == 21);
    for (Eigen::Index i = 1; i < h.edges.size(); ++i) CHECK(h.edges[i] > h.edges[i - 1]);
    CHECK(h.resampled_mean < 0.0);

    Task ridge = make_sensitive_ridge(16);
    Dataset rds = build_dataset(ridge, 2);
    HistogramPair rh = resample_histogram(ridge, rds, 3200, 40, 12);
    CHECK(rh.resampled_mean < rh.dataset_mean);
}

TEST_CASE("dataset persistence round-trips and self-verifies") {
    Task task = make_toy_quadratic();
    Dataset ds = build_dataset(task, 21);
    const std::string stem = "/tmp/mbo_test_dataset";
    save_dataset(task, ds, stem);
    Dataset loaded = load_dataset(task, stem);
    REQUIRE(loaded.size() == ds.size());
    CHECK(loaded.build_seed == ds.build_seed);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(loaded.designs[i] == ds.designs[i]);
        CHECK(loaded.scores[static_cast<Eigen::Index>(i)] ==
              ds.scores[static_cast<Eigen::Index>(i)]);
    }

    Task disc = make_discrete_lookup(4, 3, 5);
    Dataset dds = build_dataset(disc, 0);
    save_dataset(disc, dds, stem);
    Dataset dloaded = load_dataset(disc, stem);
    CHECK(dloaded.size() == dds.size());

    // Tampered score must be rejected by the oracle check.
    save_dataset(task, ds, stem);
    {
        std::ifstream in(stem + ".csv");
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        in.close();
        content.replace(content.find(','), 1, ",9e9,");  // corrupt the first row
        std::ofstream out(stem + ".csv");
        out << content;
    }
    CHECK_THROWS_AS(load_dataset(task, stem), FormatError);

    // Truncated manifest fails as malformed, not as a crash.
    {
        std::ofstream out(stem + ".json");
        out << "{\"format\": \"mbo-data";
    }
    CHECK_THROWS_AS(load_dataset(task, stem), FormatError);
}
