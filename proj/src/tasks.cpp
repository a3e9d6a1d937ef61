#include "mbo/tasks.hpp"

#include "mbo/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mbo {

using nlohmann::json;

Task make_toy_quadratic() {
    Task task;
    task.name = "toy-quadratic";
    task.space = DesignSpace::continuous(2, -2.0, 2.0);
    task.y_max = 0.0;   // optimum at the origin
    task.y_min = -8.0;  // worst corner
    task.dataset_spec = {5000, 50.0, 0};
    task.oracle_fn = [](const Design& d) {
        const auto& x = d.real();
        return -x[0] * x[0] - x[1] * x[1];
    };
    task.sampler_fn = [](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        Eigen::VectorXd x(2);
        x[0] = u(rng);
        x[1] = u(rng);
        return Design(std::move(x));
    };
    return task;
}

Eigen::VectorXd separable_centers(int m, std::uint64_t coeff_seed) {
    if (m < 2) throw std::invalid_argument("make_separable: m must be >= 2");
    std::mt19937_64 rng(coeff_seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd centers(2 * m);
    for (Eigen::Index i = 0; i < centers.size(); ++i) centers[i] = u(rng);
    return centers;
}

Task make_separable(int m, std::uint64_t coeff_seed) {
    const Eigen::VectorXd centers = separable_centers(m, coeff_seed);
    const int dim = 2 * m;

    Task task;
    task.name = "separable";
    task.space = DesignSpace::continuous(dim, -2.0, 2.0);
    task.y_max = 0.0;
    double worst = 0.0;  // farthest corner per coordinate
    for (Eigen::Index i = 0; i < centers.size(); ++i) {
        const double r = 2.0 + std::abs(centers[i]);
        worst -= r * r;
    }
    task.y_min = worst;
    task.dataset_spec = {5000, 100.0, 0};
    task.oracle_fn = [centers](const Design& d) {
        const auto& x = d.real();
        double f = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double r = x[i] - centers[i];
            f -= r * r;
        }
        return f;
    };
    // Each sample is near one partition's optimum and uniform elsewhere, so
    // the concatenated optimum is absent from the data by construction.
    task.sampler_fn = [centers, m](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        std::uniform_int_distribution<int> pick(0, m - 1);
        std::normal_distribution<double> noise(0.0, 0.05);
        Eigen::VectorXd x(2 * m);
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = u(rng);
        const int j = pick(rng);
        x[2 * j] = centers[2 * j] + noise(rng);
        x[2 * j + 1] = centers[2 * j + 1] + noise(rng);
        return Design(std::move(x));
    };
    return task;
}

LookupTables make_lookup_tables(int length, int categories, std::uint64_t coeff_seed) {
    std::mt19937_64 rng(coeff_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    LookupTables t;
    t.unary.resize(length, categories);
    for (int p = 0; p < length; ++p)
        for (int c = 0; c < categories; ++c) t.unary(p, c) = gauss(rng);
    t.pairwise.resize(length - 1);
    for (int p = 0; p + 1 < length; ++p) {
        t.pairwise[p].resize(categories, categories);
        for (int a = 0; a < categories; ++a)
            for (int b = 0; b < categories; ++b) t.pairwise[p](a, b) = gauss(rng);
    }
    return t;
}

namespace {

double lookup_score(const LookupTables& t, const std::vector<int>& seq) {
    double y = 0.0;
    const int length = static_cast<int>(seq.size());
    for (int p = 0; p < length; ++p) y += t.unary(p, seq[p]);
    for (int p = 0; p + 1 < length; ++p) y += t.pairwise[p](seq[p], seq[p + 1]);
    return y;
}

// Index -> sequence with position 0 as the most significant digit, so
// ascending indices enumerate sequences in lexicographic order.
std::vector<int> index_to_sequence(std::uint64_t idx, int length, int categories) {
    std::vector<int> seq(length);
    for (int p = length - 1; p >= 0; --p) {
        seq[p] = static_cast<int>(idx % categories);
        idx /= categories;
    }
    return seq;
}

std::uint64_t space_cardinality(const DesignSpace& space) {
    std::uint64_t total = 1;
    for (int p = 0; p < space.length(); ++p) {
        total *= static_cast<std::uint64_t>(space.categories());
        if (total > kEnumerationCap) return total;
    }
    return total;
}

}  // namespace

Task make_discrete_lookup(LookupTables tables) {
    const int length = static_cast<int>(tables.unary.rows());
    const int categories = static_cast<int>(tables.unary.cols());
    Task task;
    task.name = "discrete-lookup";
    task.space = DesignSpace::discrete(length, categories);
    if (space_cardinality(task.space) > kEnumerationCap)
        throw std::invalid_argument("make_discrete_lookup: space exceeds the enumeration cap");
    task.enumerable = true;
    task.dataset_spec = {0, 50.0, 0};  // pool is the full enumeration

    const std::uint64_t total = space_cardinality(task.space);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::uint64_t i = 0; i < total; ++i) {
        const double y = lookup_score(tables, index_to_sequence(i, length, categories));
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    if (!(lo < hi)) hi = lo + 1.0;  // zeroed-table hook: keep y_min < y_max
    task.y_min = lo;
    task.y_max = hi;
    task.oracle_fn = [t = std::move(tables)](const Design& d) { return lookup_score(t, d.cats()); };
    return task;
}

Task make_discrete_lookup(int length, int categories, std::uint64_t coeff_seed) {
    return make_discrete_lookup(make_lookup_tables(length, categories, coeff_seed));
}

Task make_sensitive_ridge(int dim) {
    if (dim < 1) throw std::invalid_argument("make_sensitive_ridge: dim must be >= 1");
    Task task;
    task.name = "sensitive-ridge";
    task.space = DesignSpace::continuous(dim, -2.0, 2.0);
    task.y_max = static_cast<double>(dim);
    task.y_min = 0.0;
    task.dataset_spec = {5000, 80.0, 0};
    task.oracle_fn = [](const Design& d) {
        const auto& x = d.real();
        double f = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double r = x[i] - 1.0;
            f += std::exp(-r * r / 0.02);
        }
        return f;
    };
    task.sampler_fn = [dim](std::mt19937_64& rng) {
        std::normal_distribution<double> gauss(0.8, 0.15);
        Eigen::VectorXd x(dim);
        for (int i = 0; i < dim; ++i) x[i] = std::clamp(gauss(rng), -2.0, 2.0);
        return Design(std::move(x));
    };
    return task;
}

std::vector<std::string> task_names() {
    return {"toy-quadratic", "separable", "discrete-lookup", "sensitive-ridge"};
}

Task make_task(const std::string& name) {
    if (name == "toy-quadratic") return make_toy_quadratic();
    if (name == "separable") return make_separable(4);
    if (name == "discrete-lookup") return make_discrete_lookup();
    if (name == "sensitive-ridge") return make_sensitive_ridge();
    throw std::invalid_argument("unknown task: " + name);
}

double oracle_evaluate(const Task& task, const Design& design) {
    if (!design_valid(task.space, design))
        throw std::invalid_argument("oracle_evaluate: invalid design for task " + task.name);
    task.oracle_calls->fetch_add(1, std::memory_order_relaxed);
    return task.oracle_fn(design);
}

Dataset build_dataset(const Task& task, std::uint64_t seed) {
    std::vector<Design> pool;
    if (task.sampler_fn) {
        std::mt19937_64 rng(seed);
        pool.reserve(task.dataset_spec.pool_size);
        for (std::size_t i = 0; i < task.dataset_spec.pool_size; ++i)
            pool.push_back(task.sampler_fn(rng));
    } else if (task.enumerable) {
        const std::uint64_t total = space_cardinality(task.space);
        pool.reserve(total);
        for (std::uint64_t i = 0; i < total; ++i)
            pool.emplace_back(index_to_sequence(i, task.space.length(), task.space.categories()));
    } else {
        throw std::logic_error("build_dataset: task has neither sampler nor enumeration");
    }

    const std::size_t n = pool.size();
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = oracle_evaluate(task, pool[i]);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    const double p = task.dataset_spec.keep_percentile;
    if (!(p > 0.0 && p <= 100.0))
        throw std::invalid_argument("build_dataset: keep_percentile must lie in (0,100]");
    std::size_t keep = static_cast<std::size_t>(std::floor(static_cast<double>(n) * p / 100.0 + 1e-9));
    keep = std::clamp<std::size_t>(keep, 2, n);

    Dataset ds;
    ds.task_name = task.name;
    ds.build_seed = seed;
    ds.designs.reserve(keep);
    ds.scores.resize(static_cast<Eigen::Index>(keep));
    for (std::size_t i = 0; i < keep; ++i) {
        ds.designs.push_back(pool[order[i]]);
        ds.scores[static_cast<Eigen::Index>(i)] = scores[order[i]];
    }
    return ds;
}

double score_normalize(const Task& task, double y) {
    return (y - task.y_min) / (task.y_max - task.y_min);
}

std::pair<Design, double> enumerate_optimum(const Task& task) {
    if (!task.enumerable)
        throw std::invalid_argument("enumerate_optimum: task space is not enumerable");
    const std::uint64_t total = space_cardinality(task.space);
    Design best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::uint64_t i = 0; i < total; ++i) {
        Design d(index_to_sequence(i, task.space.length(), task.space.categories()));
        const double y = oracle_evaluate(task, d);
        if (y > best_score) {  // strict: first (lexicographically smallest) maximum wins
            best_score = y;
            best = std::move(d);
        }
    }
    return {best, best_score};
}

namespace {

Design uniform_design(const DesignSpace& space, std::mt19937_64& rng) {
    if (space.is_continuous()) {
        Eigen::VectorXd x(space.dim());
        for (int i = 0; i < space.dim(); ++i) {
            std::uniform_real_distribution<double> u(space.lower()[i], space.upper()[i]);
            x[i] = u(rng);
        }
        return Design(std::move(x));
    }
    std::uniform_int_distribution<int> pick(0, space.categories() - 1);
    std::vector<int> seq(space.length());
    for (int& c : seq) c = pick(rng);
    return Design(std::move(seq));
}

}  // namespace

HistogramPair resample_histogram(const Task& task, const Dataset& dataset, std::size_t n,
                                 int bins, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("resample_histogram: n must be >= 1");
    if (bins < 1) throw std::invalid_argument("resample_histogram: bins must be >= 1");

    std::mt19937_64 rng(seed);
    Eigen::VectorXd resampled(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        resampled[static_cast<Eigen::Index>(i)] = oracle_evaluate(task, uniform_design(task.space, rng));

    double lo = std::min(resampled.minCoeff(), dataset.scores.minCoeff());
    double hi = std::max(resampled.maxCoeff(), dataset.scores.maxCoeff());
    if (!(hi > lo)) hi = lo + 1.0;

    HistogramPair h;
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b)
        h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / bins;
    h.dataset_counts.assign(bins, 0);
    h.resampled_counts.assign(bins, 0);
    const double width = (hi - lo) / bins;
    auto bin_of = [&](double x) {
        const int b = static_cast<int>(std::floor((x - lo) / width));
        return std::clamp(b, 0, bins - 1);
    };
    for (Eigen::Index i = 0; i < dataset.scores.size(); ++i) ++h.dataset_counts[bin_of(dataset.scores[i])];
    for (Eigen::Index i = 0; i < resampled.size(); ++i) ++h.resampled_counts[bin_of(resampled[i])];
    h.dataset_mean = dataset.scores.mean();
    h.resampled_mean = resampled.mean();
    return h;
}

std::vector<double> slice_scan(const Task& task, const Design& at, int coord, double lo,
                               double hi, int steps) {
    if (!task.space.is_continuous())
        throw std::invalid_argument("slice_scan: continuous task required");
    require_valid(task.space, at);
    if (coord < 0 || coord >= task.space.dim())
        throw std::invalid_argument("slice_scan: coordinate out of range");
    if (steps < 2) throw std::invalid_argument("slice_scan: need at least 2 steps");
    std::vector<double> values(steps);
    Eigen::VectorXd x = at.real();
    for (int i = 0; i < steps; ++i) {
        x[coord] = lo + (hi - lo) * static_cast<double>(i) / (steps - 1);
        values[i] = oracle_evaluate(task, Design(Eigen::VectorXd(x)));
    }
    return values;
}

// --- Persistence -------------------------------------------------------------

namespace {

constexpr const char* kDatasetFormat = "mbo-dataset/1";

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json space_to_json(const DesignSpace& space) {
    json j;
    if (space.is_continuous()) {
        j["kind"] = "continuous";
        j["dim"] = space.dim();
        j["lower"] = std::vector<double>(space.lower().data(), space.lower().data() + space.dim());
        j["upper"] = std::vector<double>(space.upper().data(), space.upper().data() + space.dim());
    } else {
        j["kind"] = "discrete";
        j["length"] = space.length();
        j["categories"] = space.categories();
    }
    return j;
}

}  // namespace

void save_dataset(const Task& task, const Dataset& dataset, const std::string& stem) {
    json manifest;
    manifest["format"] = kDatasetFormat;
    manifest["task"] = task.name;
    manifest["space"] = space_to_json(task.space);
    manifest["seed"] = dataset.build_seed;
    manifest["keep_percentile"] = task.dataset_spec.keep_percentile;
    manifest["y_min"] = task.y_min;
    manifest["y_max"] = task.y_max;
    manifest["rows"] = dataset.size();

    std::ofstream mf(stem + ".json");
    if (!mf) throw std::runtime_error("save_dataset: cannot open " + stem + ".json");
    mf << manifest.dump(2) << "\n";

    std::ofstream rf(stem + ".csv");
    if (!rf) throw std::runtime_error("save_dataset: cannot open " + stem + ".csv");
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Design& d = dataset.designs[i];
        if (d.is_continuous()) {
            for (Eigen::Index k = 0; k < d.real().size(); ++k) rf << format_real(d.real()[k]) << ",";
        } else {
            for (int c : d.cats()) rf << c << ",";
        }
        rf << format_real(dataset.scores[static_cast<Eigen::Index>(i)]) << "\n";
    }
}

Dataset load_dataset(const Task& task, const std::string& stem) {
    std::ifstream mf(stem + ".json");
    if (!mf) throw std::runtime_error("load_dataset: cannot open " + stem + ".json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw FormatError(std::string("load_dataset: malformed manifest: ") + e.what());
    }
    if (!manifest.contains("format") || manifest["format"] != kDatasetFormat)
        throw VersionError("load_dataset: unsupported dataset format version");
    if (manifest["task"] != task.name)
        throw FormatError("load_dataset: dataset belongs to task " +
                          manifest["task"].get<std::string>());
    const std::size_t rows = manifest["rows"].get<std::size_t>();

    std::ifstream rf(stem + ".csv");
    if (!rf) throw std::runtime_error("load_dataset: cannot open " + stem + ".csv");
    Dataset ds;
    ds.task_name = task.name;
    ds.build_seed = manifest["seed"].get<std::uint64_t>();
    ds.scores.resize(static_cast<Eigen::Index>(rows));
    std::string line;
    std::size_t i = 0;
    while (std::getline(rf, line)) {
        if (line.empty()) continue;
        if (i >= rows) throw FormatError("load_dataset: more rows than the manifest declares");
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                fields.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw FormatError("load_dataset: non-numeric field in row " + std::to_string(i));
            }
        }
        Design d;
        if (task.space.is_continuous()) {
            if (static_cast<int>(fields.size()) != task.space.dim() + 1)
                throw FormatError("load_dataset: wrong field count in row " + std::to_string(i));
            Eigen::VectorXd x(task.space.dim());
            for (int k = 0; k < task.space.dim(); ++k) x[k] = fields[k];
            d = Design(std::move(x));
        } else {
            if (static_cast<int>(fields.size()) != task.space.length() + 1)
                throw FormatError("load_dataset: wrong field count in row " + std::to_string(i));
            std::vector<int> seq(task.space.length());
            for (int k = 0; k < task.space.length(); ++k) seq[k] = static_cast<int>(fields[k]);
            d = Design(std::move(seq));
        }
        const double stored = fields.back();
        const double fresh = oracle_evaluate(task, d);
        const bool ok = task.space.is_continuous() ? std::abs(fresh - stored) <= 1e-9
                                                   : fresh == stored;
        if (!ok)
            throw FormatError("load_dataset: stored score disagrees with the oracle in row " +
                              std::to_string(i));
        ds.designs.push_back(std::move(d));
        ds.scores[static_cast<Eigen::Index>(i)] = stored;
        ++i;
    }
    if (i != rows) throw FormatError("load_dataset: fewer rows than the manifest declares");
    return ds;
}

}  // namespace mbo
