#include "mbo/harness.hpp"

#include "mbo/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mbo {

using nlohmann::json;

// --- Method registry -----------------------------------------------------------

std::vector<std::string> method_names() {
    return {"dataset-best", "grad", "grad-min", "grad-mean", "cma-es", "reinforce",
            "cbas",         "auto-cbas", "mins", "bo-qei", "coms"};
}

MethodConfig default_method_config(const std::string& method) {
    if (method == "grad") return GradConfig{ReduceMode::Single};
    if (method == "grad-min") return GradConfig{ReduceMode::Min};
    if (method == "grad-mean") return GradConfig{ReduceMode::Mean};
    if (method == "cma-es") return CmaEsConfig{};
    if (method == "reinforce") return ReinforceConfig{};
    if (method == "cbas") return CbasConfig{};
    if (method == "auto-cbas") {
        CbasConfig cfg;
        cfg.autofocus = true;
        return cfg;
    }
    if (method == "mins") return MinsConfig{};
    if (method == "bo-qei") return BoQeiConfig{};
    if (method == "coms") return ComsConfig{};
    if (method == "dataset-best") return DatasetBestConfig{};
    throw std::invalid_argument("unknown method: " + method);
}

namespace {

int parse_int(const std::string& v) { return std::stoi(v); }
double parse_double(const std::string& v) { return std::stod(v); }

bool apply_train_option(TrainConfig& train, const std::string& key, const std::string& value) {
    if (key == "epochs") {
        train.epochs = parse_int(value);
    } else if (key == "train_batch") {
        train.batch = parse_int(value);
    } else if (key == "step_size") {
        train.step_size = parse_double(value);
    } else if (key == "val_fraction") {
        train.val_fraction = parse_double(value);
    } else if (key == "hidden") {
        std::vector<int> sizes;
        std::stringstream ss(value);
        std::string tok;
        while (std::getline(ss, tok, ',')) sizes.push_back(parse_int(tok));
        if (sizes.empty()) throw std::invalid_argument("hidden: need at least one layer size");
        train.hidden = std::move(sizes);
    } else {
        return false;
    }
    return true;
}

[[noreturn]] void unknown_option(const std::string& key) {
    throw std::invalid_argument("unknown method option: " + key);
}

}  // namespace

void apply_method_option(MethodConfig& cfg, const std::string& key, const std::string& value) {
    std::visit(
        [&](auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (!std::is_same_v<T, DatasetBestConfig>) {
                if (apply_train_option(c.train, key, value)) return;
            }
            if constexpr (std::is_same_v<T, GradConfig>) {
                if (key == "steps") c.steps = parse_int(value);
                else if (key == "lr") c.lr = parse_double(value);
                else if (key == "ensemble") c.ensemble = parse_int(value);
                else if (key == "mode") c.mode = reduce_mode_from_string(value);
                else unknown_option(key);
            } else if constexpr (std::is_same_v<T, CmaEsConfig>) {
                if (key == "sigma") c.sigma = parse_double(value);
                else if (key == "population") c.population = parse_int(value);
                else if (key == "iterations") c.iterations = parse_int(value);
                else if (key == "elite_fraction") c.elite_fraction = parse_double(value);
                else unknown_option(key);
            } else if constexpr (std::is_same_v<T, ReinforceConfig>) {
                if (key == "iterations") c.iterations = parse_int(value);
                else if (key == "batch") c.batch = parse_int(value);
                else if (key == "policy_lr") c.policy_lr = parse_double(value);
                else if (key == "val_threshold") c.val_threshold = parse_double(value);
                else if (key == "ensemble") c.ensemble = parse_int(value);
                else unknown_option(key);
            } else if constexpr (std::is_same_v<T, CbasConfig>) {
                if (key == "iterations") c.iterations = parse_int(value);
                else if (key == "samples_per_iter") c.samples_per_iter = parse_int(value);
                else if (key == "quantile") c.quantile = parse_double(value);
                else if (key == "ensemble") c.ensemble = parse_int(value);
                else unknown_option(key);
            } else if constexpr (std::is_same_v<T, MinsConfig>) {
                if (key == "y_margin") c.y_margin = parse_double(value);
                else if (key == "bandwidth") c.bandwidth = parse_double(value);
                else unknown_option(key);
            } else if constexpr (std::is_same_v<T, BoQeiConfig>) {
                if (key == "gp_subsample") c.gp_subsample = parse_int(value);
                else if (key == "rounds") c.rounds = parse_int(value);
                else if (key == "batch") c.batch = parse_int(value);
                else if (key == "mc_samples") c.mc_samples = parse_int(value);
                else unknown_option(key);
            } else if constexpr (std::is_same_v<T, ComsConfig>) {
                if (key == "alpha") c.alpha = parse_double(value);
                else if (key == "ascent_steps") c.ascent_steps = parse_int(value);
                else if (key == "ascent_lr") c.ascent_lr = parse_double(value);
                else unknown_option(key);
            } else {
                unknown_option(key);
            }
        },
        cfg);
}

namespace {

template <typename T>
const T& config_as(const MethodConfig& cfg, const std::string& method) {
    const T* c = std::get_if<T>(&cfg);
    if (!c)
        throw std::invalid_argument("method " + method + " received a config of the wrong kind");
    return *c;
}

}  // namespace

CandidateSet propose(const Dataset& dataset, const DesignSpace& space, const std::string& method,
                     const MethodConfig& cfg, int K, std::uint64_t seed) {
    if (method == "grad" || method == "grad-min" || method == "grad-mean")
        return grad_ascent_propose(dataset, space, config_as<GradConfig>(cfg, method), K, seed);
    if (method == "cma-es")
        return cma_es_propose(dataset, space, config_as<CmaEsConfig>(cfg, method), K, seed);
    if (method == "reinforce")
        return reinforce_propose(dataset, space, config_as<ReinforceConfig>(cfg, method), K, seed);
    if (method == "cbas")
        return cbas_propose(dataset, space, config_as<CbasConfig>(cfg, method), K, seed);
    if (method == "auto-cbas")
        return autofocused_cbas_propose(dataset, space, config_as<CbasConfig>(cfg, method), K, seed);
    if (method == "mins")
        return mins_propose(dataset, space, config_as<MinsConfig>(cfg, method), K, seed);
    if (method == "bo-qei")
        return bo_qei_propose(dataset, space, config_as<BoQeiConfig>(cfg, method), K, seed);
    if (method == "coms")
        return coms_propose(dataset, space, config_as<ComsConfig>(cfg, method), K, seed);
    if (method == "dataset-best") return dataset_best_propose(dataset, space, K);
    throw std::invalid_argument("unknown method: " + method);
}

// --- Protocol ---------------------------------------------------------------------

TrialResult run_trial(const Task& task, const std::string& method, const MethodConfig& cfg, int K,
                      std::uint64_t seed) {
    // Private counter so concurrent trials account independently.
    Task local = task;
    local.oracle_calls = std::make_shared<std::atomic<std::uint64_t>>(0);

    Dataset dataset = build_dataset(local, seed);

    TrialResult trial;
    trial.seed = seed;
    const std::uint64_t before = local.oracle_calls->load();
    CandidateSet cand;
    try {
        cand = propose(dataset, local.space, method, cfg, K, seed);
    } catch (const std::exception& e) {
        throw std::runtime_error("trial seed " + std::to_string(seed) + ": " + e.what());
    }
    trial.oracle_calls_propose = local.oracle_calls->load() - before;
    trial.notes = cand.notes;

    const std::uint64_t before_eval = local.oracle_calls->load();
    trial.raw_scores.resize(K);
    for (int i = 0; i < K; ++i) trial.raw_scores[i] = oracle_evaluate(local, cand.designs[i]);
    trial.oracle_calls_eval = local.oracle_calls->load() - before_eval;

    trial.normalized_scores.resize(K);
    for (int i = 0; i < K; ++i)
        trial.normalized_scores[i] = score_normalize(local, trial.raw_scores[i]);
    trial.p100 = percentile_score(trial.normalized_scores, 100.0);
    trial.p50 = percentile_score(trial.normalized_scores, 50.0);
    return trial;
}

double percentile_score(const Eigen::VectorXd& scores, double P) {
    if (scores.size() == 0) throw std::invalid_argument("percentile_score: empty input");
    if (!(P > 0.0 && P <= 100.0))
        throw std::invalid_argument("percentile_score: P must lie in (0,100]");
    Eigen::VectorXd sorted = scores;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    const Eigen::Index idx = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::ceil(P / 100.0 * static_cast<double>(sorted.size()))) - 1,
        0, sorted.size() - 1);
    return sorted[idx];
}

double iqm(const Eigen::VectorXd& values) {
    if (values.size() == 0) throw std::invalid_argument("iqm: empty input");
    Eigen::VectorXd sorted = values;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    const Eigen::Index drop = sorted.size() / 4;
    return sorted.segment(drop, sorted.size() - 2 * drop).mean();
}

double median(Eigen::VectorXd values) {
    if (values.size() == 0) throw std::invalid_argument("median: empty input");
    std::sort(values.data(), values.data() + values.size());
    const Eigen::Index n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double evaluate_statistic(const Eigen::VectorXd& values, Statistic stat) {
    switch (stat) {
        case Statistic::Mean: return values.mean();
        case Statistic::Median: return median(values);
        case Statistic::Iqm: return iqm(values);
    }
    throw std::logic_error("unknown statistic");
}

}  // namespace

std::pair<double, double> bootstrap_ci(const Eigen::VectorXd& values, Statistic stat, int B,
                                       double level, std::uint64_t seed) {
    const Eigen::Index n = values.size();
    if (n < 2) throw std::invalid_argument("bootstrap_ci: need at least 2 values");
    if (B < 1) throw std::invalid_argument("bootstrap_ci: B must be >= 1");
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("bootstrap_ci: level must lie in (0,1)");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    Eigen::VectorXd stats(B);
    Eigen::VectorXd resample(n);
    for (int b = 0; b < B; ++b) {
        for (Eigen::Index i = 0; i < n; ++i) resample[i] = values[pick(rng)];
        stats[b] = evaluate_statistic(resample, stat);
    }
    const double tail = (1.0 - level) / 2.0;
    return {percentile_score(stats, tail * 100.0), percentile_score(stats, (1.0 - tail) * 100.0)};
}

namespace {

AggregateStats aggregate_values(const Eigen::VectorXd& v, std::uint64_t seed) {
    AggregateStats stats;
    stats.trial_values = v;
    stats.mean = v.mean();
    const Eigen::Index n = v.size();
    stats.stddev =
        n > 1 ? std::sqrt((v.array() - stats.mean).square().sum() / static_cast<double>(n - 1))
              : 0.0;
    stats.median = median(v);
    stats.iqm_value = iqm(v);
    if (n > 1) {
        std::tie(stats.ci_mean.lower, stats.ci_mean.upper) =
            bootstrap_ci(v, Statistic::Mean, 2000, 0.95, seed + 11);
        std::tie(stats.ci_median.lower, stats.ci_median.upper) =
            bootstrap_ci(v, Statistic::Median, 2000, 0.95, seed + 12);
        std::tie(stats.ci_iqm.lower, stats.ci_iqm.upper) =
            bootstrap_ci(v, Statistic::Iqm, 2000, 0.95, seed + 13);
    } else {
        stats.ci_mean = {0.95, v[0], v[0]};
        stats.ci_median = {0.95, v[0], v[0]};
        stats.ci_iqm = {0.95, v[0], v[0]};
    }
    return stats;
}

}  // namespace

AggregateReport aggregate(const std::vector<TrialResult>& trials, std::uint64_t seed) {
    if (trials.empty()) throw std::invalid_argument("aggregate: need at least one trial");
    const Eigen::Index n = static_cast<Eigen::Index>(trials.size());
    Eigen::VectorXd p100(n), p50(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        p100[i] = trials[static_cast<std::size_t>(i)].p100;
        p50[i] = trials[static_cast<std::size_t>(i)].p50;
    }
    AggregateReport report;
    report.p100 = aggregate_values(p100, seed);
    report.p50 = aggregate_values(p50, seed + 1000);
    return report;
}

AggregateStats aggregate_pooled(const std::vector<Eigen::VectorXd>& strata, std::uint64_t seed) {
    if (strata.empty()) throw std::invalid_argument("aggregate_pooled: no strata");
    Eigen::Index total = 0;
    for (const auto& s : strata) {
        if (s.size() < 1) throw std::invalid_argument("aggregate_pooled: empty stratum");
        total += s.size();
    }
    Eigen::VectorXd pooled(total);
    Eigen::Index at = 0;
    for (const auto& s : strata) {
        pooled.segment(at, s.size()) = s;
        at += s.size();
    }

    AggregateStats stats;
    stats.trial_values = pooled;
    stats.mean = pooled.mean();
    stats.stddev = total > 1 ? std::sqrt((pooled.array() - stats.mean).square().sum() /
                                         static_cast<double>(total - 1))
                             : 0.0;
    stats.median = median(pooled);
    stats.iqm_value = iqm(pooled);
    if (total < 2) {
        stats.ci_mean = {0.95, pooled[0], pooled[0]};
        stats.ci_median = stats.ci_mean;
        stats.ci_iqm = stats.ci_mean;
        return stats;
    }

    const int B = 2000;
    std::mt19937_64 rng(seed);
    Eigen::VectorXd means(B), medians(B), iqms(B);
    Eigen::VectorXd resample(total);
    for (int b = 0; b < B; ++b) {
        Eigen::Index out = 0;
        for (const auto& s : strata) {  // resample within each task
            std::uniform_int_distribution<Eigen::Index> pick(0, s.size() - 1);
            for (Eigen::Index i = 0; i < s.size(); ++i) resample[out++] = s[pick(rng)];
        }
        means[b] = resample.mean();
        medians[b] = median(resample);
        iqms[b] = iqm(resample);
    }
    stats.ci_mean = {0.95, percentile_score(means, 2.5), percentile_score(means, 97.5)};
    stats.ci_median = {0.95, percentile_score(medians, 2.5), percentile_score(medians, 97.5)};
    stats.ci_iqm = {0.95, percentile_score(iqms, 2.5), percentile_score(iqms, 97.5)};
    return stats;
}

namespace {

int thread_budget(int trials) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("MBO_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) hw = static_cast<unsigned>(v);
        } catch (const std::exception&) {
            throw std::invalid_argument("MBO_THREADS must be a positive integer");
        }
    }
    return std::max(1, std::min<int>(static_cast<int>(hw), trials));
}

}  // namespace

RunRecord run(const RunConfig& cfg) {
    if (cfg.k < 1 || cfg.trials < 1)
        throw std::invalid_argument("run: k and trials must be >= 1");
    const Task task = make_task(cfg.task);

    RunRecord record;
    record.config = cfg;
    record.trials.resize(cfg.trials);
    record.dataset_best_trials.resize(cfg.trials);

    const int workers = thread_budget(cfg.trials);
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    auto work = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= cfg.trials || failed.load()) return;
            try {
                const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(i);
                record.trials[i] = run_trial(task, cfg.method, cfg.method_cfg, cfg.k, seed);
                record.dataset_best_trials[i] =
                    run_trial(task, "dataset-best", DatasetBestConfig{}, cfg.k, seed);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                failed = true;
                error_message = e.what();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failed) throw std::runtime_error(error_message);

    record.report = aggregate(record.trials, cfg.base_seed + 777);
    record.dataset_best = aggregate(record.dataset_best_trials, cfg.base_seed + 778);
    return record;
}

// --- Reporting and persistence --------------------------------------------------

namespace {

json ci_to_json(const CiBounds& ci) {
    return json{{"level", ci.level}, {"lower", ci.lower}, {"upper", ci.upper}};
}

CiBounds ci_from_json(const json& j) {
    return CiBounds{j.at("level").get<double>(), j.at("lower").get<double>(),
                    j.at("upper").get<double>()};
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_std(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json stats_to_json(const AggregateStats& s) {
    return json{{"trial_values", to_std(s.trial_values)},
                {"mean", s.mean},
                {"stddev", s.stddev},
                {"median", s.median},
                {"iqm", s.iqm_value},
                {"ci_mean", ci_to_json(s.ci_mean)},
                {"ci_median", ci_to_json(s.ci_median)},
                {"ci_iqm", ci_to_json(s.ci_iqm)}};
}

AggregateStats stats_from_json(const json& j) {
    AggregateStats s;
    s.trial_values = from_std(j.at("trial_values").get<std::vector<double>>());
    s.mean = j.at("mean").get<double>();
    s.stddev = j.at("stddev").get<double>();
    s.median = j.at("median").get<double>();
    s.iqm_value = j.at("iqm").get<double>();
    s.ci_mean = ci_from_json(j.at("ci_mean"));
    s.ci_median = ci_from_json(j.at("ci_median"));
    s.ci_iqm = ci_from_json(j.at("ci_iqm"));
    return s;
}

json report_to_json(const AggregateReport& r) {
    return json{{"p100", stats_to_json(r.p100)}, {"p50", stats_to_json(r.p50)}};
}

AggregateReport report_from_json(const json& j) {
    return AggregateReport{stats_from_json(j.at("p100")), stats_from_json(j.at("p50"))};
}

json train_to_json(const TrainConfig& t) {
    return json{{"hidden", t.hidden},       {"epochs", t.epochs},
                {"batch", t.batch},         {"step_size", t.step_size},
                {"val_fraction", t.val_fraction}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    t.hidden = j.at("hidden").get<std::vector<int>>();
    t.epochs = j.at("epochs").get<int>();
    t.batch = j.at("batch").get<int>();
    t.step_size = j.at("step_size").get<double>();
    t.val_fraction = j.at("val_fraction").get<double>();
    return t;
}

json trial_to_json(const TrialResult& t) {
    return json{{"seed", t.seed},
                {"raw_scores", to_std(t.raw_scores)},
                {"normalized_scores", to_std(t.normalized_scores)},
                {"p100", t.p100},
                {"p50", t.p50},
                {"oracle_calls_propose", t.oracle_calls_propose},
                {"oracle_calls_eval", t.oracle_calls_eval},
                {"notes", t.notes}};
}

TrialResult trial_from_json(const json& j) {
    TrialResult t;
    t.seed = j.at("seed").get<std::uint64_t>();
    t.raw_scores = from_std(j.at("raw_scores").get<std::vector<double>>());
    t.normalized_scores = from_std(j.at("normalized_scores").get<std::vector<double>>());
    t.p100 = j.at("p100").get<double>();
    t.p50 = j.at("p50").get<double>();
    t.oracle_calls_propose = j.at("oracle_calls_propose").get<std::uint64_t>();
    t.oracle_calls_eval = j.at("oracle_calls_eval").get<std::uint64_t>();
    t.notes = j.at("notes").get<std::vector<std::string>>();
    return t;
}

}  // namespace

json method_config_to_json(const MethodConfig& cfg) {
    return std::visit(
        [](const auto& c) -> json {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, GradConfig>) {
                return json{{"type", "grad"},       {"mode", to_string(c.mode)},
                            {"steps", c.steps},     {"lr", c.lr},
                            {"ensemble", c.ensemble}, {"train", train_to_json(c.train)}};
            } else if constexpr (std::is_same_v<T, CmaEsConfig>) {
                return json{{"type", "cma-es"},
                            {"sigma", c.sigma},
                            {"population", c.population},
                            {"iterations", c.iterations},
                            {"elite_fraction", c.elite_fraction},
                            {"train", train_to_json(c.train)}};
            } else if constexpr (std::is_same_v<T, ReinforceConfig>) {
                return json{{"type", "reinforce"},
                            {"iterations", c.iterations},
                            {"batch", c.batch},
                            {"policy_lr", c.policy_lr},
                            {"val_threshold", c.val_threshold},
                            {"ensemble", c.ensemble},
                            {"train", train_to_json(c.train)}};
            } else if constexpr (std::is_same_v<T, CbasConfig>) {
                return json{{"type", "cbas"},
                            {"iterations", c.iterations},
                            {"samples_per_iter", c.samples_per_iter},
                            {"quantile", c.quantile},
                            {"autofocus", c.autofocus},
                            {"ensemble", c.ensemble},
                            {"train", train_to_json(c.train)}};
            } else if constexpr (std::is_same_v<T, MinsConfig>) {
                return json{{"type", "mins"},
                            {"y_margin", c.y_margin},
                            {"bandwidth", c.bandwidth},
                            {"train", train_to_json(c.train)}};
            } else if constexpr (std::is_same_v<T, BoQeiConfig>) {
                return json{{"type", "bo-qei"},
                            {"gp_subsample", c.gp_subsample},
                            {"rounds", c.rounds},
                            {"batch", c.batch},
                            {"mc_samples", c.mc_samples},
                            {"train", train_to_json(c.train)}};
            } else if constexpr (std::is_same_v<T, ComsConfig>) {
                return json{{"type", "coms"},
                            {"alpha", c.alpha},
                            {"ascent_steps", c.ascent_steps},
                            {"ascent_lr", c.ascent_lr},
                            {"train", train_to_json(c.train)}};
            } else {
                return json{{"type", "dataset-best"}};
            }
        },
        cfg);
}

MethodConfig method_config_from_json(const std::string& method, const json& j) {
    MethodConfig cfg = default_method_config(method);
    std::visit(
        [&](auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, GradConfig>) {
                c.mode = reduce_mode_from_string(j.at("mode").get<std::string>());
                c.steps = j.at("steps").get<int>();
                c.lr = j.at("lr").get<double>();
                c.ensemble = j.at("ensemble").get<int>();
                c.train = train_from_json(j.at("train"));
            } else if constexpr (std::is_same_v<T, CmaEsConfig>) {
                c.sigma = j.at("sigma").get<double>();
                c.population = j.at("population").get<int>();
                c.iterations = j.at("iterations").get<int>();
                c.elite_fraction = j.at("elite_fraction").get<double>();
                c.train = train_from_json(j.at("train"));
            } else if constexpr (std::is_same_v<T, ReinforceConfig>) {
                c.iterations = j.at("iterations").get<int>();
                c.batch = j.at("batch").get<int>();
                c.policy_lr = j.at("policy_lr").get<double>();
                c.val_threshold = j.at("val_threshold").get<double>();
                c.ensemble = j.at("ensemble").get<int>();
                c.train = train_from_json(j.at("train"));
            } else if constexpr (std::is_same_v<T, CbasConfig>) {
                c.iterations = j.at("iterations").get<int>();
                c.samples_per_iter = j.at("samples_per_iter").get<int>();
                c.quantile = j.at("quantile").get<double>();
                c.autofocus = j.at("autofocus").get<bool>();
                c.ensemble = j.at("ensemble").get<int>();
                c.train = train_from_json(j.at("train"));
            } else if constexpr (std::is_same_v<T, MinsConfig>) {
                c.y_margin = j.at("y_margin").get<double>();
                c.bandwidth = j.at("bandwidth").get<double>();
                c.train = train_from_json(j.at("train"));
            } else if constexpr (std::is_same_v<T, BoQeiConfig>) {
                c.gp_subsample = j.at("gp_subsample").get<int>();
                c.rounds = j.at("rounds").get<int>();
                c.batch = j.at("batch").get<int>();
                c.mc_samples = j.at("mc_samples").get<int>();
                c.train = train_from_json(j.at("train"));
            } else if constexpr (std::is_same_v<T, ComsConfig>) {
                c.alpha = j.at("alpha").get<double>();
                c.ascent_steps = j.at("ascent_steps").get<int>();
                c.ascent_lr = j.at("ascent_lr").get<double>();
                c.train = train_from_json(j.at("train"));
            }
        },
        cfg);
    return cfg;
}

std::string emit_report(const std::map<std::string, AggregateReport>& reports,
                        const std::string& format, const json& meta) {
    if (reports.empty()) throw std::invalid_argument("emit_report: no reports");
    if (format == "json") {
        json out;
        out["version"] = kResultsFormat;
        if (!meta.is_null()) out["meta"] = meta;
        json methods = json::object();
        for (const auto& [name, report] : reports) methods[name] = report_to_json(report);
        out["methods"] = methods;
        return out.dump(2) + "\n";
    }
    if (format == "markdown") {
        char buf[128];
        std::ostringstream os;
        os << "| method | p100 | p50 |\n|---|---|---|\n";
        auto row = [&](const std::string& name, const AggregateReport& r) {
            std::snprintf(buf, sizeof(buf), "| %s | %.3f ± %.3f | %.3f ± %.3f |\n", name.c_str(),
                          r.p100.mean, r.p100.stddev, r.p50.mean, r.p50.stddev);
            os << buf;
        };
        const auto ref = reports.find("dataset-best");
        if (ref != reports.end()) row(ref->first, ref->second);
        for (const auto& [name, report] : reports)
            if (name != "dataset-best") row(name, report);
        return os.str();
    }
    throw std::invalid_argument("emit_report: unknown format " + format);
}

void save_results(const RunRecord& record, const std::string& path) {
    json j;
    j["version"] = record.version;
    j["config"] = json{{"task", record.config.task},
                       {"method", record.config.method},
                       {"method_cfg", method_config_to_json(record.config.method_cfg)},
                       {"k", record.config.k},
                       {"trials", record.config.trials},
                       {"base_seed", record.config.base_seed},
                       {"output_path", record.config.output_path}};
    json trials = json::array();
    for (const auto& t : record.trials) trials.push_back(trial_to_json(t));
    j["trials"] = trials;
    j["report"] = report_to_json(record.report);
    json ref_trials = json::array();
    for (const auto& t : record.dataset_best_trials) ref_trials.push_back(trial_to_json(t));
    j["dataset_best_trials"] = ref_trials;
    j["dataset_best"] = report_to_json(record.dataset_best);

    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_results: cannot open " + path);
    f << j.dump(2) << "\n";
}

RunRecord load_results(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_results: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("load_results: malformed content: ") + e.what());
    }
    try {
        if (!j.contains("version")) throw FormatError("load_results: missing version field");
        if (j.at("version") != kResultsFormat)
            throw VersionError("load_results: file written by version " +
                               j.at("version").get<std::string>() + ", expected " +
                               kResultsFormat);
        RunRecord record;
        record.version = j.at("version").get<std::string>();
        const json& cj = j.at("config");
        record.config.task = cj.at("task").get<std::string>();
        record.config.method = cj.at("method").get<std::string>();
        record.config.method_cfg =
            method_config_from_json(record.config.method, cj.at("method_cfg"));
        record.config.k = cj.at("k").get<int>();
        record.config.trials = cj.at("trials").get<int>();
        record.config.base_seed = cj.at("base_seed").get<std::uint64_t>();
        record.config.output_path = cj.at("output_path").get<std::string>();
        for (const auto& t : j.at("trials")) record.trials.push_back(trial_from_json(t));
        record.report = report_from_json(j.at("report"));
        for (const auto& t : j.at("dataset_best_trials"))
            record.dataset_best_trials.push_back(trial_from_json(t));
        record.dataset_best = report_from_json(j.at("dataset_best"));
        return record;
    } catch (const json::exception& e) {
        throw FormatError(std::string("load_results: malformed content: ") + e.what());
    }
}

}  // namespace mbo
