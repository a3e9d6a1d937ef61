#include "mbo/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace mbo {

namespace {

constexpr double kLogRatioClamp = 2.995732273553991;  // ln 20
constexpr double kLogitSmoothing = 0.3;
constexpr int kProposalPool = 1024;
constexpr double kContinuousPerturbStd = 0.1;
// Logit gaps under 0.3-smoothing are ~2, so unit noise is what actually flips
// categories; 0.1 would only ever reproduce the incumbent sequences.
constexpr double kDiscretePerturbStd = 1.0;

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double gaussian_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Maps designs to the feature space optimizers work in: whitened coordinates
// for continuous spaces, smoothed log-probabilities for discrete ones (where
// only the scores are normalized).
struct FeatureCodec {
    DesignSpace space = DesignSpace::continuous(1, 0.0, 1.0);
    std::optional<Normalizer> x_norm;  // continuous only

    int dim() const { return space.relaxed_dim(); }

    Eigen::VectorXd encode(const Design& d) const {
        if (space.is_continuous()) return normalize(*x_norm, d.real());
        return to_logits(space, d, kLogitSmoothing);
    }

    Design decode(const Eigen::VectorXd& row) const {
        if (space.is_continuous()) return Design(denormalize(*x_norm, row));
        return from_logits(space, row);
    }
};

struct Prepared {
    FeatureCodec codec;
    Eigen::MatrixXd X;           // encoded designs
    Eigen::VectorXd y;           // normalized scores
    Normalizer y_norm;
    Eigen::VectorXd raw_scores;
};

Prepared prepare(const Dataset& dataset, const DesignSpace& space) {
    const std::size_t n = dataset.size();
    if (n < 2) throw std::invalid_argument("propose: dataset needs at least 2 rows");
    Prepared prep;
    prep.codec.space = space;
    prep.raw_scores = dataset.scores;
    prep.y_norm = fit_normalizer(dataset.scores);
    prep.y = normalize_rows(prep.y_norm, dataset.scores);

    if (space.is_continuous()) {
        Eigen::MatrixXd raw(n, space.dim());
        for (std::size_t i = 0; i < n; ++i) {
            require_valid(space, dataset.designs[i]);
            raw.row(static_cast<Eigen::Index>(i)) = dataset.designs[i].real();
        }
        prep.codec.x_norm = fit_normalizer(raw);
        prep.X = normalize_rows(*prep.codec.x_norm, raw);
    } else {
        prep.X.resize(n, space.relaxed_dim());
        for (std::size_t i = 0; i < n; ++i)
            prep.X.row(static_cast<Eigen::Index>(i)) = prep.codec.encode(dataset.designs[i]);
    }
    return prep;
}

std::vector<Eigen::Index> top_k_indices(const Eigen::VectorXd& scores, int K) {
    if (K < 1 || static_cast<Eigen::Index>(K) > scores.size())
        throw std::logic_error("top_k_indices: K out of range");
    std::vector<Eigen::Index> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
    order.resize(K);
    return order;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    return out;
}

Eigen::VectorXd gather_vec(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
    return out;
}

// Decodes candidate feature rows, denormalizes predicted scores, and orders
// everything by prediction, best first.
CandidateSet finish(const Prepared& prep, const Eigen::MatrixXd& candidates,
                    const Eigen::VectorXd& pred_norm, std::string method_name,
                    std::uint64_t seed, std::vector<std::string> notes = {}) {
    const Eigen::Index k = candidates.rows();
    std::vector<Eigen::Index> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return pred_norm[a] > pred_norm[b]; });
    CandidateSet out;
    out.method_name = std::move(method_name);
    out.seed = seed;
    out.notes = std::move(notes);
    out.designs.reserve(k);
    out.surrogate_scores.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        out.designs.push_back(prep.codec.decode(candidates.row(order[i])));
        out.surrogate_scores[i] =
            pred_norm[order[i]] * prep.y_norm.stddev[0] + prep.y_norm.mean[0];
    }
    return out;
}

TrainConfig seeded(TrainConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    return cfg;
}

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd z(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = gauss(rng);
    return z;
}

// Minimal adaptive-moment ascent over a flat parameter vector.
struct AdamVec {
    Eigen::VectorXd m, v;
    long t = 0;
    static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

    explicit AdamVec(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

    void ascend(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
        ++t;
        m = kBeta1 * m + (1.0 - kBeta1) * grad;
        v.array() = kBeta2 * v.array() + (1.0 - kBeta2) * grad.array().square();
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
        theta.array() += lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
    }
};

}  // namespace

Eigen::MatrixXd ascend(const SurrogateEnsemble& ensemble, Eigen::MatrixXd X, ReduceMode mode,
                       int steps, double lr) {
    for (int s = 0; s < steps; ++s) X += lr * ensemble_gradients(ensemble, X, mode);
    return X;
}

double quantile_ceiling(Eigen::VectorXd values, double q) {
    if (values.size() == 0) throw std::invalid_argument("quantile: empty input");
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must lie in (0,1]");
    std::sort(values.data(), values.data() + values.size());
    const Eigen::Index idx = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::ceil(q * static_cast<double>(values.size()))) - 1, 0,
        values.size() - 1);
    return values[idx];
}

double clamped_ratio(double log_a, double log_b) {
    return std::exp(std::clamp(log_a - log_b, -kLogRatioClamp, kLogRatioClamp));
}

// --- Gradient ascent ---------------------------------------------------------

CandidateSet grad_ascent_propose(const Dataset& dataset, const DesignSpace& space,
                                 const GradConfig& cfg, int K, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("propose: K must be >= 1");
    if (cfg.steps < 0 || cfg.lr <= 0.0 || cfg.ensemble < 1)
        throw std::invalid_argument("grad_ascent: invalid configuration");
    if (static_cast<int>(dataset.size()) < K)
        throw std::invalid_argument("grad_ascent: dataset smaller than K; cannot initialize");
    Prepared prep = prepare(dataset, space);
    const int members = cfg.mode == ReduceMode::Single ? 1 : cfg.ensemble;
    SurrogateEnsemble ensemble = fit_ensemble(prep.X, prep.y, cfg.train, members, seed);

    Eigen::MatrixXd X0 = gather_rows(prep.X, top_k_indices(dataset.scores, K));
    const double lr = cfg.lr * std::sqrt(static_cast<double>(prep.codec.dim()));
    Eigen::MatrixXd Xf = ascend(ensemble, std::move(X0), cfg.mode, cfg.steps, lr);
    return finish(prep, Xf, ensemble_values(ensemble, Xf, cfg.mode),
                  "grad-" + to_string(cfg.mode), seed);
}

// --- CMA-ES ------------------------------------------------------------------

CmaResult cma_es_search(const std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>& objective,
                        const Eigen::VectorXd& mu0, const CmaEsConfig& cfg, int dim, int K,
                        std::uint64_t seed) {
    if (mu0.size() != dim) throw std::invalid_argument("cma_es_search: mean length mismatch");
    if (!(cfg.sigma > 0.0)) throw std::invalid_argument("cma_es_search: sigma must be > 0");
    if (!(cfg.elite_fraction > 0.0 && cfg.elite_fraction < 1.0))
        throw std::invalid_argument("cma_es_search: elite_fraction must lie in (0,1)");
    const int lambda =
        cfg.population > 0
            ? cfg.population
            : std::max(4 + static_cast<int>(std::floor(3.0 * std::log(dim))), 2 * K);

    std::mt19937_64 rng(seed);
    Eigen::VectorXd mu = mu0;
    Eigen::MatrixXd C = cfg.sigma * cfg.sigma * Eigen::MatrixXd::Identity(dim, dim);

    std::vector<Eigen::VectorXd> all_rows;
    std::vector<double> all_values;

    auto factor = [&](const Eigen::MatrixXd& cov) {
        double jitter = 1e-10;
        for (int attempt = 0; attempt < 10; ++attempt) {
            Eigen::LLT<Eigen::MatrixXd> llt(cov + jitter * Eigen::MatrixXd::Identity(dim, dim));
            if (llt.info() == Eigen::Success) return Eigen::MatrixXd(llt.matrixL());
            jitter *= 10.0;
        }
        throw std::runtime_error("cma_es_search: covariance factorization failed");
    };

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const Eigen::MatrixXd L = factor(C);
        Eigen::MatrixXd X = standard_normal(lambda, dim, rng) * L.transpose();
        X.rowwise() += mu.transpose();
        const Eigen::VectorXd v = objective(X);

        for (int i = 0; i < lambda; ++i) {
            all_rows.emplace_back(X.row(i));
            all_values.push_back(v[i]);
        }

        const int elites = std::max(1, static_cast<int>(std::floor(cfg.elite_fraction * lambda)));
        std::vector<int> order(lambda);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v[a] > v[b]; });

        Eigen::VectorXd w(elites);
        for (int i = 0; i < elites; ++i) w[i] = std::log(elites + 0.5) - std::log(i + 1.0);
        w /= w.sum();

        Eigen::VectorXd mu_next = Eigen::VectorXd::Zero(dim);
        for (int i = 0; i < elites; ++i) mu_next += w[i] * X.row(order[i]).transpose();
        Eigen::MatrixXd C_next = Eigen::MatrixXd::Zero(dim, dim);
        for (int i = 0; i < elites; ++i) {
            const Eigen::VectorXd dx = X.row(order[i]).transpose() - mu;  // around the old mean
            C_next.noalias() += w[i] * dx * dx.transpose();
        }
        C = 0.5 * (C_next + C_next.transpose());
        mu = std::move(mu_next);
    }

    if (all_rows.empty()) {
        // No iterations: report draws from the initial distribution.
        const Eigen::MatrixXd L = factor(C);
        Eigen::MatrixXd X = standard_normal(K, dim, rng) * L.transpose();
        X.rowwise() += mu.transpose();
        const Eigen::VectorXd v = objective(X);
        for (int i = 0; i < K; ++i) {
            all_rows.emplace_back(X.row(i));
            all_values.push_back(v[i]);
        }
    }
    if (static_cast<int>(all_rows.size()) < K)
        throw std::invalid_argument("cma_es_search: fewer samples than K; raise population");

    std::vector<std::size_t> order(all_rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return all_values[a] > all_values[b]; });

    CmaResult result;
    result.samples.resize(K, dim);
    result.values.resize(K);
    for (int i = 0; i < K; ++i) {
        result.samples.row(i) = all_rows[order[i]];
        result.values[i] = all_values[order[i]];
    }
    result.final_mean = mu;
    return result;
}

CandidateSet cma_es_propose(const Dataset& dataset, const DesignSpace& space,
                            const CmaEsConfig& cfg, int K, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("propose: K must be >= 1");
    Prepared prep = prepare(dataset, space);
    SurrogateEnsemble ensemble = fit_ensemble(prep.X, prep.y, cfg.train, 1, seed);

    const int init = std::min<int>(K, static_cast<int>(dataset.size()));
    const Eigen::VectorXd mu0 =
        gather_rows(prep.X, top_k_indices(dataset.scores, init)).colwise().mean();

    auto objective = [&](const Eigen::MatrixXd& X) {
        return ensemble_values(ensemble, X, ReduceMode::Single);
    };
    CmaResult res = cma_es_search(objective, mu0, cfg, prep.codec.dim(), K, sub_seed(seed, 1));
    return finish(prep, res.samples, res.values, "cma-es", seed);
}

// --- REINFORCE ---------------------------------------------------------------

ReinforceGaussianTrace reinforce_search_gaussian(
    const std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>& objective,
    const Eigen::VectorXd& mean0, const Eigen::VectorXd& std0, int iterations, int batch,
    double lr, std::uint64_t seed) {
    if (iterations < 1 || batch < 1)
        throw std::invalid_argument("reinforce: iterations and batch must be >= 1");
    const Eigen::Index d = mean0.size();
    Eigen::VectorXd mean = mean0;
    Eigen::VectorXd log_std = std0.array().max(1e-6).log();

    std::mt19937_64 rng(seed);
    AdamVec adam(2 * d);
    ReinforceGaussianTrace trace;
    trace.sampled.resize(static_cast<Eigen::Index>(iterations) * batch, d);
    trace.values.resize(static_cast<Eigen::Index>(iterations) * batch);
    trace.mean_history.push_back(mean);

    for (int it = 0; it < iterations; ++it) {
        const Eigen::VectorXd sigma = log_std.array().exp();
        Eigen::MatrixXd Z = standard_normal(batch, d, rng);
        Eigen::MatrixXd X = (Z.array().rowwise() * sigma.transpose().array()).matrix();
        X.rowwise() += mean.transpose();
        const Eigen::VectorXd v = objective(X);
        trace.sampled.middleRows(static_cast<Eigen::Index>(it) * batch, batch) = X;
        trace.values.segment(static_cast<Eigen::Index>(it) * batch, batch) = v;

        const Eigen::VectorXd adv = v.array() - v.mean();
        // d log pi / d mean = (x - mean)/sigma^2, d/d log_std = z^2 - 1
        Eigen::VectorXd g_mean = Eigen::VectorXd::Zero(d);
        Eigen::VectorXd g_log_std = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < batch; ++i) {
            const Eigen::VectorXd z = Z.row(i).transpose();
            g_mean += adv[i] * (z.array() / sigma.array()).matrix();
            g_log_std += adv[i] * (z.array().square() - 1.0).matrix();
        }
        g_mean /= batch;
        g_log_std /= batch;

        Eigen::VectorXd theta(2 * d), grad(2 * d);
        theta << mean, log_std;
        grad << g_mean, g_log_std;
        adam.ascend(theta, grad, lr);
        mean = theta.head(d);
        log_std = theta.tail(d);
        trace.mean_history.push_back(mean);
    }
    trace.final_mean = mean;
    trace.final_log_std = log_std;
    return trace;
}

ReinforceCategoricalTrace reinforce_search_categorical(
    const std::function<Eigen::VectorXd(const std::vector<std::vector<int>>&)>& objective,
    const Eigen::MatrixXd& logits0, int iterations, int batch, double lr, std::uint64_t seed) {
    if (iterations < 1 || batch < 1)
        throw std::invalid_argument("reinforce: iterations and batch must be >= 1");
    const int length = static_cast<int>(logits0.rows());
    const int cats = static_cast<int>(logits0.cols());
    Eigen::MatrixXd logits = logits0;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AdamVec adam(static_cast<Eigen::Index>(length) * cats);

    ReinforceCategoricalTrace trace;
    trace.initial_logits = logits0;
    trace.sampled.reserve(static_cast<std::size_t>(iterations) * batch);
    trace.values.resize(static_cast<Eigen::Index>(iterations) * batch);

    auto softmax_rows = [&](const Eigen::MatrixXd& l) {
        Eigen::MatrixXd p = (l.colwise() - l.rowwise().maxCoeff()).array().exp();
        return Eigen::MatrixXd(p.array().colwise() / p.rowwise().sum().array());
    };

    for (int it = 0; it < iterations; ++it) {
        const Eigen::MatrixXd probs = softmax_rows(logits);
        std::vector<std::vector<int>> seqs(batch, std::vector<int>(length));
        for (int i = 0; i < batch; ++i) {
            for (int p = 0; p < length; ++p) {
                const double r = u(rng);
                double acc = 0.0;
                int c = cats - 1;
                for (int k = 0; k < cats; ++k) {
                    acc += probs(p, k);
                    if (r < acc) {
                        c = k;
                        break;
                    }
                }
                seqs[i][p] = c;
            }
        }
        const Eigen::VectorXd v = objective(seqs);
        for (int i = 0; i < batch; ++i) {
            trace.sampled.push_back(seqs[i]);
            trace.values[static_cast<Eigen::Index>(it) * batch + i] = v[i];
        }

        const Eigen::VectorXd adv = v.array() - v.mean();
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(length, cats);
        for (int i = 0; i < batch; ++i) {
            grad -= adv[i] * probs;  // softmax term, identical across the batch rows
            for (int p = 0; p < length; ++p) grad(p, seqs[i][p]) += adv[i];
        }
        grad /= batch;

        Eigen::VectorXd theta = Eigen::Map<Eigen::VectorXd>(logits.data(), logits.size());
        const Eigen::VectorXd g = Eigen::Map<Eigen::VectorXd>(grad.data(), grad.size());
        adam.ascend(theta, g, lr);
        logits = Eigen::Map<Eigen::MatrixXd>(theta.data(), length, cats);
    }
    trace.final_logits = logits;
    return trace;
}

CandidateSet reinforce_propose(const Dataset& dataset, const DesignSpace& space,
                               const ReinforceConfig& cfg, int K, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("propose: K must be >= 1");
    if (cfg.policy_lr <= 0.0 || cfg.ensemble < 1)
        throw std::invalid_argument("reinforce: invalid configuration");
    if (static_cast<long long>(cfg.iterations) * cfg.batch < K)
        throw std::invalid_argument("reinforce: iterations*batch must cover K candidates");
    Prepared prep = prepare(dataset, space);
    SurrogateEnsemble ensemble = fit_ensemble(prep.X, prep.y, cfg.train, cfg.ensemble, seed);

    std::vector<std::string> notes;
    SurrogateEnsemble kept;
    std::vector<double> kept_losses;
    for (int m = 0; m < ensemble.size(); ++m) {
        if (ensemble.val_losses[m] <= cfg.val_threshold) {
            kept.models.push_back(ensemble.models[m]);
            kept_losses.push_back(ensemble.val_losses[m]);
        }
    }
    if (kept.models.empty()) {
        Eigen::Index best;
        ensemble.val_losses.minCoeff(&best);
        kept.models.push_back(ensemble.models[best]);
        kept_losses.push_back(ensemble.val_losses[best]);
        notes.push_back("all ensemble members exceeded the validation threshold; kept the best");
    }
    kept.val_losses = Eigen::Map<Eigen::VectorXd>(kept_losses.data(),
                                                  static_cast<Eigen::Index>(kept_losses.size()));

    const int init = std::min<int>(K, static_cast<int>(dataset.size()));
    const auto top = top_k_indices(dataset.scores, init);

    if (space.is_continuous()) {
        auto objective = [&](const Eigen::MatrixXd& X) {
            return ensemble_values(kept, X, ReduceMode::Mean);
        };
        const Eigen::MatrixXd X_top = gather_rows(prep.X, top);
        const Eigen::VectorXd mean0 = X_top.colwise().mean().transpose();
        const Eigen::RowVectorXd col_mean = prep.X.colwise().mean();
        const Eigen::MatrixXd centered = prep.X.rowwise() - col_mean;
        const Eigen::VectorXd std0 =
            (centered.array().square().colwise().sum() / static_cast<double>(prep.X.rows()))
                .sqrt()
                .matrix()
                .transpose();
        auto trace = reinforce_search_gaussian(objective, mean0, std0, cfg.iterations, cfg.batch,
                                               cfg.policy_lr, sub_seed(seed, 2));
        const auto order = top_k_indices(trace.values, K);
        return finish(prep, gather_rows(trace.sampled, order), gather_vec(trace.values, order),
                      "reinforce", seed, std::move(notes));
    }

    const int length = space.length();
    const int cats = space.categories();
    Eigen::MatrixXd freq = Eigen::MatrixXd::Zero(length, cats);
    for (auto i : top)
        for (int p = 0; p < length; ++p) freq(p, dataset.designs[i].cats()[p]) += 1.0;
    freq /= static_cast<double>(top.size());
    const double floor = 1e-3;
    freq = (1.0 - cats * floor) * freq.array() + floor;
    const Eigen::MatrixXd logits0 = freq.array().log();

    auto objective = [&](const std::vector<std::vector<int>>& seqs) {
        Eigen::MatrixXd F(static_cast<Eigen::Index>(seqs.size()), prep.codec.dim());
        for (std::size_t i = 0; i < seqs.size(); ++i)
            F.row(static_cast<Eigen::Index>(i)) = prep.codec.encode(Design(seqs[i]));
        return ensemble_values(kept, F, ReduceMode::Mean);
    };
    auto trace = reinforce_search_categorical(objective, logits0, cfg.iterations, cfg.batch,
                                              cfg.policy_lr, sub_seed(seed, 2));
    const auto order = top_k_indices(trace.values, K);
    Eigen::MatrixXd cand(K, prep.codec.dim());
    Eigen::VectorXd vals(K);
    for (int i = 0; i < K; ++i) {
        cand.row(i) = prep.codec.encode(Design(trace.sampled[order[i]]));
        vals[i] = trace.values[order[i]];
    }
    return finish(prep, cand, vals, "reinforce", seed, std::move(notes));
}

// --- CbAS / Autofocused CbAS ---------------------------------------------------

Eigen::VectorXd cbas_weights(const Eigen::VectorXd& log_p0, const Eigen::VectorXd& log_pt,
                             const Eigen::VectorXd& pred_mean, const Eigen::VectorXd& pred_std,
                             double tau) {
    const Eigen::Index n = log_p0.size();
    if (log_pt.size() != n || pred_mean.size() != n || pred_std.size() != n)
        throw std::invalid_argument("cbas_weights: length mismatch");
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ratio = clamped_ratio(log_p0[i], log_pt[i]);
        double prob;
        if (pred_std[i] > 0.0)
            prob = gaussian_cdf((pred_mean[i] - tau) / pred_std[i]);
        else
            prob = pred_mean[i] >= tau ? 1.0 : 0.0;
        w[i] = ratio * prob;
    }
    return w;
}

namespace {

CandidateSet cbas_impl(const Dataset& dataset, const DesignSpace& space, const CbasConfig& cfg,
                       int K, std::uint64_t seed, CbasDiagnostics* diag, bool autofocus,
                       const char* method_name) {
    if (K < 1) throw std::invalid_argument("propose: K must be >= 1");
    if (cfg.samples_per_iter < 2)
        throw std::invalid_argument("cbas: samples_per_iter must be >= 2");
    if (cfg.iterations < 0 || !(cfg.quantile > 0.0 && cfg.quantile <= 1.0))
        throw std::invalid_argument("cbas: invalid configuration");
    Prepared prep = prepare(dataset, space);
    SurrogateEnsemble ensemble = fit_ensemble(prep.X, prep.y, cfg.train, cfg.ensemble, seed);

    const bool continuous = space.is_continuous();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dataset.size()));

    std::vector<std::vector<int>> seqs;
    if (!continuous) {
        seqs.reserve(dataset.size());
        for (const auto& d : dataset.designs) seqs.push_back(d.cats());
    }

    std::optional<GaussianDensity> g0, gt;
    std::optional<CategoricalSeqDensity> c0, ct;
    if (continuous) {
        g0 = fit_weighted(prep.X, ones);
        gt = g0;
    } else {
        c0 = fit_weighted(seqs, space.categories(), ones);
        ct = c0;
    }

    std::vector<std::string> notes;
    const int m = cfg.samples_per_iter;

    for (int t = 0; t < cfg.iterations; ++t) {
        if (autofocus) {
            // Re-fit the surrogate under the current sampling distribution.
            Eigen::VectorXd iw(static_cast<Eigen::Index>(dataset.size()));
            for (Eigen::Index i = 0; i < iw.size(); ++i) {
                const double lt = continuous ? log_density(*gt, prep.X.row(i))
                                             : log_density(*ct, seqs[static_cast<std::size_t>(i)]);
                const double l0 = continuous ? log_density(*g0, prep.X.row(i))
                                             : log_density(*c0, seqs[static_cast<std::size_t>(i)]);
                iw[i] = clamped_ratio(lt, l0);
            }
            if (diag) {
                diag->importance_weight_min.push_back(iw.minCoeff());
                diag->importance_weight_max.push_back(iw.maxCoeff());
            }
            ensemble = fit_ensemble_reweighted(prep.X, prep.y, iw, cfg.train, cfg.ensemble, seed);
        }

        // Draw the iteration population from the current model.
        Eigen::MatrixXd feats;
        std::vector<std::vector<int>> pop_seqs;
        Eigen::VectorXd log_p0(m), log_pt(m);
        if (continuous) {
            feats = sample(*gt, m, sub_seed(seed, 100 + t));
            for (int i = 0; i < m; ++i) {
                log_p0[i] = log_density(*g0, feats.row(i));
                log_pt[i] = log_density(*gt, feats.row(i));
            }
        } else {
            pop_seqs = sample(*ct, m, sub_seed(seed, 100 + t));
            feats.resize(m, prep.codec.dim());
            for (int i = 0; i < m; ++i) {
                feats.row(i) = prep.codec.encode(Design(pop_seqs[i]));
                log_p0[i] = log_density(*c0, pop_seqs[i]);
                log_pt[i] = log_density(*ct, pop_seqs[i]);
            }
        }
        if (diag && continuous) diag->iteration_samples.push_back(feats);

        Eigen::VectorXd mean, stddev;
        ensemble_stats(ensemble, feats, mean, stddev);
        const double tau = quantile_ceiling(mean, cfg.quantile);
        const Eigen::VectorXd w = cbas_weights(log_p0, log_pt, mean, stddev, tau);

        const double sw = w.sum();
        const double ess = sw > 0.0 ? sw * sw / w.squaredNorm() : 0.0;
        if (ess < 2.0) {
            notes.push_back("effective sample size fell below 2 at iteration " +
                            std::to_string(t) + "; stopped with the last valid model");
            break;
        }
        if (continuous)
            gt = fit_weighted(feats, w);
        else
            ct = fit_weighted(pop_seqs, space.categories(), w);
        if (diag) diag->iterations_run = t + 1;
    }

    // Final candidates from the adapted model, ranked by the surrogate.
    Eigen::MatrixXd cand;
    if (continuous) {
        cand = sample(*gt, K, sub_seed(seed, 7));
    } else {
        auto final_seqs = sample(*ct, K, sub_seed(seed, 7));
        cand.resize(K, prep.codec.dim());
        for (int i = 0; i < K; ++i) cand.row(i) = prep.codec.encode(Design(final_seqs[i]));
    }
    Eigen::VectorXd mean, stddev;
    ensemble_stats(ensemble, cand, mean, stddev);
    return finish(prep, cand, mean, method_name, seed, std::move(notes));
}

}  // namespace

CandidateSet cbas_propose(const Dataset& dataset, const DesignSpace& space, const CbasConfig& cfg,
                          int K, std::uint64_t seed, CbasDiagnostics* diag) {
    return cbas_impl(dataset, space, cfg, K, seed, diag, cfg.autofocus, "cbas");
}

CandidateSet autofocused_cbas_propose(const Dataset& dataset, const DesignSpace& space,
                                      const CbasConfig& cfg, int K, std::uint64_t seed,
                                      CbasDiagnostics* diag) {
    return cbas_impl(dataset, space, cfg, K, seed, diag, true, "auto-cbas");
}

// --- MINs ----------------------------------------------------------------------

CandidateSet mins_propose(const Dataset& dataset, const DesignSpace& space, const MinsConfig& cfg,
                          int K, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("propose: K must be >= 1");
    Prepared prep = prepare(dataset, space);

    ConditionalSampler cs;
    if (space.is_continuous()) {
        cs = fit_conditional(prep.X, prep.y, cfg.bandwidth);
    } else {
        std::vector<std::vector<int>> seqs;
        seqs.reserve(dataset.size());
        for (const auto& d : dataset.designs) seqs.push_back(d.cats());
        cs = fit_conditional(std::move(seqs), space.categories(), prep.y, cfg.bandwidth);
    }
    const double y_star = prep.y.maxCoeff() + cfg.y_margin;
    ConditionalSamples samples = sample_conditional(cs, y_star, K, sub_seed(seed, 3));

    std::vector<std::string> notes;
    if (samples.used_nearest_fallback)
        notes.push_back("kernel weights underflowed; fell back to the 32 nearest-score rows");

    Eigen::MatrixXd cand;
    if (space.is_continuous()) {
        cand = std::get<Eigen::MatrixXd>(samples.designs);
    } else {
        const auto& out_seqs = std::get<std::vector<std::vector<int>>>(samples.designs);
        cand.resize(K, prep.codec.dim());
        for (int i = 0; i < K; ++i) cand.row(i) = prep.codec.encode(Design(out_seqs[i]));
    }

    // Reporting-only surrogate; candidate generation never sees it.
    SurrogateEnsemble reporter = fit_ensemble(prep.X, prep.y, cfg.train, 1, sub_seed(seed, 4));
    return finish(prep, cand, ensemble_values(reporter, cand, ReduceMode::Single), "mins", seed,
                  std::move(notes));
}

// --- BO-qEI ---------------------------------------------------------------------

GpRegressor::GpRegressor(Eigen::MatrixXd X, Eigen::VectorXd y, double length_scale, double noise)
    : X_(std::move(X)), y_(std::move(y)), length_scale_(length_scale), noise_(noise) {
    if (X_.rows() != y_.size() || X_.rows() < 1)
        throw std::invalid_argument("GpRegressor: inputs/targets mismatch");
    if (length_scale_ <= 0.0 || noise_ <= 0.0)
        throw std::invalid_argument("GpRegressor: length scale and noise must be > 0");
    refit();
}

double GpRegressor::median_pairwise_distance(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    if (n < 2) return 1.0;
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) dist.push_back((X.row(i) - X.row(j)).norm());
    std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
    const double med = dist[dist.size() / 2];
    return med > 0.0 ? med : 1.0;
}

Eigen::MatrixXd GpRegressor::kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const {
    Eigen::MatrixXd sq(A.rows(), B.rows());
    const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
    const Eigen::VectorXd b2 = B.rowwise().squaredNorm();
    sq = -2.0 * A * B.transpose();
    sq.colwise() += a2;
    sq.rowwise() += b2.transpose();
    return (-sq.array().max(0.0) / (2.0 * length_scale_ * length_scale_)).exp();
}

void GpRegressor::refit() {
    const Eigen::Index n = X_.rows();
    y_mean_ = y_.mean();
    Eigen::MatrixXd Kmat = kernel(X_, X_);
    double jitter = 0.0;
    for (;;) {
        Eigen::LLT<Eigen::MatrixXd> llt(
            Kmat + (noise_ + jitter) * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success) {
            chol_lower_ = llt.matrixL();
            break;
        }
        jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0;
        if (jitter > 1e-2) throw std::runtime_error("GpRegressor: Cholesky failed");
    }
    const Eigen::VectorXd centered = y_.array() - y_mean_;
    alpha_ = chol_lower_.triangularView<Eigen::Lower>().solve(centered);
    alpha_ = chol_lower_.transpose().triangularView<Eigen::Upper>().solve(alpha_);
}

void GpRegressor::condition_on(const Eigen::MatrixXd& X_new, const Eigen::VectorXd& y_new) {
    if (X_new.cols() != X_.cols() || X_new.rows() != y_new.size())
        throw std::invalid_argument("GpRegressor: bad conditioning batch");
    const Eigen::Index n0 = X_.rows();
    X_.conservativeResize(n0 + X_new.rows(), Eigen::NoChange);
    X_.bottomRows(X_new.rows()) = X_new;
    y_.conservativeResize(n0 + y_new.size());
    y_.tail(y_new.size()) = y_new;
    refit();
}

Eigen::VectorXd GpRegressor::posterior_mean(const Eigen::MatrixXd& X_star) const {
    return (kernel(X_star, X_) * alpha_).array() + y_mean_;
}

void GpRegressor::posterior(const Eigen::MatrixXd& X_star, Eigen::VectorXd& mean,
                            Eigen::MatrixXd& cov) const {
    const Eigen::MatrixXd Ks = kernel(X_, X_star);  // n x p
    mean = (Ks.transpose() * alpha_).array() + y_mean_;
    const Eigen::MatrixXd V = chol_lower_.triangularView<Eigen::Lower>().solve(Ks);
    cov = kernel(X_star, X_star) - V.transpose() * V;
    cov = 0.5 * (cov + cov.transpose());
}

double monte_carlo_qei(const Eigen::MatrixXd& joint_samples, const std::vector<int>& batch,
                       double incumbent_best) {
    if (batch.empty()) return 0.0;
    const Eigen::Index S = joint_samples.rows();
    double total = 0.0;
    for (Eigen::Index s = 0; s < S; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int j : batch) best = std::max(best, joint_samples(s, j));
        total += std::max(0.0, best - incumbent_best);
    }
    return total / static_cast<double>(S);
}

CandidateSet bo_qei_propose(const Dataset& dataset, const DesignSpace& space,
                            const BoQeiConfig& cfg, int K, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("propose: K must be >= 1");
    if (cfg.gp_subsample < 2 || cfg.rounds < 0 || cfg.batch < 1 || cfg.mc_samples < 1)
        throw std::invalid_argument("bo_qei: invalid configuration");
    Prepared prep = prepare(dataset, space);
    SurrogateEnsemble ensemble = fit_ensemble(prep.X, prep.y, cfg.train, 1, seed);
    auto label = [&](const Eigen::MatrixXd& X) {
        return ensemble_values(ensemble, X, ReduceMode::Single);
    };

    std::mt19937_64 rng(sub_seed(seed, 5));
    const Eigen::Index n = prep.X.rows();
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(cfg.gp_subsample)));
    const Eigen::MatrixXd X0 = gather_rows(prep.X, idx);
    const Eigen::VectorXd y0 = label(X0);

    const double ell = GpRegressor::median_pairwise_distance(X0);
    GpRegressor gp(X0, y0, ell, 1e-4);

    const double perturb = space.is_continuous() ? kContinuousPerturbStd : kDiscretePerturbStd;
    for (int round = 0; round < cfg.rounds; ++round) {
        // Proposal pool: noisy copies of the best labeled points so far.
        const auto inc = top_k_indices(
            gp.train_targets(), std::min<int>(cfg.batch, static_cast<int>(gp.train_targets().size())));
        Eigen::MatrixXd pool(kProposalPool, prep.codec.dim());
        Eigen::MatrixXd Z = standard_normal(kProposalPool, prep.codec.dim(), rng);
        for (int i = 0; i < kProposalPool; ++i)
            pool.row(i) =
                gp.train_inputs().row(inc[static_cast<std::size_t>(i) % inc.size()]) +
                perturb * Z.row(i);

        Eigen::VectorXd mean;
        Eigen::MatrixXd cov;
        gp.posterior(pool, mean, cov);
        double jitter = 1e-10;
        Eigen::MatrixXd L;
        for (;;) {
            Eigen::LLT<Eigen::MatrixXd> llt(
                cov + jitter * Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
            if (llt.info() == Eigen::Success) {
                L = llt.matrixL();
                break;
            }
            jitter *= 10.0;
            if (jitter > 1e-2) throw std::runtime_error("bo_qei: posterior factorization failed");
        }
        Eigen::MatrixXd draws = standard_normal(cfg.mc_samples, kProposalPool, rng) * L.transpose();
        draws.rowwise() += mean.transpose();

        const double incumbent_best = gp.train_targets().maxCoeff();
        // Greedy batch assembly by marginal Monte-Carlo improvement.
        Eigen::VectorXd current = Eigen::VectorXd::Zero(cfg.mc_samples);
        std::vector<int> chosen;
        std::vector<char> used(kProposalPool, 0);
        for (int slot = 0; slot < cfg.batch; ++slot) {
            int best_p = -1;
            double best_gain = -1.0;
            for (int p = 0; p < kProposalPool; ++p) {
                if (used[p]) continue;
                const double gain =
                    (current.array()
                         .max((draws.col(p).array() - incumbent_best).max(0.0))
                         .mean());
                if (gain > best_gain) {
                    best_gain = gain;
                    best_p = p;
                }
            }
            used[best_p] = 1;
            chosen.push_back(best_p);
            current = current.array().max((draws.col(best_p).array() - incumbent_best).max(0.0));
        }

        Eigen::MatrixXd X_batch(static_cast<Eigen::Index>(chosen.size()), prep.codec.dim());
        for (std::size_t i = 0; i < chosen.size(); ++i)
            X_batch.row(static_cast<Eigen::Index>(i)) = pool.row(chosen[i]);
        gp.condition_on(X_batch, label(X_batch));
    }

    if (gp.train_targets().size() < K)
        throw std::invalid_argument("bo_qei: fewer labeled points than K; raise gp_subsample");
    const auto best = top_k_indices(gp.train_targets(), K);
    return finish(prep, gather_rows(gp.train_inputs(), best),
                  gather_vec(gp.train_targets(), best), "bo-qei", seed);
}

// --- COMs ------------------------------------------------------------------------

CandidateSet coms_propose(const Dataset& dataset, const DesignSpace& space, const ComsConfig& cfg,
                          int K, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("propose: K must be >= 1");
    if (static_cast<int>(dataset.size()) < K)
        throw std::invalid_argument("coms: dataset smaller than K; cannot initialize");
    Prepared prep = prepare(dataset, space);
    const double d = static_cast<double>(prep.codec.dim());
    const double alpha = cfg.alpha >= 0.0 ? cfg.alpha : (space.is_discrete() ? 2.0 : 0.5);
    const double lr =
        cfg.ascent_lr > 0.0 ? cfg.ascent_lr : (space.is_discrete() ? 2.0 : 0.05) * std::sqrt(d);

    FitResult fit = fit_conservative(prep.X, prep.y, seeded(cfg.train, seed), alpha,
                                     cfg.ascent_steps, lr);
    SurrogateEnsemble single;
    single.models.push_back(std::move(fit.model));
    single.val_losses = Eigen::VectorXd::Constant(1, fit.val_loss);

    Eigen::MatrixXd X0 = gather_rows(prep.X, top_k_indices(dataset.scores, K));
    Eigen::MatrixXd Xf = ascend(single, std::move(X0), ReduceMode::Single, cfg.ascent_steps, lr);
    return finish(prep, Xf, ensemble_values(single, Xf, ReduceMode::Single), "coms", seed);
}

// --- Dataset-best reference --------------------------------------------------------

CandidateSet dataset_best_propose(const Dataset& dataset, const DesignSpace& space, int K) {
    if (K < 1) throw std::invalid_argument("propose: K must be >= 1");
    if (static_cast<int>(dataset.size()) < K)
        throw std::invalid_argument("dataset-best: dataset smaller than K");
    const auto top = top_k_indices(dataset.scores, K);
    CandidateSet out;
    out.method_name = "dataset-best";
    out.surrogate_scores.resize(K);
    for (int i = 0; i < K; ++i) {
        require_valid(space, dataset.designs[top[i]]);
        out.designs.push_back(dataset.designs[top[i]]);
        out.surrogate_scores[i] = dataset.scores[top[i]];
    }
    return out;
}

}  // namespace mbo
