#include "mbo/surrogate.hpp"

#include "mbo/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mbo {

using nlohmann::json;

namespace {

// Forward pass caching per-layer activations; activations[0] is the input.
std::vector<Eigen::MatrixXd> forward_cached(const MlpModel& model, const Eigen::MatrixXd& X) {
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(model.num_layers() + 1);
    acts.push_back(X);
    for (int l = 0; l < model.num_layers(); ++l) {
        Eigen::MatrixXd z =
            (acts.back() * model.weights[l].transpose()).rowwise() + model.biases[l].transpose();
        if (l + 1 < model.num_layers()) z = z.array().tanh();
        acts.push_back(std::move(z));
    }
    return acts;
}

struct LayerGrads {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

LayerGrads zero_grads(const MlpModel& model) {
    LayerGrads g;
    for (int l = 0; l < model.num_layers(); ++l) {
        g.weights.emplace_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        g.biases.emplace_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
    return g;
}

// Accumulates weight gradients for output cotangent `delta_out` (B x 1) and
// returns the gradient with respect to the input rows.
Eigen::MatrixXd backward_accumulate(const MlpModel& model,
                                    const std::vector<Eigen::MatrixXd>& acts,
                                    Eigen::MatrixXd delta, LayerGrads& grads) {
    for (int l = model.num_layers() - 1; l >= 0; --l) {
        grads.weights[l].noalias() += delta.transpose() * acts[l];
        grads.biases[l] += delta.colwise().sum().transpose();
        Eigen::MatrixXd back = delta * model.weights[l];
        if (l > 0) back.array() *= 1.0 - acts[l].array().square();  // tanh'
        delta = std::move(back);
    }
    return delta;  // B x input_dim
}

Eigen::MatrixXd input_grad_only(const MlpModel& model, const std::vector<Eigen::MatrixXd>& acts,
                                Eigen::MatrixXd delta) {
    for (int l = model.num_layers() - 1; l >= 0; --l) {
        Eigen::MatrixXd back = delta * model.weights[l];
        if (l > 0) back.array() *= 1.0 - acts[l].array().square();
        delta = std::move(back);
    }
    return delta;
}

struct AdamState {
    LayerGrads m, v;
    long t = 0;
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    explicit AdamState(const MlpModel& model) : m(zero_grads(model)), v(zero_grads(model)) {}

    void step(MlpModel& model, const LayerGrads& g, double lr) {
        ++t;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
        for (int l = 0; l < model.num_layers(); ++l) {
            m.weights[l] = kBeta1 * m.weights[l] + (1.0 - kBeta1) * g.weights[l];
            v.weights[l].array() =
                kBeta2 * v.weights[l].array() + (1.0 - kBeta2) * g.weights[l].array().square();
            model.weights[l].array() -=
                lr * (m.weights[l].array() / c1) / ((v.weights[l].array() / c2).sqrt() + kEps);
            m.biases[l] = kBeta1 * m.biases[l] + (1.0 - kBeta1) * g.biases[l];
            v.biases[l].array() =
                kBeta2 * v.biases[l].array() + (1.0 - kBeta2) * g.biases[l].array().square();
            model.biases[l].array() -=
                lr * (m.biases[l].array() / c1) / ((v.biases[l].array() / c2).sqrt() + kEps);
        }
    }
};

MlpModel init_model(int input_dim, const std::vector<int>& hidden, std::mt19937_64& rng) {
    MlpModel model;
    model.layer_sizes.push_back(input_dim);
    for (int h : hidden) model.layer_sizes.push_back(h);
    model.layer_sizes.push_back(1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const int in = model.layer_sizes[l];
        const int out = model.layer_sizes[l + 1];
        Eigen::MatrixXd w(out, in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w(r, c) = scale * gauss(rng);
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(Eigen::VectorXd::Zero(out));
    }
    return model;
}

struct ConservativeOpts {
    double alpha = 0.0;
    int ascent_steps = 0;
    double ascent_lr = 0.0;
};

FitResult fit_core(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& weights_in, const TrainConfig& cfg,
                   const ConservativeOpts* cons) {
    const Eigen::Index n = X.rows();
    if (n == 0) throw std::invalid_argument("fit: empty dataset");
    if (y.size() != n) throw std::invalid_argument("fit: inputs/targets row mismatch");
    if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("fit: non-finite data");
    if (cfg.epochs < 1 || cfg.batch < 1 || cfg.step_size <= 0.0)
        throw std::invalid_argument("fit: invalid training configuration");

    Eigen::VectorXd weights;
    if (weights_in.size() == 0) {
        weights = Eigen::VectorXd::Ones(n);
    } else {
        if (weights_in.size() != n) throw std::invalid_argument("fit: weight count mismatch");
        if (!weights_in.allFinite() || (weights_in.array() < 0.0).any())
            throw std::invalid_argument("fit: weights must be finite and nonnegative");
        const double mean_w = weights_in.mean();
        if (mean_w <= 0.0) throw std::invalid_argument("fit: weights must not be all zero");
        weights = weights_in / mean_w;  // mean-1 renormalization
    }

    const Eigen::Index n_val = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * cfg.val_fraction)));
    const Eigen::Index n_train = n - n_val;
    if (n_train < 1)
        throw std::invalid_argument("fit: val_fraction leaves no training rows");

    std::mt19937_64 rng(cfg.seed);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    const Eigen::Index d = X.cols();
    Eigen::MatrixXd Xtr(n_train, d), Xval(n_val, d);
    Eigen::VectorXd ytr(n_train), yval(n_val), wtr(n_train);
    for (Eigen::Index i = 0; i < n_train; ++i) {
        Xtr.row(i) = X.row(order[i]);
        ytr[i] = y[order[i]];
        wtr[i] = weights[order[i]];
    }
    for (Eigen::Index i = 0; i < n_val; ++i) {
        Xval.row(i) = X.row(order[n_train + i]);
        yval[i] = y[order[n_train + i]];
    }

    FitResult result;
    result.model = init_model(static_cast<int>(d), cfg.hidden, rng);
    MlpModel& model = result.model;
    AdamState adam(model);

    const bool conservative = cons != nullptr && cons->alpha != 0.0;
    std::vector<Eigen::Index> idx(n_train);
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (Eigen::Index start = 0; start < n_train; start += cfg.batch) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch, n_train - start);
            Eigen::MatrixXd Xb(b, d);
            Eigen::VectorXd yb(b), wb(b);
            for (Eigen::Index i = 0; i < b; ++i) {
                Xb.row(i) = Xtr.row(idx[start + i]);
                yb[i] = ytr[idx[start + i]];
                wb[i] = wtr[idx[start + i]];
            }

            auto acts = forward_cached(model, Xb);
            const Eigen::VectorXd pred = acts.back().col(0);
            const Eigen::VectorXd residual = pred - yb;
            double loss = (wb.array() * residual.array().square()).mean();

            LayerGrads grads = zero_grads(model);
            Eigen::MatrixXd delta =
                (2.0 * (wb.array() * residual.array()) / static_cast<double>(b)).matrix();

            if (conservative) {
                // Adversarial points: ascent on the current model from the batch.
                Eigen::MatrixXd Xadv = Xb;
                for (int s = 0; s < cons->ascent_steps; ++s) {
                    auto adv_acts = forward_cached(model, Xadv);
                    Xadv += cons->ascent_lr *
                            input_grad_only(model, adv_acts, Eigen::MatrixXd::Ones(b, 1));
                }
                auto adv_acts = forward_cached(model, Xadv);
                const double adv_mean = adv_acts.back().col(0).mean();
                loss += cons->alpha * (adv_mean - pred.mean());
                delta.array() -= cons->alpha / static_cast<double>(b);
                backward_accumulate(
                    model, adv_acts,
                    Eigen::MatrixXd::Constant(b, 1, cons->alpha / static_cast<double>(b)), grads);
            }

            backward_accumulate(model, acts, std::move(delta), grads);
            adam.step(model, grads, cfg.step_size);
            result.step_losses.push_back(loss);
        }
    }

    const Eigen::VectorXd val_pred = predict_batch(model, Xval);
    result.val_loss = (val_pred - yval).squaredNorm() / static_cast<double>(n_val);
    return result;
}

}  // namespace

FitResult fit_surrogate(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                        const TrainConfig& cfg) {
    return fit_core(inputs, targets, Eigen::VectorXd(), cfg, nullptr);
}

FitResult fit_reweighted(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                         const Eigen::VectorXd& weights, const TrainConfig& cfg) {
    if (weights.size() == 0) throw std::invalid_argument("fit_reweighted: weights required");
    return fit_core(inputs, targets, weights, cfg, nullptr);
}

FitResult fit_conservative(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                           const TrainConfig& cfg, double alpha, int ascent_steps,
                           double ascent_lr) {
    if (alpha < 0.0) throw std::invalid_argument("fit_conservative: alpha must be >= 0");
    if (ascent_steps < 1) throw std::invalid_argument("fit_conservative: ascent_steps must be >= 1");
    if (ascent_lr <= 0.0) throw std::invalid_argument("fit_conservative: ascent_lr must be > 0");
    ConservativeOpts opts{alpha, ascent_steps, ascent_lr};
    return fit_core(inputs, targets, Eigen::VectorXd(), cfg, &opts);
}

double predict(const MlpModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.input_dim()) throw std::invalid_argument("predict: input length mismatch");
    return predict_batch(model, x.transpose())[0];
}

Eigen::VectorXd predict_batch(const MlpModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.input_dim())
        throw std::invalid_argument("predict_batch: input width mismatch");
    Eigen::MatrixXd a = X;
    for (int l = 0; l < model.num_layers(); ++l) {
        Eigen::MatrixXd z =
            (a * model.weights[l].transpose()).rowwise() + model.biases[l].transpose();
        if (l + 1 < model.num_layers()) z = z.array().tanh();
        a = std::move(z);
    }
    return a.col(0);
}

Eigen::VectorXd input_gradient(const MlpModel& model, const Eigen::VectorXd& x) {
    return input_gradient_batch(model, x.transpose()).row(0);
}

Eigen::MatrixXd input_gradient_batch(const MlpModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.input_dim())
        throw std::invalid_argument("input_gradient_batch: input width mismatch");
    auto acts = forward_cached(model, X);
    return input_grad_only(model, acts, Eigen::MatrixXd::Ones(X.rows(), 1));
}

ReduceMode reduce_mode_from_string(const std::string& name) {
    if (name == "single") return ReduceMode::Single;
    if (name == "min") return ReduceMode::Min;
    if (name == "mean") return ReduceMode::Mean;
    throw std::invalid_argument("unknown reduce mode: " + name);
}

std::string to_string(ReduceMode mode) {
    switch (mode) {
        case ReduceMode::Single: return "single";
        case ReduceMode::Min: return "min";
        case ReduceMode::Mean: return "mean";
    }
    return "?";
}

SurrogateEnsemble fit_ensemble(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                               const TrainConfig& cfg, int n, std::uint64_t seed) {
    return fit_ensemble_reweighted(inputs, targets, Eigen::VectorXd(), cfg, n, seed);
}

SurrogateEnsemble fit_ensemble_reweighted(const Eigen::MatrixXd& inputs,
                                          const Eigen::VectorXd& targets,
                                          const Eigen::VectorXd& weights, const TrainConfig& cfg,
                                          int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("fit_ensemble: need at least one member");
    SurrogateEnsemble ensemble;
    ensemble.val_losses.resize(n);
    for (int i = 0; i < n; ++i) {
        TrainConfig member_cfg = cfg;
        member_cfg.seed = seed + 1000003ull * static_cast<std::uint64_t>(i);
        FitResult fit = fit_core(inputs, targets, weights, member_cfg, nullptr);
        ensemble.models.push_back(std::move(fit.model));
        ensemble.val_losses[i] = fit.val_loss;
    }
    return ensemble;
}

Reduction ensemble_reduce(const SurrogateEnsemble& ensemble, const Eigen::VectorXd& x,
                          ReduceMode mode) {
    Eigen::MatrixXd X = x.transpose();
    Reduction r;
    r.value = ensemble_values(ensemble, X, mode)[0];
    r.gradient = ensemble_gradients(ensemble, X, mode).row(0);
    return r;
}

namespace {

void require_members(const SurrogateEnsemble& e) {
    if (e.models.empty()) throw std::invalid_argument("ensemble is empty");
}

Eigen::MatrixXd member_values(const SurrogateEnsemble& e, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd values(X.rows(), e.size());
    for (int m = 0; m < e.size(); ++m) values.col(m) = predict_batch(e.models[m], X);
    return values;
}

}  // namespace

Eigen::VectorXd ensemble_values(const SurrogateEnsemble& ensemble, const Eigen::MatrixXd& X,
                                ReduceMode mode) {
    require_members(ensemble);
    if (mode == ReduceMode::Single) return predict_batch(ensemble.models[0], X);
    Eigen::MatrixXd values = member_values(ensemble, X);
    if (mode == ReduceMode::Mean) return values.rowwise().mean();
    return values.rowwise().minCoeff();
}

Eigen::MatrixXd ensemble_gradients(const SurrogateEnsemble& ensemble, const Eigen::MatrixXd& X,
                                   ReduceMode mode) {
    require_members(ensemble);
    if (mode == ReduceMode::Single) return input_gradient_batch(ensemble.models[0], X);
    if (mode == ReduceMode::Mean) {
        Eigen::MatrixXd g = input_gradient_batch(ensemble.models[0], X);
        for (int m = 1; m < ensemble.size(); ++m)
            g += input_gradient_batch(ensemble.models[m], X);
        return g / static_cast<double>(ensemble.size());
    }
    // min: route each row through its argmin member, ties to the lowest index
    Eigen::MatrixXd values = member_values(ensemble, X);
    std::vector<Eigen::MatrixXd> member_grads(ensemble.size());
    for (int m = 0; m < ensemble.size(); ++m)
        member_grads[m] = input_gradient_batch(ensemble.models[m], X);
    Eigen::MatrixXd g(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        int best = 0;
        for (int m = 1; m < ensemble.size(); ++m)
            if (values(i, m) < values(i, best)) best = m;
        g.row(i) = member_grads[best].row(i);
    }
    return g;
}

void ensemble_stats(const SurrogateEnsemble& ensemble, const Eigen::MatrixXd& X,
                    Eigen::VectorXd& mean, Eigen::VectorXd& stddev) {
    require_members(ensemble);
    Eigen::MatrixXd values = member_values(ensemble, X);
    mean = values.rowwise().mean();
    Eigen::MatrixXd centered = values.colwise() - mean;
    stddev = (centered.array().square().rowwise().sum() / ensemble.size()).sqrt();
}

namespace {

Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
    Eigen::VectorXd ranks(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (Eigen::Index k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_rank_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length vectors of size >= 2");
    const Eigen::VectorXd ra = average_ranks(a);
    const Eigen::VectorXd rb = average_ranks(b);
    const Eigen::VectorXd ca = ra.array() - ra.mean();
    const Eigen::VectorXd cb = rb.array() - rb.mean();
    const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
    if (denom == 0.0)
        throw std::domain_error("spearman: correlation undefined for a constant vector");
    return ca.dot(cb) / denom;
}

double validation_rank_correlation(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                   const Eigen::VectorXd& targets) {
    if (inputs.rows() < 2)
        throw std::invalid_argument("validation_rank_correlation: need >= 2 rows");
    return spearman_rank_correlation(predict_batch(model, inputs), targets);
}

// --- Persistence -------------------------------------------------------------

namespace {

constexpr const char* kModelFormat = "mbo-model/1";

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void save_model(const MlpModel& model, const std::string& stem) {
    json manifest;
    manifest["format"] = kModelFormat;
    manifest["layer_sizes"] = model.layer_sizes;
    manifest["activation"] = model.activation;
    std::ofstream mf(stem + ".json");
    if (!mf) throw std::runtime_error("save_model: cannot open " + stem + ".json");
    mf << manifest.dump(2) << "\n";

    std::ofstream rf(stem + ".csv");
    if (!rf) throw std::runtime_error("save_model: cannot open " + stem + ".csv");
    for (int l = 0; l < model.num_layers(); ++l) {
        const Eigen::MatrixXd& w = model.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                rf << format_real(w(r, c)) << (c + 1 < w.cols() ? "," : "");
            rf << "\n";
        }
        const Eigen::VectorXd& b = model.biases[l];
        for (Eigen::Index r = 0; r < b.size(); ++r)
            rf << format_real(b[r]) << (r + 1 < b.size() ? "," : "");
        rf << "\n";
    }
}

MlpModel load_model(const std::string& stem) {
    std::ifstream mf(stem + ".json");
    if (!mf) throw std::runtime_error("load_model: cannot open " + stem + ".json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw FormatError(std::string("load_model: malformed manifest: ") + e.what());
    }
    if (!manifest.contains("format") || manifest["format"] != kModelFormat)
        throw VersionError("load_model: unsupported model format version");

    MlpModel model;
    model.layer_sizes = manifest["layer_sizes"].get<std::vector<int>>();
    model.activation = manifest["activation"].get<std::string>();
    if (model.layer_sizes.size() < 2 || model.layer_sizes.back() != 1)
        throw FormatError("load_model: invalid layer sizes");

    std::ifstream rf(stem + ".csv");
    if (!rf) throw std::runtime_error("load_model: cannot open " + stem + ".csv");
    auto next_row = [&rf](Eigen::Index expect) {
        std::string line;
        if (!std::getline(rf, line)) throw FormatError("load_model: truncated rows file");
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
        if (static_cast<Eigen::Index>(vals.size()) != expect)
            throw FormatError("load_model: wrong row width");
        return vals;
    };
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const int in = model.layer_sizes[l];
        const int out = model.layer_sizes[l + 1];
        Eigen::MatrixXd w(out, in);
        for (int r = 0; r < out; ++r) {
            auto vals = next_row(in);
            for (int c = 0; c < in; ++c) w(r, c) = vals[c];
        }
        auto bias = next_row(out);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::Map<Eigen::VectorXd>(bias.data(), out));
    }
    return model;
}

}  // namespace mbo
