#pragma once

// Toy training harness: synthetic tasks, a small √2·GELU feed-forward network
// with hand-written backprop, and a training loop that drives every optimizer
// in optim.hpp while logging per-layer norm metrics.

#include "steadynorm/errors.hpp"
#include "steadynorm/linalg.hpp"
#include "steadynorm/lmo.hpp"
#include "steadynorm/optim.hpp"
#include "steadynorm/random.hpp"
#include "steadynorm/schedule.hpp"
#include "steadynorm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace steadynorm {

// ---------------------------------------------------------------------------
// synthetic data

enum class TaskKind { GaussianBlobs, LinearRegression };

inline std::string_view to_string(TaskKind k) {
    return k == TaskKind::GaussianBlobs ? "gaussian_blobs_classification" : "linear_regression";
}

inline std::optional<TaskKind> parse_task_kind(std::string_view s) {
    for (auto k : {TaskKind::GaussianBlobs, TaskKind::LinearRegression}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

struct SyntheticTask {
    TaskKind kind = TaskKind::GaussianBlobs;
    std::size_t input_dim = 32;
    std::size_t num_classes = 8;
    std::size_t samples = 8192;
    double noise_scale = 1.0;
    /// Distance of each blob mean from the origin.
    double separation = 4.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (input_dim < 1) throw ConfigError("task: input_dim must be >= 1");
        if (kind == TaskKind::GaussianBlobs && num_classes < 2) {
            throw ConfigError("task: classification needs num_classes >= 2");
        }
        if (samples < 10) throw ConfigError("task: samples must be >= 10");
        if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
            throw ConfigError("task: noise_scale must be >= 0");
        }
        if (kind == TaskKind::GaussianBlobs && !(separation > 0.0)) {
            throw ConfigError("task: separation must be > 0");
        }
        if (kind == TaskKind::GaussianBlobs && noise_scale == 0.0 && samples < num_classes) {
            throw ConfigError("task: fewer samples than classes");
        }
    }

    [[nodiscard]] std::size_t output_dim() const {
        return kind == TaskKind::GaussianBlobs ? num_classes : 1;
    }
};

/// Rows of x are samples. Classification fills labels, regression fills targets.
struct Dataset {
    linalg::Matrix x;
    std::vector<int> labels;
    std::vector<double> targets;

    [[nodiscard]] std::size_t size() const { return x.rows(); }
};

struct TaskData {
    SyntheticTask task;
    Dataset train;
    Dataset validation;
    /// Blob means (classification) or the true weight vector (regression, one row).
    linalg::Matrix centers;
};

namespace detail {

inline Dataset take_rows(const linalg::Matrix& x, const std::vector<int>& labels,
                         const std::vector<double>& targets, const std::vector<std::size_t>& idx,
                         std::size_t begin, std::size_t end) {
    Dataset d;
    d.x = linalg::Matrix(end - begin, x.cols());
    for (std::size_t i = begin; i < end; ++i) {
        std::copy(x.row(idx[i]).begin(), x.row(idx[i]).end(), d.x.row(i - begin).begin());
        if (!labels.empty()) d.labels.push_back(labels[idx[i]]);
        if (!targets.empty()) d.targets.push_back(targets[idx[i]]);
    }
    return d;
}

}  // namespace detail

/// Deterministic dataset with a 90/10 train/validation split.
inline TaskData gen_task(const SyntheticTask& spec) {
    spec.validate();
    const std::size_t n = spec.samples;
    const std::size_t d = spec.input_dim;
    NormalSampler normal(derive_seed(spec.seed, 0));
    TaskData out;
    out.task = spec;
    linalg::Matrix x(n, d);
    std::vector<int> labels;
    std::vector<double> targets;
    if (spec.kind == TaskKind::GaussianBlobs) {
        const std::size_t k = spec.num_classes;
        out.centers = linalg::Matrix(k, d);
        for (std::size_t c = 0; c < k; ++c) {
            auto row = out.centers.row(c);
            normal.fill(row);
            linalg::scale(row, spec.separation / linalg::norm2(row));
        }
        labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(i % k);  // balanced classes
            auto row = x.row(i);
            normal.fill(row);
            const auto mean = out.centers.row(i % k);
            for (std::size_t j = 0; j < d; ++j) row[j] = mean[j] + spec.noise_scale * row[j];
        }
    } else {
        out.centers = linalg::Matrix(1, d);
        normal.fill(out.centers.values());
        linalg::scale(out.centers.values(), 1.0 / std::sqrt(static_cast<double>(d)));
        targets.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = x.row(i);
            normal.fill(row);
            targets[i] = linalg::dot(row, out.centers.row(0)) + spec.noise_scale * normal();
        }
    }
    Rng shuffle(derive_seed(spec.seed, 1));
    const auto idx = permutation(n, shuffle);
    const std::size_t n_train = n - n / 10;
    out.train = detail::take_rows(x, labels, targets, idx, 0, n_train);
    out.validation = detail::take_rows(x, labels, targets, idx, n_train, n);
    return out;
}

// ---------------------------------------------------------------------------
// model

struct ModelSpec {
    std::size_t input_dim = 32;
    std::vector<std::size_t> hidden = {64};
    std::size_t output_dim = 8;
    double activation_scale = std::numbers::sqrt2;
    /// Weights start as N(0, init_scale²/fan_in); biases start at zero.
    double init_scale = 1.0;
    bool output_bias_exempt = false;
    /// Divide each hidden pre-bias activation row W·x by its RMS, which makes
    /// the loss invariant to the scale of hidden weight matrices.
    bool normalize_hidden = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (input_dim < 1 || output_dim < 1) throw ConfigError("model: dimensions must be >= 1");
        for (auto h : hidden) {
            if (h < 1) throw ConfigError("model: hidden widths must be >= 1");
        }
        if (!(activation_scale > 0.0)) throw ConfigError("model: activation_scale must be > 0");
        if (!(init_scale >= 0.0)) throw ConfigError("model: init_scale must be >= 0");
    }
};

/// Parameters in forward order: for each hidden layer its weight then bias,
/// then the output weight and bias. specs[i] describes params[i].
struct ToyModel {
    std::vector<ParamTensor> params;
    std::vector<LayerSpec> specs;
    double activation_scale = std::numbers::sqrt2;
    bool normalize_hidden = false;

    [[nodiscard]] std::size_t num_layers() const { return params.size() / 2; }
    [[nodiscard]] std::size_t output_weight_index() const { return params.size() - 2; }

    [[nodiscard]] const linalg::Matrix& weight(std::size_t layer) const {
        return std::get<linalg::Matrix>(params[2 * layer].value);
    }
    [[nodiscard]] const linalg::Vector& bias(std::size_t layer) const {
        return std::get<linalg::Vector>(params[2 * layer + 1].value);
    }
    [[nodiscard]] std::size_t output_dim() const { return weight(num_layers() - 1).rows(); }
};

inline ToyModel make_toy_model(const ModelSpec& spec) {
    spec.validate();
    ToyModel m;
    m.activation_scale = spec.activation_scale;
    m.normalize_hidden = spec.normalize_hidden;
    NormalSampler normal(derive_seed(spec.seed, 2));
    std::vector<std::size_t> dims{spec.input_dim};
    dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
    dims.push_back(spec.output_dim);
    const std::size_t layers = dims.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const bool output = l + 1 == layers;
        const std::string prefix = output ? "output" : "hidden" + std::to_string(l);
        linalg::Matrix w(dims[l + 1], dims[l]);
        normal.fill(w.values());
        linalg::scale(w.values(), spec.init_scale / std::sqrt(static_cast<double>(dims[l])));
        m.params.push_back({prefix + ".weight", std::move(w)});
        m.params.push_back({prefix + ".bias", linalg::Vector(dims[l + 1])});

        LayerSpec ws;
        ws.name = prefix + ".weight";
        ws.family = output ? NormFamily::Sign : NormFamily::Spectral;
        ws.correction_exempt = output;
        LayerSpec bs;
        bs.name = prefix + ".bias";
        bs.family = NormFamily::Bias;
        bs.correction_exempt = output && spec.output_bias_exempt;
        m.specs.push_back(ws);
        m.specs.push_back(bs);
    }
    return m;
}

// ---------------------------------------------------------------------------
// forward / backward

struct Batch {
    linalg::Matrix x;
    std::vector<int> labels;
    std::vector<double> targets;

    [[nodiscard]] std::size_t size() const { return x.rows(); }
    [[nodiscard]] bool regression() const { return labels.empty(); }
};

inline Batch make_batch(const Dataset& d, std::span<const std::size_t> rows) {
    if (rows.empty()) throw DomainError("batch: no rows");
    Batch b;
    b.x = linalg::Matrix(rows.size(), d.x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(d.x.row(rows[i]).begin(), d.x.row(rows[i]).end(), b.x.row(i).begin());
        if (!d.labels.empty()) b.labels.push_back(d.labels[rows[i]]);
        if (!d.targets.empty()) b.targets.push_back(d.targets[rows[i]]);
    }
    return b;
}

inline Batch full_batch(const Dataset& d) {
    Batch b;
    b.x = d.x;
    b.labels = d.labels;
    b.targets = d.targets;
    return b;
}

struct ForwardResult {
    double loss = 0.0;
    /// Output-layer values, one row per sample.
    linalg::Matrix logits;
    /// Gradients aligned with model.params (empty when not requested).
    std::vector<Tensor> grads;
    std::size_t correct = 0;
};

namespace detail {

inline double gelu(double z) { return 0.5 * z * std::erfc(-z / std::numbers::sqrt2); }

inline double gelu_grad(double z) {
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + z * pdf;
}

// z = x Wᵀ + b
inline linalg::Matrix affine(const linalg::Matrix& x, const linalg::Matrix& w, const linalg::Vector& b) {
    linalg::Matrix z(x.rows(), w.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto xr = x.row(r);
        auto zr = z.row(r);
        for (std::size_t o = 0; o < w.rows(); ++o) zr[o] = linalg::dot(xr, w.row(o)) + b[o];
    }
    return z;
}

inline void check_activations(const linalg::Matrix& z, const std::string& layer) {
    if (!linalg::all_finite(z.values())) {
        throw NonFiniteError("non-finite activations in layer " + layer);
    }
}

// Softmax cross-entropy for one row of logits; writes dlogits = softmax − onehot.
inline double cross_entropy_row(std::span<const double> v, int label, std::span<double> dv) {
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        dv[i] = std::exp(v[i] - mx);
        s += dv[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i) dv[i] /= s;
    dv[static_cast<std::size_t>(label)] -= 1.0;
    return std::log(s) + mx - v[static_cast<std::size_t>(label)];
}

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

/// Mean-reduced loss (cross-entropy, or ½·squared error for regression) and,
/// if requested, exact gradients for every parameter.
inline ForwardResult forward_backward(const ToyModel& model, const Batch& batch, bool want_grads = true) {
    const std::size_t n = batch.size();
    if (n == 0) throw DomainError("forward_backward: empty batch");
    if (batch.x.cols() != model.weight(0).cols()) throw DomainError("forward_backward: input width mismatch");
    const std::size_t layers = model.num_layers();
    const bool regression = batch.regression();
    if (regression && (batch.targets.size() != n || model.output_dim() != 1)) {
        throw DomainError("forward_backward: regression needs one target per row and one output");
    }
    if (!regression && batch.labels.size() != n) throw DomainError("forward_backward: label count mismatch");

    // inputs[l] feeds layer l; pre[l] is its output before the activation.
    // Normalized hidden layers keep W·x/rms in normed[l] and the rms per row in rms[l].
    std::vector<linalg::Matrix> inputs{batch.x};
    std::vector<linalg::Matrix> pre;
    std::vector<linalg::Matrix> normed(layers);
    std::vector<std::vector<double>> rms(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const bool norm = model.normalize_hidden && l + 1 < layers;
        if (!norm) {
            pre.push_back(detail::affine(inputs.back(), model.weight(l), model.bias(l)));
        } else {
            linalg::Matrix z = detail::affine(inputs.back(), model.weight(l), linalg::Vector(model.weight(l).rows()));
            rms[l].resize(n);
            for (std::size_t r = 0; r < n; ++r) {
                auto zr = z.row(r);
                rms[l][r] = linalg::rms_norm(zr);
                linalg::scale(zr, 1.0 / rms[l][r]);
            }
            normed[l] = z;
            for (std::size_t r = 0; r < n; ++r) {
                auto zr = z.row(r);
                for (std::size_t o = 0; o < zr.size(); ++o) zr[o] += model.bias(l)[o];
            }
            pre.push_back(std::move(z));
        }
        detail::check_activations(pre.back(), model.params[2 * l].name);
        if (l + 1 < layers) {
            linalg::Matrix a = pre.back();
            for (double& v : a.values()) v = model.activation_scale * detail::gelu(v);
            inputs.push_back(std::move(a));
        }
    }

    ForwardResult out;
    out.logits = pre.back();
    const std::size_t k = out.logits.cols();
    linalg::Matrix delta(n, k);
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto v = out.logits.row(r);
        auto dv = delta.row(r);
        if (regression) {
            const double e = v[0] - batch.targets[r];
            loss += 0.5 * e * e;
            dv[0] = e;
        } else {
            const int y = batch.labels[r];
            if (y < 0 || static_cast<std::size_t>(y) >= k) throw DomainError("forward_backward: label out of range");
            loss += detail::cross_entropy_row(v, y, dv);
            if (detail::argmax(v) == static_cast<std::size_t>(y)) ++out.correct;
        }
    }
    out.loss = loss * inv_n;
    if (!std::isfinite(out.loss)) throw NonFiniteError("non-finite loss");
    if (!want_grads) return out;

    linalg::scale(delta.values(), inv_n);
    out.grads.resize(model.params.size());
    for (std::size_t l = layers; l-- > 0;) {
        const auto& w = model.weight(l);
        const auto& x = inputs[l];
        linalg::Matrix gw(w.rows(), w.cols());
        linalg::Vector gb(w.rows());
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t o = 0; o < w.rows(); ++o) gb[o] += delta(r, o);
        }
        if (!rms[l].empty()) {
            // d(z/rms) = (dh − h·mean(dh∘h))/rms with h = z/rms.
            for (std::size_t r = 0; r < n; ++r) {
                auto dr = delta.row(r);
                const auto hr = normed[l].row(r);
                const double proj = linalg::dot(dr, hr) / static_cast<double>(hr.size());
                for (std::size_t o = 0; o < dr.size(); ++o) dr[o] = (dr[o] - hr[o] * proj) / rms[l][r];
            }
        }
        for (std::size_t r = 0; r < n; ++r) {
            const auto dr = delta.row(r);
            const auto xr = x.row(r);
            for (std::size_t o = 0; o < w.rows(); ++o) {
                const double d = dr[o];
                auto gwo = gw.row(o);
                for (std::size_t i = 0; i < xr.size(); ++i) gwo[i] += d * xr[i];
            }
        }
        if (l > 0) {
            // Back through the weight and the activation of layer l − 1.
            linalg::Matrix next(n, w.cols());
            const auto& z = pre[l - 1];
            for (std::size_t r = 0; r < n; ++r) {
                const auto dr = delta.row(r);
                auto nr = next.row(r);
                for (std::size_t o = 0; o < w.rows(); ++o) {
                    const auto wo = w.row(o);
                    for (std::size_t i = 0; i < nr.size(); ++i) nr[i] += dr[o] * wo[i];
                }
                const auto zr = z.row(r);
                for (std::size_t i = 0; i < nr.size(); ++i) {
                    nr[i] *= model.activation_scale * detail::gelu_grad(zr[i]);
                }
            }
            delta = std::move(next);
        }
        out.grads[2 * l] = std::move(gw);
        out.grads[2 * l + 1] = std::move(gb);
    }
    for (std::size_t i = 0; i < out.grads.size(); ++i) {
        if (!linalg::all_finite(values(out.grads[i]))) {
            throw NonFiniteError("non-finite gradient in layer " + model.params[i].name);
        }
    }
    return out;
}

struct Evaluation {
    double loss = 0.0;
    /// Fraction of rows whose largest logit is the label (0 for regression).
    double accuracy = 0.0;
};

inline Evaluation evaluate(const ToyModel& model, const Dataset& data) {
    const auto r = forward_backward(model, full_batch(data), false);
    Evaluation e;
    e.loss = r.loss;
    if (!data.labels.empty()) e.accuracy = static_cast<double>(r.correct) / static_cast<double>(data.size());
    return e;
}

// ---------------------------------------------------------------------------
// training loop

enum class OptimizerKind { AdamW, AdamC, RenormAdamW, Scion, ScionC };

inline std::string_view to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::AdamW: return "adamw";
        case OptimizerKind::AdamC: return "adamc";
        case OptimizerKind::RenormAdamW: return "renorm-adamw";
        case OptimizerKind::Scion: return "scion";
        case OptimizerKind::ScionC: return "scionc";
    }
    return "?";
}

inline std::optional<OptimizerKind> parse_optimizer(std::string_view s) {
    for (auto k : {OptimizerKind::AdamW, OptimizerKind::AdamC, OptimizerKind::RenormAdamW,
                   OptimizerKind::Scion, OptimizerKind::ScionC}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

struct MetricsRecord;

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::ScionC;
    /// γ_t, α_t and the default C² schedule. Momentum for Scion/ScionC comes
    /// from here; hp.alpha is not used by the loop.
    ScheduleSet schedule;
    HyperParams hp;
    std::size_t batch_size = 128;
    std::int64_t log_every = 10;
    /// λ of every layer except the output weight (Scion, AdamW, base λ of
    /// AdamC). ScionC replaces it with the C²-derived value on corrected layers.
    double lambda = 0.0;
    /// Peak-γ multiplier and fixed λ of the output weight (the Sign layer).
    double output_gamma_scale = 1.0;
    double output_lambda = 0.0;
    /// Layers excluded from the λ ∝ γ correction in addition to the model's own flags.
    std::vector<std::string> exempt_layers;
    /// Extra C² schedules by layer name; other corrected layers use schedule.c_sq.
    std::map<std::string, CSqSchedule> layer_c_sq;
    /// Seed of the minibatch order.
    std::uint64_t seed = 0;
    /// Verify the renormalized-AdamW norm identity on every step.
    bool check_norm_law = false;
    bool track_validation = true;
    /// Called with each record as it is logged.
    std::function<void(const MetricsRecord&)> on_record;

    void validate() const {
        try {
            schedule.validate();
            for (const auto& [name, c] : layer_c_sq) c.validate();
        } catch (const DomainError& e) {
            throw ConfigError(std::string("train: ") + e.what());
        }
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
        if (!(lambda >= 0.0) || !(output_lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
        if (!(output_gamma_scale > 0.0)) throw ConfigError("train: output_gamma_scale must be > 0");
        try {
            hp.validate();
        } catch (const DomainError& e) {
            throw ConfigError(std::string("train: ") + e.what());
        }
    }
};

struct LayerMetrics {
    double l2_norm = 0.0;
    double family_norm = 0.0;
    double grad_norm = 0.0;
    double theta_dot_u = 0.0;
    double lambda = 0.0;
    /// Power-iteration estimate persisted across steps (NaN for vectors).
    double tracked_spectral = std::numeric_limits<double>::quiet_NaN();
};

/// One row per logging interval. loss, grad_norm and theta_dot_u are means over
/// the steps of the interval; everything else is the value at `step`.
struct MetricsRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    double gamma = 0.0;
    double alpha = 0.0;
    std::vector<LayerMetrics> layers;
    double sign_norm = 0.0;
    double spectral_geomean = 0.0;
    double tracked_spectral_geomean = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

/// CSV column names matching metrics_row().
inline std::vector<std::string> metrics_columns(const ToyModel& model) {
    std::vector<std::string> c{"step", "loss", "gamma", "alpha"};
    for (const auto& p : model.params) {
        for (const char* f : {"l2_norm", "family_norm", "grad_norm", "theta_dot_u", "lambda"}) {
            c.push_back(p.name + "." + f);
        }
    }
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        if (is_matrix(model.params[i].value)) c.push_back(model.params[i].name + ".tracked_spectral");
    }
    for (const char* f : {"sign_norm", "spectral_geomean", "tracked_spectral_geomean", "val_loss", "val_accuracy"}) {
        c.emplace_back(f);
    }
    return c;
}

inline std::vector<double> metrics_row(const ToyModel& model, const MetricsRecord& r) {
    std::vector<double> v{static_cast<double>(r.step), r.loss, r.gamma, r.alpha};
    for (const auto& l : r.layers) {
        v.insert(v.end(), {l.l2_norm, l.family_norm, l.grad_norm, l.theta_dot_u, l.lambda});
    }
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        if (is_matrix(model.params[i].value)) v.push_back(r.layers[i].tracked_spectral);
    }
    v.insert(v.end(), {r.sign_norm, r.spectral_geomean, r.tracked_spectral_geomean, r.val_loss, r.val_accuracy});
    return v;
}

struct TrainResult {
    std::vector<MetricsRecord> records;
    bool diverged = false;
    std::int64_t divergence_step = 0;
    std::string divergence_message;
    /// First step at which a synthesized α schedule hits alpha_max.
    std::optional<std::int64_t> clamp_step;
    std::int64_t skipped_updates = 0;
    double initial_loss = 0.0;
    Evaluation train_eval;
    Evaluation val_eval;
};

namespace detail {

// Layer hyperparameters implied by the optimizer and config.
inline void configure_layers(ToyModel& model, const TrainConfig& cfg) {
    const bool corrected = cfg.optimizer == OptimizerKind::ScionC || cfg.optimizer == OptimizerKind::AdamC;
    for (std::size_t i = 0; i < model.specs.size(); ++i) {
        auto& s = model.specs[i];
        const bool output = i == model.output_weight_index();
        if (std::find(cfg.exempt_layers.begin(), cfg.exempt_layers.end(), s.name) != cfg.exempt_layers.end()) {
            s.correction_exempt = true;
        }
        s.gamma_scale = output ? cfg.output_gamma_scale : 1.0;
        s.lambda = output ? cfg.output_lambda : cfg.lambda;
        s.decay_mode = corrected && !s.correction_exempt ? DecayMode::Corrected : DecayMode::Fixed;
        s.c_sq_schedule = cfg.layer_c_sq.count(s.name) ? s.name : "default";
        s.validate();
    }
}

inline double geomean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) {
        if (!(x > 0.0)) return 0.0;
        s += std::log(x);
    }
    return std::exp(s / static_cast<double>(xs.size()));
}

}  // namespace detail

/// Train `model` in place. Non-finite losses, activations or gradients stop the
/// run and flag it as diverged; the records up to that point are kept.
inline TrainResult run_training(ToyModel& model, const TaskData& data, const TrainConfig& cfg) {
    cfg.validate();
    for (const auto& name : cfg.exempt_layers) {
        if (std::none_of(model.specs.begin(), model.specs.end(), [&](const LayerSpec& s) { return s.name == name; })) {
            throw ConfigError("train: unknown layer '" + name + "' in exempt_layers");
        }
    }
    detail::configure_layers(model, cfg);
    const std::size_t np = model.params.size();
    const std::int64_t total = cfg.schedule.total_steps;
    const double gamma_peak = cfg.schedule.gamma_peak;
    const std::size_t n_train = data.train.size();
    const std::size_t batch = std::min(cfg.batch_size, n_train);

    TrainResult res;
    if (cfg.schedule.alpha.kind == AlphaKind::Synthesized) res.clamp_step = synthesized_clamp_step(cfg.schedule);
    std::vector<AdamState> adam_state(np);
    std::vector<ScionState> scion_state(np);
    std::vector<linalg::PowerIterState> power(np);
    std::vector<double> tracked(np, std::numeric_limits<double>::quiet_NaN());

    Rng order(derive_seed(cfg.seed, 3));
    std::vector<std::size_t> perm = permutation(n_train, order);
    std::size_t cursor = 0;

    double loss_acc = 0.0;
    std::vector<double> grad_acc(np, 0.0);
    std::vector<double> dot_acc(np, 0.0);
    std::int64_t acc_steps = 0;
    std::vector<double> last_lambda(np, 0.0);

    for (std::int64_t t = 1; t <= total; ++t) {
        if (cursor + batch > n_train) {
            perm = permutation(n_train, order);
            cursor = 0;
        }
        const Batch b = make_batch(data.train, std::span<const std::size_t>(perm).subspan(cursor, batch));
        cursor += batch;

        const double gamma_t = gamma_at(cfg.schedule, t);
        const double alpha_t = alpha_at(cfg.schedule, t);
        ForwardResult fr;
        try {
            fr = forward_backward(model, b);
        } catch (const NonFiniteError& e) {
            res.diverged = true;
            res.divergence_step = t;
            res.divergence_message = e.what();
            break;
        }
        if (t == 1) res.initial_loss = fr.loss;

        HyperParams hp = cfg.hp;
        hp.alpha = alpha_t;
        try {
            for (std::size_t i = 0; i < np; ++i) {
                const LayerSpec& spec = model.specs[i];
                const double g_l = gamma_t * spec.gamma_scale;
                StepReport rep;
                switch (cfg.optimizer) {
                    case OptimizerKind::AdamW:
                        rep = adamw_step(model.params[i], fr.grads[i], adam_state[i], g_l, spec.lambda, hp);
                        break;
                    case OptimizerKind::AdamC:
                        rep = adamw_step(model.params[i], fr.grads[i], adam_state[i], g_l,
                                         adamc_lambda(gamma_t, gamma_peak, spec.lambda, spec.correction_exempt), hp);
                        break;
                    case OptimizerKind::RenormAdamW: {
                        rep = renorm_adamw_step(model.params[i], fr.grads[i], adam_state[i], g_l, spec.lambda, hp);
                        if (cfg.check_norm_law && rep.renormalized) {
                            const double post = linalg::norm2(values(model.params[i].value));
                            if (std::abs(post - rep.target_norm) > 2.0 * hp.eps_norm) {
                                throw DomainError("renormalized AdamW norm law violated at step " +
                                                  std::to_string(t) + " in layer " + spec.name);
                            }
                        }
                        break;
                    }
                    case OptimizerKind::Scion:
                        rep = scion_step(model.params[i], fr.grads[i], scion_state[i], g_l, spec.lambda, hp, spec);
                        break;
                    case OptimizerKind::ScionC: {
                        const auto it = cfg.layer_c_sq.find(spec.name);
                        const CSqSchedule& cs = it != cfg.layer_c_sq.end() ? it->second : cfg.schedule.c_sq;
                        rep = scionc_step(model.params[i], fr.grads[i], scion_state[i], g_l, alpha_t,
                                          c_sq_at(cs, t, total), spec, spec.lambda, hp);
                        break;
                    }
                }
                if (rep.skipped) ++res.skipped_updates;
                last_lambda[i] = rep.lambda;
                dot_acc[i] += rep.theta_dot_u;
                grad_acc[i] += linalg::norm2(values(fr.grads[i]));
                if (!linalg::all_finite(values(model.params[i].value))) {
                    throw NonFiniteError("non-finite weights in layer " + spec.name);
                }
                if (const auto* w = std::get_if<linalg::Matrix>(&model.params[i].value)) {
                    tracked[i] = linalg::spectral_norm(*w, power[i], 1);
                }
            }
        } catch (const NonFiniteError& e) {
            res.diverged = true;
            res.divergence_step = t;
            res.divergence_message = e.what();
            break;
        }
        loss_acc += fr.loss;
        ++acc_steps;

        if (t % cfg.log_every == 0 || t == total) {
            MetricsRecord rec;
            rec.step = t;
            rec.gamma = gamma_t;
            rec.alpha = alpha_t;
            const auto k = static_cast<double>(acc_steps);
            rec.loss = loss_acc / k;
            std::vector<double> spectral_exact;
            std::vector<double> spectral_tracked;
            for (std::size_t i = 0; i < np; ++i) {
                LayerMetrics lm;
                const auto& p = model.params[i].value;
                lm.l2_norm = linalg::norm2(values(p));
                lm.family_norm = family_norm(p, model.specs[i].family);
                lm.grad_norm = grad_acc[i] / k;
                lm.theta_dot_u = dot_acc[i] / k;
                lm.lambda = last_lambda[i];
                lm.tracked_spectral = tracked[i];
                if (model.specs[i].family == NormFamily::Spectral) {
                    spectral_exact.push_back(lm.family_norm);
                    spectral_tracked.push_back(tracked[i]);
                }
                if (i == model.output_weight_index()) rec.sign_norm = linalg::sign_norm(model.weight(model.num_layers() - 1));
                rec.layers.push_back(lm);
            }
            rec.spectral_geomean = detail::geomean(spectral_exact);
            rec.tracked_spectral_geomean = detail::geomean(spectral_tracked);
            if (cfg.track_validation) {
                const auto ev = evaluate(model, data.validation);
                rec.val_loss = ev.loss;
                rec.val_accuracy = ev.accuracy;
            }
            res.records.push_back(std::move(rec));
            if (cfg.on_record) cfg.on_record(res.records.back());
            loss_acc = 0.0;
            std::fill(grad_acc.begin(), grad_acc.end(), 0.0);
            std::fill(dot_acc.begin(), dot_acc.end(), 0.0);
            acc_steps = 0;
        }
    }
    if (!res.diverged) {
        res.train_eval = evaluate(model, data.train);
        res.val_eval = evaluate(model, data.validation);
    }
    return res;
}

// ---------------------------------------------------------------------------
// output-layer alignment

struct AlignmentReport {
    std::size_t rows = 0;
    std::size_t correct = 0;
    /// Correct rows with L((1+ε)v) < L(v), and those where both losses round equal.
    std::size_t strict_decrease = 0;
    std::size_t ties = 0;
    /// Misclassified rows whose loss did not decrease under scaling.
    std::size_t misclassified_increase = 0;
    /// ⟨θ_out, −∇θ_out L⟩ over the batch, and its sign.
    double inner = 0.0;
    int sign = 0;
};

/// Cross-entropy of one logit row, log(1 + Σ_{i≠y} exp(v_i − v_y)).
inline double cross_entropy(std::span<const double> v, int label) {
    const auto y = static_cast<std::size_t>(label);
    if (y >= v.size()) throw DomainError("cross_entropy: label out of range");
    const double mx = *std::max_element(v.begin(), v.end());
    if (mx == v[y]) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i != y) s += std::exp(v[i] - v[y]);
        }
        return std::log1p(s);
    }
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return std::log(s) + mx - v[y];
}

/// Checks, row by row, whether scaling the logits by (1 + ε) lowers the loss.
inline AlignmentReport output_alignment_check(const ToyModel& model, const Batch& batch, double eps = 1e-3) {
    if (batch.regression()) throw DomainError("output_alignment_check: needs a classification batch");
    const auto fr = forward_backward(model, batch);
    AlignmentReport rep;
    rep.rows = batch.size();
    std::vector<double> scaled(fr.logits.cols());
    for (std::size_t r = 0; r < rep.rows; ++r) {
        const auto v = fr.logits.row(r);
        const int y = batch.labels[r];
        for (std::size_t i = 0; i < v.size(); ++i) scaled[i] = (1.0 + eps) * v[i];
        const double before = cross_entropy(v, y);
        const double after = cross_entropy(scaled, y);
        bool strictly_best = true;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i != static_cast<std::size_t>(y) && v[i] >= v[static_cast<std::size_t>(y)]) strictly_best = false;
        }
        if (strictly_best) {
            ++rep.correct;
            if (after < before) {
                ++rep.strict_decrease;
            } else if (after == before) {
                ++rep.ties;
            }
        } else if (after >= before) {
            ++rep.misclassified_increase;
        }
    }
    const std::size_t out = model.output_weight_index();
    rep.inner = -linalg::dot(values(model.params[out].value), values(fr.grads[out]));
    rep.sign = (rep.inner > 0.0) - (rep.inner < 0.0);
    return rep;
}

}  // namespace steadynorm
