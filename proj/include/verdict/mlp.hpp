/*
 * Copyright 2026 The verdict-fit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Small fully-connected network: affine layers, a hidden nonlinearity,
// linear output, inverted dropout and ADAM. Batches are column-major
// (features x samples).

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "verdict/rng.hpp"
#include "verdict/tissue.hpp"

namespace verdict {

enum class Activation { relu, tanh };

inline std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

struct MlpModel {
    std::vector<int> layer_sizes;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;
    std::vector<Eigen::MatrixXd> weights;  // weights[l] is sizes[l+1] x sizes[l]
    std::vector<Eigen::VectorXd> biases;
    // Output scaling: physical value = lo + (hi - lo) * network output.
    std::vector<Interval> output_ranges;

    std::size_t layer_count() const { return weights.size(); }
    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        return n;
    }

    void validate() const {
        if (layer_sizes.size() < 2) throw std::invalid_argument("mlp: need at least input and output layers");
        for (int s : layer_sizes)
            if (s < 1) throw std::invalid_argument("mlp: layer sizes must be >= 1");
        if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size())
            throw std::invalid_argument("mlp: layer count mismatch");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
                biases[l].size() != layer_sizes[l + 1])
                throw std::invalid_argument("mlp: incompatible dimensions at layer " + std::to_string(l));
            if (!weights[l].allFinite() || !biases[l].allFinite())
                throw std::invalid_argument("mlp: non-finite weights at layer " + std::to_string(l));
        }
        if (!output_ranges.empty() && static_cast<int>(output_ranges.size()) != output_size())
            throw std::invalid_argument("mlp: output_ranges size must match output layer");
    }

    /// Flat copy of all weights then biases, layer by layer (weights column-major).
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(parameter_count());
        for (std::size_t l = 0; l < weights.size(); ++l) {
            out.insert(out.end(), weights[l].data(), weights[l].data() + weights[l].size());
            out.insert(out.end(), biases[l].data(), biases[l].data() + biases[l].size());
        }
        return out;
    }

    void unflatten(const std::vector<double>& flat) {
        if (flat.size() != parameter_count()) throw std::invalid_argument("mlp: weight blob has wrong length");
        std::size_t k = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (Eigen::Index i = 0; i < weights[l].size(); ++i) weights[l].data()[i] = flat[k++];
            for (Eigen::Index i = 0; i < biases[l].size(); ++i) biases[l][i] = flat[k++];
        }
    }

    bool operator==(const MlpModel& o) const {
        if (layer_sizes != o.layer_sizes || activation != o.activation || seed != o.seed ||
            weights.size() != o.weights.size() || biases.size() != o.biases.size() ||
            output_ranges.size() != o.output_ranges.size())
            return false;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
                biases[l].size() != o.biases[l].size())
                return false;
            if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
        }
        for (std::size_t k = 0; k < output_ranges.size(); ++k)
            if (output_ranges[k].lo != o.output_ranges[k].lo || output_ranges[k].hi != o.output_ranges[k].hi) return false;
        return true;
    }
};

/// Fan-in scaled uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in)),
/// zero biases.
inline MlpModel make_mlp(const std::vector<int>& layer_sizes, Activation act, std::uint64_t seed) {
    MlpModel m;
    m.layer_sizes = layer_sizes;
    m.activation = act;
    m.seed = seed;
    if (layer_sizes.size() < 2) throw std::invalid_argument("mlp: need at least input and output layers");
    CounterRng rng(seed, 0);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int in = layer_sizes[l], out = layer_sizes[l + 1];
        if (in < 1 || out < 1) throw std::invalid_argument("mlp: layer sizes must be >= 1");
        const double a = std::sqrt(6.0 / in);
        Eigen::MatrixXd W(out, in);
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-a, a);
        m.weights.push_back(std::move(W));
        m.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    return m;
}

/// Where dropout acts: on the network inputs, on the last hidden layer's
/// activations (feeding the output layer), or on every hidden layer.
enum class DropoutPlacement { input, last_hidden, all_hidden };

inline std::string placement_name(DropoutPlacement d) {
    switch (d) {
        case DropoutPlacement::input: return "input";
        case DropoutPlacement::last_hidden: return "last_hidden";
        default: return "all_hidden";
    }
}

inline DropoutPlacement placement_from_name(const std::string& s) {
    if (s == "input") return DropoutPlacement::input;
    if (s == "last_hidden") return DropoutPlacement::last_hidden;
    if (s == "all_hidden") return DropoutPlacement::all_hidden;
    throw std::invalid_argument("unknown dropout placement '" + s + "'");
}

struct DropoutSpec {
    double p = 0.0;
    DropoutPlacement placement = DropoutPlacement::last_hidden;

    // layer l's input is a[l]: l = 0 is the network input, l >= 1 hidden layer l-1
    bool applies_to_input_of(std::size_t l, std::size_t layer_count) const {
        if (p <= 0.0) return false;
        switch (placement) {
            case DropoutPlacement::input: return l == 0;
            case DropoutPlacement::last_hidden: return l + 1 == layer_count && l > 0;
            default: return l > 0;
        }
    }
};

enum class ForwardMode { inference, train };

/// Activations kept for backpropagation.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer (post dropout)
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
    std::vector<Eigen::MatrixXd> masks;   // scaled dropout mask on each layer's input, empty if none
};

namespace detail {

inline void activate(Activation a, Eigen::MatrixXd& z) {
    if (a == Activation::relu)
        z = z.cwiseMax(0.0);
    else
        z = z.array().tanh().matrix();
}

inline void activation_backward(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& d) {
    if (a == Activation::relu)
        d = (pre.array() > 0.0).select(d, 0.0);
    else
        d.array() *= 1.0 - pre.array().tanh().square();
}

}  // namespace detail

/// Batched forward pass. In train mode with dropout, masks come from rng
/// (kept elements are scaled by 1/(1-p)); inference mode is deterministic.
inline Eigen::MatrixXd mlp_forward_batch(const MlpModel& model, const Eigen::MatrixXd& X, ForwardMode mode,
                                         const DropoutSpec& dropout = {}, CounterRng* rng = nullptr,
                                         ForwardCache* cache = nullptr) {
    if (X.rows() != model.input_size())
        throw std::invalid_argument("mlp_forward: input has " + std::to_string(X.rows()) + " features, model expects " +
                                    std::to_string(model.input_size()));
    const std::size_t L = model.layer_count();
    const std::size_t hidden = L - 1;
    const bool drop = mode == ForwardMode::train && dropout.p > 0.0;
    if (drop && rng == nullptr) throw std::invalid_argument("mlp_forward: train-mode dropout needs an rng");
    if (cache) {
        cache->inputs.assign(L, {});
        cache->pre.assign(hidden, {});
        cache->masks.assign(L, {});
    }
    Eigen::MatrixXd a = X;
    for (std::size_t l = 0; l < L; ++l) {
        if (drop && dropout.applies_to_input_of(l, L)) {
            const double keep_scale = 1.0 / (1.0 - dropout.p);
            Eigen::MatrixXd mask(a.rows(), a.cols());
            for (Eigen::Index j = 0; j < mask.cols(); ++j)
                for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng->uniform() < dropout.p ? 0.0 : keep_scale;
            a.array() *= mask.array();
            if (cache) cache->masks[l] = std::move(mask);
        }
        if (cache) cache->inputs[l] = a;
        Eigen::MatrixXd z = model.weights[l] * a;
        z.colwise() += model.biases[l];
        if (l + 1 == L) return z;
        if (cache) cache->pre[l] = z;
        detail::activate(model.activation, z);
        a = std::move(z);
    }
    return a;  // unreachable: L >= 1
}

/// Single-sample forward pass.
inline Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& input,
                                   ForwardMode mode = ForwardMode::inference, const DropoutSpec& dropout = {},
                                   CounterRng* rng = nullptr) {
    return mlp_forward_batch(model, input, mode, dropout, rng).col(0);
}

struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static MlpGradients zeros_like(const MlpModel& m) {
        MlpGradients g;
        for (std::size_t l = 0; l < m.layer_count(); ++l) {
            g.weights.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
            g.biases.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
        }
        return g;
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }
};

/// Backpropagates dL/d(output) (output_size x batch) through a cached pass.
inline MlpGradients mlp_backward(const MlpModel& model, const ForwardCache& cache, const Eigen::MatrixXd& d_out) {
    const std::size_t L = model.layer_count();
    if (cache.inputs.size() != L) throw std::invalid_argument("mlp_backward: cache does not match model");
    MlpGradients g;
    g.weights.resize(L);
    g.biases.resize(L);
    Eigen::MatrixXd delta = d_out;
    for (std::size_t l = L; l-- > 0;) {
        g.weights[l].noalias() = delta * cache.inputs[l].transpose();
        g.biases[l] = delta.rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd da = model.weights[l].transpose() * delta;
        if (cache.masks[l].size() > 0) da.array() *= cache.masks[l].array();
        detail::activation_backward(model.activation, cache.pre[l - 1], da);
        delta = std::move(da);
    }
    return g;
}

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 100;
    int max_epochs = 1000;
    int patience = 10;
    double dropout_p = 0.0;
    DropoutPlacement dropout_placement = DropoutPlacement::last_hidden;
    double validation_fraction = 0.2;  // 0: stop on the loss over all samples
    std::uint64_t seed = 0;

    DropoutSpec dropout() const { return {dropout_p, dropout_placement}; }

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("train: ADAM betas must be in [0, 1)");
        if (!(epsilon > 0.0)) throw std::invalid_argument("train: epsilon must be > 0");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
        if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("train: dropout_p must be in [0, 1)");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            throw std::invalid_argument("train: validation_fraction must be in [0, 1)");
    }
};

struct AdamState {
    MlpGradients m, v;
    long step = 0;

    static AdamState for_model(const MlpModel& model) {
        return {MlpGradients::zeros_like(model), MlpGradients::zeros_like(model), 0};
    }
};

/// One bias-corrected ADAM update. Throws on non-finite gradients.
inline void adam_step(MlpModel& model, const MlpGradients& grad, AdamState& state, const TrainConfig& cfg) {
    if (grad.weights.size() != model.layer_count() || grad.biases.size() != model.layer_count())
        throw std::invalid_argument("adam_step: gradient layer count mismatch");
    for (std::size_t l = 0; l < model.layer_count(); ++l)
        if (grad.weights[l].rows() != model.weights[l].rows() || grad.weights[l].cols() != model.weights[l].cols() ||
            grad.biases[l].size() != model.biases[l].size())
            throw std::invalid_argument("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    if (!grad.all_finite()) throw std::runtime_error("adam_step: non-finite gradient, training aborted");
    if (state.m.weights.empty()) state = AdamState::for_model(model);

    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
    };
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        update(model.weights[l], grad.weights[l], state.m.weights[l], state.v.weights[l]);
        update(model.biases[l], grad.biases[l], state.m.biases[l], state.v.biases[l]);
    }
}

struct TrainTrace {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;  // 0-based index into the loss vectors
    std::string stop_reason;
    double seconds = 0.0;
};

/// Column j of the result is row idx[begin + j] of a row-major table.
template <class Table>
Eigen::MatrixXd gather_columns(const Table& rows, const std::vector<std::size_t>& idx, std::size_t begin,
                               std::size_t end) {
    Eigen::MatrixXd out(rows.cols(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j)
        out.col(static_cast<Eigen::Index>(j - begin)) = rows.row(static_cast<Eigen::Index>(idx[j])).transpose();
    return out;
}

/// Splits 0..n-1 into a shuffled training part and a validation part of
/// round(fraction * n) indices (at least one when fraction > 0 and n > 1).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                                    std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    CounterRng rng(seed, 1);
    shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (fraction > 0.0 && n_val == 0 && n > 1) n_val = 1;
    if (n_val >= n) n_val = n - 1;
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(val.begin(), val.end());
    return {std::move(train), std::move(val)};
}

/// Minibatch ADAM with early stopping on a validation loss. BatchLoss is
/// called as loss(model, batch_indices, mode, rng, grad_out) and returns the
/// mean loss over the batch, filling grad_out when non-null. The returned
/// model holds the weights of the epoch with the lowest validation loss.
template <class BatchLoss>
MlpModel train_with_early_stopping(MlpModel model, std::size_t n, const TrainConfig& cfg, BatchLoss&& loss,
                                   TrainTrace& trace) {
    cfg.validate();
    if (n == 0) throw std::invalid_argument("train: empty training set");
    auto [train_idx, val_idx] = split_indices(n, cfg.validation_fraction, cfg.seed);
    if (val_idx.empty()) val_idx = train_idx;  // stop on the full-data loss
    std::sort(val_idx.begin(), val_idx.end());

    AdamState adam = AdamState::for_model(model);
    MlpModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const std::uint64_t shuffle_seed = derive_seed(cfg.seed, 2);
    const std::uint64_t dropout_seed = derive_seed(cfg.seed, 3);
    trace = {};
    trace.stop_reason = "max_epochs";

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        CounterRng order_rng(shuffle_seed, static_cast<std::uint64_t>(epoch));
        shuffle(train_idx.begin(), train_idx.end(), order_rng);
        CounterRng drop_rng(dropout_seed, static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < train_idx.size(); b += bs) {
            const std::size_t e = std::min(b + bs, train_idx.size());
            std::vector<std::size_t> batch(train_idx.begin() + static_cast<std::ptrdiff_t>(b),
                                           train_idx.begin() + static_cast<std::ptrdiff_t>(e));
            MlpGradients g;
            const double l = loss(model, batch, ForwardMode::train, &drop_rng, &g);
            adam_step(model, g, adam, cfg);
            epoch_loss += l * static_cast<double>(batch.size());
            seen += batch.size();
        }
        double val = 0.0;
        for (std::size_t b = 0; b < val_idx.size(); b += 4096) {
            const std::size_t e = std::min(b + 4096, val_idx.size());
            std::vector<std::size_t> chunk(val_idx.begin() + static_cast<std::ptrdiff_t>(b),
                                           val_idx.begin() + static_cast<std::ptrdiff_t>(e));
            val += loss(model, chunk, ForwardMode::inference, nullptr, nullptr) * static_cast<double>(chunk.size());
        }
        val /= static_cast<double>(val_idx.size());
        trace.train_loss.push_back(epoch_loss / static_cast<double>(seen));
        trace.val_loss.push_back(val);
        if (!std::isfinite(val)) throw std::runtime_error("train: validation loss is not finite");
        if (val < best_val) {
            best_val = val;
            best = model;
            trace.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            trace.stop_reason = "patience";
            break;
        }
    }
    return best;
}

}  // namespace verdict
