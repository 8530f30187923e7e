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

// Network-based fitters.
//
// Supervised: signals -> 4 parameters, trained against ground-truth labels
// scaled to [0, 1] by the parameter box.
//
// Self-supervised: signals -> 5 raw outputs -> clamp_params -> forward
// model -> reconstructed signals; the loss is the reconstruction MSE, so no
// labels are needed and training and prediction use the same voxels.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "verdict/forward_model.hpp"
#include "verdict/mlp.hpp"
#include "verdict/parallel.hpp"
#include "verdict/simulate.hpp"

namespace verdict {

using ClampJacobian = Eigen::Matrix<double, kParamCount, kParamCount>;

/// Clamps every entry to its box interval; if f_ic + f_ees then exceeds 1
/// the pair is divided by its sum and re-clamped to the lower bounds.
/// Idempotent. The optional Jacobian passes gradients straight through
/// entries inside their interval, zeroes clamped ones, and includes the
/// exact derivative of the pair rescale.
inline TissueParams clamp_params(const std::array<double, kParamCount>& raw, const ParameterBox& box = {},
                                 ClampJacobian* jac = nullptr) {
    std::array<double, kParamCount> v{};
    ClampJacobian J = ClampJacobian::Zero();
    for (int j = 0; j < kParamCount; ++j) {
        v[j] = box[j].clamp(raw[j]);
        J(j, j) = (raw[j] >= box[j].lo && raw[j] <= box[j].hi) ? 1.0 : 0.0;
    }
    const double s = v[0] + v[1];
    if (s > 1.0) {
        Eigen::Matrix2d R;
        R << 1.0 / s - v[0] / (s * s), -v[0] / (s * s), -v[1] / (s * s), 1.0 / s - v[1] / (s * s);
        double a = v[0] / s, b = v[1] / s;
        if (a < box.f_ic.lo) {
            a = box.f_ic.lo;
            R.row(0).setZero();
        }
        if (b < box.f_ees.lo) {
            b = box.f_ees.lo;
            R.row(1).setZero();
        }
        // a rounded quotient can leave the sum one ulp above 1
        while (a + b > 1.0) {
            if (a >= b)
                a = std::nextafter(a, 0.0);
            else
                b = std::nextafter(b, 0.0);
        }
        v[0] = a;
        v[1] = b;
        J.topLeftCorner<2, 2>() = R * J.topLeftCorner<2, 2>();
    }
    if (jac) *jac = J;
    return TissueParams::from_array(v);
}

inline TrainConfig supervised_defaults() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.batch_size = 100;
    c.max_epochs = 1000;
    c.patience = 10;
    c.dropout_p = 0.0;
    c.validation_fraction = 0.2;
    return c;
}

inline TrainConfig selfsupervised_defaults() {
    TrainConfig c;
    c.learning_rate = 1e-4;
    c.batch_size = 128;
    c.max_epochs = 1000;
    c.patience = 10;
    c.dropout_p = 0.5;
    c.validation_fraction = 0.2;
    return c;
}

namespace detail {

inline void check_features(const MlpModel& model, Eigen::Index cols) {
    if (cols != model.input_size())
        throw std::invalid_argument("signals have " + std::to_string(cols) + " columns, model expects " +
                                    std::to_string(model.input_size()));
}

inline std::array<double, kParamCount> unscale_outputs(const MlpModel& model, const Eigen::VectorXd& out) {
    std::array<double, kParamCount> raw{};
    raw[static_cast<std::size_t>(Param::S0)] = 1.0;
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        const Interval& r = model.output_ranges[static_cast<std::size_t>(k)];
        raw[static_cast<std::size_t>(k)] = r.lo + r.width() * out[k];
    }
    return raw;
}

/// Applies fn(row_begin, row_end) to fixed 1024-row chunks.
template <class F>
void for_row_chunks(Eigen::Index rows, std::size_t threads, F&& fn) {
    constexpr Eigen::Index kChunk = 1024;
    const auto chunks = static_cast<std::size_t>((rows + kChunk - 1) / kChunk);
    parallel_for(chunks, threads, [&](std::size_t c) {
        const Eigen::Index b = static_cast<Eigen::Index>(c) * kChunk;
        fn(b, std::min(rows, b + kChunk));
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Supervised regression

struct SupervisedResult {
    MlpModel model;
    TrainTrace trace;
};

/// Mean squared error over batch x 4 between the network output and the
/// scaled labels (tissue_params x batch); fills grad when non-null.
inline double supervised_batch_loss(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                    ForwardMode mode, const DropoutSpec& dropout, CounterRng* rng,
                                    MlpGradients* grad) {
    ForwardCache cache;
    const Eigen::MatrixXd out = mlp_forward_batch(model, X, mode, dropout, rng, grad ? &cache : nullptr);
    const Eigen::MatrixXd diff = out - Y;
    const double denom = static_cast<double>(diff.size());
    if (grad) *grad = mlp_backward(model, cache, (2.0 / denom) * diff);
    return diff.squaredNorm() / denom;
}

inline SupervisedResult train_supervised(const SignalTable& signals, const std::vector<TissueParams>& labels,
                                         const TrainConfig& cfg = supervised_defaults(), const ParameterBox& box = {},
                                         const std::vector<int>& hidden = {150, 150, 150},
                                         Activation act = Activation::relu) {
    if (signals.rows() == 0) throw std::invalid_argument("train_supervised: empty dataset");
    if (static_cast<std::size_t>(signals.rows()) != labels.size())
        throw std::invalid_argument("train_supervised: signals and labels differ in length");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> sizes{static_cast<int>(signals.cols())};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(kTissueParamCount);
    MlpModel model = make_mlp(sizes, act, cfg.seed);
    for (int k = 0; k < kTissueParamCount; ++k) model.output_ranges.push_back(box[k]);

    // labels scaled to [0, 1], stored one voxel per row
    Eigen::Matrix<double, Eigen::Dynamic, kTissueParamCount, Eigen::RowMajor> scaled(signals.rows(), kTissueParamCount);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto a = labels[i].to_array();
        for (int k = 0; k < kTissueParamCount; ++k)
            scaled(static_cast<Eigen::Index>(i), k) = (a[k] - box[k].lo) / box[k].width();
    }
    const DropoutSpec dropout = cfg.dropout();
    auto loss = [&](const MlpModel& m, const std::vector<std::size_t>& idx, ForwardMode mode, CounterRng* rng,
                    MlpGradients* g) {
        const Eigen::MatrixXd X = gather_columns(signals, idx, 0, idx.size());
        const Eigen::MatrixXd Y = gather_columns(scaled, idx, 0, idx.size());
        return supervised_batch_loss(m, X, Y, mode, dropout, rng, g);
    };
    SupervisedResult res;
    res.model = train_with_early_stopping(std::move(model), static_cast<std::size_t>(signals.rows()), cfg, loss, res.trace);
    res.trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Inference-mode forward pass, unscaling, and clamp_params with s0 = 1.
/// Output order matches input order for any thread count.
inline std::vector<TissueParams> predict_supervised(const MlpModel& model, const SignalTable& signals,
                                                    const ParameterBox& box = {}, std::size_t threads = 1) {
    model.validate();
    if (model.output_size() != kTissueParamCount || model.output_ranges.size() != kTissueParamCount)
        throw std::invalid_argument("predict_supervised: model must have 4 scaled outputs");
    std::vector<TissueParams> out(static_cast<std::size_t>(signals.rows()));
    if (out.empty()) return out;
    detail::check_features(model, signals.cols());
    detail::for_row_chunks(signals.rows(), threads, [&](Eigen::Index b, Eigen::Index e) {
        const Eigen::MatrixXd X = signals.middleRows(b, e - b).transpose();
        const Eigen::MatrixXd Y = mlp_forward_batch(model, X, ForwardMode::inference);
        for (Eigen::Index j = 0; j < Y.cols(); ++j)
            out[static_cast<std::size_t>(b + j)] = clamp_params(detail::unscale_outputs(model, Y.col(j)), box);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Self-supervised fitting

struct SelfSupervisedResult {
    MlpModel model;
    std::vector<TissueParams> params;
    TrainTrace trace;
};

/// Reconstruction MSE over batch x measurements for signals X
/// (measurements x batch); fills grad when non-null. Gradients pass through
/// the output scaling, clamp_params and the analytic model Jacobian.
inline double selfsupervised_batch_loss(const MlpModel& model, const Eigen::MatrixXd& X, const VerdictModel& vm,
                                        const ParameterBox& box, ForwardMode mode, const DropoutSpec& dropout,
                                        CounterRng* rng, MlpGradients* grad) {
    const auto M = static_cast<Eigen::Index>(vm.size());
    if (X.rows() != M) throw std::invalid_argument("selfsupervised: signal length does not match protocol");
    ForwardCache cache;
    const Eigen::MatrixXd out = mlp_forward_batch(model, X, mode, dropout, rng, grad ? &cache : nullptr);
    const double denom = static_cast<double>(X.size());
    Eigen::MatrixXd d_out(out.rows(), out.cols());
    Eigen::VectorXd s(M);
    Eigen::Matrix<double, Eigen::Dynamic, kParamCount, Eigen::RowMajor> J(M, kParamCount);
    ClampJacobian Jc;
    double loss = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const TissueParams p = clamp_params(detail::unscale_outputs(model, out.col(j)), box, grad ? &Jc : nullptr);
        vm.evaluate(p, s.data(), grad ? J.data() : nullptr);
        const Eigen::VectorXd r = s - X.col(j);
        loss += r.squaredNorm();
        if (grad) {
            const Eigen::Matrix<double, kParamCount, 1> d_p = J.transpose() * ((2.0 / denom) * r);
            const Eigen::Matrix<double, kParamCount, 1> d_raw = Jc.transpose() * d_p;
            for (int k = 0; k < kParamCount; ++k) d_out(k, j) = d_raw[k] * model.output_ranges[static_cast<std::size_t>(k)].width();
        }
    }
    if (grad) *grad = mlp_backward(model, cache, d_out);
    return loss / denom;
}

/// Inference-mode parameter estimates from a trained self-supervised model.
inline std::vector<TissueParams> predict_selfsupervised(const MlpModel& model, const SignalTable& signals,
                                                        const ParameterBox& box = {}, std::size_t threads = 1) {
    model.validate();
    if (model.output_size() != kParamCount || model.output_ranges.size() != kParamCount)
        throw std::invalid_argument("predict_selfsupervised: model must have 5 scaled outputs");
    std::vector<TissueParams> out(static_cast<std::size_t>(signals.rows()));
    if (out.empty()) return out;
    detail::check_features(model, signals.cols());
    detail::for_row_chunks(signals.rows(), threads, [&](Eigen::Index b, Eigen::Index e) {
        const Eigen::MatrixXd X = signals.middleRows(b, e - b).transpose();
        const Eigen::MatrixXd Y = mlp_forward_batch(model, X, ForwardMode::inference);
        for (Eigen::Index j = 0; j < Y.cols(); ++j)
            out[static_cast<std::size_t>(b + j)] = clamp_params(detail::unscale_outputs(model, Y.col(j)), box);
    });
    return out;
}

/// Initial self-supervised network: hidden layers as given, 5 outputs scaled
/// by the box, output bias at mid-range and output weights shrunk 100x.
inline MlpModel make_selfsupervised_mlp(int inputs, const std::vector<int>& hidden, Activation act, std::uint64_t seed,
                                        const ParameterBox& box = {}) {
    std::vector<int> sizes{inputs};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(kParamCount);
    MlpModel m = make_mlp(sizes, act, seed);
    for (int k = 0; k < kParamCount; ++k) m.output_ranges.push_back(box[k]);
    m.biases.back().setConstant(0.5);
    // small output weights: every voxel starts inside the box, where the
    // clamp passes gradients
    m.weights.back() *= 0.01;
    return m;
}

/// Trains on signals and predicts parameters for the same signals with the
/// best-epoch weights. Hidden layers default to three of width equal to the
/// number of measurements.
inline SelfSupervisedResult train_selfsupervised(const SignalTable& signals, const VerdictModel& vm,
                                                 const TrainConfig& cfg = selfsupervised_defaults(),
                                                 const ParameterBox& box = {}, std::vector<int> hidden = {},
                                                 Activation act = Activation::relu, std::size_t threads = 1) {
    cfg.validate();
    if (signals.rows() < cfg.batch_size)
        throw std::invalid_argument("train_selfsupervised: need at least batch_size signals");
    if (static_cast<std::size_t>(signals.cols()) != vm.size())
        throw std::invalid_argument("train_selfsupervised: signal columns do not match protocol");
    const auto t0 = std::chrono::steady_clock::now();
    const int m = static_cast<int>(signals.cols());
    if (hidden.empty()) hidden = {m, m, m};
    MlpModel model = make_selfsupervised_mlp(m, hidden, act, cfg.seed, box);
    const DropoutSpec dropout = cfg.dropout();
    auto loss = [&](const MlpModel& net, const std::vector<std::size_t>& idx, ForwardMode mode, CounterRng* rng,
                    MlpGradients* g) {
        const Eigen::MatrixXd X = gather_columns(signals, idx, 0, idx.size());
        return selfsupervised_batch_loss(net, X, vm, box, mode, dropout, rng, g);
    };
    SelfSupervisedResult res;
    res.model = train_with_early_stopping(std::move(model), static_cast<std::size_t>(signals.rows()), cfg, loss, res.trace);
    res.params = predict_selfsupervised(res.model, signals, box, threads);
    res.trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace verdict
