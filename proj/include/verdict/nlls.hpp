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

// Conventional per-voxel fitting: a coarse grid search over
// (f_ic, f_ees, R, d_ees) followed by box-constrained Levenberg-Marquardt on
// all five parameters (s0 included).

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <utility>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "verdict/forward_model.hpp"
#include "verdict/parallel.hpp"
#include "verdict/simulate.hpp"

namespace verdict {

struct NllsConfig {
    // grid points for f_ic, f_ees, radius, d_ees
    std::array<int, kTissueParamCount> grid_points{5, 5, 10, 5};
    int max_iterations = 200;
    int starts = 3;  // LM runs from the best grid local minima; lowest SSE wins
    double lambda_init = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    double step_tolerance = 1e-8;
    double residual_tolerance = 1e-12;  // on the residual 2-norm
    ParameterBox bounds{};
    bool record_trace = false;

    void validate() const {
        for (int g : grid_points)
            if (g < 2) throw std::invalid_argument("nlls: grid counts must be >= 2");
        if (starts < 1) throw std::invalid_argument("nlls: starts must be >= 1");
        if (max_iterations < 1) throw std::invalid_argument("nlls: max_iterations must be >= 1");
        if (!(lambda_init > 0.0) || !(lambda_up > 1.0) || !(lambda_down > 1.0))
            throw std::invalid_argument("nlls: invalid damping schedule");
        if (!(step_tolerance > 0.0) || !(residual_tolerance > 0.0))
            throw std::invalid_argument("nlls: tolerances must be > 0");
        bounds.validate();
    }
};

struct FitResult {
    TissueParams params{};
    double residual_norm = 0.0;  // sum of squared residuals
    int iterations = 0;
    bool converged = false;
    std::string error;                // non-empty if the voxel failed
    std::vector<double> sse_trace;    // accepted objective values when record_trace is set
};

/// Projects onto the box, then onto f_ic + f_ees <= 1 (Euclidean projection of
/// the pair onto the half-plane, kept inside the fraction bounds).
inline TissueParams project_feasible(TissueParams p, const ParameterBox& box) {
    p.f_ic = box.f_ic.clamp(p.f_ic);
    p.f_ees = box.f_ees.clamp(p.f_ees);
    p.radius = box.radius.clamp(p.radius);
    p.d_ees = box.d_ees.clamp(p.d_ees);
    p.s0 = box.s0.clamp(p.s0);
    const double excess = p.f_ic + p.f_ees - 1.0;
    if (excess > 0.0) {
        p.f_ic -= 0.5 * excess;
        p.f_ees -= 0.5 * excess;
        if (p.f_ic < box.f_ic.lo) {
            p.f_ic = box.f_ic.lo;
            p.f_ees = 1.0 - p.f_ic;
        } else if (p.f_ees < box.f_ees.lo) {
            p.f_ees = box.f_ees.lo;
            p.f_ic = 1.0 - p.f_ees;
        }
        p.f_ic = box.f_ic.clamp(p.f_ic);
        p.f_ees = box.f_ees.clamp(p.f_ees);
    }
    return p;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[i] = (i == n - 1) ? hi : lo + (hi - lo) * i / (n - 1);
    return v;
}

/// Mean of the b = 0 entries, or 1 if the protocol has none.
inline double b0_mean(const double* signal, const AcquisitionProtocol& protocol) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < protocol.size(); ++k) {
        if (protocol[k].is_b0) {
            sum += signal[k];
            ++n;
        }
    }
    return n > 0 ? sum / n : 1.0;
}

/// Unit-s0 candidate signals on the regular grid, computed once and shared by
/// every voxel. Grid order is f_ic slowest, then f_ees, radius, d_ees.
class GridSearch {
public:
    GridSearch(const VerdictModel& model, const NllsConfig& config) : model_(&model), box_(config.bounds) {
        config.validate();
        const auto fic = linspace(box_.f_ic.lo, box_.f_ic.hi, config.grid_points[0]);
        const auto fees = linspace(box_.f_ees.lo, box_.f_ees.hi, config.grid_points[1]);
        const auto rad = linspace(box_.radius.lo, box_.radius.hi, config.grid_points[2]);
        const auto dees = linspace(box_.d_ees.lo, box_.d_ees.hi, config.grid_points[3]);
        const auto m = static_cast<Eigen::Index>(model.size());

        // compartment signals per radius / diffusivity, reused across the grid
        std::vector<std::vector<std::array<double, 3>>> comp_r(rad.size()), comp_d(dees.size());
        for (std::size_t i = 0; i < rad.size(); ++i)
            for (Eigen::Index k = 0; k < m; ++k) comp_r[i].push_back(model.compartments(k, rad[i], 1.0));
        for (std::size_t i = 0; i < dees.size(); ++i)
            for (Eigen::Index k = 0; k < m; ++k) comp_d[i].push_back(model.compartments(k, 1.0, dees[i]));

        dims_ = config.grid_points;
        lookup_.assign(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2] * dims_[3]), -1);
        for (int ia = 0; ia < dims_[0]; ++ia) {
            for (int ie = 0; ie < dims_[1]; ++ie) {
                if (fic[ia] + fees[ie] > 1.0) continue;
                for (int ir = 0; ir < dims_[2]; ++ir) {
                    for (int id = 0; id < dims_[3]; ++id) {
                        lookup_[flat({ia, ie, ir, id})] = static_cast<long>(points_.size());
                        cells_.push_back({ia, ie, ir, id});
                        points_.push_back({fic[ia], fees[ie], rad[ir], dees[id], 1.0});
                    }
                }
            }
        }
        candidates_.resize(static_cast<Eigen::Index>(points_.size()), m);
        std::size_t row = 0;
        for (const auto& p : points_) {
            const std::size_t ir = index_of(rad, p.radius);
            const std::size_t id = index_of(dees, p.d_ees);
            const double fv = 1.0 - p.f_ic - p.f_ees;
            for (Eigen::Index k = 0; k < m; ++k) {
                if (model.protocol()[k].is_b0) {
                    candidates_(row, k) = 1.0;
                } else {
                    const double sv = comp_r[ir][k][0];
                    const double si = comp_r[ir][k][1];
                    const double se = comp_d[id][k][2];
                    candidates_(row, k) = fv * sv + p.f_ic * si + p.f_ees * se;
                }
            }
            ++row;
        }
    }

    std::size_t size() const { return points_.size(); }
    const TissueParams& point(std::size_t i) const { return points_[i]; }
    const SignalTable& candidates() const { return candidates_; }

    /// Grid point with the smallest SSE against signal, s0 fixed at the b=0
    /// mean (clamped to the s0 bounds). Ties go to the lowest index.
    TissueParams best(const double* signal) const {
        const double s0 = box_.s0.clamp(b0_mean(signal, model_->protocol()));
        const auto m = candidates_.cols();
        Eigen::Map<const Eigen::RowVectorXd> y(signal, m);
        double best_sse = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (Eigen::Index i = 0; i < candidates_.rows(); ++i) {
            const double sse = (y - s0 * candidates_.row(i)).squaredNorm();
            if (sse < best_sse) {
                best_sse = sse;
                best_i = static_cast<std::size_t>(i);
            }
        }
        TissueParams p = points_[best_i];
        p.s0 = s0;
        return p;
    }

    /// The k lowest-SSE grid points in ascending SSE order (ties by index).
    std::vector<TissueParams> best_k(const double* signal, std::size_t k) const {
        const double s0 = box_.s0.clamp(b0_mean(signal, model_->protocol()));
        const auto m = candidates_.cols();
        Eigen::Map<const Eigen::RowVectorXd> y(signal, m);
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(points_.size());
        for (Eigen::Index i = 0; i < candidates_.rows(); ++i)
            scored.emplace_back((y - s0 * candidates_.row(i)).squaredNorm(), static_cast<std::size_t>(i));
        k = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
        std::vector<TissueParams> out;
        for (std::size_t j = 0; j < k; ++j) {
            TissueParams p = points_[scored[j].second];
            p.s0 = s0;
            out.push_back(p);
        }
        return out;
    }

    /// Start points for a multi-start fit: grid points whose SSE is not above
    /// any axis neighbour's, lowest SSE first, at most k of them. Falls back
    /// to the plain best point when no local minimum exists.
    std::vector<TissueParams> starts(const double* signal, std::size_t k) const {
        const double s0 = box_.s0.clamp(b0_mean(signal, model_->protocol()));
        Eigen::Map<const Eigen::RowVectorXd> y(signal, candidates_.cols());
        std::vector<double> sse(points_.size());
        for (std::size_t i = 0; i < points_.size(); ++i)
            sse[i] = (y - s0 * candidates_.row(static_cast<Eigen::Index>(i))).squaredNorm();
        std::vector<std::pair<double, std::size_t>> minima;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            bool is_min = true;
            for (int axis = 0; axis < kTissueParamCount && is_min; ++axis) {
                for (int dir : {-1, 1}) {
                    auto c = cells_[i];
                    c[axis] += dir;
                    if (c[axis] < 0 || c[axis] >= dims_[axis]) continue;
                    const long j = lookup_[flat(c)];
                    if (j >= 0 && sse[static_cast<std::size_t>(j)] < sse[i]) {
                        is_min = false;
                        break;
                    }
                }
            }
            if (is_min) minima.emplace_back(sse[i], i);
        }
        if (minima.empty()) return {best(signal)};
        k = std::min(k, minima.size());
        std::partial_sort(minima.begin(), minima.begin() + static_cast<std::ptrdiff_t>(k), minima.end());
        std::vector<TissueParams> out;
        for (std::size_t j = 0; j < k; ++j) {
            TissueParams p = points_[minima[j].second];
            p.s0 = s0;
            out.push_back(p);
        }
        return out;
    }

private:
    std::size_t flat(const std::array<int, kTissueParamCount>& c) const {
        return static_cast<std::size_t>(((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]) * dims_[3] + c[3]);
    }

    static std::size_t index_of(const std::vector<double>& v, double x) {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] == x) return i;
        throw std::logic_error("grid lookup failed");
    }

    const VerdictModel* model_;
    ParameterBox box_;
    std::array<int, kTissueParamCount> dims_{};
    std::vector<long> lookup_;  // flat grid cell -> point index, -1 if skipped
    std::vector<std::array<int, kTissueParamCount>> cells_;
    std::vector<TissueParams> points_;
    SignalTable candidates_;
};

inline TissueParams grid_search_init(const SignalVector& signal, const VerdictModel& model, const NllsConfig& config = {}) {
    if (static_cast<std::size_t>(signal.size()) != model.size())
        throw std::invalid_argument("grid_search_init: signal length does not match protocol");
    return GridSearch(model, config).best(signal.data());
}

namespace detail {

inline double sse_at(const VerdictModel& model, const TissueParams& p, const double* y, double* buf) {
    model.evaluate(p, buf, nullptr);
    double s = 0.0;
    for (std::size_t k = 0; k < model.size(); ++k) {
        const double r = y[k] - buf[k];
        s += r * r;
    }
    return s;
}

}  // namespace detail

/// Levenberg-Marquardt with Marquardt (diagonal) scaling. Parameters sitting
/// on a bound whose gradient points outward are frozen for that iteration;
/// every trial point is projected back into the feasible set. A trial is
/// accepted only if it strictly lowers the SSE.
inline FitResult fit_voxel(const double* signal, const VerdictModel& model, const TissueParams& init,
                           const NllsConfig& config = {}) {
    const auto& box = config.bounds;
    const auto m = static_cast<Eigen::Index>(model.size());
    validate_params(init, box);

    FitResult res;
    TissueParams p = project_feasible(init, box);
    std::vector<double> buf(static_cast<std::size_t>(m));
    double sse = detail::sse_at(model, p, signal, buf.data());
    if (!std::isfinite(sse)) throw std::runtime_error("fit_voxel: non-finite residual at initial point");
    if (config.record_trace) res.sse_trace.push_back(sse);

    Eigen::Matrix<double, Eigen::Dynamic, kParamCount, Eigen::RowMajor> J(m, kParamCount);
    Eigen::VectorXd model_sig(m);
    Eigen::Map<const Eigen::VectorXd> y(signal, m);
    double lambda = config.lambda_init;
    bool need_jacobian = true;
    Eigen::Matrix<double, kParamCount, kParamCount> A;
    Eigen::Matrix<double, kParamCount, 1> g;

    int it = 0;
    while (true) {
        if (std::sqrt(sse) <= config.residual_tolerance) {
            res.converged = true;
            break;
        }
        if (it >= config.max_iterations) break;
        ++it;

        if (need_jacobian) {
            model.evaluate(p, model_sig.data(), J.data());
            A = J.transpose() * J;
            g = J.transpose() * (y - model_sig);
            need_jacobian = false;
        }

        // Active set: a box bound whose descent direction points outward is
        // frozen. When f_ic + f_ees = 1 and descent would raise the sum, the
        // fraction pair moves along the edge, direction (1, -1).
        const auto pa = p.to_array();
        std::array<bool, kParamCount> free{};
        for (int j = 0; j < kParamCount; ++j) {
            const bool at_lo = pa[j] <= box[j].lo && g[j] < 0.0;
            const bool at_hi = pa[j] >= box[j].hi && g[j] > 0.0;
            free[j] = !(at_lo || at_hi);
        }
        const bool on_edge = pa[0] + pa[1] >= 1.0 - 1e-12;
        const bool edge_active = on_edge && free[0] && free[1] && g[0] + g[1] > 0.0;
        if (on_edge && !edge_active) {
            // one fraction frozen at a bound: the other may only decrease
            if (!free[0] && free[1] && g[1] > 0.0) free[1] = false;
            if (!free[1] && free[0] && g[0] > 0.0) free[0] = false;
        }
        Eigen::Matrix<double, kParamCount, Eigen::Dynamic> Z = Eigen::Matrix<double, kParamCount, Eigen::Dynamic>::Zero(kParamCount, kParamCount);
        int n_free = 0;
        if (edge_active) {
            Z(0, n_free) = 1.0;
            Z(1, n_free) = -1.0;
            ++n_free;
        }
        for (int j = 0; j < kParamCount; ++j) {
            if (!free[j] || (edge_active && j < 2)) continue;
            Z(j, n_free++) = 1.0;
        }
        if (n_free == 0) {
            res.converged = true;
            break;
        }
        const auto Zr = Z.leftCols(n_free);
        Eigen::MatrixXd Ar = Zr.transpose() * A * Zr;
        const Eigen::VectorXd gr = Zr.transpose() * g;
        const double diag_floor = 1e-12 * std::max(1.0, Ar.diagonal().maxCoeff());
        for (int a = 0; a < n_free; ++a) Ar(a, a) += lambda * std::max(Ar(a, a), diag_floor);
        const Eigen::Matrix<double, kParamCount, 1> full_step = Zr * Ar.ldlt().solve(gr);

        auto trial_arr = pa;
        for (int j = 0; j < kParamCount; ++j) trial_arr[j] += full_step[j];
        const TissueParams trial = project_feasible(TissueParams::from_array(trial_arr), box);
        const double trial_sse = detail::sse_at(model, trial, signal, buf.data());

        if (std::isfinite(trial_sse) && trial_sse < sse) {
            const auto ta = trial.to_array();
            double dnorm = 0.0, pnorm = 0.0;
            for (int j = 0; j < kParamCount; ++j) {
                dnorm += (ta[j] - pa[j]) * (ta[j] - pa[j]);
                pnorm += pa[j] * pa[j];
            }
            p = trial;
            sse = trial_sse;
            if (config.record_trace) res.sse_trace.push_back(sse);
            lambda = std::max(lambda / config.lambda_down, 1e-15);
            need_jacobian = true;
            if (std::sqrt(dnorm) <= config.step_tolerance * (std::sqrt(pnorm) + config.step_tolerance)) {
                res.converged = true;
                break;
            }
        } else {
            const auto ta = trial.to_array();
            double dnorm = 0.0, pnorm = 0.0;
            for (int j = 0; j < kParamCount; ++j) {
                dnorm += (ta[j] - pa[j]) * (ta[j] - pa[j]);
                pnorm += pa[j] * pa[j];
            }
            if (std::sqrt(dnorm) <= config.step_tolerance * (std::sqrt(pnorm) + config.step_tolerance)) {
                // even the damped step is below tolerance: nothing left to gain
                res.converged = true;
                break;
            }
            lambda *= config.lambda_up;
            if (lambda > 1e16) {
                // no descent available from here: stationary under projection
                res.converged = true;
                break;
            }
        }
    }
    res.params = p;
    res.residual_norm = sse;
    res.iterations = it;
    return res;
}

inline FitResult fit_voxel(const SignalVector& signal, const VerdictModel& model, const TissueParams& init,
                           const NllsConfig& config = {}) {
    if (static_cast<std::size_t>(signal.size()) != model.size())
        throw std::invalid_argument("fit_voxel: signal length does not match protocol");
    return fit_voxel(signal.data(), model, init, config);
}

/// LM from each of config.starts grid start points; keeps the lowest SSE,
/// earliest start on ties.
inline FitResult fit_multistart(const double* signal, const VerdictModel& model, const GridSearch& grid,
                                const NllsConfig& config = {}) {
    FitResult best;
    bool have = false;
    for (const auto& init : grid.starts(signal, static_cast<std::size_t>(config.starts))) {
        FitResult r = fit_voxel(signal, model, init, config);
        if (!have || r.residual_norm < best.residual_norm) {
            best = std::move(r);
            have = true;
        }
    }
    return best;
}

/// Grid search + LM for every row of signals. Output order matches input
/// order for any thread count; a failing voxel records its error message and
/// does not abort the batch.
inline std::vector<FitResult> fit_volume(const SignalTable& signals, const VerdictModel& model,
                                         const NllsConfig& config = {}, std::size_t threads = 1) {
    if (signals.rows() > 0 && static_cast<std::size_t>(signals.cols()) != model.size())
        throw std::invalid_argument("fit_volume: signal columns do not match protocol");
    std::vector<FitResult> out(static_cast<std::size_t>(signals.rows()));
    if (out.empty()) return out;
    const GridSearch grid(model, config);
    parallel_for(out.size(), threads, [&](std::size_t i) {
        const double* y = signals.row(static_cast<Eigen::Index>(i)).data();
        try {
            bool finite = true;
            for (Eigen::Index k = 0; k < signals.cols(); ++k) finite = finite && std::isfinite(y[k]);
            if (!finite) throw std::runtime_error("non-finite signal");
            out[i] = fit_multistart(y, model, grid, config);
        } catch (const std::exception& e) {
            out[i] = FitResult{};
            out[i].error = e.what();
            out[i].converged = false;
            out[i].residual_norm = std::numeric_limits<double>::quiet_NaN();
        }
    });
    return out;
}

}  // namespace verdict
