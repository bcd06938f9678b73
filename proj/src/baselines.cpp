#include "cstn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cstn {

// --- historical average by slot ---

void HaAllBaseline::fit(const IntervalSeries& series) {
    series.validate();
    const int slots = series.slots_per_day();
    mean_.assign(static_cast<std::size_t>(slots), Tensor());
    count_.assign(static_cast<std::size_t>(slots), 0);
    stats_ = series.stats;
    for (int t = 0; t < series.train_intervals; ++t) {
        const int slot = series.slot_of(t);
        Tensor norm = normalize_od(series.od[t], stats_);
        if (count_[slot] == 0) {
            mean_[slot] = std::move(norm);
        } else {
            Tensor& m = mean_[slot];
            for (std::size_t i = 0; i < m.numel(); ++i) m[i] += norm[i];
        }
        ++count_[slot];
    }
    for (int s = 0; s < slots; ++s)
        if (count_[s] > 0) {
            Tensor& m = mean_[s];
            const double inv = 1.0 / count_[s];
            for (std::size_t i = 0; i < m.numel(); ++i) m[i] *= inv;
        }
}

bool HaAllBaseline::slot_known(int slot) const {
    return slot >= 0 && slot < static_cast<int>(count_.size()) && count_[slot] > 0;
}

const Tensor& HaAllBaseline::slot_mean(int slot) const {
    if (!slot_known(slot))
        throw std::invalid_argument("HaAllBaseline: no training data for slot " + std::to_string(slot));
    return mean_[slot];
}

Tensor HaAllBaseline::predict_raw(const IntervalSeries& series, int interval_idx) const {
    if (interval_idx < 0 || interval_idx >= series.interval_count())
        throw std::invalid_argument("HaAllBaseline: interval index out of range");
    return denormalize_od(slot_mean(series.slot_of(interval_idx)), stats_);
}

// --- recent-history average ---

Tensor ha_rec_predict_raw(const SampleWindow& window, const NormStats& stats) {
    if (window.inputs.empty()) throw std::invalid_argument("ha_rec: window has no inputs");
    Tensor mean(window.inputs.front().shape());
    for (const Tensor& in : window.inputs) {
        if (!in.same_shape(mean)) throw std::invalid_argument("ha_rec: mixed input shapes");
        for (std::size_t i = 0; i < mean.numel(); ++i) mean[i] += in[i];
    }
    const double inv = 1.0 / static_cast<double>(window.inputs.size());
    for (std::size_t i = 0; i < mean.numel(); ++i) mean[i] *= inv;
    return denormalize_od(mean, stats);
}

// --- least squares ---

namespace {

// In-place Cholesky solve of (G)(X) = B where G is n x n SPD and B is n x m.
void cholesky_solve(std::vector<double>& g, std::vector<double>& b, int n, int m) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = g[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= g[static_cast<std::size_t>(i) * n + k] * g[static_cast<std::size_t>(j) * n + k];
            if (i == j) {
                if (s <= 0.0) throw std::invalid_argument("least squares: design matrix is singular");
                g[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
            } else {
                g[static_cast<std::size_t>(i) * n + j] = s / g[static_cast<std::size_t>(j) * n + j];
            }
        }
    }
    // forward then backward substitution against the lower factor
    for (int c = 0; c < m; ++c) {
        for (int i = 0; i < n; ++i) {
            double s = b[static_cast<std::size_t>(i) * m + c];
            for (int k = 0; k < i; ++k) s -= g[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(k) * m + c];
            b[static_cast<std::size_t>(i) * m + c] = s / g[static_cast<std::size_t>(i) * n + i];
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = b[static_cast<std::size_t>(i) * m + c];
            for (int k = i + 1; k < n; ++k) s -= g[static_cast<std::size_t>(k) * n + i] * b[static_cast<std::size_t>(k) * m + c];
            b[static_cast<std::size_t>(i) * m + c] = s / g[static_cast<std::size_t>(i) * n + i];
        }
    }
}

std::vector<double> flatten_inputs(const SampleWindow& w, int feat_dim) {
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(feat_dim) + 1);
    for (const Tensor& in : w.inputs)
        for (std::size_t i = 0; i < in.numel(); ++i) x.push_back(in[i]);
    if (static_cast<int>(x.size()) != feat_dim)
        throw std::invalid_argument("least squares: window feature width mismatch");
    x.push_back(1.0);  // intercept
    return x;
}

}  // namespace

void OlsrBaseline::fit(const std::vector<SampleWindow>& train) {
    if (train.empty()) throw std::invalid_argument("least squares: no training windows");
    if (!(ridge_ >= 0.0)) throw std::invalid_argument("least squares: ridge must be non-negative");
    feat_dim_ = 0;
    for (const Tensor& in : train.front().inputs) feat_dim_ += static_cast<int>(in.numel());
    out_shape_ = train.front().targets.front().shape();
    const int D = feat_dim_ + 1;
    const int O = static_cast<int>(shape_numel(out_shape_));

    std::vector<double> gram(static_cast<std::size_t>(D) * D, 0.0);
    std::vector<double> xty(static_cast<std::size_t>(D) * O, 0.0);
    for (const SampleWindow& w : train) {
        const std::vector<double> x = flatten_inputs(w, feat_dim_);
        const Tensor& y = w.targets.front();
        if (static_cast<int>(y.numel()) != O)
            throw std::invalid_argument("least squares: mixed target shapes");
        for (int i = 0; i < D; ++i) {
            if (x[i] == 0.0) continue;
            double* grow = gram.data() + static_cast<std::size_t>(i) * D;
            for (int j = 0; j <= i; ++j) grow[j] += x[i] * x[j];
            double* brow = xty.data() + static_cast<std::size_t>(i) * O;
            for (int o = 0; o < O; ++o) brow[o] += x[i] * y[o];
        }
    }
    // symmetrize the lower-triangle accumulation and add the jitter
    for (int i = 0; i < D; ++i) {
        for (int j = i + 1; j < D; ++j)
            gram[static_cast<std::size_t>(i) * D + j] = gram[static_cast<std::size_t>(j) * D + i];
        gram[static_cast<std::size_t>(i) * D + i] += ridge_;
    }
    cholesky_solve(gram, xty, D, O);
    beta_ = std::move(xty);
}

Tensor OlsrBaseline::predict_norm(const SampleWindow& window) const {
    if (beta_.empty()) throw std::invalid_argument("least squares: model not fitted");
    const std::vector<double> x = flatten_inputs(window, feat_dim_);
    const int D = feat_dim_ + 1;
    const int O = static_cast<int>(shape_numel(out_shape_));
    Tensor out(out_shape_);
    for (int i = 0; i < D; ++i) {
        if (x[i] == 0.0) continue;
        const double* brow = beta_.data() + static_cast<std::size_t>(i) * O;
        for (int o = 0; o < O; ++o) out[o] += x[i] * brow[o];
    }
    return out;
}

Tensor OlsrBaseline::predict_raw(const SampleWindow& window, const NormStats& stats) const {
    Tensor raw = denormalize_od(predict_norm(window), stats);
    for (std::size_t i = 0; i < raw.numel(); ++i) raw[i] = std::max(0.0, raw[i]);
    return raw;
}

// --- shared-channel MLP ---

Tensor MlpBaseline::channel_input(const SampleWindow& window, int channel) const {
    const Tensor& first = window.inputs.front();
    const int HW = first.dim(1) * first.dim(2);
    Tensor x({static_cast<int>(window.inputs.size()) * HW});
    std::size_t pos = 0;
    for (const Tensor& in : window.inputs) {
        const double* src = in.data() + static_cast<std::size_t>(channel) * HW;
        for (int i = 0; i < HW; ++i) x[pos++] = src[i];
    }
    return x;
}

void MlpBaseline::fit(const std::vector<SampleWindow>& train, const MlpBaselineConfig& cfg, Rng& rng) {
    if (train.empty()) throw std::invalid_argument("mlp baseline: no training windows");
    cfg_ = cfg;
    const Tensor& first = train.front().inputs.front();
    if (first.rank() != 3) throw std::invalid_argument("mlp baseline: expected [N, H, W] inputs");
    const int N = first.dim(0);
    const int HW = first.dim(1) * first.dim(2);
    steps_ = static_cast<int>(train.front().inputs.size());
    out_shape_ = {first.dim(1), first.dim(2)};

    params_ = ParamGroup();
    int din = steps_ * HW;
    std::vector<int> widths = cfg.hidden;
    widths.push_back(HW);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const std::string prefix = "mlp.fc" + std::to_string(l);
        params_.add(prefix + ".w",
                    xavier_init({widths[l], din}, mix_seed(cfg.train.seed, fnv1a64(prefix.data(), prefix.size()))));
        params_.add(prefix + ".b", Tensor({widths[l]}));
        din = widths[l];
    }

    const int layer_count = static_cast<int>(widths.size());
    auto loss_fn = [&, N, layer_count](Tape& tape, int sample) -> Var {
        const SampleWindow& w = train[static_cast<std::size_t>(sample) / N];
        const int channel = sample % N;
        Var x = tape.constant(channel_input(w, channel), "mlp.input");
        for (int l = 0; l < layer_count; ++l) {
            const std::string prefix = "mlp.fc" + std::to_string(l);
            x = dense(tape, x, tape.parameter(params_, prefix + ".w"), tape.parameter(params_, prefix + ".b"));
            x = l + 1 < layer_count ? relu(tape, x) : tanh_act(tape, x);
        }
        const Tensor& target = w.targets.front();
        const int HW2 = target.dim(1) * target.dim(2);
        Tensor y({HW2});
        const double* src = target.data() + static_cast<std::size_t>(channel) * HW2;
        for (int i = 0; i < HW2; ++i) y[i] = src[i];
        return mean_squared_error(tape, x, tape.constant(std::move(y), "mlp.target"));
    };

    train_loop(params_, static_cast<int>(train.size()) * N, cfg.train, loss_fn, rng);
}

Tensor MlpBaseline::predict_norm(const SampleWindow& window) const {
    if (params_.size() == 0) throw std::invalid_argument("mlp baseline: model not fitted");
    const Tensor& first = window.inputs.front();
    const int N = first.dim(0);
    Tensor out({N, first.dim(1), first.dim(2)});
    const int HW = first.dim(1) * first.dim(2);
    const int layer_count = static_cast<int>(cfg_.hidden.size()) + 1;
    for (int channel = 0; channel < N; ++channel) {
        Tape tape;  // inference only: weights enter as borrowed constants
        Var x = tape.constant(channel_input(window, channel), "mlp.input");
        for (int l = 0; l < layer_count; ++l) {
            const std::string prefix = "mlp.fc" + std::to_string(l);
            x = dense(tape, x, tape.constant_ref(&params_.value(prefix + ".w")),
                      tape.constant_ref(&params_.value(prefix + ".b")));
            x = l + 1 < layer_count ? relu(tape, x) : tanh_act(tape, x);
        }
        const Tensor& y = tape.value(x);
        double* dst = out.data() + static_cast<std::size_t>(channel) * HW;
        for (int i = 0; i < HW; ++i) dst[i] = y[i];
    }
    return out;
}

Tensor MlpBaseline::predict_raw(const SampleWindow& window, const NormStats& stats) const {
    return denormalize_od(predict_norm(window), stats);
}

}  // namespace cstn
