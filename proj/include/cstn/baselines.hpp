#pragma once

#include <cstdint>
#include <vector>

#include "cstn/pipeline.hpp"
#include "cstn/rng.hpp"
#include "cstn/trainer.hpp"

namespace cstn {

// Baselines operate in normalized space and denormalize for reporting, like
// the main model.

// Historical average by time-of-day slot, fit on the training prefix.
class HaAllBaseline {
public:
    void fit(const IntervalSeries& series);
    bool slot_known(int slot) const;
    // Normalized mean OD tensor for a slot; throws when the slot never
    // occurred in training.
    const Tensor& slot_mean(int slot) const;
    // Raw-demand prediction for an arbitrary series interval.
    Tensor predict_raw(const IntervalSeries& series, int interval_idx) const;

private:
    std::vector<Tensor> mean_;
    std::vector<int> count_;
    NormStats stats_;
};

// Mean of the window's n input tensors (the recent history), denormalized.
Tensor ha_rec_predict_raw(const SampleWindow& window, const NormStats& stats);

// Least squares from flattened input windows to the next tensor, with a small
// ridge jitter for rank safety.  Solved by normal equations and Cholesky.
class OlsrBaseline {
public:
    explicit OlsrBaseline(double ridge = 1e-8) : ridge_(ridge) {}
    void fit(const std::vector<SampleWindow>& train);
    Tensor predict_norm(const SampleWindow& window) const;
    // Denormalized and clamped at zero (demand cannot be negative).
    Tensor predict_raw(const SampleWindow& window, const NormStats& stats) const;

private:
    double ridge_;
    int feat_dim_ = 0;
    std::vector<int> out_shape_;
    std::vector<double> beta_;  // (feat_dim_+1) x out_numel_, intercept row last
};

// One fully connected network shared across destination channels: input is a
// channel's n stacked maps (n*N values), output its next map (N values),
// ReLU hidden layers and a tanh output in normalized space.
struct MlpBaselineConfig {
    std::vector<int> hidden = {128, 128, 64};
    TrainConfig train;  // reused knobs: batch/lr/epochs/seed/...
};

class MlpBaseline {
public:
    // Samples are (window, channel) pairs drawn from the training windows.
    void fit(const std::vector<SampleWindow>& train, const MlpBaselineConfig& cfg, Rng& rng);
    Tensor predict_norm(const SampleWindow& window) const;
    Tensor predict_raw(const SampleWindow& window, const NormStats& stats) const;

    const ParamGroup& params() const { return params_; }

private:
    Tensor channel_input(const SampleWindow& window, int channel) const;

    MlpBaselineConfig cfg_;
    ParamGroup params_;
    std::vector<int> out_shape_;
    int steps_ = 0;
};

}  // namespace cstn
