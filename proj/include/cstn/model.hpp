#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cstn/tape.hpp"

namespace cstn {

// Demand forecaster over an H x W grid with N = H*W regions.  Three stages:
// a two-view conv stack over the OD tensor and its transposed view, a weather-
// conditioned ConvLSTM over the input steps, and a region-affinity stage that
// mixes sequence features through a softmax similarity matrix before the
// prediction head.  The enable flags cut individual stages out for ablations.
struct CSTNConfig {
    int grid_rows = 15;
    int grid_cols = 5;
    int input_steps = 5;  // n
    int horizon = 1;      // m; > 1 adds the decoding branch with its own params

    int local_depth = 3;       // conv layers per view
    int local_channels = 16;   // filters per view layer
    int fuse_channels = 32;    // fused local feature width
    int lstm_channels = 32;    // ConvLSTM state width
    int seq_channels = 75;     // sequence feature width (C_lt)
    int sim_channels = 64;     // similarity embedding width (C_s)
    int meteo_inputs = 29;     // one-hot conditions + 6 indicators
    int meteo_hidden1 = 64;
    int meteo_hidden2 = 16;
    int meteo_embed = 8;

    bool destination_view = true;    // second conv stack over the transposed tensor
    bool meteo_enabled = true;       // weather embedding mixed into the sequence input
    bool temporal_enabled = true;    // ConvLSTM stage (off: one conv over stacked steps)
    bool correlation_enabled = true; // affinity stage (off: head reads the sequence feature)

    int region_count() const { return grid_rows * grid_cols; }
    void validate() const;
};

// Creates every parameter the configured forward pass uses, named by stage
// ("lsc.", "met.", "tec.", "gcc.", "head.", decoder under "dec.").  Weights are
// Xavier-uniform from per-tensor seeds derived from (seed, name); biases and
// peephole tensors start at zero.
void init_cstn_params(const CSTNConfig& cfg, ParamGroup& params, std::uint64_t seed);

// Normalized inputs for one sample; tensors must outlive the tape.
struct ModelInputs {
    const std::vector<Tensor>* od = nullptr;     // n tensors [N, H, W], oldest first
    const std::vector<Tensor>* meteo = nullptr;  // n vectors [meteo_inputs]; may be null when meteo is off
};

// Intermediate stage outputs, optionally captured for inspection.
struct ForwardTrace {
    std::vector<Var> view_origin;  // per step, [local_channels, H, W]
    std::vector<Var> view_dest;
    std::vector<Var> local;        // fused local feature per step, [fuse_channels, H, W]
    std::vector<Var> meteo_embed;  // [meteo_embed, H, W]
    std::vector<Var> seq_input;    // ConvLSTM input per step
    std::vector<Var> hidden;       // h per step, [lstm_channels, H, W]
    std::vector<Var> cell;         // c per step
    Var seq_feature;               // [seq_channels, H, W]
    Var sim_feature;               // [sim_channels, N]
    Var affinity;                  // [N, N], columns sum to one
    Var graph_feature;             // [seq_channels, H, W]
    Var head_input;                // [2*seq_channels, H, W] (or seq_channels when correlation off)
    std::vector<Var> predictions;  // one [N, H, W] per horizon step, values in (-1, 1)
};

// Single-step forward pass (horizon forced to 1).
Var cstn_forward(Tape& t, ParamGroup& params, const CSTNConfig& cfg, const ModelInputs& in,
                 ForwardTrace* trace = nullptr);

// Multi-step variant: the first prediction is exactly the single-step path;
// further steps run a decoding ConvLSTM (seeded with the encoder state) whose
// output feeds a per-step affinity stage and head, parameters shared across
// steps under the "dec." prefix.
std::vector<Var> lcstn_forward(Tape& t, ParamGroup& params, const CSTNConfig& cfg,
                               const ModelInputs& in, ForwardTrace* trace = nullptr);

// Forward declarations from the data pipeline (kept light here).
struct SampleWindow;
struct NormStats;

// Raw-demand predictions for each window: one tensor per horizon step,
// denormalized with the given statistics.
std::vector<std::vector<Tensor>> predict_windows_raw(const CSTNConfig& cfg, ParamGroup& params,
                                                     const std::vector<SampleWindow>& windows,
                                                     const NormStats& stats);

// Exposed pieces, mainly for direct testing.
struct ConvLSTMState {
    Var h, c;
};
// One peephole ConvLSTM step; weights live under `prefix` (wx_*/wh_*/pc_*/b_*).
ConvLSTMState convlstm_step(Tape& t, ParamGroup& params, const std::string& prefix, Var x,
                            ConvLSTMState prev);
ConvLSTMState convlstm_zero_state(Tape& t, const CSTNConfig& cfg);
Var meteo_forward(Tape& t, ParamGroup& params, const CSTNConfig& cfg, Var meteo_vec);

}  // namespace cstn
