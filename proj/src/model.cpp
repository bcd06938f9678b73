#include "cstn/model.hpp"

#include <stdexcept>

#include "cstn/pipeline.hpp"
#include "cstn/rng.hpp"

namespace cstn {

void CSTNConfig::validate() const {
    if (grid_rows <= 0 || grid_cols <= 0) throw std::invalid_argument("CSTNConfig: grid dims must be positive");
    if (input_steps < 1) throw std::invalid_argument("CSTNConfig: input_steps must be at least 1");
    if (horizon < 1) throw std::invalid_argument("CSTNConfig: horizon must be at least 1");
    if (horizon > 1 && !temporal_enabled)
        throw std::invalid_argument("CSTNConfig: multi-step horizon needs the temporal stage");
    if (local_depth < 1) throw std::invalid_argument("CSTNConfig: local_depth must be at least 1");
    for (int v : {local_channels, fuse_channels, lstm_channels, seq_channels, sim_channels,
                  meteo_hidden1, meteo_hidden2, meteo_embed})
        if (v <= 0) throw std::invalid_argument("CSTNConfig: channel widths must be positive");
    if (meteo_enabled && meteo_inputs <= 0)
        throw std::invalid_argument("CSTNConfig: meteo_inputs must be positive");
}

namespace {

Tensor named_xavier(const std::vector<int>& shape, std::uint64_t master, const std::string& name) {
    return xavier_init(shape, mix_seed(master, fnv1a64(name.data(), name.size())));
}

void add_conv(ParamGroup& p, std::uint64_t seed, const std::string& prefix, int cout, int cin, int k) {
    p.add(prefix + ".w", named_xavier({cout, cin, k, k}, seed, prefix + ".w"));
    p.add(prefix + ".b", Tensor({cout}));
}

void add_dense(ParamGroup& p, std::uint64_t seed, const std::string& prefix, int dout, int din) {
    p.add(prefix + ".w", named_xavier({dout, din}, seed, prefix + ".w"));
    p.add(prefix + ".b", Tensor({dout}));
}

void add_convlstm(ParamGroup& p, std::uint64_t seed, const std::string& prefix, int channels,
                  int in_channels, int rows, int cols) {
    for (const char* gate : {"i", "f", "c", "o"}) {
        const std::string g(gate);
        p.add(prefix + ".wx_" + g,
              named_xavier({channels, in_channels, 3, 3}, seed, prefix + ".wx_" + g));
        p.add(prefix + ".wh_" + g, named_xavier({channels, channels, 3, 3}, seed, prefix + ".wh_" + g));
        if (g != "c") p.add(prefix + ".pc_" + g, Tensor({channels, rows, cols}));
        p.add(prefix + ".b_" + g, Tensor({channels}));
    }
}

}  // namespace

void init_cstn_params(const CSTNConfig& cfg, ParamGroup& params, std::uint64_t seed) {
    cfg.validate();
    const int N = cfg.region_count();

    add_conv(params, seed, "lsc.origin.0", cfg.local_channels, N, 3);
    for (int l = 1; l < cfg.local_depth; ++l)
        add_conv(params, seed, "lsc.origin." + std::to_string(l), cfg.local_channels, cfg.local_channels, 3);
    if (cfg.destination_view) {
        add_conv(params, seed, "lsc.dest.0", cfg.local_channels, N, 3);
        for (int l = 1; l < cfg.local_depth; ++l)
            add_conv(params, seed, "lsc.dest." + std::to_string(l), cfg.local_channels, cfg.local_channels, 3);
    }
    const int fuse_in = cfg.destination_view ? 2 * cfg.local_channels : cfg.local_channels;
    add_conv(params, seed, "lsc.fuse", cfg.fuse_channels, fuse_in, 3);

    if (cfg.meteo_enabled) {
        add_dense(params, seed, "met.fc0", cfg.meteo_hidden1, cfg.meteo_inputs);
        add_dense(params, seed, "met.fc1", cfg.meteo_hidden2, cfg.meteo_hidden1);
        add_dense(params, seed, "met.fc2", cfg.meteo_embed, cfg.meteo_hidden2);
        add_conv(params, seed, "tec.mix", cfg.fuse_channels, cfg.fuse_channels + cfg.meteo_embed, 3);
    }

    if (cfg.temporal_enabled) {
        add_convlstm(params, seed, "tec.lstm", cfg.lstm_channels, cfg.fuse_channels, cfg.grid_rows,
                     cfg.grid_cols);
        add_conv(params, seed, "tec.out", cfg.seq_channels, cfg.lstm_channels, 1);
    } else {
        add_conv(params, seed, "tec.flat", cfg.seq_channels, cfg.input_steps * cfg.fuse_channels, 3);
    }

    if (cfg.correlation_enabled) add_conv(params, seed, "gcc.sim", cfg.sim_channels, cfg.seq_channels, 1);
    const int head_in = cfg.correlation_enabled ? 2 * cfg.seq_channels : cfg.seq_channels;
    add_conv(params, seed, "head", N, head_in, 1);

    if (cfg.horizon > 1) {
        add_conv(params, seed, "dec.in", cfg.fuse_channels, cfg.seq_channels, 1);
        add_convlstm(params, seed, "dec.lstm", cfg.lstm_channels, cfg.fuse_channels, cfg.grid_rows,
                     cfg.grid_cols);
        add_conv(params, seed, "dec.out", cfg.seq_channels, cfg.lstm_channels, 1);
        if (cfg.correlation_enabled) add_conv(params, seed, "dec.gcc.sim", cfg.sim_channels, cfg.seq_channels, 1);
        add_conv(params, seed, "dec.head", N, head_in, 1);
    }
}

namespace {

Var conv_p(Tape& t, ParamGroup& p, const std::string& prefix, Var x) {
    return conv2d(t, x, t.parameter(p, prefix + ".w"), t.parameter(p, prefix + ".b"));
}

// Two-view local stage for one interval: conv stacks over the OD tensor and
// its transposed view, concatenated and fused by one linear conv.
Var local_forward(Tape& t, ParamGroup& p, const CSTNConfig& cfg, Var od, ForwardTrace* trace) {
    Var origin = od;
    for (int l = 0; l < cfg.local_depth; ++l)
        origin = relu(t, conv_p(t, p, "lsc.origin." + std::to_string(l), origin));
    if (trace) trace->view_origin.push_back(origin);
    Var fused_in = origin;
    if (cfg.destination_view) {
        Var dest = t.constant(transpose_od(t.value(od)), "input.od_transposed");
        for (int l = 0; l < cfg.local_depth; ++l)
            dest = relu(t, conv_p(t, p, "lsc.dest." + std::to_string(l), dest));
        if (trace) trace->view_dest.push_back(dest);
        fused_in = concat_channels(t, origin, dest);
    }
    Var local = conv_p(t, p, "lsc.fuse", fused_in);
    if (trace) trace->local.push_back(local);
    return local;
}

// Affinity stage: embed the sequence feature, form the column-softmax region
// similarity matrix, and mix region columns through it.
Var correlation_forward(Tape& t, ParamGroup& p, const std::string& prefix, const CSTNConfig& cfg,
                        Var seq_feature, ForwardTrace* trace) {
    const int N = cfg.region_count();
    Var sim_map = conv_p(t, p, prefix + ".sim", seq_feature);
    Var sim = reshape(t, sim_map, {cfg.sim_channels, N});
    Var affinity = softmax_columns(t, matmul(t, transpose2d(t, sim), sim));
    t.relabel(affinity, prefix + ".affinity");
    Var seq_flat = reshape(t, seq_feature, {cfg.seq_channels, N});
    Var mixed = reshape(t, matmul(t, seq_flat, affinity), {cfg.seq_channels, cfg.grid_rows, cfg.grid_cols});
    if (trace) {
        trace->sim_feature = sim;
        trace->affinity = affinity;
        trace->graph_feature = mixed;
    }
    return concat_channels(t, seq_feature, mixed);
}

Var head_forward(Tape& t, ParamGroup& p, const std::string& head_prefix, Var head_in) {
    return tanh_act(t, conv_p(t, p, head_prefix, head_in));
}

}  // namespace

ConvLSTMState convlstm_zero_state(Tape& t, const CSTNConfig& cfg) {
    Tensor zeros({cfg.lstm_channels, cfg.grid_rows, cfg.grid_cols});
    return {t.constant(zeros, "lstm.h0"), t.constant(std::move(zeros), "lstm.c0")};
}

ConvLSTMState convlstm_step(Tape& t, ParamGroup& p, const std::string& prefix, Var x,
                            ConvLSTMState prev) {
    auto gate_pre = [&](const std::string& g, Var peep_cell, bool peephole) {
        Var pre = add(t,
                      conv2d(t, x, t.parameter(p, prefix + ".wx_" + g),
                             t.parameter(p, prefix + ".b_" + g)),
                      conv2d(t, prev.h, t.parameter(p, prefix + ".wh_" + g)));
        if (peephole) pre = add(t, pre, hadamard(t, t.parameter(p, prefix + ".pc_" + g), peep_cell));
        return pre;
    };
    // Input/forget gates peek at the previous cell, the output gate at the
    // updated one; the input gate conv carries the bias, the recurrent conv
    // does not (one bias per gate).
    Var i = sigmoid(t, gate_pre("i", prev.c, true));
    Var f = sigmoid(t, gate_pre("f", prev.c, true));
    Var g = tanh_act(t, gate_pre("c", prev.c, false));
    Var c = add(t, hadamard(t, f, prev.c), hadamard(t, i, g));
    Var o = sigmoid(t, gate_pre("o", c, true));
    Var h = hadamard(t, o, tanh_act(t, c));
    t.relabel(c, prefix + ".cell");
    t.relabel(h, prefix + ".hidden");
    return {h, c};
}

Var meteo_forward(Tape& t, ParamGroup& p, const CSTNConfig& cfg, Var meteo_vec) {
    Var h = relu(t, dense(t, meteo_vec, t.parameter(p, "met.fc0.w"), t.parameter(p, "met.fc0.b")));
    h = relu(t, dense(t, h, t.parameter(p, "met.fc1.w"), t.parameter(p, "met.fc1.b")));
    h = dense(t, h, t.parameter(p, "met.fc2.w"), t.parameter(p, "met.fc2.b"));
    return tile_to_map(t, h, cfg.grid_rows, cfg.grid_cols);
}

std::vector<Var> lcstn_forward(Tape& t, ParamGroup& params, const CSTNConfig& cfg,
                               const ModelInputs& in, ForwardTrace* trace) {
    cfg.validate();
    if (in.od == nullptr || static_cast<int>(in.od->size()) != cfg.input_steps)
        throw std::invalid_argument("forward: expected " + std::to_string(cfg.input_steps) +
                                    " input tensors");
    if (cfg.meteo_enabled &&
        (in.meteo == nullptr || static_cast<int>(in.meteo->size()) != cfg.input_steps))
        throw std::invalid_argument("forward: expected one weather vector per input step");
    const std::vector<int> od_shape = {cfg.region_count(), cfg.grid_rows, cfg.grid_cols};
    for (const Tensor& od : *in.od)
        if (od.shape() != od_shape)
            throw std::invalid_argument("forward: input tensor shape " + od.shape_str() +
                                        " does not match the configured grid");

    ConvLSTMState state{};
    std::vector<Var> seq_inputs;
    if (cfg.temporal_enabled) state = convlstm_zero_state(t, cfg);

    for (int step = 0; step < cfg.input_steps; ++step) {
        Var od = t.constant_ref(&(*in.od)[step], "input.od[" + std::to_string(step) + "]");
        Var local = local_forward(t, params, cfg, od, trace);
        Var seq_in = local;
        if (cfg.meteo_enabled) {
            const Tensor& mv = (*in.meteo)[step];
            if (mv.rank() != 1 || mv.dim(0) != cfg.meteo_inputs)
                throw std::invalid_argument("forward: weather vector must be [" +
                                            std::to_string(cfg.meteo_inputs) + "], got " + mv.shape_str());
            Var embed = meteo_forward(t, params, cfg,
                                      t.constant_ref(&mv, "input.meteo[" + std::to_string(step) + "]"));
            if (trace) trace->meteo_embed.push_back(embed);
            seq_in = conv_p(t, params, "tec.mix", concat_channels(t, local, embed));
        }
        if (trace) trace->seq_input.push_back(seq_in);
        if (cfg.temporal_enabled) {
            state = convlstm_step(t, params, "tec.lstm", seq_in, state);
            if (trace) {
                trace->hidden.push_back(state.h);
                trace->cell.push_back(state.c);
            }
        } else {
            seq_inputs.push_back(seq_in);
        }
    }

    Var seq_feature;
    if (cfg.temporal_enabled) {
        seq_feature = conv_p(t, params, "tec.out", state.h);
    } else {
        Var stacked = seq_inputs[0];
        for (std::size_t i = 1; i < seq_inputs.size(); ++i)
            stacked = concat_channels(t, stacked, seq_inputs[i]);
        seq_feature = conv_p(t, params, "tec.flat", stacked);
    }
    t.relabel(seq_feature, "tec.seq_feature");
    if (trace) trace->seq_feature = seq_feature;

    std::vector<Var> preds;
    {
        Var head_in = cfg.correlation_enabled
                          ? correlation_forward(t, params, "gcc", cfg, seq_feature, trace)
                          : seq_feature;
        if (trace) trace->head_input = head_in;
        Var pred = head_forward(t, params, "head", head_in);
        t.relabel(pred, "prediction[0]");
        if (trace) trace->predictions.push_back(pred);
        preds.push_back(pred);
    }

    // Decoding branch: project the sequence feature back to the ConvLSTM input
    // width, advance a decoder cell from the encoder state, and run the same
    // affinity+head shape per step with decoder-owned parameters.
    Var carried = seq_feature;
    for (int step = 1; step < cfg.horizon; ++step) {
        Var x = conv_p(t, params, "dec.in", carried);
        state = convlstm_step(t, params, "dec.lstm", x, state);
        carried = conv_p(t, params, "dec.out", state.h);
        t.relabel(carried, "dec.seq_feature[" + std::to_string(step) + "]");
        Var head_in = cfg.correlation_enabled
                          ? correlation_forward(t, params, "dec.gcc", cfg, carried, nullptr)
                          : carried;
        Var pred = head_forward(t, params, "dec.head", head_in);
        t.relabel(pred, "prediction[" + std::to_string(step) + "]");
        if (trace) trace->predictions.push_back(pred);
        preds.push_back(pred);
    }
    return preds;
}

Var cstn_forward(Tape& t, ParamGroup& params, const CSTNConfig& cfg, const ModelInputs& in,
                 ForwardTrace* trace) {
    CSTNConfig single = cfg;
    single.horizon = 1;
    return lcstn_forward(t, params, single, in, trace).front();
}

std::vector<std::vector<Tensor>> predict_windows_raw(const CSTNConfig& cfg, ParamGroup& params,
                                                     const std::vector<SampleWindow>& windows,
                                                     const NormStats& stats) {
    std::vector<std::vector<Tensor>> out;
    out.reserve(windows.size());
    for (const SampleWindow& w : windows) {
        Tape tape;
        ModelInputs in{&w.inputs, cfg.meteo_enabled ? &w.meteo : nullptr};
        const std::vector<Var> preds = lcstn_forward(tape, params, cfg, in);
        std::vector<Tensor> raw;
        raw.reserve(preds.size());
        for (Var p : preds) raw.push_back(denormalize_od(tape.value(p), stats));
        out.push_back(std::move(raw));
    }
    return out;
}

}  // namespace cstn
