// Model checks: stage output shapes under the default configuration, a scalar
// recurrence oracle for the peephole ConvLSTM cell, a full plain-tensor
// recomputation of the single-step forward pass, affinity-stage properties,
// the multi-step branch and the ablation switches.

#include <cmath>
#include <vector>

#include "cstn/model.hpp"
#include "cstn/pipeline.hpp"
#include "cstn/rng.hpp"
#include "cstn/tensor.hpp"
#include "doctest.h"

using namespace cstn;

namespace oracle {

// The slow reference implementations live apart from the library so the two
// can only agree by computing the same math.

Tensor conv(const Tensor& x, const Tensor& w, const Tensor* b) {
    const int cin = x.dim(0), hgt = x.dim(1), wid = x.dim(2);
    const int cout = w.dim(0), k = w.dim(2), pad = k / 2;
    Tensor y({cout, hgt, wid});
    for (int co = 0; co < cout; ++co)
        for (int r = 0; r < hgt; ++r)
            for (int c = 0; c < wid; ++c) {
                double acc = b ? (*b)[co] : 0.0;
                for (int ci = 0; ci < cin; ++ci)
                    for (int dr = 0; dr < k; ++dr)
                        for (int dc = 0; dc < k; ++dc) {
                            const int rr = r + dr - pad, cc = c + dc - pad;
                            if (rr < 0 || rr >= hgt || cc < 0 || cc >= wid) continue;
                            acc += x.at(ci, rr, cc) *
                                   w[((static_cast<std::size_t>(co) * cin + ci) * k + dr) * k + dc];
                        }
                y.at(co, r, c) = acc;
            }
    return y;
}

Tensor map(const Tensor& x, double (*fn)(double)) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = fn(x[i]);
    return y;
}

double relu_s(double v) { return v > 0.0 ? v : 0.0; }
double sigmoid_s(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y({w.dim(0)});
    for (int r = 0; r < w.dim(0); ++r) {
        double acc = b[r];
        for (int c = 0; c < w.dim(1); ++c) acc += w.at(r, c) * x[c];
        y[r] = acc;
    }
    return y;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    Tensor y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data(), a.data() + a.numel(), y.data());
    std::copy(b.data(), b.data() + b.numel(), y.data() + a.numel());
    return y;
}

Tensor tile(const Tensor& v, int h, int w) {
    Tensor y({v.dim(0), h, w});
    for (int ch = 0; ch < v.dim(0); ++ch)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) y.at(ch, r, c) = v[ch];
    return y;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] * b[i];
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
    return y;
}

Tensor reversed_od(const Tensor& od) {
    const int N = od.dim(0);
    Tensor out(od.shape());
    for (int d = 0; d < N; ++d)
        for (int o = 0; o < N; ++o)
            out[static_cast<std::size_t>(o) * N + d] = od[static_cast<std::size_t>(d) * N + o];
    return out;
}

// Full single-step forward with every stage enabled, reading parameters by
// name from the trained group.
Tensor forward(const CSTNConfig& cfg, const ParamGroup& p, const std::vector<Tensor>& ods,
               const std::vector<Tensor>& met) {
    auto W = [&](const std::string& n) -> const Tensor& { return p.value(n); };
    const int N = cfg.region_count();

    Tensor h({cfg.lstm_channels, cfg.grid_rows, cfg.grid_cols});
    Tensor c(h.shape());
    for (int step = 0; step < cfg.input_steps; ++step) {
        Tensor view_o = ods[step];
        Tensor view_d = reversed_od(ods[step]);
        for (int l = 0; l < cfg.local_depth; ++l) {
            const std::string idx = std::to_string(l);
            view_o = map(conv(view_o, W("lsc.origin." + idx + ".w"), &W("lsc.origin." + idx + ".b")), relu_s);
            view_d = map(conv(view_d, W("lsc.dest." + idx + ".w"), &W("lsc.dest." + idx + ".b")), relu_s);
        }
        const Tensor local = conv(concat(view_o, view_d), W("lsc.fuse.w"), &W("lsc.fuse.b"));

        Tensor e = map(dense(met[step], W("met.fc0.w"), W("met.fc0.b")), relu_s);
        e = map(dense(e, W("met.fc1.w"), W("met.fc1.b")), relu_s);
        e = dense(e, W("met.fc2.w"), W("met.fc2.b"));
        const Tensor seq_in = conv(concat(local, tile(e, cfg.grid_rows, cfg.grid_cols)),
                                   W("tec.mix.w"), &W("tec.mix.b"));

        auto gate = [&](const std::string& g, const Tensor* peep_cell) {
            Tensor pre = add(conv(seq_in, W("tec.lstm.wx_" + g), &W("tec.lstm.b_" + g)),
                             conv(h, W("tec.lstm.wh_" + g), nullptr));
            if (peep_cell) pre = add(pre, hadamard(W("tec.lstm.pc_" + g), *peep_cell));
            return pre;
        };
        const Tensor i = map(gate("i", &c), sigmoid_s);
        const Tensor f = map(gate("f", &c), sigmoid_s);
        const Tensor g = map(gate("c", nullptr), std::tanh);
        c = add(hadamard(f, c), hadamard(i, g));
        const Tensor o = map(gate("o", &c), sigmoid_s);
        h = hadamard(o, map(c, std::tanh));
    }

    const Tensor seq = conv(h, W("tec.out.w"), &W("tec.out.b"));

    const Tensor sim_map = conv(seq, W("gcc.sim.w"), &W("gcc.sim.b"));
    // sim_map flattened is [sim_channels, N]; affinity = column softmax of simT sim.
    Tensor aff({N, N});
    for (int a = 0; a < N; ++a)
        for (int bcol = 0; bcol < N; ++bcol) {
            double acc = 0.0;
            for (int ch = 0; ch < cfg.sim_channels; ++ch)
                acc += sim_map[static_cast<std::size_t>(ch) * N + a] *
                       sim_map[static_cast<std::size_t>(ch) * N + bcol];
            aff.at(a, bcol) = acc;
        }
    for (int col = 0; col < N; ++col) {
        double mx = aff.at(0, col);
        for (int r = 1; r < N; ++r) mx = std::max(mx, aff.at(r, col));
        double sum = 0.0;
        for (int r = 0; r < N; ++r) sum += std::exp(aff.at(r, col) - mx);
        for (int r = 0; r < N; ++r) aff.at(r, col) = std::exp(aff.at(r, col) - mx) / sum;
    }
    Tensor mixed(seq.shape());
    for (int ch = 0; ch < cfg.seq_channels; ++ch)
        for (int site = 0; site < N; ++site) {
            double acc = 0.0;
            for (int s = 0; s < N; ++s)
                acc += seq[static_cast<std::size_t>(ch) * N + s] * aff.at(s, site);
            mixed[static_cast<std::size_t>(ch) * N + site] = acc;
        }

    return map(conv(concat(seq, mixed), W("head.w"), &W("head.b")), std::tanh);
}

}  // namespace oracle

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

CSTNConfig small_config() {
    CSTNConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 2;
    cfg.input_steps = 2;
    cfg.local_depth = 2;
    cfg.local_channels = 3;
    cfg.fuse_channels = 5;
    cfg.lstm_channels = 4;
    cfg.seq_channels = 6;
    cfg.sim_channels = 3;
    cfg.meteo_inputs = 5;
    cfg.meteo_hidden1 = 6;
    cfg.meteo_hidden2 = 4;
    cfg.meteo_embed = 3;
    return cfg;
}

struct WindowData {
    std::vector<Tensor> ods;
    std::vector<Tensor> met;
};

WindowData random_inputs(const CSTNConfig& cfg, Rng& rng) {
    WindowData w;
    for (int s = 0; s < cfg.input_steps; ++s) {
        w.ods.push_back(random_tensor({cfg.region_count(), cfg.grid_rows, cfg.grid_cols}, rng));
        w.met.push_back(random_tensor({cfg.meteo_inputs}, rng, 0.0, 1.0));
    }
    return w;
}

}  // namespace

TEST_CASE("stage shapes under the default configuration") {
    CSTNConfig cfg;  // 15x5 grid, N = 75
    REQUIRE(cfg.region_count() == 75);
    ParamGroup params;
    init_cstn_params(cfg, params, 3);
    Rng rng(41);
    WindowData w;
    for (int s = 0; s < cfg.input_steps; ++s) {
        w.ods.push_back(random_tensor({75, 15, 5}, rng));
        w.met.push_back(random_tensor({29}, rng, 0.0, 1.0));
    }
    Tape t;
    ForwardTrace trace;
    ModelInputs in{&w.ods, &w.met};
    Var pred = cstn_forward(t, params, cfg, in, &trace);

    REQUIRE(trace.view_origin.size() == 5);
    REQUIRE(trace.view_dest.size() == 5);
    REQUIRE(trace.local.size() == 5);
    REQUIRE(trace.meteo_embed.size() == 5);
    REQUIRE(trace.hidden.size() == 5);
    for (int s = 0; s < 5; ++s) {
        CHECK(t.value(trace.view_origin[s]).shape() == std::vector<int>{16, 15, 5});
        CHECK(t.value(trace.view_dest[s]).shape() == std::vector<int>{16, 15, 5});
        CHECK(t.value(trace.local[s]).shape() == std::vector<int>{32, 15, 5});
        CHECK(t.value(trace.meteo_embed[s]).shape() == std::vector<int>{8, 15, 5});
        CHECK(t.value(trace.seq_input[s]).shape() == std::vector<int>{32, 15, 5});
        CHECK(t.value(trace.hidden[s]).shape() == std::vector<int>{32, 15, 5});
        CHECK(t.value(trace.cell[s]).shape() == std::vector<int>{32, 15, 5});
    }
    CHECK(t.value(trace.seq_feature).shape() == std::vector<int>{75, 15, 5});
    CHECK(t.value(trace.sim_feature).shape() == std::vector<int>{64, 75});
    CHECK(t.value(trace.affinity).shape() == std::vector<int>{75, 75});
    CHECK(t.value(trace.graph_feature).shape() == std::vector<int>{75, 15, 5});
    CHECK(t.value(trace.head_input).shape() == std::vector<int>{150, 15, 5});
    CHECK(t.value(pred).shape() == std::vector<int>{75, 15, 5});

    // Affinity columns are a distribution over regions.
    const Tensor& aff = t.value(trace.affinity);
    for (int col = 0; col < 75; ++col) {
        double sum = 0.0;
        for (int row = 0; row < 75; ++row) sum += aff.at(row, col);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // Output entries live strictly inside (-1, 1).
    const Tensor& pv = t.value(pred);
    for (std::size_t i = 0; i < pv.numel(); ++i) {
        CHECK(pv[i] > -1.0);
        CHECK(pv[i] < 1.0);
    }
}

TEST_CASE("peephole cell matches the scalar recurrence oracle") {
    // On a 1x1 grid only the center kernel tap contributes, so the cell
    // collapses to scalars: i = sig(wx*x + wh*h + pc*c + b), etc.
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        ParamGroup p;
        auto put = [&](const std::string& n, const std::vector<int>& shape) -> Tensor& {
            return p.add(n, random_tensor(shape, rng));
        };
        struct GateP {
            double wx, wh, pc, b;
        };
        auto gate_params = [&](const std::string& g, bool peephole) {
            GateP gp{};
            const Tensor& wx = put("z.wx_" + g, {1, 1, 3, 3});
            const Tensor& wh = put("z.wh_" + g, {1, 1, 3, 3});
            gp.wx = wx[4];  // center tap of the 3x3 kernel
            gp.wh = wh[4];
            gp.pc = peephole ? put("z.pc_" + g, {1, 1, 1})[0] : 0.0;
            gp.b = put("z.b_" + g, {1})[0];
            return gp;
        };
        const GateP gi = gate_params("i", true);
        const GateP gf = gate_params("f", true);
        const GateP gc = gate_params("c", false);
        const GateP go = gate_params("o", true);

        const double x = rng.uniform(-2.0, 2.0);
        const double h0 = rng.uniform(-1.0, 1.0);
        const double c0 = rng.uniform(-1.0, 1.0);

        Tape t;
        ConvLSTMState prev{t.constant(Tensor({1, 1, 1}, {h0})), t.constant(Tensor({1, 1, 1}, {c0}))};
        ConvLSTMState next = convlstm_step(t, p, "z", t.constant(Tensor({1, 1, 1}, {x})), prev);

        auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        const double i = sig(gi.wx * x + gi.wh * h0 + gi.pc * c0 + gi.b);
        const double f = sig(gf.wx * x + gf.wh * h0 + gf.pc * c0 + gf.b);
        const double g = std::tanh(gc.wx * x + gc.wh * h0 + gc.b);
        const double c1 = f * c0 + i * g;
        const double o = sig(go.wx * x + go.wh * h0 + go.pc * c1 + go.b);
        const double h1 = o * std::tanh(c1);

        CHECK(t.value(next.c)[0] == doctest::Approx(c1).epsilon(1e-12));
        CHECK(t.value(next.h)[0] == doctest::Approx(h1).epsilon(1e-12));
    }
}

TEST_CASE("peephole cell from all-zero params and state") {
    // Zero weights: every gate sits at sigmoid(0) = 0.5, the candidate at
    // tanh(0) = 0, so the new cell and hidden map stay exactly zero.
    ParamGroup p;
    for (const char* g : {"i", "f", "c", "o"}) {
        const std::string gs(g);
        p.add("z.wx_" + gs, Tensor({2, 3, 3, 3}));
        p.add("z.wh_" + gs, Tensor({2, 2, 3, 3}));
        if (gs != "c") p.add("z.pc_" + gs, Tensor({2, 2, 2}));
        p.add("z.b_" + gs, Tensor({2}));
    }
    Tape t;
    ConvLSTMState prev{t.constant(Tensor({2, 2, 2})), t.constant(Tensor({2, 2, 2}))};
    ConvLSTMState next = convlstm_step(t, p, "z", t.constant(Tensor({3, 2, 2})), prev);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(t.value(next.c)[i] == 0.0);
        CHECK(t.value(next.h)[i] == 0.0);
    }
}

TEST_CASE("forward pass matches the plain-tensor recomputation") {
    const CSTNConfig cfg = small_config();
    ParamGroup params;
    init_cstn_params(cfg, params, 17);
    Rng rng(43);
    const WindowData w = random_inputs(cfg, rng);

    Tape t;
    ModelInputs in{&w.ods, &w.met};
    Var pred = cstn_forward(t, params, cfg, in);
    const Tensor expect = oracle::forward(cfg, params, w.ods, w.met);

    REQUIRE(t.value(pred).shape() == expect.shape());
    for (std::size_t i = 0; i < expect.numel(); ++i)
        CHECK(t.value(pred)[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("single-horizon multi-step forward equals the plain forward bitwise") {
    CSTNConfig cfg = small_config();
    cfg.horizon = 1;
    ParamGroup params;
    init_cstn_params(cfg, params, 5);
    Rng rng(44);
    const WindowData w = random_inputs(cfg, rng);

    Tape t1, t2;
    ModelInputs in{&w.ods, &w.met};
    Var a = cstn_forward(t1, params, cfg, in);
    const std::vector<Var> b = lcstn_forward(t2, params, cfg, in);
    REQUIRE(b.size() == 1);
    CHECK(t1.value(a) == t2.value(b[0]));
}

TEST_CASE("input order changes the prediction") {
    CSTNConfig cfg = small_config();
    ParamGroup params;
    init_cstn_params(cfg, params, 7);
    Rng rng(45);
    WindowData w = random_inputs(cfg, rng);

    Tape t1;
    ModelInputs in{&w.ods, &w.met};
    const Tensor first = t1.value(cstn_forward(t1, params, cfg, in));

    std::swap(w.ods[0], w.ods[1]);
    Tape t2;
    const Tensor swapped = t2.value(cstn_forward(t2, params, cfg, in));
    CHECK_FALSE(first == swapped);
}

TEST_CASE("affinity stage on a single-region grid is the identity") {
    CSTNConfig cfg = small_config();
    cfg.grid_rows = 1;
    cfg.grid_cols = 1;
    ParamGroup params;
    init_cstn_params(cfg, params, 9);
    Rng rng(46);
    const WindowData w = random_inputs(cfg, rng);

    Tape t;
    ForwardTrace trace;
    ModelInputs in{&w.ods, &w.met};
    cstn_forward(t, params, cfg, in, &trace);
    CHECK(t.value(trace.affinity).shape() == std::vector<int>{1, 1});
    CHECK(t.value(trace.affinity)[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(t.value(trace.graph_feature) == t.value(trace.seq_feature));
}

TEST_CASE("graph feature entries are convex combinations of region columns") {
    const CSTNConfig cfg = small_config();
    ParamGroup params;
    init_cstn_params(cfg, params, 11);
    Rng rng(47);
    const WindowData w = random_inputs(cfg, rng);

    Tape t;
    ForwardTrace trace;
    ModelInputs in{&w.ods, &w.met};
    cstn_forward(t, params, cfg, in, &trace);
    const Tensor& seq = t.value(trace.seq_feature);
    const Tensor& mixed = t.value(trace.graph_feature);
    const int N = cfg.region_count();
    for (int ch = 0; ch < cfg.seq_channels; ++ch) {
        double lo = 1e18, hi = -1e18;
        for (int s = 0; s < N; ++s) {
            lo = std::min(lo, seq[static_cast<std::size_t>(ch) * N + s]);
            hi = std::max(hi, seq[static_cast<std::size_t>(ch) * N + s]);
        }
        for (int s = 0; s < N; ++s) {
            CHECK(mixed[static_cast<std::size_t>(ch) * N + s] >= lo - 1e-12);
            CHECK(mixed[static_cast<std::size_t>(ch) * N + s] <= hi + 1e-12);
        }
    }
}

TEST_CASE("multi-step horizon emits one prediction per step") {
    CSTNConfig cfg = small_config();
    cfg.horizon = 3;
    ParamGroup params;
    init_cstn_params(cfg, params, 13);
    CHECK(params.contains("dec.in.w"));
    CHECK(params.contains("dec.lstm.wx_i"));
    CHECK(params.contains("dec.gcc.sim.w"));
    CHECK(params.contains("dec.head.w"));

    Rng rng(48);
    const WindowData w = random_inputs(cfg, rng);
    Tape t;
    ModelInputs in{&w.ods, &w.met};
    const std::vector<Var> preds = lcstn_forward(t, params, cfg, in);
    REQUIRE(preds.size() == 3);
    const std::vector<int> shape = {cfg.region_count(), 2, 2};
    for (Var p : preds) {
        CHECK(t.value(p).shape() == shape);
        for (std::size_t i = 0; i < t.value(p).numel(); ++i) {
            CHECK(t.value(p)[i] > -1.0);
            CHECK(t.value(p)[i] < 1.0);
        }
    }
    // Consecutive steps genuinely differ.
    CHECK_FALSE(t.value(preds[0]) == t.value(preds[1]));
    CHECK_FALSE(t.value(preds[1]) == t.value(preds[2]));

    // The first step never consults decoder parameters: the single-step pass
    // with the same weights produces it bitwise.
    CSTNConfig single = cfg;
    single.horizon = 1;
    ParamGroup single_params;
    init_cstn_params(single, single_params, 13);
    Tape t2;
    Var alone = cstn_forward(t2, single_params, single, in);
    CHECK(t2.value(alone) == t.value(preds[0]));
}

TEST_CASE("multi-step horizon requires the temporal stage") {
    CSTNConfig cfg = small_config();
    cfg.horizon = 2;
    cfg.temporal_enabled = false;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("ablation switches change the parameter set and still run") {
    Rng rng(49);

    CSTNConfig no_dest = small_config();
    no_dest.destination_view = false;
    ParamGroup p1;
    init_cstn_params(no_dest, p1, 1);
    CHECK_FALSE(p1.contains("lsc.dest.0.w"));

    CSTNConfig no_met = small_config();
    no_met.meteo_enabled = false;
    ParamGroup p2;
    init_cstn_params(no_met, p2, 1);
    CHECK_FALSE(p2.contains("met.fc0.w"));
    CHECK_FALSE(p2.contains("tec.mix.w"));

    CSTNConfig no_temp = small_config();
    no_temp.temporal_enabled = false;
    ParamGroup p3;
    init_cstn_params(no_temp, p3, 1);
    CHECK(p3.contains("tec.flat.w"));
    CHECK_FALSE(p3.contains("tec.lstm.wx_i"));

    CSTNConfig no_corr = small_config();
    no_corr.correlation_enabled = false;
    ParamGroup p4;
    init_cstn_params(no_corr, p4, 1);
    CHECK_FALSE(p4.contains("gcc.sim.w"));
    // Head reads the sequence feature directly.
    CHECK(p4.value("head.w").dim(1) == no_corr.seq_channels);

    for (CSTNConfig cfg : {no_dest, no_met, no_temp, no_corr}) {
        ParamGroup params;
        init_cstn_params(cfg, params, 2);
        const WindowData w = random_inputs(cfg, rng);
        Tape t;
        ModelInputs in{&w.ods, cfg.meteo_enabled ? &w.met : nullptr};
        Var pred = cstn_forward(t, params, cfg, in);
        CHECK(t.value(pred).shape() == std::vector<int>{cfg.region_count(), 2, 2});
    }
}

TEST_CASE("weather input only matters when the weather stage is on") {
    Rng rng(50);
    CSTNConfig cfg = small_config();
    ParamGroup params;
    init_cstn_params(cfg, params, 21);
    WindowData w = random_inputs(cfg, rng);

    Tape t1;
    ModelInputs in{&w.ods, &w.met};
    const Tensor before = t1.value(cstn_forward(t1, params, cfg, in));
    w.met[0][2] += 0.5;
    Tape t2;
    const Tensor after = t2.value(cstn_forward(t2, params, cfg, in));
    CHECK_FALSE(before == after);

    CSTNConfig off = cfg;
    off.meteo_enabled = false;
    ParamGroup op;
    init_cstn_params(off, op, 21);
    Tape t3, t4;
    ModelInputs in_off{&w.ods, nullptr};
    const Tensor a = t3.value(cstn_forward(t3, op, off, in_off));
    const Tensor b = t4.value(cstn_forward(t4, op, off, in_off));
    CHECK(a == b);
}

TEST_CASE("forward validates its inputs") {
    CSTNConfig cfg = small_config();
    ParamGroup params;
    init_cstn_params(cfg, params, 1);
    Rng rng(51);
    WindowData w = random_inputs(cfg, rng);
    Tape t;

    ModelInputs missing{nullptr, &w.met};
    CHECK_THROWS_AS(cstn_forward(t, params, cfg, missing), std::invalid_argument);

    WindowData short_w = w;
    short_w.ods.pop_back();
    ModelInputs too_few{&short_w.ods, &short_w.met};
    CHECK_THROWS_AS(cstn_forward(t, params, cfg, too_few), std::invalid_argument);

    WindowData bad = random_inputs(cfg, rng);
    bad.ods[1] = Tensor({3, 2, 2});
    ModelInputs wrong_shape{&bad.ods, &bad.met};
    CHECK_THROWS_AS(cstn_forward(t, params, cfg, wrong_shape), std::invalid_argument);

    WindowData bad_met = random_inputs(cfg, rng);
    bad_met.met[0] = Tensor({cfg.meteo_inputs + 1});
    ModelInputs wrong_met{&bad_met.ods, &bad_met.met};
    CHECK_THROWS_AS(cstn_forward(t, params, cfg, wrong_met), std::invalid_argument);
}

TEST_CASE("window prediction denormalizes into the training demand range") {
    CSTNConfig cfg = small_config();
    ParamGroup params;
    init_cstn_params(cfg, params, 23);
    NormStats stats;
    stats.od_min = 0.0;
    stats.od_max = 40.0;

    Rng rng(52);
    SampleWindow win;
    for (int s = 0; s < cfg.input_steps; ++s) {
        win.inputs.push_back(random_tensor({4, 2, 2}, rng));
        win.meteo.push_back(random_tensor({cfg.meteo_inputs}, rng, 0.0, 1.0));
    }
    win.targets.push_back(random_tensor({4, 2, 2}, rng));
    win.target_intervals.push_back(9);

    const auto preds = predict_windows_raw(cfg, params, {win, win}, stats);
    REQUIRE(preds.size() == 2);
    REQUIRE(preds[0].size() == 1);
    CHECK(preds[0][0].shape() == std::vector<int>{4, 2, 2});
    CHECK(preds[0][0] == preds[1][0]);  // same window, same result
    for (std::size_t i = 0; i < preds[0][0].numel(); ++i) {
        CHECK(preds[0][0][i] > 0.0);
        CHECK(preds[0][0][i] < 40.0);
    }
}
