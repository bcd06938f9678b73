#include "cstn/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace cstn {

namespace {

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline void axpy(double alpha, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Patch matrix for same-padded cross-correlation: one row per site (i*W+j),
// K = C_in*k*k entries per row, zeros where the kernel footprint leaves the
// map.  Rows are contiguous so the conv kernels reduce to dot/axpy calls.
void im2col(const Tensor& x, int k, std::vector<double>& patches) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int p = k / 2, K = C * k * k;
    patches.assign(static_cast<std::size_t>(H) * W * K, 0.0);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double* row = patches.data() + (static_cast<std::size_t>(i) * W + j) * K;
            for (int c = 0; c < C; ++c) {
                const double* xc = x.data() + static_cast<std::size_t>(c) * H * W;
                for (int u = 0; u < k; ++u) {
                    const int xi = i + u - p;
                    if (xi < 0 || xi >= H) continue;
                    double* dst = row + (c * k + u) * k;
                    for (int v = 0; v < k; ++v) {
                        const int xj = j + v - p;
                        if (xj >= 0 && xj < W) dst[v] = xc[xi * W + xj];
                    }
                }
            }
        }
    }
}

// Transposed scatter of im2col: accumulates patch-row gradients onto gx.
void col2im_add(const std::vector<double>& gpatches, int k, Tensor& gx) {
    const int C = gx.dim(0), H = gx.dim(1), W = gx.dim(2);
    const int p = k / 2, K = C * k * k;
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            const double* row = gpatches.data() + (static_cast<std::size_t>(i) * W + j) * K;
            for (int c = 0; c < C; ++c) {
                double* xc = gx.data() + static_cast<std::size_t>(c) * H * W;
                for (int u = 0; u < k; ++u) {
                    const int xi = i + u - p;
                    if (xi < 0 || xi >= H) continue;
                    const double* src = row + (c * k + u) * k;
                    for (int v = 0; v < k; ++v) {
                        const int xj = j + v - p;
                        if (xj >= 0 && xj < W) xc[xi * W + xj] += src[v];
                    }
                }
            }
        }
    }
}

}  // namespace

Var Tape::constant(Tensor value, std::string label) {
    return Var{add_node(std::move(value), {}, nullptr, std::move(label), false)};
}

Var Tape::constant_ref(const Tensor* value, std::string label) {
    if (value == nullptr) throw std::invalid_argument("Tape::constant_ref: null tensor");
    Node n;
    n.borrowed = value;
    n.label = std::move(label);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(ParamGroup& group, const std::string& name) {
    for (std::size_t i = 0; i < param_names_.size(); ++i)
        if (param_names_[i] == name) return Var{param_node_ids_[i]};
    Node n;
    n.borrowed = &group.value(name);
    n.label = name;
    n.requires_grad = true;
    n.param_index = static_cast<int>(param_names_.size());
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_names_.push_back(name);
    param_node_ids_.push_back(id);
    return Var{id};
}

int Tape::add_node(Tensor value, std::vector<int> parents,
                   std::function<void(Tape&, int)> backward_fn, std::string label,
                   bool requires_grad) {
    Node n;
    n.owned = std::move(value);
    n.parents = std::move(parents);
    n.backward_fn = std::move(backward_fn);
    n.label = std::move(label);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Tape::value(int id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.owned;
}

bool Tape::any_parent_needs_grad(std::initializer_list<Var> vars) const {
    for (Var v : vars)
        if (v.id >= 0 && nodes_[v.id].requires_grad) return true;
    return false;
}

Tensor& Tape::grad_buffer(int id) {
    if (grads_[id].empty()) grads_[id] = Tensor(value(id).shape());
    return grads_[id];
}

void Tape::check_var(Var v, const char* who) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument(std::string(who) + ": variable does not belong to this tape");
}

GradRecord Tape::backward(Var scalar_loss) {
    check_var(scalar_loss, "backward");
    if (value(scalar_loss.id).numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    value(scalar_loss.id).shape_str());
    GradRecord record;
    if (!nodes_[scalar_loss.id].requires_grad) return record;  // loss depends on no parameter
    grads_.assign(nodes_.size(), Tensor());
    grads_[scalar_loss.id] = Tensor::scalar(1.0);
    for (int id = scalar_loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.requires_grad || grads_[id].empty()) continue;
        if (n.backward_fn) n.backward_fn(*this, id);
    }
    for (std::size_t i = 0; i < param_node_ids_.size(); ++i) {
        const int id = param_node_ids_[i];
        if (!grads_[id].empty()) record.add(param_names_[i], std::move(grads_[id]));
    }
    grads_.clear();
    return record;
}

GradRecord Tape::backward(Var scalar_loss, const ParamGroup& zero_fill) {
    GradRecord record = backward(scalar_loss);
    record.ensure_zeros(zero_fill);
    return record;
}

std::string Tape::first_nonfinite_label() const {
    for (std::size_t id = 0; id < nodes_.size(); ++id)
        if (!value(static_cast<int>(id)).all_finite())
            return nodes_[id].label.empty() ? ("node#" + std::to_string(id)) : nodes_[id].label;
    return "";
}

// --- ops ---

namespace {

Var conv2d_impl(Tape& t, Var input, Var weights, Var bias, bool has_bias) {
    t.check_var(input, "conv2d");
    t.check_var(weights, "conv2d");
    if (has_bias) t.check_var(bias, "conv2d");
    const Tensor& x = t.value(input);
    const Tensor& w = t.value(weights);
    if (x.rank() != 3) throw std::invalid_argument("conv2d: input must be rank 3, got " + x.shape_str());
    if (w.rank() != 4) throw std::invalid_argument("conv2d: weights must be rank 4, got " + w.shape_str());
    if (w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
        throw std::invalid_argument("conv2d: kernel must be square with odd size, got " + w.shape_str());
    if (w.dim(1) != x.dim(0))
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(w.dim(1)) +
                                    " input channels but input has " + std::to_string(x.dim(0)));
    const int Cout = w.dim(0), Cin = x.dim(0), H = x.dim(1), W = x.dim(2), k = w.dim(2);
    const int K = Cin * k * k, HW = H * W;
    if (has_bias) {
        const Tensor& b = t.value(bias);
        if (b.rank() != 1 || b.dim(0) != Cout)
            throw std::invalid_argument("conv2d: bias must be [" + std::to_string(Cout) + "], got " +
                                        b.shape_str());
    }

    std::vector<double> patches;
    im2col(x, k, patches);
    Tensor y({Cout, H, W});
    const double* bp = has_bias ? t.value(bias).data() : nullptr;
    for (int co = 0; co < Cout; ++co) {
        const double* wrow = w.data() + static_cast<std::size_t>(co) * K;
        double* yrow = y.data() + static_cast<std::size_t>(co) * HW;
        const double b0 = bp ? bp[co] : 0.0;
        for (int s = 0; s < HW; ++s) yrow[s] = b0 + dot(wrow, patches.data() + static_cast<std::size_t>(s) * K, K);
    }

    const bool rg = has_bias ? t.any_parent_needs_grad({input, weights, bias})
                             : t.any_parent_needs_grad({input, weights});
    const int xid = input.id, wid = weights.id, bid = has_bias ? bias.id : -1;
    auto bfn = [xid, wid, bid, k](Tape& tp, int self) {
        const Tensor& g = tp.grad_view(self);
        const Tensor& x2 = tp.value(xid);
        const Tensor& w2 = tp.value(wid);
        const int Cout2 = w2.dim(0), Cin2 = x2.dim(0), H2 = x2.dim(1), W2 = x2.dim(2);
        const int K2 = Cin2 * k * k, HW2 = H2 * W2;
        if (bid >= 0 && tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buffer(bid);
            for (int co = 0; co < Cout2; ++co) {
                const double* grow = g.data() + static_cast<std::size_t>(co) * HW2;
                double s = 0.0;
                for (int i = 0; i < HW2; ++i) s += grow[i];
                gb[co] += s;
            }
        }
        const bool wg = tp.needs_grad(wid), xg = tp.needs_grad(xid);
        if (!wg && !xg) return;
        std::vector<double> patches2;
        im2col(x2, k, patches2);
        if (wg) {
            Tensor& gw = tp.grad_buffer(wid);
            for (int co = 0; co < Cout2; ++co) {
                double* gwrow = gw.data() + static_cast<std::size_t>(co) * K2;
                const double* grow = g.data() + static_cast<std::size_t>(co) * HW2;
                for (int s = 0; s < HW2; ++s)
                    if (grow[s] != 0.0)
                        axpy(grow[s], patches2.data() + static_cast<std::size_t>(s) * K2, gwrow, K2);
            }
        }
        if (xg) {
            std::vector<double> gpatches(static_cast<std::size_t>(HW2) * K2, 0.0);
            for (int co = 0; co < Cout2; ++co) {
                const double* wrow = w2.data() + static_cast<std::size_t>(co) * K2;
                const double* grow = g.data() + static_cast<std::size_t>(co) * HW2;
                for (int s = 0; s < HW2; ++s)
                    if (grow[s] != 0.0)
                        axpy(grow[s], wrow, gpatches.data() + static_cast<std::size_t>(s) * K2, K2);
            }
            col2im_add(gpatches, k, tp.grad_buffer(xid));
        }
    };
    std::vector<int> parents = has_bias ? std::vector<int>{xid, wid, bid} : std::vector<int>{xid, wid};
    return Var{t.add_node(std::move(y), std::move(parents), rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "conv2d", rg)};
}

}  // namespace

Var conv2d(Tape& t, Var input, Var weights, Var bias) { return conv2d_impl(t, input, weights, bias, true); }
Var conv2d(Tape& t, Var input, Var weights) { return conv2d_impl(t, input, weights, Var{}, false); }

Var dense(Tape& t, Var input, Var weights, Var bias) {
    t.check_var(input, "dense");
    t.check_var(weights, "dense");
    t.check_var(bias, "dense");
    const Tensor& x = t.value(input);
    const Tensor& w = t.value(weights);
    const Tensor& b = t.value(bias);
    if (x.rank() != 1) throw std::invalid_argument("dense: input must be rank 1, got " + x.shape_str());
    if (w.rank() != 2) throw std::invalid_argument("dense: weights must be rank 2, got " + w.shape_str());
    if (w.dim(1) != x.dim(0))
        throw std::invalid_argument("dense: weight expects input of " + std::to_string(w.dim(1)) +
                                    ", got " + std::to_string(x.dim(0)));
    if (b.rank() != 1 || b.dim(0) != w.dim(0))
        throw std::invalid_argument("dense: bias must be [" + std::to_string(w.dim(0)) + "], got " +
                                    b.shape_str());
    const int Dout = w.dim(0), Din = w.dim(1);
    Tensor y({Dout});
    for (int o = 0; o < Dout; ++o)
        y[o] = b[o] + dot(w.data() + static_cast<std::size_t>(o) * Din, x.data(), Din);

    const bool rg = t.any_parent_needs_grad({input, weights, bias});
    const int xid = input.id, wid = weights.id, bid = bias.id;
    auto bfn = [xid, wid, bid](Tape& tp, int self) {
        const Tensor& g = tp.grad_view(self);
        const Tensor& x2 = tp.value(xid);
        const Tensor& w2 = tp.value(wid);
        const int Dout2 = w2.dim(0), Din2 = w2.dim(1);
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buffer(bid);
            for (int o = 0; o < Dout2; ++o) gb[o] += g[o];
        }
        if (tp.needs_grad(wid)) {
            Tensor& gw = tp.grad_buffer(wid);
            for (int o = 0; o < Dout2; ++o)
                axpy(g[o], x2.data(), gw.data() + static_cast<std::size_t>(o) * Din2, Din2);
        }
        if (tp.needs_grad(xid)) {
            Tensor& gx = tp.grad_buffer(xid);
            for (int o = 0; o < Dout2; ++o)
                axpy(g[o], w2.data() + static_cast<std::size_t>(o) * Din2, gx.data(), Din2);
        }
    };
    return Var{t.add_node(std::move(y), {xid, wid, bid},
                          rg ? std::function<void(Tape&, int)>(bfn) : nullptr, "dense", rg)};
}

Var activation(Tape& t, Var input, Activation kind) {
    t.check_var(input, "activation");
    const Tensor& x = t.value(input);
    Tensor y(x.shape());
    switch (kind) {
        case Activation::Relu:
            for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < x.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
            break;
    }
    const bool rg = t.needs_grad(input.id);
    const int xid = input.id;
    auto bfn = [xid, kind](Tape& tp, int self) {
        if (!tp.needs_grad(xid)) return;
        const Tensor& g = tp.grad_view(self);
        const Tensor& y2 = tp.value(self);
        Tensor& gx = tp.grad_buffer(xid);
        switch (kind) {
            case Activation::Relu:
                for (std::size_t i = 0; i < g.numel(); ++i)
                    if (y2[i] > 0.0) gx[i] += g[i];
                break;
            case Activation::Sigmoid:
                for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y2[i] * (1.0 - y2[i]);
                break;
            case Activation::Tanh:
                for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (1.0 - y2[i] * y2[i]);
                break;
        }
    };
    const char* name = kind == Activation::Relu ? "relu" : kind == Activation::Sigmoid ? "sigmoid" : "tanh";
    return Var{t.add_node(std::move(y), {xid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr, name, rg)};
}

Var relu(Tape& t, Var input) { return activation(t, input, Activation::Relu); }
Var sigmoid(Tape& t, Var input) { return activation(t, input, Activation::Sigmoid); }
Var tanh_act(Tape& t, Var input) { return activation(t, input, Activation::Tanh); }

Var softmax_columns(Tape& t, Var input) {
    t.check_var(input, "softmax_columns");
    const Tensor& x = t.value(input);
    if (x.rank() != 2) throw std::invalid_argument("softmax_columns: input must be rank 2, got " + x.shape_str());
    const int R = x.dim(0), C = x.dim(1);
    Tensor y({R, C});
    for (int c = 0; c < C; ++c) {
        double mx = x.at(0, c);
        for (int r = 1; r < R; ++r) mx = std::max(mx, x.at(r, c));
        double sum = 0.0;
        for (int r = 0; r < R; ++r) {
            const double e = std::exp(x.at(r, c) - mx);
            y.at(r, c) = e;
            sum += e;
        }
        for (int r = 0; r < R; ++r) y.at(r, c) /= sum;
    }
    const bool rg = t.needs_grad(input.id);
    const int xid = input.id;
    auto bfn = [xid](Tape& tp, int self) {
        if (!tp.needs_grad(xid)) return;
        const Tensor& g = tp.grad_view(self);
        const Tensor& y2 = tp.value(self);
        Tensor& gx = tp.grad_buffer(xid);
        const int R2 = y2.dim(0), C2 = y2.dim(1);
        for (int c = 0; c < C2; ++c) {
            double d = 0.0;
            for (int r = 0; r < R2; ++r) d += y2.at(r, c) * g.at(r, c);
            for (int r = 0; r < R2; ++r) gx.at(r, c) += y2.at(r, c) * (g.at(r, c) - d);
        }
    };
    return Var{t.add_node(std::move(y), {xid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "softmax_columns", rg)};
}

Var matmul(Tape& t, Var a, Var b) {
    t.check_var(a, "matmul");
    t.check_var(b, "matmul");
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 2 || B.rank() != 2)
        throw std::invalid_argument("matmul: both inputs must be rank 2, got " + A.shape_str() + " and " +
                                    B.shape_str());
    if (A.dim(1) != B.dim(0))
        throw std::invalid_argument("matmul: inner dims differ, " + A.shape_str() + " vs " + B.shape_str());
    const int P = A.dim(0), Q = A.dim(1), R = B.dim(1);
    Tensor y({P, R});
    for (int i = 0; i < P; ++i) {
        double* yrow = y.data() + static_cast<std::size_t>(i) * R;
        const double* arow = A.data() + static_cast<std::size_t>(i) * Q;
        for (int kk = 0; kk < Q; ++kk)
            if (arow[kk] != 0.0) axpy(arow[kk], B.data() + static_cast<std::size_t>(kk) * R, yrow, R);
    }
    const bool rg = t.any_parent_needs_grad({a, b});
    const int aid = a.id, bid = b.id;
    auto bfn = [aid, bid](Tape& tp, int self) {
        const Tensor& g = tp.grad_view(self);
        const Tensor& A2 = tp.value(aid);
        const Tensor& B2 = tp.value(bid);
        const int P2 = A2.dim(0), Q2 = A2.dim(1), R2 = B2.dim(1);
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buffer(aid);  // gA = g * B^T
            for (int i = 0; i < P2; ++i)
                for (int kk = 0; kk < Q2; ++kk)
                    ga.at(i, kk) += dot(g.data() + static_cast<std::size_t>(i) * R2,
                                        B2.data() + static_cast<std::size_t>(kk) * R2, R2);
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buffer(bid);  // gB = A^T * g
            for (int i = 0; i < P2; ++i) {
                const double* arow = A2.data() + static_cast<std::size_t>(i) * Q2;
                const double* grow = g.data() + static_cast<std::size_t>(i) * R2;
                for (int kk = 0; kk < Q2; ++kk)
                    if (arow[kk] != 0.0)
                        axpy(arow[kk], grow, gb.data() + static_cast<std::size_t>(kk) * R2, R2);
            }
        }
    };
    return Var{t.add_node(std::move(y), {aid, bid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "matmul", rg)};
}

Var transpose2d(Tape& t, Var a) {
    t.check_var(a, "transpose2d");
    const Tensor& A = t.value(a);
    if (A.rank() != 2) throw std::invalid_argument("transpose2d: input must be rank 2, got " + A.shape_str());
    const int R = A.dim(0), C = A.dim(1);
    Tensor y({C, R});
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) y.at(j, i) = A.at(i, j);
    const bool rg = t.needs_grad(a.id);
    const int aid = a.id;
    auto bfn = [aid](Tape& tp, int self) {
        if (!tp.needs_grad(aid)) return;
        const Tensor& g = tp.grad_view(self);
        Tensor& ga = tp.grad_buffer(aid);
        const int C2 = g.dim(0), R2 = g.dim(1);
        for (int j = 0; j < C2; ++j)
            for (int i = 0; i < R2; ++i) ga.at(i, j) += g.at(j, i);
    };
    return Var{t.add_node(std::move(y), {aid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "transpose2d", rg)};
}

namespace {

Var elementwise_binary(Tape& t, Var a, Var b, const char* name, double sign_b) {
    t.check_var(a, name);
    t.check_var(b, name);
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (!A.same_shape(B))
        throw std::invalid_argument(std::string(name) + ": shape mismatch, " + A.shape_str() + " vs " +
                                    B.shape_str());
    Tensor y(A.shape());
    for (std::size_t i = 0; i < A.numel(); ++i) y[i] = A[i] + sign_b * B[i];
    const bool rg = t.any_parent_needs_grad({a, b});
    const int aid = a.id, bid = b.id;
    auto bfn = [aid, bid, sign_b](Tape& tp, int self) {
        const Tensor& g = tp.grad_view(self);
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buffer(aid);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buffer(bid);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += sign_b * g[i];
        }
    };
    return Var{t.add_node(std::move(y), {aid, bid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          name, rg)};
}

}  // namespace

Var add(Tape& t, Var a, Var b) { return elementwise_binary(t, a, b, "add", 1.0); }
Var sub(Tape& t, Var a, Var b) { return elementwise_binary(t, a, b, "sub", -1.0); }

Var scale(Tape& t, Var a, double factor) {
    t.check_var(a, "scale");
    const Tensor& A = t.value(a);
    Tensor y(A.shape());
    for (std::size_t i = 0; i < A.numel(); ++i) y[i] = factor * A[i];
    const bool rg = t.needs_grad(a.id);
    const int aid = a.id;
    auto bfn = [aid, factor](Tape& tp, int self) {
        if (!tp.needs_grad(aid)) return;
        const Tensor& g = tp.grad_view(self);
        Tensor& ga = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += factor * g[i];
    };
    return Var{t.add_node(std::move(y), {aid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "scale", rg)};
}

Var hadamard(Tape& t, Var a, Var b) {
    t.check_var(a, "hadamard");
    t.check_var(b, "hadamard");
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("hadamard: shape mismatch, " + A.shape_str() + " vs " + B.shape_str());
    Tensor y(A.shape());
    for (std::size_t i = 0; i < A.numel(); ++i) y[i] = A[i] * B[i];
    const bool rg = t.any_parent_needs_grad({a, b});
    const int aid = a.id, bid = b.id;
    auto bfn = [aid, bid](Tape& tp, int self) {
        const Tensor& g = tp.grad_view(self);
        const Tensor& A2 = tp.value(aid);
        const Tensor& B2 = tp.value(bid);
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buffer(aid);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * B2[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buffer(bid);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * A2[i];
        }
    };
    return Var{t.add_node(std::move(y), {aid, bid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "hadamard", rg)};
}

Var concat_channels(Tape& t, Var a, Var b) {
    t.check_var(a, "concat_channels");
    t.check_var(b, "concat_channels");
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 3 || B.rank() != 3)
        throw std::invalid_argument("concat_channels: inputs must be rank 3, got " + A.shape_str() +
                                    " and " + B.shape_str());
    if (A.dim(1) != B.dim(1) || A.dim(2) != B.dim(2))
        throw std::invalid_argument("concat_channels: spatial dims differ, " + A.shape_str() + " vs " +
                                    B.shape_str());
    const int Ca = A.dim(0), Cb = B.dim(0), H = A.dim(1), W = A.dim(2);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor y({Ca + Cb, H, W});
    for (std::size_t i = 0; i < Ca * hw; ++i) y[i] = A[i];
    for (std::size_t i = 0; i < Cb * hw; ++i) y[Ca * hw + i] = B[i];
    const bool rg = t.any_parent_needs_grad({a, b});
    const int aid = a.id, bid = b.id;
    auto bfn = [aid, bid, Ca, Cb, hw](Tape& tp, int self) {
        const Tensor& g = tp.grad_view(self);
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buffer(aid);
            for (std::size_t i = 0; i < Ca * hw; ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buffer(bid);
            for (std::size_t i = 0; i < Cb * hw; ++i) gb[i] += g[Ca * hw + i];
        }
    };
    return Var{t.add_node(std::move(y), {aid, bid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "concat_channels", rg)};
}

Var reshape(Tape& t, Var a, std::vector<int> shape) {
    t.check_var(a, "reshape");
    const Tensor& A = t.value(a);
    if (shape_numel(shape) != A.numel() || shape.empty())
        throw std::invalid_argument("reshape: cannot reshape " + A.shape_str() + " to requested shape");
    Tensor y(shape);
    for (std::size_t i = 0; i < A.numel(); ++i) y[i] = A[i];
    const bool rg = t.needs_grad(a.id);
    const int aid = a.id;
    auto bfn = [aid](Tape& tp, int self) {
        if (!tp.needs_grad(aid)) return;
        const Tensor& g = tp.grad_view(self);
        Tensor& ga = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    };
    return Var{t.add_node(std::move(y), {aid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "reshape", rg)};
}

Var tile_to_map(Tape& t, Var vec, int height, int width) {
    t.check_var(vec, "tile_to_map");
    const Tensor& v = t.value(vec);
    if (v.rank() != 1) throw std::invalid_argument("tile_to_map: input must be rank 1, got " + v.shape_str());
    if (height <= 0 || width <= 0) throw std::invalid_argument("tile_to_map: non-positive target size");
    const int C = v.dim(0);
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    Tensor y({C, height, width});
    for (int c = 0; c < C; ++c)
        for (std::size_t s = 0; s < hw; ++s) y[c * hw + s] = v[c];
    const bool rg = t.needs_grad(vec.id);
    const int vid = vec.id;
    auto bfn = [vid, hw](Tape& tp, int self) {
        if (!tp.needs_grad(vid)) return;
        const Tensor& g = tp.grad_view(self);
        Tensor& gv = tp.grad_buffer(vid);
        const int C2 = g.dim(0);
        for (int c = 0; c < C2; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += g[c * hw + i];
            gv[c] += s;
        }
    };
    return Var{t.add_node(std::move(y), {vid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "tile_to_map", rg)};
}

Var mean_squared_error(Tape& t, Var pred, Var target) {
    t.check_var(pred, "mean_squared_error");
    t.check_var(target, "mean_squared_error");
    const Tensor& P = t.value(pred);
    const Tensor& T = t.value(target);
    if (!P.same_shape(T))
        throw std::invalid_argument("mean_squared_error: shape mismatch, " + P.shape_str() + " vs " +
                                    T.shape_str());
    const double inv_n = 1.0 / static_cast<double>(P.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < P.numel(); ++i) {
        const double d = P[i] - T[i];
        acc += d * d;
    }
    Tensor y = Tensor::scalar(acc * inv_n);
    const bool rg = t.any_parent_needs_grad({pred, target});
    const int pid = pred.id, tid = target.id;
    auto bfn = [pid, tid, inv_n](Tape& tp, int self) {
        const double gs = tp.grad_view(self)[0];
        const Tensor& P2 = tp.value(pid);
        const Tensor& T2 = tp.value(tid);
        if (tp.needs_grad(pid)) {
            Tensor& gp = tp.grad_buffer(pid);
            for (std::size_t i = 0; i < P2.numel(); ++i) gp[i] += gs * 2.0 * inv_n * (P2[i] - T2[i]);
        }
        if (tp.needs_grad(tid)) {
            Tensor& gt = tp.grad_buffer(tid);
            for (std::size_t i = 0; i < P2.numel(); ++i) gt[i] -= gs * 2.0 * inv_n * (P2[i] - T2[i]);
        }
    };
    return Var{t.add_node(std::move(y), {pid, tid}, rg ? std::function<void(Tape&, int)>(bfn) : nullptr,
                          "mean_squared_error", rg)};
}

double euclidean_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("euclidean_loss: shape mismatch, " + pred.shape_str() + " vs " +
                                    target.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace cstn
