#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cstn/optim.hpp"
#include "cstn/tensor.hpp"

namespace cstn {

// Handle into a Tape's node list.
struct Var {
    int id = -1;
};

enum class Activation { Relu, Sigmoid, Tanh };

// Reverse-mode autodiff over a tape rebuilt on every forward pass.  Nodes own
// their forward values; parameters and constants may borrow storage that must
// outlive the tape.  backward() walks nodes in reverse creation order, which
// is a valid topological order because parents always precede children.
class Tape {
public:
    Var constant(Tensor value, std::string label = "const");
    // Borrows `value`; caller keeps it alive and unchanged for the tape's lifetime.
    Var constant_ref(const Tensor* value, std::string label = "const");
    // Registers a trainable tensor.  Repeat calls with the same name return the
    // same node, so shared parameters accumulate gradients naturally.
    Var parameter(ParamGroup& group, const std::string& name);

    const Tensor& value(Var v) const { return value(v.id); }
    const std::string& label(Var v) const { return nodes_[v.id].label; }
    void relabel(Var v, std::string label) { nodes_[v.id].label = std::move(label); }
    std::size_t node_count() const { return nodes_.size(); }

    // Gradients of `scalar_loss` w.r.t. every parameter node reached by the
    // forward pass.  The zero_fill overload additionally inserts zero tensors
    // for group parameters the loss does not depend on.
    GradRecord backward(Var scalar_loss);
    GradRecord backward(Var scalar_loss, const ParamGroup& zero_fill);

    // Label of the first node (in creation order) whose value is non-finite,
    // or "" when the whole tape is finite.  Creation order pins the blame on
    // the tensor where the problem was born, not where it spread.
    std::string first_nonfinite_label() const;

    // --- graph construction interface used by the op functions ---
    int add_node(Tensor value, std::vector<int> parents,
                 std::function<void(Tape&, int)> backward_fn, std::string label,
                 bool requires_grad);
    const Tensor& value(int id) const;
    bool needs_grad(int id) const { return nodes_[id].requires_grad; }
    bool any_parent_needs_grad(std::initializer_list<Var> vars) const;
    // Accumulation buffer for a node's gradient, allocated as zeros on first use.
    Tensor& grad_buffer(int id);
    const Tensor& grad_view(int id) const { return grads_[id]; }
    bool grad_present(int id) const { return !grads_[id].empty(); }
    void check_var(Var v, const char* who) const;

private:
    struct Node {
        Tensor owned;
        const Tensor* borrowed = nullptr;
        std::vector<int> parents;
        std::function<void(Tape&, int)> backward_fn;
        std::string label;
        bool requires_grad = false;
        int param_index = -1;  // index into param_names_ when this is a parameter
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<std::string> param_names_;
    std::vector<int> param_node_ids_;
};

// --- differentiable ops ---

// Cross-correlation with odd square kernels and zero "same" padding.
// input [C_in, H, W], weights [C_out, C_in, k, k], bias [C_out] (optional).
Var conv2d(Tape& t, Var input, Var weights, Var bias);
Var conv2d(Tape& t, Var input, Var weights);

// weights [D_out, D_in] * input [D_in] + bias [D_out]
Var dense(Tape& t, Var input, Var weights, Var bias);

Var activation(Tape& t, Var input, Activation kind);
Var relu(Tape& t, Var input);
Var sigmoid(Tape& t, Var input);
Var tanh_act(Tape& t, Var input);

// Softmax over each column of a rank-2 tensor (columns sum to one).
Var softmax_columns(Tape& t, Var input);

Var matmul(Tape& t, Var a, Var b);
Var transpose2d(Tape& t, Var a);
Var hadamard(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);

// Concatenate rank-3 tensors along the channel axis.
Var concat_channels(Tape& t, Var a, Var b);

Var reshape(Tape& t, Var a, std::vector<int> shape);

// Broadcast a length-C vector to a [C, height, width] map.
Var tile_to_map(Tape& t, Var vec, int height, int width);

// Scalar mean of squared elementwise differences.
Var mean_squared_error(Tape& t, Var pred, Var target);

// Squared L2 distance between two tensors; plain (non-tape) evaluation.
double euclidean_loss(const Tensor& pred, const Tensor& target);

}  // namespace cstn
