#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cstn/tensor.hpp"

namespace cstn {

struct AdamState {
    Tensor m;
    Tensor v;
    std::int64_t step = 0;  // per-parameter step count, drives bias correction
};

// Named parameter store.  Insertion order is the canonical iteration order so
// that optimizer updates and checkpoint layout do not depend on hash seeds.
class ParamGroup {
public:
    Tensor& add(const std::string& name, Tensor init);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    std::size_t size() const { return order_.size(); }
    const std::vector<std::string>& names() const { return order_; }

    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;

    AdamState& state(const std::string& name);
    const AdamState& state(const std::string& name) const;

private:
    struct Entry {
        Tensor value;
        AdamState adam;
    };
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    std::vector<std::string> order_;
    std::unordered_map<std::string, Entry> entries_;
};

// Gradient tensors keyed by parameter name.
class GradRecord {
public:
    // Adds `grad` under `name`, accumulating elementwise if already present.
    void add(const std::string& name, Tensor grad);

    bool contains(const std::string& name) const { return grads_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    std::size_t size() const { return grads_.size(); }

    // Inserts zero tensors for any group parameter missing from the record,
    // so downstream consumers see one entry per parameter.
    void ensure_zeros(const ParamGroup& group);

    void accumulate(const GradRecord& other);
    void scale_all(double factor);

    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

private:
    std::unordered_map<std::string, Tensor> grads_;
};

// One Adam update over every parameter in the group.  `grads` must hold a
// shape-matching tensor for each parameter.
void adam_step(ParamGroup& params, const GradRecord& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Uniform Xavier/Glorot initialization: U[-L, L] with L = sqrt(6/(fan_in+fan_out)).
// Conv weights [C_out, C_in, k, k] use fan = channels * kernel area; dense
// weights [D_out, D_in] use the matrix dims; rank-1 tensors use their length
// for both fans.  Same seed and shape always produce the same tensor.
Tensor xavier_init(const std::vector<int>& shape, std::uint64_t seed);

}  // namespace cstn
