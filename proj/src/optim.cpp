#include "cstn/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "cstn/rng.hpp"

namespace cstn {

Tensor& ParamGroup::add(const std::string& name, Tensor init) {
    if (name.empty()) throw std::invalid_argument("ParamGroup::add: empty name");
    if (contains(name)) throw std::invalid_argument("ParamGroup::add: duplicate parameter '" + name + "'");
    Entry e;
    e.adam.m = Tensor(init.shape());
    e.adam.v = Tensor(init.shape());
    e.value = std::move(init);
    auto [it, _] = entries_.emplace(name, std::move(e));
    order_.push_back(name);
    return it->second.value;
}

ParamGroup::Entry& ParamGroup::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("ParamGroup: unknown parameter '" + name + "'");
    return it->second;
}

const ParamGroup::Entry& ParamGroup::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("ParamGroup: unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamGroup::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamGroup::value(const std::string& name) const { return entry(name).value; }
AdamState& ParamGroup::state(const std::string& name) { return entry(name).adam; }
const AdamState& ParamGroup::state(const std::string& name) const { return entry(name).adam; }

void GradRecord::add(const std::string& name, Tensor grad) {
    auto it = grads_.find(name);
    if (it == grads_.end()) {
        grads_.emplace(name, std::move(grad));
        return;
    }
    if (!it->second.same_shape(grad))
        throw std::invalid_argument("GradRecord::add: shape mismatch for '" + name + "'");
    double* dst = it->second.data();
    const double* src = grad.data();
    for (std::size_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
}

const Tensor& GradRecord::at(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw std::invalid_argument("GradRecord: no gradient for '" + name + "'");
    return it->second;
}

void GradRecord::ensure_zeros(const ParamGroup& group) {
    for (const auto& name : group.names())
        if (!contains(name)) grads_.emplace(name, Tensor(group.value(name).shape()));
}

void GradRecord::accumulate(const GradRecord& other) {
    for (const auto& [name, grad] : other.grads_) add(name, grad);
}

void GradRecord::scale_all(double factor) {
    for (auto& [name, grad] : grads_) {
        (void)name;
        double* p = grad.data();
        for (std::size_t i = 0; i < grad.numel(); ++i) p[i] *= factor;
    }
}

void adam_step(ParamGroup& params, const GradRecord& grads, double lr,
               double beta1, double beta2, double eps) {
    for (const auto& name : params.names()) {
        if (!grads.contains(name))
            throw std::invalid_argument("adam_step: missing gradient for '" + name + "'");
        const Tensor& g = grads.at(name);
        Tensor& w = params.value(name);
        if (!g.same_shape(w))
            throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() +
                                        " does not match parameter '" + name + "' " + w.shape_str());
        AdamState& st = params.state(name);
        st.step += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
        double* wp = w.data();
        double* mp = st.m.data();
        double* vp = st.v.data();
        const double* gp = g.data();
        for (std::size_t i = 0; i < w.numel(); ++i) {
            mp[i] = beta1 * mp[i] + (1.0 - beta1) * gp[i];
            vp[i] = beta2 * vp[i] + (1.0 - beta2) * gp[i] * gp[i];
            const double mhat = mp[i] / bc1;
            const double vhat = vp[i] / bc2;
            wp[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

Tensor xavier_init(const std::vector<int>& shape, std::uint64_t seed) {
    double fan_in = 0.0, fan_out = 0.0;
    if (shape.empty()) throw std::invalid_argument("xavier_init: empty shape");
    if (shape.size() == 1) {
        fan_in = fan_out = shape[0];
    } else {
        // receptive field = product of dims past the first two
        double rf = 1.0;
        for (std::size_t i = 2; i < shape.size(); ++i) rf *= shape[i];
        fan_out = shape[0] * rf;
        fan_in = shape[1] * rf;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t(shape);
    Rng rng(seed);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

}  // namespace cstn
