#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "bic/errors.hpp"
#include "bic/rng.hpp"
#include "bic/tensor.hpp"

namespace bic {

template <typename S>
struct ParameterT {
    std::string name;  // dotted path, e.g. "interaction.0.theta1"
    TensorPtrT<S> tensor;
};

// Registry of trainable tensors. Names are unique and registration order is
// fixed, which pins optimizer state, checkpoints, and RNG consumption.
template <typename S>
class ParamStoreT {
public:
    TensorPtrT<S> create(const std::string& name, Shape shape, std::vector<S> values) {
        if (index_.count(name)) throw config_error("duplicate parameter name: " + name);
        auto t = tensor_of<S>(std::move(shape), std::move(values), /*requires_grad=*/true);
        index_[name] = params_.size();
        params_.push_back({name, t});
        return t;
    }

    // Xavier-uniform weight matrix (rows = fan_in, cols = fan_out).
    TensorPtrT<S> create_xavier(const std::string& name, int fan_in, int fan_out, Rng& rng) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::vector<S> v(static_cast<std::size_t>(fan_in) * fan_out);
        for (auto& x : v) x = static_cast<S>(rng.uniform(-limit, limit));
        return create(name, {fan_in, fan_out}, std::move(v));
    }

    TensorPtrT<S> create_zeros(const std::string& name, Shape shape) {
        std::vector<S> v(static_cast<std::size_t>(numel(shape)), S(0));
        return create(name, std::move(shape), std::move(v));
    }

    TensorPtrT<S> create_full(const std::string& name, Shape shape, S value) {
        std::vector<S> v(static_cast<std::size_t>(numel(shape)), value);
        return create(name, std::move(shape), std::move(v));
    }

    const std::vector<ParameterT<S>>& all() const { return params_; }

    const ParameterT<S>& by_name(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw config_error("unknown parameter: " + name);
        return params_[it->second];
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::int64_t count_scalars() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p.tensor->size();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) {
            p.tensor->ensure_grad();
            p.tensor->zero_grad();
        }
    }

    // Value snapshot / restore, used for best-epoch checkpointing.
    std::vector<std::vector<S>> snapshot() const {
        std::vector<std::vector<S>> vals;
        vals.reserve(params_.size());
        for (const auto& p : params_) vals.push_back(p.tensor->values);
        return vals;
    }

    void restore(const std::vector<std::vector<S>>& vals) {
        if (vals.size() != params_.size()) throw train_error("snapshot size mismatch");
        for (std::size_t i = 0; i < vals.size(); ++i) params_[i].tensor->values = vals[i];
    }

private:
    std::vector<ParameterT<S>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace bic
