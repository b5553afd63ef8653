#pragma once

#include <string>
#include <vector>

#include "bic/config.hpp"
#include "bic/parameters.hpp"
#include "bic/tensor.hpp"

namespace bic {

// Semantic-consistency pipeline: each step's attention matrix is max-pooled
// to K x K, flattened row-major, and mapped through theta_sc (one tensor
// shared by all steps). The per-step vectors are combined by concatenation or
// elementwise mean and pushed through a final linear map + activation.
template <typename S>
class ConsistencyModuleT {
public:
    ConsistencyModuleT(ParamStoreT<S>& params, int steps, int pool_k, int step_dim, int out_dim,
                       Aggregation aggregation, S leaky_slope, Rng& rng)
        : steps_(steps),
          pool_k_(pool_k),
          aggregation_(aggregation),
          leaky_slope_(leaky_slope) {
        if (steps < 1) throw config_error("consistency: step count must be at least 1");
        theta_sc_ = params.create_xavier("consistency.theta_sc", pool_k * pool_k, step_dim, rng);
        const int agg_dim = aggregation == Aggregation::concat ? steps * step_dim : step_dim;
        w_out_ = params.create_xavier("consistency.w_out", agg_dim, out_dim, rng);
        b_out_ = params.create_zeros("consistency.b_out", {out_dim});
    }

    TensorPtrT<S> pool(const TensorPtrT<S>& raw) const { return maxpool_fixed(raw, pool_k_); }

    TensorPtrT<S> step_vector(const TensorPtrT<S>& pooled) const {
        return vecmat(reshape(pooled, {pool_k_ * pool_k_}), theta_sc_);
    }

    TensorPtrT<S> aggregate(const std::vector<TensorPtrT<S>>& step_vectors) const {
        if (static_cast<int>(step_vectors.size()) != steps_)
            throw config_error("consistency: expected " + std::to_string(steps_) +
                               " step vectors, got " + std::to_string(step_vectors.size()));
        TensorPtrT<S> combined;
        if (aggregation_ == Aggregation::concat) {
            combined = steps_ == 1 ? step_vectors[0] : concat_vecs(step_vectors);
        } else {
            combined = step_vectors[0];
            for (int i = 1; i < steps_; ++i) combined = add(combined, step_vectors[i]);
            if (steps_ > 1) combined = scale(combined, S(1) / S(steps_));
        }
        return leaky_relu(add(vecmat(combined, w_out_), b_out_), leaky_slope_);
    }

    // raw (n, n) attention matrices, one per step -> consistency vector d
    struct Out {
        TensorPtrT<S> d;
        std::vector<TensorPtrT<S>> pooled;  // per step, kept for analysis
    };

    Out forward(const std::vector<TensorPtrT<S>>& raw_matrices) const {
        Out out;
        std::vector<TensorPtrT<S>> step_vecs;
        step_vecs.reserve(raw_matrices.size());
        for (const auto& m : raw_matrices) {
            auto pooled = pool(m);
            step_vecs.push_back(step_vector(pooled));
            out.pooled.push_back(std::move(pooled));
        }
        out.d = aggregate(step_vecs);
        return out;
    }

    int pool_k() const { return pool_k_; }

private:
    int steps_;
    int pool_k_;
    Aggregation aggregation_;
    S leaky_slope_;
    TensorPtrT<S> theta_sc_;
    TensorPtrT<S> w_out_, b_out_;
};

}  // namespace bic
