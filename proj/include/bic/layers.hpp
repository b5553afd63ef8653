#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bic/parameters.hpp"
#include "bic/tensor.hpp"

namespace bic {

// Head-averaged, post-softmax, pre-dropout attention weights of one layer.
// The matrix stays on the tape so the consistency path can backpropagate
// through it.
template <typename S>
struct AttentionRecordT {
    TensorPtrT<S> matrix;                   // (n, n), rows are distributions
    std::vector<TensorPtrT<S>> per_head;    // only kept on request
    int layer_index = 0;
};

// One post-norm transformer encoder layer: multi-head self-attention and a
// position-wise feed-forward block, each wrapped in residual + layer norm.
// Shared by the text module and the graph neighbor attention (separate
// parameter sets). No positional encodings here; sequences are sets.
template <typename S>
class TransformerLayerT {
public:
    TransformerLayerT(ParamStoreT<S>& params, const std::string& prefix, int dim, int heads,
                      int ffn_hidden, Rng& rng)
        : dim_(dim), heads_(heads), head_dim_(dim / heads) {
        if (dim % heads != 0)
            throw config_error(prefix + ": heads (" + std::to_string(heads) + ") must divide dim (" +
                               std::to_string(dim) + ")");
        w_q_ = params.create_xavier(prefix + ".w_q", dim, dim, rng);
        w_k_ = params.create_xavier(prefix + ".w_k", dim, dim, rng);
        w_v_ = params.create_xavier(prefix + ".w_v", dim, dim, rng);
        w_o_ = params.create_xavier(prefix + ".w_o", dim, dim, rng);
        b_q_ = params.create_zeros(prefix + ".b_q", {dim});
        b_k_ = params.create_zeros(prefix + ".b_k", {dim});
        b_v_ = params.create_zeros(prefix + ".b_v", {dim});
        b_o_ = params.create_zeros(prefix + ".b_o", {dim});
        ln1_g_ = params.create_full(prefix + ".ln1_g", {dim}, S(1));
        ln1_b_ = params.create_zeros(prefix + ".ln1_b", {dim});
        ln2_g_ = params.create_full(prefix + ".ln2_g", {dim}, S(1));
        ln2_b_ = params.create_zeros(prefix + ".ln2_b", {dim});
        w_ff1_ = params.create_xavier(prefix + ".w_ff1", dim, ffn_hidden, rng);
        b_ff1_ = params.create_zeros(prefix + ".b_ff1", {ffn_hidden});
        w_ff2_ = params.create_xavier(prefix + ".w_ff2", ffn_hidden, dim, rng);
        b_ff2_ = params.create_zeros(prefix + ".b_ff2", {dim});
    }

    struct Out {
        TensorPtrT<S> output;             // (n, dim)
        AttentionRecordT<S> attention;
    };

    // col_mask marks which positions may be attended to (keys); all rows are
    // computed. dropout applies to attention weights (after recording) and to
    // both sublayer outputs.
    Out forward(const TensorPtrT<S>& x, const std::vector<std::uint8_t>& col_mask, double dropout_p,
                bool training, Rng& rng, bool record_heads, int layer_index) const {
        const int n = x->rows();
        const S inv_sqrt_d = S(1) / std::sqrt(S(head_dim_));

        auto q = add_bias_rows(matmul(x, w_q_), b_q_);
        auto k = add_bias_rows(matmul(x, w_k_), b_k_);
        auto v = add_bias_rows(matmul(x, w_v_), b_v_);

        std::vector<TensorPtrT<S>> head_outs;
        TensorPtrT<S> head_sum;
        std::vector<TensorPtrT<S>> heads_recorded;
        for (int h = 0; h < heads_; ++h) {
            auto qh = slice_cols(q, h * head_dim_, head_dim_);
            auto kh = slice_cols(k, h * head_dim_, head_dim_);
            auto vh = slice_cols(v, h * head_dim_, head_dim_);
            auto scores = scale(matmul_nt(qh, kh), inv_sqrt_d);
            auto attn = masked_softmax_rows(scores, col_mask);
            head_sum = h == 0 ? attn : add(head_sum, attn);
            if (record_heads) heads_recorded.push_back(attn);
            auto attn_dropped = dropout(attn, dropout_p, training, rng);
            head_outs.push_back(matmul(attn_dropped, vh));
        }
        auto merged = heads_ == 1 ? head_outs[0] : concat_cols(head_outs);
        auto projected = dropout(add_bias_rows(matmul(merged, w_o_), b_o_), dropout_p, training, rng);
        auto after_attn = layer_norm_rows(add(x, projected), ln1_g_, ln1_b_);

        auto ff = add_bias_rows(
            matmul(relu(add_bias_rows(matmul(after_attn, w_ff1_), b_ff1_)), w_ff2_), b_ff2_);
        auto out = layer_norm_rows(add(after_attn, dropout(ff, dropout_p, training, rng)), ln2_g_, ln2_b_);

        AttentionRecordT<S> record;
        record.matrix = heads_ == 1 ? head_sum : scale(head_sum, S(1) / S(heads_));
        record.per_head = std::move(heads_recorded);
        record.layer_index = layer_index;
        (void)n;
        return {out, std::move(record)};
    }

    int dim() const { return dim_; }

private:
    int dim_, heads_, head_dim_;
    TensorPtrT<S> w_q_, w_k_, w_v_, w_o_, b_q_, b_k_, b_v_, b_o_;
    TensorPtrT<S> ln1_g_, ln1_b_, ln2_g_, ln2_b_;
    TensorPtrT<S> w_ff1_, b_ff1_, w_ff2_, b_ff2_;
};

}  // namespace bic
