#pragma once

#include <string>
#include <vector>

#include "bic/layers.hpp"

namespace bic {

// Sequence state of the text side: position 0 is the interaction token
// (seeded from the description embedding), positions 1..T the tweets.
template <typename S>
struct TextStateT {
    TensorPtrT<S> h_int;                // (dim)
    TensorPtrT<S> tweets;               // (T, dim), zero rows where masked
    std::vector<std::uint8_t> mask;     // per tweet; the token itself is never masked

    int tweet_count() const { return tweets ? tweets->rows() : 0; }

    std::vector<std::uint8_t> col_mask(bool mask_padding) const {
        std::vector<std::uint8_t> cm(static_cast<std::size_t>(tweet_count()) + 1, 1);
        if (mask_padding)
            for (std::size_t i = 0; i < mask.size(); ++i) cm[i + 1] = mask[i];
        return cm;
    }
};

// One interaction step of the text side: runs a transformer encoder layer
// over {h_int, tweets} and exposes the head-averaged attention matrix.
template <typename S>
class TextModuleT {
public:
    TextModuleT(ParamStoreT<S>& params, int steps, int dim, int heads, int ffn_hidden, Rng& rng) {
        layers_.reserve(steps);
        for (int l = 0; l < steps; ++l)
            layers_.emplace_back(params, "text." + std::to_string(l), dim, heads, ffn_hidden, rng);
    }

    struct Out {
        TextStateT<S> state;
        AttentionRecordT<S> attention;
    };

    Out forward(const TextStateT<S>& state, int layer, bool mask_padding, double dropout_p,
                bool training, Rng& rng, bool record_heads) const {
        const auto& lay = layers_.at(layer);
        const auto cm = state.col_mask(mask_padding);
        TensorPtrT<S> seq = state.tweet_count() > 0
                                ? prepend_row(state.h_int, state.tweets)
                                : reshape(state.h_int, {1, state.h_int->shape[0]});
        auto res = lay.forward(seq, cm, dropout_p, training, rng, record_heads, layer);

        TextStateT<S> next;
        next.h_int = row(res.output, 0);
        next.tweets = state.tweet_count() > 0 ? slice_rows(res.output, 1, state.tweet_count())
                                              : nullptr;
        next.mask = state.mask;
        return {std::move(next), std::move(res.attention)};
    }

    int step_count() const { return static_cast<int>(layers_.size()); }

private:
    std::vector<TransformerLayerT<S>> layers_;
};

}  // namespace bic
