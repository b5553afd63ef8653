#pragma once

#include <string>

#include "bic/config.hpp"
#include "bic/parameters.hpp"
#include "bic/tensor.hpp"

namespace bic {

// The four similarity weights of one interaction step; each pair sums to 1.
struct InteractionWeights {
    double w_hh = 0.0, w_hg = 0.0;
    double w_gg = 0.0, w_gh = 0.0;
};

// Text-graph interaction function plus the ablation variants.
//
// similarity: raw coefficients w_hh = h.(T1 h), w_hg = h.(T2 g),
//             w_gg = g.(T2 g), w_gh = g.(T1 h); each pair is softmaxed and the
//             outputs are the convex mixes h' = w_hh h + w_hg g,
//             g' = w_gg g + w_gh h. T1 always projects the text vector and T2
//             the graph vector; `untied` gives every coefficient its own
//             projection instead of the shared pair.
// hard:       h' = g' = (h+g)/2
// soft:       two sigmoid-squashed learnable scalars as mixing weights
// mlp:        split of leaky_relu(W [h||g] + b)
// text/graph: one linear layer of the chosen side feeds both outputs
// none:       identity
template <typename S>
class InteractionModuleT {
public:
    InteractionModuleT(ParamStoreT<S>& params, const std::string& prefix, int dim,
                       InteractionKind kind, bool untied, S leaky_slope, Rng& rng)
        : kind_(kind), untied_(untied), leaky_slope_(leaky_slope) {
        switch (kind_) {
            case InteractionKind::similarity:
                theta1_ = params.create_xavier(prefix + ".theta1", dim, dim, rng);
                theta2_ = params.create_xavier(prefix + ".theta2", dim, dim, rng);
                if (untied_) {
                    theta3_ = params.create_xavier(prefix + ".theta3", dim, dim, rng);
                    theta4_ = params.create_xavier(prefix + ".theta4", dim, dim, rng);
                }
                break;
            case InteractionKind::soft:
                soft_logits_ = params.create_zeros(prefix + ".soft_logits", {2});
                break;
            case InteractionKind::mlp:
                mlp_w_ = params.create_xavier(prefix + ".mlp_w", 2 * dim, 2 * dim, rng);
                mlp_b_ = params.create_zeros(prefix + ".mlp_b", {2 * dim});
                break;
            case InteractionKind::text:
            case InteractionKind::graph:
                lin_w_ = params.create_xavier(prefix + ".lin_w", dim, dim, rng);
                lin_b_ = params.create_zeros(prefix + ".lin_b", {dim});
                break;
            case InteractionKind::hard:
            case InteractionKind::none:
                break;
        }
    }

    struct Out {
        TensorPtrT<S> h;
        TensorPtrT<S> g;
        bool has_weights = false;
        InteractionWeights weights;
    };

    Out forward(const TensorPtrT<S>& h, const TensorPtrT<S>& g) const {
        detail::check_same_shape(h->shape, g->shape, "interaction");
        Out out;
        switch (kind_) {
            case InteractionKind::similarity: {
                auto t1h = vecmat(h, theta1_);
                auto t2g = vecmat(g, theta2_);
                auto w_hh = dot(h, t1h);
                auto w_hg = dot(h, t2g);
                auto w_gg = dot(g, untied_ ? vecmat(g, theta3_) : t2g);
                auto w_gh = dot(g, untied_ ? vecmat(h, theta4_) : t1h);
                auto text_pair = softmax(concat_vecs<S>({w_hh, w_hg}));
                auto graph_pair = softmax(concat_vecs<S>({w_gg, w_gh}));
                auto whh = element(text_pair, 0);
                auto whg = element(text_pair, 1);
                auto wgg = element(graph_pair, 0);
                auto wgh = element(graph_pair, 1);
                out.h = add(scale_by(h, whh), scale_by(g, whg));
                out.g = add(scale_by(g, wgg), scale_by(h, wgh));
                out.has_weights = true;
                out.weights = {static_cast<double>(whh->values[0]), static_cast<double>(whg->values[0]),
                               static_cast<double>(wgg->values[0]), static_cast<double>(wgh->values[0])};
                break;
            }
            case InteractionKind::hard: {
                auto avg = scale(add(h, g), S(0.5));
                out.h = avg;
                out.g = avg;
                break;
            }
            case InteractionKind::soft: {
                auto alpha = sigmoid(element(soft_logits_, 0));
                auto beta = sigmoid(element(soft_logits_, 1));
                auto one = scalar<S>(1);
                out.h = add(scale_by(h, alpha), scale_by(g, sub(one, alpha)));
                out.g = add(scale_by(g, beta), scale_by(h, sub(one, beta)));
                break;
            }
            case InteractionKind::mlp: {
                const int dim = h->shape[0];
                auto mixed = leaky_relu(add(vecmat(concat_vecs<S>({h, g}), mlp_w_), mlp_b_), leaky_slope_);
                out.h = slice_vec(mixed, 0, dim);
                out.g = slice_vec(mixed, dim, dim);
                break;
            }
            case InteractionKind::text: {
                auto t = add(vecmat(h, lin_w_), lin_b_);
                out.h = t;
                out.g = t;
                break;
            }
            case InteractionKind::graph: {
                auto t = add(vecmat(g, lin_w_), lin_b_);
                out.h = t;
                out.g = t;
                break;
            }
            case InteractionKind::none:
                out.h = h;
                out.g = g;
                break;
        }
        return out;
    }

    InteractionKind kind() const { return kind_; }

private:
    InteractionKind kind_;
    bool untied_;
    S leaky_slope_;
    TensorPtrT<S> theta1_, theta2_, theta3_, theta4_;
    TensorPtrT<S> soft_logits_;
    TensorPtrT<S> mlp_w_, mlp_b_;
    TensorPtrT<S> lin_w_, lin_b_;
};

}  // namespace bic
