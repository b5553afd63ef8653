#pragma once

#include <array>
#include <string>
#include <vector>

#include "bic/layers.hpp"

namespace bic {

// Node state of the graph side: node 0 is the user (interaction token seeded
// from the encoded profile features), nodes 1..J the ego-network neighbors.
template <typename S>
struct GraphStateT {
    TensorPtrT<S> g_int;             // (dim)
    TensorPtrT<S> neighbors;         // (J, dim) or null when J == 0
    std::vector<std::uint8_t> mask;  // per neighbor

    int neighbor_count() const { return neighbors ? neighbors->rows() : 0; }

    std::vector<std::uint8_t> col_mask() const {
        std::vector<std::uint8_t> cm(static_cast<std::size_t>(neighbor_count()) + 1, 1);
        for (std::size_t i = 0; i < mask.size(); ++i) cm[i + 1] = mask[i];
        return cm;
    }
};

// Per-relation mean-aggregation matrices over the ego graph, built once per
// user. agg[r][v*n+u] = 1/|N_r(v)| for every in-edge u->v of relation r;
// masked neighbors contribute no messages and receive none.
template <typename S>
std::vector<TensorPtrT<S>> build_relation_aggregators(
    int node_count, int relation_count, const std::vector<std::array<int, 3>>& edges,
    const std::vector<std::uint8_t>& neighbor_mask) {
    auto live = [&](int node) {
        return node == 0 || neighbor_mask.empty() ||
               (node - 1 < static_cast<int>(neighbor_mask.size()) && neighbor_mask[node - 1]);
    };
    std::vector<TensorPtrT<S>> agg;
    agg.reserve(relation_count);
    std::vector<std::vector<int>> degree(relation_count, std::vector<int>(node_count, 0));
    for (const auto& e : edges)
        if (live(e[0]) && live(e[1])) ++degree[e[2]][e[1]];
    for (int r = 0; r < relation_count; ++r) {
        auto m = zeros<S>({node_count, node_count});
        for (const auto& e : edges) {
            if (e[2] != r || !live(e[0]) || !live(e[1])) continue;
            m->at(e[1], e[0]) += S(1) / S(degree[r][e[1]]);
        }
        agg.push_back(std::move(m));
    }
    return agg;
}

// Relational graph convolution: for every node v,
//   out_v = leaky_relu( sum_r mean_{u in N_r(v)} W_r g_u  +  W_0 g_v ).
// Empty relation neighborhoods contribute nothing.
template <typename S>
class RgcnLayerT {
public:
    RgcnLayerT(ParamStoreT<S>& params, const std::string& prefix, int dim, int relation_count,
               S leaky_slope, Rng& rng)
        : relation_count_(relation_count), leaky_slope_(leaky_slope) {
        w_self_ = params.create_xavier(prefix + ".w_self", dim, dim, rng);
        for (int r = 0; r < relation_count; ++r)
            w_rel_.push_back(params.create_xavier(prefix + ".w_rel" + std::to_string(r), dim, dim, rng));
    }

    // nodes: (J+1, dim); aggregators as from build_relation_aggregators
    TensorPtrT<S> forward(const TensorPtrT<S>& nodes,
                          const std::vector<TensorPtrT<S>>& aggregators) const {
        if (static_cast<int>(aggregators.size()) != relation_count_)
            throw config_error("rgcn: aggregator count " + std::to_string(aggregators.size()) +
                               " does not match relation count " + std::to_string(relation_count_));
        auto acc = matmul(nodes, w_self_);
        for (int r = 0; r < relation_count_; ++r)
            acc = add(acc, matmul(matmul(aggregators[r], nodes), w_rel_[r]));
        return leaky_relu(acc, leaky_slope_);
    }

private:
    int relation_count_;
    S leaky_slope_;
    TensorPtrT<S> w_self_;
    std::vector<TensorPtrT<S>> w_rel_;
};

// The graph side of one interaction step: relational convolution over the ego
// network, then multi-head attention that weights neighbors against the user.
template <typename S>
class GraphModuleT {
public:
    GraphModuleT(ParamStoreT<S>& params, int steps, int dim, int heads, int ffn_hidden,
                 int relation_count, S leaky_slope, Rng& rng) {
        rgcn_.reserve(steps);
        attn_.reserve(steps);
        for (int l = 0; l < steps; ++l) {
            rgcn_.emplace_back(params, "graph." + std::to_string(l) + ".rgcn", dim, relation_count,
                               leaky_slope, rng);
            attn_.emplace_back(params, "graph." + std::to_string(l) + ".attn", dim, heads,
                               ffn_hidden, rng);
        }
    }

    struct Out {
        GraphStateT<S> state;
        AttentionRecordT<S> attention;  // neighbor attention, row 0 = the user
    };

    Out forward(const GraphStateT<S>& state, int layer,
                const std::vector<TensorPtrT<S>>& aggregators, double dropout_p, bool training,
                Rng& rng, bool record_heads) const {
        const int j = state.neighbor_count();
        TensorPtrT<S> nodes = j > 0 ? prepend_row(state.g_int, state.neighbors)
                                    : reshape(state.g_int, {1, state.g_int->shape[0]});
        auto convolved = rgcn_.at(layer).forward(nodes, aggregators);
        auto res = attn_.at(layer).forward(convolved, state.col_mask(), dropout_p, training, rng,
                                           record_heads, layer);
        GraphStateT<S> next;
        next.g_int = row(res.output, 0);
        next.neighbors = j > 0 ? slice_rows(res.output, 1, j) : nullptr;
        next.mask = state.mask;
        return {std::move(next), std::move(res.attention)};
    }

    const RgcnLayerT<S>& rgcn(int layer) const { return rgcn_.at(layer); }

private:
    std::vector<RgcnLayerT<S>> rgcn_;
    std::vector<TransformerLayerT<S>> attn_;
};

}  // namespace bic
