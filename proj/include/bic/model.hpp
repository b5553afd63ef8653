#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "bic/config.hpp"
#include "bic/consistency.hpp"
#include "bic/data.hpp"
#include "bic/graph_module.hpp"
#include "bic/interaction.hpp"
#include "bic/text_module.hpp"
#include "json.hpp"

namespace bic {

// One user's model-ready view: padded/masked tweet matrix, profile features
// for the user and its sampled neighbors, and the per-relation aggregation
// matrices of the ego graph. Constant tensors, shared across epochs.
template <typename S>
struct PreparedUserT {
    std::string id;
    int user_idx = -1;
    int label = -1;  // -1 when unlabeled
    TensorPtrT<S> desc;             // (dim)
    TensorPtrT<S> tweets;           // (tweet_cap, dim) or null when cap == 0
    std::vector<std::uint8_t> tweet_mask;
    TensorPtrT<S> feats;            // (feat_dim)
    TensorPtrT<S> neighbor_feats;   // (J, feat_dim) or null when J == 0
    std::vector<std::uint8_t> neighbor_mask;
    std::vector<TensorPtrT<S>> aggregators;
};

template <typename S>
struct ForwardTraceT {
    TensorPtrT<S> logits;  // (2)
    std::vector<AttentionRecordT<S>> text_attention;
    std::vector<AttentionRecordT<S>> neighbor_attention;
    std::vector<InteractionWeights> interaction_weights;
    std::vector<TensorPtrT<S>> consistency_raw;
    std::vector<TensorPtrT<S>> consistency_pooled;
    TensorPtrT<S> consistency_d;

    int predicted() const { return logits->values[1] > logits->values[0] ? 1 : 0; }
};

// The assembled detector: M interaction steps of text layer -> graph layer ->
// interaction function, the consistency pipeline over the text attention
// matrices, and a linear classifier over the concatenated representations.
template <typename S>
class BICModelT {
public:
    BICModelT(const ModelConfig& cfg, int relation_count, int tweet_cap)
        : cfg_(cfg),
          relation_count_(relation_count),
          tweet_cap_(tweet_cap),
          init_rng_(Rng::mix(cfg.seed, 1)),
          dropout_rng_(Rng::mix(cfg.seed, 3)) {
        cfg_.validate();
        if (relation_count < 1) throw config_error("model: need at least one relation");
        if (cfg_.pool_k > tweet_cap + 1)
            throw config_error("pool_k (" + std::to_string(cfg_.pool_k) +
                               ") exceeds sequence length " + std::to_string(tweet_cap + 1));
        const int ffn = cfg_.ffn_hidden > 0 ? cfg_.ffn_hidden : cfg_.dim;
        const S slope = static_cast<S>(cfg_.leaky_slope);

        text_ = std::make_unique<TextModuleT<S>>(params_, cfg_.steps, cfg_.dim, cfg_.heads, ffn,
                                                 init_rng_);
        graph_ = std::make_unique<GraphModuleT<S>>(params_, cfg_.steps, cfg_.dim, cfg_.heads, ffn,
                                                   relation_count, slope, init_rng_);
        for (int l = 0; l < cfg_.steps; ++l)
            interactions_.emplace_back(params_, "interaction." + std::to_string(l), cfg_.dim,
                                       cfg_.interaction, cfg_.interaction_untied, slope, init_rng_);
        consistency_ = std::make_unique<ConsistencyModuleT<S>>(
            params_, cfg_.steps, cfg_.pool_k, cfg_.consistency_dim, cfg_.consistency_out,
            cfg_.aggregation, slope, init_rng_);

        feat_w_ = params_.create_xavier("encoder.feat_w", cfg_.feat_dim, cfg_.dim, init_rng_);
        feat_b_ = params_.create_zeros("encoder.feat_b", {cfg_.dim});
        if (cfg_.learned_positions)
            pos_emb_ = params_.create_zeros("encoder.pos_emb", {tweet_cap + 1, cfg_.dim});

        int cls_in = 0;
        if (cfg_.use_text) cls_in += cfg_.dim;
        if (cfg_.use_graph) cls_in += cfg_.dim;
        if (use_consistency()) cls_in += cfg_.consistency_out;
        cls_w_ = params_.create_xavier("classifier.w", cls_in, 2, init_rng_);
        cls_b_ = params_.create_zeros("classifier.b", {2});
    }

    // consistency matrices come from the text attention, so the path only
    // exists while the text branch does
    bool use_consistency() const { return cfg_.use_consistency && cfg_.use_text; }

    const ModelConfig& config() const { return cfg_; }
    int relation_count() const { return relation_count_; }
    int tweet_cap() const { return tweet_cap_; }
    ParamStoreT<S>& params() { return params_; }
    const ParamStoreT<S>& params() const { return params_; }

    std::int64_t count_params() const { return params_.count_scalars(); }

    PreparedUserT<S> prepare(const Dataset& ds, int user_idx, const HeteroEgoGraph& ego) const {
        const UserRecord& rec = ds.users[user_idx];
        PreparedUserT<S> p;
        p.id = rec.id;
        p.user_idx = user_idx;
        p.label = rec.label.value_or(-1);

        p.desc = to_tensor(rec.description_emb);

        UserRecord capped = rec;
        if (static_cast<int>(capped.tweet_embs.size()) > tweet_cap_)
            capped.tweet_embs.resize(tweet_cap_);
        auto [rows, mask] = pad_tweets(capped, tweet_cap_);
        p.tweet_mask = std::move(mask);
        // seeded per-user removal of a share of the real tweets
        if (cfg_.text_removal_fraction > 0.0) {
            std::vector<int> real;
            for (std::size_t i = 0; i < p.tweet_mask.size(); ++i)
                if (p.tweet_mask[i]) real.push_back(static_cast<int>(i));
            const int k = static_cast<int>(
                std::llround(cfg_.text_removal_fraction * static_cast<double>(real.size())));
            Rng rng(Rng::mix(Rng::mix(cfg_.seed, 5), static_cast<std::uint64_t>(user_idx)));
            rng.shuffle(real);
            for (int i = 0; i < k; ++i) {
                std::fill(rows[real[i]].begin(), rows[real[i]].end(), 0.0);
                if (cfg_.mask_padding) p.tweet_mask[real[i]] = 0;
            }
        }
        if (tweet_cap_ > 0) {
            std::vector<S> flat;
            flat.reserve(static_cast<std::size_t>(tweet_cap_) * cfg_.dim);
            for (const auto& r : rows)
                for (double v : r) flat.push_back(static_cast<S>(v));
            p.tweets = tensor_of<S>({tweet_cap_, cfg_.dim}, std::move(flat));
        }

        p.feats = to_tensor(rec.features);
        const int j = static_cast<int>(ego.neighbor_ids.size());
        p.neighbor_mask.assign(j, 1);
        if (cfg_.graph_removal_fraction > 0.0 && j > 0) {
            std::vector<int> order(j);
            for (int i = 0; i < j; ++i) order[i] = i;
            const int k = static_cast<int>(
                std::llround(cfg_.graph_removal_fraction * static_cast<double>(j)));
            Rng rng(Rng::mix(Rng::mix(cfg_.seed, 6), static_cast<std::uint64_t>(user_idx)));
            rng.shuffle(order);
            for (int i = 0; i < k; ++i) p.neighbor_mask[order[i]] = 0;
        }
        if (j > 0) {
            std::vector<S> flat;
            flat.reserve(static_cast<std::size_t>(j) * cfg_.feat_dim);
            for (int ni : ego.neighbor_user_idx)
                for (double v : ds.users[ni].features) flat.push_back(static_cast<S>(v));
            p.neighbor_feats = tensor_of<S>({j, cfg_.feat_dim}, std::move(flat));
        }
        p.aggregators = build_relation_aggregators<S>(j + 1, relation_count_, ego.edges,
                                                      p.neighbor_mask);
        return p;
    }

    ForwardTraceT<S> forward(const PreparedUserT<S>& user, bool training) {
        ForwardTraceT<S> trace;

        TextStateT<S> text_state;
        if (cfg_.use_text) {
            text_state.h_int = user.desc;
            text_state.tweets = user.tweets;
            text_state.mask = user.tweet_mask;
            if (pos_emb_) {
                text_state.h_int = add(text_state.h_int, row(pos_emb_, 0));
                if (text_state.tweets)
                    text_state.tweets =
                        add(text_state.tweets, slice_rows(pos_emb_, 1, text_state.tweets->rows()));
            }
        }

        GraphStateT<S> graph_state;
        TensorPtrT<S> initial_neighbors;
        if (cfg_.use_graph) {
            graph_state.g_int = add(vecmat(user.feats, feat_w_), feat_b_);
            if (user.neighbor_feats)
                graph_state.neighbors =
                    add_bias_rows(matmul(user.neighbor_feats, feat_w_), feat_b_);
            graph_state.mask = user.neighbor_mask;
            initial_neighbors = graph_state.neighbors;
        }

        for (int l = 0; l < cfg_.steps; ++l) {
            TensorPtrT<S> h_tilde, g_tilde;
            if (cfg_.use_text) {
                auto res = text_->forward(text_state, l, cfg_.mask_padding, cfg_.dropout, training,
                                          dropout_rng_, cfg_.export_per_head);
                h_tilde = res.state.h_int;
                text_state = std::move(res.state);
                trace.consistency_raw.push_back(res.attention.matrix);
                trace.text_attention.push_back(std::move(res.attention));
            }
            if (cfg_.use_graph) {
                auto res = graph_->forward(graph_state, l, user.aggregators, cfg_.dropout, training,
                                           dropout_rng_, cfg_.export_per_head);
                g_tilde = res.state.g_int;
                graph_state = std::move(res.state);
                trace.neighbor_attention.push_back(std::move(res.attention));
            }
            if (cfg_.use_text && cfg_.use_graph) {
                auto inter = interactions_[l].forward(h_tilde, g_tilde);
                text_state.h_int = inter.h;
                graph_state.g_int = inter.g;
                if (inter.has_weights) trace.interaction_weights.push_back(inter.weights);
            }
            // single-modality ablations leave the surviving branch untouched
            if (cfg_.use_graph && cfg_.center_only_persist) graph_state.neighbors = initial_neighbors;
        }

        std::vector<TensorPtrT<S>> cls_parts;
        if (cfg_.use_text) cls_parts.push_back(text_state.h_int);
        if (cfg_.use_graph) cls_parts.push_back(graph_state.g_int);
        if (use_consistency()) {
            auto cons = consistency_->forward(trace.consistency_raw);
            trace.consistency_pooled = std::move(cons.pooled);
            trace.consistency_d = cons.d;
            cls_parts.push_back(cons.d);
        } else {
            trace.consistency_raw.clear();
        }
        auto joined = cls_parts.size() == 1 ? cls_parts[0] : concat_vecs(cls_parts);
        trace.logits = add(vecmat(joined, cls_w_), cls_b_);
        return trace;
    }

    // mean cross entropy over the batch plus l2 * sum of squared parameters
    TensorPtrT<S> loss(const std::vector<TensorPtrT<S>>& logits, const std::vector<int>& labels,
                       double l2) {
        if (logits.empty()) throw train_error("loss: empty batch");
        if (logits.size() != labels.size()) throw train_error("loss: logits/labels size mismatch");
        TensorPtrT<S> ce;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            if (labels[i] != 0 && labels[i] != 1)
                throw train_error("loss: label must be 0 or 1");
            auto li = cross_entropy_with_logits(logits[i], labels[i]);
            ce = i == 0 ? li : add(ce, li);
        }
        auto out = scale(ce, S(1) / S(logits.size()));
        if (l2 > 0.0) {
            TensorPtrT<S> penalty;
            for (const auto& p : params_.all()) {
                auto sq = sum_squares(p.tensor);
                penalty = penalty ? add(penalty, sq) : sq;
            }
            out = add(out, scale(penalty, static_cast<S>(l2)));
        }
        return out;
    }

    Rng& dropout_rng() { return dropout_rng_; }

    void save_checkpoint(const std::string& path, const RunConfig& run_cfg) const {
        nlohmann::json j;
        j["format"] = "bic-checkpoint-v1";
        j["config"] = nlohmann::json::parse(dump_run_config(run_cfg));
        j["relation_count"] = relation_count_;
        j["tweet_cap"] = tweet_cap_;
        nlohmann::json jp = nlohmann::json::array();
        for (const auto& p : params_.all()) {
            nlohmann::json e;
            e["name"] = p.name;
            e["shape"] = p.tensor->shape;
            std::vector<double> vals(p.tensor->values.begin(), p.tensor->values.end());
            e["values"] = std::move(vals);
            jp.push_back(std::move(e));
        }
        j["params"] = std::move(jp);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw data_error("cannot write checkpoint: " + path);
        out << j.dump();
    }

    struct Loaded {
        RunConfig run_cfg;
        std::unique_ptr<BICModelT<S>> model;
    };

    static Loaded load_checkpoint(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open checkpoint: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw data_error(std::string("checkpoint is not valid JSON: ") + e.what());
        }
        if (j.value("format", "") != "bic-checkpoint-v1")
            throw data_error("unsupported checkpoint format");
        Loaded loaded;
        loaded.run_cfg = parse_run_config(j["config"].dump());
        loaded.model = std::make_unique<BICModelT<S>>(loaded.run_cfg.model,
                                                      j["relation_count"].get<int>(),
                                                      j["tweet_cap"].get<int>());
        for (const auto& e : j["params"]) {
            const auto& param = loaded.model->params_.by_name(e["name"].get<std::string>());
            auto vals = e["values"].get<std::vector<double>>();
            if (vals.size() != param.tensor->values.size())
                throw data_error("checkpoint shape mismatch for " + param.name);
            for (std::size_t i = 0; i < vals.size(); ++i)
                param.tensor->values[i] = static_cast<S>(vals[i]);
        }
        return loaded;
    }

private:
    TensorPtrT<S> to_tensor(const std::vector<double>& v) const {
        std::vector<S> s(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) s[i] = static_cast<S>(v[i]);
        return tensor_of<S>({static_cast<int>(v.size())}, std::move(s));
    }

    ModelConfig cfg_;
    int relation_count_;
    int tweet_cap_;
    Rng init_rng_;
    Rng dropout_rng_;
    ParamStoreT<S> params_;
    std::unique_ptr<TextModuleT<S>> text_;
    std::unique_ptr<GraphModuleT<S>> graph_;
    std::vector<InteractionModuleT<S>> interactions_;
    std::unique_ptr<ConsistencyModuleT<S>> consistency_;
    TensorPtrT<S> feat_w_, feat_b_, pos_emb_, cls_w_, cls_b_;
};

// Picks the pad length: the config override when set, otherwise the longest
// timeline in the dataset (at least 1 so a lone interaction token still forms
// a sequence).
inline int resolve_tweet_cap(const ModelConfig& cfg, const Dataset& ds) {
    if (cfg.tweet_cap > 0) return std::min(cfg.tweet_cap, kTweetCap);
    int longest = 0;
    for (const auto& u : ds.users)
        longest = std::max(longest, static_cast<int>(u.tweet_embs.size()));
    return std::max(1, std::min(longest, kTweetCap));
}

}  // namespace bic
