#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bic/errors.hpp"

namespace bic {

// Hard ceiling on stored tweets per user; longer timelines are truncated at load.
inline constexpr int kTweetCap = 200;

struct UserRecord {
    std::string id;
    std::vector<double> description_emb;             // [dim]
    std::vector<std::vector<double>> tweet_embs;     // T_i x dim
    std::vector<double> features;                    // [feat_dim]
    std::optional<int> label;                        // 0 = human, 1 = bot
};

// Directed typed edge between user indices.
struct Edge {
    int src = 0;
    int dst = 0;
    int relation = 0;
};

struct Dataset {
    int dim = 0;
    int feat_dim = 0;
    std::vector<std::string> relations;
    std::vector<UserRecord> users;  // ordered by id
    std::vector<Edge> edges;
    std::vector<int> train_idx, val_idx, test_idx;

    std::unordered_map<std::string, int> index;       // id -> users position
    std::vector<std::vector<int>> adjacency;          // user -> indices into edges

    int user_index(const std::string& id) const {
        auto it = index.find(id);
        if (it == index.end()) throw data_error("unknown user id: " + id);
        return it->second;
    }

    void rebuild_lookup();   // index + adjacency from users/edges
    void check_integrity() const;  // throws data_error / config_error
};

// 1-hop typed neighborhood of one user. Node 0 is the center; nodes 1..J are
// the sampled neighbors, in deterministic order.
struct HeteroEgoGraph {
    std::string center_id;
    std::vector<std::string> neighbor_ids;
    std::vector<int> neighbor_user_idx;              // into Dataset::users
    std::vector<std::array<int, 3>> edges;           // {src, dst, relation}, local node ids
    int relation_count = 0;
};

Dataset load_dataset(const std::string& path);
Dataset parse_dataset(const std::string& json_text);
std::string serialize_dataset(const Dataset& ds);  // canonical bytes
void save_dataset(const Dataset& ds, const std::string& path);

// Zero-pads a timeline to `cap` rows; mask marks the real tweets.
std::pair<std::vector<std::vector<double>>, std::vector<std::uint8_t>> pad_tweets(
    const UserRecord& rec, int cap);

// Deterministic seeded subsample, stratified by relation, when the 1-hop
// neighborhood exceeds `neighbor_cap`.
HeteroEgoGraph ego_graph(const Dataset& ds, const std::string& user_id, int neighbor_cap,
                         std::uint64_t seed);

// Stratified-by-label split; ratios are (train, val, test) summing to 1.
void split_dataset(Dataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed);

std::string dataset_content_hash(const Dataset& ds);

}  // namespace bic
