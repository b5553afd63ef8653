#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bic {

enum class InteractionKind { similarity, none, hard, soft, mlp, text, graph };
enum class Aggregation { concat, mean };
enum class Precision { f32, f64 };

std::string to_string(InteractionKind k);
std::string to_string(Aggregation a);
std::string to_string(Precision p);
InteractionKind interaction_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);
Precision precision_from_string(const std::string& s);

// Model and training hyperparameters. Defaults are desk-scale; the full-scale
// values (dim 768 etc.) are reachable through the config file.
struct ModelConfig {
    int dim = 64;              // embedding width D, must match the dataset
    int feat_dim = 16;         // profile feature width, must match the dataset
    int heads = 4;
    int ffn_hidden = 0;        // 0 -> dim
    int steps = 2;             // interaction step count M
    int pool_k = 8;            // pooled consistency matrix size K
    int consistency_dim = 32;  // per-step consistency vector length
    int consistency_out = 32;  // aggregated consistency representation length
    int tweet_cap = 0;         // pad length; 0 -> longest timeline in the dataset
    int neighbor_cap = 32;
    double dropout = 0.5;
    double leaky_slope = 0.01;
    InteractionKind interaction = InteractionKind::similarity;
    Aggregation aggregation = Aggregation::concat;
    bool use_text = true;
    bool use_graph = true;
    bool use_consistency = true;
    bool mask_padding = true;        // off = strict zero-pad rows enter attention
    bool learned_positions = false;  // tweets are an unordered set by default
    bool interaction_untied = false; // four projection matrices instead of two
    bool center_only_persist = false;  // neighbors reset to initial encodings each step
    bool export_per_head = false;
    double text_removal_fraction = 0.0;   // share of tweets zero-masked
    double graph_removal_fraction = 0.0;  // share of neighbors zero-masked

    double lr = 1e-4;
    int batch_size = 64;
    int epochs = 30;
    int early_stop_patience = 10;
    int lr_patience = 5;
    double lr_factor = 0.1;
    double l2_lambda = 1e-5;    // loss-side L2 coefficient
    double weight_decay = 0.0;  // optimizer-side decoupled decay
    bool rectified_adam = true;
    Precision precision = Precision::f32;
    std::uint64_t seed = 42;

    void validate() const;  // throws config_error
};

// Synthetic benchmark knobs: genuine users, near-duplicate spam bots, and
// advanced bots that interleave stolen genuine tweets with spam.
struct SynthConfig {
    int n_genuine = 500;
    int n_traditional = 250;
    int n_advanced = 250;
    int dim = 64;
    int feat_dim = 16;
    double sigma_genuine = 0.35;
    double sigma_spam = 0.05;
    double steal_fraction = 0.5;  // share of an advanced bot's tweets stolen
    double p_same = 0.7;          // neighbor shares the user's label
    double feat_shift = 0.5;      // per-dimension class offset of profile features
    int tweets_min = 8;
    int tweets_max = 16;
    int degree_min = 3;
    int degree_max = 8;
    std::vector<std::string> relations = {"follower", "following"};
    std::uint64_t seed = 42;

    void validate() const;
};

// The config file is one flat JSON object holding keys from both structs.
struct RunConfig {
    ModelConfig model;
    SynthConfig synth;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& cfg);  // canonical, sorted keys

// Stable 64-bit FNV-1a content hash, hex-encoded.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace bic
