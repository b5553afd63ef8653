#include "bic/config.hpp"

#include <fstream>
#include <sstream>

#include "bic/errors.hpp"
#include "json.hpp"

namespace bic {

using nlohmann::json;

std::string to_string(InteractionKind k) {
    switch (k) {
        case InteractionKind::similarity: return "similarity";
        case InteractionKind::none: return "none";
        case InteractionKind::hard: return "hard";
        case InteractionKind::soft: return "soft";
        case InteractionKind::mlp: return "mlp";
        case InteractionKind::text: return "text";
        case InteractionKind::graph: return "graph";
    }
    return "similarity";
}

std::string to_string(Aggregation a) { return a == Aggregation::concat ? "concat" : "mean"; }
std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

InteractionKind interaction_from_string(const std::string& s) {
    for (auto k : {InteractionKind::similarity, InteractionKind::none, InteractionKind::hard,
                   InteractionKind::soft, InteractionKind::mlp, InteractionKind::text,
                   InteractionKind::graph})
        if (to_string(k) == s) return k;
    throw config_error("unknown interaction kind: " + s);
}

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "concat") return Aggregation::concat;
    if (s == "mean") return Aggregation::mean;
    throw config_error("unknown aggregation: " + s);
}

Precision precision_from_string(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw config_error("unknown precision: " + s);
}

void ModelConfig::validate() const {
    if (dim <= 0) throw config_error("dim must be positive");
    if (feat_dim <= 0) throw config_error("feat_dim must be positive");
    if (heads <= 0 || dim % heads != 0)
        throw config_error("heads (" + std::to_string(heads) + ") must divide dim (" +
                           std::to_string(dim) + ")");
    if (steps < 1) throw config_error("steps must be at least 1");
    if (pool_k <= 0) throw config_error("pool_k must be positive");
    if (consistency_dim <= 0 || consistency_out <= 0)
        throw config_error("consistency dimensions must be positive");
    if (tweet_cap < 0 || neighbor_cap < 0) throw config_error("caps must be non-negative");
    if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0,1)");
    if (text_removal_fraction < 0.0 || text_removal_fraction > 1.0 ||
        graph_removal_fraction < 0.0 || graph_removal_fraction > 1.0)
        throw config_error("removal fractions must be in [0,1]");
    if (lr <= 0.0) throw config_error("lr must be positive");
    if (batch_size < 1) throw config_error("batch_size must be at least 1");
    if (epochs < 1) throw config_error("epochs must be at least 1");
    if (lr_factor <= 0.0 || lr_factor > 1.0) throw config_error("lr_factor must be in (0,1]");
    if (l2_lambda < 0.0 || weight_decay < 0.0)
        throw config_error("regularization coefficients must be non-negative");
    if (!use_text && !use_graph) throw config_error("at least one modality must be enabled");
}

void SynthConfig::validate() const {
    if (n_genuine < 0 || n_traditional < 0 || n_advanced < 0)
        throw config_error("archetype counts must be non-negative");
    if (n_genuine + n_traditional + n_advanced == 0)
        throw config_error("synthetic dataset would be empty: all archetype counts are zero");
    if (dim <= 0 || feat_dim <= 0) throw config_error("dimensions must be positive");
    if (sigma_genuine <= 0.0 || sigma_spam <= 0.0) throw config_error("noise scales must be positive");
    if (steal_fraction < 0.0 || steal_fraction > 1.0)
        throw config_error("steal_fraction must be in [0,1]");
    if (p_same < 0.0 || p_same > 1.0) throw config_error("p_same must be in [0,1]");
    if (tweets_min < 0 || tweets_max < tweets_min)
        throw config_error("invalid tweets-per-user range");
    if (degree_min < 0 || degree_max < degree_min) throw config_error("invalid degree range");
    if (relations.empty()) throw config_error("at least one relation is required");
}

namespace {

class FlatReader {
public:
    explicit FlatReader(const json& j) : j_(j) {
        if (!j.is_object()) throw config_error("config must be a JSON object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.push_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw config_error(std::string("config key '") + key + "' has the wrong type");
        }
    }

    void read_enum(const char* key, InteractionKind& out) {
        std::string s = to_string(out);
        read(key, s);
        out = interaction_from_string(s);
    }
    void read_enum(const char* key, Aggregation& out) {
        std::string s = to_string(out);
        read(key, s);
        out = aggregation_from_string(s);
    }
    void read_enum(const char* key, Precision& out) {
        std::string s = to_string(out);
        read(key, s);
        out = precision_from_string(s);
    }

    void reject_unknown() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw config_error("unknown config key: " + it.key());
        }
    }

private:
    const json& j_;
    std::vector<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    FlatReader r(j);
    auto& m = cfg.model;
    r.read("dim", m.dim);
    r.read("feat_dim", m.feat_dim);
    r.read("heads", m.heads);
    r.read("ffn_hidden", m.ffn_hidden);
    r.read("steps", m.steps);
    r.read("pool_k", m.pool_k);
    r.read("consistency_dim", m.consistency_dim);
    r.read("consistency_out", m.consistency_out);
    r.read("tweet_cap", m.tweet_cap);
    r.read("neighbor_cap", m.neighbor_cap);
    r.read("dropout", m.dropout);
    r.read("leaky_slope", m.leaky_slope);
    r.read_enum("interaction", m.interaction);
    r.read_enum("aggregation", m.aggregation);
    r.read("use_text", m.use_text);
    r.read("use_graph", m.use_graph);
    r.read("use_consistency", m.use_consistency);
    r.read("mask_padding", m.mask_padding);
    r.read("learned_positions", m.learned_positions);
    r.read("interaction_untied", m.interaction_untied);
    r.read("center_only_persist", m.center_only_persist);
    r.read("export_per_head", m.export_per_head);
    r.read("text_removal_fraction", m.text_removal_fraction);
    r.read("graph_removal_fraction", m.graph_removal_fraction);
    r.read("lr", m.lr);
    r.read("batch_size", m.batch_size);
    r.read("epochs", m.epochs);
    r.read("early_stop_patience", m.early_stop_patience);
    r.read("lr_patience", m.lr_patience);
    r.read("lr_factor", m.lr_factor);
    r.read("l2_lambda", m.l2_lambda);
    r.read("weight_decay", m.weight_decay);
    r.read("rectified_adam", m.rectified_adam);
    r.read_enum("precision", m.precision);
    r.read("seed", m.seed);

    auto& s = cfg.synth;
    r.read("n_genuine", s.n_genuine);
    r.read("n_traditional", s.n_traditional);
    r.read("n_advanced", s.n_advanced);
    r.read("sigma_genuine", s.sigma_genuine);
    r.read("sigma_spam", s.sigma_spam);
    r.read("steal_fraction", s.steal_fraction);
    r.read("p_same", s.p_same);
    r.read("feat_shift", s.feat_shift);
    r.read("tweets_min", s.tweets_min);
    r.read("tweets_max", s.tweets_max);
    r.read("degree_min", s.degree_min);
    r.read("degree_max", s.degree_max);
    r.read("relations", s.relations);
    s.dim = m.dim;
    s.feat_dim = m.feat_dim;
    s.seed = m.seed;

    r.reject_unknown();
    m.validate();
    s.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
    const auto& m = cfg.model;
    const auto& s = cfg.synth;
    json j;
    j["dim"] = m.dim;
    j["feat_dim"] = m.feat_dim;
    j["heads"] = m.heads;
    j["ffn_hidden"] = m.ffn_hidden;
    j["steps"] = m.steps;
    j["pool_k"] = m.pool_k;
    j["consistency_dim"] = m.consistency_dim;
    j["consistency_out"] = m.consistency_out;
    j["tweet_cap"] = m.tweet_cap;
    j["neighbor_cap"] = m.neighbor_cap;
    j["dropout"] = m.dropout;
    j["leaky_slope"] = m.leaky_slope;
    j["interaction"] = to_string(m.interaction);
    j["aggregation"] = to_string(m.aggregation);
    j["use_text"] = m.use_text;
    j["use_graph"] = m.use_graph;
    j["use_consistency"] = m.use_consistency;
    j["mask_padding"] = m.mask_padding;
    j["learned_positions"] = m.learned_positions;
    j["interaction_untied"] = m.interaction_untied;
    j["center_only_persist"] = m.center_only_persist;
    j["export_per_head"] = m.export_per_head;
    j["text_removal_fraction"] = m.text_removal_fraction;
    j["graph_removal_fraction"] = m.graph_removal_fraction;
    j["lr"] = m.lr;
    j["batch_size"] = m.batch_size;
    j["epochs"] = m.epochs;
    j["early_stop_patience"] = m.early_stop_patience;
    j["lr_patience"] = m.lr_patience;
    j["lr_factor"] = m.lr_factor;
    j["l2_lambda"] = m.l2_lambda;
    j["weight_decay"] = m.weight_decay;
    j["rectified_adam"] = m.rectified_adam;
    j["precision"] = to_string(m.precision);
    j["seed"] = m.seed;
    j["n_genuine"] = s.n_genuine;
    j["n_traditional"] = s.n_traditional;
    j["n_advanced"] = s.n_advanced;
    j["sigma_genuine"] = s.sigma_genuine;
    j["sigma_spam"] = s.sigma_spam;
    j["steal_fraction"] = s.steal_fraction;
    j["p_same"] = s.p_same;
    j["feat_shift"] = s.feat_shift;
    j["tweets_min"] = s.tweets_min;
    j["tweets_max"] = s.tweets_max;
    j["degree_min"] = s.degree_min;
    j["degree_max"] = s.degree_max;
    j["relations"] = s.relations;
    return j.dump(2);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace bic
