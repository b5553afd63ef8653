#include "bic/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "bic/config.hpp"
#include "bic/rng.hpp"
#include "json.hpp"

namespace bic {

using nlohmann::json;

namespace {

double finite_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw data_error("expected a number at " + path);
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw data_error("non-finite value at " + path);
    return v;
}

std::vector<double> finite_vector(const json& j, int expected_dim, const std::string& path) {
    if (!j.is_array()) throw data_error("expected an array at " + path);
    if (expected_dim >= 0 && static_cast<int>(j.size()) != expected_dim)
        throw data_error("expected " + std::to_string(expected_dim) + " values at " + path +
                         ", found " + std::to_string(j.size()));
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(finite_number(j[i], path + "/" + std::to_string(i)));
    return out;
}

}  // namespace

void Dataset::rebuild_lookup() {
    index.clear();
    for (std::size_t i = 0; i < users.size(); ++i) index[users[i].id] = static_cast<int>(i);
    adjacency.assign(users.size(), {});
    for (std::size_t e = 0; e < edges.size(); ++e) {
        adjacency[edges[e].src].push_back(static_cast<int>(e));
        if (edges[e].dst != edges[e].src) adjacency[edges[e].dst].push_back(static_cast<int>(e));
    }
}

void Dataset::check_integrity() const {
    for (const auto& u : users) {
        if (static_cast<int>(u.description_emb.size()) != dim)
            throw data_error("user " + u.id + ": description_emb length != dim");
        for (const auto& t : u.tweet_embs)
            if (static_cast<int>(t.size()) != dim)
                throw data_error("user " + u.id + ": tweet embedding length != dim");
        if (static_cast<int>(u.tweet_embs.size()) > kTweetCap)
            throw data_error("user " + u.id + ": more than " + std::to_string(kTweetCap) + " tweets");
        if (static_cast<int>(u.features.size()) != feat_dim)
            throw data_error("user " + u.id + ": features length != feat_dim");
    }
    for (const auto& e : edges) {
        if (e.src < 0 || e.src >= static_cast<int>(users.size()) || e.dst < 0 ||
            e.dst >= static_cast<int>(users.size()))
            throw data_error("edge endpoint out of range");
        if (e.relation < 0 || e.relation >= static_cast<int>(relations.size()))
            throw data_error("edge relation out of range");
    }
    std::set<int> seen;
    for (const auto* split : {&train_idx, &val_idx, &test_idx}) {
        for (int i : *split) {
            if (i < 0 || i >= static_cast<int>(users.size()))
                throw data_error("split references unknown user index " + std::to_string(i));
            if (!seen.insert(i).second) throw data_error("splits overlap at user " + users[i].id);
            if (!users[i].label.has_value())
                throw data_error("split member " + users[i].id + " has no label");
        }
    }
}

Dataset parse_dataset(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw data_error(std::string("dataset is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw data_error("expected an object at /");

    Dataset ds;
    if (!j.contains("dim") || !j["dim"].is_number_integer())
        throw data_error("expected an integer at /dim");
    ds.dim = j["dim"].get<int>();
    if (ds.dim <= 0) throw data_error("/dim must be positive");

    if (!j.contains("relations") || !j["relations"].is_array())
        throw data_error("expected an array at /relations");
    for (std::size_t i = 0; i < j["relations"].size(); ++i) {
        if (!j["relations"][i].is_string())
            throw data_error("expected a string at /relations/" + std::to_string(i));
        ds.relations.push_back(j["relations"][i].get<std::string>());
    }
    std::unordered_map<std::string, int> rel_index;
    for (std::size_t i = 0; i < ds.relations.size(); ++i)
        if (!rel_index.emplace(ds.relations[i], static_cast<int>(i)).second)
            throw data_error("duplicate relation name: " + ds.relations[i]);

    if (!j.contains("users") || !j["users"].is_array())
        throw data_error("expected an array at /users");
    ds.feat_dim = -1;
    for (std::size_t ui = 0; ui < j["users"].size(); ++ui) {
        const std::string path = "/users/" + std::to_string(ui);
        const json& ju = j["users"][ui];
        if (!ju.is_object()) throw data_error("expected an object at " + path);
        UserRecord u;
        if (!ju.contains("id") || !ju["id"].is_string())
            throw data_error("expected a string at " + path + "/id");
        u.id = ju["id"].get<std::string>();
        u.description_emb =
            finite_vector(ju.value("description_emb", json::array()), ds.dim, path + "/description_emb");
        const json& jt = ju.contains("tweet_embs") ? ju["tweet_embs"] : json::array();
        if (!jt.is_array()) throw data_error("expected an array at " + path + "/tweet_embs");
        // timelines beyond the cap keep their first kTweetCap entries
        const std::size_t keep = std::min<std::size_t>(jt.size(), kTweetCap);
        for (std::size_t ti = 0; ti < keep; ++ti)
            u.tweet_embs.push_back(
                finite_vector(jt[ti], ds.dim, path + "/tweet_embs/" + std::to_string(ti)));
        u.features = finite_vector(ju.value("features", json::array()), -1, path + "/features");
        if (ds.feat_dim < 0) ds.feat_dim = static_cast<int>(u.features.size());
        if (static_cast<int>(u.features.size()) != ds.feat_dim)
            throw data_error("inconsistent feature length at " + path + "/features");
        if (ju.contains("label") && !ju["label"].is_null()) {
            if (!ju["label"].is_number_integer())
                throw data_error("expected 0, 1 or null at " + path + "/label");
            const int lab = ju["label"].get<int>();
            if (lab != 0 && lab != 1) throw data_error("expected 0, 1 or null at " + path + "/label");
            u.label = lab;
        }
        ds.users.push_back(std::move(u));
    }
    if (ds.feat_dim < 0) ds.feat_dim = 0;

    std::sort(ds.users.begin(), ds.users.end(),
              [](const UserRecord& a, const UserRecord& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < ds.users.size(); ++i)
        if (ds.users[i].id == ds.users[i - 1].id)
            throw data_error("duplicate user id: " + ds.users[i].id);
    ds.rebuild_lookup();

    if (j.contains("edges")) {
        if (!j["edges"].is_array()) throw data_error("expected an array at /edges");
        for (std::size_t ei = 0; ei < j["edges"].size(); ++ei) {
            const std::string path = "/edges/" + std::to_string(ei);
            const json& je = j["edges"][ei];
            if (!je.is_array() || je.size() != 3 || !je[0].is_string() || !je[1].is_string() ||
                !je[2].is_string())
                throw data_error("expected [src, dst, relation] strings at " + path);
            Edge e;
            auto src_it = ds.index.find(je[0].get<std::string>());
            if (src_it == ds.index.end())
                throw data_error("edge endpoint references unknown user '" +
                                 je[0].get<std::string>() + "' at " + path);
            auto dst_it = ds.index.find(je[1].get<std::string>());
            if (dst_it == ds.index.end())
                throw data_error("edge endpoint references unknown user '" +
                                 je[1].get<std::string>() + "' at " + path);
            auto rel_it = rel_index.find(je[2].get<std::string>());
            if (rel_it == rel_index.end())
                throw data_error("unknown relation '" + je[2].get<std::string>() + "' at " + path);
            e.src = src_it->second;
            e.dst = dst_it->second;
            e.relation = rel_it->second;
            ds.edges.push_back(e);
        }
    }

    if (j.contains("splits")) {
        if (!j["splits"].is_object()) throw data_error("expected an object at /splits");
        auto read_split = [&](const char* name, std::vector<int>& out) {
            if (!j["splits"].contains(name)) return;
            const json& js = j["splits"][name];
            if (!js.is_array()) throw data_error(std::string("expected an array at /splits/") + name);
            for (std::size_t i = 0; i < js.size(); ++i) {
                if (!js[i].is_string())
                    throw data_error(std::string("expected a string at /splits/") + name + "/" +
                                     std::to_string(i));
                auto it = ds.index.find(js[i].get<std::string>());
                if (it == ds.index.end())
                    throw data_error("split references unknown user '" + js[i].get<std::string>() +
                                     "' at /splits/" + name + "/" + std::to_string(i));
                out.push_back(it->second);
            }
        };
        read_split("train", ds.train_idx);
        read_split("val", ds.val_idx);
        read_split("test", ds.test_idx);
    }

    ds.rebuild_lookup();
    ds.check_integrity();
    return ds;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open dataset file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str());
}

std::string serialize_dataset(const Dataset& ds) {
    json j;
    j["dim"] = ds.dim;
    j["relations"] = ds.relations;
    json users = json::array();
    for (const auto& u : ds.users) {
        json ju;
        ju["id"] = u.id;
        ju["description_emb"] = u.description_emb;
        ju["tweet_embs"] = u.tweet_embs;
        ju["features"] = u.features;
        ju["label"] = u.label.has_value() ? json(*u.label) : json(nullptr);
        users.push_back(std::move(ju));
    }
    j["users"] = std::move(users);
    json edges = json::array();
    for (const auto& e : ds.edges)
        edges.push_back({ds.users[e.src].id, ds.users[e.dst].id, ds.relations[e.relation]});
    j["edges"] = std::move(edges);
    auto ids_of = [&](const std::vector<int>& idx) {
        json arr = json::array();
        for (int i : idx) arr.push_back(ds.users[i].id);
        return arr;
    };
    j["splits"] = {{"train", ids_of(ds.train_idx)},
                   {"val", ids_of(ds.val_idx)},
                   {"test", ids_of(ds.test_idx)}};
    return j.dump();
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write dataset file: " + path);
    out << serialize_dataset(ds);
}

std::pair<std::vector<std::vector<double>>, std::vector<std::uint8_t>> pad_tweets(
    const UserRecord& rec, int cap) {
    if (cap < static_cast<int>(rec.tweet_embs.size()))
        throw data_error("pad_tweets: cap below tweet count for user " + rec.id);
    const int dim = static_cast<int>(rec.description_emb.size());
    std::vector<std::vector<double>> rows(cap, std::vector<double>(dim, 0.0));
    std::vector<std::uint8_t> mask(cap, 0);
    for (std::size_t i = 0; i < rec.tweet_embs.size(); ++i) {
        rows[i] = rec.tweet_embs[i];
        mask[i] = 1;
    }
    return {std::move(rows), std::move(mask)};
}

HeteroEgoGraph ego_graph(const Dataset& ds, const std::string& user_id, int neighbor_cap,
                         std::uint64_t seed) {
    const int center = ds.user_index(user_id);

    // neighbor -> relations it appears under, in dataset order
    std::vector<int> neighbor_order;
    std::unordered_map<int, std::size_t> neighbor_pos;
    std::vector<std::vector<int>> neighbor_rels;
    for (int ei : ds.adjacency[center]) {
        const Edge& e = ds.edges[ei];
        const int other = e.src == center ? e.dst : e.src;
        if (other == center) continue;  // self-loop, center is always present
        auto [it, inserted] = neighbor_pos.emplace(other, neighbor_order.size());
        if (inserted) {
            neighbor_order.push_back(other);
            neighbor_rels.emplace_back();
        }
        neighbor_rels[it->second].push_back(e.relation);
    }

    std::vector<int> kept = neighbor_order;
    if (neighbor_cap > 0 && static_cast<int>(kept.size()) > neighbor_cap) {
        // stratified by the neighbor's first relation: proportional quotas,
        // leftover slots round-robin, seeded shuffle inside each stratum
        std::vector<std::vector<int>> strata(ds.relations.size());
        for (int n : neighbor_order) strata[neighbor_rels[neighbor_pos[n]].front()].push_back(n);
        Rng rng(Rng::mix(seed, std::hash<std::string>{}(user_id)));
        for (auto& s : strata) rng.shuffle(s);
        const double scale = static_cast<double>(neighbor_cap) / kept.size();
        kept.clear();
        std::vector<std::size_t> cursor(strata.size(), 0);
        for (std::size_t r = 0; r < strata.size(); ++r) {
            const auto quota =
                std::min(strata[r].size(), static_cast<std::size_t>(strata[r].size() * scale));
            for (; cursor[r] < quota; ++cursor[r]) kept.push_back(strata[r][cursor[r]]);
        }
        for (std::size_t r = 0; kept.size() < static_cast<std::size_t>(neighbor_cap);
             r = (r + 1) % strata.size()) {
            if (cursor[r] < strata[r].size()) kept.push_back(strata[r][cursor[r]++]);
        }
        std::sort(kept.begin(), kept.end());  // restore deterministic order
    }

    HeteroEgoGraph ego;
    ego.center_id = user_id;
    ego.relation_count = static_cast<int>(ds.relations.size());
    std::unordered_map<int, int> local;  // user index -> local node id
    local[center] = 0;
    for (int n : kept) {
        local[n] = static_cast<int>(ego.neighbor_ids.size()) + 1;
        ego.neighbor_ids.push_back(ds.users[n].id);
        ego.neighbor_user_idx.push_back(n);
    }
    for (int ei : ds.adjacency[center]) {
        const Edge& e = ds.edges[ei];
        auto s = local.find(e.src);
        auto d = local.find(e.dst);
        if (s == local.end() || d == local.end()) continue;  // endpoint was sampled out
        ego.edges.push_back({s->second, d->second, e.relation});
    }
    return ego;
}

void split_dataset(Dataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed) {
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9) throw config_error("split ratios must sum to 1");
    for (double r : ratios)
        if (r < 0.0) throw config_error("split ratios must be non-negative");

    std::vector<std::vector<int>> by_label(2);
    for (std::size_t i = 0; i < ds.users.size(); ++i) {
        if (!ds.users[i].label.has_value())
            throw data_error("cannot split: user " + ds.users[i].id + " has no label");
        by_label[*ds.users[i].label].push_back(static_cast<int>(i));
    }

    ds.train_idx.clear();
    ds.val_idx.clear();
    ds.test_idx.clear();
    std::array<std::vector<int>*, 3> out = {&ds.train_idx, &ds.val_idx, &ds.test_idx};

    Rng rng(seed);
    for (auto& members : by_label) {
        if (members.empty()) continue;
        rng.shuffle(members);
        const int n = static_cast<int>(members.size());
        // largest-remainder allocation of this class across the three splits
        std::array<int, 3> counts{};
        std::array<double, 3> rem{};
        int assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double want = ratios[s] * n;
            counts[s] = static_cast<int>(want);
            rem[s] = want - counts[s];
            assigned += counts[s];
        }
        while (assigned < n) {
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (rem[s] > rem[best]) best = s;
            ++counts[best];
            rem[best] = -1.0;
            ++assigned;
        }
        int cursor = 0;
        for (int s = 0; s < 3; ++s) {
            for (int k = 0; k < counts[s]; ++k) (*out[s]).push_back(members[cursor++]);
            if (ratios[s] * n >= 1.0 && counts[s] == 0)
                throw data_error("stratification failed: a class is absent from a split it fits");
        }
    }
    for (auto* split : out) std::sort(split->begin(), split->end());
}

std::string dataset_content_hash(const Dataset& ds) { return fnv1a_hex(serialize_dataset(ds)); }

}  // namespace bic
