#include "bic/synth.hpp"

#include <algorithm>
#include <set>

#include "bic/rng.hpp"

namespace bic {

namespace {

std::vector<double> gaussian_vec(Rng& rng, int dim, double mu, double sigma) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal(mu, sigma);
    return v;
}

std::vector<double> around(Rng& rng, const std::vector<double>& center, double sigma) {
    std::vector<double> v(center.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + rng.normal(0.0, sigma);
    return v;
}

std::string padded_id(char prefix, int n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%05d", prefix, n);
    return buf;
}

}  // namespace

std::string synth_archetype(const std::string& user_id) {
    if (user_id.empty()) return "unknown";
    switch (user_id[0]) {
        case 'g': return "genuine";
        case 't': return "traditional";
        case 'a': return "advanced";
        default: return "unknown";
    }
}

Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    Dataset ds;
    ds.dim = cfg.dim;
    ds.feat_dim = cfg.feat_dim;
    ds.relations = cfg.relations;

    const std::vector<double> spam_center = gaussian_vec(rng, cfg.dim, 0.0, 1.0);

    // Per-dimension feature offsets: genuine users and traditional bots sit on
    // opposite sides; advanced bots imitate a neutral profile in between.
    const double mu_genuine = cfg.feat_shift;
    const double mu_traditional = -cfg.feat_shift;
    const double mu_advanced = 0.0;

    std::vector<std::vector<double>> genuine_topics(cfg.n_genuine);
    for (auto& t : genuine_topics) t = gaussian_vec(rng, cfg.dim, 0.0, 1.0);

    auto tweet_count = [&] { return rng.uniform_int(cfg.tweets_min, cfg.tweets_max); };

    for (int i = 0; i < cfg.n_genuine; ++i) {
        UserRecord u;
        u.id = padded_id('g', i);
        u.label = 0;
        u.description_emb = around(rng, genuine_topics[i], cfg.sigma_genuine * 0.5);
        const int t = tweet_count();
        for (int k = 0; k < t; ++k)
            u.tweet_embs.push_back(around(rng, genuine_topics[i], cfg.sigma_genuine));
        u.features = gaussian_vec(rng, cfg.feat_dim, mu_genuine, 1.0);
        ds.users.push_back(std::move(u));
    }
    for (int i = 0; i < cfg.n_traditional; ++i) {
        UserRecord u;
        u.id = padded_id('t', i);
        u.label = 1;
        u.description_emb = around(rng, spam_center, cfg.sigma_spam);
        const int t = tweet_count();
        for (int k = 0; k < t; ++k) u.tweet_embs.push_back(around(rng, spam_center, cfg.sigma_spam));
        u.features = gaussian_vec(rng, cfg.feat_dim, mu_traditional, 1.0);
        ds.users.push_back(std::move(u));
    }
    for (int i = 0; i < cfg.n_advanced; ++i) {
        UserRecord u;
        u.id = padded_id('a', i);
        u.label = 1;
        // the stolen identity: description mimics a random genuine user
        if (!genuine_topics.empty()) {
            const auto& stolen = genuine_topics[rng.uniform_int(0, cfg.n_genuine - 1)];
            u.description_emb = around(rng, stolen, cfg.sigma_genuine * 0.5);
        } else {
            u.description_emb = around(rng, spam_center, cfg.sigma_spam);
        }
        const int t = tweet_count();
        for (int k = 0; k < t; ++k) {
            const bool steal = !genuine_topics.empty() && rng.uniform() < cfg.steal_fraction;
            if (steal) {
                const auto& topic = genuine_topics[rng.uniform_int(0, cfg.n_genuine - 1)];
                u.tweet_embs.push_back(around(rng, topic, cfg.sigma_genuine));
            } else {
                u.tweet_embs.push_back(around(rng, spam_center, cfg.sigma_spam));
            }
        }
        u.features = gaussian_vec(rng, cfg.feat_dim, mu_advanced, 1.0);
        ds.users.push_back(std::move(u));
    }

    std::sort(ds.users.begin(), ds.users.end(),
              [](const UserRecord& a, const UserRecord& b) { return a.id < b.id; });
    ds.rebuild_lookup();

    // follow edges with label homophily; u follows v yields the reciprocal
    // typed pair (u,v,following) and (v,u,follower)
    const int rel_forward = static_cast<int>(ds.relations.size() > 1 ? 1 : 0);
    const int rel_backward = 0;
    std::vector<std::vector<int>> by_label(2);
    for (std::size_t i = 0; i < ds.users.size(); ++i) by_label[*ds.users[i].label].push_back(static_cast<int>(i));

    const int n_users = static_cast<int>(ds.users.size());
    std::vector<std::set<int>> already(n_users);
    for (int u = 0; u < n_users; ++u) {
        const int degree = rng.uniform_int(cfg.degree_min, cfg.degree_max);
        for (int d = 0; d < degree; ++d) {
            const int own = *ds.users[u].label;
            const int want = rng.uniform() < cfg.p_same ? own : 1 - own;
            const auto& pool = by_label[want].empty() ? by_label[1 - want] : by_label[want];
            if (pool.size() < 2 && (pool.empty() || pool[0] == u)) break;
            int v = u;
            for (int attempt = 0; attempt < 16 && (v == u || already[u].count(v)); ++attempt)
                v = pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)];
            if (v == u || already[u].count(v)) continue;
            already[u].insert(v);
            ds.edges.push_back({u, v, rel_forward});
            ds.edges.push_back({v, u, rel_backward});
        }
    }

    ds.rebuild_lookup();
    ds.check_integrity();
    return ds;
}

}  // namespace bic
