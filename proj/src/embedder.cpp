#include "bic/embedder.hpp"

#include <algorithm>
#include <cctype>

#include "bic/rng.hpp"

namespace bic {

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

ToyEmbedder::ToyEmbedder(int dim, std::uint64_t seed, int buckets)
    : dim_(dim), buckets_(buckets), seed_(seed) {}

std::vector<double> ToyEmbedder::embed(const std::string& text) const {
    std::vector<double> acc(dim_, 0.0);
    int tokens = 0;
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        const std::uint64_t bucket = fnv1a64(token) % static_cast<std::uint64_t>(buckets_);
        // bucket vectors are generated on demand from (seed, bucket)
        Rng rng(Rng::mix(seed_, bucket));
        for (int i = 0; i < dim_; ++i) acc[i] += rng.normal();
        ++tokens;
        token.clear();
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    flush();
    if (tokens > 0)
        for (auto& v : acc) v /= tokens;
    return acc;
}

}  // namespace bic
