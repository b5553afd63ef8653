#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bic {

// Deterministic toy text embedder for demo corpora: lower-cased whitespace
// tokens are hashed into buckets, each bucket owns a fixed seeded random
// vector, and the embedding is the average over the text's token vectors.
// No substitute for a real language model; it exists so raw text can flow
// through the pipeline without external downloads.
class ToyEmbedder {
public:
    ToyEmbedder(int dim, std::uint64_t seed, int buckets = 4096);

    std::vector<double> embed(const std::string& text) const;

    int dim() const { return dim_; }

private:
    int dim_;
    int buckets_;
    std::uint64_t seed_;
};

}  // namespace bic
