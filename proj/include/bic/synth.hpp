#pragma once

#include "bic/config.hpp"
#include "bic/data.hpp"

namespace bic {

// Builds the synthetic benchmark. Genuine users tweet around a private topic
// vector; traditional bots post near-duplicates of one shared spam vector;
// advanced bots interleave tweets stolen from random genuine users' topics
// with spam, and take a stolen topic as their description. Edges are typed
// reciprocal follow pairs drawn with label homophily. Fully determined by
// cfg.seed. User ids are prefixed g/t/a by archetype.
Dataset generate_synthetic(const SynthConfig& cfg);

// Recovers the archetype from a synthetic user id ("genuine", "traditional",
// "advanced"), or "unknown" for ids without the generator's prefix.
std::string synth_archetype(const std::string& user_id);

}  // namespace bic
