#pragma once

#include <cstdint>
#include <vector>

#include "fat/data.hpp"

namespace fat {

struct NeighborCandidate {
    std::uint32_t user = 0;
    double raw_pcc = 0.0;     // [-1, 1]
    double mapped = 0.5;      // (raw+1)/2
    std::size_t common_items = 0;
};

struct FutureSequence {
    std::uint32_t neighbor = 0;
    std::uint32_t anchor_item = 0;
    std::vector<std::uint32_t> items;
    std::vector<std::int64_t> timestamps;
};

struct NeighborSet {
    std::uint32_t user = 0;
    std::vector<std::uint32_t> anchors;  // last K train items
    std::vector<NeighborCandidate> neighbors;
    std::vector<FutureSequence> futures;  // one per (neighbor, matched anchor)

    bool empty() const { return futures.empty(); }
};

struct InbeConfig {
    std::size_t k_anchors = 1;
    std::size_t max_neighbors = 20;
    std::size_t max_future_len = 20;
    double single_cap = 0.2;
    bool exclude_anchor = false;  // ablation: drop the anchor occurrence itself
};

// Pearson correlation over the train-segment rating intersection of u and v,
// with means taken over the intersection. Empty intersection -> 0. Zero
// variance on either side -> binary cosine rescaled to [-1, 1].
double pcc_similarity(std::uint32_t u, std::uint32_t v, const SplitDataset& split);

// f(x) = (x+1)/2, the [-1,1] -> [0,1] bound.
double map_similarity(double raw);

// Train interactions of `neighbor` at or after its earliest occurrence of
// `anchor`, chronological, truncated to max_future_len.
FutureSequence relative_future_sequence(std::uint32_t neighbor, std::uint32_t anchor,
                                        const SplitDataset& split,
                                        std::size_t max_future_len,
                                        bool exclude_anchor = false);

NeighborSet extract_neighbors(std::uint32_t user, const SplitDataset& split,
                              const std::vector<std::vector<std::uint32_t>>& index,
                              const InbeConfig& cfg);

// Extraction for every user; parallel over users when threads > 1.
std::vector<NeighborSet> extract_all_neighbors(
    const SplitDataset& split, const std::vector<std::vector<std::uint32_t>>& index,
    const InbeConfig& cfg, int threads = 1);

} // namespace fat
