#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fat/data.hpp"
#include "fat/fusion.hpp"
#include "fat/inbe.hpp"

namespace fat {

// |top-N ∩ I_u| / |I_u|
double recall_at_n(std::span<const std::uint32_t> recommended,
                   std::span<const std::uint32_t> ground_truth, std::size_t N);

// Binary-relevance NDCG with log2(rank+1) discounting.
double ndcg_at_n(std::span<const std::uint32_t> recommended,
                 std::span<const std::uint32_t> ground_truth, std::size_t N);

// Fraction of unordered top-N pairs whose categories differ.
double diversity_at_n(std::span<const std::uint32_t> recommended,
                      std::span<const std::uint32_t> item_category, std::size_t N);

struct EvalReport {
    // (metric name, N) -> paper-scale value (x100)
    std::map<std::pair<std::string, std::size_t>, double> aggregates;
    // per user: (user, metric, N, raw value in [0,1])
    struct PerUser {
        std::uint32_t user;
        std::string metric;
        std::size_t N;
        double value;
    };
    std::vector<PerUser> per_user;
    std::size_t evaluated_users = 0;
    std::uint64_t seed = 0;

    double get(const std::string& metric, std::size_t N) const;
    void write_csv(const std::string& path) const;
    void write_per_user_csv(const std::string& path) const;
};

struct EvalConfig {
    std::vector<std::size_t> Ns = {20, 50};
    EvalPolicy policy = EvalPolicy::FirstOfTest;
    std::uint64_t seed = 0;
    bool diversity = false;  // requires catalog categories
};

EvalReport evaluate_model(const ModelParameters& params, const SplitDataset& split,
                          const std::vector<NeighborSet>& neighbor_sets,
                          const EvalConfig& cfg, int threads = 1);

// CSV export of one user's routing coupling factors:
// trend_index,capsule_index,neighbor_id,item_id,timestamp,coupling
void export_coupling(const ModelParameters& params, const SplitDataset& split,
                     const NeighborSet& neighbors, std::uint32_t user,
                     const std::string& path);

} // namespace fat
