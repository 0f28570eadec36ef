#pragma once

#include <cstdint>
#include <string>

#include "fat/data.hpp"

namespace fat {

// Seeded generator of a community-structured interaction log. Each community
// walks an ordered playlist of category blocks; users follow their
// community's playlist from individual offsets with per-item dropout and
// noise, so users "ahead" in the walk have already interacted with the items
// their peers will reach next.
struct SynthConfig {
    std::size_t n_users = 400;
    std::size_t n_items = 600;
    std::size_t n_categories = 20;
    std::size_t n_communities = 24;
    std::size_t blocks_per_community = 10;
    std::size_t block_len = 8;
    std::size_t user_len = 45;      // target interactions per user
    double keep_prob = 0.75;        // per-item follow probability
    double noise_prob = 0.05;       // random-item replacement
    std::uint64_t seed = 1;
};

RawLog generate_synthetic_log(const SynthConfig& cfg);

// Writes the log as TSV plus an item<TAB>category file.
void write_synthetic_tsv(const RawLog& log, const std::string& tsv_path,
                         const std::string& category_path);

} // namespace fat
