#include "fat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace fat {

RawLog generate_synthetic_log(const SynthConfig& cfg) {
    if (cfg.n_items < cfg.n_categories)
        throw std::invalid_argument("synth: need at least one item per category");
    std::mt19937_64 rng(cfg.seed);

    RawLog log;
    std::size_t per_cat = cfg.n_items / cfg.n_categories;
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        std::string ext = "i" + std::to_string(i);
        log.catalog.item_ids.push_back(ext);
        log.catalog.item_index.emplace(ext, static_cast<std::uint32_t>(i));
    }
    log.catalog.item_category.resize(cfg.n_items);
    for (std::size_t c = 0; c < cfg.n_categories; ++c)
        log.catalog.category_names.push_back("cat" + std::to_string(c));
    for (std::size_t i = 0; i < cfg.n_items; ++i)
        log.catalog.item_category[i] =
            static_cast<std::uint32_t>(std::min(i / per_cat, cfg.n_categories - 1));

    std::vector<std::vector<std::uint32_t>> cat_items(cfg.n_categories);
    for (std::size_t i = 0; i < cfg.n_items; ++i)
        cat_items[log.catalog.item_category[i]].push_back(static_cast<std::uint32_t>(i));

    // per-community playlist: a walk over category blocks
    std::vector<std::vector<std::uint32_t>> playlists(cfg.n_communities);
    std::uniform_int_distribution<std::size_t> catd(0, cfg.n_categories - 1);
    for (auto& pl : playlists) {
        std::size_t prev = cfg.n_categories;
        for (std::size_t b = 0; b < cfg.blocks_per_community; ++b) {
            std::size_t c = catd(rng);
            while (c == prev) c = catd(rng);
            prev = c;
            auto items = cat_items[c];
            std::shuffle(items.begin(), items.end(), rng);
            std::size_t take = std::min(cfg.block_len, items.size());
            pl.insert(pl.end(), items.begin(), items.begin() + static_cast<std::ptrdiff_t>(take));
        }
    }

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<std::uint32_t> any_item(
        0, static_cast<std::uint32_t>(cfg.n_items - 1));
    std::normal_distribution<double> rnoise(0.0, 0.5);
    std::uniform_int_distribution<std::int64_t> startd(0, 100);

    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        std::string ext = "u" + std::to_string(u);
        log.catalog.user_ids.push_back(ext);
        log.catalog.user_index.emplace(ext, static_cast<std::uint32_t>(u));

        const auto& pl = playlists[u % cfg.n_communities];
        std::uniform_int_distribution<std::size_t> offd(0, pl.size() / 2);
        std::size_t pos = offd(rng);
        std::int64_t day = startd(rng);

        // per-user category affinity drives ratings (gives PCC some variance)
        std::vector<double> affinity(cfg.n_categories);
        for (auto& a : affinity) a = unif(rng) * 3.0 - 1.5;

        std::size_t emitted = 0;
        std::size_t steps = 0;
        while (emitted < cfg.user_len && steps < 4 * cfg.user_len) {
            ++steps;
            std::uint32_t item = pl[pos % pl.size()];
            ++pos;
            if (unif(rng) > cfg.keep_prob) continue;
            if (unif(rng) < cfg.noise_prob) item = any_item(rng);
            double r = 3.0 + affinity[log.catalog.item_category[item]] + rnoise(rng);
            Interaction x;
            x.user = static_cast<std::uint32_t>(u);
            x.item = item;
            x.rating = std::clamp(std::round(r), 1.0, 5.0);
            x.ts = (day + static_cast<std::int64_t>(emitted)) * 86400;
            log.interactions.push_back(x);
            ++emitted;
        }
    }
    return log;
}

void write_synthetic_tsv(const RawLog& log, const std::string& tsv_path,
                         const std::string& category_path) {
    std::ofstream out(tsv_path);
    if (!out) throw std::runtime_error("synth: cannot write " + tsv_path);
    for (const auto& x : log.interactions)
        out << log.catalog.user_ids[x.user] << "\t" << log.catalog.item_ids[x.item]
            << "\t" << x.rating << "\t" << x.ts << "\n";
    std::ofstream cat(category_path);
    if (!cat) throw std::runtime_error("synth: cannot write " + category_path);
    for (std::size_t i = 0; i < log.catalog.n_items(); ++i)
        cat << log.catalog.item_ids[i] << "\t"
            << log.catalog.category_names[log.catalog.item_category[i]] << "\n";
}

} // namespace fat
