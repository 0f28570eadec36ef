#include "fat/inbe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fat {

namespace {

std::unordered_map<std::uint32_t, double> train_ratings(const SplitDataset& split,
                                                        std::uint32_t u) {
    std::unordered_map<std::uint32_t, double> r;
    for (const auto& e : split.users[u].train) r[e.item] = e.rating;  // last wins
    return r;
}

} // namespace

double map_similarity(double raw) {
    if (raw < -1.0 - 1e-12 || raw > 1.0 + 1e-12)
        throw std::invalid_argument("map_similarity: input outside [-1, 1]");
    return (std::clamp(raw, -1.0, 1.0) + 1.0) / 2.0;
}

double pcc_similarity(std::uint32_t u, std::uint32_t v, const SplitDataset& split) {
    if (u == v) throw std::invalid_argument("pcc_similarity: u == v");
    auto ru = train_ratings(split, u);
    auto rv = train_ratings(split, v);
    if (ru.size() > rv.size()) std::swap(ru, rv);

    std::vector<std::pair<double, double>> common;
    for (const auto& [item, r] : ru) {
        auto it = rv.find(item);
        if (it != rv.end()) common.emplace_back(r, it->second);
    }
    if (common.empty()) return 0.0;

    double mu = 0.0, mv = 0.0;
    for (const auto& [a, b] : common) {
        mu += a;
        mv += b;
    }
    mu /= static_cast<double>(common.size());
    mv /= static_cast<double>(common.size());

    double num = 0.0, du = 0.0, dv = 0.0;
    for (const auto& [a, b] : common) {
        num += (a - mu) * (b - mv);
        du += (a - mu) * (a - mu);
        dv += (b - mv) * (b - mv);
    }
    if (du <= 0.0 || dv <= 0.0) {
        // zero-variance fallback: binary cosine over train item sets, rescaled
        double cos = static_cast<double>(common.size()) /
                     std::sqrt(static_cast<double>(ru.size()) *
                               static_cast<double>(rv.size()));
        return 2.0 * cos - 1.0;
    }
    return num / (std::sqrt(du) * std::sqrt(dv));
}

FutureSequence relative_future_sequence(std::uint32_t neighbor, std::uint32_t anchor,
                                        const SplitDataset& split,
                                        std::size_t max_future_len,
                                        bool exclude_anchor) {
    const auto& tr = split.users.at(neighbor).train;
    std::int64_t anchor_ts = 0;
    bool found = false;
    for (const auto& e : tr) {
        if (e.item == anchor) {  // earliest occurrence (train is chronological)
            anchor_ts = e.ts;
            found = true;
            break;
        }
    }
    if (!found)
        throw std::invalid_argument("relative_future_sequence: anchor not in neighbor history");

    FutureSequence fs;
    fs.neighbor = neighbor;
    fs.anchor_item = anchor;
    bool skipped_anchor = false;
    for (const auto& e : tr) {
        if (e.ts < anchor_ts) continue;
        if (exclude_anchor && !skipped_anchor && e.item == anchor && e.ts == anchor_ts) {
            skipped_anchor = true;
            continue;
        }
        if (fs.items.size() >= max_future_len) break;
        fs.items.push_back(e.item);
        fs.timestamps.push_back(e.ts);
    }
    return fs;
}

NeighborSet extract_neighbors(std::uint32_t user, const SplitDataset& split,
                              const std::vector<std::vector<std::uint32_t>>& index,
                              const InbeConfig& cfg) {
    NeighborSet ns;
    ns.user = user;
    const auto& tr = split.users.at(user).train;
    if (tr.empty()) return ns;

    // last K train items, deduplicated
    std::size_t k = std::min(cfg.k_anchors, tr.size());
    for (std::size_t i = 0; i < k; ++i) {
        std::uint32_t item = tr[tr.size() - 1 - i].item;
        if (std::find(ns.anchors.begin(), ns.anchors.end(), item) == ns.anchors.end())
            ns.anchors.push_back(item);
    }

    std::unordered_set<std::uint32_t> candidate_set;
    for (std::uint32_t a : ns.anchors)
        for (std::uint32_t v : index.at(a))
            if (v != user) candidate_set.insert(v);
    if (candidate_set.empty()) return ns;

    std::unordered_set<std::uint32_t> my_items;
    for (const auto& e : tr) my_items.insert(e.item);

    std::vector<NeighborCandidate> cands;
    cands.reserve(candidate_set.size());
    for (std::uint32_t v : candidate_set) {
        NeighborCandidate c;
        c.user = v;
        std::unordered_set<std::uint32_t> their;
        for (const auto& e : split.users[v].train) their.insert(e.item);
        for (std::uint32_t it : their)
            if (my_items.count(it)) ++c.common_items;
        c.raw_pcc = pcc_similarity(user, v, split);
        c.mapped = map_similarity(c.raw_pcc);
        cands.push_back(c);
    }

    auto by_sim = [](const NeighborCandidate& a, const NeighborCandidate& b) {
        if (a.mapped != b.mapped) return a.mapped > b.mapped;
        return a.user < b.user;
    };
    std::vector<NeighborCandidate> multi, single;
    for (const auto& c : cands)
        (c.common_items >= 2 ? multi : single).push_back(c);
    std::sort(multi.begin(), multi.end(), by_sim);
    std::sort(single.begin(), single.end(), by_sim);

    std::size_t m = std::min(multi.size(), cfg.max_neighbors);
    // singles are capped both against max_neighbors and against the final set
    // size: s <= floor(cap * (m + s))
    std::size_t s_limit = std::min(
        single.size(),
        std::min(cfg.max_neighbors - m,
                 static_cast<std::size_t>(cfg.single_cap * static_cast<double>(cfg.max_neighbors))));
    std::size_t s = s_limit;
    while (s > 0 && static_cast<double>(s) >
                        std::floor(cfg.single_cap * static_cast<double>(m + s)))
        --s;

    ns.neighbors.assign(multi.begin(), multi.begin() + static_cast<std::ptrdiff_t>(m));
    ns.neighbors.insert(ns.neighbors.end(), single.begin(),
                        single.begin() + static_cast<std::ptrdiff_t>(s));

    std::unordered_map<std::uint32_t, std::unordered_set<std::uint32_t>> neighbor_items;
    for (const auto& c : ns.neighbors) {
        auto& set = neighbor_items[c.user];
        for (const auto& e : split.users[c.user].train) set.insert(e.item);
    }
    for (const auto& c : ns.neighbors)
        for (std::uint32_t a : ns.anchors)
            if (neighbor_items[c.user].count(a))
                ns.futures.push_back(relative_future_sequence(
                    c.user, a, split, cfg.max_future_len, cfg.exclude_anchor));
    return ns;
}

std::vector<NeighborSet> extract_all_neighbors(
    const SplitDataset& split, const std::vector<std::vector<std::uint32_t>>& index,
    const InbeConfig& cfg, int threads) {
    std::vector<NeighborSet> out(split.n_users());
    if (threads <= 1) {
        for (std::uint32_t u = 0; u < split.n_users(); ++u)
            out[u] = extract_neighbors(u, split, index, cfg);
        return out;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
#endif
    for (std::int64_t u = 0; u < static_cast<std::int64_t>(split.n_users()); ++u)
        out[static_cast<std::size_t>(u)] =
            extract_neighbors(static_cast<std::uint32_t>(u), split, index, cfg);
    return out;
}

} // namespace fat
