#include "fat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fat {

double recall_at_n(std::span<const std::uint32_t> recommended,
                   std::span<const std::uint32_t> ground_truth, std::size_t N) {
    if (ground_truth.empty())
        throw std::invalid_argument("recall_at_n: empty ground truth");
    std::unordered_set<std::uint32_t> truth(ground_truth.begin(), ground_truth.end());
    std::size_t top = std::min(N, recommended.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < top; ++i)
        if (truth.count(recommended[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at_n(std::span<const std::uint32_t> recommended,
                 std::span<const std::uint32_t> ground_truth, std::size_t N) {
    if (ground_truth.empty())
        throw std::invalid_argument("ndcg_at_n: empty ground truth");
    std::unordered_set<std::uint32_t> truth(ground_truth.begin(), ground_truth.end());
    std::size_t top = std::min(N, recommended.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < top; ++i)
        if (truth.count(recommended[i]))
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    double idcg = 0.0;
    std::size_t ideal = std::min(N, truth.size());
    for (std::size_t i = 0; i < ideal; ++i)
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

double diversity_at_n(std::span<const std::uint32_t> recommended,
                      std::span<const std::uint32_t> item_category, std::size_t N) {
    if (N < 2) throw std::invalid_argument("diversity_at_n: N must be >= 2");
    std::size_t top = std::min(N, recommended.size());
    std::size_t differing = 0;
    for (std::size_t j = 0; j < top; ++j)
        for (std::size_t k = j + 1; k < top; ++k)
            if (item_category[recommended[j]] != item_category[recommended[k]])
                ++differing;
    double pairs = static_cast<double>(N) * (static_cast<double>(N) - 1.0) / 2.0;
    return static_cast<double>(differing) / pairs;
}

double EvalReport::get(const std::string& metric, std::size_t N) const {
    auto it = aggregates.find({metric, N});
    if (it == aggregates.end())
        throw std::out_of_range("EvalReport: no value for " + metric + "@" +
                                std::to_string(N));
    return it->second;
}

void EvalReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("EvalReport: cannot write " + path);
    out << "metric,N,value\n";
    for (const auto& [key, value] : aggregates)
        out << key.first << "," << key.second << "," << value << "\n";
}

void EvalReport::write_per_user_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("EvalReport: cannot write " + path);
    out << "user,metric,N,value\n";
    for (const auto& r : per_user)
        out << r.user << "," << r.metric << "," << r.N << "," << r.value << "\n";
}

EvalReport evaluate_model(const ModelParameters& params, const SplitDataset& split,
                          const std::vector<NeighborSet>& neighbor_sets,
                          const EvalConfig& cfg, int threads) {
    if (cfg.diversity && !split.catalog.has_categories())
        throw std::runtime_error("evaluate_model: diversity requested but no categories loaded");

    std::size_t max_n = 0;
    for (std::size_t n : cfg.Ns) max_n = std::max(max_n, n);

    struct UserRow {
        bool valid = false;
        std::uint32_t user = 0;
        std::vector<double> recall, ndcg, diversity;  // per N
    };
    std::vector<UserRow> rows(split.n_users());

    auto eval_one = [&](std::uint32_t u) {
        auto target = select_eval_target(u, split, cfg.policy, cfg.seed);
        if (!target || target->history.empty()) return;
        const NeighborSet* ns =
            params.is_fat() && u < neighbor_sets.size() ? &neighbor_sets[u] : nullptr;
        auto st = forward_user(params, target->history, target->target_ts, ns);
        std::vector<bool> exclude(split.n_items(), false);
        for (auto it : target->history) exclude[it] = true;
        auto rec = recommend_topn(params, st.user_vec, max_n, exclude);

        UserRow& row = rows[u];
        row.valid = true;
        row.user = u;
        for (std::size_t n : cfg.Ns) {
            row.recall.push_back(recall_at_n(rec, target->ground_truth, n));
            row.ndcg.push_back(ndcg_at_n(rec, target->ground_truth, n));
            if (cfg.diversity)
                row.diversity.push_back(
                    diversity_at_n(rec, split.catalog.item_category, n));
        }
    };

    if (threads <= 1) {
        for (std::uint32_t u = 0; u < split.n_users(); ++u) eval_one(u);
    } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(threads)
#endif
        for (std::int64_t u = 0; u < static_cast<std::int64_t>(split.n_users()); ++u)
            eval_one(static_cast<std::uint32_t>(u));
    }

    EvalReport report;
    report.seed = cfg.seed;
    std::vector<double> sum_recall(cfg.Ns.size(), 0.0), sum_ndcg(cfg.Ns.size(), 0.0),
        sum_div(cfg.Ns.size(), 0.0);
    for (const auto& row : rows) {
        if (!row.valid) continue;
        ++report.evaluated_users;
        for (std::size_t i = 0; i < cfg.Ns.size(); ++i) {
            sum_recall[i] += row.recall[i];
            sum_ndcg[i] += row.ndcg[i];
            report.per_user.push_back({row.user, "recall", cfg.Ns[i], row.recall[i]});
            report.per_user.push_back({row.user, "ndcg", cfg.Ns[i], row.ndcg[i]});
            if (cfg.diversity) {
                sum_div[i] += row.diversity[i];
                report.per_user.push_back(
                    {row.user, "diversity", cfg.Ns[i], row.diversity[i]});
            }
        }
    }
    if (report.evaluated_users == 0)
        throw std::runtime_error("evaluate_model: no evaluable users");
    double denom = static_cast<double>(report.evaluated_users);
    for (std::size_t i = 0; i < cfg.Ns.size(); ++i) {
        report.aggregates[{"recall", cfg.Ns[i]}] = 100.0 * sum_recall[i] / denom;
        report.aggregates[{"ndcg", cfg.Ns[i]}] = 100.0 * sum_ndcg[i] / denom;
        if (cfg.diversity)
            report.aggregates[{"diversity", cfg.Ns[i]}] = 100.0 * sum_div[i] / denom;
    }
    return report;
}

void export_coupling(const ModelParameters& params, const SplitDataset& split,
                     const NeighborSet& neighbors, std::uint32_t user,
                     const std::string& path) {
    if (neighbors.empty())
        throw std::runtime_error("export_coupling: user " +
                                 split.catalog.user_ids.at(user) +
                                 " has an empty neighbor set");
    auto target = select_eval_target(user, split, EvalPolicy::FirstOfTest);
    std::int64_t target_ts = target ? target->target_ts : 0;
    std::vector<std::uint32_t> history;
    for (const auto& e : split.users[user].train) history.push_back(e.item);
    auto st = forward_user(params, history, target_ts, &neighbors);
    if (!st.used_trends)
        throw std::runtime_error("export_coupling: no trends routed for user " +
                                 split.catalog.user_ids.at(user));
    const auto& tr = *st.trends;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_coupling: cannot write " + path);
    out << "trend_index,capsule_index,neighbor_id,item_id,timestamp,coupling\n";
    for (std::size_t j = 0; j < tr.T; ++j)
        for (std::size_t i = 0; i < st.caps.size(); ++i)
            out << j << "," << i << "," << st.caps[i].neighbor << "," << st.caps[i].item
                << "," << st.caps[i].ts << "," << tr.coupling[i * tr.T + j] << "\n";
}

} // namespace fat
