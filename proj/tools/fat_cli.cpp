#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "fat/eval.hpp"
#include "fat/fusion.hpp"
#include "fat/synth.hpp"

namespace fs = std::filesystem;
using namespace fat;

namespace {

std::string default_out_dir() {
    const char* env = std::getenv("FAT_OUT_DIR");
    return env ? std::string(env) : std::string(".");
}

struct TrainFlags {
    TrainConfig cfg;
    std::string variant = "fat";
    int threads = 1;
    bool deterministic = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--variant", variant, "Model variant: fat | base")
            ->check(CLI::IsMember({"fat", "base"}));
        cmd->add_option("-d,--dim", cfg.d, "Embedding dimension");
        cmd->add_option("-T,--trends", cfg.T, "Number of trend capsules");
        cmd->add_option("-K,--anchors", cfg.K, "Number of anchor (target) items");
        cmd->add_option("--max-neighbors", cfg.max_neighbors);
        cmd->add_option("--max-future-len", cfg.max_future_len);
        cmd->add_option("--max-seq-len", cfg.max_seq_len);
        cmd->add_option("--max-capsules", cfg.max_capsules);
        cmd->add_option("--routing-iters", cfg.routing_iterations);
        cmd->add_option("--alpha", cfg.alpha, "Time-attention sharpness");
        cmd->add_flag("--learn-alpha", cfg.learn_alpha);
        cmd->add_flag("--exclude-anchor", cfg.exclude_anchor,
                      "Drop the anchor occurrence from future sequences");
        cmd->add_option("--lr", cfg.lr);
        cmd->add_option("--batch", cfg.batch_size);
        cmd->add_option("--epochs", cfg.epochs);
        cmd->add_option("--neg", cfg.neg_samples,
                        "Sampled-softmax negatives (0 = full softmax)");
        cmd->add_option("--seed", cfg.seed);
        cmd->add_option("--threads", threads, "Worker threads");
        cmd->add_flag("--deterministic", deterministic,
                      "Force single-threaded ordered reductions");
    }

    TrainConfig resolve() {
        cfg.variant = variant == "fat" ? Variant::Fat : Variant::Base;
        if (deterministic) threads = 1;
        return cfg;
    }
};

std::vector<NeighborSet> precompute_neighbors(const SplitDataset& split,
                                              const TrainConfig& cfg, int threads,
                                              bool verbose = true) {
    if (cfg.variant != Variant::Fat) return {};
    if (verbose) std::cerr << "phase: neighbor extraction\n";
    auto index = build_item_user_index(split);
    InbeConfig icfg;
    icfg.k_anchors = cfg.K;
    icfg.max_neighbors = cfg.max_neighbors;
    icfg.max_future_len = cfg.max_future_len;
    icfg.exclude_anchor = cfg.exclude_anchor;
    return extract_all_neighbors(split, index, icfg, threads);
}

int cmd_prepare(const std::string& input, const std::string& format,
                std::size_t min_user, std::size_t min_item,
                const std::string& categories, std::size_t max_users,
                std::uint64_t seed, const std::string& out, bool force) {
    if (fs::exists(out) && !force) {
        std::cerr << "error: " << out << " exists; pass --force to overwrite\n";
        return 2;
    }
    LogFormat fmt = format == "movielens-dat" ? LogFormat::MovieLensDat : LogFormat::Tsv;
    RawLog log = ingest(input, fmt);
    log = filter_sparse(log, min_user, min_item);
    if (max_users > 0) log = subsample_users(log, max_users, seed);
    SplitDataset split = chrono_split(log);
    if (!categories.empty()) load_categories(categories, split.catalog);
    save_dataset_cache(split, out);
    std::size_t interactions = log.interactions.size();
    std::cout << "users=" << split.n_users() << " items=" << split.n_items()
              << " interactions=" << interactions << "\n";
    std::cout << "cache written to " << out << "\n";
    return 0;
}

void write_train_log(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& e : log)
        out << e.epoch << "\t" << e.loss << "\t" << e.val_recall50 << "\n";
}

int cmd_train(const std::string& cache, TrainFlags& flags, const std::string& out_dir) {
    TrainConfig cfg = flags.resolve();
    SplitDataset split = load_dataset_cache(cache);
    auto neighbors = precompute_neighbors(split, cfg, flags.threads);
    std::cerr << "phase: training (" << (cfg.variant == Variant::Fat ? "fat" : "base")
              << ")\n";
    auto result = train(cfg, split, neighbors, flags.threads, [](const EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.loss << " val_recall@50 "
                  << e.val_recall50 << "\n";
    });
    fs::create_directories(out_dir);
    save_checkpoint(result.best, out_dir + "/checkpoint.fatm");
    write_train_log(result.log, out_dir + "/train_log.tsv");
    std::cout << "checkpoint written to " << out_dir << "/checkpoint.fatm\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& cache,
                 const std::vector<std::size_t>& Ns, const std::string& policy,
                 std::uint64_t seed, bool diversity, int threads,
                 const std::string& out_dir) {
    ModelParameters params = load_checkpoint(checkpoint);
    SplitDataset split = load_dataset_cache(cache);
    if (params.vocab != split.n_items()) {
        std::cerr << "error: checkpoint/cache mismatch: checkpoint vocab="
                  << params.vocab << " cache items=" << split.n_items() << "\n";
        return 1;
    }
    auto neighbors = precompute_neighbors(split, params.cfg, threads);
    EvalConfig ecfg;
    ecfg.Ns = Ns;
    ecfg.policy =
        policy == "seeded-random" ? EvalPolicy::SeededRandom : EvalPolicy::FirstOfTest;
    ecfg.seed = seed;
    ecfg.diversity = diversity;
    if (diversity && !split.catalog.has_categories()) {
        std::cerr << "error: diversity requested but the cache has no category map; "
                     "re-run prepare with --categories\n";
        return 1;
    }
    auto report = evaluate_model(params, split, neighbors, ecfg, threads);
    fs::create_directories(out_dir);
    report.write_csv(out_dir + "/report.csv");
    report.write_per_user_csv(out_dir + "/per_user.csv");
    for (const auto& [key, value] : report.aggregates)
        std::cout << key.first << "@" << key.second << " = " << value << "\n";
    return 0;
}

int cmd_sweep(const std::string& cache, const std::string& parameter,
              const std::vector<std::size_t>& values, TrainFlags& flags,
              const std::vector<std::size_t>& Ns, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::string path = out_dir + "/sweep_" + parameter + ".csv";
    std::ofstream out(path);
    out << parameter;
    for (auto n : Ns) out << ",recall@" << n << ",ndcg@" << n;
    out << ",status\n";
    SplitDataset split = load_dataset_cache(cache);
    for (std::size_t v : values) {
        TrainConfig cfg = flags.resolve();
        if (parameter == "T")
            cfg.T = v;
        else
            cfg.K = v;
        out << v;
        try {
            auto neighbors = precompute_neighbors(split, cfg, flags.threads, false);
            auto result = train(cfg, split, neighbors, flags.threads);
            EvalConfig ecfg;
            ecfg.Ns = Ns;
            auto report = evaluate_model(result.best, split, neighbors, ecfg,
                                         flags.threads);
            for (auto n : Ns)
                out << "," << report.get("recall", n) << "," << report.get("ndcg", n);
            out << ",ok\n";
            std::cerr << parameter << "=" << v << " done\n";
        } catch (const std::exception& e) {
            for (std::size_t i = 0; i < Ns.size(); ++i) out << ",,";
            out << ",error: " << e.what() << "\n";
            std::cerr << parameter << "=" << v << " failed: " << e.what() << "\n";
        }
    }
    std::cout << "sweep table written to " << path << "\n";
    return 0;
}

int cmd_export_coupling(const std::string& checkpoint, const std::string& cache,
                        const std::string& user_ext, const std::string& out) {
    ModelParameters params = load_checkpoint(checkpoint);
    if (!params.is_fat()) {
        std::cerr << "error: coupling export requires a fat checkpoint\n";
        return 1;
    }
    SplitDataset split = load_dataset_cache(cache);
    auto it = split.catalog.user_index.find(user_ext);
    if (it == split.catalog.user_index.end()) {
        std::cerr << "error: unknown user " << user_ext << "\n";
        return 1;
    }
    auto index = build_item_user_index(split);
    InbeConfig icfg;
    icfg.k_anchors = params.cfg.K;
    icfg.max_neighbors = params.cfg.max_neighbors;
    icfg.max_future_len = params.cfg.max_future_len;
    icfg.exclude_anchor = params.cfg.exclude_anchor;
    auto ns = extract_neighbors(it->second, split, index, icfg);
    export_coupling(params, split, ns, it->second, out);
    std::cout << "coupling factors written to " << out << "\n";
    return 0;
}

int cmd_synth(const SynthConfig& cfg, const std::string& out_prefix) {
    auto log = generate_synthetic_log(cfg);
    write_synthetic_tsv(log, out_prefix + ".tsv", out_prefix + "_categories.tsv");
    std::cout << "wrote " << out_prefix << ".tsv (" << log.interactions.size()
              << " interactions) and " << out_prefix << "_categories.tsv\n";
    return 0;
}

} // namespace

int run_gradcheck_suites() {
    int failures = 0;
    auto report_line = [&](const std::string& suite, const GradCheckResult& r) {
        bool ok = r.max_rel_error < 1e-4;
        std::cout << suite << "/" << r.group << ": max_rel_error=" << r.max_rel_error
                  << (ok ? " ok" : " FAIL") << "\n";
        if (!ok) ++failures;
    };

    {  // numerics: quadratic sanity case
        Tensor x({3}, {1.0, -2.0, 0.5});
        Tensor g({3});
        auto loss = [&]() {
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
            return s;
        };
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
        auto res = gradient_check(loss, {{"quadratic", &x}}, {&g});
        report_line("numerics", res[0]);
    }

    {  // seqmodel: scalar loss on the final LSTM state
        std::size_t d = 4, len = 3;
        std::mt19937_64 rng(11);
        LstmParameters lstm(d);
        lstm.init_uniform(rng);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<std::vector<double>> xs(len, std::vector<double>(d));
        for (auto& x : xs)
            for (auto& v : x) v = u(rng);
        std::vector<double> w(d);
        for (auto& v : w) v = u(rng);
        auto loss = [&]() {
            auto enc = lstm_forward(xs, lstm);
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += w[i] * enc.final_state()[i];
            return s;
        };
        LstmGradients lg(d);
        auto enc = lstm_forward(xs, lstm);
        std::vector<std::vector<double>> dh(len);
        dh.back() = w;
        lstm_backward(enc, lstm, dh, lg);
        auto res = gradient_check(
            loss,
            {{"lstm_W", &lstm.W}, {"lstm_b", &lstm.b}, {"lstm_V", &lstm.V}, {"lstm_c", &lstm.c}},
            {&lg.W, &lg.b, &lg.V, &lg.c});
        for (const auto& r : res) report_line("seqmodel", r);
    }

    {  // trends: scalar loss on routed trend vectors
        std::size_t d = 4, T = 2, n = 3, iters = 2;
        std::mt19937_64 rng(13);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Tensor transforms({T, d, d});
        for (auto& x : transforms.values()) x = u(rng);
        std::vector<PrimaryCapsule> caps(n);
        for (std::size_t i = 0; i < n; ++i) {
            caps[i].vec.resize(d);
            for (auto& v : caps[i].vec) v = u(rng);
            caps[i].ts = static_cast<std::int64_t>(i) * 86400;
        }
        std::vector<double> w(T * d);
        for (auto& v : w) v = u(rng);
        auto loss = [&]() {
            auto tr = route_trends(caps, transforms, T, iters);
            double s = 0.0;
            for (std::size_t i = 0; i < T * d; ++i) s += w[i] * tr.v[i];
            return s;
        };
        auto tr = route_trends(caps, transforms, T, iters);
        auto rg = route_backward(caps, transforms, tr, w, {});
        auto res = gradient_check(loss, {{"routing", &transforms}}, {&rg.transforms});
        for (const auto& r : res) report_line("trends", r);
    }

    {  // fusion: full model, tiny instance
        auto report = run_model_gradcheck();
        for (const auto& r : report.groups) report_line("fusion", r);
    }

    if (failures == 0) std::cout << "all gradient suites passed (< 1e-4)\n";
    return failures == 0 ? 0 : 1;
}

int main(int argc, char** argv) {
    CLI::App app{"Future-aware diverse trends sequential recommender"};
    app.set_config("--config", "", "Optional key=value config file");
    app.require_subcommand(1);

    // prepare
    auto* prep = app.add_subcommand("prepare", "Parse, filter, split and cache a dataset");
    std::string input, format = "tsv", categories, out = default_out_dir() + "/dataset.fatd";
    std::size_t min_user = 10, min_item = 3, max_users = 0;
    std::uint64_t prep_seed = 42;
    bool force = false;
    prep->add_option("--input", input)->required();
    prep->add_option("--format", format)->check(CLI::IsMember({"tsv", "movielens-dat"}));
    prep->add_option("--min-user", min_user, "Minimum interactions per user");
    prep->add_option("--min-item", min_item, "Minimum interactions per item");
    prep->add_option("--categories", categories, "item<TAB>category file");
    prep->add_option("--max-users", max_users, "Seeded user subsample (0 = all)");
    prep->add_option("--seed", prep_seed);
    prep->add_option("--out", out);
    prep->add_flag("--force", force);

    // train
    auto* tr = app.add_subcommand("train", "Train a FAT or Base model");
    std::string tr_cache, tr_out = default_out_dir() + "/run";
    TrainFlags tr_flags;
    tr->add_option("--cache", tr_cache)->required();
    tr->add_option("--out", tr_out, "Output directory");
    tr_flags.attach(tr);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint");
    std::string ev_ckpt, ev_cache, ev_policy = "first-of-test",
                ev_out = default_out_dir() + "/eval";
    std::vector<std::size_t> ev_Ns = {20, 50};
    std::uint64_t ev_seed = 0;
    bool ev_div = false;
    int ev_threads = 1;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--cache", ev_cache)->required();
    ev->add_option("-N", ev_Ns)->delimiter(',');
    ev->add_option("--policy", ev_policy)
        ->check(CLI::IsMember({"first-of-test", "seeded-random"}));
    ev->add_option("--seed", ev_seed);
    ev->add_flag("--diversity", ev_div);
    ev->add_option("--threads", ev_threads);
    ev->add_option("--out", ev_out);

    // sweep
    auto* sw = app.add_subcommand("sweep", "Train+evaluate over a parameter range");
    std::string sw_cache, sw_param, sw_out = default_out_dir() + "/sweep";
    std::vector<std::size_t> sw_values, sw_Ns = {20, 50};
    TrainFlags sw_flags;
    sw->add_option("--cache", sw_cache)->required();
    sw->add_option("--parameter", sw_param)->required()->check(CLI::IsMember({"T", "K"}));
    sw->add_option("--values", sw_values)->required()->delimiter(',');
    sw->add_option("-N", sw_Ns)->delimiter(',');
    sw->add_option("--out", sw_out);
    sw_flags.attach(sw);

    // export-coupling
    auto* ex = app.add_subcommand("export-coupling", "Export a user's coupling factors");
    std::string ex_ckpt, ex_cache, ex_user, ex_out = default_out_dir() + "/coupling.csv";
    ex->add_option("--checkpoint", ex_ckpt)->required();
    ex->add_option("--cache", ex_cache)->required();
    ex->add_option("--user", ex_user)->required();
    ex->add_option("--out", ex_out);

    // gradcheck
    app.add_subcommand("gradcheck", "Run the gradient verification suites");

    // synth
    auto* sy = app.add_subcommand("synth", "Generate a synthetic interaction log");
    SynthConfig sy_cfg;
    std::string sy_prefix = default_out_dir() + "/synth";
    sy->add_option("--users", sy_cfg.n_users);
    sy->add_option("--items", sy_cfg.n_items);
    sy->add_option("--categories", sy_cfg.n_categories);
    sy->add_option("--communities", sy_cfg.n_communities);
    sy->add_option("--user-len", sy_cfg.user_len);
    sy->add_option("--seed", sy_cfg.seed);
    sy->add_option("--out-prefix", sy_prefix);

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep->parsed())
            return cmd_prepare(input, format, min_user, min_item, categories,
                               max_users, prep_seed, out, force);
        if (tr->parsed()) return cmd_train(tr_cache, tr_flags, tr_out);
        if (ev->parsed())
            return cmd_evaluate(ev_ckpt, ev_cache, ev_Ns, ev_policy, ev_seed, ev_div,
                                ev_threads, ev_out);
        if (sw->parsed())
            return cmd_sweep(sw_cache, sw_param, sw_values, sw_flags, sw_Ns, sw_out);
        if (ex->parsed()) return cmd_export_coupling(ex_ckpt, ex_cache, ex_user, ex_out);
        if (app.got_subcommand("gradcheck")) return run_gradcheck_suites();
        if (sy->parsed()) return cmd_synth(sy_cfg, sy_prefix);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
