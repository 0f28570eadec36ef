// Compares the serial reference paths against the OpenMP kernels on a
// synthetic workload: neighbor extraction, batched training and evaluation.
#include <chrono>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fat/eval.hpp"
#include "fat/fusion.hpp"
#include "fat/synth.hpp"

using namespace fat;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

} // namespace

int main(int argc, char** argv) {
    int threads = 0;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif
    if (argc > 1) threads = std::atoi(argv[1]);
    if (threads < 2) {
        std::cout << "note: only one worker available; timings below compare the "
                     "same amount of work\n";
        threads = 2;
    }

    SynthConfig scfg;
    scfg.n_users = 150;
    scfg.n_items = 300;
    scfg.user_len = 30;
    auto split = chrono_split(generate_synthetic_log(scfg));

    TrainConfig cfg;
    cfg.d = 16;
    cfg.epochs = 1;
    cfg.max_neighbors = 8;
    cfg.max_future_len = 8;
    cfg.seed = 5;

    auto index = build_item_user_index(split);
    InbeConfig icfg;
    icfg.max_neighbors = cfg.max_neighbors;
    icfg.max_future_len = cfg.max_future_len;

    auto t0 = Clock::now();
    auto ns_serial = extract_all_neighbors(split, index, icfg, 1);
    double t_serial = seconds_since(t0);
    t0 = Clock::now();
    auto ns_par = extract_all_neighbors(split, index, icfg, threads);
    double t_par = seconds_since(t0);
    std::cout << "neighbor extraction: serial " << t_serial << "s, " << threads
              << " threads " << t_par << "s\n";

    t0 = Clock::now();
    auto r1 = train(cfg, split, ns_serial, 1);
    double tr_serial = seconds_since(t0);
    t0 = Clock::now();
    auto r2 = train(cfg, split, ns_par, threads);
    double tr_par = seconds_since(t0);
    std::cout << "training (1 epoch): serial " << tr_serial << "s, " << threads
              << " threads " << tr_par << "s\n";

    EvalConfig ecfg;
    t0 = Clock::now();
    auto e1 = evaluate_model(r1.best, split, ns_serial, ecfg, 1);
    double te_serial = seconds_since(t0);
    t0 = Clock::now();
    auto e2 = evaluate_model(r1.best, split, ns_serial, ecfg, threads);
    double te_par = seconds_since(t0);
    std::cout << "evaluation: serial " << te_serial << "s, " << threads << " threads "
              << te_par << "s\n";

    double drift = std::abs(e1.get("recall", 50) - e2.get("recall", 50));
    std::cout << "recall@50 serial vs parallel drift: " << drift << "\n";
    (void)r2;
    return drift < 1e-12 ? 0 : 1;
}
