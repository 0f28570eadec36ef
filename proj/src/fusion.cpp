#include "fat/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fat {

namespace {
constexpr double kSecondsPerDay = 86400.0;

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}
} // namespace

ModelParameters ModelParameters::init(const TrainConfig& cfg, std::size_t vocab) {
    ModelParameters p;
    p.cfg = cfg;
    p.vocab = vocab;
    std::mt19937_64 rng(cfg.seed);
    p.emb = EmbeddingTable(vocab, cfg.d);
    p.emb.init_uniform(rng);
    p.lstm = LstmParameters(cfg.d);
    p.lstm.init_uniform(rng);
    if (cfg.variant == Variant::Fat) {
        double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d));
        std::uniform_real_distribution<double> u(-bound, bound);
        p.routing = Tensor({cfg.T, cfg.d, cfg.d});
        for (auto& x : p.routing.values()) x = u(rng);
        p.alpha = Tensor::scalar(cfg.alpha);
        // projection starts at [I | I] so the fused vector begins as h_u + HF_u
        p.proj = Tensor({cfg.d, 2 * cfg.d});
        for (std::size_t r = 0; r < cfg.d; ++r) {
            p.proj.at(r, r) = 1.0;
            p.proj.at(r, cfg.d + r) = 1.0;
        }
    }
    return p;
}

ModelParameters ModelParameters::zeros_like(const ModelParameters& other) {
    ModelParameters g;
    g.cfg = other.cfg;
    g.vocab = other.vocab;
    g.emb = EmbeddingTable(other.vocab, other.cfg.d);
    g.lstm = LstmParameters(other.cfg.d);
    if (other.is_fat()) {
        g.routing = Tensor(other.routing.shape());
        g.alpha = Tensor::scalar(0.0);
        g.proj = Tensor(other.proj.shape());
    }
    return g;
}

std::vector<std::pair<std::string, Tensor*>> ModelParameters::groups() {
    std::vector<std::pair<std::string, Tensor*>> g = {
        {"embedding", &emb.rows}, {"lstm_W", &lstm.W},  {"lstm_b", &lstm.b},
        {"lstm_V", &lstm.V},      {"lstm_c", &lstm.c},
    };
    if (is_fat()) {
        g.emplace_back("routing", &routing);
        g.emplace_back("alpha", &alpha);
        g.emplace_back("projection", &proj);
    }
    return g;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParameters::groups() const {
    auto mut = const_cast<ModelParameters*>(this)->groups();
    std::vector<std::pair<std::string, const Tensor*>> g;
    g.reserve(mut.size());
    for (auto& [name, t] : mut) g.emplace_back(name, t);
    return g;
}

std::vector<double> time_attention_weights(std::span<const double> trend_ts,
                                           double target_ts, double alpha) {
    if (trend_ts.empty())
        throw std::invalid_argument("time_attention: no trends");
    std::vector<double> scores(trend_ts.size());
    for (std::size_t j = 0; j < trend_ts.size(); ++j) {
        double delta = std::abs(target_ts - trend_ts[j]) / kSecondsPerDay;
        scores[j] = -alpha * std::log1p(delta);
    }
    return softmax(scores);
}

std::vector<double> fuse_user(std::span<const double> h, std::span<const double> hf,
                              const Tensor& projection) {
    std::size_t d = projection.dim(0);
    if (h.size() != d || hf.size() != d || projection.dim(1) != 2 * d)
        throw std::invalid_argument("fuse_user: dimension mismatch");
    std::vector<double> out(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
        const double* pr = projection.row(r);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += pr[j] * h[j] + pr[d + j] * hf[j];
        out[r] = acc;
    }
    return out;
}

SampleState forward_user(const ModelParameters& params,
                         std::span<const std::uint32_t> history,
                         std::int64_t target_ts, const NeighborSet* neighbors) {
    const TrainConfig& cfg = params.cfg;
    SampleState st;
    st.target_ts = target_ts;

    std::span<const std::uint32_t> hist = history;
    if (hist.size() > cfg.max_seq_len)
        hist = hist.subspan(hist.size() - cfg.max_seq_len);
    st.hist_items.assign(hist.begin(), hist.end());
    st.hist = encode_sequence(hist, params.emb, params.lstm);
    const auto& h = st.hist.final_state();

    bool fat = params.is_fat() && neighbors != nullptr && !neighbors->empty();
    if (fat) {
        std::size_t budget = cfg.max_capsules;
        for (std::size_t fi = 0; fi < neighbors->futures.size() && budget > 0; ++fi) {
            const auto& fs = neighbors->futures[fi];
            if (fs.items.empty()) continue;
            st.future_enc.push_back(encode_sequence(fs.items, params.emb, params.lstm));
            st.future_items.push_back(fs.items);
            const auto& enc = st.future_enc.back();
            std::size_t enc_idx = st.future_enc.size() - 1;
            for (std::size_t p = 0; p < enc.length() && budget > 0; ++p, --budget) {
                PrimaryCapsule cap;
                cap.vec = enc.hidden[p];
                cap.ts = fs.timestamps[p];
                cap.neighbor = fs.neighbor;
                cap.item = fs.items[p];
                st.caps.push_back(std::move(cap));
                st.cap_src.emplace_back(enc_idx, p);
            }
        }
    }
    if (st.caps.empty()) {
        // Base behavior: no trends, user vector is the history state
        st.user_vec = h;
        st.hf.assign(cfg.d, 0.0);
        return st;
    }

    st.trends = route_trends(st.caps, params.routing, cfg.T, cfg.routing_iterations);
    st.used_trends = true;

    const auto& tr = *st.trends;
    st.attn_deltas.resize(cfg.T);
    for (std::size_t j = 0; j < cfg.T; ++j)
        st.attn_deltas[j] =
            std::abs(static_cast<double>(target_ts) - tr.trend_ts[j]) / kSecondsPerDay;
    st.attn_weights = time_attention_weights(
        tr.trend_ts, static_cast<double>(target_ts), params.alpha[0]);

    st.hf.assign(cfg.d, 0.0);
    for (std::size_t j = 0; j < cfg.T; ++j) {
        auto vj = tr.trend(j);
        for (std::size_t r = 0; r < cfg.d; ++r) st.hf[r] += st.attn_weights[j] * vj[r];
    }

    st.user_vec = fuse_user(h, st.hf, params.proj);
    return st;
}

std::vector<double> predict_scores(const ModelParameters& params,
                                   std::span<const double> user_vec,
                                   std::span<const std::uint32_t> items) {
    if (items.empty()) throw std::invalid_argument("predict_scores: empty item set");
    std::size_t d = params.cfg.d;
    std::vector<double> logits(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        const double* e = params.emb.rows.row(items[i]);
        double acc = 0.0;
        for (std::size_t r = 0; r < d; ++r) acc += e[r] * user_vec[r];
        logits[i] = acc;
    }
    return softmax(logits);
}

double nll_backward(const ModelParameters& params, SampleState& state,
                    std::span<const std::uint32_t> scored,
                    std::size_t target_pos, ModelParameters& grads) {
    const TrainConfig& cfg = params.cfg;
    std::size_t d = cfg.d;
    auto probs = predict_scores(params, state.user_vec, scored);
    double loss = -std::log(std::max(probs[target_pos], 1e-300));

    // softmax cross-entropy: d loss / d e_u plus scored-item embedding grads
    std::vector<double> du(d, 0.0);
    for (std::size_t i = 0; i < scored.size(); ++i) {
        double coef = probs[i] - (i == target_pos ? 1.0 : 0.0);
        const double* e = params.emb.rows.row(scored[i]);
        double* ge = grads.emb.rows.row(scored[i]);
        for (std::size_t r = 0; r < d; ++r) {
            du[r] += coef * e[r];
            ge[r] += coef * state.user_vec[r];
        }
    }

    std::vector<double> dh(d, 0.0);
    LstmGradients lg(d);

    if (state.used_trends) {
        const auto& h = state.hist.final_state();
        std::vector<double> dhf(d, 0.0);
        for (std::size_t r = 0; r < d; ++r) {
            const double* pr = params.proj.row(r);
            double* gp = grads.proj.row(r);
            for (std::size_t j = 0; j < d; ++j) {
                gp[j] += du[r] * h[j];
                gp[d + j] += du[r] * state.hf[j];
                dh[j] += du[r] * pr[j];
                dhf[j] += du[r] * pr[d + j];
            }
        }

        const auto& tr = *state.trends;
        std::size_t T = cfg.T;
        std::vector<double> dv(T * d, 0.0), dw(T, 0.0);
        for (std::size_t j = 0; j < T; ++j) {
            auto vj = tr.trend(j);
            double acc = 0.0;
            for (std::size_t r = 0; r < d; ++r) {
                dv[j * d + r] += state.attn_weights[j] * dhf[r];
                acc += dhf[r] * vj[r];
            }
            dw[j] = acc;
        }
        auto dscore = softmax_backward(state.attn_weights, dw);

        double a = params.alpha[0];
        double dalpha = 0.0;
        std::vector<double> dttr(T, 0.0);
        for (std::size_t j = 0; j < T; ++j) {
            double delta = state.attn_deltas[j];
            dalpha += dscore[j] * (-std::log1p(delta));
            double ddelta = dscore[j] * (-a / (1.0 + delta));
            double diff = tr.trend_ts[j] - static_cast<double>(state.target_ts);
            double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            dttr[j] = ddelta * sgn / kSecondsPerDay;
        }
        grads.alpha[0] += dalpha;

        // T_tr,j = sum_i c_ij t_i / mass_j
        std::size_t n = state.caps.size();
        std::vector<double> dcoupling(n * T, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < T; ++j)
                dcoupling[i * T + j] =
                    dttr[j] * (static_cast<double>(state.caps[i].ts) - tr.trend_ts[j]) /
                    tr.mass[j];

        auto rg = route_backward(state.caps, params.routing, tr, dv, dcoupling);
        for (std::size_t k = 0; k < rg.transforms.size(); ++k)
            grads.routing[k] += rg.transforms[k];

        // capsule gradients flow back through the shared sequence encoder
        std::vector<std::vector<std::vector<double>>> dfut(state.future_enc.size());
        for (std::size_t e = 0; e < state.future_enc.size(); ++e)
            dfut[e].assign(state.future_enc[e].length(), {});
        for (std::size_t i = 0; i < n; ++i) {
            auto [e, p] = state.cap_src[i];
            if (dfut[e][p].empty()) dfut[e][p].assign(d, 0.0);
            for (std::size_t r = 0; r < d; ++r) dfut[e][p][r] += rg.capsules[i][r];
        }
        for (std::size_t e = 0; e < state.future_enc.size(); ++e) {
            auto dx = lstm_backward(state.future_enc[e], params.lstm, dfut[e], lg);
            for (std::size_t p = 0; p < dx.size(); ++p) {
                double* ge = grads.emb.rows.row(state.future_items[e][p]);
                for (std::size_t r = 0; r < d; ++r) ge[r] += dx[p][r];
            }
        }
    } else {
        dh = du;
    }

    std::vector<std::vector<double>> dhist(state.hist.length());
    dhist.back() = dh;
    auto dx = lstm_backward(state.hist, params.lstm, dhist, lg);
    for (std::size_t p = 0; p < dx.size(); ++p) {
        double* ge = grads.emb.rows.row(state.hist_items[p]);
        for (std::size_t r = 0; r < d; ++r) ge[r] += dx[p][r];
    }

    for (std::size_t k = 0; k < lg.W.size(); ++k) grads.lstm.W[k] += lg.W[k];
    for (std::size_t k = 0; k < lg.b.size(); ++k) grads.lstm.b[k] += lg.b[k];
    for (std::size_t k = 0; k < lg.V.size(); ++k) grads.lstm.V[k] += lg.V[k];
    for (std::size_t k = 0; k < lg.c.size(); ++k) grads.lstm.c[k] += lg.c[k];
    return loss;
}

std::vector<std::uint32_t> recommend_topn(const ModelParameters& params,
                                          std::span<const double> user_vec,
                                          std::size_t N,
                                          const std::vector<bool>& exclude) {
    std::size_t d = params.cfg.d;
    std::vector<std::pair<double, std::uint32_t>> scored;
    scored.reserve(params.vocab);
    for (std::uint32_t v = 0; v < params.vocab; ++v) {
        if (v < exclude.size() && exclude[v]) continue;
        const double* e = params.emb.rows.row(v);
        double acc = 0.0;
        for (std::size_t r = 0; r < d; ++r) acc += e[r] * user_vec[r];
        scored.emplace_back(acc, v);
    }
    std::size_t n = std::min(N, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n),
                      scored.end(), [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    std::vector<std::uint32_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(scored[i].second);
    return out;
}

// ---------- training ----------

namespace {

void accumulate(ModelParameters& into, const ModelParameters& from) {
    auto a = into.groups();
    auto b = from.groups();
    for (std::size_t g = 0; g < a.size(); ++g)
        for (std::size_t i = 0; i < a[g].second->size(); ++i)
            (*a[g].second)[i] += (*b[g].second)[i];
}

void scale(ModelParameters& grads, double s) {
    for (auto& [name, t] : grads.groups())
        for (auto& x : t->values()) x *= s;
}

void zero(ModelParameters& grads) {
    for (auto& [name, t] : grads.groups()) t->fill(0.0);
}

std::vector<std::uint32_t> sample_scored_set(const TrainConfig& cfg, std::size_t vocab,
                                             std::uint32_t target,
                                             std::uint64_t sample_key) {
    if (cfg.neg_samples == 0 || cfg.neg_samples + 1 >= vocab) {
        std::vector<std::uint32_t> all(vocab);
        for (std::uint32_t v = 0; v < vocab; ++v) all[v] = v;
        return all;
    }
    std::mt19937_64 rng(mix64(cfg.seed ^ sample_key));
    std::uniform_int_distribution<std::uint32_t> dist(0, static_cast<std::uint32_t>(vocab - 1));
    std::unordered_set<std::uint32_t> seen{target};
    std::vector<std::uint32_t> out{target};
    while (out.size() < cfg.neg_samples + 1) {
        std::uint32_t v = dist(rng);
        if (seen.insert(v).second) out.push_back(v);
    }
    return out;
}

double validation_recall50(const ModelParameters& params, const SplitDataset& split,
                           const std::vector<NeighborSet>& neighbor_sets, int threads) {
    std::vector<double> per_user(split.n_users(), -1.0);
    auto eval_one = [&](std::uint32_t u) {
        const auto& seg = split.users[u];
        if (seg.valid.empty() || seg.train.empty()) return;
        std::vector<std::uint32_t> hist;
        for (const auto& e : seg.train) hist.push_back(e.item);
        const NeighborSet* ns =
            params.is_fat() && u < neighbor_sets.size() ? &neighbor_sets[u] : nullptr;
        auto st = forward_user(params, hist, seg.valid.front().ts, ns);
        std::vector<bool> exclude(split.n_items(), false);
        for (auto it : hist) exclude[it] = true;
        auto rec = recommend_topn(params, st.user_vec, 50, exclude);
        std::unordered_set<std::uint32_t> recset(rec.begin(), rec.end());
        std::size_t hits = 0;
        std::unordered_set<std::uint32_t> truth;
        for (const auto& e : seg.valid) truth.insert(e.item);
        for (auto it : truth)
            if (recset.count(it)) ++hits;
        per_user[u] = static_cast<double>(hits) / static_cast<double>(truth.size());
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
    double sum = 0.0;
    std::size_t cnt = 0;
    for (double r : per_user)
        if (r >= 0.0) {
            sum += r;
            ++cnt;
        }
    return cnt == 0 ? 0.0 : sum / static_cast<double>(cnt);
}

} // namespace

TrainResult train(const TrainConfig& cfg, const SplitDataset& split,
                  const std::vector<NeighborSet>& neighbor_sets, int threads,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    auto samples = build_training_samples(split, cfg.max_seq_len);
    if (samples.empty()) throw std::runtime_error("train: no training samples");

    ModelParameters params = ModelParameters::init(cfg, split.n_items());
    auto groups = params.groups();
    std::vector<const Tensor*> group_ptrs;
    for (auto& [name, t] : groups) group_ptrs.push_back(t);
    AdamState adam(group_ptrs);
    AdamConfig acfg;
    acfg.lr = cfg.lr;

    int nthreads = std::max(1, threads);
    std::vector<ModelParameters> thread_grads;
    for (int t = 0; t < nthreads; ++t)
        thread_grads.push_back(ModelParameters::zeros_like(params));
    ModelParameters batch_grads = ModelParameters::zeros_like(params);

    TrainResult result;
    double best_recall = -1.0;

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(mix64(cfg.seed + 0x5deece66dULL * (epoch + 1)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<double> losses(end - start, 0.0);

            // target sits at position 0 of a sampled set; in the full-vocab
            // set its position is the item id itself
            auto worker = [&](std::size_t k, ModelParameters& grads) {
                const TrainingSample& s = samples[order[start + k]];
                const NeighborSet* ns =
                    cfg.variant == Variant::Fat ? &neighbor_sets[s.user] : nullptr;
                auto scored = sample_scored_set(cfg, split.n_items(), s.target,
                                                mix64(epoch * 0x10001ULL + order[start + k]));
                std::size_t tpos =
                    scored.size() == split.n_items() ? s.target : 0;
                auto st = forward_user(params, s.prefix, s.target_ts, ns);
                losses[k] = nll_backward(params, st, scored, tpos, grads);
            };

            if (nthreads <= 1) {
                zero(thread_grads[0]);
                for (std::size_t k = 0; k < end - start; ++k) worker(k, thread_grads[0]);
            } else {
#ifdef _OPENMP
#pragma omp parallel num_threads(nthreads)
                {
                    int tid = omp_get_thread_num();
                    zero(thread_grads[tid]);
#pragma omp for schedule(static)
                    for (std::int64_t k = 0; k < static_cast<std::int64_t>(end - start); ++k)
                        worker(static_cast<std::size_t>(k), thread_grads[tid]);
                }
#else
                zero(thread_grads[0]);
                for (std::size_t k = 0; k < end - start; ++k) worker(k, thread_grads[0]);
#endif
            }

            zero(batch_grads);
            for (int t = 0; t < (nthreads <= 1 ? 1 : nthreads); ++t)
                accumulate(batch_grads, thread_grads[t]);
            scale(batch_grads, 1.0 / static_cast<double>(end - start));
            if (params.is_fat() && !cfg.learn_alpha) batch_grads.alpha[0] = 0.0;

            double batch_loss = 0.0;
            for (double l : losses) batch_loss += l;
            batch_loss /= static_cast<double>(end - start);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: non-finite loss in epoch " +
                                         std::to_string(epoch + 1) + " batch " +
                                         std::to_string(n_batches + 1));
            epoch_loss += batch_loss;
            ++n_batches;

            std::vector<Tensor*> pg;
            std::vector<const Tensor*> gg;
            for (auto& [name, t] : groups) pg.push_back(t);
            for (auto& [name, t] : batch_grads.groups()) gg.push_back(t);
            adam.step(pg, gg, acfg);
        }

        EpochLog log;
        log.epoch = epoch + 1;
        log.loss = epoch_loss / static_cast<double>(n_batches);
        log.val_recall50 =
            validation_recall50(params, split, neighbor_sets, nthreads);
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
        if (log.val_recall50 > best_recall) {
            best_recall = log.val_recall50;
            result.best = params;
        }
    }
    result.last = params;
    if (best_recall < 0.0) result.best = params;
    return result;
}

// ---------- checkpoint I/O ----------

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(out, v);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    std::uint64_t v = get_u64(in);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

constexpr char kMagic[4] = {'F', 'A', 'T', 'M'};
constexpr unsigned char kVersion = 1;

} // namespace

void save_checkpoint(const ModelParameters& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    const TrainConfig& c = params.cfg;
    for (std::uint64_t v : {static_cast<std::uint64_t>(c.d), static_cast<std::uint64_t>(c.T),
                            static_cast<std::uint64_t>(c.K),
                            static_cast<std::uint64_t>(c.max_neighbors),
                            static_cast<std::uint64_t>(c.max_future_len),
                            static_cast<std::uint64_t>(c.max_seq_len),
                            static_cast<std::uint64_t>(c.max_capsules),
                            static_cast<std::uint64_t>(c.routing_iterations),
                            static_cast<std::uint64_t>(c.batch_size),
                            static_cast<std::uint64_t>(c.epochs),
                            static_cast<std::uint64_t>(c.neg_samples), c.seed,
                            static_cast<std::uint64_t>(params.vocab)})
        put_u64(out, v);
    put_f64(out, c.alpha);
    put_f64(out, c.lr);
    out.put(static_cast<char>(c.variant == Variant::Fat ? 1 : 0));
    out.put(static_cast<char>(c.learn_alpha ? 1 : 0));
    out.put(static_cast<char>(c.exclude_anchor ? 1 : 0));
    for (const auto& [name, t] : params.groups())
        for (double x : t->values()) put_f64(out, x);
    if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

ModelParameters load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    if (in.get() != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version");
    TrainConfig c;
    c.d = get_u64(in);
    c.T = get_u64(in);
    c.K = get_u64(in);
    c.max_neighbors = get_u64(in);
    c.max_future_len = get_u64(in);
    c.max_seq_len = get_u64(in);
    c.max_capsules = get_u64(in);
    c.routing_iterations = get_u64(in);
    c.batch_size = get_u64(in);
    c.epochs = get_u64(in);
    c.neg_samples = get_u64(in);
    c.seed = get_u64(in);
    std::size_t vocab = get_u64(in);
    c.alpha = get_f64(in);
    c.lr = get_f64(in);
    c.variant = in.get() == 1 ? Variant::Fat : Variant::Base;
    c.learn_alpha = in.get() == 1;
    c.exclude_anchor = in.get() == 1;
    ModelParameters params = ModelParameters::init(c, vocab);
    for (auto& [name, t] : params.groups())
        for (auto& x : t->values()) x = get_f64(in);
    return params;
}

// ---------- gradient check harness ----------

double GradCheckReport::max_rel_error() const {
    double mx = 0.0;
    for (const auto& g : groups) mx = std::max(mx, g.max_rel_error);
    return mx;
}

GradCheckReport run_model_gradcheck(std::size_t d, std::size_t T, std::size_t seq_len,
                                    std::size_t n_caps, std::size_t routing_iterations,
                                    double eps, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.d = d;
    cfg.T = T;
    cfg.max_seq_len = seq_len;
    cfg.routing_iterations = routing_iterations;
    cfg.learn_alpha = true;
    cfg.seed = seed;
    cfg.variant = Variant::Fat;
    const std::size_t vocab = 12;

    ModelParameters params = ModelParameters::init(cfg, vocab);
    // move the projection off its [I | I] start so its gradient is generic
    std::mt19937_64 rng(seed ^ 0xabcdef);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    for (auto& x : params.proj.values()) x += u(rng);

    std::uniform_int_distribution<std::uint32_t> item(0, vocab - 1);
    std::vector<std::uint32_t> history(seq_len);
    for (auto& it : history) it = item(rng);
    std::uint32_t target = item(rng);
    std::int64_t target_ts = 20 * 86400;

    NeighborSet ns;
    ns.user = 0;
    FutureSequence fs;
    fs.neighbor = 1;
    fs.anchor_item = history.back();
    std::uniform_int_distribution<std::int64_t> ts(0, 10 * 86400);
    std::vector<std::int64_t> cap_ts(n_caps);
    for (auto& t : cap_ts) t = ts(rng);
    std::sort(cap_ts.begin(), cap_ts.end());
    for (std::size_t i = 0; i < n_caps; ++i) {
        fs.items.push_back(item(rng));
        fs.timestamps.push_back(cap_ts[i]);
    }
    ns.futures.push_back(fs);

    std::vector<std::uint32_t> scored(vocab);
    for (std::uint32_t v = 0; v < vocab; ++v) scored[v] = v;

    auto loss_fn = [&]() {
        auto st = forward_user(params, history, target_ts, &ns);
        auto probs = predict_scores(params, st.user_vec, scored);
        return -std::log(probs[target]);
    };

    ModelParameters grads = ModelParameters::zeros_like(params);
    auto st = forward_user(params, history, target_ts, &ns);
    nll_backward(params, st, scored, target, grads);

    auto pgroups = params.groups();
    std::vector<const Tensor*> analytic;
    for (auto& [name, t] : grads.groups()) analytic.push_back(t);

    GradCheckReport report;
    report.groups = gradient_check(loss_fn, pgroups, analytic, eps);
    return report;
}

} // namespace fat
