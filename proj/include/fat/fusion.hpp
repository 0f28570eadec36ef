#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fat/data.hpp"
#include "fat/inbe.hpp"
#include "fat/numerics.hpp"
#include "fat/seqmodel.hpp"
#include "fat/trends.hpp"

namespace fat {

enum class Variant : std::uint8_t { Base = 0, Fat = 1 };

struct TrainConfig {
    std::size_t d = 64;
    std::size_t T = 6;
    std::size_t K = 1;
    std::size_t max_neighbors = 20;
    std::size_t max_future_len = 20;
    std::size_t max_seq_len = 20;
    std::size_t max_capsules = 256;
    std::size_t routing_iterations = 3;
    double alpha = 1.0;
    bool learn_alpha = false;
    bool exclude_anchor = false;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 5;
    std::size_t neg_samples = 0;  // 0 = full softmax
    std::uint64_t seed = 42;
    Variant variant = Variant::Fat;
};

struct ModelParameters {
    TrainConfig cfg;
    std::size_t vocab = 0;
    EmbeddingTable emb;
    LstmParameters lstm;
    Tensor routing;  // T x d x d (fat only)
    Tensor alpha;    // scalar    (fat only)
    Tensor proj;     // d x 2d    (fat only)

    static ModelParameters init(const TrainConfig& cfg, std::size_t vocab);
    static ModelParameters zeros_like(const ModelParameters& other);

    // Named parameter groups, in checkpoint order.
    std::vector<std::pair<std::string, Tensor*>> groups();
    std::vector<std::pair<std::string, const Tensor*>> groups() const;
    bool is_fat() const { return cfg.variant == Variant::Fat; }
};

// One sample's forward state, kept when gradients are needed.
struct SampleState {
    std::vector<std::uint32_t> hist_items;         // truncated history actually encoded
    EncodedSequence hist;
    std::vector<std::vector<std::uint32_t>> future_items;  // per encoded future sequence
    std::vector<EncodedSequence> future_enc;
    std::vector<PrimaryCapsule> caps;
    std::vector<std::pair<std::size_t, std::size_t>> cap_src;  // (future idx, position)
    std::optional<TrendCapsules> trends;
    std::int64_t target_ts = 0;
    std::vector<double> attn_weights, attn_deltas;
    std::vector<double> hf;      // d, zero when no trends
    std::vector<double> user_vec;
    bool used_trends = false;
};

// Recency-decaying attention over trends: score_k = -alpha * ln(1 + delta_k)
// with delta_k the |target - trend| gap in days, softmax-normalized.
std::vector<double> time_attention_weights(std::span<const double> trend_ts,
                                           double target_ts, double alpha);

// e_u = P [h; hf], P is d x 2d.
std::vector<double> fuse_user(std::span<const double> h, std::span<const double> hf,
                              const Tensor& projection);

// Encodes history + neighbors into the fused user vector e_u. When the
// neighbor set is null/empty (or variant=base) the model degrades to the
// Base behavior: e_u = h_u.
SampleState forward_user(const ModelParameters& params,
                         std::span<const std::uint32_t> history,
                         std::int64_t target_ts, const NeighborSet* neighbors);

// Softmax scores e_u . e_v over the given item set.
std::vector<double> predict_scores(const ModelParameters& params,
                                   std::span<const double> user_vec,
                                   std::span<const std::uint32_t> items);

// Negative log-likelihood of `target_pos` within the scored set, plus full
// backprop into `grads`. Returns the loss.
double nll_backward(const ModelParameters& params, SampleState& state,
                    std::span<const std::uint32_t> scored,
                    std::size_t target_pos, ModelParameters& grads);

// Top-N over the full vocabulary excluding `exclude`; ties by ascending id.
std::vector<std::uint32_t> recommend_topn(const ModelParameters& params,
                                          std::span<const double> user_vec,
                                          std::size_t N,
                                          const std::vector<bool>& exclude);

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    double val_recall50 = 0.0;
};

struct TrainResult {
    ModelParameters best;   // best validation Recall@50
    ModelParameters last;
    std::vector<EpochLog> log;
};

TrainResult train(const TrainConfig& cfg, const SplitDataset& split,
                  const std::vector<NeighborSet>& neighbor_sets, int threads = 1,
                  const std::function<void(const EpochLog&)>& on_epoch = nullptr);

// Checkpoint file (magic FATM): version, config block, then parameter
// tensors in group order as little-endian 64-bit floats.
void save_checkpoint(const ModelParameters& params, const std::string& path);
ModelParameters load_checkpoint(const std::string& path);

struct GradCheckReport {
    std::vector<GradCheckResult> groups;
    double max_rel_error() const;
};

// Finite-difference check of the full FAT loss on a tiny synthetic instance.
GradCheckReport run_model_gradcheck(std::size_t d = 8, std::size_t T = 3,
                                    std::size_t seq_len = 5, std::size_t n_caps = 4,
                                    std::size_t routing_iterations = 2,
                                    double eps = 1e-5, std::uint64_t seed = 7);

} // namespace fat
