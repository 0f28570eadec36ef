#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fat/tensor.hpp"

namespace fat {

// LSTM gate parameters: W maps [h_{t-1}; x_t] (2d) to the three gates (3d),
// V maps the same input to the candidate memory content (d).
struct LstmParameters {
    Tensor W;       // 3d x 2d
    Tensor b;       // 3d
    Tensor V;       // d x 2d
    Tensor c;       // d (candidate bias)

    explicit LstmParameters(std::size_t d = 0)
        : W({3 * d, 2 * d}), b({3 * d}), V({d, 2 * d}), c({d}) {}

    std::size_t dim() const { return W.shape().empty() ? 0 : W.dim(0) / 3; }

    void init_uniform(std::mt19937_64& rng, double forget_bias = 0.0);
};

struct LstmGradients {
    Tensor W, b, V, c;
    explicit LstmGradients(std::size_t d)
        : W({3 * d, 2 * d}), b({3 * d}), V({d, 2 * d}), c({d}) {}
};

// Forward activations cached for the backward pass.
struct EncodedSequence {
    std::size_t d = 0;
    std::vector<std::vector<double>> x;        // inputs per step
    std::vector<std::vector<double>> gates;    // f,i,o per step (3d)
    std::vector<std::vector<double>> cand;     // I_t per step
    std::vector<std::vector<double>> cell;     // c_t per step
    std::vector<std::vector<double>> hidden;   // h_t per step

    std::size_t length() const { return hidden.size(); }
    const std::vector<double>& final_state() const { return hidden.back(); }
};

EncodedSequence lstm_forward(const std::vector<std::vector<double>>& inputs,
                             const LstmParameters& params);

// Reverse-mode gradients through the whole sequence. dh[t] may be empty
// (treated as zero upstream at that position). Returns gradients on the
// inputs; parameter gradients accumulate into `grads`.
std::vector<std::vector<double>> lstm_backward(
    const EncodedSequence& enc, const LstmParameters& params,
    const std::vector<std::vector<double>>& dh, LstmGradients& grads);

struct EmbeddingTable {
    Tensor rows;  // |V| x d
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t vocab, std::size_t d) : rows({vocab, d}) {}
    std::size_t vocab() const { return rows.dim(0); }
    std::size_t dim() const { return rows.dim(1); }
    void init_uniform(std::mt19937_64& rng);
};

// Embedding lookup followed by lstm_forward. Shared parameters serve both
// user histories and neighbor future sequences.
EncodedSequence encode_sequence(std::span<const std::uint32_t> items,
                                const EmbeddingTable& table,
                                const LstmParameters& params);

} // namespace fat
