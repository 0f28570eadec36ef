#include "fat/seqmodel.hpp"

#include <cmath>
#include <stdexcept>

namespace fat {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += M * z where M is (rows x 2d) and z = [h; x]
void affine(const Tensor& M, const Tensor& bias, std::span<const double> h,
            std::span<const double> x, std::vector<double>& y) {
    std::size_t rows = M.dim(0);
    std::size_t d = h.size();
    y.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* mr = M.row(r);
        double acc = bias[r];
        for (std::size_t j = 0; j < d; ++j) acc += mr[j] * h[j];
        for (std::size_t j = 0; j < d; ++j) acc += mr[d + j] * x[j];
        y[r] = acc;
    }
}

} // namespace

void LstmParameters::init_uniform(std::mt19937_64& rng, double forget_bias) {
    std::size_t d = dim();
    double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : W.values()) x = u(rng);
    for (auto& x : V.values()) x = u(rng);
    b.fill(0.0);
    c.fill(0.0);
    for (std::size_t j = 0; j < d; ++j) b[j] = forget_bias;  // forget gate rows first
}

void EmbeddingTable::init_uniform(std::mt19937_64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(dim()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : rows.values()) x = u(rng);
}

EncodedSequence lstm_forward(const std::vector<std::vector<double>>& inputs,
                             const LstmParameters& params) {
    if (inputs.empty()) throw std::invalid_argument("lstm_forward: empty sequence");
    std::size_t d = params.dim();
    EncodedSequence enc;
    enc.d = d;
    enc.x = inputs;
    std::vector<double> h(d, 0.0), cell(d, 0.0);
    std::vector<double> pre, cpre;
    for (const auto& x : inputs) {
        if (x.size() != d) throw std::invalid_argument("lstm_forward: input dim mismatch");
        affine(params.W, params.b, h, x, pre);
        affine(params.V, params.c, h, x, cpre);
        std::vector<double> g(3 * d), cand(d);
        for (std::size_t j = 0; j < 3 * d; ++j) g[j] = sigmoid(pre[j]);
        for (std::size_t j = 0; j < d; ++j) cand[j] = std::tanh(cpre[j]);
        std::vector<double> c_new(d), h_new(d);
        for (std::size_t j = 0; j < d; ++j) {
            double f = g[j], i = g[d + j], o = g[2 * d + j];
            c_new[j] = f * cell[j] + i * cand[j];
            h_new[j] = o * std::tanh(c_new[j]);
        }
        enc.gates.push_back(std::move(g));
        enc.cand.push_back(std::move(cand));
        enc.cell.push_back(c_new);
        enc.hidden.push_back(h_new);
        cell = std::move(c_new);
        h = std::move(h_new);
    }
    return enc;
}

std::vector<std::vector<double>> lstm_backward(
    const EncodedSequence& enc, const LstmParameters& params,
    const std::vector<std::vector<double>>& dh, LstmGradients& grads) {
    std::size_t n = enc.length();
    std::size_t d = enc.d;
    if (dh.size() != n)
        throw std::invalid_argument("lstm_backward: upstream gradient count mismatch");

    std::vector<std::vector<double>> dx(n, std::vector<double>(d, 0.0));
    std::vector<double> dh_next(d, 0.0), dc_next(d, 0.0);

    for (std::size_t t = n; t-- > 0;) {
        std::vector<double> dht = dh_next;
        if (!dh[t].empty()) {
            if (dh[t].size() != d)
                throw std::invalid_argument("lstm_backward: bad upstream gradient dim");
            for (std::size_t j = 0; j < d; ++j) dht[j] += dh[t][j];
        }
        const auto& g = enc.gates[t];
        const auto& cand = enc.cand[t];
        const auto& cell = enc.cell[t];
        const std::vector<double>* prev_cell = t > 0 ? &enc.cell[t - 1] : nullptr;
        const std::vector<double>* prev_h = t > 0 ? &enc.hidden[t - 1] : nullptr;

        std::vector<double> dpre(3 * d), dcpre(d), dct(d);
        for (std::size_t j = 0; j < d; ++j) {
            double f = g[j], i = g[d + j], o = g[2 * d + j];
            double tc = std::tanh(cell[j]);
            double dc = dht[j] * o * (1.0 - tc * tc) + dc_next[j];
            dct[j] = dc;
            double cprev = prev_cell ? (*prev_cell)[j] : 0.0;
            dpre[j] = dc * cprev * f * (1.0 - f);                 // forget gate
            dpre[d + j] = dc * cand[j] * i * (1.0 - i);           // input gate
            dpre[2 * d + j] = dht[j] * tc * o * (1.0 - o);        // output gate
            dcpre[j] = dc * i * (1.0 - cand[j] * cand[j]);        // candidate
        }

        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (std::size_t j = 0; j < d; ++j) dc_next[j] = dct[j] * g[j];

        for (std::size_t r = 0; r < 3 * d; ++r) {
            double* wr = grads.W.row(r);
            const double* pr = params.W.row(r);
            double dp = dpre[r];
            grads.b[r] += dp;
            for (std::size_t j = 0; j < d; ++j) {
                wr[j] += dp * (prev_h ? (*prev_h)[j] : 0.0);
                wr[d + j] += dp * enc.x[t][j];
                if (prev_h) dh_next[j] += dp * pr[j];
                dx[t][j] += dp * pr[d + j];
            }
        }
        for (std::size_t r = 0; r < d; ++r) {
            double* vr = grads.V.row(r);
            const double* pr = params.V.row(r);
            double dp = dcpre[r];
            grads.c[r] += dp;
            for (std::size_t j = 0; j < d; ++j) {
                vr[j] += dp * (prev_h ? (*prev_h)[j] : 0.0);
                vr[d + j] += dp * enc.x[t][j];
                if (prev_h) dh_next[j] += dp * pr[j];
                dx[t][j] += dp * pr[d + j];
            }
        }
    }
    return dx;
}

EncodedSequence encode_sequence(std::span<const std::uint32_t> items,
                                const EmbeddingTable& table,
                                const LstmParameters& params) {
    std::vector<std::vector<double>> inputs;
    inputs.reserve(items.size());
    std::size_t d = table.dim();
    for (std::uint32_t id : items) {
        if (id >= table.vocab())
            throw std::invalid_argument("encode_sequence: item id out of vocabulary");
        const double* r = table.rows.row(id);
        inputs.emplace_back(r, r + d);
    }
    return lstm_forward(inputs, params);
}

} // namespace fat
