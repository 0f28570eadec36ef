#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fat/tensor.hpp"

namespace fat {

struct PrimaryCapsule {
    std::vector<double> vec;
    std::int64_t ts = 0;
    std::uint32_t neighbor = 0;
    std::uint32_t item = 0;
};

// Capsule nonlinearity: s -> (|s|^2 / (1 + |s|^2)) * s/|s|; 0 maps to 0.
std::vector<double> squash(std::span<const double> s);

// d(loss)/ds given d(loss)/dv where v = squash(s).
std::vector<double> squash_backward(std::span<const double> s,
                                    std::span<const double> dv);

// Full unrolled-routing cache for the backward pass.
struct RoutingCache {
    std::size_t n = 0, T = 0, d = 0, iterations = 0;
    std::vector<double> ehat;                    // n*T*d prediction vectors
    std::vector<std::vector<double>> coupling;   // per iteration, n*T
    std::vector<std::vector<double>> s;          // per iteration, T*d
    std::vector<std::vector<double>> v;          // per iteration, T*d
};

struct TrendCapsules {
    std::size_t T = 0, d = 0;
    std::vector<double> v;           // T*d trend vectors
    std::vector<double> coupling;    // n*T final coupling, rows sum to 1
    std::vector<double> trend_ts;    // T representative timestamps
    std::vector<double> mass;        // T, sum_i c_ij
    RoutingCache cache;

    std::span<const double> trend(std::size_t j) const {
        return {v.data() + j * d, d};
    }
};

// Dynamic routing with shared per-trend transforms (transforms: T x d x d).
// ehat_{j|i} = W_j e_i; logits start at 0 (or a seeded normal draw) and are
// refined by the agreement update on all but the last iteration.
TrendCapsules route_trends(const std::vector<PrimaryCapsule>& caps,
                           const Tensor& transforms, std::size_t T,
                           std::size_t iterations, std::uint64_t logit_seed = 0,
                           bool random_logits = false);

std::vector<double> trend_timestamps(std::span<const double> coupling,
                                     std::span<const std::int64_t> timestamps,
                                     std::size_t T);

struct RoutingGradients {
    Tensor transforms;                          // T x d x d
    std::vector<std::vector<double>> capsules;  // per input capsule
};

// Exact gradients through the unrolled routing. dv is T*d upstream on the
// final trend vectors; dcoupling (n*T, may be empty) is upstream on the final
// coupling matrix (used by the timestamp-attention path).
RoutingGradients route_backward(const std::vector<PrimaryCapsule>& caps,
                                const Tensor& transforms,
                                const TrendCapsules& trends,
                                std::span<const double> dv,
                                std::span<const double> dcoupling);

} // namespace fat
