#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fat/tensor.hpp"

namespace fat {

// Numerically stable softmax (max subtraction). Throws on empty input.
std::vector<double> softmax(std::span<const double> scores);

// Backward pass of softmax: given probabilities p = softmax(s) and upstream
// gradient dp, returns ds with ds_j = p_j * (dp_j - sum_k p_k dp_k).
std::vector<double> softmax_backward(std::span<const double> probs,
                                     std::span<const double> dprobs);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const std::vector<const Tensor*>& params);

    // Applies one bias-corrected Adam update in place. Parameter and gradient
    // lists must match the shapes this state was built with.
    void step(const std::vector<Tensor*>& params,
              const std::vector<const Tensor*>& grads, const AdamConfig& cfg);

    std::uint64_t step_count() const { return step_; }

private:
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t step_ = 0;
};

struct GradCheckResult {
    std::string group;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
};

// Central-difference check of analytic gradients. loss_fn must be a
// deterministic function of the parameter tensors; it is re-evaluated with
// each coordinate perturbed by +-eps. analytic[g] holds the claimed gradient
// for params[g]. Relative error: |a-n| / max(1e-8, |a|+|n|).
std::vector<GradCheckResult> gradient_check(
    const std::function<double()>& loss_fn,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const std::vector<const Tensor*>& analytic, double eps = 1e-5);

} // namespace fat
