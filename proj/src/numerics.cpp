#include "fat/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fat {

bool Tensor::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

std::vector<double> softmax(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("softmax: empty input");
    double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

std::vector<double> softmax_backward(std::span<const double> probs,
                                     std::span<const double> dprobs) {
    double dot = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * dprobs[i];
    std::vector<double> ds(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
        ds[i] = probs[i] * (dprobs[i] - dot);
    return ds;
}

AdamState::AdamState(const std::vector<const Tensor*>& params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void AdamState::step(const std::vector<Tensor*>& params,
                     const std::vector<const Tensor*>& grads,
                     const AdamConfig& cfg) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw std::invalid_argument("adam: parameter group count mismatch");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (std::size_t g = 0; g < params.size(); ++g) {
        Tensor& p = *params[g];
        const Tensor& gr = *grads[g];
        if (!p.same_shape(gr) || !p.same_shape(m_[g]))
            throw std::invalid_argument("adam: shape mismatch in group " +
                                        std::to_string(g));
        for (std::size_t i = 0; i < p.size(); ++i) {
            double gi = gr[i];
            m_[g][i] = cfg.beta1 * m_[g][i] + (1.0 - cfg.beta1) * gi;
            v_[g][i] = cfg.beta2 * v_[g][i] + (1.0 - cfg.beta2) * gi * gi;
            double mhat = m_[g][i] / bc1;
            double vhat = v_[g][i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

std::vector<GradCheckResult> gradient_check(
    const std::function<double()>& loss_fn,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const std::vector<const Tensor*>& analytic, double eps) {
    if (eps < 1e-7 || eps > 1e-3)
        throw std::invalid_argument("gradient_check: eps out of [1e-7, 1e-3]");
    if (params.size() != analytic.size())
        throw std::invalid_argument("gradient_check: group count mismatch");
    // determinism probe
    double l0 = loss_fn();
    double l1 = loss_fn();
    if (l0 != l1)
        throw std::invalid_argument("gradient_check: loss function is not deterministic");

    std::vector<GradCheckResult> out;
    out.reserve(params.size());
    for (std::size_t g = 0; g < params.size(); ++g) {
        Tensor& p = *params[g].second;
        const Tensor& a = *analytic[g];
        GradCheckResult res;
        res.group = params[g].first;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double orig = p[i];
            p[i] = orig + eps;
            double fp = loss_fn();
            p[i] = orig - eps;
            double fm = loss_fn();
            p[i] = orig;
            double num = (fp - fm) / (2.0 * eps);
            double ana = a[i];
            double rel = std::abs(ana - num) /
                         std::max(1e-8, std::abs(ana) + std::abs(num));
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_index = i;
            }
        }
        out.push_back(res);
    }
    return out;
}

} // namespace fat
