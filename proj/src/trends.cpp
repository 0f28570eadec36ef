#include "fat/trends.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "fat/numerics.hpp"

namespace fat {

std::vector<double> squash(std::span<const double> s) {
    double n2 = 0.0;
    for (double x : s) n2 += x * x;
    std::vector<double> out(s.size(), 0.0);
    if (n2 < 1e-24) return out;  // limit convention at 0
    double n = std::sqrt(n2);
    double g = n / (1.0 + n2);
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = g * s[i];
    return out;
}

std::vector<double> squash_backward(std::span<const double> s,
                                    std::span<const double> dv) {
    double n2 = 0.0;
    for (double x : s) n2 += x * x;
    std::vector<double> ds(s.size(), 0.0);
    if (n2 < 1e-24) return ds;
    double n = std::sqrt(n2);
    double g = n / (1.0 + n2);
    double gp = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2));  // dg/dn
    double sdv = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) sdv += s[i] * dv[i];
    for (std::size_t i = 0; i < s.size(); ++i)
        ds[i] = g * dv[i] + (gp / n) * sdv * s[i];
    return ds;
}

TrendCapsules route_trends(const std::vector<PrimaryCapsule>& caps,
                           const Tensor& transforms, std::size_t T,
                           std::size_t iterations, std::uint64_t logit_seed,
                           bool random_logits) {
    if (T < 1) throw std::invalid_argument("route_trends: T must be >= 1");
    if (iterations < 1) throw std::invalid_argument("route_trends: iterations >= 1");
    if (caps.empty()) throw std::invalid_argument("route_trends: no primary capsules");
    std::size_t n = caps.size();
    std::size_t d = caps[0].vec.size();
    if (transforms.size() != T * d * d)
        throw std::invalid_argument("route_trends: transform shape mismatch");

    TrendCapsules out;
    out.T = T;
    out.d = d;
    RoutingCache& cache = out.cache;
    cache.n = n;
    cache.T = T;
    cache.d = d;
    cache.iterations = iterations;

    cache.ehat.assign(n * T * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = caps[i].vec;
        for (std::size_t j = 0; j < T; ++j) {
            const double* Wj = transforms.data() + j * d * d;
            double* out_v = cache.ehat.data() + (i * T + j) * d;
            for (std::size_t r = 0; r < d; ++r) {
                double acc = 0.0;
                const double* wr = Wj + r * d;
                for (std::size_t cidx = 0; cidx < d; ++cidx) acc += wr[cidx] * e[cidx];
                out_v[r] = acc;
            }
        }
    }

    std::vector<double> b(n * T, 0.0);
    if (random_logits) {
        std::mt19937_64 rng(logit_seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (auto& x : b) x = nd(rng);
    }

    for (std::size_t it = 0; it < iterations; ++it) {
        std::vector<double> c(n * T);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = softmax({b.data() + i * T, T});
            std::copy(row.begin(), row.end(), c.begin() + i * T);
        }
        std::vector<double> s(T * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < T; ++j) {
                double cij = c[i * T + j];
                const double* eh = cache.ehat.data() + (i * T + j) * d;
                double* sj = s.data() + j * d;
                for (std::size_t r = 0; r < d; ++r) sj[r] += cij * eh[r];
            }
        std::vector<double> v(T * d);
        for (std::size_t j = 0; j < T; ++j) {
            auto vj = squash({s.data() + j * d, d});
            std::copy(vj.begin(), vj.end(), v.begin() + j * d);
        }
        if (it + 1 < iterations) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < T; ++j) {
                    const double* eh = cache.ehat.data() + (i * T + j) * d;
                    const double* vj = v.data() + j * d;
                    double agree = 0.0;
                    for (std::size_t r = 0; r < d; ++r) agree += eh[r] * vj[r];
                    b[i * T + j] += agree;
                }
        }
        cache.coupling.push_back(std::move(c));
        cache.s.push_back(std::move(s));
        cache.v.push_back(std::move(v));
    }

    out.v = cache.v.back();
    out.coupling = cache.coupling.back();
    std::vector<std::int64_t> ts(n);
    for (std::size_t i = 0; i < n; ++i) ts[i] = caps[i].ts;
    out.trend_ts = trend_timestamps(out.coupling, ts, T);
    out.mass.assign(T, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < T; ++j) out.mass[j] += out.coupling[i * T + j];
    return out;
}

std::vector<double> trend_timestamps(std::span<const double> coupling,
                                     std::span<const std::int64_t> timestamps,
                                     std::size_t T) {
    std::size_t n = timestamps.size();
    std::vector<double> num(T, 0.0), den(T, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < T; ++j) {
            double c = coupling[i * T + j];
            num[j] += c * static_cast<double>(timestamps[i]);
            den[j] += c;
        }
    std::vector<double> out(T);
    for (std::size_t j = 0; j < T; ++j) out[j] = num[j] / den[j];
    return out;
}

RoutingGradients route_backward(const std::vector<PrimaryCapsule>& caps,
                                const Tensor& transforms,
                                const TrendCapsules& trends,
                                std::span<const double> dv,
                                std::span<const double> dcoupling) {
    const RoutingCache& cache = trends.cache;
    std::size_t n = cache.n, T = cache.T, d = cache.d, R = cache.iterations;
    if (dv.size() != T * d)
        throw std::invalid_argument("route_backward: dv shape mismatch");
    if (!dcoupling.empty() && dcoupling.size() != n * T)
        throw std::invalid_argument("route_backward: dcoupling shape mismatch");

    std::vector<double> dehat(n * T * d, 0.0);
    std::vector<double> db(n * T, 0.0);
    std::vector<double> dv_cur(dv.begin(), dv.end());

    for (std::size_t it = R; it-- > 0;) {
        const auto& c = cache.coupling[it];
        const auto& s = cache.s[it];

        // v = squash(s)
        std::vector<double> ds(T * d);
        for (std::size_t j = 0; j < T; ++j) {
            auto dsj = squash_backward({s.data() + j * d, d},
                                       {dv_cur.data() + j * d, d});
            std::copy(dsj.begin(), dsj.end(), ds.begin() + j * d);
        }

        // s_j = sum_i c_ij ehat_ij
        std::vector<double> dc(n * T, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < T; ++j) {
                const double* eh = cache.ehat.data() + (i * T + j) * d;
                const double* dsj = ds.data() + j * d;
                double cij = c[i * T + j];
                double acc = 0.0;
                double* deh = dehat.data() + (i * T + j) * d;
                for (std::size_t r = 0; r < d; ++r) {
                    acc += dsj[r] * eh[r];
                    deh[r] += cij * dsj[r];
                }
                dc[i * T + j] = acc;
            }
        if (it + 1 == R && !dcoupling.empty())
            for (std::size_t k = 0; k < n * T; ++k) dc[k] += dcoupling[k];

        // c = row-softmax(b_prev); db accumulates pass-through from later steps
        for (std::size_t i = 0; i < n; ++i) {
            auto row = softmax_backward({c.data() + i * T, T}, {dc.data() + i * T, T});
            for (std::size_t j = 0; j < T; ++j) db[i * T + j] += row[j];
        }

        if (it == 0) break;  // initial logits are constants

        // b_prev = b_prevprev + ehat . v^{it-1}
        const auto& v_prev = cache.v[it - 1];
        std::vector<double> dv_prev(T * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < T; ++j) {
                double dbij = db[i * T + j];
                const double* eh = cache.ehat.data() + (i * T + j) * d;
                const double* vj = v_prev.data() + j * d;
                double* deh = dehat.data() + (i * T + j) * d;
                double* dvp = dv_prev.data() + j * d;
                for (std::size_t r = 0; r < d; ++r) {
                    deh[r] += dbij * vj[r];
                    dvp[r] += dbij * eh[r];
                }
            }
        dv_cur = std::move(dv_prev);
    }

    RoutingGradients g;
    g.transforms = Tensor({T, d, d});
    g.capsules.assign(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = caps[i].vec;
        for (std::size_t j = 0; j < T; ++j) {
            const double* deh = dehat.data() + (i * T + j) * d;
            double* dWj = g.transforms.data() + j * d * d;
            const double* Wj = transforms.data() + j * d * d;
            for (std::size_t r = 0; r < d; ++r) {
                double dr = deh[r];
                for (std::size_t cc = 0; cc < d; ++cc) {
                    dWj[r * d + cc] += dr * e[cc];
                    g.capsules[i][cc] += dr * Wj[r * d + cc];
                }
            }
        }
    }
    return g;
}

} // namespace fat
