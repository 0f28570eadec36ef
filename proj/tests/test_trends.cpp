#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "fat/numerics.hpp"
#include "fat/trends.hpp"

using namespace fat;

namespace {

double norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::vector<PrimaryCapsule> random_caps(std::size_t n, std::size_t d,
                                        std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<PrimaryCapsule> caps(n);
    for (std::size_t i = 0; i < n; ++i) {
        caps[i].vec.resize(d);
        for (auto& x : caps[i].vec) x = u(rng);
        caps[i].ts = static_cast<std::int64_t>(rng() % 1000000);
        caps[i].neighbor = static_cast<std::uint32_t>(i);
        caps[i].item = static_cast<std::uint32_t>(i * 3);
    }
    return caps;
}

Tensor random_transforms(std::size_t T, std::size_t d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Tensor tr({T, d, d});
    for (auto& x : tr.values()) x = u(rng);
    return tr;
}

// Step-by-step reference of the routing recurrence, written independently.
struct RefRouting {
    std::vector<double> v;         // T*d
    std::vector<double> coupling;  // n*T
};

RefRouting reference_route(const std::vector<PrimaryCapsule>& caps,
                           const Tensor& transforms, std::size_t T,
                           std::size_t iterations) {
    std::size_t n = caps.size(), d = caps[0].vec.size();
    std::vector<double> ehat(n * T * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < T; ++j)
            for (std::size_t r = 0; r < d; ++r) {
                double acc = 0;
                for (std::size_t c = 0; c < d; ++c)
                    acc += transforms[(j * d + r) * d + c] * caps[i].vec[c];
                ehat[(i * T + j) * d + r] = acc;
            }
    std::vector<double> b(n * T, 0.0), c(n * T), v(T * d);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            auto p = softmax(std::span<const double>(b.data() + i * T, T));
            std::copy(p.begin(), p.end(), c.begin() + static_cast<std::ptrdiff_t>(i * T));
        }
        std::fill(v.begin(), v.end(), 0.0);
        std::vector<double> s(T * d, 0.0);
        for (std::size_t j = 0; j < T; ++j) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t r = 0; r < d; ++r)
                    s[j * d + r] += c[i * T + j] * ehat[(i * T + j) * d + r];
            auto sq = squash(std::span<const double>(s.data() + j * d, d));
            std::copy(sq.begin(), sq.end(), v.begin() + static_cast<std::ptrdiff_t>(j * d));
        }
        if (it + 1 < iterations)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < T; ++j) {
                    double agree = 0;
                    for (std::size_t r = 0; r < d; ++r)
                        agree += ehat[(i * T + j) * d + r] * v[j * d + r];
                    b[i * T + j] += agree;
                }
    }
    return {v, c};
}

} // namespace

TEST_CASE("squash fixed points and worked values") {
    std::vector<double> zero{0.0, 0.0, 0.0};
    auto z = squash(zero);
    for (double x : z) CHECK(x == 0.0);

    std::vector<double> unit{1.0, 0.0};
    auto u = squash(unit);
    CHECK(norm(u) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(u[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(u[1] == 0.0);

    std::vector<double> s{1.2, 1.6};  // norm 2
    auto v = squash(s);
    CHECK(v[0] == doctest::Approx(0.48).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(norm(v) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("squash norm below 1 and monotone in input norm") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<double> dir{0.3, -0.7, 0.5};
    double prev = -1.0;
    for (double scale = 0.1; scale < 20.0; scale *= 1.7) {
        std::vector<double> s(dir);
        for (auto& x : s) x *= scale;
        double nv = norm(squash(s));
        CHECK(nv < 1.0);
        CHECK(nv > prev);
        prev = nv;
    }
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> s(4);
        for (auto& x : s) x = u(rng);
        CHECK(norm(squash(s)) < 1.0);
    }
}

TEST_CASE("squash_backward matches finite differences") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int rep = 0; rep < 25; ++rep) {
        std::size_t d = 2 + rng() % 4;
        Tensor s({d});
        std::vector<double> w(d);
        for (std::size_t k = 0; k < d; ++k) {
            s[k] = u(rng);
            w[k] = u(rng);
        }
        auto loss = [&]() {
            auto v = squash(std::span<const double>(s.data(), d));
            double acc = 0;
            for (std::size_t k = 0; k < d; ++k) acc += w[k] * v[k];
            return acc;
        };
        auto ds = squash_backward(std::span<const double>(s.data(), d), w);
        Tensor dst({d}, ds);
        auto res = gradient_check(loss, {{"s", &s}}, {&dst});
        CHECK(res[0].max_rel_error < 1e-6);
    }
}

TEST_CASE("one routing iteration keeps uniform coupling") {
    std::mt19937_64 rng(4);
    auto caps = random_caps(5, 3, rng);
    auto tr = random_transforms(2, 3, rng);
    auto trends = route_trends(caps, tr, 2, 1);
    for (double c : trends.coupling) CHECK(c == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("T=1 identity transform on identical unit capsules") {
    std::size_t d = 3;
    Tensor tr({1, d, d});
    for (std::size_t k = 0; k < d; ++k) tr[k * d + k] = 1.0;
    PrimaryCapsule a, b;
    a.vec = {1.0, 0.0, 0.0};
    b.vec = {1.0, 0.0, 0.0};
    auto trends = route_trends({a, b}, tr, 1, 3);
    // c = 1 for each capsule, s = 2*e, v = squash(2e) with norm 4/5
    CHECK(trends.coupling[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(trends.coupling[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(trends.v[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(trends.v[1] == 0.0);
    CHECK(trends.v[2] == 0.0);
}

TEST_CASE("T=1 reduces to squash of the prediction-vector sum") {
    std::mt19937_64 rng(6);
    auto caps = random_caps(6, 4, rng);
    auto tr = random_transforms(1, 4, rng);
    auto trends = route_trends(caps, tr, 1, 3);
    std::vector<double> s(4, 0.0);
    for (auto& cap : caps)
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 4; ++c) s[r] += tr[r * 4 + c] * cap.vec[c];
    auto v = squash(s);
    for (std::size_t r = 0; r < 4; ++r)
        CHECK(trends.v[r] == doctest::Approx(v[r]).epsilon(1e-12));
}

TEST_CASE("routing matches the independent reference recurrence") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 40; ++rep) {
        std::size_t n = 2 + rng() % 5, d = 2 + rng() % 4, T = 1 + rng() % 3;
        std::size_t iters = 1 + rng() % 4;
        auto caps = random_caps(n, d, rng);
        auto tr = random_transforms(T, d, rng);
        auto trends = route_trends(caps, tr, T, iters);
        auto ref = reference_route(caps, tr, T, iters);
        REQUIRE(trends.v.size() == ref.v.size());
        for (std::size_t k = 0; k < ref.v.size(); ++k)
            CHECK(std::abs(trends.v[k] - ref.v[k]) < 1e-12);
        for (std::size_t k = 0; k < ref.coupling.size(); ++k)
            CHECK(std::abs(trends.coupling[k] - ref.coupling[k]) < 1e-12);
    }
}

TEST_CASE("routing invariants: coupling rows, positivity, trend norms") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 60; ++rep) {
        std::size_t n = 1 + rng() % 8, d = 2 + rng() % 5, T = 1 + rng() % 5;
        auto caps = random_caps(n, d, rng);
        auto tr = random_transforms(T, d, rng);
        auto trends = route_trends(caps, tr, T, 3);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < T; ++j) {
                double c = trends.coupling[i * T + j];
                CHECK(c > 0.0);
                sum += c;
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
        for (std::size_t j = 0; j < T; ++j) CHECK(norm(trends.trend(j)) < 1.0);
        for (std::size_t j = 0; j < T; ++j) CHECK(trends.mass[j] > 0.0);
    }
}

TEST_CASE("routing is permutation-equivariant in the capsules") {
    std::mt19937_64 rng(14);
    auto caps = random_caps(7, 4, rng);
    auto tr = random_transforms(3, 4, rng);
    auto base = route_trends(caps, tr, 3, 3);
    std::vector<std::size_t> perm(caps.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int rep = 0; rep < 20; ++rep) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<PrimaryCapsule> shuffled;
        for (auto i : perm) shuffled.push_back(caps[i]);
        auto out = route_trends(shuffled, tr, 3, 3);
        for (std::size_t k = 0; k < base.v.size(); ++k)
            CHECK(std::abs(out.v[k] - base.v[k]) < 1e-12);
        // coupling rows follow their capsules
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(std::abs(out.coupling[i * 3 + j] -
                               base.coupling[perm[i] * 3 + j]) < 1e-12);
    }
}

TEST_CASE("route_trends input validation") {
    std::mt19937_64 rng(2);
    auto caps = random_caps(3, 2, rng);
    auto tr = random_transforms(2, 2, rng);
    CHECK_THROWS_AS(route_trends({}, tr, 2, 3), std::invalid_argument);
    CHECK_THROWS_AS(route_trends(caps, tr, 0, 3), std::invalid_argument);
}

TEST_CASE("trend_timestamps: constant, uniform and random coupling") {
    std::vector<std::int64_t> ts{10, 20};
    std::vector<double> uniform{0.5, 0.5, 0.5, 0.5};  // 2 capsules x 2 trends
    auto tt = trend_timestamps(uniform, ts, 2);
    CHECK(tt[0] == doctest::Approx(15.0).epsilon(1e-12));
    CHECK(tt[1] == doctest::Approx(15.0).epsilon(1e-12));

    std::vector<std::int64_t> same{7, 7, 7};
    std::vector<double> c3{0.2, 0.8, 0.9, 0.1, 0.5, 0.5};
    auto tt3 = trend_timestamps(c3, same, 2);
    CHECK(tt3[0] == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(tt3[1] == doctest::Approx(7.0).epsilon(1e-12));

    // direct weighted mean on 5 capsules
    std::mt19937_64 rng(5);
    std::vector<std::int64_t> rts(5);
    std::vector<double> rc(5 * 2);
    for (auto& t : rts) t = static_cast<std::int64_t>(rng() % 5000);
    for (std::size_t i = 0; i < 5; ++i) {
        double a = 0.1 + static_cast<double>(rng() % 80) / 100.0;
        rc[i * 2] = a;
        rc[i * 2 + 1] = 1.0 - a;
    }
    auto got = trend_timestamps(rc, rts, 2);
    for (std::size_t j = 0; j < 2; ++j) {
        double num = 0, den = 0;
        for (std::size_t i = 0; i < 5; ++i) {
            num += rc[i * 2 + j] * static_cast<double>(rts[i]);
            den += rc[i * 2 + j];
        }
        CHECK(std::abs(got[j] - num / den) < 1e-9);
    }
}

TEST_CASE("route_backward: zero upstream gives zero gradients") {
    std::mt19937_64 rng(7);
    auto caps = random_caps(4, 3, rng);
    auto tr = random_transforms(2, 3, rng);
    auto trends = route_trends(caps, tr, 2, 2);
    std::vector<double> dv(2 * 3, 0.0);
    auto g = route_backward(caps, tr, trends, dv, {});
    for (double x : g.transforms.values()) CHECK(x == 0.0);
    for (auto& dc : g.capsules)
        for (double x : dc) CHECK(x == 0.0);
}

TEST_CASE("route_backward: duplicated capsules get equal gradients") {
    std::mt19937_64 rng(13);
    auto caps = random_caps(3, 3, rng);
    caps.push_back(caps[1]);  // duplicate
    auto tr = random_transforms(2, 3, rng);
    auto trends = route_trends(caps, tr, 2, 3);
    std::vector<double> dv(2 * 3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : dv) x = u(rng);
    auto g = route_backward(caps, tr, trends, dv, {});
    REQUIRE(g.capsules.size() == 4);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(g.capsules[1][k] == doctest::Approx(g.capsules[3][k]).epsilon(1e-12));
}

TEST_CASE("route_backward matches finite differences") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 6; ++rep) {
        std::size_t n = 3, d = 4, T = 2, iters = 2;
        auto caps = random_caps(n, d, rng);
        auto tr = random_transforms(T, d, rng);

        Tensor caps_t({n, d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) caps_t.at(i, k) = caps[i].vec[k];

        std::vector<double> wv(T * d), wc(n * T);
        for (auto& x : wv) x = u(rng);
        for (auto& x : wc) x = u(rng);

        auto loss = [&]() {
            auto local = caps;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k) local[i].vec[k] = caps_t.at(i, k);
            auto t = route_trends(local, tr, T, iters);
            double acc = 0;
            for (std::size_t k = 0; k < T * d; ++k) acc += wv[k] * t.v[k];
            for (std::size_t k = 0; k < n * T; ++k) acc += wc[k] * t.coupling[k];
            return acc;
        };

        auto trends = route_trends(caps, tr, T, iters);
        auto g = route_backward(caps, tr, trends, wv, wc);
        Tensor dcaps({n, d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) dcaps.at(i, k) = g.capsules[i][k];

        auto res = gradient_check(loss, {{"transforms", &tr}, {"capsules", &caps_t}},
                                  {&g.transforms, &dcaps});
        for (auto& r : res) {
            INFO("rep=", rep, " group=", r.group);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}
