#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fat/numerics.hpp"
#include "fat/seqmodel.hpp"

using namespace fat;

namespace {

std::vector<std::vector<double>> random_inputs(std::size_t len, std::size_t d,
                                               std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> x(len, std::vector<double>(d));
    for (auto& row : x)
        for (auto& v : row) v = u(rng);
    return x;
}

LstmParameters random_params(std::size_t d, std::uint64_t seed) {
    LstmParameters p(d);
    std::mt19937_64 rng(seed);
    p.init_uniform(rng);
    return p;
}

} // namespace

TEST_CASE("zero parameters give zero states at every position") {
    LstmParameters p(3);
    auto enc = lstm_forward({{1.0, -2.0, 0.5}, {0.3, 0.3, 0.3}}, p);
    REQUIRE(enc.length() == 2);
    for (auto& h : enc.hidden)
        for (double v : h) CHECK(v == 0.0);
    for (auto& c : enc.cell)
        for (double v : c) CHECK(v == 0.0);
}

TEST_CASE("d=1 single step with all weights 0.5 matches hand evaluation") {
    LstmParameters p(1);
    p.W.fill(0.5);
    p.V.fill(0.5);
    auto enc = lstm_forward({{1.0}}, p);
    double sig = 1.0 / (1.0 + std::exp(-0.5));
    CHECK(enc.gates[0][0] == doctest::Approx(0.62246).epsilon(1e-4));  // f
    CHECK(enc.gates[0][1] == doctest::Approx(sig).epsilon(1e-12));     // i
    CHECK(enc.gates[0][2] == doctest::Approx(sig).epsilon(1e-12));     // o
    CHECK(enc.cand[0][0] == doctest::Approx(0.46212).epsilon(1e-4));
    CHECK(enc.cell[0][0] == doctest::Approx(0.28765).epsilon(1e-4));
    CHECK(enc.hidden[0][0] == doctest::Approx(0.17426).epsilon(1e-4));
    // exact recurrence values
    CHECK(enc.cell[0][0] == doctest::Approx(sig * std::tanh(0.5)).epsilon(1e-12));
    CHECK(enc.hidden[0][0] ==
          doctest::Approx(sig * std::tanh(sig * std::tanh(0.5))).epsilon(1e-12));
}

TEST_CASE("empty sequence is rejected") {
    LstmParameters p(2);
    CHECK_THROWS_AS(lstm_forward({}, p), std::invalid_argument);
}

TEST_CASE("state ranges: gates in (0,1), |h| and |tanh(c)| below 1") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        std::size_t d = 1 + rng() % 6;
        auto p = random_params(d, rng());
        auto enc = lstm_forward(random_inputs(1 + rng() % 7, d, rng), p);
        for (auto& g : enc.gates)
            for (double v : g) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
            }
        for (auto& h : enc.hidden)
            for (double v : h) CHECK(std::abs(v) < 1.0);
        for (auto& c : enc.cell)
            for (double v : c) CHECK(std::abs(std::tanh(v)) < 1.0);
    }
}

TEST_CASE("forward is deterministic") {
    auto p = random_params(4, 99);
    std::mt19937_64 rng(1);
    auto x = random_inputs(5, 4, rng);
    auto a = lstm_forward(x, p);
    auto b = lstm_forward(x, p);
    CHECK(a.hidden == b.hidden);
    CHECK(a.cell == b.cell);
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    auto p = random_params(3, 17);
    std::mt19937_64 rng(2);
    auto enc = lstm_forward(random_inputs(4, 3, rng), p);
    LstmGradients g(3);
    std::vector<std::vector<double>> dh(4);  // all empty = zero upstream
    auto dx = lstm_backward(enc, p, dh, g);
    for (double v : g.W.values()) CHECK(v == 0.0);
    for (double v : g.V.values()) CHECK(v == 0.0);
    for (double v : g.b.values()) CHECK(v == 0.0);
    for (double v : g.c.values()) CHECK(v == 0.0);
    for (auto& row : dx)
        for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("accumulation is linear: same sequence twice doubles gradients") {
    auto p = random_params(3, 21);
    std::mt19937_64 rng(4);
    auto enc = lstm_forward(random_inputs(3, 3, rng), p);
    std::vector<std::vector<double>> dh(3);
    dh[2] = {0.3, -1.0, 0.5};
    LstmGradients once(3), twice(3);
    lstm_backward(enc, p, dh, once);
    lstm_backward(enc, p, dh, twice);
    lstm_backward(enc, p, dh, twice);
    for (std::size_t i = 0; i < once.W.size(); ++i)
        CHECK(twice.W[i] == doctest::Approx(2.0 * once.W[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < once.V.size(); ++i)
        CHECK(twice.V[i] == doctest::Approx(2.0 * once.V[i]).epsilon(1e-12));
}

TEST_CASE("backward matches finite differences on parameters and inputs") {
    for (std::size_t d : {2ul, 4ul, 8ul}) {
        for (std::size_t len : {1ul, 2ul, 5ul}) {
            auto p = random_params(d, 1000 * d + len);
            std::mt19937_64 rng(7 * d + len);
            auto x0 = random_inputs(len, d, rng);

            // inputs as a checkable tensor
            Tensor xt({len, d});
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t k = 0; k < d; ++k) xt.at(t, k) = x0[t][k];

            // loss: sum over the final hidden state plus the mid state (when
            // present), exercising multi-position upstream gradients
            auto loss = [&]() {
                std::vector<std::vector<double>> x(len, std::vector<double>(d));
                for (std::size_t t = 0; t < len; ++t)
                    for (std::size_t k = 0; k < d; ++k) x[t][k] = xt.at(t, k);
                auto enc = lstm_forward(x, p);
                double s = 0;
                for (double v : enc.hidden.back()) s += v;
                if (len > 2)
                    for (double v : enc.hidden[1]) s += 0.5 * v;
                return s;
            };

            auto enc = lstm_forward(x0, p);
            std::vector<std::vector<double>> dh(len);
            dh[len - 1] = std::vector<double>(d, 1.0);
            if (len > 2) dh[1] = std::vector<double>(d, 0.5);
            LstmGradients g(d);
            auto dx = lstm_backward(enc, p, dh, g);
            Tensor dxt({len, d});
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t k = 0; k < d; ++k) dxt.at(t, k) = dx[t][k];

            auto res = gradient_check(
                loss,
                {{"W", &p.W}, {"b", &p.b}, {"V", &p.V}, {"c", &p.c}, {"x", &xt}},
                {&g.W, &g.b, &g.V, &g.c, &dxt});
            for (auto& r : res) {
                INFO("d=", d, " len=", len, " group=", r.group);
                CHECK(r.max_rel_error < 1e-5);
            }
        }
    }
}

TEST_CASE("encode_sequence: lookup, sharing, truncation, errors") {
    std::mt19937_64 rng(77);
    EmbeddingTable table(10, 4);
    table.init_uniform(rng);
    auto p = random_params(4, 42);

    auto single = encode_sequence(std::vector<std::uint32_t>{3}, table, p);
    REQUIRE(single.length() == 1);
    CHECK(single.final_state() == single.hidden[0]);

    // the same parameters encode "user" and "neighbor" sequences identically
    std::vector<std::uint32_t> seq{1, 4, 2, 7};
    auto a = encode_sequence(seq, table, p);
    auto b = encode_sequence(seq, table, p);
    CHECK(a.hidden == b.hidden);

    // a suffix encodes to the suffix encoding (truncation contract)
    std::vector<std::uint32_t> full{5, 1, 4, 2, 7};
    auto suffix = encode_sequence(std::span<const std::uint32_t>(full).subspan(1), table, p);
    CHECK(suffix.hidden == a.hidden);

    CHECK_THROWS_AS(encode_sequence(std::vector<std::uint32_t>{10}, table, p),
                    std::invalid_argument);
}
