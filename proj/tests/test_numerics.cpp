// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "kvtp/error.hpp"
#include "kvtp/numerics.hpp"
#include "oracles.hpp"

using kvtp::Matrix;
using kvtp::Vector;

TEST_CASE("cosine similarity basics") {
    const Vector u{3, 4};
    CHECK(kvtp::cosine_similarity(u, u) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(kvtp::cosine_similarity(Vector{1, 0}, Vector{0, 1}) == 0.0);
    CHECK(kvtp::cosine_similarity(Vector{1, 0}, Vector{1, 1}) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(kvtp::cosine_similarity(Vector{0, 0}, Vector{1, 0}), kvtp::Error);
    CHECK_THROWS_AS(kvtp::cosine_similarity(Vector{1, 0}, Vector{1, 0, 0}), kvtp::Error);
}

TEST_CASE("cosine gradient matches finite differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 20; ++rep) {
        Vector x(5), v(5);
        for (std::size_t i = 0; i < 5; ++i) {
            x[i] = g(rng);
            v[i] = g(rng);
        }
        const Vector grad = kvtp::cosine_similarity_grad(x, v);
        for (std::size_t i = 0; i < 5; ++i) {
            auto f = [&](double t) {
                Vector y = x;
                y[i] = t;
                return kvtp::cosine_similarity(y, v);
            };
            CHECK(oracle::relative_error(grad[i], oracle::central_difference(f, x[i], 1e-6)) < 1e-6);
        }
    }
}

TEST_CASE("softmax worked values") {
    const Vector c = kvtp::softmax(Vector{7.5, 7.5, 7.5}, 1.0);
    for (double v : c) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    const Vector x{0, 0, 5, 0};
    const Vector s = kvtp::softmax(x, 1.0);
    const auto o = oracle::softmax(x, 1.0);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(s[i] - o[i]) < 1e-15);
    }
    // frozen from the oracle
    CHECK(std::abs(s[2] - 0.9801867) < 1e-7);
    CHECK(std::abs(s[0] - 0.0066044) < 1e-7);

    const Vector t = kvtp::softmax(Vector{0, std::log(3.0)}, 1.0);
    CHECK(t[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(t[1] == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("softmax is shift invariant and stable") {
    const Vector big = kvtp::softmax(Vector{1000, 1001, 1002}, 1.0);
    const Vector small = kvtp::softmax(Vector{0, 1, 2}, 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(big[i] - small[i]) < 1e-15);
    }
    CHECK_THROWS_AS(kvtp::softmax(Vector{1, 2}, 0.0), kvtp::Error);
    CHECK_THROWS_AS(kvtp::softmax(Vector{}, 1.0), kvtp::Error);
}

TEST_CASE("cross attention worked values") {
    const Matrix kv = Matrix::from_rows({{1, 0}, {0, 1}});
    const Vector out = kvtp::cross_attention(Vector{1, 0}, kv, kv, 1.0, 2.0);
    const auto ref = oracle::attend({1, 0}, {{1, 0}, {0, 1}}, 1.0L);
    CHECK(std::abs(out[0] - static_cast<double>(ref[0])) < 1e-14);
    CHECK(std::abs(out[0] - 0.66976) < 1e-4);
    CHECK(std::abs(out[1] - 0.33024) < 1e-4);

    const Matrix one = Matrix::from_rows({{0.3, -2.0}});
    const Vector single = kvtp::cross_attention(Vector{5, 1}, kvtp::normalize_rows(one), one, 0.7, 2.0);
    CHECK(single[0] == doctest::Approx(0.3));
    CHECK(single[1] == doctest::Approx(-2.0));

    const Matrix same = Matrix::from_rows({{1, 2}, {1, 2}, {1, 2}});
    const Vector conv = kvtp::cross_attention(Vector{-1, 4}, kvtp::normalize_rows(same), same, 1.3, 2.0);
    CHECK(conv[0] == doctest::Approx(1.0));
    CHECK(conv[1] == doctest::Approx(2.0));

    CHECK_THROWS_AS(kvtp::cross_attention(Vector{1, 0, 0}, kv, kv, 1.0, 2.0), kvtp::Error);
    CHECK_THROWS_AS(kvtp::cross_attention(Vector{1, 0}, kv, kv, 0.0, 2.0), kvtp::Error);
}

TEST_CASE("cross attention backward") {
    const Matrix kv = Matrix::from_rows({{1, 0}, {0, 1}});
    SUBCASE("zero upstream gives zero gradients") {
        const auto g = kvtp::cross_attention_backward(Vector{1, 2}, kv, kv, 1.0, 2.0, Vector{0, 0});
        CHECK(g.temperature == 0.0);
        for (double v : g.query) {
            CHECK(v == 0.0);
        }
        for (double v : g.keys.data()) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("single row has no temperature gradient") {
        const Matrix one = Matrix::from_rows({{0.5, 1.5}});
        const auto g = kvtp::cross_attention_backward(Vector{1, 2}, one, one, 0.9, 2.0, Vector{1, -3});
        CHECK(std::abs(g.temperature) < 1e-15);
    }
    SUBCASE("random 3x4 instance matches finite differences") {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> gauss;
        Matrix keys(3, 4), values(3, 4);
        Vector q(4), up(4);
        for (auto& v : keys.data()) v = gauss(rng);
        for (auto& v : values.data()) v = gauss(rng);
        for (auto& v : q) v = gauss(rng);
        for (auto& v : up) v = gauss(rng);
        const double tau = 0.8;
        const auto g = kvtp::cross_attention_backward(q, keys, values, tau, 4.0, up);
        auto objective = [&](const Vector& qq, const Matrix& kk, const Matrix& vv, double t) {
            const Vector o = kvtp::cross_attention(qq, kk, vv, t, 4.0);
            return kvtp::dot(o, up);
        };
        const double h = 1e-6;
        double worst = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            auto f = [&](double x) { Vector qq = q; qq[i] = x; return objective(qq, keys, values, tau); };
            worst = std::max(worst, oracle::relative_error(g.query[i], oracle::central_difference(f, q[i], h)));
        }
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                auto fk = [&](double x) { Matrix kk = keys; kk(r, c) = x; return objective(q, kk, values, tau); };
                auto fv = [&](double x) { Matrix vv = values; vv(r, c) = x; return objective(q, keys, vv, tau); };
                worst = std::max(worst, oracle::relative_error(g.keys(r, c), oracle::central_difference(fk, keys(r, c), h)));
                worst = std::max(worst, oracle::relative_error(g.values(r, c), oracle::central_difference(fv, values(r, c), h)));
            }
        }
        auto ft = [&](double x) { return objective(q, keys, values, x); };
        worst = std::max(worst, oracle::relative_error(g.temperature, oracle::central_difference(ft, tau, h)));
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("row normalization backward matches finite differences") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    Matrix raw(3, 4), up(3, 4);
    for (auto& v : raw.data()) v = gauss(rng);
    for (auto& v : up.data()) v = gauss(rng);
    const Matrix g = kvtp::normalize_rows_backward(raw, up);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            auto f = [&](double x) {
                Matrix m = raw;
                m(r, c) = x;
                const Matrix n = kvtp::normalize_rows(m);
                double s = 0;
                for (std::size_t i = 0; i < n.data().size(); ++i) s += n.data()[i] * up.data()[i];
                return s;
            };
            CHECK(oracle::relative_error(g(r, c), oracle::central_difference(f, raw(r, c), 1e-6)) < 1e-6);
        }
    }
}

TEST_CASE("matrix construction and products") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), kvtp::Error);
    CHECK_THROWS_AS(Matrix(1, 1, std::vector<double>{std::nan("")}), kvtp::Error);
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{0, 1}, {1, 0}});
    const Matrix ab = kvtp::matmul(a, b);
    CHECK(ab == Matrix::from_rows({{2, 1}, {4, 3}}));
    const Matrix atb = kvtp::matmul_transpose_lhs(a, b);
    CHECK(atb == Matrix::from_rows({{3, 1}, {4, 2}}));
    CHECK(kvtp::matmul(a, Matrix::identity(2)) == a);
    CHECK(a.slice_rows(1, 1) == Matrix::from_rows({{3, 4}}));
    CHECK_THROWS_AS(kvtp::matmul(a, Matrix(3, 1)), kvtp::Error);
}
