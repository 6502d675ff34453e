// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "error.hpp"
#include "passes.hpp"
#include "tensor.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace xamba;

namespace {

// Independent oracles: plain loops over nested vectors.
std::vector<std::vector<float>> oracle_cumsum(const std::vector<std::vector<float>>& x) {
    auto c = x;
    for (std::size_t i = 1; i < c.size(); ++i)
        for (std::size_t j = 0; j < c[i].size(); ++j) c[i][j] = c[i - 1][j] + x[i][j];
    return c;
}

Tensor random_tensor(std::mt19937_64& rng, std::int64_t m, std::int64_t n, bool integer) {
    Tensor t({m, n});
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::uniform_int_distribution<int> k(-50, 50);
    for (auto& v : t.data()) v = integer ? static_cast<float>(k(rng)) : u(rng);
    return t;
}

Tensor to_tensor(const std::vector<std::vector<float>>& rows) { return Tensor::from_rows(rows); }

} // namespace

TEST_CASE("cumsum_ref examples") {
    const auto x = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
    CHECK(cumsum_ref(x) == Tensor::from_rows({{1, 2}, {4, 6}, {9, 12}}));
    const auto row = Tensor::from_rows({{3, -1, 2}});
    CHECK(cumsum_ref(row) == row);
    CHECK(cumsum_ref(Tensor::zeros(4, 4)) == Tensor::zeros(4, 4));
    CHECK_THROWS_AS(cumsum_ref(Tensor({3})), Error);
}

TEST_CASE("reducesum_ref examples") {
    CHECK(reducesum_ref(Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}})) == Tensor::from_rows({{9, 12}}));
    const auto row = Tensor::from_rows({{7, 8}});
    CHECK(reducesum_ref(row) == row);
    CHECK(reducesum_ref(Tensor::ones(5, 3)) == Tensor::from_rows({{5, 5, 5}}));
    try {
        reducesum_ref(Tensor({4}));
        FAIL("expected shape error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Shape);
    }
}

TEST_CASE("matmul examples") {
    const auto x = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
    const auto eye = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    CHECK(matmul(eye, x) == x);
    const auto low = Tensor::from_rows({{1, 0, 0}, {1, 1, 0}, {1, 1, 1}});
    CHECK(matmul(low, x) == cumsum_ref(x));
    CHECK(matmul(Tensor::zeros(3, 3), x) == Tensor::zeros(3, 2));
    CHECK_THROWS_AS(matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3)), Error);
}

TEST_CASE("vecmat examples") {
    const auto x = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
    CHECK(vecmat(Tensor::ones(1, 3), x) == Tensor::from_rows({{9, 12}}));
    CHECK(vecmat(Tensor::from_rows({{0, 1, 0}}), x) == Tensor::from_rows({{3, 4}}));
    CHECK(vecmat(Tensor::zeros(1, 3), x) == Tensor::zeros(1, 2));
    CHECK_THROWS_AS(vecmat(Tensor::ones(1, 2), x), Error);
}

TEST_CASE("activation examples") {
    CHECK(activation(0.0f, ActivationKind::Silu) == 0.0f);
    CHECK(activation(0.0f, ActivationKind::Softplus) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(activation(0.0f, ActivationKind::Sigmoid) == 0.5f);
    CHECK_THROWS_AS(activation(1.0f, ActivationKind::Softplus, 0.0f), Error);
    CHECK_THROWS_AS(activation(1.0f, ActivationKind::Softplus, -1.0f), Error);
    // Stable at large arguments.
    CHECK(std::isfinite(activation(100.0f, ActivationKind::Softplus)));
    CHECK(activation(100.0f, ActivationKind::Softplus) == doctest::Approx(100.0));
    CHECK(activation(-100.0f, ActivationKind::Softplus) >= 0.0f);
}

TEST_CASE("allclose examples") {
    std::mt19937_64 rng(1);
    const auto x = random_tensor(rng, 8, 5, false);
    const auto self = allclose(x, x, 0.0, 0.0);
    CHECK(self.passed);
    CHECK(self.max_abs_diff == 0.0);
    const auto r = allclose(Tensor({1}, {1.0f}), Tensor({1}, {1.0f + 1e-3f}), 0.0, 1e-4);
    CHECK_FALSE(r.passed);
    CHECK(r.worst_index == 0);
    const auto big = random_tensor(rng, 64, 64, false);
    CHECK(allclose(cumsum_ref(big), matmul(*passes::cumba_mask(64), big), 1e-5, 1e-5).passed);
    CHECK_THROWS_AS(allclose(Tensor({2}), Tensor({3}), 0, 0), Error);
}

TEST_CASE("property: integer cumsum via mask is bit-identical; reducesum is last cumsum row") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::int64_t> dim(1, 128);
    for (int trial = 0; trial < 60; ++trial) {
        const auto m = dim(rng), n = dim(rng);
        const auto xi = random_tensor(rng, m, n, true);
        CHECK(bit_identical(matmul(*passes::cumba_mask(m), xi), cumsum_ref(xi)));
        const auto xf = random_tensor(rng, m, n, false);
        const auto c = cumsum_ref(xf);
        const auto r = reducesum_ref(xf);
        for (std::int64_t j = 0; j < n; ++j) REQUIRE(r(0, j) == c(m - 1, j));
        CHECK(allclose(vecmat(Tensor::ones(1, m), xf), r, 0.0, 1e-4).passed);
    }
}

TEST_CASE("property: cumsum_ref matches the nested-vector oracle exactly") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_tensor(rng, 1 + trial, 3 + trial % 5, false);
        std::vector<std::vector<float>> rows(static_cast<std::size_t>(x.rows()));
        for (std::int64_t i = 0; i < x.rows(); ++i)
            for (std::int64_t j = 0; j < x.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(x(i, j));
        CHECK(bit_identical(cumsum_ref(x), to_tensor(oracle_cumsum(rows))));
    }
}

TEST_CASE("property: activation identities on a dense grid") {
    float prev_sp = -1.0f;
    float min_silu = 1e9f;
    for (int k = 0; k <= 40000; ++k) {
        const float x = -20.0f + 0.001f * static_cast<float>(k);
        const float s = activation(x, ActivationKind::Silu);
        const float ref = x * activation(x, ActivationKind::Sigmoid);
        REQUIRE(std::fabs(s - ref) <= 4.0f * std::numeric_limits<float>::epsilon() * std::max(1.0f, std::fabs(ref)));
        const float sp = activation(x, ActivationKind::Softplus);
        REQUIRE(sp >= prev_sp);
        prev_sp = sp;
        min_silu = std::min(min_silu, s);
    }
    CHECK(min_silu >= -0.2785f - 1e-3f);
    CHECK(min_silu <= -0.2784f);
}

TEST_CASE("tensor construction and reshape") {
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), Error);
    CHECK_THROWS_AS(Tensor({0, 2}), Error);
    CHECK_THROWS_AS(Tensor({2, 2, 2}), Error);
    const auto t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    const auto r = t.reshaped({3, 2});
    CHECK(r(2, 1) == 6.0f);
    CHECK_THROWS_AS(t.reshaped({4, 2}), Error);
    CHECK_FALSE(Tensor({1}, {std::nanf("")}).all_finite());
    CHECK_FALSE(bit_identical(Tensor({1}, {0.0f}), Tensor({1}, {-0.0f})));
}

TEST_CASE("XTEN file roundtrip and corruption") {
    std::mt19937_64 rng(3);
    const auto x = random_tensor(rng, 5, 7, false);
    const auto bytes = encode_tensor(x);
    CHECK(bytes.size() == 4 + 1 + 2 * 4 + 35 * 4);
    CHECK(bit_identical(decode_tensor(bytes), x));
    auto bad = bytes;
    bad[0] = 'Y';
    CHECK_THROWS_AS(decode_tensor(bad), Error);
    auto trunc = bytes;
    trunc.pop_back();
    CHECK_THROWS_AS(decode_tensor(trunc), Error);
    const auto path = std::filesystem::temp_directory_path() / "xamba_test_tensor.xten";
    save_tensor(path.string(), x);
    CHECK(bit_identical(load_tensor(path.string()), x));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_tensor("/nonexistent/dir/x.xten"), Error);
}
