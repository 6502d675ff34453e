// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "error.hpp"
#include "plu.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

using namespace xamba;
using plu::Func;

namespace {

// Regression constants: S=64 on [-8, 8], 10^6-point grid.
constexpr double kSiluMaxError64 = 0.0038709201754370814;
constexpr double kSoftplusMaxError64 = 0.0019442713539108425;

double f_exact(Func f, double x) {
    if (f == Func::Silu) return x / (1.0 + std::exp(-x));
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// Independent oracle: chord interpolation between exact knot values, asymptotes outside.
double oracle_max_error(Func f, double lo, double hi, int s, std::int64_t n) {
    const double a = lo - 2.0, b = hi + 2.0, h = (hi - lo) / s;
    double worst = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
        double approx;
        if (x < lo) {
            approx = 0.0;
        } else if (x >= hi) {
            approx = x;
        } else {
            const int k = std::min(s - 1, static_cast<int>((x - lo) / h));
            const double x0 = lo + k * h, x1 = lo + (k + 1) * h;
            approx = f_exact(f, x0) + (f_exact(f, x1) - f_exact(f, x0)) * (x - x0) / (x1 - x0);
        }
        worst = std::max(worst, std::fabs(approx - f_exact(f, x)));
    }
    return worst;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Internal;
}

} // namespace

TEST_CASE("fit_uniform examples") {
    const auto t = plu::fit_uniform(Func::Silu, 1.0f, -8.0f, 8.0f, 2);
    CHECK(t.breakpoints == std::vector<float>{-8.0f, 0.0f, 8.0f});
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::fabs(t.slopes[k] * 0.0f + t.intercepts[k]) <= 1e-6);
    CHECK(t.left_ext == plu::Line{0.0f, 0.0f});
    CHECK(t.right_ext == plu::Line{1.0f, 0.0f});

    for (int s : {1, 7, 64}) {
        const auto sp = plu::fit_uniform(Func::Softplus, 1.0f, -8.0f, 8.0f, s);
        const double err = plu::max_error(sp, 100001).max_abs_error;
        CHECK(std::fabs(plu::eval(sp, 0.0) - std::log(2.0)) <= err + 1e-7);
    }

    CHECK(code_of([] { plu::fit_uniform(Func::Silu, 1.0f, 1.0f, 1.0f, 4); }) == ErrorCode::Parameter);
    CHECK(code_of([] { plu::fit_uniform(Func::Silu, 1.0f, -1.0f, 1.0f, 0); }) == ErrorCode::Parameter);
    CHECK(code_of([] { plu::fit_uniform(Func::Softplus, 0.0f, -1.0f, 1.0f, 4); }) == ErrorCode::Parameter);
}

TEST_CASE("S=64 max_error regression values against an independent oracle") {
    const auto silu = plu::fit_uniform(Func::Silu, 1.0f, -8.0f, 8.0f, 64);
    const auto soft = plu::fit_uniform(Func::Softplus, 1.0f, -8.0f, 8.0f, 64);
    const auto es = plu::max_error(silu, 1000000);
    const auto ep = plu::max_error(soft, 1000000);
    CHECK(es.max_abs_error <= 1e-2);
    CHECK(ep.max_abs_error <= 1e-2);
    CHECK(es.max_abs_error == doctest::Approx(kSiluMaxError64).epsilon(1e-9));
    CHECK(ep.max_abs_error == doctest::Approx(kSoftplusMaxError64).epsilon(1e-9));
    // f32 table storage moves the error by far less than 1e-5.
    CHECK(std::fabs(es.max_abs_error - oracle_max_error(Func::Silu, -8, 8, 64, 1000000)) <= 1e-5);
    CHECK(std::fabs(ep.max_abs_error - oracle_max_error(Func::Softplus, -8, 8, 64, 1000000)) <= 1e-5);
    // Curvature bound h^2/8 * max|f''|: silu |f''| <= 0.5, softplus <= 0.25, h = 0.25.
    CHECK(es.max_abs_error <= 0.0625 / 8 * 0.5 + 1e-6);
    CHECK(ep.max_abs_error <= 0.0625 / 8 * 0.25 + 1e-6);
}

TEST_CASE("eval examples") {
    const auto t = plu::fit_uniform(Func::Silu, 1.0f, -8.0f, 8.0f, 64);
    for (float xk : t.breakpoints) CHECK(std::fabs(plu::eval(t, xk) - f_exact(Func::Silu, xk)) <= 1e-6);
    CHECK(plu::eval(t, 100.0) == doctest::Approx(100.0));
    CHECK(plu::eval(t, -100.0) == 0.0);
    CHECK(code_of([&] { plu::eval(t, std::numeric_limits<double>::quiet_NaN()); }) == ErrorCode::Numeric);
    CHECK(code_of([&] { plu::eval(t, std::numeric_limits<double>::infinity()); }) == ErrorCode::Numeric);
}

TEST_CASE("eval picks the right segment at ties") {
    plu::PluTable t;
    t.func = Func::Silu;
    t.breakpoints = {0.0f, 1.0f, 2.0f};
    t.slopes = {1.0f, 5.0f};
    t.intercepts = {0.0f, -100.0f};
    CHECK(plu::eval(t, 1.0) == doctest::Approx(-95.0));
    CHECK(plu::eval(t, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("max_error examples") {
    for (Func f : {Func::Silu, Func::Softplus}) {
        double prev = std::numeric_limits<double>::infinity();
        for (int s : {4, 8, 16, 32, 64}) {
            const double e = plu::max_error(plu::fit_uniform(f, 1.0f, -8.0f, 8.0f, s), 1000000).max_abs_error;
            CHECK(e <= prev);
            if (s >= 8) CHECK(e < prev);
            prev = e;
        }
    }
    CHECK(plu::max_error(plu::fit_uniform(Func::Silu, 1.0f, -8.0f, 8.0f, 1), 100001).max_abs_error > 0.5);
    CHECK_THROWS_AS(plu::max_error(plu::fit_uniform(Func::Silu, 1.0f, -8.0f, 8.0f, 4), 1), Error);
}

TEST_CASE("property: continuity, knot exactness and asymptotes") {
    for (Func f : {Func::Silu, Func::Softplus}) {
        for (int s : {8, 16, 32, 64}) {
            const auto t = plu::fit_uniform(f, 1.0f, -8.0f, 8.0f, s);
            for (std::size_t k = 0; k < t.breakpoints.size(); ++k) {
                const double xk = t.breakpoints[k];
                REQUIRE(std::fabs(plu::eval(t, xk) - f_exact(f, xk)) <= 1e-6);
                if (k > 0 && k + 1 < t.breakpoints.size())
                    REQUIRE(std::fabs(plu::eval(t, xk - 1e-6) - plu::eval(t, xk + 1e-6)) <= 1e-5);
            }
        }
        const auto t = plu::fit_uniform(f, 1.0f, -8.0f, 8.0f, 64);
        for (double x = 12.0; x <= 60.0; x += 0.01) {
            REQUIRE(std::fabs(plu::eval(t, x) - f_exact(f, x)) <= 2e-3);
            REQUIRE(std::fabs(plu::eval(t, -x) - f_exact(f, -x)) <= 2e-3);
        }
    }
}

TEST_CASE("serialize roundtrip and layout") {
    const auto t = plu::fit_uniform(Func::Silu, 1.0f, -8.0f, 8.0f, 64);
    const auto bytes = plu::serialize(t);
    CHECK(bytes.size() == 16 + (65 + 128 + 4) * 4);
    CHECK(plu::deserialize(bytes) == t);
    const auto sp = plu::fit_uniform(Func::Softplus, 2.0f, -4.0f, 6.0f, 5);
    CHECK(plu::deserialize(plu::serialize(sp)) == sp);

    auto trunc = bytes;
    trunc.resize(trunc.size() - 3);
    CHECK(code_of([&] { plu::deserialize(trunc); }) == ErrorCode::Format);
    auto magic = bytes;
    magic[1] = 'X';
    CHECK(code_of([&] { plu::deserialize(magic); }) == ErrorCode::Format);
    auto version = bytes;
    version[4] = 9;
    CHECK(code_of([&] { plu::deserialize(version); }) == ErrorCode::Format);

    auto bad = t;
    std::swap(bad.breakpoints[3], bad.breakpoints[4]);
    CHECK(code_of([&] { plu::validate(bad); }) == ErrorCode::Format);
    CHECK(code_of([&] { plu::serialize(bad); }) == ErrorCode::Format);

    const auto path = std::filesystem::temp_directory_path() / "xamba_test.clut";
    plu::save(path.string(), sp);
    CHECK(plu::load(path.string()) == sp);
    std::filesystem::remove(path);
}

TEST_CASE("tensor eval matches scalar eval") {
    const auto t = plu::fit_uniform(Func::Softplus, 1.0f, -8.0f, 8.0f, 16);
    const Tensor x({5}, {-20.0f, -1.5f, 0.0f, 3.25f, 40.0f});
    const auto y = plu::eval(t, x);
    for (std::int64_t i = 0; i < 5; ++i) CHECK(y[i] == static_cast<float>(plu::eval(t, x[i])));
}
