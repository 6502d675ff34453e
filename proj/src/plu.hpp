// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace xamba::plu {

enum class Func : std::uint8_t { Silu = 0, Softplus = 1 };

const char* to_string(Func f);
Func func_from_string(const std::string& name);
ActivationKind activation_kind(Func f);

struct Line {
    float slope = 0.0f;
    float intercept = 0.0f;
    friend bool operator==(const Line&, const Line&) = default;
};

// C-LUT content: f(x) ~= slopes[k] * x + intercepts[k] on [breakpoints[k], breakpoints[k+1]].
struct PluTable {
    Func func = Func::Silu;
    float beta = 1.0f;
    std::vector<float> breakpoints; // S + 1, strictly increasing
    std::vector<float> slopes;      // S
    std::vector<float> intercepts;  // S
    Line left_ext;
    Line right_ext;

    std::size_t segments() const { return slopes.size(); }
    friend bool operator==(const PluTable&, const PluTable&) = default;
};

// Exact reference in double precision.
double exact(Func f, double x, double beta);

// Interpolatory fit with uniform knots; extensions are the exact asymptotes.
PluTable fit_uniform(Func func, float beta, float lo, float hi, int segments);

// Structural checks; throws a format error on violation.
void validate(const PluTable& t);

double eval(const PluTable& t, double x);
Tensor eval(const PluTable& t, const Tensor& x);

struct ErrorReport {
    double max_abs_error = 0.0;
    double argmax = 0.0;
};

// Dense uniform grid over [x_0 - 2, x_S + 2].
ErrorReport max_error(const PluTable& t, std::int64_t grid_points);

constexpr std::size_t kHeaderBytes = 16;

std::vector<std::uint8_t> serialize(const PluTable& t);
PluTable deserialize(std::span<const std::uint8_t> bytes);
void save(const std::string& path, const PluTable& t);
PluTable load(const std::string& path);

} // namespace xamba::plu
