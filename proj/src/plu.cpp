// SPDX-License-Identifier: Apache-2.0
#include "plu.hpp"

#include "byte_io.hpp"
#include "error.hpp"

#include <algorithm>
#include <cmath>

namespace xamba::plu {

const char* to_string(Func f) { return f == Func::Silu ? "silu" : "softplus"; }

Func func_from_string(const std::string& name) {
    if (name == "silu" || name == "swish") return Func::Silu;
    if (name == "softplus") return Func::Softplus;
    fail(ErrorCode::Parameter, "unsupported PLU function '" + name + "'");
}

ActivationKind activation_kind(Func f) { return f == Func::Silu ? ActivationKind::Silu : ActivationKind::Softplus; }

double exact(Func f, double x, double beta) {
    if (f == Func::Silu) return x / (1.0 + std::exp(-x));
    const double bx = beta * x;
    return (std::max(bx, 0.0) + std::log1p(std::exp(-std::fabs(bx)))) / beta;
}

PluTable fit_uniform(Func func, float beta, float lo, float hi, int segments) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        fail(ErrorCode::Parameter, "fit_uniform: need finite lo < hi");
    if (segments < 1) fail(ErrorCode::Parameter, "fit_uniform: segments must be >= 1");
    if (!(beta > 0.0f)) fail(ErrorCode::Parameter, "fit_uniform: beta must be positive");

    PluTable t;
    t.func = func;
    t.beta = beta;
    const double h = (static_cast<double>(hi) - lo) / segments;
    for (int k = 0; k <= segments; ++k)
        t.breakpoints.push_back(k == segments ? hi : static_cast<float>(lo + h * k));
    for (std::size_t k = 1; k < t.breakpoints.size(); ++k)
        if (!(t.breakpoints[k] > t.breakpoints[k - 1]))
            fail(ErrorCode::Parameter, "fit_uniform: range too narrow for segment count");

    for (int k = 0; k < segments; ++k) {
        const double x0 = t.breakpoints[k], x1 = t.breakpoints[k + 1];
        const double y0 = exact(func, x0, beta), y1 = exact(func, x1, beta);
        const float m = static_cast<float>((y1 - y0) / (x1 - x0));
        // Intercept from the rounded slope keeps the left knot exact.
        const float c = static_cast<float>(y0 - static_cast<double>(m) * x0);
        t.slopes.push_back(m);
        t.intercepts.push_back(c);
    }
    // Both functions tend to 0 on the left and to the identity on the right.
    t.left_ext = {0.0f, 0.0f};
    t.right_ext = {1.0f, 0.0f};
    return t;
}

void validate(const PluTable& t) {
    const auto s = t.slopes.size();
    if (s < 1) fail(ErrorCode::Format, "PLU table: needs at least one segment");
    if (t.intercepts.size() != s || t.breakpoints.size() != s + 1)
        fail(ErrorCode::Format, "PLU table: array lengths disagree");
    if (!(t.beta > 0.0f)) fail(ErrorCode::Format, "PLU table: beta must be positive");
    for (std::size_t k = 1; k < t.breakpoints.size(); ++k)
        if (!(t.breakpoints[k] > t.breakpoints[k - 1]))
            fail(ErrorCode::Format, "PLU table: breakpoints not strictly increasing");
}

double eval(const PluTable& t, double x) {
    if (!std::isfinite(x)) fail(ErrorCode::Numeric, "PLU eval: non-finite input");
    const auto& bp = t.breakpoints;
    if (x < bp.front()) return t.left_ext.slope * x + t.left_ext.intercept;
    if (x > bp.back()) return t.right_ext.slope * x + t.right_ext.intercept;
    // Ties at an interior knot go to the segment on the right.
    auto it = std::upper_bound(bp.begin(), bp.end(), x, [](double v, float b) { return v < b; });
    std::size_t k = static_cast<std::size_t>(it - bp.begin());
    k = k == 0 ? 0 : k - 1;
    k = std::min(k, t.slopes.size() - 1);
    return static_cast<double>(t.slopes[k]) * x + t.intercepts[k];
}

Tensor eval(const PluTable& t, const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.data()) v = static_cast<float>(eval(t, static_cast<double>(v)));
    return out;
}

ErrorReport max_error(const PluTable& t, std::int64_t grid_points) {
    if (grid_points < 2) fail(ErrorCode::Parameter, "max_error: need at least 2 grid points");
    const double lo = t.breakpoints.front() - 2.0, hi = t.breakpoints.back() + 2.0;
    ErrorReport r;
    for (std::int64_t i = 0; i < grid_points; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
        const double e = std::fabs(eval(t, x) - exact(t.func, x, t.beta));
        if (e > r.max_abs_error) {
            r.max_abs_error = e;
            r.argmax = x;
        }
    }
    return r;
}

std::vector<std::uint8_t> serialize(const PluTable& t) {
    validate(t);
    io::Writer w;
    w.bytes("CLUT");
    w.put<std::uint16_t>(1);
    w.u8(static_cast<std::uint8_t>(t.func));
    w.u8(0); // reserved, pads the header to 16 bytes
    w.put<float>(t.beta);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.segments()));
    for (float v : t.breakpoints) w.put<float>(v);
    for (float v : t.slopes) w.put<float>(v);
    for (float v : t.intercepts) w.put<float>(v);
    for (const auto& e : {t.left_ext, t.right_ext}) {
        w.put<float>(e.slope);
        w.put<float>(e.intercept);
    }
    return w.take();
}

PluTable deserialize(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes, "C-LUT file");
    r.expect_magic("CLUT");
    if (r.get<std::uint16_t>() != 1) fail(ErrorCode::Format, "C-LUT file: unsupported version");
    PluTable t;
    const auto func = r.get<std::uint8_t>();
    if (func > 1) fail(ErrorCode::Format, "C-LUT file: unknown function id");
    t.func = static_cast<Func>(func);
    r.get<std::uint8_t>();
    t.beta = r.get<float>();
    const auto s = r.get<std::uint32_t>();
    if (s == 0) fail(ErrorCode::Format, "C-LUT file: zero segments");
    if (r.remaining() != (static_cast<std::size_t>(s) * 3 + 1 + 4) * sizeof(float))
        fail(ErrorCode::Format, "C-LUT file: payload length does not match segment count");
    auto read_n = [&](std::vector<float>& v, std::size_t n) {
        v.resize(n);
        for (auto& x : v) x = r.get<float>();
    };
    read_n(t.breakpoints, s + 1);
    read_n(t.slopes, s);
    read_n(t.intercepts, s);
    for (auto* e : {&t.left_ext, &t.right_ext}) {
        e->slope = r.get<float>();
        e->intercept = r.get<float>();
    }
    validate(t);
    return t;
}

void save(const std::string& path, const PluTable& t) { io::write_file(path, serialize(t)); }

PluTable load(const std::string& path) { return deserialize(io::read_file(path)); }

} // namespace xamba::plu
