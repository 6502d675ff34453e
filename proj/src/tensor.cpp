// SPDX-License-Identifier: Apache-2.0
#include "tensor.hpp"

#include "byte_io.hpp"
#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace xamba {

std::int64_t num_elements(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 2)
        fail(ErrorCode::Shape, "tensor rank must be 1 or 2, got shape " + shape_str(shape));
    for (auto d : shape)
        if (d <= 0) fail(ErrorCode::Shape, "non-positive dimension in " + shape_str(shape));
}

void require_rank2(const Tensor& x, const char* op) {
    if (x.rank() != 2) fail(ErrorCode::Shape, std::string(op) + ": expected rank 2, got " + shape_str(x.shape()));
}

} // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<std::size_t>(num_elements(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (num_elements(shape_) != static_cast<std::int64_t>(data_.size()))
        fail(ErrorCode::Shape, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                   shape_str(shape_));
}

Tensor Tensor::from_rows(const std::vector<std::vector<float>>& rows) {
    if (rows.empty() || rows.front().empty()) fail(ErrorCode::Shape, "from_rows: empty input");
    std::vector<float> data;
    for (const auto& r : rows) {
        if (r.size() != rows.front().size()) fail(ErrorCode::Shape, "from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(rows.front().size())},
                  std::move(data));
}

std::int64_t Tensor::rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
std::int64_t Tensor::cols() const noexcept { return shape_.size() == 2 ? shape_[1] : 1; }

Tensor Tensor::reshaped(Shape shape) const {
    if (num_elements(shape) != size())
        fail(ErrorCode::Shape, "reshape " + shape_str(shape_) + " -> " + shape_str(shape) + " changes element count");
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool bit_identical(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(float)) == 0;
}

const char* to_string(ActivationKind kind) {
    switch (kind) {
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Silu: return "silu";
    case ActivationKind::Softplus: return "softplus";
    case ActivationKind::Exp: return "exp";
    }
    return "?";
}

ActivationKind activation_from_string(const std::string& name) {
    if (name == "sigmoid") return ActivationKind::Sigmoid;
    if (name == "silu") return ActivationKind::Silu;
    if (name == "softplus") return ActivationKind::Softplus;
    if (name == "exp") return ActivationKind::Exp;
    fail(ErrorCode::Parameter, "unknown activation '" + name + "'");
}

Tensor cumsum_ref(const Tensor& x) {
    require_rank2(x, "cumsum_ref");
    Tensor out = x;
    const auto m = x.rows(), n = x.cols();
    for (std::int64_t i = 1; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out(i, j) = out(i - 1, j) + x(i, j);
    return out;
}

Tensor reducesum_ref(const Tensor& x) {
    require_rank2(x, "reducesum_ref");
    const auto m = x.rows(), n = x.cols();
    Tensor out({1, n});
    for (std::int64_t j = 0; j < n; ++j) out(0, j) = x(0, j);
    for (std::int64_t i = 1; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out(0, j) = out(0, j) + x(i, j);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows())
        fail(ErrorCode::Shape, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const auto m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    std::vector<float> acc(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0f);
        // p outermost keeps left-to-right accumulation per output element.
        for (std::int64_t p = 0; p < k; ++p) {
            const float av = a(i, p);
            for (std::int64_t j = 0; j < n; ++j) acc[static_cast<std::size_t>(j)] += av * b(p, j);
        }
        for (std::int64_t j = 0; j < n; ++j) out(i, j) = acc[static_cast<std::size_t>(j)];
    }
    return out;
}

Tensor vecmat(const Tensor& v, const Tensor& x) {
    require_rank2(v, "vecmat");
    if (v.rows() != 1) fail(ErrorCode::Shape, "vecmat: left operand must be [1,m], got " + shape_str(v.shape()));
    return matmul(v, x);
}

Tensor transpose(const Tensor& x) {
    const auto m = x.rows(), n = x.cols();
    Tensor out({n, m});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out(j, i) = x(i, j);
    return out;
}

float activation(float x, ActivationKind kind, float beta) {
    switch (kind) {
    case ActivationKind::Sigmoid: return 1.0f / (1.0f + std::exp(-x));
    case ActivationKind::Silu: return x / (1.0f + std::exp(-x));
    case ActivationKind::Softplus: {
        if (!(beta > 0.0f)) fail(ErrorCode::Parameter, "activation: beta must be positive");
        const float bx = beta * x;
        return (std::max(bx, 0.0f) + std::log1p(std::exp(-std::fabs(bx)))) / beta;
    }
    case ActivationKind::Exp: return std::exp(x);
    }
    return x;
}

Tensor activation(const Tensor& x, ActivationKind kind, float beta) {
    if (!(beta > 0.0f)) fail(ErrorCode::Parameter, "activation: beta must be positive");
    Tensor out = x;
    for (auto& v : out.data()) v = activation(v, kind, beta);
    return out;
}

CloseReport allclose(const Tensor& a, const Tensor& b, double rtol, double atol) {
    if (a.shape() != b.shape())
        fail(ErrorCode::Shape, "allclose: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    CloseReport r;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        double diff = std::fabs(x - y);
        if (x == y) diff = 0.0; // equal infinities
        if (std::isnan(diff)) diff = std::numeric_limits<double>::infinity();
        if (r.worst_index < 0 || diff > r.max_abs_diff) {
            r.worst_index = i;
            r.max_abs_diff = diff;
        }
        if (!(diff <= atol + rtol * std::fabs(y))) r.passed = false;
    }
    return r;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    io::Writer w;
    w.bytes("XTEN");
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.put<float>(v);
    return w.take();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes, "tensor file");
    r.expect_magic("XTEN");
    const auto rank = r.get<std::uint8_t>();
    if (rank < 1 || rank > 2) fail(ErrorCode::Format, "tensor file: unsupported rank " + std::to_string(rank));
    Shape shape;
    for (int i = 0; i < rank; ++i) shape.push_back(r.get<std::uint32_t>());
    for (auto d : shape)
        if (d == 0) fail(ErrorCode::Format, "tensor file: zero dimension");
    const auto n = num_elements(shape);
    if (r.remaining() != static_cast<std::size_t>(n) * sizeof(float))
        fail(ErrorCode::Format, "tensor file: payload length does not match shape");
    std::vector<float> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = r.get<float>();
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) { io::write_file(path, encode_tensor(t)); }

Tensor load_tensor(const std::string& path) { return decode_tensor(io::read_file(path)); }

} // namespace xamba
