// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace xamba {

using Shape = std::vector<std::int64_t>;

std::int64_t num_elements(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f32 tensor of rank 1 or 2.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(std::int64_t rows, std::int64_t cols) { return Tensor({rows, cols}); }
    static Tensor ones(std::int64_t rows, std::int64_t cols) { return Tensor({rows, cols}, 1.0f); }
    static Tensor from_rows(const std::vector<std::vector<float>>& rows);

    const Shape& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }

    // Rank-2 view; a rank-1 tensor of length n reads as [n, 1].
    std::int64_t rows() const noexcept;
    std::int64_t cols() const noexcept;

    float operator()(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * cols() + j)]; }
    float& operator()(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * cols() + j)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    Tensor reshaped(Shape shape) const;
    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

// Bitwise equality, distinguishing -0.0 from 0.0 and comparing NaN payloads.
bool bit_identical(const Tensor& a, const Tensor& b);

enum class ActivationKind { Sigmoid, Silu, Softplus, Exp };

const char* to_string(ActivationKind kind);
ActivationKind activation_from_string(const std::string& name);

// Reference kernels. Accumulation order is fixed so tolerances are reproducible.
Tensor cumsum_ref(const Tensor& x);
Tensor reducesum_ref(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor vecmat(const Tensor& v, const Tensor& x);
Tensor transpose(const Tensor& x);

float activation(float x, ActivationKind kind, float beta = 1.0f);
Tensor activation(const Tensor& x, ActivationKind kind, float beta = 1.0f);

struct CloseReport {
    bool passed = true;
    double max_abs_diff = 0.0;
    std::int64_t worst_index = -1;
};

CloseReport allclose(const Tensor& a, const Tensor& b, double rtol, double atol);

// Raw tensor file: "XTEN", u8 rank, u32 dims..., f32 payload; little-endian.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

} // namespace xamba
