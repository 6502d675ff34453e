// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace xamba::zvc {

enum class ValueWidth : std::uint8_t { Bits16 = 16, Bits32 = 32 };

// Zero Value Compression: row-major bitmap (1 = nonzero) plus packed nonzeros.
// -0.0 compresses as zero.
struct ZvcTensor {
    Shape shape;
    std::vector<std::uint8_t> bitmap; // ceil(elements / 8) bytes, LSB-first, padding bits zero
    std::vector<std::uint32_t> packed; // raw f32 bits, or f16 bits in the low half
    ValueWidth value_width = ValueWidth::Bits32;

    std::int64_t elements() const { return num_elements(shape); }
    std::int64_t popcount() const;
    std::size_t value_bytes() const { return value_width == ValueWidth::Bits16 ? 2 : 4; }
    std::size_t compressed_bytes() const;
};

ZvcTensor compress(const Tensor& x, ValueWidth width = ValueWidth::Bits32);
Tensor decompress(const ZvcTensor& z);
double density(const ZvcTensor& z);

// Dense storage size at the same value width.
std::size_t dense_bytes(const Shape& shape, ValueWidth width);

// "XZVC", u8 version=1, u8 value_width, u8 rank, u32 dims..., u64 popcount, bitmap, packed.
std::vector<std::uint8_t> serialize(const ZvcTensor& z);
ZvcTensor deserialize(std::span<const std::uint8_t> bytes);

std::uint16_t f32_to_f16(float v);
float f16_to_f32(std::uint16_t h);

} // namespace xamba::zvc
