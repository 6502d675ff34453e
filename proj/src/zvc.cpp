// SPDX-License-Identifier: Apache-2.0
#include "zvc.hpp"

#include "byte_io.hpp"
#include "error.hpp"

#include <bit>
#include <cstring>

namespace xamba::zvc {

std::uint16_t f32_to_f16(float v) {
    const auto x = std::bit_cast<std::uint32_t>(v);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const std::uint32_t exp = (x >> 23) & 0xffu;
    std::uint32_t mant = x & 0x7fffffu;

    if (exp == 0xff) // inf / nan
        return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u | (mant >> 13) : 0u));

    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);

    if (e <= 0) {
        if (e < -10) return static_cast<std::uint16_t>(sign);
        mant |= 0x800000u;
        const int shift = 14 - e;
        std::uint32_t h = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1);
        const std::uint32_t half = 1u << (shift - 1);
        if (rem > half || (rem == half && (h & 1u))) ++h;
        return static_cast<std::uint16_t>(sign | h);
    }

    std::uint32_t h = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h; // carry may roll into inf, as intended
    return static_cast<std::uint16_t>(sign | h);
}

float f16_to_f32(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            int e = -1;
            do {
                ++e;
                mant <<= 1;
            } while (!(mant & 0x400u));
            bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3ffu) << 13);
        }
    } else if (exp == 31) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

std::int64_t ZvcTensor::popcount() const {
    std::int64_t n = 0;
    for (auto b : bitmap) n += std::popcount(b);
    return n;
}

std::size_t ZvcTensor::compressed_bytes() const {
    return bitmap.size() + static_cast<std::size_t>(popcount()) * value_bytes();
}

std::size_t dense_bytes(const Shape& shape, ValueWidth width) {
    return static_cast<std::size_t>(num_elements(shape)) * (width == ValueWidth::Bits16 ? 2 : 4);
}

ZvcTensor compress(const Tensor& x, ValueWidth width) {
    ZvcTensor z;
    z.shape = x.shape();
    z.value_width = width;
    z.bitmap.assign(static_cast<std::size_t>((x.size() + 7) / 8), 0);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const float v = x[i];
        if (v == 0.0f) continue;
        z.bitmap[static_cast<std::size_t>(i / 8)] |= static_cast<std::uint8_t>(1u << (i % 8));
        z.packed.push_back(width == ValueWidth::Bits32 ? std::bit_cast<std::uint32_t>(v) : f32_to_f16(v));
    }
    return z;
}

namespace {

void validate(const ZvcTensor& z) {
    if (z.shape.empty() || z.shape.size() > 2) fail(ErrorCode::Corruption, "zvc: invalid rank");
    for (auto d : z.shape)
        if (d <= 0) fail(ErrorCode::Corruption, "zvc: invalid dimension");
    const auto n = z.elements();
    if (z.bitmap.size() != static_cast<std::size_t>((n + 7) / 8))
        fail(ErrorCode::Corruption, "zvc: bitmap length does not match shape");
    if (n % 8) {
        const auto pad_mask = static_cast<std::uint8_t>(0xffu << (n % 8));
        if (z.bitmap.back() & pad_mask) fail(ErrorCode::Corruption, "zvc: nonzero bitmap padding bits");
    }
    if (z.popcount() != static_cast<std::int64_t>(z.packed.size()))
        fail(ErrorCode::Corruption, "zvc: popcount " + std::to_string(z.popcount()) + " != packed length " +
                                        std::to_string(z.packed.size()));
}

} // namespace

Tensor decompress(const ZvcTensor& z) {
    validate(z);
    Tensor out(z.shape);
    std::size_t k = 0;
    for (std::int64_t i = 0; i < z.elements(); ++i) {
        if (!(z.bitmap[static_cast<std::size_t>(i / 8)] & (1u << (i % 8)))) continue;
        const auto raw = z.packed[k++];
        out[i] = z.value_width == ValueWidth::Bits32 ? std::bit_cast<float>(raw)
                                                     : f16_to_f32(static_cast<std::uint16_t>(raw));
    }
    return out;
}

double density(const ZvcTensor& z) {
    const auto n = z.elements();
    return n ? static_cast<double>(z.popcount()) / static_cast<double>(n) : 0.0;
}

std::vector<std::uint8_t> serialize(const ZvcTensor& z) {
    validate(z);
    io::Writer w;
    w.bytes("XZVC");
    w.u8(1);
    w.u8(static_cast<std::uint8_t>(z.value_width));
    w.u8(static_cast<std::uint8_t>(z.shape.size()));
    for (auto d : z.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(z.popcount()));
    w.raw(z.bitmap);
    for (auto v : z.packed) {
        if (z.value_width == ValueWidth::Bits16)
            w.put<std::uint16_t>(static_cast<std::uint16_t>(v));
        else
            w.put<std::uint32_t>(v);
    }
    return w.take();
}

ZvcTensor deserialize(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes, "zvc file");
    r.expect_magic("XZVC");
    if (r.get<std::uint8_t>() != 1) fail(ErrorCode::Format, "zvc file: unsupported version");
    ZvcTensor z;
    const auto width = r.get<std::uint8_t>();
    if (width != 16 && width != 32) fail(ErrorCode::Format, "zvc file: bad value width");
    z.value_width = static_cast<ValueWidth>(width);
    const auto rank = r.get<std::uint8_t>();
    if (rank < 1 || rank > 2) fail(ErrorCode::Format, "zvc file: bad rank");
    for (int i = 0; i < rank; ++i) z.shape.push_back(r.get<std::uint32_t>());
    for (auto d : z.shape)
        if (d == 0) fail(ErrorCode::Format, "zvc file: zero dimension");
    const auto popcount = r.get<std::uint64_t>();
    const auto bm = r.take(static_cast<std::size_t>((num_elements(z.shape) + 7) / 8));
    z.bitmap.assign(bm.begin(), bm.end());
    if (static_cast<std::uint64_t>(z.popcount()) != popcount)
        fail(ErrorCode::Corruption, "zvc file: header popcount disagrees with bitmap");
    if (r.remaining() != popcount * z.value_bytes())
        fail(ErrorCode::Corruption, "zvc file: packed payload length mismatch");
    z.packed.resize(static_cast<std::size_t>(popcount));
    for (auto& v : z.packed)
        v = z.value_width == ValueWidth::Bits16 ? r.get<std::uint16_t>() : r.get<std::uint32_t>();
    validate(z);
    return z;
}

} // namespace xamba::zvc
