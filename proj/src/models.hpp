// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "graph.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace xamba::models {

enum class Variant { Mamba, Mamba2 };
enum class Mode { Prefill, Decode };

const char* to_string(Variant v);
const char* to_string(Mode m);
Variant variant_from_string(const std::string& s);
Mode mode_from_string(const std::string& s);

struct MambaConfig {
    Variant variant = Variant::Mamba;
    std::int64_t d_model = 64;
    std::int64_t d_state = 16;
    std::int64_t d_conv = 4;
    std::int64_t expand = 2;
    std::int64_t seq_len = 4;
    std::int64_t dt_rank = 4;      // mamba only
    std::int64_t chunk_size = 256; // mamba2 only
    std::int64_t n_heads = 1;      // mamba2 only

    std::int64_t d_inner() const { return expand * d_model; }
    void validate() const;
};

MambaConfig mamba_default();
MambaConfig mamba2_default();
MambaConfig default_config(Variant v);

// Named weights, drawn uniform in [-0.5, 0.5] / sqrt(fan_in) from a seeded stream;
// A, D, dt bias and norm weights follow the usual structured initialisation.
struct SsmParams {
    std::map<std::string, Tensor> w;
    const Tensor& at(const std::string& name) const;
};

SsmParams init_params(const MambaConfig& cfg, std::uint64_t seed);

// Prefill graph outputs: {y [L, d_model], ssm_state, conv_input [L, channels]}.
// Decode graph inputs: {x [1, d_model], conv_state [d_conv-1, channels], ssm_state};
// outputs: {y [1, d_model], ssm_state, conv_state}.
OpGraph build_mamba_block(const MambaConfig& cfg, const SsmParams& params, Mode mode);
OpGraph build_mamba2_block(const MambaConfig& cfg, const SsmParams& params, Mode mode);
OpGraph build_block(const MambaConfig& cfg, const SsmParams& params, Mode mode);

struct Padded {
    Tensor tokens;
    std::int64_t valid_len = 0;
};

Padded pad_tokens(const Tensor& x, std::int64_t target_len);

struct StateCache {
    Tensor conv_state;
    Tensor ssm_state;
};

std::int64_t conv_channels(const MambaConfig& cfg);
Shape ssm_state_shape(const MambaConfig& cfg);
StateCache initial_state(const MambaConfig& cfg);

// Cache after an unpadded prefill run, from the graph's ssm_state and conv_input outputs.
StateCache state_after_prefill(const MambaConfig& cfg, const std::vector<Tensor>& prefill_outputs);

// Runs one decode graph step and advances the cache.
Tensor decode_step(const OpGraph& decode_graph, const Tensor& x, StateCache& cache);

} // namespace xamba::models
