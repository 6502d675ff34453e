// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "models.hpp"
#include "npusim.hpp"
#include "passes.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace xamba::experiments {

// Baseline and rewritten graphs for one (model, mode), built once.
struct GraphSet {
    models::MambaConfig cfg;
    models::Mode mode = models::Mode::Prefill;
    OpGraph base;
    OpGraph rewritten(const std::vector<std::string>& passes) const;
};

GraphSet make_graph_set(models::Variant v, models::Mode mode, std::uint64_t seed);

struct Observations {
    double mamba2_cumba = 0, mamba2_reduba = 0, mamba2_cumba_reduba = 0;
    double mamba_softplus = 0, mamba_silu = 0, mamba_actiba = 0;
    double mamba_decode_tps_ratio = 0;
    double mamba2_cumsum_share = 0;
    double mamba2_dominant_cumsum_fraction = 0;
    bool mamba_top2_are_activations = false;
    // min(SiLU, Softplus share) minus the largest other share; positive iff they are the top two.
    double mamba_activation_margin = 0;
};

struct Target {
    const char* name;
    double value;
    double Observations::*field;
};

// Published ratios the calibration is fit against.
const std::vector<Target>& ratio_targets();

Observations observe(const npusim::CostConfig& cfg, std::uint64_t seed = 42);

// Worst relative error over the ratio targets.
double max_relative_error(const Observations& o);

// One row per (model, pass-set): 2 models x {none, cumba, reduba, cumba+reduba, all}.
std::string bench_csv(const npusim::CostConfig& cfg, std::uint64_t seed);

} // namespace xamba::experiments
