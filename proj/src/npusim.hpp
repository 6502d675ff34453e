// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "graph.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace xamba::npusim {

struct CostConfig {
    std::int64_t mpu_macs_per_cycle = 4096;
    double mpu_freq_mhz = 1400.0;
    std::int64_t dsp_lanes = 32;
    double dsp_freq_mhz = 1000.0;
    double sram_bw_bytes_per_cycle = 64.0;
    std::int64_t dsp_regfile_bytes = 16;
    // Cycles per dsp_lanes-wide vector, keyed by activation/elementwise kind
    // (silu, softplus, sigmoid, exp, power, sqrt).
    std::map<std::string, double> act_cycles_per_vector{
        {"silu", 8.0}, {"softplus", 8.0}, {"sigmoid", 6.0}, {"exp", 4.0}, {"power", 2.0}, {"sqrt", 4.0}};
    std::int64_t bytes_per_elem = 4;
    double mpu_utilization = 1.0;
    bool drain_fusion = true;
    bool sparsity_skip = true;

    void validate() const;
    double act_cycles(const std::string& kind) const;
};

std::string config_to_json(const CostConfig& c, int indent = 2);
CostConfig config_from_json(const std::string& text);
CostConfig load_config(const std::string& path);
void save_config(const std::string& path, const CostConfig& c);
std::string config_hash(const CostConfig& c);

struct NodeCost {
    int id = -1;
    std::string kind; // census key
    Engine engine = Engine::None;
    double compute_cycles = 0.0;
    double memory_cycles = 0.0;
    double bytes_moved = 0.0;
    double time_us = 0.0;
};

struct LatencyReport {
    std::string graph;
    std::string config_hash;
    std::string passes;
    std::vector<NodeCost> nodes;
    std::map<std::string, double> engine_totals; // microseconds
    double total_us = 0.0;
    std::map<std::string, double> breakdown; // census key -> share of total_us

    double share(const std::string& key) const;
    double time_of(const std::string& key) const;
};

NodeCost cost_node(const OpGraph& g, const Node& n, const ShapeMap& shapes, const CostConfig& cfg);
LatencyReport cost_graph(const OpGraph& g, const CostConfig& cfg);
LatencyReport cost_graph(const OpGraph& g, const std::vector<Shape>& input_shapes, const CostConfig& cfg);

double speedup(const LatencyReport& base, const LatencyReport& opt);
double tokens_per_second(const LatencyReport& decode, double tokens_per_step = 1.0);

std::string report_to_json(const LatencyReport& r, int indent = 2);
std::string report_to_csv(const LatencyReport& r);

} // namespace xamba::npusim
