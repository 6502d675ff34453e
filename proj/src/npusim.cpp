// SPDX-License-Identifier: Apache-2.0
#include "npusim.hpp"

#include "byte_io.hpp"
#include "error.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <set>

namespace xamba::npusim {

using ojson = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kConfigKeys{
    "mpu_macs_per_cycle", "mpu_freq_mhz",          "dsp_lanes",      "dsp_freq_mhz",
    "sram_bw_bytes_per_cycle", "dsp_regfile_bytes", "act_cycles_per_vector", "bytes_per_elem",
    "mpu_utilization",    "drain_fusion",          "sparsity_skip"};

[[noreturn]] void config_error(const std::string& msg) { fail(ErrorCode::Config, "cost config: " + msg); }

double ceil_div(double a, double b) { return std::ceil(a / b); }

} // namespace

void CostConfig::validate() const {
    if (mpu_macs_per_cycle <= 0 || dsp_lanes <= 0 || dsp_regfile_bytes <= 0 || bytes_per_elem <= 0)
        config_error("integer rates must be positive");
    if (!(mpu_freq_mhz > 0) || !(dsp_freq_mhz > 0) || !(sram_bw_bytes_per_cycle > 0))
        config_error("frequencies and bandwidth must be positive");
    if (!(mpu_utilization > 0) || mpu_utilization > 1) config_error("mpu_utilization must be in (0, 1]");
    for (const auto& [k, v] : act_cycles_per_vector)
        if (!(v > 0)) config_error("act_cycles_per_vector[" + k + "] must be positive");
}

double CostConfig::act_cycles(const std::string& kind) const {
    auto it = act_cycles_per_vector.find(kind);
    if (it == act_cycles_per_vector.end()) config_error("no act_cycles_per_vector entry for '" + kind + "'");
    return it->second;
}

std::string config_to_json(const CostConfig& c, int indent) {
    ojson j;
    j["mpu_macs_per_cycle"] = c.mpu_macs_per_cycle;
    j["mpu_freq_mhz"] = c.mpu_freq_mhz;
    j["dsp_lanes"] = c.dsp_lanes;
    j["dsp_freq_mhz"] = c.dsp_freq_mhz;
    j["sram_bw_bytes_per_cycle"] = c.sram_bw_bytes_per_cycle;
    j["dsp_regfile_bytes"] = c.dsp_regfile_bytes;
    ojson act = ojson::object();
    for (const auto& [k, v] : c.act_cycles_per_vector) act[k] = v;
    j["act_cycles_per_vector"] = std::move(act);
    j["bytes_per_elem"] = c.bytes_per_elem;
    j["mpu_utilization"] = c.mpu_utilization;
    j["drain_fusion"] = c.drain_fusion;
    j["sparsity_skip"] = c.sparsity_skip;
    return j.dump(indent);
}

CostConfig config_from_json(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const ojson::parse_error& e) {
        config_error(e.what());
    }
    if (!j.is_object()) config_error("top level must be an object");
    const std::set<std::string> known(kConfigKeys.begin(), kConfigKeys.end());
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) config_error("unknown field '" + k + "'");
    for (const auto& k : kConfigKeys)
        if (!j.contains(k)) config_error("missing field '" + k + "'");
    CostConfig c;
    try {
        c.mpu_macs_per_cycle = j["mpu_macs_per_cycle"].get<std::int64_t>();
        c.mpu_freq_mhz = j["mpu_freq_mhz"].get<double>();
        c.dsp_lanes = j["dsp_lanes"].get<std::int64_t>();
        c.dsp_freq_mhz = j["dsp_freq_mhz"].get<double>();
        c.sram_bw_bytes_per_cycle = j["sram_bw_bytes_per_cycle"].get<double>();
        c.dsp_regfile_bytes = j["dsp_regfile_bytes"].get<std::int64_t>();
        c.act_cycles_per_vector = j["act_cycles_per_vector"].get<std::map<std::string, double>>();
        c.bytes_per_elem = j["bytes_per_elem"].get<std::int64_t>();
        c.mpu_utilization = j["mpu_utilization"].get<double>();
        c.drain_fusion = j["drain_fusion"].get<bool>();
        c.sparsity_skip = j["sparsity_skip"].get<bool>();
    } catch (const ojson::exception& e) {
        config_error(e.what());
    }
    c.validate();
    return c;
}

CostConfig load_config(const std::string& path) { return config_from_json(io::read_text(path)); }

void save_config(const std::string& path, const CostConfig& c) { io::write_text(path, config_to_json(c) + "\n"); }

std::string config_hash(const CostConfig& c) {
    std::uint64_t h = 1469598103934665603ull; // FNV-1a
    for (unsigned char ch : config_to_json(c, -1)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double LatencyReport::share(const std::string& key) const {
    auto it = breakdown.find(key);
    return it == breakdown.end() ? 0.0 : it->second;
}

double LatencyReport::time_of(const std::string& key) const {
    double t = 0.0;
    for (const auto& n : nodes)
        if (n.kind == key) t += n.time_us;
    return t;
}

NodeCost cost_node(const OpGraph& g, const Node& n, const ShapeMap& shapes, const CostConfig& cfg) {
    NodeCost c;
    c.id = n.id;
    c.kind = node_key(n);
    c.engine = engine_of(n);
    if (c.engine == Engine::None) return c;

    const double bpe = static_cast<double>(cfg.bytes_per_elem);
    const double lanes = static_cast<double>(cfg.dsp_lanes);
    const double bw = cfg.sram_bw_bytes_per_cycle;
    const auto& out_shape = shapes[static_cast<std::size_t>(n.id)];
    const double out_elems = static_cast<double>(num_elements(out_shape));
    auto in_shape = [&](std::size_t k) -> const Shape& { return shapes[static_cast<std::size_t>(n.inputs[k])]; };
    auto in_elems = [&](std::size_t k) { return static_cast<double>(num_elements(in_shape(k))); };
    auto input_bytes = [&] {
        double b = 0.0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) b += in_elems(k) * bpe;
        return b;
    };
    auto rows = [](const Shape& s) { return static_cast<double>(s[0]); };
    auto cols = [](const Shape& s) { return s.size() == 2 ? static_cast<double>(s[1]) : 1.0; };
    const double mpu_rate = static_cast<double>(cfg.mpu_macs_per_cycle) * cfg.mpu_utilization;

    switch (n.kind) {
    case OpKind::MatMul:
    case OpKind::VecMat: {
        const auto &a = in_shape(0), &b = in_shape(1);
        double compute = ceil_div(rows(a) * cols(a) * cols(b), mpu_rate);
        double bytes = out_elems * bpe;
        double density = 1.0;
        for (std::size_t k = 0; k < 2; ++k) {
            const auto& src = g.node(n.inputs[k]);
            if (cfg.sparsity_skip && src.has("zvc_density")) {
                density = std::min(density, src.attr_real("zvc_density"));
                bytes += static_cast<double>(src.attr_int("zvc_bytes"));
            } else {
                bytes += in_elems(k) * bpe;
            }
        }
        c.compute_cycles = compute * density;
        c.bytes_moved = bytes;
        break;
    }
    case OpKind::Conv1d: {
        const auto& w = in_shape(1);
        c.compute_cycles = ceil_div(out_elems * rows(w), mpu_rate);
        c.bytes_moved = input_bytes() + out_elems * bpe;
        break;
    }
    case OpKind::CumSum: {
        const auto& s = in_shape(0);
        const double m = rows(s), w = cols(s);
        c.compute_cycles = m * ceil_div(w, lanes);
        const double chunk = std::max(1.0, ceil_div(w * bpe, static_cast<double>(cfg.dsp_regfile_bytes)));
        c.bytes_moved = chunk * (input_bytes() + out_elems * bpe);
        break;
    }
    case OpKind::ReduceSum: {
        const auto& s = in_shape(0);
        c.compute_cycles = rows(s) * ceil_div(cols(s), lanes);
        c.bytes_moved = input_bytes() + out_elems * bpe;
        break;
    }
    case OpKind::Activation:
        c.compute_cycles = ceil_div(out_elems, lanes) * cfg.act_cycles(n.attr_str("func"));
        c.bytes_moved = input_bytes() + out_elems * bpe;
        break;
    case OpKind::PluActivation:
        if (n.attr_bool("fused") && cfg.drain_fusion) break;
        c.compute_cycles = ceil_div(out_elems, lanes);
        c.bytes_moved = input_bytes() + out_elems * bpe;
        break;
    case OpKind::Exp:
    case OpKind::Power:
    case OpKind::Sqrt: {
        const char* key = n.kind == OpKind::Exp ? "exp" : n.kind == OpKind::Power ? "power" : "sqrt";
        c.compute_cycles = ceil_div(out_elems, lanes) * cfg.act_cycles(key);
        c.bytes_moved = input_bytes() + out_elems * bpe;
        break;
    }
    case OpKind::RMSNorm:
        // square-accumulate, rsqrt per row, scale
        c.compute_cycles = 2.0 * ceil_div(out_elems, lanes) + rows(out_shape) * cfg.act_cycles("sqrt");
        c.bytes_moved = input_bytes() + out_elems * bpe;
        break;
    case OpKind::Softmax:
        c.compute_cycles = ceil_div(out_elems, lanes) * (cfg.act_cycles("exp") + 2.0);
        c.bytes_moved = input_bytes() + out_elems * bpe;
        break;
    case OpKind::Gather:
    case OpKind::Transpose:
    case OpKind::Concat:
        c.compute_cycles = ceil_div(out_elems, lanes);
        c.bytes_moved = 2.0 * out_elems * bpe;
        break;
    case OpKind::Add:
    case OpKind::Multiply:
        c.compute_cycles = ceil_div(out_elems, lanes);
        c.bytes_moved = input_bytes() + out_elems * bpe;
        break;
    default:
        fail(ErrorCode::Unsupported, std::string("cost model: unsupported kind ") + to_string(n.kind));
    }
    c.memory_cycles = c.bytes_moved / bw;
    const double freq = c.engine == Engine::Dsp ? cfg.dsp_freq_mhz : cfg.mpu_freq_mhz;
    c.time_us = (c.compute_cycles + c.memory_cycles) / freq;
    return c;
}

LatencyReport cost_graph(const OpGraph& g, const std::vector<Shape>& input_shapes, const CostConfig& cfg) {
    cfg.validate();
    const auto shapes = infer_shapes(g, input_shapes);
    LatencyReport r;
    r.graph = g.name();
    r.config_hash = config_hash(cfg);
    if (auto it = g.metadata().find("passes"); it != g.metadata().end()) r.passes = it->second;
    for (auto e : {Engine::Mpu, Engine::Dsp, Engine::PluDrain}) r.engine_totals[to_string(e)] = 0.0;
    std::map<std::string, double> by_kind;
    for (const auto& n : g.nodes()) {
        auto c = cost_node(g, n, shapes, cfg);
        if (c.engine != Engine::None) {
            r.engine_totals[to_string(c.engine)] += c.time_us;
            by_kind[c.kind] += c.time_us;
        }
        r.nodes.push_back(std::move(c));
    }
    for (const auto& [e, t] : r.engine_totals) r.total_us += t;
    if (r.total_us > 0)
        for (const auto& [k, t] : by_kind) r.breakdown[k] = t / r.total_us;
    return r;
}

LatencyReport cost_graph(const OpGraph& g, const CostConfig& cfg) { return cost_graph(g, g.input_shapes(), cfg); }

double speedup(const LatencyReport& base, const LatencyReport& opt) {
    if (!(base.total_us > 0) || !(opt.total_us > 0))
        fail(ErrorCode::Numeric, "speedup: latency totals must be positive");
    return base.total_us / opt.total_us;
}

double tokens_per_second(const LatencyReport& decode, double tokens_per_step) {
    if (!(decode.total_us > 0)) fail(ErrorCode::Numeric, "tokens_per_second: zero latency");
    return tokens_per_step / (decode.total_us * 1e-6);
}

std::string report_to_json(const LatencyReport& r, int indent) {
    ojson j;
    j["graph"] = r.graph;
    j["config_hash"] = r.config_hash;
    j["passes"] = r.passes;
    j["total_us"] = r.total_us;
    ojson eng = ojson::object();
    for (const auto& [k, v] : r.engine_totals) eng[k] = v;
    j["engine_totals"] = std::move(eng);
    ojson nodes = ojson::array();
    for (const auto& n : r.nodes) {
        if (n.engine == Engine::None) continue;
        nodes.push_back({{"id", n.id},
                         {"kind", n.kind},
                         {"engine", to_string(n.engine)},
                         {"compute_cycles", n.compute_cycles},
                         {"memory_cycles", n.memory_cycles},
                         {"bytes_moved", n.bytes_moved},
                         {"time_us", n.time_us}});
    }
    j["nodes"] = std::move(nodes);
    ojson bd = ojson::object();
    for (const auto& [k, v] : r.breakdown) bd[k] = v;
    j["breakdown"] = std::move(bd);
    return j.dump(indent);
}

std::string report_to_csv(const LatencyReport& r) {
    std::string out = "id,kind,engine,compute_cycles,memory_cycles,bytes_moved,time_us\n";
    char buf[256];
    for (const auto& n : r.nodes) {
        if (n.engine == Engine::None) continue;
        std::snprintf(buf, sizeof buf, "%d,%s,%s,%.17g,%.17g,%.17g,%.17g\n", n.id, n.kind.c_str(), to_string(n.engine),
                      n.compute_cycles, n.memory_cycles, n.bytes_moved, n.time_us);
        out += buf;
    }
    return out;
}

} // namespace xamba::npusim
