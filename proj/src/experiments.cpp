// SPDX-License-Identifier: Apache-2.0
#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <set>

namespace xamba::experiments {

using models::Mode;
using models::Variant;

OpGraph GraphSet::rewritten(const std::vector<std::string>& names) const {
    static const auto tables = passes::default_tables();
    return passes::apply_passes(base, names, tables);
}

GraphSet make_graph_set(Variant v, Mode mode, std::uint64_t seed) {
    GraphSet s;
    s.cfg = models::default_config(v);
    s.mode = mode;
    s.base = models::build_block(s.cfg, models::init_params(s.cfg, seed), mode);
    return s;
}

namespace {

struct Scenarios {
    OpGraph m2_base, m2_cumba, m2_reduba, m2_both;
    OpGraph m_base, m_softplus, m_silu, m_actiba;
    OpGraph md_base, md_actiba;
};

const Scenarios& scenarios(std::uint64_t seed) {
    static std::mutex mu;
    static std::map<std::uint64_t, std::unique_ptr<Scenarios>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[seed];
    if (!slot) {
        auto s = std::make_unique<Scenarios>();
        const auto m2 = make_graph_set(Variant::Mamba2, Mode::Prefill, seed);
        s->m2_base = m2.base;
        s->m2_cumba = m2.rewritten({"cumba"});
        s->m2_reduba = m2.rewritten({"reduba"});
        s->m2_both = m2.rewritten({"cumba", "reduba"});
        const auto m = make_graph_set(Variant::Mamba, Mode::Prefill, seed);
        s->m_base = m.base;
        s->m_softplus = m.rewritten({"actiba:softplus"});
        s->m_silu = m.rewritten({"actiba:silu"});
        s->m_actiba = m.rewritten({"actiba"});
        const auto md = make_graph_set(Variant::Mamba, Mode::Decode, seed);
        s->md_base = md.base;
        s->md_actiba = md.rewritten({"actiba"});
        slot = std::move(s);
    }
    return *slot;
}

} // namespace

const std::vector<Target>& ratio_targets() {
    static const std::vector<Target> t{
        {"mamba2 cumba speedup", 1.8, &Observations::mamba2_cumba},
        {"mamba2 reduba speedup", 1.1, &Observations::mamba2_reduba},
        {"mamba2 cumba+reduba speedup", 2.3, &Observations::mamba2_cumba_reduba},
        {"mamba softplus-plu speedup", 1.2, &Observations::mamba_softplus},
        {"mamba silu-plu speedup", 1.8, &Observations::mamba_silu},
        {"mamba actiba speedup", 2.6, &Observations::mamba_actiba},
        {"mamba decode tokens/s ratio", 2.6, &Observations::mamba_decode_tps_ratio},
    };
    return t;
}

Observations observe(const npusim::CostConfig& cfg, std::uint64_t seed) {
    const auto& s = scenarios(seed);
    auto cost = [&](const OpGraph& g) { return npusim::cost_graph(g, cfg); };
    Observations o;
    const auto m2 = cost(s.m2_base);
    o.mamba2_cumba = npusim::speedup(m2, cost(s.m2_cumba));
    o.mamba2_reduba = npusim::speedup(m2, cost(s.m2_reduba));
    o.mamba2_cumba_reduba = npusim::speedup(m2, cost(s.m2_both));
    o.mamba2_cumsum_share = m2.share("CumSum");

    const auto shapes = infer_shapes(s.m2_base);
    double dominant = 0.0, all = 0.0;
    for (const auto& nc : m2.nodes) {
        const auto& n = s.m2_base.node(nc.id);
        if (n.kind != OpKind::CumSum) continue;
        all += nc.time_us;
        const auto& in = shapes[static_cast<std::size_t>(n.inputs[0])];
        if (in.size() == 2 && in[0] == in[1] && in[0] > 2) dominant += nc.time_us;
    }
    o.mamba2_dominant_cumsum_fraction = all > 0 ? dominant / all : 0.0;

    const auto m = cost(s.m_base);
    o.mamba_softplus = npusim::speedup(m, cost(s.m_softplus));
    o.mamba_silu = npusim::speedup(m, cost(s.m_silu));
    o.mamba_actiba = npusim::speedup(m, cost(s.m_actiba));
    double other = 0.0;
    for (const auto& [k, v] : m.breakdown)
        if (k != "SiLU" && k != "Softplus") other = std::max(other, v);
    o.mamba_activation_margin = std::min(m.share("SiLU"), m.share("Softplus")) - other;
    o.mamba_top2_are_activations = o.mamba_activation_margin > 0;

    o.mamba_decode_tps_ratio =
        npusim::tokens_per_second(cost(s.md_actiba)) / npusim::tokens_per_second(cost(s.md_base));
    return o;
}

double max_relative_error(const Observations& o) {
    double worst = 0.0;
    for (const auto& t : ratio_targets()) worst = std::max(worst, std::fabs(o.*t.field / t.value - 1.0));
    return worst;
}

std::string bench_csv(const npusim::CostConfig& cfg, std::uint64_t seed) {
    static const std::vector<std::pair<const char*, std::vector<std::string>>> pass_sets{
        {"none", {}},
        {"cumba", {"cumba"}},
        {"reduba", {"reduba"}},
        {"cumba+reduba", {"cumba", "reduba"}},
        {"all", {"cumba", "reduba", "actiba"}},
    };
    struct Row {
        std::string model, passes;
        npusim::LatencyReport report;
        double speedup;
    };
    std::vector<Row> rows;
    std::set<std::string> kinds;
    for (auto v : {Variant::Mamba, Variant::Mamba2}) {
        const auto set = make_graph_set(v, Mode::Prefill, seed);
        const auto base = npusim::cost_graph(set.base, cfg);
        for (const auto& [label, names] : pass_sets) {
            auto r = names.empty() ? base : npusim::cost_graph(set.rewritten(names), cfg);
            for (const auto& [k, share] : r.breakdown) kinds.insert(k);
            const double sp = npusim::speedup(base, r);
            rows.push_back({models::to_string(v), label, std::move(r), sp});
        }
    }
    std::string out = "model,passes,total_us,speedup";
    for (const auto& k : kinds) out += ",share_" + k;
    out += "\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, ",%.9g,%.6f", row.report.total_us, row.speedup);
        out += row.model + "," + row.passes + buf;
        for (const auto& k : kinds) {
            std::snprintf(buf, sizeof buf, ",%.9f", row.report.share(k));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

} // namespace xamba::experiments
