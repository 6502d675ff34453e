// SPDX-License-Identifier: Apache-2.0
#include "passes.hpp"

#include "error.hpp"
#include "zvc.hpp"

#include <cmath>
#include <filesystem>
#include <mutex>
#include <random>
#include <sstream>

namespace xamba::passes {

namespace {

std::mutex g_mask_mu;
std::map<std::int64_t, std::shared_ptr<const Tensor>> g_cumba_cache;
std::map<std::int64_t, std::shared_ptr<const Tensor>> g_reduba_cache;

// Copies nodes into a fresh graph while tracking old -> new ids.
class Rebuilder {
public:
    explicit Rebuilder(const OpGraph& src) : src_(src), dst_(src.name()), remap_(src.size(), -1) {
        dst_.metadata() = src.metadata();
        dst_.tables() = src.tables();
    }

    OpGraph& dst() { return dst_; }
    int mapped(int old_id) const { return remap_[static_cast<std::size_t>(old_id)]; }
    void bind(int old_id, int new_id) { remap_[static_cast<std::size_t>(old_id)] = new_id; }

    std::vector<int> mapped_inputs(const Node& n) const {
        std::vector<int> ins;
        for (int i : n.inputs) ins.push_back(mapped(i));
        return ins;
    }

    void copy(const Node& n) {
        bind(n.id, n.kind == OpKind::Const ? dst_.add_const(n.value, n.attrs)
                                           : dst_.add_node(n.kind, mapped_inputs(n), n.attrs));
    }

    OpGraph finish(const std::string& pass) {
        std::vector<int> outs;
        for (int o : src_.outputs()) outs.push_back(mapped(o));
        dst_.set_outputs(std::move(outs));
        auto& p = dst_.metadata()["passes"];
        p = p.empty() ? pass : p + "," + pass;
        return std::move(dst_);
    }

private:
    const OpGraph& src_;
    OpGraph dst_;
    std::vector<int> remap_;
};

void require_axis0(const Node& n) {
    if (n.attr_int("axis") != 0)
        fail(ErrorCode::Unsupported, std::string("unsupported rewrite: ") + to_string(n.kind) + " node " +
                                         std::to_string(n.id) + " reduces along axis " +
                                         std::to_string(n.attr_int("axis")));
}

// Rank-1 operands are handled in their [n, 1] column form.
int as_column(OpGraph& g, int id, const Shape& s) {
    return s.size() == 1 ? g.add_node(OpKind::Reshape, {id}, {{"shape", std::vector<std::int64_t>{s[0], 1}}}) : id;
}

int restore_rank(OpGraph& g, int id, const Shape& out) {
    return out.size() == 1 ? g.add_node(OpKind::Reshape, {id}, {{"shape", std::vector<std::int64_t>(out)}}) : id;
}

} // namespace

std::shared_ptr<const Tensor> cumba_mask(std::int64_t m) {
    if (m < 1) fail(ErrorCode::Parameter, "cumba_mask: size must be positive");
    std::lock_guard lock(g_mask_mu);
    auto& slot = g_cumba_cache[m];
    if (!slot) {
        Tensor t({m, m});
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j <= i; ++j) t(i, j) = 1.0f;
        slot = std::make_shared<const Tensor>(std::move(t));
    }
    return slot;
}

std::shared_ptr<const Tensor> reduba_mask(std::int64_t m) {
    if (m < 1) fail(ErrorCode::Parameter, "reduba_mask: size must be positive");
    std::lock_guard lock(g_mask_mu);
    auto& slot = g_reduba_cache[m];
    if (!slot) slot = std::make_shared<const Tensor>(Tensor::ones(1, m));
    return slot;
}

OpGraph apply_cumba(const OpGraph& g) {
    const auto shapes = infer_shapes(g);
    Rebuilder rb(g);
    for (const auto& n : g.nodes()) {
        if (n.kind != OpKind::CumSum) {
            rb.copy(n);
            continue;
        }
        require_axis0(n);
        auto& dst = rb.dst();
        const auto& in_shape = shapes[static_cast<std::size_t>(n.inputs[0])];
        const auto m = in_shape[0];
        auto mask = cumba_mask(m);
        const auto z = zvc::compress(*mask, zvc::ValueWidth::Bits32);
        // Mask values are all ones, so the bitmap alone encodes it.
        const int c = dst.add_const(mask, {{"role", std::string("mask")},
                                           {"mask", std::string("cumba")},
                                           {"m", m},
                                           {"zvc_density", zvc::density(z)},
                                           {"zvc_bytes", static_cast<std::int64_t>(z.bitmap.size())}});
        const int x = as_column(dst, rb.mapped(n.inputs[0]), in_shape);
        const int mm = dst.add_node(OpKind::MatMul, {c, x});
        rb.bind(n.id, restore_rank(dst, mm, shapes[static_cast<std::size_t>(n.id)]));
    }
    return rb.finish("cumba");
}

OpGraph apply_reduba(const OpGraph& g) {
    const auto shapes = infer_shapes(g);
    Rebuilder rb(g);
    std::map<std::int64_t, int> shared;
    for (const auto& n : g.nodes()) {
        if (n.kind != OpKind::ReduceSum) {
            rb.copy(n);
            continue;
        }
        require_axis0(n);
        auto& dst = rb.dst();
        const auto& in_shape = shapes[static_cast<std::size_t>(n.inputs[0])];
        const auto m = in_shape[0];
        auto it = shared.find(m);
        if (it == shared.end())
            it = shared
                     .emplace(m, dst.add_const(reduba_mask(m), {{"role", std::string("mask")},
                                                                {"mask", std::string("reduba")},
                                                                {"m", m}}))
                     .first;
        const int x = as_column(dst, rb.mapped(n.inputs[0]), in_shape);
        const int vm = dst.add_node(OpKind::VecMat, {it->second, x});
        rb.bind(n.id, restore_rank(dst, vm, shapes[static_cast<std::size_t>(n.id)]));
    }
    return rb.finish("reduba");
}

OpGraph apply_actiba(const OpGraph& g, const TableSet& tables, const std::set<plu::Func>& funcs) {
    infer_shapes(g);
    Rebuilder rb(g);
    std::vector<std::string> unfused;
    for (const auto& n : g.nodes()) {
        if (n.kind != OpKind::Activation) {
            rb.copy(n);
            continue;
        }
        const auto fname = n.attr_str("func");
        if (fname != "silu" && fname != "softplus") {
            rb.copy(n);
            continue;
        }
        const auto func = plu::func_from_string(fname);
        if (!funcs.count(func)) {
            rb.copy(n);
            continue;
        }
        auto it = tables.find(func);
        if (it == tables.end())
            fail(ErrorCode::Parameter, std::string("actiba: no PLU table for ") + plu::to_string(func) +
                                           " (needed by node " + std::to_string(n.id) + ")");
        const double beta = n.attr_real("beta", 1.0);
        if (func == plu::Func::Softplus && std::fabs(beta - it->second.beta) > 1e-6)
            fail(ErrorCode::Parameter, "actiba: softplus table beta " + std::to_string(it->second.beta) +
                                           " does not match node beta " + std::to_string(beta));
        const std::string table_id = plu::to_string(func);
        auto& dst = rb.dst();
        dst.tables()[table_id] = it->second;
        const bool fused = engine_of(g.node(n.inputs[0])) == Engine::Mpu;
        if (!fused) unfused.push_back(std::to_string(n.id));
        rb.bind(n.id, dst.add_node(OpKind::PluActivation, {rb.mapped(n.inputs[0])},
                                   {{"table", table_id}, {"fused", fused}}));
    }
    if (!unfused.empty()) {
        std::string ids;
        for (const auto& s : unfused) ids += (ids.empty() ? "" : ",") + s;
        rb.dst().metadata()["warning.actiba_unfused"] = "activation nodes " + ids + " have a non-MPU producer";
    }
    std::string name = "actiba";
    if (funcs.size() == 1) name += std::string(":") + plu::to_string(*funcs.begin());
    return rb.finish(name);
}

std::vector<std::string> parse_pass_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
        if (item != "cumba" && item != "reduba" && item != "actiba" && item != "actiba:silu" &&
            item != "actiba:softplus")
            fail(ErrorCode::Parameter, "unknown pass '" + item + "'");
        out.push_back(item);
    }
    return out;
}

OpGraph apply_passes(const OpGraph& g, const std::vector<std::string>& names, const TableSet& tables) {
    OpGraph cur = g;
    for (const auto& name : names) {
        if (name == "cumba")
            cur = apply_cumba(cur);
        else if (name == "reduba")
            cur = apply_reduba(cur);
        else if (name == "actiba")
            cur = apply_actiba(cur, tables);
        else if (name == "actiba:silu")
            cur = apply_actiba(cur, tables, {plu::Func::Silu});
        else if (name == "actiba:softplus")
            cur = apply_actiba(cur, tables, {plu::Func::Softplus});
        else
            fail(ErrorCode::Parameter, "unknown pass '" + name + "'");
    }
    return cur;
}

TableSet default_tables() {
    return {{plu::Func::Silu, plu::fit_uniform(plu::Func::Silu, 1.0f, -8.0f, 8.0f, 64)},
            {plu::Func::Softplus, plu::fit_uniform(plu::Func::Softplus, 1.0f, -8.0f, 8.0f, 64)}};
}

TableSet load_table_dir(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Io, "table directory '" + dir + "' not found");
    TableSet t;
    for (auto f : {plu::Func::Silu, plu::Func::Softplus}) {
        const auto path = std::filesystem::path(dir) / (std::string(plu::to_string(f)) + ".clut");
        if (!std::filesystem::exists(path)) continue;
        auto table = plu::load(path.string());
        if (table.func != f) fail(ErrorCode::Format, path.string() + ": table function does not match file name");
        t[f] = std::move(table);
    }
    return t;
}

std::vector<Tensor> random_inputs(const OpGraph& g, std::uint64_t seed, double lo, double hi, bool integer) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> out;
    for (const auto& s : g.input_shapes()) {
        Tensor t(s);
        if (integer) {
            std::uniform_int_distribution<int> d(static_cast<int>(std::ceil(lo)), static_cast<int>(std::floor(hi)));
            for (auto& v : t.data()) v = static_cast<float>(d(rng));
        } else {
            std::uniform_real_distribution<double> d(lo, hi);
            for (auto& v : t.data()) v = static_cast<float>(d(rng));
        }
        out.push_back(std::move(t));
    }
    return out;
}

EquivalenceReport check_equivalence(const OpGraph& a, const OpGraph& b, const EquivalenceOptions& opts) {
    if (a.input_shapes() != b.input_shapes() || a.outputs().size() != b.outputs().size())
        fail(ErrorCode::Signature, "check_equivalence: graphs have different input/output signatures");
    const auto sa = infer_shapes(a), sb = infer_shapes(b);
    for (std::size_t k = 0; k < a.outputs().size(); ++k)
        if (sa[static_cast<std::size_t>(a.outputs()[k])] != sb[static_cast<std::size_t>(b.outputs()[k])])
            fail(ErrorCode::Signature, "check_equivalence: output " + std::to_string(k) + " shapes differ");
    if (opts.samples < 1) fail(ErrorCode::Parameter, "check_equivalence: need at least one sample");

    EquivalenceReport rep;
    std::mt19937_64 seeder(opts.seed);
    for (int s = 0; s < opts.samples; ++s) {
        const auto inputs = random_inputs(a, seeder(), opts.lo, opts.hi, opts.integer_inputs);
        const auto ya = execute(a, inputs), yb = execute(b, inputs);
        for (std::size_t k = 0; k < ya.size(); ++k) {
            const auto r = allclose(yb[k], ya[k], opts.rtol, opts.atol);
            if (!r.passed) rep.passed = false;
            if (rep.worst_output < 0 || r.max_abs_diff > rep.max_abs_diff) {
                rep.max_abs_diff = r.max_abs_diff;
                rep.worst_output = static_cast<int>(k);
                rep.worst_index = r.worst_index;
            }
        }
        ++rep.samples;
    }
    return rep;
}

} // namespace xamba::passes
