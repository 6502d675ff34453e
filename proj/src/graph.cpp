// SPDX-License-Identifier: Apache-2.0
#include "graph.hpp"

#include "error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace xamba {

namespace {

struct KindInfo {
    OpKind kind;
    const char* name;
    int arity; // -1: variadic (>= 2)
};

constexpr std::array<KindInfo, 20> kKinds{{
    {OpKind::Input, "Input", 0},
    {OpKind::Const, "Const", 0},
    {OpKind::MatMul, "MatMul", 2},
    {OpKind::VecMat, "VecMat", 2},
    {OpKind::Add, "Add", 2},
    {OpKind::Multiply, "Multiply", 2},
    {OpKind::CumSum, "CumSum", 1},
    {OpKind::ReduceSum, "ReduceSum", 1},
    {OpKind::Activation, "Activation", 1},
    {OpKind::PluActivation, "PluActivation", 1},
    {OpKind::Gather, "Gather", 1},
    {OpKind::Power, "Power", 1},
    {OpKind::Sqrt, "Sqrt", 1},
    {OpKind::Exp, "Exp", 1},
    {OpKind::Transpose, "Transpose", 1},
    {OpKind::Reshape, "Reshape", 1},
    {OpKind::RMSNorm, "RMSNorm", 2},
    {OpKind::Conv1d, "Conv1d", 2},
    {OpKind::Softmax, "Softmax", 1},
    {OpKind::Concat, "Concat", -1},
}};

const KindInfo& info(OpKind k) { return kKinds[static_cast<std::size_t>(k)]; }

std::string where(const Node& n) { return std::string(to_string(n.kind)) + " node " + std::to_string(n.id); }

[[noreturn]] void shape_error(const Node& n, const std::string& msg) {
    fail(ErrorCode::Shape, "shape inference failed at " + where(n) + ": " + msg);
}

std::int64_t rows_of(const Shape& s) { return s[0]; }
std::int64_t cols_of(const Shape& s) { return s.size() == 2 ? s[1] : 1; }

} // namespace

const char* to_string(OpKind kind) { return info(kind).name; }

OpKind op_kind_from_string(const std::string& name) {
    for (const auto& k : kKinds)
        if (name == k.name) return k.kind;
    fail(ErrorCode::Parameter, "unknown op kind '" + name + "'");
}

std::int64_t Node::attr_int(const std::string& key, std::int64_t fallback) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) return fallback;
    if (auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
    if (auto* v = std::get_if<bool>(&it->second)) return *v ? 1 : 0;
    fail(ErrorCode::Parameter, where(*this) + ": attribute '" + key + "' is not an integer");
}

double Node::attr_real(const std::string& key, double fallback) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) return fallback;
    if (auto* v = std::get_if<double>(&it->second)) return *v;
    if (auto* v = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*v);
    fail(ErrorCode::Parameter, where(*this) + ": attribute '" + key + "' is not a number");
}

std::string Node::attr_str(const std::string& key, const std::string& fallback) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) return fallback;
    if (auto* v = std::get_if<std::string>(&it->second)) return *v;
    fail(ErrorCode::Parameter, where(*this) + ": attribute '" + key + "' is not a string");
}

bool Node::attr_bool(const std::string& key, bool fallback) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) return fallback;
    if (auto* v = std::get_if<bool>(&it->second)) return *v;
    fail(ErrorCode::Parameter, where(*this) + ": attribute '" + key + "' is not a boolean");
}

std::vector<std::int64_t> Node::attr_ints(const std::string& key) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) fail(ErrorCode::Parameter, where(*this) + ": missing attribute '" + key + "'");
    if (auto* v = std::get_if<std::vector<std::int64_t>>(&it->second)) return *v;
    fail(ErrorCode::Parameter, where(*this) + ": attribute '" + key + "' is not an integer list");
}

std::string node_key(const Node& n) {
    if (n.kind == OpKind::Activation) {
        const auto f = n.attr_str("func");
        if (f == "silu") return "SiLU";
        if (f == "softplus") return "Softplus";
        if (f == "sigmoid") return "Sigmoid";
        return "Activation:" + f;
    }
    if (n.kind == OpKind::PluActivation) return "PLU";
    return to_string(n.kind);
}

const char* to_string(Engine e) {
    switch (e) {
    case Engine::Mpu: return "MPU";
    case Engine::Dsp: return "DSP";
    case Engine::PluDrain: return "PLU";
    case Engine::None: return "none";
    }
    return "?";
}

Engine engine_of(const Node& n) {
    switch (n.kind) {
    case OpKind::Input:
    case OpKind::Const:
    case OpKind::Reshape: return Engine::None;
    case OpKind::PluActivation: return Engine::PluDrain;
    default: break;
    }
    const auto hint = n.attr_str("engine");
    if (hint == "mpu") return Engine::Mpu;
    if (hint == "dsp") return Engine::Dsp;
    if (n.kind == OpKind::MatMul || n.kind == OpKind::VecMat || n.kind == OpKind::Conv1d) return Engine::Mpu;
    return Engine::Dsp;
}

int OpGraph::add_node(OpKind kind, std::vector<int> inputs, Attrs attrs) {
    const auto& ki = info(kind);
    const int id = static_cast<int>(nodes_.size());
    const int n_in = static_cast<int>(inputs.size());
    if (ki.arity >= 0 ? n_in != ki.arity : n_in < 2)
        fail(ErrorCode::Parameter, std::string(ki.name) + " expects " +
                                       (ki.arity >= 0 ? std::to_string(ki.arity) : std::string("at least 2")) +
                                       " inputs, got " + std::to_string(n_in));
    for (int in : inputs)
        if (in < 0 || in >= id)
            fail(ErrorCode::Parameter, std::string(ki.name) + ": missing input node id " + std::to_string(in));
    if (kind == OpKind::CumSum || kind == OpKind::ReduceSum) {
        auto it = attrs.find("axis");
        if (it == attrs.end())
            attrs["axis"] = std::int64_t{0};
        else if (it->second != AttrValue{std::int64_t{0}})
            fail(ErrorCode::Parameter, std::string(ki.name) + ": only axis 0 is supported");
    }
    Node n;
    n.id = id;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.attrs = std::move(attrs);
    nodes_.push_back(std::move(n));
    if (kind == OpKind::Input) inputs_.push_back(id);
    return id;
}

int OpGraph::add_input(const std::string& name, const Shape& shape) {
    return add_node(OpKind::Input, {}, {{"name", name}, {"shape", std::vector<std::int64_t>(shape.begin(), shape.end())}});
}

int OpGraph::add_const(Tensor value, Attrs attrs) {
    return add_const(std::make_shared<const Tensor>(std::move(value)), std::move(attrs));
}

int OpGraph::add_const(std::shared_ptr<const Tensor> value, Attrs attrs) {
    if (!value) fail(ErrorCode::Parameter, "add_const: null tensor");
    const int id = add_node(OpKind::Const, {}, std::move(attrs));
    nodes_.back().value = std::move(value);
    return id;
}

void OpGraph::mark_output(int id) {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        fail(ErrorCode::Parameter, "mark_output: unknown node id " + std::to_string(id));
    outputs_.push_back(id);
}

const Node& OpGraph::node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) fail(ErrorCode::Parameter, "unknown node id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

Node& OpGraph::mutable_node(int id) {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) fail(ErrorCode::Parameter, "unknown node id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

std::vector<Shape> OpGraph::input_shapes() const {
    std::vector<Shape> out;
    for (int id : inputs_) {
        auto dims = node(id).attr_ints("shape");
        out.emplace_back(dims.begin(), dims.end());
    }
    return out;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    if (a == b) return a;
    const std::int64_t r = std::max(rows_of(a), rows_of(b)), c = std::max(cols_of(a), cols_of(b));
    for (const auto* s : {&a, &b})
        if (r % rows_of(*s) != 0 || c % cols_of(*s) != 0)
            fail(ErrorCode::Shape, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    return {r, c};
}

Tensor broadcast_binary(const Tensor& a, const Tensor& b, bool multiply) {
    Tensor out(broadcast_shape(a.shape(), b.shape()));
    const auto r = out.rows(), c = out.cols();
    const auto ar = r / a.rows(), ac = c / a.cols(), br = r / b.rows(), bc = c / b.cols();
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) {
            const float x = a[(i / ar) * a.cols() + j / ac];
            const float y = b[(i / br) * b.cols() + j / bc];
            out[i * c + j] = multiply ? x * y : x + y;
        }
    return out;
}

namespace {

Shape infer_node(const OpGraph& g, const Node& n, const ShapeMap& shapes) {
    auto in = [&](std::size_t k) -> const Shape& { return shapes[static_cast<std::size_t>(n.inputs[k])]; };
    switch (n.kind) {
    case OpKind::Input:
    case OpKind::Const: break; // handled by caller
    case OpKind::MatMul: {
        const auto &a = in(0), &b = in(1);
        if (a.size() != 2 || b.size() != 2 || a[1] != b[0])
            shape_error(n, "MatMul of " + shape_str(a) + " and " + shape_str(b));
        return {a[0], b[1]};
    }
    case OpKind::VecMat: {
        const auto &v = in(0), &x = in(1);
        if (v.size() != 2 || x.size() != 2 || v[0] != 1 || v[1] != x[0])
            shape_error(n, "VecMat of " + shape_str(v) + " and " + shape_str(x));
        return {1, x[1]};
    }
    case OpKind::Add:
    case OpKind::Multiply:
        try {
            return broadcast_shape(in(0), in(1));
        } catch (const Error& e) {
            shape_error(n, e.what());
        }
    case OpKind::CumSum:
    case OpKind::ReduceSum: {
        if (n.attr_int("axis") != 0) shape_error(n, "only axis 0 is supported");
        if (n.kind == OpKind::CumSum) return in(0);
        return in(0).size() == 2 ? Shape{1, in(0)[1]} : Shape{1};
    }
    case OpKind::Activation:
    case OpKind::PluActivation:
    case OpKind::Power:
    case OpKind::Sqrt:
    case OpKind::Exp:
    case OpKind::Softmax: return in(0);
    case OpKind::Gather: {
        const auto axis = n.attr_int("axis");
        const auto idx = n.attr_ints("indices");
        const auto& s = in(0);
        if (axis != 0 && !(axis == 1 && s.size() == 2)) shape_error(n, "bad gather axis");
        if (idx.empty()) shape_error(n, "empty gather indices");
        const auto extent = s[static_cast<std::size_t>(axis)];
        for (auto i : idx)
            if (i < 0 || i >= extent) shape_error(n, "gather index " + std::to_string(i) + " out of range");
        Shape out = s;
        out[static_cast<std::size_t>(axis)] = static_cast<std::int64_t>(idx.size());
        return out;
    }
    case OpKind::Transpose: return {cols_of(in(0)), rows_of(in(0))};
    case OpKind::Reshape: {
        auto dims = n.attr_ints("shape");
        Shape out(dims.begin(), dims.end());
        if (out.empty() || out.size() > 2 || num_elements(out) != num_elements(in(0)))
            shape_error(n, "reshape " + shape_str(in(0)) + " -> " + shape_str(out));
        return out;
    }
    case OpKind::RMSNorm: {
        if (in(0).size() != 2 || in(1) != Shape{1, in(0)[1]}) shape_error(n, "RMSNorm weight must be [1,n]");
        return in(0);
    }
    case OpKind::Conv1d: {
        const auto &x = in(0), &w = in(1);
        if (x.size() != 2 || w.size() != 2 || w[1] != x[1] || w[0] != n.attr_int("kernel"))
            shape_error(n, "Conv1d of " + shape_str(x) + " with weight " + shape_str(w));
        if (!n.attr_bool("valid")) return x;
        if (x[0] < w[0]) shape_error(n, "valid Conv1d needs at least kernel rows");
        return {x[0] - w[0] + 1, x[1]};
    }
    case OpKind::Concat: {
        const auto axis = n.attr_int("axis");
        if (axis != 0 && axis != 1) shape_error(n, "bad concat axis");
        Shape out = in(0);
        if (out.size() != 2) shape_error(n, "Concat needs rank-2 inputs");
        for (std::size_t k = 1; k < n.inputs.size(); ++k) {
            const auto& s = in(k);
            if (s.size() != 2 || s[1 - axis] != out[static_cast<std::size_t>(1 - axis)])
                shape_error(n, "Concat of " + shape_str(out) + " and " + shape_str(s));
            out[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
        }
        return out;
    }
    }
    (void)g;
    shape_error(n, "unhandled kind");
}

} // namespace

ShapeMap infer_shapes(const OpGraph& g, const std::vector<Shape>& input_shapes) {
    if (input_shapes.size() != g.inputs().size())
        fail(ErrorCode::Shape, "infer_shapes: expected " + std::to_string(g.inputs().size()) + " input shapes, got " +
                                   std::to_string(input_shapes.size()));
    ShapeMap shapes(g.size());
    std::size_t next_input = 0;
    for (const auto& n : g.nodes()) {
        auto& s = shapes[static_cast<std::size_t>(n.id)];
        if (n.kind == OpKind::Input) {
            s = input_shapes[next_input++];
            if (s.empty() || s.size() > 2) shape_error(n, "input rank must be 1 or 2");
        } else if (n.kind == OpKind::Const) {
            if (!n.value) shape_error(n, "Const without value");
            s = n.value->shape();
        } else {
            s = infer_node(g, n, shapes);
        }
    }
    return shapes;
}

ShapeMap infer_shapes(const OpGraph& g) { return infer_shapes(g, g.input_shapes()); }

namespace {

// Depthwise; causal mode left-pads with k-1 zero rows, valid mode does not pad.
Tensor conv1d(const Tensor& x, const Tensor& w, bool valid) {
    const auto ch = x.cols(), k = w.rows();
    const auto len = valid ? x.rows() - k + 1 : x.rows();
    const auto shift = valid ? 0 : k - 1;
    Tensor out({len, ch});
    for (std::int64_t t = 0; t < len; ++t)
        for (std::int64_t c = 0; c < ch; ++c) {
            float acc = 0.0f;
            for (std::int64_t j = 0; j < k; ++j) {
                const auto src = t - shift + j;
                if (src >= 0) acc += w(j, c) * x(src, c);
            }
            out(t, c) = acc;
        }
    return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& w, float eps) {
    Tensor out = x;
    for (std::int64_t i = 0; i < x.rows(); ++i) {
        float ss = 0.0f;
        for (std::int64_t j = 0; j < x.cols(); ++j) ss += x(i, j) * x(i, j);
        const float scale = 1.0f / std::sqrt(ss / static_cast<float>(x.cols()) + eps);
        for (std::int64_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) * scale * w(0, j);
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    Tensor out = x;
    for (std::int64_t i = 0; i < x.rows(); ++i) {
        float mx = x(i, 0);
        for (std::int64_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
        float sum = 0.0f;
        for (std::int64_t j = 0; j < x.cols(); ++j) sum += (out(i, j) = std::exp(x(i, j) - mx));
        for (std::int64_t j = 0; j < x.cols(); ++j) out(i, j) /= sum;
    }
    return out;
}

Tensor gather(const Tensor& x, int axis, const std::vector<std::int64_t>& idx, const Shape& out_shape) {
    Tensor out(out_shape);
    if (axis == 0) {
        const auto c = x.cols();
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::int64_t>(r) * c + j] = x(idx[r], j);
    } else {
        for (std::int64_t i = 0; i < x.rows(); ++i)
            for (std::size_t k = 0; k < idx.size(); ++k) out(i, static_cast<std::int64_t>(k)) = x(i, idx[k]);
    }
    return out;
}

Tensor concat(const std::vector<const Tensor*>& parts, int axis, const Shape& out_shape) {
    Tensor out(out_shape);
    std::int64_t offset = 0;
    for (const auto* p : parts) {
        for (std::int64_t i = 0; i < p->rows(); ++i)
            for (std::int64_t j = 0; j < p->cols(); ++j) {
                if (axis == 0)
                    out(offset + i, j) = (*p)(i, j);
                else
                    out(i, offset + j) = (*p)(i, j);
            }
        offset += axis == 0 ? p->rows() : p->cols();
    }
    return out;
}

Tensor as_column(const Tensor& x) { return x.rank() == 1 ? x.reshaped({x.rows(), 1}) : x; }

} // namespace

std::vector<Tensor> execute(const OpGraph& g, const std::vector<Tensor>& inputs, ExecOptions opts) {
    std::vector<Shape> in_shapes;
    for (const auto& t : inputs) in_shapes.push_back(t.shape());
    const auto declared = g.input_shapes();
    if (in_shapes != declared)
        fail(ErrorCode::Shape, "execute: input shapes do not match the graph's declared inputs");
    const auto shapes = infer_shapes(g, in_shapes);
    const auto flag = g.metadata().find("strict_finite");
    const bool strict =
        opts.strict_finite.value_or(flag != g.metadata().end() && flag->second == "true");

    // Release intermediates after their last consumer.
    std::vector<int> uses(g.size(), 0);
    for (const auto& n : g.nodes())
        for (int in : n.inputs) ++uses[static_cast<std::size_t>(in)];
    for (int o : g.outputs()) ++uses[static_cast<std::size_t>(o)];

    std::vector<std::shared_ptr<const Tensor>> vals(g.size());
    std::size_t next_input = 0;
    for (const auto& n : g.nodes()) {
        auto arg = [&](std::size_t k) -> const Tensor& { return *vals[static_cast<std::size_t>(n.inputs[k])]; };
        const auto& shape = shapes[static_cast<std::size_t>(n.id)];
        std::shared_ptr<const Tensor> result;
        auto make = [](Tensor t) { return std::make_shared<const Tensor>(std::move(t)); };
        switch (n.kind) {
        case OpKind::Input: result = make(inputs[next_input++]); break;
        case OpKind::Const: result = n.value; break;
        case OpKind::MatMul: result = make(matmul(arg(0), arg(1))); break;
        case OpKind::VecMat: result = make(vecmat(arg(0), arg(1))); break;
        case OpKind::Add: result = make(broadcast_binary(arg(0), arg(1), false)); break;
        case OpKind::Multiply: result = make(broadcast_binary(arg(0), arg(1), true)); break;
        case OpKind::CumSum: result = make(cumsum_ref(as_column(arg(0))).reshaped(shape)); break;
        case OpKind::ReduceSum: result = make(reducesum_ref(as_column(arg(0))).reshaped(shape)); break;
        case OpKind::Activation:
            result = make(activation(arg(0), activation_from_string(n.attr_str("func")),
                                     static_cast<float>(n.attr_real("beta", 1.0))));
            break;
        case OpKind::PluActivation: {
            const auto id = n.attr_str("table");
            auto it = g.tables().find(id);
            if (it == g.tables().end())
                fail(ErrorCode::Parameter, where(n) + ": unknown PLU table '" + id + "'");
            result = make(plu::eval(it->second, arg(0)));
            break;
        }
        case OpKind::Gather:
            result = make(gather(arg(0), static_cast<int>(n.attr_int("axis")), n.attr_ints("indices"), shape));
            break;
        case OpKind::Power: {
            Tensor t = arg(0);
            const auto e = static_cast<float>(n.attr_real("exponent", 1.0));
            for (auto& v : t.data()) v = e == 2.0f ? v * v : std::pow(v, e);
            result = make(std::move(t));
            break;
        }
        case OpKind::Sqrt: {
            Tensor t = arg(0);
            for (auto& v : t.data()) v = std::sqrt(v);
            result = make(std::move(t));
            break;
        }
        case OpKind::Exp: result = make(activation(arg(0), ActivationKind::Exp)); break;
        case OpKind::Transpose: result = make(transpose(arg(0))); break;
        case OpKind::Reshape: result = make(arg(0).reshaped(shape)); break;
        case OpKind::RMSNorm:
            result = make(rmsnorm(arg(0), arg(1), static_cast<float>(n.attr_real("eps", 1e-5))));
            break;
        case OpKind::Conv1d: result = make(conv1d(arg(0), arg(1), n.attr_bool("valid"))); break;
        case OpKind::Softmax: result = make(softmax_rows(as_column(arg(0))).reshaped(shape)); break;
        case OpKind::Concat: {
            std::vector<const Tensor*> parts;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) parts.push_back(&arg(k));
            result = make(concat(parts, static_cast<int>(n.attr_int("axis")), shape));
            break;
        }
        }
        if (strict && !result->all_finite())
            fail(ErrorCode::Numeric, "non-finite value produced by " + where(n));
        vals[static_cast<std::size_t>(n.id)] = std::move(result);
        for (int in : n.inputs)
            if (--uses[static_cast<std::size_t>(in)] == 0) vals[static_cast<std::size_t>(in)].reset();
    }

    std::vector<Tensor> out;
    for (int o : g.outputs()) out.push_back(*vals[static_cast<std::size_t>(o)]);
    return out;
}

std::map<std::string, int> census(const OpGraph& g) {
    std::map<std::string, int> c;
    for (const auto& n : g.nodes())
        if (n.kind != OpKind::Input && n.kind != OpKind::Const) ++c[node_key(n)];
    return c;
}

} // namespace xamba
