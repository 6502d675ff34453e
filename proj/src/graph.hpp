// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "plu.hpp"
#include "tensor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace xamba {

enum class OpKind {
    Input,
    Const,
    MatMul,
    VecMat,
    Add,
    Multiply,
    CumSum,
    ReduceSum,
    Activation,
    PluActivation,
    Gather,
    Power,
    Sqrt,
    Exp,
    Transpose,
    Reshape,
    RMSNorm,
    Conv1d,
    Softmax,
    Concat,
};

const char* to_string(OpKind kind);
OpKind op_kind_from_string(const std::string& name);

using AttrValue = std::variant<bool, std::int64_t, double, std::string, std::vector<std::int64_t>>;
using Attrs = std::map<std::string, AttrValue>;

struct Node {
    int id = -1;
    OpKind kind = OpKind::Input;
    std::vector<int> inputs;
    Attrs attrs;
    std::shared_ptr<const Tensor> value; // Const only

    bool has(const std::string& key) const { return attrs.count(key) != 0; }
    std::int64_t attr_int(const std::string& key, std::int64_t fallback = 0) const;
    double attr_real(const std::string& key, double fallback = 0.0) const;
    std::string attr_str(const std::string& key, const std::string& fallback = {}) const;
    bool attr_bool(const std::string& key, bool fallback = false) const;
    std::vector<std::int64_t> attr_ints(const std::string& key) const;
};

// Census and latency-breakdown key: the op kind, with activations split by function.
std::string node_key(const Node& n);

enum class Engine { Mpu, Dsp, PluDrain, None };
const char* to_string(Engine e);
Engine engine_of(const Node& n);

// Operator graph; node ids equal their position, and inputs only reference earlier nodes.
class OpGraph {
public:
    explicit OpGraph(std::string name = "graph") : name_(std::move(name)) {}

    int add_node(OpKind kind, std::vector<int> inputs = {}, Attrs attrs = {});
    int add_input(const std::string& name, const Shape& shape);
    int add_const(Tensor value, Attrs attrs = {});
    int add_const(std::shared_ptr<const Tensor> value, Attrs attrs = {});
    void mark_output(int id);

    const std::string& name() const noexcept { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const Node& node(int id) const;
    Node& mutable_node(int id);
    const std::vector<int>& inputs() const noexcept { return inputs_; }
    const std::vector<int>& outputs() const noexcept { return outputs_; }
    void set_outputs(std::vector<int> outputs) { outputs_ = std::move(outputs); }
    std::size_t size() const noexcept { return nodes_.size(); }

    std::map<std::string, plu::PluTable>& tables() noexcept { return tables_; }
    const std::map<std::string, plu::PluTable>& tables() const noexcept { return tables_; }
    std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

    // Declared input shapes, in graph-input order.
    std::vector<Shape> input_shapes() const;

private:
    std::string name_;
    std::vector<Node> nodes_;
    std::vector<int> inputs_;
    std::vector<int> outputs_;
    std::map<std::string, plu::PluTable> tables_;
    std::map<std::string, std::string> metadata_;
};

using ShapeMap = std::vector<Shape>; // indexed by node id

// Shape of the elementwise result when `b` block-broadcasts against `a`: every operand
// dimension must divide the result dimension, and each element repeats over its block.
Shape broadcast_shape(const Shape& a, const Shape& b);
Tensor broadcast_binary(const Tensor& a, const Tensor& b, bool multiply);

ShapeMap infer_shapes(const OpGraph& g, const std::vector<Shape>& input_shapes);
ShapeMap infer_shapes(const OpGraph& g);

struct ExecOptions {
    // Unset: strict iff the graph's metadata has strict_finite = "true" (model builders set it).
    std::optional<bool> strict_finite;
};

std::vector<Tensor> execute(const OpGraph& g, const std::vector<Tensor>& inputs, ExecOptions opts = {});

std::map<std::string, int> census(const OpGraph& g);

// Deterministic JSON document; stable field order for golden comparisons.
std::string to_json(const OpGraph& g, int indent = -1);
OpGraph from_json(const std::string& text);
void save_json(const std::string& path, const OpGraph& g);
OpGraph load_json(const std::string& path);

} // namespace xamba
