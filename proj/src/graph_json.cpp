// SPDX-License-Identifier: Apache-2.0
#include "byte_io.hpp"
#include "error.hpp"
#include "graph.hpp"

#include <json.hpp>

namespace xamba {

using ojson = nlohmann::ordered_json;

namespace {

ojson attr_to_json(const AttrValue& v) {
    return std::visit([](const auto& x) { return ojson(x); }, v);
}

AttrValue attr_from_json(const std::string& key, const ojson& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    if (j.is_array()) return j.get<std::vector<std::int64_t>>();
    fail(ErrorCode::Format, "graph json: attribute '" + key + "' has unsupported type");
}

ojson table_to_json(const plu::PluTable& t) {
    ojson j;
    j["func"] = plu::to_string(t.func);
    j["beta"] = t.beta;
    j["breakpoints"] = t.breakpoints;
    j["slopes"] = t.slopes;
    j["intercepts"] = t.intercepts;
    j["left_ext"] = {t.left_ext.slope, t.left_ext.intercept};
    j["right_ext"] = {t.right_ext.slope, t.right_ext.intercept};
    return j;
}

plu::PluTable table_from_json(const ojson& j) {
    plu::PluTable t;
    t.func = plu::func_from_string(j.at("func").get<std::string>());
    t.beta = j.at("beta").get<float>();
    t.breakpoints = j.at("breakpoints").get<std::vector<float>>();
    t.slopes = j.at("slopes").get<std::vector<float>>();
    t.intercepts = j.at("intercepts").get<std::vector<float>>();
    const auto l = j.at("left_ext").get<std::vector<float>>(), r = j.at("right_ext").get<std::vector<float>>();
    if (l.size() != 2 || r.size() != 2) fail(ErrorCode::Format, "graph json: bad PLU extension");
    t.left_ext = {l[0], l[1]};
    t.right_ext = {r[0], r[1]};
    plu::validate(t);
    return t;
}

} // namespace

std::string to_json(const OpGraph& g, int indent) {
    ojson doc;
    doc["name"] = g.name();
    ojson nodes = ojson::array();
    for (const auto& n : g.nodes()) {
        ojson jn;
        jn["id"] = n.id;
        jn["kind"] = to_string(n.kind);
        ojson attrs = ojson::object();
        for (const auto& [k, v] : n.attrs) attrs[k] = attr_to_json(v);
        if (n.value) {
            const auto& t = *n.value;
            attrs["value"] = {{"shape", t.shape()}, {"data", std::vector<float>(t.data().begin(), t.data().end())}};
        }
        jn["attrs"] = std::move(attrs);
        jn["inputs"] = n.inputs;
        nodes.push_back(std::move(jn));
    }
    doc["nodes"] = std::move(nodes);
    doc["inputs"] = g.inputs();
    doc["outputs"] = g.outputs();
    ojson meta = ojson::object();
    for (const auto& [k, v] : g.metadata()) meta[k] = v;
    doc["metadata"] = std::move(meta);
    ojson tables = ojson::object();
    for (const auto& [k, t] : g.tables()) tables[k] = table_to_json(t);
    doc["tables"] = std::move(tables);
    return doc.dump(indent);
}

OpGraph from_json(const std::string& text) {
    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const ojson::parse_error& e) {
        fail(ErrorCode::Format, std::string("graph json: ") + e.what());
    }
    try {
        OpGraph g(doc.value("name", std::string("graph")));
        int expected = 0;
        for (const auto& jn : doc.at("nodes")) {
            if (jn.at("id").get<int>() != expected)
                fail(ErrorCode::Format, "graph json: node ids must be dense and ordered");
            const auto kind = op_kind_from_string(jn.at("kind").get<std::string>());
            Attrs attrs;
            const ojson* value = nullptr;
            for (const auto& [k, v] : jn.at("attrs").items()) {
                if (k == "value") {
                    value = &v;
                    continue;
                }
                attrs[k] = attr_from_json(k, v);
            }
            if (kind == OpKind::Const) {
                if (!value) fail(ErrorCode::Format, "graph json: Const node without value");
                g.add_const(Tensor(value->at("shape").get<Shape>(), value->at("data").get<std::vector<float>>()),
                            std::move(attrs));
            } else {
                g.add_node(kind, jn.at("inputs").get<std::vector<int>>(), std::move(attrs));
            }
            ++expected;
        }
        if (doc.at("inputs").get<std::vector<int>>() != g.inputs())
            fail(ErrorCode::Format, "graph json: input list does not match Input nodes");
        for (int o : doc.at("outputs").get<std::vector<int>>()) g.mark_output(o);
        if (doc.contains("metadata"))
            for (const auto& [k, v] : doc["metadata"].items()) g.metadata()[k] = v.get<std::string>();
        if (doc.contains("tables"))
            for (const auto& [k, v] : doc["tables"].items()) g.tables()[k] = table_from_json(v);
        infer_shapes(g);
        return g;
    } catch (const ojson::exception& e) {
        fail(ErrorCode::Format, std::string("graph json: ") + e.what());
    }
}

void save_json(const std::string& path, const OpGraph& g) { io::write_text(path, to_json(g, 1)); }

OpGraph load_json(const std::string& path) { return from_json(io::read_text(path)); }

} // namespace xamba
