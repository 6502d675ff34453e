// SPDX-License-Identifier: Apache-2.0
#include "xamba/xamba.h"

#include "byte_io.hpp"
#include "error.hpp"
#include "experiments.hpp"
#include "graph.hpp"
#include "models.hpp"
#include "npusim.hpp"
#include "passes.hpp"
#include "plu.hpp"
#include "tensor.hpp"
#include "zvc.hpp"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

struct xamba_graph {
    xamba::OpGraph g;
};
struct xamba_plu_table {
    xamba::plu::PluTable t;
};
struct xamba_cost_config {
    xamba::npusim::CostConfig c;
};
struct xamba_report {
    xamba::npusim::LatencyReport r;
};

namespace {

thread_local std::string g_last_error;

template <class F>
xamba_status try_(F&& f) {
    try {
        g_last_error.clear();
        f();
        return XAMBA_OK;
    } catch (const xamba::Error& e) {
        g_last_error = e.what();
        return static_cast<xamba_status>(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
    } catch (const std::exception& e) {
        g_last_error = e.what();
    } catch (...) {
        g_last_error = "unknown exception";
    }
    return XAMBA_ERR_INTERNAL;
}

template <class T>
T& deref(T* p, const char* what) {
    if (!p) xamba::fail(xamba::ErrorCode::Parameter, std::string(what) + " must not be null");
    return *p;
}

const char* str(const char* s, const char* what) {
    if (!s) xamba::fail(xamba::ErrorCode::Parameter, std::string(what) + " must not be null");
    return s;
}

char* dup(const std::string& s) {
    auto* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

} // namespace

extern "C" {

const char* xamba_version(void) { return "1.0.0"; }

const char* xamba_status_string(xamba_status status) {
    switch (status) {
    case XAMBA_OK: return "ok";
    case XAMBA_ERR_SHAPE: return "shape error";
    case XAMBA_ERR_PARAMETER: return "parameter error";
    case XAMBA_ERR_NUMERIC: return "numeric error";
    case XAMBA_ERR_FORMAT: return "format error";
    case XAMBA_ERR_IO: return "i/o error";
    case XAMBA_ERR_UNSUPPORTED: return "unsupported";
    case XAMBA_ERR_CORRUPTION: return "corrupt data";
    case XAMBA_ERR_CONFIG: return "configuration error";
    case XAMBA_ERR_SIGNATURE: return "signature mismatch";
    case XAMBA_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* xamba_last_error(void) { return g_last_error.c_str(); }

void xamba_string_free(char* s) { std::free(s); }

xamba_status xamba_graph_build(const char* model, const char* mode, uint64_t seed, xamba_graph** out) {
    return try_([&] {
        auto& o = deref(out, "out");
        const auto cfg = xamba::models::default_config(xamba::models::variant_from_string(str(model, "model")));
        const auto m = xamba::models::mode_from_string(str(mode, "mode"));
        o = new xamba_graph{xamba::models::build_block(cfg, xamba::models::init_params(cfg, seed), m)};
    });
}

xamba_status xamba_graph_load(const char* path, xamba_graph** out) {
    return try_([&] {
        auto& o = deref(out, "out");
        o = new xamba_graph{xamba::load_json(str(path, "path"))};
    });
}

xamba_status xamba_graph_save(const xamba_graph* g, const char* path) {
    return try_([&] { xamba::save_json(str(path, "path"), deref(g, "graph").g); });
}

xamba_status xamba_graph_to_json(const xamba_graph* g, char** out_json) {
    return try_([&] { deref(out_json, "out_json") = dup(xamba::to_json(deref(g, "graph").g, 1)); });
}

xamba_status xamba_graph_census_json(const xamba_graph* g, char** out_json) {
    return try_([&] {
        nlohmann::ordered_json j = xamba::census(deref(g, "graph").g);
        deref(out_json, "out_json") = dup(j.dump());
    });
}

xamba_status xamba_graph_apply_passes(const xamba_graph* g, const char* passes, const char* tables_dir,
                                      xamba_graph** out) {
    return try_([&] {
        auto& o = deref(out, "out");
        const auto names = xamba::passes::parse_pass_list(str(passes, "passes"));
        const auto tables =
            tables_dir ? xamba::passes::load_table_dir(tables_dir) : xamba::passes::default_tables();
        o = new xamba_graph{xamba::passes::apply_passes(deref(g, "graph").g, names, tables)};
    });
}

void xamba_graph_destroy(xamba_graph* g) { delete g; }

xamba_status xamba_plu_fit(const char* func, float beta, float lo, float hi, int32_t segments,
                           xamba_plu_table** out) {
    return try_([&] {
        auto& o = deref(out, "out");
        o = new xamba_plu_table{
            xamba::plu::fit_uniform(xamba::plu::func_from_string(str(func, "func")), beta, lo, hi, segments)};
    });
}

xamba_status xamba_plu_load(const char* path, xamba_plu_table** out) {
    return try_([&] {
        auto& o = deref(out, "out");
        o = new xamba_plu_table{xamba::plu::load(str(path, "path"))};
    });
}

xamba_status xamba_plu_save(const xamba_plu_table* t, const char* path) {
    return try_([&] { xamba::plu::save(str(path, "path"), deref(t, "table").t); });
}

xamba_status xamba_plu_eval(const xamba_plu_table* t, double x, double* out_y) {
    return try_([&] { deref(out_y, "out_y") = xamba::plu::eval(deref(t, "table").t, x); });
}

xamba_status xamba_plu_max_error(const xamba_plu_table* t, int64_t grid_points, double* out_error,
                                 double* out_argmax) {
    return try_([&] {
        const auto r = xamba::plu::max_error(deref(t, "table").t, grid_points);
        deref(out_error, "out_error") = r.max_abs_error;
        if (out_argmax) *out_argmax = r.argmax;
    });
}

void xamba_plu_destroy(xamba_plu_table* t) { delete t; }

xamba_status xamba_config_default(xamba_cost_config** out) {
    return try_([&] { deref(out, "out") = new xamba_cost_config{}; });
}

xamba_status xamba_config_load(const char* path, xamba_cost_config** out) {
    return try_([&] {
        auto& o = deref(out, "out");
        o = new xamba_cost_config{xamba::npusim::load_config(str(path, "path"))};
    });
}

void xamba_config_destroy(xamba_cost_config* c) { delete c; }

xamba_status xamba_simulate(const xamba_graph* g, const xamba_cost_config* c, xamba_report** out) {
    return try_([&] {
        auto& o = deref(out, "out");
        o = new xamba_report{xamba::npusim::cost_graph(deref(g, "graph").g, deref(c, "config").c)};
    });
}

xamba_status xamba_report_total_us(const xamba_report* r, double* out) {
    return try_([&] { deref(out, "out") = deref(r, "report").r.total_us; });
}

xamba_status xamba_report_share(const xamba_report* r, const char* kind, double* out) {
    return try_([&] { deref(out, "out") = deref(r, "report").r.share(str(kind, "kind")); });
}

xamba_status xamba_report_json(const xamba_report* r, char** out_json) {
    return try_([&] { deref(out_json, "out_json") = dup(xamba::npusim::report_to_json(deref(r, "report").r)); });
}

xamba_status xamba_report_csv(const xamba_report* r, char** out_csv) {
    return try_([&] { deref(out_csv, "out_csv") = dup(xamba::npusim::report_to_csv(deref(r, "report").r)); });
}

xamba_status xamba_speedup(const xamba_report* base, const xamba_report* opt, double* out) {
    return try_([&] { deref(out, "out") = xamba::npusim::speedup(deref(base, "base").r, deref(opt, "opt").r); });
}

xamba_status xamba_tokens_per_second(const xamba_report* decode, double* out) {
    return try_([&] { deref(out, "out") = xamba::npusim::tokens_per_second(deref(decode, "report").r); });
}

void xamba_report_destroy(xamba_report* r) { delete r; }

xamba_status xamba_verify(const xamba_graph* a, const xamba_graph* b, int32_t samples, double lo, double hi,
                          double rtol, double atol, uint64_t seed, int32_t* out_passed, double* out_max_abs_diff) {
    return try_([&] {
        xamba::passes::EquivalenceOptions opts;
        opts.samples = samples;
        opts.lo = lo;
        opts.hi = hi;
        opts.rtol = rtol;
        opts.atol = atol;
        opts.seed = seed;
        const auto rep = xamba::passes::check_equivalence(deref(a, "a").g, deref(b, "b").g, opts);
        deref(out_passed, "out_passed") = rep.passed ? 1 : 0;
        if (out_max_abs_diff) *out_max_abs_diff = rep.max_abs_diff;
    });
}

xamba_status xamba_bench_csv(const xamba_cost_config* c, uint64_t seed, char** out_csv) {
    return try_([&] { deref(out_csv, "out_csv") = dup(xamba::experiments::bench_csv(deref(c, "config").c, seed)); });
}

xamba_status xamba_zvc_compress_file(const char* tensor_path, const char* zvc_path, int32_t width_bits,
                                     uint64_t* out_compressed_bytes, double* out_density) {
    return try_([&] {
        if (width_bits != 16 && width_bits != 32)
            xamba::fail(xamba::ErrorCode::Parameter, "zvc: width_bits must be 16 or 32");
        const auto t = xamba::load_tensor(str(tensor_path, "tensor_path"));
        const auto z = xamba::zvc::compress(t, static_cast<xamba::zvc::ValueWidth>(width_bits));
        const auto bytes = xamba::zvc::serialize(z);
        xamba::io::write_file(str(zvc_path, "zvc_path"), bytes);
        if (out_compressed_bytes) *out_compressed_bytes = z.compressed_bytes();
        if (out_density) *out_density = xamba::zvc::density(z);
    });
}

xamba_status xamba_zvc_decompress_file(const char* zvc_path, const char* tensor_path) {
    return try_([&] {
        const auto z = xamba::zvc::deserialize(xamba::io::read_file(str(zvc_path, "zvc_path")));
        xamba::save_tensor(str(tensor_path, "tensor_path"), xamba::zvc::decompress(z));
    });
}

} // extern "C"
