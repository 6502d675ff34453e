// SPDX-License-Identifier: Apache-2.0
#include "xamba/xamba.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>

namespace {

using ojson = nlohmann::ordered_json;

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kVerifyFailed = 3, kNumeric = 4 };

struct Failure {
    xamba_status status;
    std::string message;
};

void check(xamba_status s) {
    if (s != XAMBA_OK) throw Failure{s, xamba_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using Graph = std::unique_ptr<xamba_graph, Deleter<xamba_graph, xamba_graph_destroy>>;
using Config = std::unique_ptr<xamba_cost_config, Deleter<xamba_cost_config, xamba_config_destroy>>;
using Report = std::unique_ptr<xamba_report, Deleter<xamba_report, xamba_report_destroy>>;
using Table = std::unique_ptr<xamba_plu_table, Deleter<xamba_plu_table, xamba_plu_destroy>>;

std::string take(char* s) {
    std::string out(s ? s : "");
    xamba_string_free(s);
    return out;
}

Graph build(const std::string& model, const std::string& mode, std::uint64_t seed) {
    xamba_graph* g = nullptr;
    check(xamba_graph_build(model.c_str(), mode.c_str(), seed, &g));
    return Graph(g);
}

Graph load_graph(const std::string& path) {
    xamba_graph* g = nullptr;
    check(xamba_graph_load(path.c_str(), &g));
    return Graph(g);
}

Graph rewrite(const xamba_graph* g, const std::string& passes, const std::string& tables) {
    xamba_graph* out = nullptr;
    check(xamba_graph_apply_passes(g, passes.c_str(), tables.empty() ? nullptr : tables.c_str(), &out));
    return Graph(out);
}

std::string calibration_path(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("XAMBA_CALIBRATION"); env && *env) return env;
    if (std::filesystem::exists("calibration/lnl.json")) return "calibration/lnl.json";
    return XAMBA_DEFAULT_CALIBRATION;
}

Config load_config(const std::string& flag) {
    xamba_cost_config* c = nullptr;
    check(xamba_config_load(calibration_path(flag).c_str(), &c));
    return Config(c);
}

Report simulate(const xamba_graph* g, const xamba_cost_config* c) {
    xamba_report* r = nullptr;
    check(xamba_simulate(g, c, &r));
    return Report(r);
}

double total_us(const xamba_report* r) {
    double v = 0;
    check(xamba_report_total_us(r, &v));
    return v;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text)) throw Failure{XAMBA_ERR_IO, "cannot write '" + path + "'"};
}

struct Common {
    std::string model = "mamba2";
    std::string mode = "prefill";
    std::string passes;
    std::string tables;
    std::string calibration;
    std::uint64_t seed = 42;
};

void add_model_flags(CLI::App* sub, Common& c, bool with_passes) {
    sub->add_option("--model", c.model, "mamba | mamba2")->check(CLI::IsMember({"mamba", "mamba2"}));
    sub->add_option("--mode", c.mode, "prefill | decode")->check(CLI::IsMember({"prefill", "decode"}));
    if (with_passes) {
        sub->add_option("--passes", c.passes, "comma list: cumba, reduba, actiba, actiba:silu, actiba:softplus");
        sub->add_option("--tables", c.tables, "directory with silu.clut / softplus.clut");
    }
}

const std::map<std::string, std::map<std::string, int>> kCensusTargets{
    {"mamba", {{"Gather", 18}, {"MatMul", 8}, {"Add", 11}}},
    {"mamba2", {{"Gather", 7}, {"MatMul", 2}, {"Add", 10}, {"CumSum", 3}}},
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"XAMBA rewrites, PLU tables, ZVC and NPU cost model"};
    app.require_subcommand(1);
    bool json = false;
    Common c;
    app.add_flag("--json", json, "machine-readable JSON on stdout");
    app.add_option("--seed", c.seed, "seed for weights and sampled inputs");

    auto* sim = app.add_subcommand("simulate", "cost a block and report latency");
    add_model_flags(sim, c, true);
    std::string out, csv;
    sim->add_option("--calibration", c.calibration, "cost-model calibration JSON");
    sim->add_option("--out", out, "write the latency report JSON here");
    sim->add_option("--csv", csv, "write per-node CSV here");

    auto* ver = app.add_subcommand("verify", "check a rewrite against the baseline graph");
    add_model_flags(ver, c, true);
    int samples = 20;
    double atol = 1e-4, rtol = 0.0, lo = -1.0, hi = 1.0;
    ver->add_option("--samples", samples)->check(CLI::PositiveNumber);
    ver->add_option("--atol", atol);
    ver->add_option("--rtol", rtol);
    ver->add_option("--lo", lo);
    ver->add_option("--hi", hi);
    ver->add_option("--out", out, "write the result JSON here");

    auto* bench = app.add_subcommand("bench", "latency sweep over models and pass sets (CSV)");
    bench->add_option("--calibration", c.calibration, "cost-model calibration JSON");
    bench->add_option("--out", out, "CSV output file (stdout if omitted)");

    auto* rw = app.add_subcommand("rewrite", "apply passes to a graph JSON file");
    std::string in;
    rw->add_option("--in", in, "input graph JSON")->required();
    rw->add_option("--passes", c.passes)->required();
    rw->add_option("--tables", c.tables);
    rw->add_option("--out", out, "output graph JSON")->required();

    auto* cen = app.add_subcommand("census", "op census next to the published counts");
    add_model_flags(cen, c, false);
    cen->add_option("--in", in, "census of a graph JSON file instead of a built block");

    auto* fit = app.add_subcommand("fit-plu", "fit a C-LUT table");
    std::string func = "silu";
    float beta = 1.0f, flo = -8.0f, fhi = 8.0f;
    int segments = 64;
    std::int64_t grid = 1000000;
    fit->add_option("--func", func)->check(CLI::IsMember({"silu", "softplus"}));
    fit->add_option("--segments", segments)->check(CLI::PositiveNumber);
    fit->add_option("--lo", flo);
    fit->add_option("--hi", fhi);
    fit->add_option("--beta", beta);
    fit->add_option("--grid", grid, "error-check grid points");
    fit->add_option("--out", out, "C-LUT output file")->required();

    auto* perr = app.add_subcommand("plu-error", "certified max error of a C-LUT table");
    perr->add_option("--table", in, "C-LUT file")->required();
    perr->add_option("--grid", grid)->check(CLI::Range(std::int64_t{2}, std::int64_t{1} << 40));

    auto* zvc = app.add_subcommand("zvc", "ZVC compress / decompress tensor files");
    zvc->require_subcommand(1);
    int width = 32;
    auto* zc = zvc->add_subcommand("compress");
    zc->add_option("--in", in, "XTEN tensor file")->required();
    zc->add_option("--out", out)->required();
    zc->add_option("--width", width)->check(CLI::IsMember({16, 32}));
    auto* zd = zvc->add_subcommand("decompress");
    zd->add_option("--in", in, "ZVC file")->required();
    zd->add_option("--out", out)->required();

    auto* exp = app.add_subcommand("export", "write a built block as graph JSON");
    add_model_flags(exp, c, true);
    exp->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*sim) {
            auto cfg = load_config(c.calibration);
            auto base = build(c.model, c.mode, c.seed);
            auto g = c.passes.empty() ? build(c.model, c.mode, c.seed) : rewrite(base.get(), c.passes, c.tables);
            auto rb = simulate(base.get(), cfg.get());
            auto r = simulate(g.get(), cfg.get());
            const std::string report = take([&] {
                char* s = nullptr;
                check(xamba_report_json(r.get(), &s));
                return s;
            }());
            if (!out.empty()) write_text(out, report + "\n");
            if (!csv.empty()) {
                char* s = nullptr;
                check(xamba_report_csv(r.get(), &s));
                write_text(csv, take(s));
            }
            ojson summary;
            summary["model"] = c.model;
            summary["mode"] = c.mode;
            summary["passes"] = c.passes;
            summary["total_us"] = total_us(r.get());
            if (!c.passes.empty()) {
                double sp = 0;
                check(xamba_speedup(rb.get(), r.get(), &sp));
                summary["speedup"] = sp;
            }
            if (c.mode == "decode") {
                double tps = 0;
                check(xamba_tokens_per_second(r.get(), &tps));
                summary["tokens_per_second"] = tps;
            }
            summary["breakdown"] = ojson::parse(report)["breakdown"];
            if (json) {
                std::cout << summary.dump(2) << "\n";
            } else {
                std::printf("%s %s passes=[%s] total_us=%.3f", c.model.c_str(), c.mode.c_str(), c.passes.c_str(),
                            summary["total_us"].get<double>());
                if (summary.contains("speedup")) std::printf(" speedup=%.3fx", summary["speedup"].get<double>());
                if (summary.contains("tokens_per_second"))
                    std::printf(" tokens/s=%.1f", summary["tokens_per_second"].get<double>());
                std::printf("\n");
                for (const auto& [k, v] : summary["breakdown"].items())
                    if (v.get<double>() >= 0.01) std::printf("  %-10s %6.1f%%\n", k.c_str(), 100.0 * v.get<double>());
            }
        } else if (*ver) {
            auto base = build(c.model, c.mode, c.seed);
            auto g = c.passes.empty() ? build(c.model, c.mode, c.seed) : rewrite(base.get(), c.passes, c.tables);
            std::int32_t passed = 0;
            double diff = 0;
            check(xamba_verify(base.get(), g.get(), samples, lo, hi, rtol, atol, c.seed, &passed, &diff));
            ojson r{{"model", c.model}, {"mode", c.mode}, {"passes", c.passes}, {"samples", samples},
                    {"atol", atol},     {"rtol", rtol},   {"passed", passed != 0}, {"max_abs_diff", diff}};
            if (!out.empty()) write_text(out, r.dump(2) + "\n");
            if (json)
                std::cout << r.dump(2) << "\n";
            else
                std::printf("%s: max_abs_diff=%.3g over %d samples (atol %.3g)\n", passed ? "PASS" : "FAIL", diff,
                            samples, atol);
            return passed ? kOk : kVerifyFailed;
        } else if (*bench) {
            auto cfg = load_config(c.calibration);
            char* s = nullptr;
            check(xamba_bench_csv(cfg.get(), c.seed, &s));
            const auto text = take(s);
            if (out.empty())
                std::cout << text;
            else
                write_text(out, text);
        } else if (*rw) {
            auto g = load_graph(in);
            auto r = rewrite(g.get(), c.passes, c.tables);
            check(xamba_graph_save(r.get(), out.c_str()));
            if (!json) std::printf("wrote %s\n", out.c_str());
        } else if (*cen) {
            auto g = in.empty() ? build(c.model, c.mode, c.seed) : load_graph(in);
            char* s = nullptr;
            check(xamba_graph_census_json(g.get(), &s));
            const auto census = ojson::parse(take(s));
            const bool show_targets = in.empty() && c.mode == "prefill";
            const auto& targets = kCensusTargets.at(c.model);
            if (json) {
                ojson j{{"census", census}};
                if (show_targets) j["targets"] = targets;
                std::cout << j.dump(2) << "\n";
            } else {
                std::printf("%-12s %6s %8s\n", "op", "count", "target");
                for (const auto& [k, v] : census.items()) {
                    auto it = targets.find(k);
                    if (show_targets && it != targets.end())
                        std::printf("%-12s %6d %8d%s\n", k.c_str(), v.get<int>(), it->second,
                                    v.get<int>() == it->second ? "" : "  MISMATCH");
                    else
                        std::printf("%-12s %6d %8s\n", k.c_str(), v.get<int>(), "-");
                }
            }
        } else if (*fit) {
            xamba_plu_table* t = nullptr;
            check(xamba_plu_fit(func.c_str(), beta, flo, fhi, segments, &t));
            Table table(t);
            check(xamba_plu_save(table.get(), out.c_str()));
            double err = 0, at = 0;
            check(xamba_plu_max_error(table.get(), grid, &err, &at));
            if (json)
                std::cout << ojson{{"table", out}, {"func", func}, {"segments", segments}, {"max_error", err},
                                   {"argmax", at}}
                                 .dump(2)
                          << "\n";
            else
                std::printf("wrote %s: %s, %d segments on [%g, %g], max_error=%.6g at x=%.4f\n", out.c_str(),
                            func.c_str(), segments, flo, fhi, err, at);
        } else if (*perr) {
            xamba_plu_table* t = nullptr;
            check(xamba_plu_load(in.c_str(), &t));
            Table table(t);
            double err = 0, at = 0;
            check(xamba_plu_max_error(table.get(), grid, &err, &at));
            if (json)
                std::cout << ojson{{"table", in}, {"max_error", err}, {"argmax", at}}.dump(2) << "\n";
            else
                std::printf("max_error=%.6g at x=%.6f\n", err, at);
        } else if (*zvc) {
            if (*zc) {
                std::uint64_t bytes = 0;
                double density = 0;
                check(xamba_zvc_compress_file(in.c_str(), out.c_str(), width, &bytes, &density));
                if (json)
                    std::cout << ojson{{"out", out}, {"compressed_bytes", bytes}, {"density", density}}.dump(2) << "\n";
                else
                    std::printf("wrote %s: %llu bytes, density %.4f\n", out.c_str(),
                                static_cast<unsigned long long>(bytes), density);
            } else {
                check(xamba_zvc_decompress_file(in.c_str(), out.c_str()));
                if (!json) std::printf("wrote %s\n", out.c_str());
            }
        } else if (*exp) {
            auto g = build(c.model, c.mode, c.seed);
            if (!c.passes.empty()) g = rewrite(g.get(), c.passes, c.tables);
            check(xamba_graph_save(g.get(), out.c_str()));
            if (!json) std::printf("wrote %s\n", out.c_str());
        }
    } catch (const Failure& f) {
        std::fprintf(stderr, "error: %s: %s\n", xamba_status_string(f.status), f.message.c_str());
        if (f.status == XAMBA_ERR_NUMERIC) return kNumeric;
        if (f.status == XAMBA_ERR_PARAMETER) return kUsage;
        return kOther;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kOther;
    }
    return kOk;
}
