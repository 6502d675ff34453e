// SPDX-License-Identifier: Apache-2.0
#include "models.hpp"

#include "error.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace xamba::models {

namespace {

using Ints = std::vector<std::int64_t>;

Ints range(std::int64_t lo, std::int64_t hi) {
    Ints v(static_cast<std::size_t>(hi - lo));
    std::iota(v.begin(), v.end(), lo);
    return v;
}

// Thin op-emitting wrapper; every helper returns the new node id.
class Net {
public:
    Net(std::string name, const SsmParams& p) : g(std::move(name)), p_(p) {}

    OpGraph g;

    int input(const std::string& name, const Shape& s) { return g.add_input(name, s); }
    int konst(Tensor t, const std::string& role) { return g.add_const(std::move(t), {{"role", role}}); }
    int weight(const std::string& name) {
        return g.add_const(p_.at(name), {{"role", std::string("weight")}, {"param", name}});
    }

    int matmul(int a, int b) { return g.add_node(OpKind::MatMul, {a, b}); }
    int add(int a, int b) { return g.add_node(OpKind::Add, {a, b}); }
    int mul(int a, int b) { return g.add_node(OpKind::Multiply, {a, b}); }
    // Bias adds right after an MPU op are applied by the MPU output stage.
    int bias(int x, const std::string& name) {
        const int b = weight(name);
        if (engine_of(g.node(x)) == Engine::Mpu) return g.add_node(OpKind::Add, {x, b}, {{"engine", std::string("mpu")}});
        return add(x, b);
    }
    int gather(int x, std::int64_t axis, Ints idx) {
        return g.add_node(OpKind::Gather, {x}, {{"axis", axis}, {"indices", std::move(idx)}});
    }
    int reshape(int x, Ints shape) { return g.add_node(OpKind::Reshape, {x}, {{"shape", std::move(shape)}}); }
    int transpose(int x) { return g.add_node(OpKind::Transpose, {x}); }
    int act(int x, const std::string& func) {
        return g.add_node(OpKind::Activation, {x}, {{"func", func}, {"beta", 1.0}});
    }
    int exp(int x) { return g.add_node(OpKind::Exp, {x}); }
    int sqrt(int x) { return g.add_node(OpKind::Sqrt, {x}); }
    int power(int x, double e) { return g.add_node(OpKind::Power, {x}, {{"exponent", e}}); }
    int cumsum(int x) { return g.add_node(OpKind::CumSum, {x}, {{"axis", std::int64_t{0}}}); }
    int reducesum(int x) { return g.add_node(OpKind::ReduceSum, {x}, {{"axis", std::int64_t{0}}}); }
    int concat(std::vector<int> xs, std::int64_t axis) { return g.add_node(OpKind::Concat, std::move(xs), {{"axis", axis}}); }
    int conv(int x, std::int64_t k, bool valid) {
        return g.add_node(OpKind::Conv1d, {x, weight("conv_w")}, {{"kernel", k}, {"valid", valid}});
    }
    int rmsnorm(int x, const std::string& w) {
        return g.add_node(OpKind::RMSNorm, {x, weight(w)}, {{"eps", 1e-5}});
    }

private:
    const SsmParams& p_;
};

Tensor tril(std::int64_t m, bool strict) {
    Tensor t({m, m});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < (strict ? i : i + 1); ++j) t(i, j) = 1.0f;
    return t;
}

struct Uniform {
    std::mt19937_64 engine;
    double next() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
};

Tensor random_weight(Uniform& u, Shape shape, std::int64_t fan_in) {
    Tensor t(std::move(shape));
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<float>((u.next() - 0.5) * scale);
    return t;
}

// Softplus inverse of a log-uniform step in [1e-3, 1e-1].
Tensor dt_bias(Uniform& u, Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        const double dt = std::exp(std::log(1e-3) + u.next() * (std::log(1e-1) - std::log(1e-3)));
        v = static_cast<float>(dt + std::log(-std::expm1(-dt)));
    }
    return t;
}

void set_common_metadata(OpGraph& g, const MambaConfig& cfg, Mode mode) {
    auto& m = g.metadata();
    m["model"] = to_string(cfg.variant);
    m["mode"] = to_string(mode);
    m["strict_finite"] = "true";
    m["d_model"] = std::to_string(cfg.d_model);
    m["d_state"] = std::to_string(cfg.d_state);
    m["seq_len"] = std::to_string(mode == Mode::Decode ? 1 : cfg.seq_len);
}

} // namespace

const char* to_string(Variant v) { return v == Variant::Mamba ? "mamba" : "mamba2"; }
const char* to_string(Mode m) { return m == Mode::Prefill ? "prefill" : "decode"; }

Variant variant_from_string(const std::string& s) {
    if (s == "mamba") return Variant::Mamba;
    if (s == "mamba2") return Variant::Mamba2;
    fail(ErrorCode::Parameter, "unknown model '" + s + "' (expected mamba or mamba2)");
}

Mode mode_from_string(const std::string& s) {
    if (s == "prefill") return Mode::Prefill;
    if (s == "decode") return Mode::Decode;
    fail(ErrorCode::Parameter, "unknown mode '" + s + "' (expected prefill or decode)");
}

void MambaConfig::validate() const {
    for (auto v : {d_model, d_state, d_conv, expand, seq_len, dt_rank, chunk_size, n_heads})
        if (v <= 0) fail(ErrorCode::Config, "model config: all sizes must be positive");
    if (d_conv < 2) fail(ErrorCode::Config, "model config: d_conv must be at least 2");
    if (variant == Variant::Mamba2) {
        if (seq_len % chunk_size != 0)
            fail(ErrorCode::Config, "model config: seq_len " + std::to_string(seq_len) +
                                        " is not a multiple of chunk_size " + std::to_string(chunk_size) +
                                        "; pad first");
        if (seq_len != chunk_size) fail(ErrorCode::Unsupported, "mamba2 builder: only a single chunk is supported");
        if (n_heads != 1) fail(ErrorCode::Unsupported, "mamba2 builder: only n_heads = 1 is supported");
        if (chunk_size < 2) fail(ErrorCode::Config, "model config: chunk_size must be at least 2");
    }
}

MambaConfig mamba_default() { return MambaConfig{}; }

MambaConfig mamba2_default() {
    MambaConfig c;
    c.variant = Variant::Mamba2;
    c.d_model = 8;
    c.seq_len = 256;
    return c;
}

MambaConfig default_config(Variant v) { return v == Variant::Mamba ? mamba_default() : mamba2_default(); }

const Tensor& SsmParams::at(const std::string& name) const {
    auto it = w.find(name);
    if (it == w.end()) fail(ErrorCode::Parameter, "missing model parameter '" + name + "'");
    return it->second;
}

SsmParams init_params(const MambaConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Uniform u{std::mt19937_64(seed)};
    const auto D = cfg.d_model, E = cfg.d_inner(), N = cfg.d_state, K = cfg.d_conv;
    SsmParams p;
    auto& w = p.w;
    w["norm_w"] = Tensor::ones(1, D);
    if (cfg.variant == Variant::Mamba) {
        const auto R = cfg.dt_rank;
        w["in_w"] = random_weight(u, {D, 2 * E}, D);
        w["in_b"] = random_weight(u, {1, 2 * E}, D);
        w["conv_w"] = random_weight(u, {K, E}, K);
        w["conv_b"] = random_weight(u, {1, E}, K);
        w["x_w"] = random_weight(u, {E, R + 2 * N}, E);
        w["x_b"] = random_weight(u, {1, R + 2 * N}, E);
        w["dt_w"] = random_weight(u, {R, E}, R);
        w["dt_b"] = dt_bias(u, {1, E});
        Tensor a({E, N});
        for (std::int64_t e = 0; e < E; ++e)
            for (std::int64_t n = 0; n < N; ++n) a(e, n) = -static_cast<float>(n + 1);
        w["A"] = std::move(a);
        w["D"] = Tensor::ones(1, E);
        w["out_w"] = random_weight(u, {E, D}, E);
        w["out_b"] = random_weight(u, {1, D}, E);
    } else {
        const auto C = E + 2 * N;
        w["in_w"] = random_weight(u, {D, E + C + 1}, D);
        w["in_b"] = random_weight(u, {1, E + C + 1}, D);
        w["conv_w"] = random_weight(u, {K, C}, K);
        w["conv_b"] = random_weight(u, {1, C}, K);
        w["dt_b"] = dt_bias(u, {1, 1});
        w["A"] = Tensor({1, 1}, -static_cast<float>(1.0 + 15.0 * u.next()));
        w["D"] = Tensor::ones(1, 1);
        w["gnorm_w"] = Tensor::ones(1, E);
        w["out_w"] = random_weight(u, {E, D}, E);
        w["out_b"] = random_weight(u, {1, D}, E);
    }
    return p;
}

OpGraph build_mamba_block(const MambaConfig& cfg, const SsmParams& params, Mode mode) {
    cfg.validate();
    if (cfg.variant != Variant::Mamba) fail(ErrorCode::Config, "build_mamba_block: config variant is not mamba");
    const bool decode = mode == Mode::Decode;
    const auto L = decode ? 1 : cfg.seq_len, D = cfg.d_model, E = cfg.d_inner(), N = cfg.d_state,
               K = cfg.d_conv, R = cfg.dt_rank;

    Net net(std::string("mamba_") + to_string(mode), params);
    const int x = net.input("x", {L, D});
    int conv_state = -1, h = -1;
    if (decode) {
        conv_state = net.input("conv_state", {K - 1, E});
        h = net.input("ssm_state", {E, N});
    } else {
        h = net.konst(Tensor({E, N}), "initial_state");
    }

    const int xz = net.bias(net.matmul(net.rmsnorm(x, "norm_w"), net.weight("in_w")), "in_b");
    const int xs = net.gather(xz, 1, range(0, E));
    const int z = net.gather(xz, 1, range(E, 2 * E));

    int window = xs;
    if (decode) window = net.concat({conv_state, xs}, 0);
    const int u = net.act(net.bias(net.conv(window, K, decode), "conv_b"), "silu");

    const int xdbl = net.bias(net.matmul(u, net.weight("x_w")), "x_b");
    const int dt_low = net.gather(xdbl, 1, range(0, R));
    const int B = net.gather(xdbl, 1, range(R, R + N));
    const int C = net.gather(xdbl, 1, range(R + N, R + 2 * N));
    const int delta = net.act(net.bias(net.matmul(dt_low, net.weight("dt_w")), "dt_b"), "softplus");

    // Discretisation, rows ordered (channel, step).
    const int delta_col = net.reshape(net.transpose(delta), {E * L, 1});
    const int dA_all = net.exp(net.mul(delta_col, net.weight("A")));
    const int du_col = net.reshape(net.transpose(net.mul(delta, u)), {E * L, 1});
    Ints brow;
    for (std::int64_t e = 0; e < E; ++e)
        for (std::int64_t t = 0; t < L; ++t) brow.push_back(t);
    const int dBu_all = net.mul(du_col, net.gather(B, 0, std::move(brow)));
    const int Ct = net.transpose(C);

    std::vector<int> ys;
    for (std::int64_t t = 0; t < L; ++t) {
        Ints rows;
        for (std::int64_t e = 0; e < E; ++e) rows.push_back(e * L + t);
        const int dA_t = net.gather(dA_all, 0, rows);
        const int dBu_t = net.gather(dBu_all, 0, rows);
        h = net.add(net.mul(dA_t, h), dBu_t);
        ys.push_back(net.matmul(h, net.gather(Ct, 1, {t})));
    }
    int y = net.transpose(ys.size() > 1 ? net.concat(ys, 1) : ys[0]);
    y = net.add(y, net.mul(u, net.weight("D")));
    y = net.mul(y, net.act(z, "silu"));
    const int out = net.add(net.bias(net.matmul(y, net.weight("out_w")), "out_b"), x);

    net.g.mark_output(out);
    net.g.mark_output(h);
    net.g.mark_output(decode ? net.gather(window, 0, range(1, K)) : xs);
    set_common_metadata(net.g, cfg, mode);
    return std::move(net.g);
}

OpGraph build_mamba2_block(const MambaConfig& cfg, const SsmParams& params, Mode mode) {
    cfg.validate();
    if (cfg.variant != Variant::Mamba2) fail(ErrorCode::Config, "build_mamba2_block: config variant is not mamba2");
    const bool decode = mode == Mode::Decode;
    const auto L = decode ? 1 : cfg.seq_len, D = cfg.d_model, E = cfg.d_inner(), N = cfg.d_state,
               K = cfg.d_conv, P = E, CC = E + 2 * N;

    Net net(std::string("mamba2_") + to_string(mode), params);
    const int x = net.input("x", {L, D});
    int conv_state = -1, h0 = -1;
    if (decode) {
        conv_state = net.input("conv_state", {K - 1, CC});
        h0 = net.input("ssm_state", {N, P});
    } else {
        h0 = net.konst(Tensor({N, P}), "initial_state");
    }

    const int zx = net.bias(net.matmul(net.rmsnorm(x, "norm_w"), net.weight("in_w")), "in_b");
    const int z = net.gather(zx, 1, range(0, E));
    const int xbc_raw = net.gather(zx, 1, range(E, E + CC));
    const int dt_raw = net.gather(zx, 1, {E + CC});

    int window = xbc_raw;
    if (decode) window = net.concat({conv_state, xbc_raw}, 0);
    const int xbc = net.act(net.bias(net.conv(window, K, decode), "conv_b"), "silu");
    const int xx = net.gather(xbc, 1, range(0, E));
    const int B = net.gather(xbc, 1, range(E, E + N));
    const int C = net.gather(xbc, 1, range(E + N, E + 2 * N));
    const int dt = net.act(net.bias(dt_raw, "dt_b"), "softplus");
    const int adt = net.mul(dt, net.weight("A"));
    const int xdt = net.mul(xx, dt);

    int y = -1, h = -1;
    if (decode) {
        const int dA = net.exp(adt);
        h = net.add(net.mul(h0, dA), net.mul(net.transpose(B), xdt));
        y = net.reducesum(net.mul(net.transpose(C), h));
        net.g.metadata()["approximate.decode"] = "single-step recurrence in place of the chunked scan";
    } else {
        const int acs = net.reshape(net.cumsum(net.reshape(adt, {L})), {L, 1});
        const int a_last = net.gather(acs, 0, {L - 1});

        const int seg = net.cumsum(net.mul(adt, net.konst(tril(L, true), "strict_lower")));
        const int decay = net.mul(net.exp(seg), net.konst(tril(L, false), "lower"));

        const int Ct_col = net.reshape(net.transpose(C), {N * L, 1});
        const int G = net.reshape(net.reducesum(net.reshape(net.mul(Ct_col, net.transpose(B)), {N, L * L})), {L, L});
        const int M = net.mul(G, decay);
        const int Mt_col = net.reshape(net.transpose(M), {L * L, 1});
        const int y_diag = net.reshape(net.reducesum(net.reshape(net.mul(Mt_col, xdt), {L, L * P})), {L, P});

        const int decay_states = net.exp(net.add(net.mul(acs, net.konst(Tensor({1, 1}, -1.0f), "negate")), a_last));
        const int xw = net.mul(xdt, decay_states);
        const int B_col = net.reshape(B, {L * N, 1});
        const int states = net.reshape(net.reducesum(net.reshape(net.mul(B_col, xw), {L, N * P})), {N, P});

        const int pair = net.concat({net.konst(Tensor({1, 1}), "zero"), a_last}, 0);
        const int dchunk = net.mul(net.exp(net.cumsum(net.mul(pair, net.konst(tril(2, true), "strict_lower")))),
                                   net.konst(tril(2, false), "lower"));
        Tensor pick({4, 1});
        pick[2] = 1.0f;
        const int d10 = net.reducesum(net.mul(net.reshape(dchunk, {4, 1}), net.konst(std::move(pick), "select")));
        h = net.add(net.mul(h0, d10), states);

        const int y_off_raw =
            net.reshape(net.reducesum(net.reshape(net.mul(Ct_col, h0), {N, L * P})), {L, P});
        const int y_off = net.mul(y_off_raw, net.exp(acs));
        y = net.add(y_diag, y_off);
        net.g.metadata()["assumption.cumsum_placement"] =
            "[L] CumSum accumulates A*dt over the chunk; [2,2] CumSum is the inter-chunk decay segsum of [0, A_last]";
    }

    y = net.add(y, net.mul(xx, net.weight("D")));
    const int gated = net.mul(y, net.act(z, "silu"));
    const int ms = net.mul(net.transpose(net.reducesum(net.transpose(net.power(gated, 2.0)))),
                           net.konst(Tensor({1, 1}, 1.0f / static_cast<float>(P)), "mean"));
    const int rstd = net.power(net.sqrt(net.add(ms, net.konst(Tensor({1, 1}, 1e-5f), "eps"))), -1.0);
    const int yn = net.mul(net.mul(gated, rstd), net.weight("gnorm_w"));
    const int out = net.add(net.bias(net.matmul(yn, net.weight("out_w")), "out_b"), x);

    net.g.mark_output(out);
    net.g.mark_output(h);
    net.g.mark_output(decode ? net.gather(window, 0, range(1, K)) : xbc_raw);
    set_common_metadata(net.g, cfg, mode);
    return std::move(net.g);
}

OpGraph build_block(const MambaConfig& cfg, const SsmParams& params, Mode mode) {
    return cfg.variant == Variant::Mamba ? build_mamba_block(cfg, params, mode) : build_mamba2_block(cfg, params, mode);
}

Padded pad_tokens(const Tensor& x, std::int64_t target_len) {
    if (x.rank() != 2) fail(ErrorCode::Shape, "pad_tokens: expected [tokens, d_model]");
    if (x.rows() > target_len)
        fail(ErrorCode::Shape, "pad_tokens: " + std::to_string(x.rows()) + " tokens exceed target length " +
                                   std::to_string(target_len));
    Padded p{Tensor({target_len, x.cols()}), x.rows()};
    std::copy(x.data().begin(), x.data().end(), p.tokens.data().begin());
    return p;
}

std::int64_t conv_channels(const MambaConfig& cfg) {
    return cfg.variant == Variant::Mamba ? cfg.d_inner() : cfg.d_inner() + 2 * cfg.d_state;
}

Shape ssm_state_shape(const MambaConfig& cfg) {
    return cfg.variant == Variant::Mamba ? Shape{cfg.d_inner(), cfg.d_state} : Shape{cfg.d_state, cfg.d_inner()};
}

StateCache initial_state(const MambaConfig& cfg) {
    return {Tensor({cfg.d_conv - 1, conv_channels(cfg)}), Tensor(ssm_state_shape(cfg))};
}

StateCache state_after_prefill(const MambaConfig& cfg, const std::vector<Tensor>& outs) {
    if (outs.size() != 3) fail(ErrorCode::Parameter, "state_after_prefill: expected the three prefill outputs");
    StateCache c = initial_state(cfg);
    if (outs[1].shape() != c.ssm_state.shape() || outs[2].cols() != conv_channels(cfg))
        fail(ErrorCode::Shape, "state_after_prefill: outputs do not match the config");
    c.ssm_state = outs[1];
    const auto keep = cfg.d_conv - 1, len = outs[2].rows();
    for (std::int64_t r = 0; r < keep; ++r) {
        const auto src = len - keep + r;
        if (src < 0) continue;
        for (std::int64_t j = 0; j < c.conv_state.cols(); ++j) c.conv_state(r, j) = outs[2](src, j);
    }
    return c;
}

Tensor decode_step(const OpGraph& g, const Tensor& x, StateCache& cache) {
    auto outs = execute(g, {x, cache.conv_state, cache.ssm_state});
    if (outs.size() != 3) fail(ErrorCode::Parameter, "decode_step: graph is not a decode block");
    cache.ssm_state = std::move(outs[1]);
    cache.conv_state = std::move(outs[2]);
    return std::move(outs[0]);
}

} // namespace xamba::models
