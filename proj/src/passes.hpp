// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "graph.hpp"
#include "plu.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace xamba::passes {

// Lower-triangular ones, diagonal included. Built once per size and shared.
std::shared_ptr<const Tensor> cumba_mask(std::int64_t m);
// Row vector of ones, [1, m].
std::shared_ptr<const Tensor> reduba_mask(std::int64_t m);

OpGraph apply_cumba(const OpGraph& g);
OpGraph apply_reduba(const OpGraph& g);

using TableSet = std::map<plu::Func, plu::PluTable>;

// Rewrites the listed activation functions only; every listed function present in g needs a table.
OpGraph apply_actiba(const OpGraph& g, const TableSet& tables,
                     const std::set<plu::Func>& funcs = {plu::Func::Silu, plu::Func::Softplus});

// Pass names: cumba, reduba, actiba, actiba:silu, actiba:softplus.
std::vector<std::string> parse_pass_list(const std::string& csv);
OpGraph apply_passes(const OpGraph& g, const std::vector<std::string>& names, const TableSet& tables);

// Default tables used when the caller supplies none: 64 uniform segments over [-8, 8].
TableSet default_tables();
// Reads <dir>/silu.clut and <dir>/softplus.clut, whichever exist.
TableSet load_table_dir(const std::string& dir);

struct EquivalenceOptions {
    int samples = 20;
    double lo = -1.0;
    double hi = 1.0;
    double rtol = 0.0;
    double atol = 1e-4;
    std::uint64_t seed = 42;
    bool integer_inputs = false;
};

struct EquivalenceReport {
    bool passed = true;
    double max_abs_diff = 0.0;
    int worst_output = -1;
    std::int64_t worst_index = -1;
    int samples = 0;
};

std::vector<Tensor> random_inputs(const OpGraph& g, std::uint64_t seed, double lo, double hi, bool integer);

EquivalenceReport check_equivalence(const OpGraph& a, const OpGraph& b, const EquivalenceOptions& opts);

} // namespace xamba::passes
