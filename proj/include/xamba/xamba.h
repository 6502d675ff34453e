/* SPDX-License-Identifier: Apache-2.0 */
#ifndef XAMBA_XAMBA_H
#define XAMBA_XAMBA_H

#include <stdint.h>

#if defined(_WIN32)
#define XAMBA_API __declspec(dllexport)
#else
#define XAMBA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum xamba_status {
    XAMBA_OK = 0,
    XAMBA_ERR_SHAPE = 1,
    XAMBA_ERR_PARAMETER = 2,
    XAMBA_ERR_NUMERIC = 3,
    XAMBA_ERR_FORMAT = 4,
    XAMBA_ERR_IO = 5,
    XAMBA_ERR_UNSUPPORTED = 6,
    XAMBA_ERR_CORRUPTION = 7,
    XAMBA_ERR_CONFIG = 8,
    XAMBA_ERR_SIGNATURE = 9,
    XAMBA_ERR_INTERNAL = 10
} xamba_status;

typedef struct xamba_graph xamba_graph;
typedef struct xamba_plu_table xamba_plu_table;
typedef struct xamba_cost_config xamba_cost_config;
typedef struct xamba_report xamba_report;

XAMBA_API const char* xamba_version(void);
XAMBA_API const char* xamba_status_string(xamba_status status);
/* Message of the last failed call on this thread; empty string if none. */
XAMBA_API const char* xamba_last_error(void);
/* Releases strings returned through char** out-parameters. */
XAMBA_API void xamba_string_free(char* s);

/* Graphs. model: "mamba" | "mamba2"; mode: "prefill" | "decode". */
XAMBA_API xamba_status xamba_graph_build(const char* model, const char* mode, uint64_t seed, xamba_graph** out);
XAMBA_API xamba_status xamba_graph_load(const char* path, xamba_graph** out);
XAMBA_API xamba_status xamba_graph_save(const xamba_graph* g, const char* path);
XAMBA_API xamba_status xamba_graph_to_json(const xamba_graph* g, char** out_json);
XAMBA_API xamba_status xamba_graph_census_json(const xamba_graph* g, char** out_json);
/* passes: comma list of cumba, reduba, actiba, actiba:silu, actiba:softplus.
   tables_dir may be NULL (built-in 64-segment tables) or hold silu.clut / softplus.clut. */
XAMBA_API xamba_status xamba_graph_apply_passes(const xamba_graph* g, const char* passes, const char* tables_dir,
                                                xamba_graph** out);
XAMBA_API void xamba_graph_destroy(xamba_graph* g);

/* PLU tables. func: "silu" | "softplus". */
XAMBA_API xamba_status xamba_plu_fit(const char* func, float beta, float lo, float hi, int32_t segments,
                                     xamba_plu_table** out);
XAMBA_API xamba_status xamba_plu_load(const char* path, xamba_plu_table** out);
XAMBA_API xamba_status xamba_plu_save(const xamba_plu_table* t, const char* path);
XAMBA_API xamba_status xamba_plu_eval(const xamba_plu_table* t, double x, double* out_y);
XAMBA_API xamba_status xamba_plu_max_error(const xamba_plu_table* t, int64_t grid_points, double* out_error,
                                           double* out_argmax);
XAMBA_API void xamba_plu_destroy(xamba_plu_table* t);

/* Cost model. */
XAMBA_API xamba_status xamba_config_default(xamba_cost_config** out);
XAMBA_API xamba_status xamba_config_load(const char* path, xamba_cost_config** out);
XAMBA_API void xamba_config_destroy(xamba_cost_config* c);

XAMBA_API xamba_status xamba_simulate(const xamba_graph* g, const xamba_cost_config* c, xamba_report** out);
XAMBA_API xamba_status xamba_report_total_us(const xamba_report* r, double* out);
XAMBA_API xamba_status xamba_report_share(const xamba_report* r, const char* kind, double* out);
XAMBA_API xamba_status xamba_report_json(const xamba_report* r, char** out_json);
XAMBA_API xamba_status xamba_report_csv(const xamba_report* r, char** out_csv);
XAMBA_API xamba_status xamba_speedup(const xamba_report* base, const xamba_report* opt, double* out);
XAMBA_API xamba_status xamba_tokens_per_second(const xamba_report* decode, double* out);
XAMBA_API void xamba_report_destroy(xamba_report* r);

/* Executes both graphs on seeded random inputs in [lo, hi]. */
XAMBA_API xamba_status xamba_verify(const xamba_graph* a, const xamba_graph* b, int32_t samples, double lo, double hi,
                                    double rtol, double atol, uint64_t seed, int32_t* out_passed,
                                    double* out_max_abs_diff);

/* Sweep CSV: both models x {none, cumba, reduba, cumba+reduba, all}. */
XAMBA_API xamba_status xamba_bench_csv(const xamba_cost_config* c, uint64_t seed, char** out_csv);

/* Tensor files (XTEN) to and from ZVC files; width_bits is 16 or 32. */
XAMBA_API xamba_status xamba_zvc_compress_file(const char* tensor_path, const char* zvc_path, int32_t width_bits,
                                               uint64_t* out_compressed_bytes, double* out_density);
XAMBA_API xamba_status xamba_zvc_decompress_file(const char* zvc_path, const char* tensor_path);

#ifdef __cplusplus
}
#endif

#endif /* XAMBA_XAMBA_H */
