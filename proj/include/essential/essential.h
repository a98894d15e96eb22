/* C interface to the essential class-incremental learning library.
 *
 * Every call returns an ess_status. On failure ess_last_error() holds a
 * message for the calling thread until its next failing call. Strings returned
 * through char** out-parameters are owned by the caller and released with
 * ess_string_free(). */
#ifndef ESSENTIAL_ESSENTIAL_H
#define ESSENTIAL_ESSENTIAL_H

#include <stddef.h>

#if defined(ESSENTIAL_BUILDING_LIBRARY)
#define ESS_API __attribute__((visibility("default")))
#else
#define ESS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ess_status {
  ESS_OK = 0,
  ESS_ERR_INPUT = 1,
  ESS_ERR_CONFIG = 2,
  ESS_ERR_DATA = 3,
  ESS_ERR_FORMAT = 4,
  ESS_ERR_STATE = 5,
  ESS_ERR_INTERNAL = 6,
  ESS_ERR_TRAINING = 7,
  ESS_ERR_IO = 8
} ess_status;

typedef struct ess_config ess_config;
typedef struct ess_result ess_result;
typedef struct ess_grid ess_grid;

/* Called after each finished session with its cumulative-test accuracy. */
typedef void (*ess_progress_fn)(int session, double accuracy, void* user);

ESS_API const char* ess_version(void);
ESS_API const char* ess_last_error(void);
ESS_API const char* ess_status_name(ess_status status);
ESS_API void ess_string_free(char* s);

/* Configuration */
ESS_API ess_status ess_config_load_file(const char* path, ess_config** out);
ESS_API ess_status ess_config_load_text(const char* text, ess_config** out);
ESS_API ess_status ess_config_set(ess_config* cfg, const char* key, const char* value);
ESS_API ess_status ess_config_validate(const ess_config* cfg);
ESS_API ess_status ess_config_to_text(const ess_config* cfg, char** out);
ESS_API ess_status ess_config_hash(const ess_config* cfg, char** out);
/* Value of one key in canonical form. */
ESS_API ess_status ess_config_get(const ess_config* cfg, const char* key, char** out);
ESS_API ess_status ess_config_keys(char** out);
ESS_API void ess_config_free(ess_config* cfg);

/* Experiments. run_dir may be NULL to keep results in memory only. */
ESS_API ess_status ess_run(const ess_config* cfg, const char* run_dir, ess_progress_fn progress, void* user,
                           ess_result** out);
ESS_API int ess_result_num_sessions(const ess_result* r);
ESS_API double ess_result_accuracy(const ess_result* r, int session);
ESS_API double ess_result_average(const ess_result* r);
ESS_API ess_status ess_result_summary(const ess_result* r, int tsv, char** out);
ESS_API ess_status ess_result_report_json(const ess_result* r, int session, char** out);
ESS_API void ess_result_free(ess_result* r);

/* Grids. axes_csv is a comma list of selector, similarity, expansion_variant;
 * variants_csv NULL or empty sweeps every expansion variant. */
ESS_API ess_status ess_ablate(const ess_config* cfg, const char* axes_csv, const char* out_dir, ess_grid** out);
ESS_API ess_status ess_sweep_memory(const ess_config* cfg, const int* sizes, size_t n, const char* out_dir,
                                    ess_grid** out);
ESS_API ess_status ess_sweep_expansion(const ess_config* cfg, const char* variants_csv, const char* out_dir,
                                       ess_grid** out);
ESS_API size_t ess_grid_rows(const ess_grid* g);
ESS_API int ess_grid_failures(const ess_grid* g);
ESS_API ess_status ess_grid_table(const ess_grid* g, int tsv, char** out);
ESS_API void ess_grid_free(ess_grid* g);

/* Re-renders summary and plots of an existing run directory. */
ESS_API ess_status ess_report(const char* run_dir, char** out);

/* Formulas */
ESS_API ess_status ess_static_entropy(const double* p, size_t n, double* out);
ESS_API ess_status ess_symmetric_kl(const double* p, const double* q, size_t n, double* out);
ESS_API ess_status ess_js_divergence(const double* p, const double* q, size_t n, double* out);
ESS_API ess_status ess_cumulative_entropy(const double* entropies, size_t n, int trapezoid, double* out);
ESS_API ess_status ess_deltas(const double* ours, const double* baseline, size_t n, double* final_delta,
                              double* average_delta);
ESS_API ess_status ess_quota(int budget, int num_classes, int* out);

#ifdef __cplusplus
}
#endif

#endif
