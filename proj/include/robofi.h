#ifndef ROBOFI_H
#define ROBOFI_H

/* C interface to the robofi library.
 *
 * Every fallible call returns an rfs_status. On failure the thread's last
 * error message and error-code name are set and any out-pointer is left
 * untouched. Strings returned through char** are owned by the caller and
 * released with rfs_free_string. Handles are released with their _free
 * function; passing NULL to a _free function is a no-op.
 *
 * Configuration crosses the boundary as JSON text. Unknown keys are ignored
 * and missing keys take their defaults. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define RFS_API __declspec(dllexport)
#else
#define RFS_API __attribute__((visibility("default")))
#endif

typedef enum rfs_status {
  RFS_OK = 0,
  RFS_ERR_VALIDATION = 1, /* bad input, configuration or data */
  RFS_ERR_RUNTIME = 2     /* I/O failure, diverged training, internal error */
} rfs_status;

typedef struct rfs_dataset rfs_dataset;
typedef struct rfs_model rfs_model;
typedef struct rfs_report rfs_report;

RFS_API const char* rfs_version(void);

/* Message and ErrorCode name of the last failure on this thread ("" if none). */
RFS_API const char* rfs_last_error(void);
RFS_API const char* rfs_last_error_code(void);

RFS_API void rfs_free_string(char* s);

/* Fully explicit run configuration for a model preset ("paper" or "tiny"). */
RFS_API rfs_status rfs_default_run_config(const char* preset, char** out_json);
/* Default-filled and validated run configuration. */
RFS_API rfs_status rfs_resolve_run_config(const char* run_json, char** out_json);
RFS_API rfs_status rfs_default_synth_spec(char** out_json);
RFS_API rfs_status rfs_resolve_synth_spec(const char* spec_json, char** out_json);

/* ---- datasets ---- */

RFS_API rfs_status rfs_dataset_open(const char* dir, rfs_dataset** out);
RFS_API rfs_status rfs_dataset_synthesize(const char* spec_json, size_t workers, rfs_dataset** out);
/* mask_json: NULL for the standard mask, else a JSON array of kept columns.
 * failures_json (optional): array of {"path", "reason"} for skipped samples. */
RFS_API rfs_status rfs_dataset_import(const char* dir, const char* adapter, const char* mask_json,
                                      rfs_dataset** out, char** failures_json);
RFS_API rfs_status rfs_dataset_merge(rfs_dataset* into, const rfs_dataset* other);
/* Keeps the samples whose velocity and location appear in the comma-separated
 * name lists ("V1,V3", "L2"); NULL or "" matches any. */
RFS_API rfs_status rfs_dataset_filter(rfs_dataset* ds, const char* velocity, const char* location);
RFS_API rfs_status rfs_dataset_downsample(rfs_dataset* ds, int rate_hz);
RFS_API rfs_status rfs_dataset_save(const rfs_dataset* ds, const char* dir);
RFS_API size_t rfs_dataset_size(const rfs_dataset* ds);
/* Counts per class, velocity, location and rate. */
RFS_API rfs_status rfs_dataset_summary(const rfs_dataset* ds, char** out_json);
/* Per-sniffer, per-subcarrier normalization statistics over every sample. */
RFS_API rfs_status rfs_dataset_stats(const rfs_dataset* ds, char** out_json);
RFS_API void rfs_dataset_free(rfs_dataset* ds);

/* ---- models ---- */

/* Trains on the first cv fold; report_out (optional) receives the one-arm
 * "train" report with its test-set metrics. */
RFS_API rfs_status rfs_model_train(const rfs_dataset* ds, const char* run_json, rfs_model** out,
                                   rfs_report** report_out);
/* Writes model.json, stats.json and weights.rfsw into dir. */
RFS_API rfs_status rfs_model_save(const rfs_model* m, const char* dir);
RFS_API rfs_status rfs_model_load(const char* dir, rfs_model** out);
/* Metrics over every sample of ds, normalized with the model's training statistics. */
RFS_API rfs_status rfs_model_evaluate(const rfs_model* m, const rfs_dataset* ds, char** metrics_json);
RFS_API uint64_t rfs_model_weight_hash(const rfs_model* m);
RFS_API void rfs_model_free(rfs_model* m);

/* ---- protocols and reports ---- */

/* name: "train", "cv", "lovo", "sweep-freq" or "sweep-loc". */
RFS_API rfs_status rfs_protocol_run(const char* name, const rfs_dataset* ds, const char* run_json,
                                    rfs_report** out);
RFS_API rfs_status rfs_report_load(const char* path, rfs_report** out);
RFS_API rfs_status rfs_report_json(const rfs_report* r, char** out_json);
/* Writes report.json, CSV tables and SVG charts; out_json lists the written files. */
RFS_API rfs_status rfs_report_render(const rfs_report* r, const char* dir, char** out_json);
RFS_API void rfs_report_free(rfs_report* r);

#ifdef __cplusplus
}
#endif

#endif /* ROBOFI_H */
