/* SPDX-License-Identifier: Apache-2.0
 * Copyright 2026 The bmae Authors
 *
 * C interface of the bilateral masked-autoencoder continual learner.
 *
 * Every function returns a bmae_status. On failure a message describing the
 * last error of the calling thread is available from bmae_last_error().
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free function (passing NULL is allowed).
 */
#ifndef BMAE_BMAE_H
#define BMAE_BMAE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BMAE_API __declspec(dllexport)
#else
#define BMAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bmae_status {
    BMAE_OK = 0,
    BMAE_ERR_INVALID_ARGUMENT = 1,
    BMAE_ERR_CONFIG = 2,
    BMAE_ERR_RUNTIME = 3,
    BMAE_ERR_IO = 4,
    BMAE_ERR_CORRUPT = 5,
    BMAE_ERR_NON_FINITE = 6
} bmae_status;

typedef struct bmae_config bmae_config;
typedef struct bmae_ledger bmae_ledger;
typedef struct bmae_store bmae_store;

typedef struct bmae_store_info {
    uint64_t budget_bytes;
    uint64_t used_bytes;
    uint64_t overhead_bytes;
    uint64_t entries;
    uint64_t classes;
} bmae_store_info;

BMAE_API const char* bmae_version(void);
/* Message of the most recent failure on this thread; never NULL. */
BMAE_API const char* bmae_last_error(void);
/* 0 error, 1 warning, 2 info, 3 debug. */
BMAE_API void bmae_set_log_level(int level);

/* Configuration. */
BMAE_API bmae_status bmae_config_new(bmae_config** out);
BMAE_API bmae_status bmae_config_load(const char* path, bmae_config** out);
BMAE_API bmae_status bmae_config_set(bmae_config* config, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf when it fits; *needed receives
 * the required size including the terminator. A NULL buf is a size query and
 * succeeds; a non-NULL buf that is too small gives BMAE_ERR_INVALID_ARGUMENT. */
BMAE_API bmae_status bmae_config_get(const bmae_config* config, const char* key, char* buf, size_t capacity,
                                     size_t* needed);
BMAE_API bmae_status bmae_config_validate(const bmae_config* config);
BMAE_API bmae_status bmae_config_save(const bmae_config* config, const char* path);
BMAE_API void bmae_config_free(bmae_config* config);

/* Runs (or with resume != 0, continues) an experiment into out_dir. The
 * ledger handle is optional. */
BMAE_API bmae_status bmae_run(const bmae_config* config, const char* out_dir, int resume, bmae_ledger** ledger);

/* Ledger of a finished run, read back from its reports directory. */
BMAE_API bmae_status bmae_ledger_load(const char* reports_dir, bmae_ledger** out);
BMAE_API bmae_status bmae_ledger_phases(const bmae_ledger* ledger, int* phases);
BMAE_API bmae_status bmae_ledger_accuracy(const bmae_ledger* ledger, int after_task, int task, double* out);
BMAE_API bmae_status bmae_ledger_summary(const bmae_ledger* ledger, double* avg, double* last, double* forgetting);
BMAE_API bmae_status bmae_ledger_replay_mse(const bmae_ledger* ledger, int after_task, double* out);
/* BMAE_ERR_INVALID_ARGUMENT when the run recorded no density. */
BMAE_API bmae_status bmae_ledger_feature_density(const bmae_ledger* ledger, double* out);
BMAE_API bmae_status bmae_ledger_write_reports(const bmae_ledger* ledger, const char* out_dir);
BMAE_API void bmae_ledger_free(bmae_ledger* ledger);

/* Re-evaluates a checkpoint. Accuracies of every seen task are copied into
 * out (up to capacity); *count receives the number of tasks. */
BMAE_API bmae_status bmae_eval(const char* checkpoint, double* out, size_t capacity, size_t* count);

/* Exemplar stores. */
BMAE_API bmae_status bmae_store_open(const char* path, bmae_store** out);
BMAE_API bmae_status bmae_store_get_info(const bmae_store* store, bmae_store_info* info);
BMAE_API bmae_status bmae_store_class_entries(const bmae_store* store, int class_id, uint64_t* count);
BMAE_API void bmae_store_free(bmae_store* store);
/* Human-readable report (see bmae_config_get for the buffer protocol).
 * Returns BMAE_ERR_CORRUPT, with the report still filled in, when format
 * validation fails. */
BMAE_API bmae_status bmae_store_inspect(const char* path, char* buf, size_t capacity, size_t* needed);
/* Writes one image per stored exemplar; *written receives the count. */
BMAE_API bmae_status bmae_reconstruct(const char* store_path, const char* checkpoint, const char* out_dir,
                                      size_t* written);

#ifdef __cplusplus
}
#endif

#endif /* BMAE_BMAE_H */
