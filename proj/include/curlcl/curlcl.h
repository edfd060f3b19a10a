/* C interface to the curlcl engine. All handles are opaque; every function
 * that can fail returns a curlcl_status and leaves a message retrievable with
 * curlcl_last_error() on the calling thread. */
#ifndef CURLCL_CURLCL_H
#define CURLCL_CURLCL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CURLCL_API __declspec(dllexport)
#else
#define CURLCL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum curlcl_status {
  CURLCL_OK = 0,
  CURLCL_ERR_SHAPE = 1,
  CURLCL_ERR_ARGUMENT = 2,
  CURLCL_ERR_INDEX = 3,
  CURLCL_ERR_NUMERIC = 4,
  CURLCL_ERR_PARSE = 5,
  CURLCL_ERR_STATE = 6,
  CURLCL_ERR_IO = 7,
  CURLCL_ERR_CONFIG = 8,
  CURLCL_ERR_CAPACITY = 9,
  CURLCL_ERR_INTERNAL = 100
} curlcl_status;

typedef struct curlcl_config curlcl_config;
typedef struct curlcl_model curlcl_model;
typedef struct curlcl_report curlcl_report;
typedef struct curlcl_gradcheck_result curlcl_gradcheck_result;

typedef void (*curlcl_log_fn)(const char* line, void* user);

CURLCL_API const char* curlcl_version(void);
CURLCL_API const char* curlcl_last_error(void);
CURLCL_API const char* curlcl_status_name(curlcl_status status);

/* Presets */
CURLCL_API size_t curlcl_preset_count(void);
CURLCL_API const char* curlcl_preset_name(size_t index);
CURLCL_API const char* curlcl_preset_description(size_t index);

/* Configuration */
CURLCL_API curlcl_status curlcl_config_default(curlcl_config** out);
CURLCL_API curlcl_status curlcl_config_from_preset(const char* name, curlcl_config** out);
CURLCL_API curlcl_status curlcl_config_from_file(const char* path, curlcl_config** out);
CURLCL_API curlcl_status curlcl_config_parse(const char* text, curlcl_config** out);
CURLCL_API curlcl_status curlcl_config_set(curlcl_config* config, const char* key,
                                           const char* value);
/* "key=value" */
CURLCL_API curlcl_status curlcl_config_apply(curlcl_config* config, const char* assignment);
/* Copies the canonical text (NUL-terminated) into buf when capacity allows;
 * *needed receives the required size including the terminator. */
CURLCL_API curlcl_status curlcl_config_serialize(const curlcl_config* config, char* buf,
                                                 size_t capacity, size_t* needed);
CURLCL_API void curlcl_config_free(curlcl_config* config);

/* Training. On success *model and *report (either may be NULL if unwanted)
 * receive new handles owned by the caller. */
CURLCL_API curlcl_status curlcl_train(const curlcl_config* config, curlcl_log_fn log,
                                      void* user, curlcl_model** model, curlcl_report** report);

/* Models. input_dim = 0 takes the dimension from the configured data. */
CURLCL_API curlcl_status curlcl_model_init(const curlcl_config* config, size_t input_dim,
                                           curlcl_model** out);
CURLCL_API curlcl_status curlcl_model_load(const char* path, curlcl_model** out);
CURLCL_API curlcl_status curlcl_model_save(const curlcl_model* model, const char* path);
CURLCL_API curlcl_status curlcl_model_info(const curlcl_model* model, size_t* components,
                                           size_t* capacity, size_t* latent_dim,
                                           size_t* input_dim);
CURLCL_API void curlcl_model_free(curlcl_model* model);

/* Evaluation on the data named by the config (eval.split of data.*). */
CURLCL_API curlcl_status curlcl_evaluate(const curlcl_model* model, const curlcl_config* config,
                                         curlcl_report** out);
CURLCL_API curlcl_status curlcl_report_step(const curlcl_report* report, uint64_t* step);
CURLCL_API curlcl_status curlcl_report_cluster_accuracy(const curlcl_report* report,
                                                        double* accuracy);
CURLCL_API curlcl_status curlcl_report_knn_error(const curlcl_report* report, size_t k,
                                                 double* error);
CURLCL_API curlcl_status curlcl_report_components(const curlcl_report* report,
                                                  size_t* components);
/* Class × component counts, row-major; pass values = NULL to query the shape. */
CURLCL_API curlcl_status curlcl_report_confusion(const curlcl_report* report, size_t* rows,
                                                 size_t* cols, double* values);
/* Supervised training reports only; state error otherwise. */
CURLCL_API curlcl_status curlcl_report_incremental(const curlcl_report* report,
                                                   double* class_accuracy,
                                                   double* task_accuracy);
/* Training reports only: expansion count and the metrics CSV text. */
CURLCL_API curlcl_status curlcl_report_expansions(const curlcl_report* report, size_t* count);
CURLCL_API curlcl_status curlcl_report_metrics_csv(const curlcl_report* report, char* buf,
                                                   size_t capacity, size_t* needed);
/* One metrics-schema CSV row (no header, no newline). */
CURLCL_API curlcl_status curlcl_report_csv_row(const curlcl_report* report, char* buf,
                                               size_t capacity, size_t* needed);
CURLCL_API void curlcl_report_free(curlcl_report* report);

/* Exports */
CURLCL_API curlcl_status curlcl_export_latents(const curlcl_model* model,
                                               const curlcl_config* config, const char* csv_path,
                                               size_t* rows_written);
CURLCL_API curlcl_status curlcl_export_samples(const curlcl_model* model, size_t n, uint64_t seed,
                                               const char* directory);

/* Gradient check against central differences. corrupt_buffer may be NULL. */
CURLCL_API curlcl_status curlcl_gradcheck(size_t configurations, uint64_t seed,
                                          const char* corrupt_buffer,
                                          curlcl_gradcheck_result** out);
CURLCL_API int curlcl_gradcheck_passed(const curlcl_gradcheck_result* result);
CURLCL_API size_t curlcl_gradcheck_count(const curlcl_gradcheck_result* result);
CURLCL_API curlcl_status curlcl_gradcheck_entry(const curlcl_gradcheck_result* result,
                                                size_t index, const char** loss,
                                                const char** buffer, double* max_error);
CURLCL_API const char* curlcl_gradcheck_worst(const curlcl_gradcheck_result* result);
CURLCL_API void curlcl_gradcheck_free(curlcl_gradcheck_result* result);

#ifdef __cplusplus
}
#endif

#endif
