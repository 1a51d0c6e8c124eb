#ifndef REGIONGCN_REGIONGCN_H
#define REGIONGCN_REGIONGCN_H

#include <stddef.h>

#if defined(_WIN32)
#define RGCN_API __declspec(dllexport)
#else
#define RGCN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rgcn_status {
  RGCN_OK = 0,
  RGCN_INVALID_ARGUMENT = 1,
  RGCN_DIMENSION_MISMATCH = 2,
  RGCN_IO_ERROR = 3,
  RGCN_PARSE_ERROR = 4,
  RGCN_NUMERIC_ERROR = 5,
  RGCN_INTERNAL_ERROR = 6
} rgcn_status;

/* Opaque resolved run configuration. */
typedef struct rgcn_config rgcn_config;

RGCN_API const char* rgcn_version(void);

/* Message of the last failed call on this thread; "" after a success. */
RGCN_API const char* rgcn_last_error(void);

/* Defaults for every key. */
RGCN_API rgcn_status rgcn_config_new(rgcn_config** out);
RGCN_API rgcn_status rgcn_config_load(const char* path, rgcn_config** out);
RGCN_API rgcn_status rgcn_config_from_json(const char* text, rgcn_config** out);
/* "a.b=value"; value parsed as JSON, else taken as a string. */
RGCN_API rgcn_status rgcn_config_set(rgcn_config* cfg, const char* assignment);
/* Caller frees *out with rgcn_string_free. */
RGCN_API rgcn_status rgcn_config_to_json(const rgcn_config* cfg, char** out);
RGCN_API void rgcn_config_free(rgcn_config* cfg);
RGCN_API void rgcn_string_free(char* s);

/* command: train, ensemble, synth, embed or metrics. report_json may be NULL;
   otherwise it receives the report text (free with rgcn_string_free). */
RGCN_API rgcn_status rgcn_run(const char* command, const rgcn_config* cfg, const char* out_dir,
                              char** report_json);

/* One-based region labels of equal length n. */
RGCN_API rgcn_status rgcn_nmi(const size_t* a, const size_t* b, size_t n, double* out);

RGCN_API rgcn_status rgcn_eval_metrics(const double* y_true, const double* y_pred, size_t n,
                                       double* rmse, double* mae, double* r2);

#ifdef __cplusplus
}
#endif

#endif
