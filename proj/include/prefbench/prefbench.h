/*
 * prefbench C API.
 *
 * Every fallible call returns a pb_status; on failure the message is
 * available from pb_last_error() on the same thread until the next call.
 * Objects are opaque handles released with their matching *_free function.
 * Strings returned through out-parameters are owned by the library unless
 * documented otherwise.
 */
#ifndef PREFBENCH_PREFBENCH_H_
#define PREFBENCH_PREFBENCH_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(PREFBENCH_BUILDING_LIBRARY)
#define PB_API __declspec(dllexport)
#else
#define PB_API __declspec(dllimport)
#endif
#else
#define PB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pb_status {
  PB_OK = 0,
  PB_ERR_INVALID_ARGUMENT = 1,
  PB_ERR_IO = 2,
  PB_ERR_FORMAT = 3,
  PB_ERR_VALIDATION = 4,
  PB_ERR_NUMERIC = 5,
  PB_ERR_INTERNAL = 6
} pb_status;

PB_API const char* pb_version(void);
PB_API const char* pb_last_error(void);
PB_API const char* pb_status_name(pb_status status);

/* ---- Embedding files ------------------------------------------------- */

typedef struct pb_embeddings pb_embeddings;

PB_API pb_status pb_embeddings_create(uint32_t dim, pb_embeddings** out);
PB_API pb_status pb_embeddings_add(pb_embeddings* emb, const char* id, const float* values,
                                   size_t n_values);
PB_API pb_status pb_embeddings_read(const char* path, pb_embeddings** out);
PB_API pb_status pb_embeddings_write(const pb_embeddings* emb, const char* path);
PB_API size_t pb_embeddings_count(const pb_embeddings* emb);
PB_API uint32_t pb_embeddings_dim(const pb_embeddings* emb);
/* NULL when row is out of range. Valid until the handle is freed. */
PB_API const char* pb_embeddings_id(const pb_embeddings* emb, size_t row);
PB_API pb_status pb_embeddings_lookup(const pb_embeddings* emb, const char* id, float* out,
                                      size_t n_out);
PB_API void pb_embeddings_free(pb_embeddings* emb);

/* ---- Scoring models -------------------------------------------------- */

typedef struct pb_model pb_model;

typedef struct pb_pair_prediction {
  double score_a;
  double score_b;
  double prob_a;
  double prob_b;
} pb_pair_prediction;

/* d == 0 selects min(dim_t, dim_i). */
PB_API pb_status pb_model_init(uint32_t dim_t, uint32_t dim_i, uint32_t d, uint64_t seed,
                               pb_model** out);
PB_API pb_status pb_model_load(const char* path, pb_model** out);
PB_API pb_status pb_model_save(const pb_model* model, const char* path);
PB_API pb_status pb_model_dims(const pb_model* model, uint32_t* dim_t, uint32_t* dim_i,
                               uint32_t* d);
PB_API double pb_model_temperature(const pb_model* model);
PB_API pb_status pb_model_score(const pb_model* model, const double* prompt, size_t n_prompt,
                                const double* image, size_t n_image, double* out);
PB_API pb_status pb_model_raw_similarity(const pb_model* model, const double* prompt,
                                         size_t n_prompt, const double* image, size_t n_image,
                                         double* out);
PB_API pb_status pb_model_predict_pair(const pb_model* model, const double* prompt,
                                       size_t n_prompt, const double* image_a,
                                       const double* image_b, size_t n_image,
                                       pb_pair_prediction* out);
PB_API void pb_model_free(pb_model* model);

/* ---- Pipeline commands ---------------------------------------------- */

/* Either `combined` (prompt and image ids in one file) or both `text` and
 * `image`. */
typedef struct pb_embedding_paths {
  const char* combined;
  const char* text;
  const char* image;
} pb_embedding_paths;

typedef void (*pb_progress_fn)(int64_t step, double loss, double lr, void* user);

/* Shared options for every command; each command reads the fields it
 * needs. Initialize with pb_options_init. */
typedef struct pb_options {
  const char* dataset_path;
  const char* pairs_path;
  const char* model_path;
  const char* config_path;
  const char* sources_path;
  const char* const* input_paths;
  size_t n_input_paths;
  pb_embedding_paths embeddings;
  /* convert: pairs JSON; train: checkpoint; synth: output directory. */
  const char* out_path;
  uint64_t seed;
  int has_seed; /* nonzero: seed overrides any config value */
  int threads;
  uint32_t chunk_size; /* 0 selects 80 */
  const char* style;
  const size_t* sizes;
  size_t n_sizes;
  uint32_t resamples; /* 0 selects 200 */
  pb_progress_fn progress;
  void* progress_user;
} pb_options;

PB_API void pb_options_init(pb_options* options);

/* A finished command: JSON document, text table and a one-line summary. */
typedef struct pb_report pb_report;

PB_API const char* pb_report_json(const pb_report* report);
PB_API const char* pb_report_table(const pb_report* report);
PB_API const char* pb_report_summary(const pb_report* report);
/* Reads a top-level numeric field of the JSON document. */
PB_API pb_status pb_report_number(const pb_report* report, const char* key, double* out);
PB_API void pb_report_free(pb_report* report);

PB_API pb_status pb_convert(const pb_options* options, pb_report** out);
PB_API pb_status pb_stats(const pb_options* options, pb_report** out);
/* PB_ERR_VALIDATION / PB_ERR_FORMAT when the inputs are invalid. */
PB_API pb_status pb_validate(const pb_options* options, pb_report** out);
PB_API pb_status pb_train(const pb_options* options, pb_report** out);
PB_API pb_status pb_eval(const pb_options* options, pb_report** out);
PB_API pb_status pb_matrix(const pb_options* options, pb_report** out);
PB_API pb_status pb_benchmark(const pb_options* options, pb_report** out);
PB_API pb_status pb_stability(const pb_options* options, pb_report** out);
PB_API pb_status pb_synth(const pb_options* options, pb_report** out);

#ifdef __cplusplus
}
#endif

#endif /* PREFBENCH_PREFBENCH_H_ */
