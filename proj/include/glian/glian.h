#ifndef GLIAN_GLIAN_H
#define GLIAN_GLIAN_H

/* C interface to the enhancer. Every function returns a glian_status;
 * on failure glian_last_error() describes the most recent error raised on
 * the calling thread. Strings returned through out-parameters are owned by
 * the caller and released with glian_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(__GNUC__)
#define GLIAN_API __attribute__((visibility("default")))
#else
#define GLIAN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum glian_status {
  GLIAN_OK = 0,
  GLIAN_ERR_ARGUMENT = 1,     /* invalid argument or configuration */
  GLIAN_ERR_IO = 2,           /* unreadable or unwritable file */
  GLIAN_ERR_FORMAT = 3,       /* malformed checkpoint, manifest or image */
  GLIAN_ERR_PRECONDITION = 4, /* missing prerequisite (for example an earlier stage) */
  GLIAN_ERR_NUMERIC = 5,      /* non-finite values */
  GLIAN_ERR_INTERNAL = 6
} glian_status;

typedef struct glian_config glian_config;
typedef struct glian_model glian_model;

GLIAN_API const char* glian_last_error(void);
GLIAN_API const char* glian_status_name(glian_status status);
GLIAN_API void glian_string_free(char* text);

/* --- configuration --------------------------------------------------------- */

GLIAN_API glian_status glian_config_create(glian_config** out);
/* Loads an INI file; GLIAN_SEED in the environment overrides train.seed. */
GLIAN_API glian_status glian_config_load(const char* path, glian_config** out);
/* key is "section.name", for example "train.stage". */
GLIAN_API glian_status glian_config_set(glian_config* config, const char* key, const char* value);
GLIAN_API glian_status glian_config_get(const glian_config* config, const char* key, char** value);
GLIAN_API glian_status glian_config_to_text(const glian_config* config, char** text);
GLIAN_API void glian_config_destroy(glian_config* config);

/* --- model ----------------------------------------------------------------- */

GLIAN_API glian_status glian_model_create(const glian_config* config, glian_model** out);
/* Restores a model from a checkpoint. A null config uses the configuration
 * snapshot stored in the checkpoint (or the defaults when it has none). */
GLIAN_API glian_status glian_model_load(const glian_config* config, const char* path, glian_model** out);
GLIAN_API glian_status glian_model_save(const glian_model* model, const char* path);
GLIAN_API uint64_t glian_model_param_count(const glian_model* model);
GLIAN_API void glian_model_destroy(glian_model* model);

typedef struct glian_enhance_stats {
  uint64_t flops;
  uint64_t patches;
  uint64_t exits[4]; /* patches leaving at stage 1..4 */
  double mean_exit_stage;
} glian_enhance_stats;

/* Enhances one image file. exits_path, when non-null, receives the
 * per-patch exit stage grid and the accounted FLOPs. stats may be null. */
GLIAN_API glian_status glian_enhance_file(const glian_model* model, const char* input, const char* output,
                                int early_exit, const char* exits_path, glian_enhance_stats* stats);

/* --- workflows ------------------------------------------------------------- */

/* Writes a dataset manifest for <root>/low and <root>/high. summary, when
 * non-null, receives a human-readable description of the level counts. */
GLIAN_API glian_status glian_prepare_data(const char* root, const char* manifest_path, size_t patch_size,
                                double val_fraction, uint64_t seed, char** summary);

/* Runs training stage config.train.stage. Checkpoints go to
 * <output.dir>/stage<k>.ckpt and the log to <output.dir>/stage<k>.log.
 * Stage 2 starts from stage1.ckpt when present; stage 3 requires a
 * checkpoint whose provenance covers stages 1 and 2. With resume set, the
 * run continues from the stage's own checkpoint. */
GLIAN_API glian_status glian_train(const glian_config* config, int resume, char** summary);

/* Evaluates matching filenames; writes the CSV report when report_path is
 * non-null and returns a printable table. */
GLIAN_API glian_status glian_evaluate_dirs(const char* pred_dir, const char* ref_dir, const char* orig_dir,
                                 const char* report_path, char** table);

/* Region brightness histograms of one image as a CSV table. */
GLIAN_API glian_status glian_patch_hist(const char* input, size_t region_rows, size_t region_cols, size_t bins,
                              const char* output_path);

#ifdef __cplusplus
}
#endif

#endif /* GLIAN_GLIAN_H */
