#ifndef G2K_G2K_H
#define G2K_G2K_H

/* C interface to the trajectory predictor. All functions return a g2k_status;
 * on failure g2k_last_error() describes the problem (per thread). Handles are
 * opaque and owned by the caller until passed to the matching destroy. */

#include <stddef.h>
#include <stdint.h>

#if defined(G2K_BUILDING_LIBRARY)
#define G2K_API __attribute__((visibility("default")))
#else
#define G2K_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum g2k_status {
  G2K_OK = 0,
  G2K_ERR_INTERNAL = 1,
  G2K_ERR_USAGE = 2, /* bad config, bad argument, unknown variant */
  G2K_ERR_DIVERGENCE = 3,
  G2K_ERR_CONFIG_MISMATCH = 4,
  G2K_ERR_GRADCHECK = 5,
  G2K_ERR_IO = 6,
  G2K_ERR_PARSE = 7,
  G2K_ERR_INTEGRITY = 8,
  G2K_ERR_NUMERIC = 9
} g2k_status;

typedef struct g2k_config g2k_config;
typedef struct g2k_dataset g2k_dataset;
typedef struct g2k_model g2k_model;

/* Receives one line of text (no trailing newline). */
typedef void (*g2k_line_sink)(const char* line, void* user);

typedef struct g2k_report {
  char dataset[128];
  char variant[32];
  double ade;
  double fde;
  double max_step_error;
  size_t pedestrians;
  double runtime_s;
  char config_hash[17];
  int invariants_ok;
} g2k_report;

G2K_API const char* g2k_last_error(void);
G2K_API const char* g2k_version(void);

/* Config: defaults, then file, then individual keys. */
G2K_API g2k_status g2k_config_create(g2k_config** out);
G2K_API void g2k_config_destroy(g2k_config* cfg);
G2K_API g2k_status g2k_config_set(g2k_config* cfg, const char* key, const char* value);
G2K_API g2k_status g2k_config_load_file(g2k_config* cfg, const char* path);
/* Pointer stays valid until the key is changed or the config destroyed;
 * NULL for unknown keys. */
G2K_API const char* g2k_config_get(const g2k_config* cfg, const char* key);
G2K_API g2k_status g2k_config_hash(const g2k_config* cfg, char out[17]);

/* Datasets are windowed with the config's obs_len, pred_len,
 * neighborhood_size and window_shift; scene_image, when set, is attached to
 * every batch. */
G2K_API g2k_status g2k_dataset_load(const g2k_config* cfg, const char* tsv_path,
                                    g2k_dataset** out);
G2K_API g2k_status g2k_dataset_synthesize(const g2k_config* cfg,
                                          const char* scenario_path,
                                          g2k_dataset** out);
G2K_API g2k_status g2k_dataset_synthesize_text(const g2k_config* cfg,
                                               const char* scenario_text,
                                               g2k_dataset** out);
G2K_API void g2k_dataset_destroy(g2k_dataset* ds);
G2K_API g2k_status g2k_dataset_write_tsv(const g2k_dataset* ds, const char* path);
G2K_API g2k_status g2k_dataset_batch_count(const g2k_dataset* ds, size_t* out);
G2K_API g2k_status g2k_dataset_name(const g2k_dataset* ds, const char** out);

/* Model from a config with a variant set. */
G2K_API g2k_status g2k_model_create(const g2k_config* cfg, g2k_model** out);
G2K_API void g2k_model_destroy(g2k_model* model);
/* Trains with the model's config. With out_dir non-NULL, a "log" file is
 * written there and, on divergence, a "divergence" dump. Per-epoch summary
 * lines go to sink when given. */
G2K_API g2k_status g2k_model_train(g2k_model* model, const g2k_dataset* ds,
                                   const char* out_dir, g2k_line_sink sink,
                                   void* user);
G2K_API g2k_status g2k_model_save(const g2k_model* model, const char* path);
/* Loads a checkpoint. When `expected` is non-NULL every model key it sets to
 * a non-default value must agree with the checkpoint, otherwise
 * G2K_ERR_CONFIG_MISMATCH. */
G2K_API g2k_status g2k_model_load(const char* path, const g2k_config* expected,
                                  g2k_model** out);
G2K_API g2k_status g2k_model_config_hash(const g2k_model* model, char out[17]);
/* New config equal to the one the model was built from. */
G2K_API g2k_status g2k_model_copy_config(const g2k_model* model, g2k_config** out);
G2K_API g2k_status g2k_model_evaluate(const g2k_model* model, const g2k_dataset* ds,
                                      g2k_report* out);
G2K_API g2k_status g2k_baseline_evaluate(const g2k_dataset* ds, const g2k_config* cfg,
                                         g2k_report* out);
G2K_API g2k_status g2k_reports_write_csv(const g2k_report* reports, size_t count,
                                         const char* path);
/* Aligned table, one line per report plus a header. */
G2K_API g2k_status g2k_reports_print(const g2k_report* reports, size_t count,
                                     g2k_line_sink sink, void* user);

/* Writes adjacency.csv, ped_attention.csv, cell_attention.csv, grid.csv and
 * grid.pgm (cell attention as grid_size x grid_size) for one batch at the
 * given observed step (negative: last step). */
G2K_API g2k_status g2k_model_export_viz(const g2k_model* model, const g2k_dataset* ds,
                                        size_t batch_index, int step,
                                        const char* out_dir);

/* Finite-difference check of one variant on the desk-scale instance. One
 * report line per parameter; G2K_ERR_GRADCHECK when any relative error
 * reaches tolerance. */
G2K_API g2k_status g2k_gradcheck(const char* variant, uint64_t seed, double tolerance,
                                 g2k_line_sink sink, void* user);

/* Neighborhood {32, 64} x attention x static grid sweep, retraining from
 * `base` for every cell. Writes CSV when csv_path is non-NULL and prints the
 * relative-change table to sink. */
G2K_API g2k_status g2k_ablate(const g2k_config* base, const g2k_dataset* ds,
                              const char* csv_path, g2k_line_sink sink, void* user);

#ifdef __cplusplus
}
#endif

#endif /* G2K_G2K_H */
