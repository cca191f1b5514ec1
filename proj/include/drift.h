/* C API for the drift library: differentiable self-training with an EMA
 * teacher, plus the conventional self-training baseline.
 *
 * All functions returning a pointer yield NULL on failure; all functions
 * returning int yield DRIFT_OK (0) on success. After any failure,
 * drift_last_error() returns a message describing it (thread-local).
 * Strings returned from handle accessors stay valid until the handle is
 * freed; drift_resolve_config()'s result is valid until the next call on
 * the same thread.
 */
#ifndef DRIFT_H
#define DRIFT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define DRIFT_OK 0
#define DRIFT_ERR 1

typedef struct drift_dataset drift_dataset;
typedef struct drift_run drift_run;

const char* drift_last_error(void);

/* ---- datasets ---- */

drift_dataset* drift_two_moons(int n_labeled_per_class, int n_unlabeled_per_class,
                               double noise_std, uint64_t seed);

drift_dataset* drift_gaussian_blobs(int n_labeled_per_class, int n_unlabeled_per_class,
                                    double separation, double noise_std, uint64_t seed);

/* Sentinel marks unlabeled cells; pass "" for the empty-cell default. */
drift_dataset* drift_dataset_load_csv(const char* path, const char* label_column,
                                      const char* unlabeled_sentinel);

/* New dataset with labels flipped at the given rate; the input is untouched. */
drift_dataset* drift_dataset_with_label_noise(const drift_dataset* ds, double flip_rate,
                                              uint64_t seed);

/* Writes <path> and the <path>.meta.json sidecar. generator_info_json may be
 * NULL for "{}". */
int drift_dataset_write_csv(const drift_dataset* ds, const char* path,
                            const char* generator_info_json);

int drift_dataset_counts(const drift_dataset* ds, int* n_total, int* n_labeled,
                         int* n_unlabeled, int* num_classes);

void drift_dataset_free(drift_dataset* ds);

/* ---- training ---- */

/* Validates a run-config JSON document and returns it with all defaults
 * materialized, or NULL on a validation error. */
const char* drift_resolve_config(const char* run_config_json);

/* Warmup plus the self-training loop described by the config. */
drift_run* drift_train(const drift_dataset* ds, const char* run_config_json);

int drift_run_final_accuracy(const drift_run* run, double* out);
/* One JSON record per eval step (step, train_loss, accuracy, mean_weight,
 * mean_label_entropy). */
const char* drift_run_metrics_jsonl(const drift_run* run);
/* Resolved config + final accuracy + per-eval records. */
const char* drift_run_summary_json(const drift_run* run);
/* Final student parameters as {name: {shape, data}}. */
const char* drift_run_checkpoint_json(const drift_run* run);
void drift_run_free(drift_run* run);

/* ---- verification ---- */

/* Compares reverse-mode gradients of the full objective on a random small
 * model against central finite differences, and against the
 * leader + (1-alpha)*interaction recomposition. */
int drift_gradcheck(uint64_t seed, int batch_size, double alpha, double* max_rel_vs_fd,
                    double* max_err_decomposition, double* interaction_norm);

/* Paired one-sided t-test (H1: mean(a) > mean(b)). degenerate is set when
 * the differences have zero variance; p_value is NaN in that case. */
int drift_paired_ttest(const double* a, const double* b, int n, double* t_statistic,
                       double* p_value, int* degenerate);

#ifdef __cplusplus
}
#endif

#endif /* DRIFT_H */
