#ifndef RECOURSE_H
#define RECOURSE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum RecourseStatus {
  RECOURSE_STATUS_OK = 0,
  RECOURSE_STATUS_NULL_POINTER = 1,
  RECOURSE_STATUS_INVALID_ARGUMENT = 2,
  RECOURSE_STATUS_DIMENSION_MISMATCH = 3,
  // The search ran but found no recourse.
  RECOURSE_STATUS_NO_RECOURSE = 4,
  RECOURSE_STATUS_BUFFER_TOO_SMALL = 5,
  RECOURSE_STATUS_PANIC = 6,
} RecourseStatus;

// Reference model family for [`recourse_model_fit`].
typedef enum RecourseModelKind {
  RECOURSE_MODEL_KIND_KNN = 0,
  RECOURSE_MODEL_KIND_RBF = 1,
} RecourseModelKind;

// Edge admission rule.
typedef enum RecourseWeightMode {
  RECOURSE_WEIGHT_MODE_AVERAGE = 0,
  RECOURSE_WEIGHT_MODE_STRICT = 1,
} RecourseWeightMode;

// Opaque training set.
typedef struct RecourseDataset RecourseDataset;

// Opaque explainer bound to one dataset and model.
typedef struct RecourseExplainer RecourseExplainer;

// Opaque fitted classifier.
typedef struct RecourseModel RecourseModel;

// Opaque successful explanation.
typedef struct RecourseOutcome RecourseOutcome;

// Explanation parameters; fill with [`recourse_config_default`].
typedef struct RecourseConfig {
  size_t k_neighbors;
  size_t momentum_window;
  double epsilon;
  double decision_threshold;
  // Density threshold as a quantile of training densities.
  double density_quantile;
  size_t line_samples;
  enum RecourseWeightMode weight_mode;
  size_t max_explore_iters;
  size_t max_exploit_iters;
  uint64_t seed;
} RecourseConfig;

// Fractions of the training set touched by each stage.
typedef struct RecoursePrivacy {
  double explore;
  double exploit;
  double enhance;
  double total;
} RecoursePrivacy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *recourse_last_error(void);

// Release a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void recourse_string_free(char *s);

// Build a dataset from `n × dim` row-major raw values and `n` labels in {0, 1}.
// Features are standardized internally.
//
// # Safety
// `rows` must hold `n * dim` doubles, `labels` `n` bytes; `out` must be writable.
enum RecourseStatus recourse_dataset_new(const double *rows,
                                         size_t n,
                                         size_t dim,
                                         const uint8_t *labels,
                                         struct RecourseDataset **out);

// Seeded two-moons dataset with `n` points.
//
// # Safety
// `out` must be writable.
enum RecourseStatus recourse_dataset_two_moons(size_t n,
                                               double noise,
                                               uint64_t seed,
                                               struct RecourseDataset **out);

// # Safety
// `d` must be null or a live dataset.
size_t recourse_dataset_len(const struct RecourseDataset *d);

// # Safety
// `d` must be null or a live dataset.
size_t recourse_dataset_dim(const struct RecourseDataset *d);

// Copy the standardized row `row` into `out` (room for `len` doubles).
//
// # Safety
// `d` must be a live dataset; `out` must have room for `len` doubles.
enum RecourseStatus recourse_dataset_row(const struct RecourseDataset *d,
                                         size_t row,
                                         double *out,
                                         size_t len);

// # Safety
// `d` must be null or a dataset not yet freed.
void recourse_dataset_free(struct RecourseDataset *d);

// Fit a reference classifier on `d`.
//
// # Safety
// `d` must be a live dataset; `out` must be writable.
enum RecourseStatus recourse_model_fit(const struct RecourseDataset *d,
                                       enum RecourseModelKind kind,
                                       uint64_t seed,
                                       struct RecourseModel **out);

// Score a standardized point.
//
// # Safety
// `m` must be a live model; `x` must hold `dim` doubles; `out` must be writable.
enum RecourseStatus recourse_model_score(const struct RecourseModel *m,
                                         const double *x,
                                         size_t dim,
                                         double *out);

// # Safety
// `m` must be null or a model not yet freed.
void recourse_model_free(struct RecourseModel *m);

// Fill `out` with the library defaults.
//
// # Safety
// `out` must be writable.
enum RecourseStatus recourse_config_default(struct RecourseConfig *out);

// Bind a copy of `d` and a shared reference to `m`.
//
// # Safety
// `d` and `m` must be live; `out` must be writable.
enum RecourseStatus recourse_explainer_new(const struct RecourseDataset *d,
                                           const struct RecourseModel *m,
                                           struct RecourseExplainer **out);

// # Safety
// `e` must be null or an explainer not yet freed.
void recourse_explainer_free(struct RecourseExplainer *e);

// Explain training row `row`.
//
// # Safety
// `e` and `config` must be live; `out` must be writable.
enum RecourseStatus recourse_explain_row(const struct RecourseExplainer *e,
                                         size_t row,
                                         const struct RecourseConfig *config,
                                         struct RecourseOutcome **out);

// Explain a standardized point.
//
// # Safety
// `x` must hold `dim` doubles; other pointers as in [`recourse_explain_row`].
enum RecourseStatus recourse_explain_point(const struct RecourseExplainer *e,
                                           const double *x,
                                           size_t dim,
                                           const struct RecourseConfig *config,
                                           struct RecourseOutcome **out);

// Number of recourse steps.
//
// # Safety
// `o` must be null or a live outcome.
size_t recourse_outcome_steps(const struct RecourseOutcome *o);

// Feature count of the outcome's vectors.
//
// # Safety
// `o` must be null or a live outcome.
size_t recourse_outcome_dim(const struct RecourseOutcome *o);

// Copy step `i` into `out`.
//
// # Safety
// `o` must be live; `out` must have room for `len` doubles.
enum RecourseStatus recourse_outcome_step(const struct RecourseOutcome *o,
                                          size_t i,
                                          double *out,
                                          size_t len);

// Copy the counterfactual into `out`.
//
// # Safety
// `o` must be live; `out` must have room for `len` doubles.
enum RecourseStatus recourse_outcome_counterfactual(const struct RecourseOutcome *o,
                                                    double *out,
                                                    size_t len);

// Classifier score at the end of the path.
//
// # Safety
// `o` must be null or a live outcome.
double recourse_outcome_score(const struct RecourseOutcome *o);

// # Safety
// `o` must be live; `out` must be writable.
enum RecourseStatus recourse_outcome_privacy(const struct RecourseOutcome *o,
                                             struct RecoursePrivacy *out);

// JSON trace document; release with [`recourse_string_free`].
//
// # Safety
// `o` must be null or a live outcome.
char *recourse_outcome_trace_json(const struct RecourseOutcome *o);

// # Safety
// `o` must be null or an outcome not yet freed.
void recourse_outcome_free(struct RecourseOutcome *o);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECOURSE_H */
