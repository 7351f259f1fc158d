#ifndef MLGRAPH_H
#define MLGRAPH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum MlgStatus {
  MLG_STATUS_OK = 0,
  MLG_STATUS_NULL_POINTER = 1,
  MLG_STATUS_INVALID_ARGUMENT = 2,
  MLG_STATUS_DIMENSION_MISMATCH = 3,
  MLG_STATUS_VALIDATION = 4,
  MLG_STATUS_DIVERGENCE = 5,
  MLG_STATUS_RANK_NOT_ACHIEVED = 6,
  MLG_STATUS_IO = 7,
  MLG_STATUS_BUFFER_TOO_SMALL = 8,
  MLG_STATUS_PANIC = 9,
} MlgStatus;

// Solver settings.
typedef struct MlgConfig MlgConfig;

// Views and optional labels, filled in by the caller.
typedef struct MlgDataset MlgDataset;

// Output of [`mlg_solve`].
typedef struct MlgResult MlgResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mlg_version(void);

// Message of the last failed call on this thread, empty after a success.
// The pointer stays valid until the next call into the library.
const char *mlg_last_error_message(void);

// Creates an empty dataset over `n_nodes` entities.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MlgStatus mlg_dataset_new(size_t n_nodes, struct MlgDataset **out);

// Appends a view given as a row-major `n_nodes x cols` matrix.
//
// # Safety
// `ds` must come from [`mlg_dataset_new`]; `data` must point to
// `n_nodes * cols` readable doubles.
enum MlgStatus mlg_dataset_add_view(struct MlgDataset *ds, const double *data, size_t cols);

// Attaches `n_nodes` ground-truth labels.
//
// # Safety
// `ds` must come from [`mlg_dataset_new`]; `labels` must point to `len`
// readable values.
enum MlgStatus mlg_dataset_set_labels(struct MlgDataset *ds, const size_t *labels, size_t len);

// Number of views added so far, or 0 for a null handle.
//
// # Safety
// `ds` must be null or come from [`mlg_dataset_new`].
size_t mlg_dataset_n_views(const struct MlgDataset *ds);

// # Safety
// `ds` must be null or come from [`mlg_dataset_new`] and not be used afterwards.
void mlg_dataset_free(struct MlgDataset *ds);

// Default settings for `k` clusters and `n_views` views.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MlgStatus mlg_config_new(size_t k, size_t n_views, struct MlgConfig **out);

// Sets alpha of view `view` (0-based), or of every view when `view` is -1.
//
// # Safety
// `cfg` must come from [`mlg_config_new`].
enum MlgStatus mlg_config_set_alpha(struct MlgConfig *cfg, ptrdiff_t view, double value);

// Sets beta of view `view` (0-based), or of every view when `view` is -1.
//
// # Safety
// `cfg` must come from [`mlg_config_new`].
enum MlgStatus mlg_config_set_beta(struct MlgConfig *cfg, ptrdiff_t view, double value);

// Dual ascent step; a nonpositive value selects it automatically.
//
// # Safety
// `cfg` must come from [`mlg_config_new`].
enum MlgStatus mlg_config_set_rho(struct MlgConfig *cfg, double rho);

// # Safety
// `cfg` must come from [`mlg_config_new`].
enum MlgStatus mlg_config_set_tolerances(struct MlgConfig *cfg, double inner_tol, double outer_tol);

// # Safety
// `cfg` must come from [`mlg_config_new`].
enum MlgStatus mlg_config_set_max_iterations(struct MlgConfig *cfg,
                                             size_t max_outer,
                                             size_t max_inner);

// Enables beta escalation; `factor <= 0` disables it.
//
// # Safety
// `cfg` must come from [`mlg_config_new`].
enum MlgStatus mlg_config_set_beta_escalation(struct MlgConfig *cfg, double factor, double cap);

// # Safety
// `cfg` must come from [`mlg_config_new`].
enum MlgStatus mlg_config_set_normalize_covariance(struct MlgConfig *cfg, bool on);

// # Safety
// `cfg` must be null or come from [`mlg_config_new`] and not be used afterwards.
void mlg_config_free(struct MlgConfig *cfg);

// Learns the multi-layer graph and embedding.
//
// # Safety
// `ds` and `cfg` must be live handles; `out` must be writable.
enum MlgStatus mlg_solve(const struct MlgDataset *ds,
                         const struct MlgConfig *cfg,
                         struct MlgResult **out);

// # Safety
// `res` must be null or come from [`mlg_solve`].
size_t mlg_result_n_nodes(const struct MlgResult *res);

// # Safety
// `res` must be null or come from [`mlg_solve`].
size_t mlg_result_n_layers(const struct MlgResult *res);

// Embedding dimension `K`.
//
// # Safety
// `res` must be null or come from [`mlg_solve`].
size_t mlg_result_k(const struct MlgResult *res);

// # Safety
// `res` must be null or come from [`mlg_solve`].
size_t mlg_result_iterations(const struct MlgResult *res);

// # Safety
// `res` must be null or come from [`mlg_solve`].
bool mlg_result_converged(const struct MlgResult *res);

// Whether every layer has exactly `K` components.
//
// # Safety
// `res` must be null or come from [`mlg_solve`].
bool mlg_result_rank_achieved(const struct MlgResult *res);

// Copies the row-major `N x K` embedding into `buf`.
//
// # Safety
// `res` must come from [`mlg_solve`]; `buf` must hold `len` doubles.
enum MlgStatus mlg_result_copy_embedding(const struct MlgResult *res, double *buf, size_t len);

// Copies Laplacian `layer` (0-based) as a row-major `N x N` matrix.
//
// # Safety
// `res` must come from [`mlg_solve`]; `buf` must hold `len` doubles.
enum MlgStatus mlg_result_copy_laplacian(const struct MlgResult *res,
                                         size_t layer,
                                         double *buf,
                                         size_t len);

// Connected components of layer `layer` (0-based).
//
// # Safety
// `res` must come from [`mlg_solve`]; `out` must be writable.
enum MlgStatus mlg_result_component_count(const struct MlgResult *res, size_t layer, size_t *out);

// Number of recorded objective values.
//
// # Safety
// `res` must be null or come from [`mlg_solve`].
size_t mlg_result_objective_len(const struct MlgResult *res);

// # Safety
// `res` must come from [`mlg_solve`]; `buf` must hold `len` doubles.
enum MlgStatus mlg_result_copy_objective(const struct MlgResult *res, double *buf, size_t len);

// # Safety
// `res` must be null or come from [`mlg_solve`] and not be used afterwards.
void mlg_result_free(struct MlgResult *res);

// k-means with plus-plus seeding on the rows of a row-major `n x dim`
// matrix. Writes `n` labels in `0..k`.
//
// # Safety
// `points` must hold `n * dim` doubles and `labels` room for `n` values.
enum MlgStatus mlg_kmeans(const double *points,
                          size_t n,
                          size_t dim,
                          size_t k,
                          size_t restarts,
                          uint64_t seed,
                          size_t *labels);

// Normalized mutual information between two labelings of length `n`,
// normalized by the arithmetic mean of the entropies.
//
// # Safety
// `a` and `b` must hold `n` values; `out` must be writable.
enum MlgStatus mlg_nmi(const size_t *a, const size_t *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLGRAPH_H */
