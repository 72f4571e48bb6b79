#ifndef EVHIN_H
#define EVHIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvhinStatus {
  EVHIN_STATUS_OK = 0,
  EVHIN_STATUS_NULL_POINTER = 1,
  EVHIN_STATUS_INVALID_ARGUMENT = 2,
  EVHIN_STATUS_IO = 3,
  EVHIN_STATUS_PARSE = 4,
  EVHIN_STATUS_NUMERIC = 5,
  EVHIN_STATUS_BUFFER_TOO_SMALL = 6,
  EVHIN_STATUS_PANIC = 7,
} EvhinStatus;

/**
 * Sparse distance matrix handle.
 */
typedef struct EvhinDistance EvhinDistance;

/**
 * Heterogeneous graph handle.
 */
typedef struct EvhinHin EvhinHin;

/**
 * Ordered meta-path set handle.
 */
typedef struct EvhinPathSet EvhinPathSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *evhin_last_error(void);

/**
 * Builds a graph from a JSON-lines corpus. `enrich_dir` may be null.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum EvhinStatus evhin_hin_from_corpus(const char *corpus_path,
                                       const char *enrich_dir,
                                       int64_t slot_secs,
                                       struct EvhinHin **out);

/**
 * Loads a graph snapshot written by `evhin build-hin`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum EvhinStatus evhin_hin_load(const char *path, struct EvhinHin **out);

/**
 * Number of instance nodes.
 *
 * # Safety
 * `hin` must come from this library; `out` must be writable.
 */
enum EvhinStatus evhin_hin_instance_count(const struct EvhinHin *hin, size_t *out);

/**
 * # Safety
 * `hin` must be null or a live handle from this library.
 */
void evhin_hin_free(struct EvhinHin *hin);

/**
 * Default instance-anchored path set; `max_len` 0 selects the default.
 *
 * # Safety
 * `out` must be writable.
 */
enum EvhinStatus evhin_pathset_detection(size_t max_len, struct EvhinPathSet **out);

/**
 * Default event-anchored path set; `max_len` 0 selects the default.
 *
 * # Safety
 * `out` must be writable.
 */
enum EvhinStatus evhin_pathset_evolution(size_t max_len, struct EvhinPathSet **out);

/**
 * # Safety
 * `paths` must come from this library; `out` must be writable.
 */
enum EvhinStatus evhin_pathset_len(const struct EvhinPathSet *paths, size_t *out);

/**
 * # Safety
 * `paths` must be null or a live handle from this library.
 */
void evhin_pathset_free(struct EvhinPathSet *paths);

/**
 * Dense row-major KIES matrix over all anchors of the path set. Null
 * `weights` with `n_weights` 0 means uniform weights. `out` must hold
 * `n * n` values where `n` is the anchor count.
 *
 * # Safety
 * Handles must come from this library; buffers must hold the stated
 * lengths.
 */
enum EvhinStatus evhin_kies_matrix(const struct EvhinHin *hin,
                                   const struct EvhinPathSet *paths,
                                   const double *weights,
                                   size_t n_weights,
                                   double *out,
                                   size_t out_len);

/**
 * Distances `1 - KIES` over all anchors, kept sparse.
 *
 * # Safety
 * As for [`evhin_kies_matrix`]; `out` must be writable.
 */
enum EvhinStatus evhin_distance_from_kies(const struct EvhinHin *hin,
                                          const struct EvhinPathSet *paths,
                                          const double *weights,
                                          size_t n_weights,
                                          struct EvhinDistance **out);

/**
 * Distance matrix from `n * n` row-major values in `[0, 1]`.
 *
 * # Safety
 * `data` must hold `n * n` values; `out` must be writable.
 */
enum EvhinStatus evhin_distance_from_dense(const double *data,
                                           size_t n,
                                           struct EvhinDistance **out);

/**
 * # Safety
 * `dist` must come from this library; `out` must be writable.
 */
enum EvhinStatus evhin_distance_len(const struct EvhinDistance *dist, size_t *out);

/**
 * # Safety
 * `dist` must be null or a live handle from this library.
 */
void evhin_distance_free(struct EvhinDistance *dist);

/**
 * Density clustering; writes one label per point (`-1` is noise).
 *
 * # Safety
 * `dist` must come from this library; `labels` must hold `n_labels`
 * values.
 */
enum EvhinStatus evhin_cluster(const struct EvhinDistance *dist,
                               double eps,
                               size_t min_pts,
                               size_t threads,
                               int64_t *labels,
                               size_t n_labels);

/**
 * Normalized mutual information between two labelings of `n` items.
 *
 * # Safety
 * `pred` and `truth` must hold `n` values; `out` must be writable.
 */
enum EvhinStatus evhin_nmi(const int64_t *pred, const int64_t *truth, size_t n, double *out);

/**
 * Popularity score `-log10(r - 1 + c)` for the norm ratio `r >= 1` of two
 * representations; positive means same class. Zero vectors are rejected.
 *
 * # Safety
 * `vi` and `vj` must hold `dim` values; `out` must be writable.
 */
enum EvhinStatus evhin_popularity_score(const double *vi,
                                        const double *vj,
                                        size_t dim,
                                        double c,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVHIN_H */
