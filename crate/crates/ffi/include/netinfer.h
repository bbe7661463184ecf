#ifndef NETINFER_H
#define NETINFER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NiModel {
  NI_MODEL_VOTER = 0,
  // Coupled map lattice with default parameters.
  NI_MODEL_CML = 1,
} NiModel;

typedef enum NiStatus {
  NI_STATUS_OK = 0,
  NI_STATUS_NULL_POINTER = 1,
  NI_STATUS_INVALID_ARGUMENT = 2,
  NI_STATUS_CONFIG = 3,
  NI_STATUS_MISSING_INPUT = 4,
  NI_STATUS_IO = 5,
  NI_STATUS_UNDEFINED_METRIC = 6,
  NI_STATUS_RUNTIME = 7,
  NI_STATUS_PANIC = 8,
} NiStatus;

// Opaque simulated dataset.
typedef struct NiDataset NiDataset;

// Opaque experiment configuration.
typedef struct NiExperiment NiExperiment;

// Opaque undirected graph.
typedef struct NiGraph NiGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread; do not free.
const char *ni_last_error_message(void);

// Library version as a static nul-terminated string.
const char *ni_version(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ni_string_free(char *s);

// Watts-Strogatz graph with `n` nodes, even mean degree `k` and rewiring probability `p`.
//
// # Safety
// `out` must be valid for writes.
enum NiStatus ni_graph_generate_ws(size_t n,
                                   size_t k,
                                   double p,
                                   uint64_t seed,
                                   struct NiGraph **out);

// # Safety
// `g` must be a live graph handle; `out` valid for writes.
enum NiStatus ni_graph_node_count(const struct NiGraph *g, size_t *out);

// # Safety
// `g` must be a live graph handle; `out` valid for writes.
enum NiStatus ni_graph_edge_count(const struct NiGraph *g, size_t *out);

// Writes the row-major `n * n` 0/1 adjacency into `buf` of length `len`.
//
// # Safety
// `g` must be a live graph handle; `buf` valid for `len` doubles.
enum NiStatus ni_graph_adjacency(const struct NiGraph *g, double *buf, size_t len);

// # Safety
// `g` must be null or a handle not yet freed.
void ni_graph_free(struct NiGraph *g);

// Simulates `model` on `g`. Voter datasets use one transition per sample.
//
// # Safety
// `g` must be a live graph handle; `out` valid for writes.
enum NiStatus ni_dataset_simulate(const struct NiGraph *g,
                                  enum NiModel model,
                                  size_t simulations,
                                  size_t steps,
                                  size_t record_length,
                                  uint64_t seed,
                                  struct NiDataset **out);

// # Safety
// `ds` must be a live dataset handle; outputs valid for writes.
enum NiStatus ni_dataset_shape(const struct NiDataset *ds,
                               size_t *samples,
                               size_t *states_per_record,
                               size_t *nodes,
                               size_t *dim);

// Copies all states (`[sample][time][node][dim]`, `f32`) into `buf` of length `len`.
//
// # Safety
// `ds` must be a live dataset handle; `buf` valid for `len` floats.
enum NiStatus ni_dataset_states(const struct NiDataset *ds, float *buf, size_t len);

// # Safety
// `ds` must be a live dataset handle; `dir` a nul-terminated path.
enum NiStatus ni_dataset_save(const struct NiDataset *ds, const char *dir);

// # Safety
// `dir` must be a nul-terminated path; `out` valid for writes.
enum NiStatus ni_dataset_load(const char *dir, struct NiDataset **out);

// # Safety
// `ds` must be null or a handle not yet freed.
void ni_dataset_free(struct NiDataset *ds);

// Parses an experiment config from JSON text.
//
// # Safety
// `json` must be nul-terminated; `out` valid for writes.
enum NiStatus ni_experiment_from_json(const char *json, struct NiExperiment **out);

// Applies a `key=value` override (same syntax as the CLI `--set`).
//
// # Safety
// `exp` must be a live experiment handle; `assignment` nul-terminated.
enum NiStatus ni_experiment_set(struct NiExperiment *exp, const char *assignment);

// Simulates, trains and evaluates; `*metrics_json` receives the metrics report
// as JSON (free with `ni_string_free`).
//
// # Safety
// `exp` must be a live experiment handle; `metrics_json` valid for writes.
enum NiStatus ni_experiment_run(const struct NiExperiment *exp, char **metrics_json);

// # Safety
// `exp` must be null or a handle not yet freed.
void ni_experiment_free(struct NiExperiment *exp);

// AUC of row-major `n * n` edge scores against a 0/1 truth over the upper triangle.
//
// # Safety
// `scores` and `truth` must each hold `n * n` doubles; `out` valid for writes.
enum NiStatus ni_auc(const double *scores, const double *truth, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETINFER_H */
