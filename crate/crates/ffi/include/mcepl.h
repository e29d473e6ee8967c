#ifndef MCEPL_H
#define MCEPL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum McStatus {
  MC_STATUS_OK = 0,
  MC_STATUS_NULL_POINTER = 1,
  MC_STATUS_INVALID_ARGUMENT = 2,
  MC_STATUS_SHAPE = 3,
  MC_STATUS_CONFIG = 4,
  MC_STATUS_GENERATION = 5,
  MC_STATUS_PROTOCOL = 6,
  MC_STATUS_SIMULATION = 7,
  MC_STATUS_INPUT = 8,
  MC_STATUS_IO = 9,
  MC_STATUS_PANIC = 10,
} McStatus;

/**
 * Owned byte buffer returned by the library.
 */
typedef struct McBuffer McBuffer;

/**
 * Parsed experiment configuration.
 */
typedef struct McConfig McConfig;

/**
 * Undirected communication graph.
 */
typedef struct McGraph McGraph;

/**
 * Layered binary mask under construction or decoded from a frame.
 */
typedef struct McMaskSet McMaskSet;

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *mc_last_error(void);

/**
 * Connected G(n, p) graph drawn from `seed`.
 *
 * # Safety
 * `out_graph` must be a valid pointer to writable storage.
 */
enum McStatus mc_graph_erdos_renyi(size_t n,
                                   double p,
                                   uint64_t seed,
                                   size_t max_retries,
                                   struct McGraph **out_graph);

/**
 * Cycle over `n >= 3` nodes.
 *
 * # Safety
 * `out_graph` must be a valid pointer to writable storage.
 */
enum McStatus mc_graph_ring(size_t n, struct McGraph **out_graph);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t mc_graph_node_count(const struct McGraph *graph);

/**
 * Copies the sorted neighbors of `node` into `buf` (capacity `cap`) and
 * stores the degree in `out_len`. A buffer shorter than the degree is an
 * error; query with `cap = 0` first to size it.
 *
 * # Safety
 * `graph` must be a live handle, `buf` valid for `cap` writes, `out_len` writable.
 */
enum McStatus mc_graph_neighbors(const struct McGraph *graph,
                                 size_t node,
                                 size_t *buf,
                                 size_t cap,
                                 size_t *out_len);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void mc_graph_free(struct McGraph *graph);

struct McMaskSet *mc_mask_set_new(void);

/**
 * Appends a layer. `bits` holds one byte per entry (0 or 1), row-major
 * over `shape`. Layer ids must be strictly ascending.
 *
 * # Safety
 * `set` must be a live handle; `shape` valid for `ndim` reads and `bits`
 * for the product of the extents.
 */
enum McStatus mc_mask_set_push_layer(struct McMaskSet *set,
                                     size_t layer,
                                     const size_t *shape,
                                     size_t ndim,
                                     const uint8_t *bits,
                                     size_t len);

/**
 * Number of layers, or 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t mc_mask_set_layer_count(const struct McMaskSet *set);

/**
 * Entry count of the `index`-th layer.
 *
 * # Safety
 * `set` must be a live handle and `out_len` writable.
 */
enum McStatus mc_mask_set_layer_len(const struct McMaskSet *set, size_t index, size_t *out_len);

/**
 * Copies the `index`-th layer as one byte per entry into `buf`.
 *
 * # Safety
 * `set` must be a live handle and `buf` valid for `cap` writes.
 */
enum McStatus mc_mask_set_layer_bits(const struct McMaskSet *set,
                                     size_t index,
                                     uint8_t *buf,
                                     size_t cap);

/**
 * Payload bits of one transmission of `set` (one bit per entry).
 *
 * # Safety
 * `set` must be a live handle and `out_bits` writable.
 */
enum McStatus mc_mask_set_payload_bits(const struct McMaskSet *set, uint64_t *out_bits);

/**
 * Header bits of a frame carrying `layers` layers.
 */
uint64_t mc_frame_header_bits(size_t layers);

/**
 * # Safety
 * `set` must be null or a handle not yet freed.
 */
void mc_mask_set_free(struct McMaskSet *set);

/**
 * # Safety
 * `buf` must be a live handle.
 */
const uint8_t *mc_buffer_data(const struct McBuffer *buf);

/**
 * # Safety
 * `buf` must be null or a live handle.
 */
size_t mc_buffer_len(const struct McBuffer *buf);

/**
 * # Safety
 * `buf` must be null or a handle not yet freed.
 */
void mc_buffer_free(struct McBuffer *buf);

/**
 * Serializes `set` into a wire frame.
 *
 * # Safety
 * `set` must be a live handle and `out_frame` writable.
 */
enum McStatus mc_mask_encode(const struct McMaskSet *set,
                             size_t sender,
                             uint32_t round,
                             struct McBuffer **out_frame);

/**
 * Parses a frame, validating it against the layer ids and shapes of
 * `layout`. On success `out_set` receives a new mask set.
 *
 * # Safety
 * `bytes` must be valid for `len` reads, `layout` a live handle and
 * `out_set` writable.
 */
enum McStatus mc_mask_decode(const uint8_t *bytes,
                             size_t len,
                             const struct McMaskSet *layout,
                             size_t *out_sender,
                             struct McMaskSet **out_set);

/**
 * Keeps the `max(1, round(r·n))` largest-magnitude scores: writes one
 * byte per entry (0 or 1) into `out_bits`.
 *
 * # Safety
 * `scores` must be valid for `n` reads and `out_bits` for `n` writes.
 */
enum McStatus mc_threshold(const double *scores, size_t n, double r, uint8_t *out_bits);

/**
 * Parses configuration text (NUL-terminated UTF-8).
 *
 * # Safety
 * `text` must be a valid C string and `out_config` writable.
 */
enum McStatus mc_config_parse(const char *text, struct McConfig **out_config);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum McStatus mc_config_set_seed(struct McConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must be a live handle and `dir` a valid C string.
 */
enum McStatus mc_config_set_out_dir(struct McConfig *config, const char *dir);

/**
 * Runs the configured experiment, writing artifacts to its output directory.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum McStatus mc_config_run(const struct McConfig *config, bool quiet);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void mc_config_free(struct McConfig *config);

#endif  /* MCEPL_H */
