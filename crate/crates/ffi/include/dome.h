#ifndef DOME_H
#define DOME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes shared by every entry point.
 */
typedef enum DomeStatus {
  DOME_STATUS_OK = 0,
  DOME_STATUS_NULL_POINTER = 1,
  DOME_STATUS_INVALID_ARGUMENT = 2,
  DOME_STATUS_DIMENSION = 3,
  DOME_STATUS_DOMAIN = 4,
  DOME_STATUS_FORMAT = 5,
  DOME_STATUS_IO = 6,
  DOME_STATUS_BUFFER_TOO_SMALL = 7,
  DOME_STATUS_PANIC = 8,
  DOME_STATUS_OTHER = 9,
} DomeStatus;

/*
 Trained network behind an opaque pointer.
 */
typedef struct DomeNetwork DomeNetwork;

/*
 Partial derivatives of the scalar DOME activation.
 */
typedef struct DomeGradient {
  double dx;
  double dmu;
  double dsigma;
} DomeGradient;

/*
 Partial derivatives of the penalized DOME activation.
 */
typedef struct PdomeGradient {
  double dx;
  double dmu;
  double dsigma;
  double dpi;
} PdomeGradient;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null after a
 success. Valid until the next call on the same thread.
 */
const char *dome_last_error(void);

/*
 Static, NUL-terminated name of a status code.
 */
const char *dome_status_name(enum DomeStatus status);

/*
 Scalar DOME value at `x`.

 # Safety
 `out` must be valid for one write.
 */
enum DomeStatus dome_scalar_forward(double x, double mu, double sigma, double *out);

/*
 Scalar DOME partial derivatives at `x`.

 # Safety
 `out` must be valid for one write.
 */
enum DomeStatus dome_scalar_backward(double x, double mu, double sigma, struct DomeGradient *out);

/*
 Penalized DOME value at `x`.

 # Safety
 `out` must be valid for one write.
 */
enum DomeStatus dome_pdome_forward(double x, double mu, double sigma, double pi, double *out);

/*
 Penalized DOME partial derivatives at `x`.

 # Safety
 `out` must be valid for one write.
 */
enum DomeStatus dome_pdome_backward(double x,
                                    double mu,
                                    double sigma,
                                    double pi,
                                    struct PdomeGradient *out);

/*
 Multi-class DOME scores of one point `x` in `n − 1` dimensions,
 written to `out[0..n]`.

 # Safety
 `x` must hold `n − 1` values and `out` must have room for `out_len`.
 */
enum DomeStatus dome_mdome_forward(const double *x,
                                   size_t n,
                                   double mu,
                                   double sigma,
                                   double *out,
                                   size_t out_len);

/*
 Loads a `DOME1` checkpoint file. On success `*out` owns a new handle.

 # Safety
 `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum DomeStatus dome_network_load(const char *path, struct DomeNetwork **out);

/*
 Parses an in-memory `DOME1` checkpoint.

 # Safety
 `bytes` must hold `len` bytes and `out` be valid for one write.
 */
enum DomeStatus dome_network_from_bytes(const uint8_t *bytes, size_t len, struct DomeNetwork **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `net` must come from this library and not be used afterwards.
 */
void dome_network_free(struct DomeNetwork *net);

/*
 Shape queries: values per input example, output width and embedding
 width.

 # Safety
 `net` must be a live handle; each non-null pointer valid for one write.
 */
enum DomeStatus dome_network_dims(const struct DomeNetwork *net,
                                  size_t *input_len,
                                  size_t *output_width,
                                  size_t *embedding_dim);

/*
 Predicted class of each of `rows` row-major examples.

 # Safety
 `inputs` must hold `rows · input_len` values; `labels` room for `rows`.
 */
enum DomeStatus dome_network_predict(const struct DomeNetwork *net,
                                     const double *inputs,
                                     size_t rows,
                                     size_t *labels);

/*
 Network outputs, `rows × output_width`, row-major.

 # Safety
 `inputs` must hold `rows · input_len` values; `out` room for `out_len`.
 */
enum DomeStatus dome_network_output(const struct DomeNetwork *net,
                                    const double *inputs,
                                    size_t rows,
                                    double *out,
                                    size_t out_len);

/*
 Penultimate-layer embeddings, `rows × embedding_dim`, row-major.

 # Safety
 `inputs` must hold `rows · input_len` values; `out` room for `out_len`.
 */
enum DomeStatus dome_network_embed(const struct DomeNetwork *net,
                                   const double *inputs,
                                   size_t rows,
                                   double *out,
                                   size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOME_H */
