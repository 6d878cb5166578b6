#ifndef AUTOTUNE_H
#define AUTOTUNE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of GEMM tuning parameters.
#define AT_GEMM_PARAMS 8

// Number of convolution tuning parameters.
#define AT_CONV_PARAMS 12

typedef enum AtStatus {
  AT_STATUS_OK = 0,
  AT_STATUS_NULL_POINTER = 1,
  AT_STATUS_INVALID_ARGUMENT = 2,
  AT_STATUS_IO = 3,
  AT_STATUS_PARSE = 4,
  AT_STATUS_ILLEGAL_TUNING = 5,
  AT_STATUS_EMPTY_SPACE = 6,
  AT_STATUS_MODEL_MISMATCH = 7,
  AT_STATUS_UNSUPPORTED = 8,
  AT_STATUS_INTERNAL = 9,
  AT_STATUS_PANIC = 10,
} AtStatus;

typedef enum AtKind {
  AT_KIND_GEMM = 0,
  AT_KIND_CONV = 1,
} AtKind;

// Opaque hardware descriptor.
typedef struct AtHardware AtHardware;

// Opaque trained performance model.
typedef struct AtModel AtModel;

// `C = op(A) op(B)`; `dtype_bytes` is 2, 4 or 8.
typedef struct AtGemmInput {
  uint64_t m;
  uint64_t n;
  uint64_t k;
  uint32_t dtype_bytes;
  bool trans_a;
  bool trans_b;
} AtGemmInput;

// Stride-1, unpadded convolution of `n` images of `c x h x w`
// (`h = p + r - 1`, `w = q + s - 1`) with `k` filters of `c x r x s`.
typedef struct AtConvInput {
  uint64_t n;
  uint64_t p;
  uint64_t q;
  uint64_t k;
  uint64_t c;
  uint64_t r;
  uint64_t s;
  uint32_t dtype_bytes;
} AtConvInput;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code.
const char *at_status_message(enum AtStatus status);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`) and returns the full message length
// excluding the terminator.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t at_last_error(char *buf, size_t len);

// # Safety
// `out` must be valid for writes.
enum AtStatus at_hardware_synthetic(struct AtHardware **out);

// Loads a hardware descriptor JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum AtStatus at_hardware_load(const char *path, struct AtHardware **out);

// # Safety
// `hw` must be null or a handle from `at_hardware_*` not yet freed.
void at_hardware_free(struct AtHardware *hw);

// Loads a model written by `autotune train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum AtStatus at_model_load(const char *path, struct AtModel **out);

// # Safety
// `model` must be null or a handle from `at_model_load` not yet freed.
void at_model_free(struct AtModel *model);

// # Safety
// `model` must be a live handle and `out` valid for writes.
enum AtStatus at_model_kind(const struct AtModel *model, enum AtKind *out);

// Sets `*legal` to whether `tuning` (`AT_GEMM_PARAMS` values) runs on `hw`.
//
// # Safety
// Pointers must be valid; `tuning` must hold `AT_GEMM_PARAMS` values.
enum AtStatus at_gemm_is_legal(const struct AtHardware *hw,
                               const struct AtGemmInput *input,
                               const uint32_t *tuning,
                               bool *legal);

// # Safety
// Pointers must be valid; `tuning` must hold `AT_CONV_PARAMS` values.
enum AtStatus at_conv_is_legal(const struct AtHardware *hw,
                               const struct AtConvInput *input,
                               const uint32_t *tuning,
                               bool *legal);

// Predicted GFLOPS for `count` tunings stored back to back.
//
// # Safety
// `tunings` must hold `count * AT_GEMM_PARAMS` values, `out` `count` doubles.
enum AtStatus at_gemm_predict(const struct AtModel *model,
                              const struct AtGemmInput *input,
                              const uint32_t *tunings,
                              size_t count,
                              double *out);

// # Safety
// `tunings` must hold `count * AT_CONV_PARAMS` values, `out` `count` doubles.
enum AtStatus at_conv_predict(const struct AtModel *model,
                              const struct AtConvInput *input,
                              const uint32_t *tunings,
                              size_t count,
                              double *out);

// Picks a tuning from the default search space: the model ranks every legal
// configuration and the `top_k` best are re-measured with the analytical
// backend.
//
// # Safety
// Handles must be live; `out_tuning` must hold `AT_GEMM_PARAMS` values.
enum AtStatus at_gemm_infer(const struct AtModel *model,
                            const struct AtHardware *hw,
                            const struct AtGemmInput *input,
                            size_t top_k,
                            uint32_t *out_tuning,
                            double *out_gflops);

// # Safety
// Handles must be live; `out_tuning` must hold `AT_CONV_PARAMS` values.
enum AtStatus at_conv_infer(const struct AtModel *model,
                            const struct AtHardware *hw,
                            const struct AtConvInput *input,
                            size_t top_k,
                            uint32_t *out_tuning,
                            double *out_gflops);

// Runs the tiled CPU kernel. `A` is row-major `m x k` (`k x m` when
// `trans_a`), `B` is `k x n` (`n x k` when `trans_b`), `C` is `m x n`.
//
// # Safety
// Buffers must be valid for the given lengths.
enum AtStatus at_gemm_run_f32(const struct AtGemmInput *input,
                              const uint32_t *tuning,
                              const float *a,
                              size_t a_len,
                              const float *b,
                              size_t b_len,
                              float *c,
                              size_t c_len);

// # Safety
// Buffers must be valid for the given lengths.
enum AtStatus at_gemm_run_f64(const struct AtGemmInput *input,
                              const uint32_t *tuning,
                              const double *a,
                              size_t a_len,
                              const double *b,
                              size_t b_len,
                              double *c,
                              size_t c_len);

// Runs the implicit-GEMM CPU convolution. Images are `C,H,W,N`, filters
// `C,R,S,K` and the output `K,P,Q,N`, all row-major.
//
// # Safety
// Buffers must be valid for the given lengths.
enum AtStatus at_conv_run_f32(const struct AtConvInput *input,
                              const uint32_t *tuning,
                              const float *images,
                              size_t images_len,
                              const float *filters,
                              size_t filters_len,
                              float *out,
                              size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOTUNE_H */
