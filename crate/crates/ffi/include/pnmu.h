/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef PNMU_H
#define PNMU_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum PnmuStatus {
  PNMU_STATUS_OK = 0,
  PNMU_STATUS_NULL_POINTER = 1,
  PNMU_STATUS_SHAPE = 2,
  PNMU_STATUS_PARAMETER = 3,
  PNMU_STATUS_NON_FINITE = 4,
  PNMU_STATUS_UNDEFINED_METRIC = 5,
  PNMU_STATUS_PARSE = 6,
  PNMU_STATUS_IO = 7,
  PNMU_STATUS_PANIC = 8,
} PnmuStatus;

/*
 Algorithm selector for [`pnmu_factorize`].
 */
typedef enum PnmuAlgorithm {
  PNMU_ALGORITHM_NMF = 0,
  PNMU_ALGORITHM_SNMF = 1,
  PNMU_ALGORITHM_NMU = 2,
  PNMU_ALGORITHM_LNMU = 3,
  PNMU_ALGORITHM_SNMU = 4,
  PNMU_ALGORITHM_PNMU = 5,
} PnmuAlgorithm;

/*
 Opaque factor pair `U` (n×r), `V` (r×m).
 */
typedef struct PnmuFactors PnmuFactors;

/*
 Opaque dense row-major matrix.
 */
typedef struct PnmuMatrix PnmuMatrix;

/*
 Solver parameters. Obtain defaults from [`pnmu_options_default`].
 */
typedef struct PnmuOptions {
  double phi_prime;
  double mu_prime;
  double epsilon;
  size_t maxiter;
  size_t inner_iter;
  size_t init_iter;
  uint64_t seed;
  /*
   Percentage of zeros for SNMF; negative means unset.
   */
  double target_sparsity;
} PnmuOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null after a success.
 The pointer stays valid until the next call into this library on the same thread.
 */
const char *pnmu_last_error_message(void);

/*
 Library version as a static nul-terminated string.
 */
const char *pnmu_version(void);

/*
 Defaults tuned for the synthetic benchmark.
 */
struct PnmuOptions pnmu_options_default(void);

/*
 Copies `n_rows * n_cols` row-major values into a new matrix.
 */
enum PnmuStatus pnmu_matrix_new(size_t n_rows,
                                size_t n_cols,
                                const double *data,
                                struct PnmuMatrix **out);

/*
 Reads a headerless numeric CSV file.
 */
enum PnmuStatus pnmu_matrix_read_csv(const char *path, struct PnmuMatrix **out);

void pnmu_matrix_free(struct PnmuMatrix *m);

/*
 Number of rows, or 0 for a null handle.
 */
size_t pnmu_matrix_rows(const struct PnmuMatrix *m);

/*
 Number of columns, or 0 for a null handle.
 */
size_t pnmu_matrix_cols(const struct PnmuMatrix *m);

/*
 Copies the row-major entries into `buf`, which must hold `len` ≥ rows·cols values.
 */
enum PnmuStatus pnmu_matrix_copy_data(const struct PnmuMatrix *m, double *buf, size_t len);

/*
 Factorizes `m` (pixels × bands) of an `height × width` image with `rank` factors.
 */
enum PnmuStatus pnmu_factorize(const struct PnmuMatrix *m,
                               size_t height,
                               size_t width,
                               size_t rank,
                               enum PnmuAlgorithm algorithm,
                               const struct PnmuOptions *options,
                               struct PnmuFactors **out);

void pnmu_factors_free(struct PnmuFactors *f);

/*
 Copy of the abundance matrix `U` as a new matrix handle.
 */
enum PnmuStatus pnmu_factors_u(const struct PnmuFactors *f, struct PnmuMatrix **out);

/*
 Copy of the signature matrix `V` as a new matrix handle.
 */
enum PnmuStatus pnmu_factors_v(const struct PnmuFactors *f, struct PnmuMatrix **out);

/*
 `100 ‖M − UV‖_F / ‖M‖_F`.
 */
enum PnmuStatus pnmu_relative_error(const struct PnmuMatrix *m,
                                    const struct PnmuFactors *f,
                                    double *out);

/*
 Percentage of zero entries of `U`.
 */
enum PnmuStatus pnmu_sparsity(const struct PnmuFactors *f, double *out);

/*
 Average anisotropic total variation of the max-normalized columns of `U`.
 */
enum PnmuStatus pnmu_spatial_coherence(const struct PnmuFactors *f,
                                       size_t height,
                                       size_t width,
                                       double *out);

/*
 Match score in percent between a ground-truth and an estimated abundance matrix.
 */
enum PnmuStatus pnmu_match_score(const struct PnmuMatrix *u_true,
                                 const struct PnmuMatrix *u_est,
                                 double *out);

/*
 Generates the 10×14-pixel, 20-band synthetic scene. Any output pointer may be null.
 */
enum PnmuStatus pnmu_synthetic_generate(double g,
                                        double p,
                                        uint64_t seed,
                                        struct PnmuMatrix **m_out,
                                        struct PnmuMatrix **u_true_out,
                                        struct PnmuMatrix **v_true_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PNMU_H */
