#ifndef DEBIASRANK_H
#define DEBIASRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define DR_OK 0

#define DR_ERR_NULL 1

#define DR_ERR_IO 2

#define DR_ERR_FORMAT 3

#define DR_ERR_INVALID_ARGUMENT 4

#define DR_ERR_DIMENSION 5

#define DR_ERR_DIVERGED 6

#define DR_ERR_NO_USERS 7

#define DR_ERR_PANIC 8

#define DR_LOSS_BPR 0

#define DR_LOSS_DPR 1

#define DR_LOSS_DPR_MINUS 2

#define DR_LOSS_UBPR 3

#define DR_LOSS_RELMF 4

#define DR_LOSS_MFDU 5

#define DR_PROTOCOL_FULL_RANK 0

#define DR_PROTOCOL_SAMPLED99 1

// Split dataset handle.
typedef struct DrDataset DrDataset;

// Trained model handle.
typedef struct DrModel DrModel;

typedef struct DrTrainOptions {
  // One of the `DR_LOSS_*` constants.
  uint32_t loss;
  uint32_t dim;
  uint32_t epochs;
  uint32_t batch_size;
  uint32_t num_negatives;
  uint32_t patience;
  double lr;
  double l2;
  double alpha;
  double beta;
  uint64_t seed;
} DrTrainOptions;

typedef struct DrReport {
  double recall;
  double ndcg;
  double arp;
  double tap;
  uint64_t users_evaluated;
} DrReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *dr_last_error(void);

// Library version as a static nul-terminated string.
const char *dr_version(void);

// Loads a split directory written by `debiasrank ingest`.
//
// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
int32_t dr_dataset_load(const char *path, struct DrDataset **out);

// Builds a leave-one-out split from `len` positive `(users[k], items[k])` pairs.
//
// # Safety
// `users` and `items` must point to `len` readable values; `out` must be valid.
int32_t dr_dataset_from_pairs(uint32_t num_users,
                              uint32_t num_items,
                              const uint32_t *users,
                              const uint32_t *items,
                              uintptr_t len,
                              uint64_t split_seed,
                              struct DrDataset **out);

// # Safety
// `ds` must be null or a handle from this library.
uintptr_t dr_dataset_num_users(const struct DrDataset *ds);

// # Safety
// `ds` must be null or a handle from this library.
uintptr_t dr_dataset_num_items(const struct DrDataset *ds);

// Number of training positives.
//
// # Safety
// `ds` must be null or a handle from this library.
uintptr_t dr_dataset_num_train(const struct DrDataset *ds);

// # Safety
// `ds` must be null or a handle from this library not yet freed.
void dr_dataset_free(struct DrDataset *ds);

// Fills `opts` with the library defaults.
//
// # Safety
// `opts` must be a valid pointer.
int32_t dr_train_options_default(struct DrTrainOptions *opts);

// Trains on the dataset's training positives with early stopping on its
// validation items.
//
// # Safety
// `ds` and `opts` must be valid; `out` must be a valid pointer.
int32_t dr_train(const struct DrDataset *ds,
                 const struct DrTrainOptions *opts,
                 struct DrModel **out);

// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
int32_t dr_model_load(const char *path, struct DrModel **out);

// # Safety
// `model` must be valid and `path` a nul-terminated string.
int32_t dr_model_save(const struct DrModel *model, const char *path);

// 1-based epoch whose parameters the model holds.
//
// # Safety
// `model` must be null or a handle from this library.
uint32_t dr_model_best_epoch(const struct DrModel *model);

// # Safety
// `model` must be valid and `out` a valid pointer.
int32_t dr_model_score(const struct DrModel *model, uint32_t user, uint32_t item, double *out);

// Writes up to `k` item indices for `user`, best first, skipping the user's
// training positives in `ds`. `out_len` receives the number written.
//
// # Safety
// `model` and `ds` must be valid; `out_items` must have room for `k` values.
int32_t dr_model_top_k(const struct DrModel *model,
                       const struct DrDataset *ds,
                       uint32_t user,
                       uintptr_t k,
                       uint32_t *out_items,
                       uintptr_t *out_len);

// Scores the test items (`validation` = 0) or validation items (non-zero).
//
// # Safety
// `model`, `ds` and `out` must be valid.
int32_t dr_evaluate(const struct DrModel *model,
                    const struct DrDataset *ds,
                    uintptr_t k,
                    uint32_t protocol,
                    uint64_t seed,
                    int32_t validation,
                    struct DrReport *out);

// # Safety
// `model` must be null or a handle from this library not yet freed.
void dr_model_free(struct DrModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEBIASRANK_H */
