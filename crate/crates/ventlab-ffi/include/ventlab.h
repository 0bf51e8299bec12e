#ifndef VENTLAB_H
#define VENTLAB_H

/* Generated by cbindgen from the ventlab-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum VlStatus {
  VL_STATUS_OK = 0,
  VL_STATUS_NULL_POINTER = 1,
  VL_STATUS_INVALID_ARGUMENT = 2,
  VL_STATUS_CODEC = 3,
  VL_STATUS_SIM = 4,
  VL_STATUS_IO = 5,
  VL_STATUS_INTERNAL = 6,
} VlStatus;

/**
 * Opaque: a loaded cohort of twin parameter records.
 */
typedef struct VlCohort VlCohort;

/**
 * Opaque: a loaded policy checkpoint.
 */
typedef struct VlPolicy VlPolicy;

/**
 * Opaque: one live digital twin.
 */
typedef struct VlTwin VlTwin;

/**
 * One ventilator setting tuple in engineering units.
 */
typedef struct VlAction {
  double peep_cmh2o;
  double fio2;
  double rr_per_min;
  uint8_t ie_insp;
  uint8_t ie_exp;
  double pvent_cmh2o;
} VlAction;

/**
 * Observation returned by one twin step: the 24 observed state channels
 * plus breath mechanics and the hidden injury level.
 */
typedef struct VlObservation {
  double state[24];
  double pip_cmh2o;
  double peep_set_cmh2o;
  double auto_peep_cmh2o;
  double tidal_volume_ml;
  double driving_pressure_cmh2o;
  double alveolar_ventilation_l_per_min;
  double mechanical_power_proxy;
  double injury_level;
} VlObservation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static C string.
 */
const char *vl_version(void);

/**
 * Copies the last error message on this thread into `buf` (truncating) and
 * returns the full message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (length query).
 */
uintptr_t vl_last_error(char *buf, uintptr_t cap);

/**
 * Number of cells in the discrete action grid.
 */
uint32_t vl_action_count(void);

/**
 * Number of observed state channels.
 */
uint32_t vl_state_dim(void);

/**
 * Encodes an on-grid action into its flat index.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum VlStatus vl_action_encode(const struct VlAction *action, uint32_t *out_index);

/**
 * Decodes a flat index back into set-point values.
 *
 * # Safety
 * `out` must be valid.
 */
enum VlStatus vl_action_decode(uint32_t index, struct VlAction *out);

/**
 * Loads a cohort file produced by the `spawn-cohort` pipeline stage.
 * Returns null on failure (see `vl_last_error`).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct VlCohort *vl_cohort_load(const char *path);

/**
 * Number of twins in a loaded cohort.
 *
 * # Safety
 * `cohort` must come from `vl_cohort_load` and not be freed.
 */
uintptr_t vl_cohort_len(const struct VlCohort *cohort);

/**
 * # Safety
 * `cohort` must come from `vl_cohort_load`; it is invalid afterwards.
 */
void vl_cohort_free(struct VlCohort *cohort);

/**
 * Instantiates one twin at its ventilated equilibrium for the given
 * initial settings. Returns null on failure.
 *
 * # Safety
 * `cohort` must be a live cohort handle.
 */
struct VlTwin *vl_twin_create(const struct VlCohort *cohort,
                              uintptr_t twin_index,
                              uint32_t init_action_index);

/**
 * Advances the twin by one decision step. Deterministic in `seed`.
 *
 * # Safety
 * `twin` must be a live twin handle; `out_obs` may be null.
 */
enum VlStatus vl_twin_step(struct VlTwin *twin,
                           uint32_t action_index,
                           uint64_t seed,
                           struct VlObservation *out_obs);

/**
 * Writes the twin's current 24-channel observed state into `out_state`.
 *
 * # Safety
 * `out_state` must point to 24 writable doubles.
 */
enum VlStatus vl_twin_observe(const struct VlTwin *twin, double *out_state);

/**
 * # Safety
 * `twin` must come from `vl_twin_create`; it is invalid afterwards.
 */
void vl_twin_free(struct VlTwin *twin);

/**
 * Loads a policy checkpoint. Returns null on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct VlPolicy *vl_policy_load(const char *path);

/**
 * History length the policy expects.
 *
 * # Safety
 * `policy` must be a live policy handle.
 */
uintptr_t vl_policy_window_len(const struct VlPolicy *policy);

/**
 * Picks the greedy action for a raw (unnormalized) state history.
 *
 * `states` is row-major `rows x 24`, oldest state first, newest last. If
 * `rows` is shorter than the policy's window the history is left-padded by
 * repeating the first row.
 *
 * # Safety
 * `states` must point to `rows * 24` doubles; `out_action` must be valid.
 */
enum VlStatus vl_policy_select(const struct VlPolicy *policy,
                               const double *states,
                               uintptr_t rows,
                               uint32_t *out_action);

/**
 * # Safety
 * `policy` must come from `vl_policy_load`; it is invalid afterwards.
 */
void vl_policy_free(struct VlPolicy *policy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VENTLAB_H */
