#ifndef OUTERLOOP_H
#define OUTERLOOP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. The first five match the command-line exit codes.
typedef enum OlStatus {
  OL_STATUS_OK = 0,
  OL_STATUS_CONFIG = 1,
  OL_STATUS_CONTROLLER = 2,
  OL_STATUS_DIVERGENCE = 3,
  OL_STATUS_VALIDATION = 4,
  OL_STATUS_NULL_POINTER = 5,
  OL_STATUS_IO = 6,
  OL_STATUS_PANIC = 7,
} OlStatus;

// A parsed, validated scenario.
typedef struct OlScenario OlScenario;

// Logged rows of one run.
typedef struct OlTrajectory OlTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until
// the next call into this library from the same thread.
const char *ol_last_error(void);

// Parse a scenario from TOML text.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum OlStatus ol_scenario_from_toml(const char *text, struct OlScenario **out);

// Load a bundled preset by name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum OlStatus ol_scenario_from_preset(const char *name, struct OlScenario **out);

// Override the simulated duration (s).
//
// # Safety
// `scenario` must come from this library and not be freed.
enum OlStatus ol_scenario_set_duration(struct OlScenario *scenario, double duration);

// Override the number of plant integration pieces per inner tick.
//
// # Safety
// `scenario` must come from this library and not be freed.
enum OlStatus ol_scenario_set_plant_substeps(struct OlScenario *scenario, size_t substeps);

// # Safety
// `scenario` must come from this library, or be null.
void ol_scenario_free(struct OlScenario *scenario);

// Run a scenario. On a controller error or divergence the rows logged
// before the failure are still returned in `out`.
//
// # Safety
// `scenario` must come from this library and `out` be a valid pointer.
enum OlStatus ol_run(const struct OlScenario *scenario, struct OlTrajectory **out);

// Number of logged rows; 0 for a null handle.
//
// # Safety
// `traj` must come from this library, or be null.
size_t ol_trajectory_rows(const struct OlTrajectory *traj);

// Number of columns per row.
size_t ol_trajectory_cols(void);

// Static name of column `col`, or null when out of range.
const char *ol_trajectory_column_name(size_t col);

// Value at (`row`, `col`). `NaN` marks quantities that do not apply.
//
// # Safety
// `traj` must come from this library and `out` be a valid pointer.
enum OlStatus ol_trajectory_value(const struct OlTrajectory *traj,
                                  size_t row,
                                  size_t col,
                                  double *out);

// Write the trajectory as CSV, identical to the command-line output.
//
// # Safety
// `traj` must come from this library and `path` be NUL-terminated.
enum OlStatus ol_trajectory_write_csv(const struct OlTrajectory *traj, const char *path);

// # Safety
// `traj` must come from this library, or be null.
void ol_trajectory_free(struct OlTrajectory *traj);

// Tool position of the reference arm at joint angles `q[3]` (rad).
//
// # Safety
// `q` must point to 3 and `x_out` to 3 writable doubles.
enum OlStatus ol_forward_kinematics(const double *q, double *x_out);

// Link-side inertia matrix of the reference arm at `q[3]`, row-major
// into `m_out[9]`.
//
// # Safety
// `q` must point to 3 and `m_out` to 9 writable doubles.
enum OlStatus ol_link_mass_matrix(const double *q, double *m_out);

// Run the self-checks whose name contains `filter` (all when null).
//
// # Safety
// `filter` must be NUL-terminated or null.
enum OlStatus ol_validate(const char *filter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OUTERLOOP_H */
