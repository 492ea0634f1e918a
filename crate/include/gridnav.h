/* C ABI for the gridnav occupancy-grid planning library.
 *
 * Handles are opaque; free every handle with its matching *_free function.
 * Fallible calls return a GnStatus and write outputs through pointers,
 * which are left untouched on failure.
 */

#ifndef GRIDNAV_H
#define GRIDNAV_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum GnStatus {
  GN_STATUS_OK = 0,
  GN_STATUS_NULL_POINTER = 1,
  GN_STATUS_INVALID_ARGUMENT = 2,
  GN_STATUS_PARSE_ERROR = 3,
  GN_STATUS_OUT_OF_BOUNDS = 4,
  GN_STATUS_NO_PATH = 5,
} GnStatus;

typedef struct GnGrid GnGrid;
typedef struct GnTrajectory GnTrajectory;

/* Grid lifecycle and queries. Text form: '0' free, '1' obstacle, rows
 * separated by '\n', no trailing newline. */
GnStatus gn_grid_parse(const char *text, GnGrid **out);
void gn_grid_free(GnGrid *grid);
GnStatus gn_grid_dims(const GnGrid *grid, size_t *height, size_t *width);
GnStatus gn_grid_is_obstacle(const GnGrid *grid, size_t row, size_t col,
                             int32_t *out);
GnStatus gn_grid_to_text(const GnGrid *grid, char **out);
void gn_string_free(char *s);

/* Trajectories: polylines through cell centers, given as parallel
 * row/column arrays of length len (len >= 1). */
GnStatus gn_trajectory_new(const size_t *rows, const size_t *cols, size_t len,
                           GnTrajectory **out);
void gn_trajectory_free(GnTrajectory *traj);
GnStatus gn_trajectory_length(const GnTrajectory *traj, double *out);

/* Validity: writes 1 when every segment stays on free cells, else 0 and the
 * first blocking cell (blocking_row/blocking_col may be NULL). */
GnStatus gn_validate(const GnGrid *grid, const GnTrajectory *traj,
                     int32_t *valid, size_t *blocking_row,
                     size_t *blocking_col);

/* Number of cells the straight segment between two cell centers touches. */
GnStatus gn_segment_cell_count(const GnGrid *grid, size_t r0, size_t c0,
                               size_t r1, size_t c1, size_t *out);

/* Shortest-path cost under 8-connected movement without corner cutting.
 * Returns GN_STATUS_NO_PATH when the goal is unreachable. */
GnStatus gn_astar_cost(const GnGrid *grid, size_t start_row, size_t start_col,
                       size_t goal_row, size_t goal_col, double *out_cost);

/* Static version string; do not free. */
const char *gn_version(void);

#ifdef __cplusplus
}
#endif

#endif /* GRIDNAV_H */
