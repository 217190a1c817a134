#ifndef RGNN_LAB_H
#define RGNN_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RglDirection {
  RGL_DIRECTION_C2H = 0,
  RGL_DIRECTION_H2C = 1,
} RglDirection;

typedef enum RglSemantics {
  RGL_SEMANTICS_CONVERGING = 0,
  RGL_SEMANTICS_HALTING = 1,
  RGL_SEMANTICS_OUTPUT_CONVERGING = 2,
} RglSemantics;

// Result of an FFI call.
typedef enum RglStatus {
  RGL_STATUS_OK = 0,
  RGL_STATUS_NULL_POINTER = 1,
  RGL_STATUS_INVALID_UTF8 = 2,
  RGL_STATUS_PARSE = 3,
  RGL_STATUS_INVALID_MODEL = 4,
  RGL_STATUS_NOT_SIMPLE = 5,
  RGL_STATUS_BUDGET_EXHAUSTED = 6,
  RGL_STATUS_UNSTABLE_OUTPUT = 7,
  RGL_STATUS_UNKNOWN_NAME = 8,
  RGL_STATUS_IO = 9,
  RGL_STATUS_PANIC = 10,
} RglStatus;

// A labelled graph.
typedef struct RglGraph RglGraph;

// A loaded model.
typedef struct RglModel RglModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call on this thread.
const char *rgl_last_error(void);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void rgl_string_free(char *s);

// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum RglStatus rgl_model_from_json(const char *json, struct RglModel **out);

// # Safety
// `name` must be a nul-terminated string; `out` must be writable.
enum RglStatus rgl_model_gallery(const char *name, struct RglModel **out);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum RglStatus rgl_model_to_json(const struct RglModel *model, char **out);

// 1 for a halting model, 0 for a plain one, -1 for null.
//
// # Safety
// `model` must be null or a live handle.
int32_t rgl_model_is_halting(const struct RglModel *model);

// # Safety
// `model` must be null or a handle not yet freed.
void rgl_model_free(struct RglModel *model);

// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum RglStatus rgl_graph_from_json(const char *json, struct RglGraph **out);

// # Safety
// `graph` must be a live handle; `out` must be writable.
enum RglStatus rgl_graph_to_json(const struct RglGraph *graph, char **out);

// # Safety
// `graph` must be null or a live handle.
uintptr_t rgl_graph_vertex_count(const struct RglGraph *graph);

// # Safety
// `graph` must be null or a handle not yet freed.
void rgl_graph_free(struct RglGraph *graph);

// Runs `model` on `graph`; writes the summary `{"k","certificate","output"}`
// to `out` even when the run exhausts its budget or has an unstable output
// cycle, in which case the status says so.
//
// # Safety
// Handles must be live; `out` must be writable.
enum RglStatus rgl_run(const struct RglModel *model,
                       const struct RglGraph *graph,
                       enum RglSemantics semantics,
                       uintptr_t max_steps,
                       uintptr_t window,
                       char **out);

// Derives a model in the given direction. `bound` may be null unless
// `simple` is set and the direction is h2c.
//
// # Safety
// `model` must be live; `bound` null or nul-terminated; `out` writable.
enum RglStatus rgl_transform(const struct RglModel *model,
                             enum RglDirection direction,
                             bool simple,
                             const char *bound,
                             struct RglModel **out);

// Compiles the halting `model`, runs both sides on `graph` and writes the
// report JSON to `out` and whether every check passed to `all_pass`.
//
// # Safety
// Handles must be live; `bound` null or nul-terminated; outputs writable.
enum RglStatus rgl_verify(const struct RglModel *model,
                          const struct RglGraph *graph,
                          bool simple,
                          const char *bound,
                          uintptr_t max_steps,
                          char **out,
                          bool *all_pass);

// Checks a relation `{"pairs":[[u,v],…]}` between `g` and `h`.
//
// # Safety
// Handles must be live; `relation` nul-terminated; `ok` writable.
enum RglStatus rgl_bisim_check(const struct RglGraph *g,
                               const struct RglGraph *h,
                               const char *relation,
                               bool *ok);

// Coarsest graded bisimulation on `g ⊎ h` as `{"blocks":[…]}`.
//
// # Safety
// Handles must be live; `out` writable.
enum RglStatus rgl_bisim_coarsest(const struct RglGraph *g, const struct RglGraph *h, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RGNN_LAB_H */
