#ifndef LEAVENOW_H
#define LEAVENOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LnStatus {
  LN_STATUS_OK = 0,
  LN_STATUS_NULL_ARGUMENT = 1,
  LN_STATUS_INVALID_UTF8 = 2,
  LN_STATUS_PARSE = 3,
  LN_STATUS_VALIDATION = 4,
  LN_STATUS_PRECONDITION = 5,
  LN_STATUS_NOT_FOUND = 6,
  LN_STATUS_IO = 7,
  LN_STATUS_PANIC = 8,
} LnStatus;

// Opaque handle to a validated road network.
typedef struct LnNetwork LnNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parse and validate a network.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer. The
// handle written to `out` must be released with [`ln_network_free`].
enum LnStatus ln_network_from_json(const char *json, struct LnNetwork **out);

// # Safety
// `net` must come from [`ln_network_from_json`] and not be used afterwards.
// Null is ignored.
void ln_network_free(struct LnNetwork *net);

// # Safety
// `net` must be a live handle or null (which yields 0).
uintptr_t ln_network_node_count(const struct LnNetwork *net);

// # Safety
// `net` must be a live handle or null (which yields 0).
uintptr_t ln_network_link_count(const struct LnNetwork *net);

// Exit points of `zone_json` (array of `[x, y]` pairs).
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum LnStatus ln_exits(const struct LnNetwork *net, const char *zone_json, char **out);

// Route assignments for every volunteer that can reach an exit.
// `congestion_json` may be null for free-flow times.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum LnStatus ln_plan(const struct LnNetwork *net,
                      const char *zone_json,
                      const char *volunteers_json,
                      const char *congestion_json,
                      char **out);

// Pickup plan for `seekers_json` along the routes in `plan_json`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum LnStatus ln_assign(const char *plan_json,
                        const char *seekers_json,
                        double max_distance,
                        char **out);

// Simulate a plan. `pickups_json` and `config_json` may be null.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum LnStatus ln_simulate(const struct LnNetwork *net,
                          const char *plan_json,
                          const char *pickups_json,
                          const char *config_json,
                          char **out);

// # Safety
// `s` must come from this library or be null.
void ln_string_free(char *s);

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *ln_last_error(void);

// Library version, static storage.
const char *ln_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEAVENOW_H */
