#ifndef EVTENSOR_H
#define EVTENSOR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EtStatus {
  EtStatus_Ok = 0,
  EtStatus_NullArgument = 1,
  EtStatus_InvalidUtf8 = 2,
  EtStatus_Parse = 3,
  EtStatus_Validation = 4,
  EtStatus_Simulation = 5,
  EtStatus_Panic = 6,
} EtStatus;

/**
 * A compiled kernel and the routing source needed to run it.
 */
typedef struct EtKernel EtKernel;

typedef struct EtTrace EtTrace;

/**
 * A workload: graph plus optional simulation and routing sections.
 */
typedef struct EtWorkload EtWorkload;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call on this thread.
 */
const char *et_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void et_string_free(char *s);

/**
 * # Safety
 * `json` must be a valid C string; `out` must be writable.
 */
enum EtStatus et_workload_from_json(const char *json, struct EtWorkload **out);

/**
 * Loads a built-in workload by name, e.g. `gemm_reduce_scatter`.
 *
 * # Safety
 * `name` must be a valid C string; `out` must be writable.
 */
enum EtStatus et_workload_builtin(const char *name, struct EtWorkload **out);

/**
 * # Safety
 * `w` must be a handle from this library; `out` must be writable.
 */
enum EtStatus et_workload_to_json(const struct EtWorkload *w, char **out);

/**
 * # Safety
 * `w` must be null or a handle from this library, not used afterwards.
 */
void et_workload_free(struct EtWorkload *w);

/**
 * Lowers to per-SM queues. `samples` is a `;`-separated list of shape
 * bindings (`n=1;n=2;n=4`), or empty for a graph without symbols.
 * Data-dependent edges are replaced by worst-case barriers first.
 *
 * # Safety
 * `w` must be a handle; `samples` a valid C string; `out` writable.
 */
enum EtStatus et_compile_static(const struct EtWorkload *w,
                                const char *samples,
                                size_t num_sms,
                                struct EtKernel **out);

/**
 * # Safety
 * `w` must be a handle; `out` writable.
 */
enum EtStatus et_compile_dynamic(const struct EtWorkload *w,
                                 bool early_push,
                                 struct EtKernel **out);

/**
 * # Safety
 * `json` must be a valid C string; `out` writable.
 */
enum EtStatus et_kernel_from_json(const char *json, struct EtKernel **out);

/**
 * # Safety
 * `k` must be a handle; `out` writable.
 */
enum EtStatus et_kernel_to_json(const struct EtKernel *k, char **out);

/**
 * # Safety
 * `k` must be null or a handle from this library, not used afterwards.
 */
void et_kernel_free(struct EtKernel *k);

/**
 * Simulates `k` for `binding` (e.g. `n=3`, or empty). `config_json` is a
 * simulation config object or null for defaults; `seed` overrides its seed.
 *
 * # Safety
 * `k` must be a handle; strings valid or `config_json` null; `out` writable.
 */
enum EtStatus et_simulate(const struct EtKernel *k,
                          const char *binding,
                          const char *config_json,
                          uint64_t seed,
                          struct EtTrace **out);

/**
 * Simulates the unfused barrier reference of a workload.
 *
 * # Safety
 * As for [`et_simulate`].
 */
enum EtStatus et_simulate_baseline(const struct EtWorkload *w,
                                   const char *binding,
                                   const char *config_json,
                                   uint64_t seed,
                                   struct EtTrace **out);

/**
 * # Safety
 * `t` must be a handle; `out` writable.
 */
enum EtStatus et_trace_makespan(const struct EtTrace *t, uint64_t *out);

/**
 * Trace-event JSON suitable for chrome://tracing or Perfetto.
 *
 * # Safety
 * `t` must be a handle; `out` writable.
 */
enum EtStatus et_trace_chrome_json(const struct EtTrace *t, char **out);

/**
 * # Safety
 * `t` must be a handle; `out` writable.
 */
enum EtStatus et_trace_to_json(const struct EtTrace *t, char **out);

/**
 * # Safety
 * `t` must be null or a handle from this library, not used afterwards.
 */
void et_trace_free(struct EtTrace *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVTENSOR_H */
