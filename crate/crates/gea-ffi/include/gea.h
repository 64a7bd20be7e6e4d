#ifndef GEA_H
#define GEA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call.
 */
typedef enum GeaStatus {
  GeaStatus_Ok = 0,
  GeaStatus_NullArgument = 1,
  GeaStatus_InvalidUtf8 = 2,
  GeaStatus_InvalidConfig = 3,
  GeaStatus_Io = 4,
  GeaStatus_ParseError = 5,
  GeaStatus_VersionMismatch = 6,
  GeaStatus_RunFailed = 7,
  GeaStatus_ReplayDiverged = 8,
  GeaStatus_Panic = 9,
} GeaStatus;

/**
 * Opaque archive handle.
 */
typedef struct GeaArchive GeaArchive;

/**
 * Opaque transcript handle.
 */
typedef struct GeaTranscript GeaTranscript;

/**
 * Opaque world handle.
 */
typedef struct GeaWorld GeaWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *gea_version(void);

/**
 * Latest error message for this thread, or NULL when the last call
 * succeeded. Free with [`gea_string_free`].
 */
char *gea_last_error_message(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by [`gea_last_error_message`]
 * and not yet freed; NULL is ignored.
 */
void gea_string_free(char *s);

/**
 * Generates a deterministic task world.
 *
 * # Safety
 * `out` must be a valid pointer to a `GeaWorld*` slot.
 */
enum GeaStatus gea_world_generate(uint64_t task_count,
                                  uint64_t n_tools,
                                  uint64_t seed,
                                  struct GeaWorld **out);

/**
 * Loads a world file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` a valid slot.
 */
enum GeaStatus gea_world_load(const char *path, struct GeaWorld **out);

/**
 * Writes a world file.
 *
 * # Safety
 * `world` must be a live handle from this library; `path` NUL-terminated.
 */
enum GeaStatus gea_world_save(const struct GeaWorld *world, const char *path);

/**
 * Number of tasks in the world, or 0 for a null handle.
 *
 * # Safety
 * `world` must be a live handle or NULL.
 */
uint64_t gea_world_task_count(const struct GeaWorld *world);

/**
 * # Safety
 * `world` must be a handle from this library, not yet freed; NULL is ignored.
 */
void gea_world_free(struct GeaWorld *world);

/**
 * Executes one evolution run from a JSON run configuration (the same schema
 * as the CLI's `run` section) and returns the transcript.
 *
 * # Safety
 * `config_json` must be a NUL-terminated UTF-8 string; `out` a valid slot.
 */
enum GeaStatus gea_run_json(const char *config_json, struct GeaTranscript **out);

/**
 * Loads a transcript file.
 *
 * # Safety
 * `path` must be NUL-terminated UTF-8; `out` a valid slot.
 */
enum GeaStatus gea_transcript_load(const char *path, struct GeaTranscript **out);

/**
 * Writes a transcript file.
 *
 * # Safety
 * `transcript` must be a live handle; `path` NUL-terminated UTF-8.
 */
enum GeaStatus gea_transcript_save(const struct GeaTranscript *transcript, const char *path);

/**
 * Iterations recorded in the transcript.
 *
 * # Safety
 * `transcript` must be a live handle or NULL.
 */
uint64_t gea_transcript_iterations(const struct GeaTranscript *transcript);

/**
 * Total offspring evolved across the run.
 *
 * # Safety
 * `transcript` must be a live handle or NULL.
 */
uint64_t gea_transcript_evolved_count(const struct GeaTranscript *transcript);

/**
 * Best selectable success rate at the end of the run.
 *
 * # Safety
 * `transcript` must be a live handle; `out` a valid f64 slot.
 */
enum GeaStatus gea_transcript_final_best(const struct GeaTranscript *transcript, double *out);

/**
 * Re-executes the transcript's config and verifies every recorded field.
 *
 * # Safety
 * `transcript` must be a live handle.
 */
enum GeaStatus gea_transcript_replay(const struct GeaTranscript *transcript);

/**
 * Extracts the final archive from a transcript.
 *
 * # Safety
 * `transcript` must be a live handle; `out` a valid slot.
 */
enum GeaStatus gea_transcript_final_archive(const struct GeaTranscript *transcript,
                                            struct GeaArchive **out);

/**
 * # Safety
 * `transcript` must be a handle from this library, not yet freed; NULL is
 * ignored.
 */
void gea_transcript_free(struct GeaTranscript *transcript);

/**
 * Loads an archive file.
 *
 * # Safety
 * `path` must be NUL-terminated UTF-8; `out` a valid slot.
 */
enum GeaStatus gea_archive_load(const char *path, struct GeaArchive **out);

/**
 * Writes an archive file.
 *
 * # Safety
 * `archive` must be a live handle; `path` NUL-terminated UTF-8.
 */
enum GeaStatus gea_archive_save(const struct GeaArchive *archive, const char *path);

/**
 * Number of records in the archive.
 *
 * # Safety
 * `archive` must be a live handle or NULL.
 */
uint64_t gea_archive_len(const struct GeaArchive *archive);

/**
 * Number of gate-passed (selectable) records.
 *
 * # Safety
 * `archive` must be a live handle or NULL.
 */
uint64_t gea_archive_selectable_len(const struct GeaArchive *archive);

/**
 * Best selectable success rate, or -1 when the archive has none.
 *
 * # Safety
 * `archive` must be a live handle or NULL.
 */
double gea_archive_best_performance(const struct GeaArchive *archive);

/**
 * # Safety
 * `archive` must be a handle from this library, not yet freed; NULL is
 * ignored.
 */
void gea_archive_free(struct GeaArchive *archive);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEA_H */
