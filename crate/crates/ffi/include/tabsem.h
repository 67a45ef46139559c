/* C interface to the tabsem recommendation library. */

#ifndef TABSEM_H
#define TABSEM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_ARGUMENT = 1,
  TS_STATUS_INVALID_UTF8 = 2,
  TS_STATUS_IO_ERROR = 3,
  TS_STATUS_DATA_ERROR = 4,
} TsStatus;

/**
 * A loaded model plus the vocabulary and intent/focus map it decodes with.
 */
typedef struct TsModel TsModel;

/**
 * A parsed table.
 */
typedef struct TsTable TsTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message of this thread, or NULL when no error occurred.
 * The caller owns the returned string.
 */
char *ts_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library, or NULL.
 */
void ts_string_free(char *s);

/**
 * Load a trained model file. On success `*out` owns the handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_model_load(const char *path, struct TsModel **out);

/**
 * Release a model handle.
 *
 * # Safety
 * `model` must come from [`ts_model_load`], or be NULL.
 */
void ts_model_free(struct TsModel *model);

/**
 * Parse a CSV file into a table handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_table_from_csv(const char *path, bool has_header, struct TsTable **out);

/**
 * Parse CSV text into a table handle.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_table_from_csv_text(const char *text, bool has_header, struct TsTable **out);

/**
 * Release a table handle.
 *
 * # Safety
 * `table` must come from a `ts_table_from_*` function, or be NULL.
 */
void ts_table_free(struct TsTable *table);

/**
 * Number of fields in a table, or -1 on a NULL handle.
 *
 * # Safety
 * `table` must be a valid table handle or NULL.
 */
int64_t ts_table_field_count(const struct TsTable *table);

/**
 * Top-k conditional-formatting recommendations for one field, as a JSON
 * array string owned by the caller.
 *
 * # Safety
 * `model` and `table` must be valid handles; `out_json` a valid pointer.
 */
enum TsStatus ts_recommend_cf_json(const struct TsModel *model,
                                   const struct TsTable *table,
                                   uintptr_t field_index,
                                   uintptr_t k,
                                   char **out_json);

/**
 * Top-k chart recommendations for a table, as a JSON array string owned by
 * the caller.
 *
 * # Safety
 * `model` and `table` must be valid handles; `out_json` a valid pointer.
 */
enum TsStatus ts_recommend_chart_json(const struct TsModel *model,
                                      const struct TsTable *table,
                                      uintptr_t k,
                                      char **out_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TABSEM_H */
