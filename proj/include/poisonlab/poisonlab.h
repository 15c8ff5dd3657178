#ifndef POISONLAB_H
#define POISONLAB_H

/* C interface to the poisoning laboratory. Every entry point returns a
 * result code; the failure message for the current thread is available from
 * plab_last_error() until the next call on that thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  PLAB_OK = 0,         /* success */
  PLAB_VALIDATION = 1, /* user-fixable input: bad config, missing artifact */
  PLAB_RUNTIME = 2     /* stage failure */
};

/* A workspace bound to one effective configuration. */
typedef struct plab_run plab_run;

/* Message for the most recent failure on the calling thread; never NULL. */
const char* plab_last_error(void);

/* Binds a workspace directory to a configuration. config_file may be NULL
 * (built-in defaults); overrides are "key=value" strings applied on top, in
 * order. Returns NULL on failure. */
plab_run* plab_open(const char* workspace, const char* config_file,
                    const char* const* overrides, size_t n_overrides);
void plab_close(plab_run* run);

/* Runs one stage: "synth", "train-clean", "craft", "train-mixed" or "eval".
 * Stages are idempotent: with force 0, outputs that are current are kept.
 * ran (nullable) receives 1 when work was done, 0 when it was skipped. */
int plab_stage(plab_run* run, const char* stage, int force, int* ran);

/* All five stages in order. */
int plab_run_all(plab_run* run, int force);

/* Renders the human-readable summary from the stored reports into *out.
 * Free the string with plab_string_free. */
int plab_report(plab_run* run, char** out);

/* Sweeps one dimension (trigger | ratio | epsilon | position | size).
 * values and seeds are comma-separated lists; NULL picks the defaults.
 * Writes reports/ablation_<dimension>.{json,csv} under the workspace and
 * returns the medians table as text in *out. */
int plab_ablate(plab_run* run, const char* dimension, const char* values,
                const char* seeds, char** out);

/* The effective configuration as canonical text, and its hash. */
int plab_config_text(plab_run* run, char** out);
uint64_t plab_config_hash(plab_run* run);

/* Default configuration with documentation comments; free with
 * plab_string_free. */
char* plab_default_config_text(void);
void plab_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* POISONLAB_H */
