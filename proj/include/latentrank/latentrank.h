/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to liblatentrank.
 *
 * Objects are opaque handles released with their *_destroy function. Every
 * fallible call returns an lr_status; on failure lr_last_error() describes
 * the problem (thread-local, valid until the next call on the same thread).
 * Strings returned through char** are heap-allocated and must be released
 * with lr_string_free. Structured inputs and outputs use JSON text in the
 * same shapes as the transcript, store and HTTP documents.
 */
#ifndef LATENTRANK_H
#define LATENTRANK_H

#include <stddef.h>
#include <stdint.h>

#if defined(LR_BUILDING_LIBRARY)
#define LR_API __attribute__((visibility("default")))
#else
#define LR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lr_status {
  LR_OK = 0,
  LR_ERR_CONFIG = 1,
  LR_ERR_FEEDBACK = 2,
  LR_ERR_PROTOCOL = 3,
  LR_ERR_LOOKUP = 4,
  LR_ERR_DOMAIN = 5,
  LR_ERR_DEGENERATE = 6,
  LR_ERR_IO = 7,
  LR_ERR_PARSE = 8,
  LR_ERR_REPLAY = 9,
  LR_ERR_INVALID_ARGUMENT = 10, /* null handle/pointer or short buffer */
  LR_ERR_INTERNAL = 11
} lr_status;

typedef struct lr_session lr_session;
typedef struct lr_oracle lr_oracle;
typedef struct lr_store lr_store;
typedef struct lr_server lr_server;

LR_API const char* lr_version(void);
LR_API const char* lr_last_error(void);
LR_API const char* lr_status_name(lr_status status);
LR_API void lr_string_free(char* s);

/* --- optimizer sessions ------------------------------------------------ */

/* config_json: OptimizerConfig fields; missing ones take defaults. NULL = {}. */
LR_API lr_status lr_session_create(const char* config_json, lr_session** out);
/* Warm start from `start` (length d). enter_stage2 != 0 refines around it. */
LR_API lr_status lr_session_create_warm(const char* config_json, const double* start, size_t d,
                                        int enter_stage2, lr_session** out);
LR_API void lr_session_destroy(lr_session* session);

/* {stage, round, tau, m, d, z_star, g_bar, z_star_star, allowed_feedback} */
LR_API lr_status lr_session_info(const lr_session* session, char** json_out);
/* Row-major m x d candidate matrix; capacity counts doubles. */
LR_API lr_status lr_session_candidates(const lr_session* session, double* out, size_t capacity,
                                       size_t* written);
/* feedback_json: {"kind": "full_ranking"|"best_only"|"accept_and_exit", "ranking": [...]} */
LR_API lr_status lr_session_submit(lr_session* session, const char* feedback_json);
/* Copies z** (LR_ERR_PROTOCOL before the stage transition). */
LR_API lr_status lr_session_result(const lr_session* session, double* out, size_t d);
/* Transcript JSONL of everything submitted so far. */
LR_API lr_status lr_session_transcript(const lr_session* session, char** jsonl_out);

/* Replays a transcript; returns the final session info JSON. */
LR_API lr_status lr_replay(const char* jsonl, char** info_json_out);

/* --- scripted oracles -------------------------------------------------- */

/* spec_json: {kind, params?, noise_std?, seed?} */
LR_API lr_status lr_oracle_create(const char* spec_json, size_t d, size_t k, lr_oracle** out);
LR_API void lr_oracle_destroy(lr_oracle* oracle);
LR_API lr_status lr_oracle_evaluate(const lr_oracle* oracle, const double* z, size_t d,
                                    double* value_out);
/* Ranks the session's current candidates; returns feedback JSON. */
LR_API lr_status lr_oracle_rank(lr_oracle* oracle, const lr_session* session, size_t depth,
                                char** feedback_json_out);

/*
 * request_json: {config?, objective: {kind, params?, noise_std?, seed?},
 *                rounds?: [stage1, stage2]}
 * transcript_out: JSONL; result_out: {z_star_star, final_f, initial_best_f, rounds}.
 * Either output pointer may be NULL.
 */
LR_API lr_status lr_run_scripted(const char* request_json, char** transcript_out,
                                 char** result_out);

/* --- prior store ------------------------------------------------------- */

LR_API lr_status lr_store_create(size_t latent_dim, size_t embedding_dim, lr_store** out);
LR_API lr_status lr_store_load(const char* path, lr_store** out);
LR_API lr_status lr_store_from_json(const char* json, lr_store** out);
LR_API void lr_store_destroy(lr_store* store);
LR_API lr_status lr_store_save(const lr_store* store, const char* path);
LR_API lr_status lr_store_to_json(const lr_store* store, char** json_out);

/*
 * K-means representatives from an embedding JSONL file ({id, text, embedding?}
 * per line). Lines without an embedding are embedded with the toy embedder
 * at embedding_dim.
 */
LR_API lr_status lr_store_build(const char* embeddings_path, size_t k, size_t max_iters,
                                uint64_t seed, size_t latent_dim, size_t embedding_dim,
                                lr_store** out);

LR_API size_t lr_store_size(const lr_store* store);
LR_API size_t lr_store_latent_dim(const lr_store* store);
LR_API size_t lr_store_embedding_dim(const lr_store* store);
/* entry_json: {id, text?, embedding?, z_star_star?, sigma?} */
LR_API lr_status lr_store_add(lr_store* store, const char* entry_json);
LR_API lr_status lr_store_entry(const lr_store* store, size_t index, char** entry_json_out);
LR_API lr_status lr_store_attach(lr_store* store, const char* id, const double* z, size_t d,
                                 double sigma);
LR_API lr_status lr_store_select(const lr_store* store, const double* query, size_t n,
                                 size_t* index_out, double* similarity_out);
LR_API lr_status lr_store_select_text(const lr_store* store, const char* text,
                                      size_t* index_out, double* similarity_out);
/* count x latent_dim row-major draws from N(z**, sigma^2 I) of entry `index`. */
LR_API lr_status lr_store_sample(const lr_store* store, size_t index, size_t count,
                                 uint64_t seed, double* out, size_t capacity);

/* --- embedding / decoding ---------------------------------------------- */

LR_API lr_status lr_toy_embed(const char* text, size_t dim, double* out);
/* Writes 2 * 120 doubles: x(0..119) then y(0..119). */
LR_API lr_status lr_decode(const double* z, size_t d, const double* c, size_t e, uint64_t seed,
                           double* out, size_t capacity);

/* --- reports ----------------------------------------------------------- */

LR_API lr_status lr_benchmark(const char* grid_json, size_t threads, char** csv_out);
LR_API lr_status lr_sigma_sweep(const lr_store* store, const char* entry_id,
                                const double* sigmas, size_t n_sigmas, size_t draws,
                                uint64_t seed, char** csv_out);

/* --- HTTP service ------------------------------------------------------ */

/* options_json: {data_dir?, decoder_seed?, embedding_dim?, overwrite?, config?} */
LR_API lr_status lr_server_create(const char* options_json, lr_server** out);
/* port 0 picks a free port; the bound port is written to port_out. */
LR_API lr_status lr_server_bind(lr_server* server, const char* host, int port, int* port_out);
/* Blocks until lr_server_stop is called from another thread. */
LR_API lr_status lr_server_run(lr_server* server);
LR_API void lr_server_stop(lr_server* server);
LR_API void lr_server_destroy(lr_server* server);

#ifdef __cplusplus
}
#endif

#endif /* LATENTRANK_H */
