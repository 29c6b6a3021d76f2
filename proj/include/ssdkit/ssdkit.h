#ifndef SSDKIT_SSDKIT_H
#define SSDKIT_SSDKIT_H

/*
 * C interface to the ssdkit detector deployment toolkit.
 *
 * Objects are opaque handles created by *_load / *_create style calls and
 * released with the matching *_free. Every fallible call returns an
 * ssdkit_status; on failure a one-line message is available from
 * ssdkit_last_error() on the calling thread until the next failing call.
 * Strings returned through char** out-parameters are heap allocated and must
 * be released with ssdkit_free_string().
 */

#include <stddef.h>
#include <stdint.h>

#if defined(SSDKIT_BUILDING)
#define SSDKIT_API __attribute__((visibility("default")))
#else
#define SSDKIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ssdkit_status {
  SSDKIT_OK = 0,
  SSDKIT_ERR_INVALID = 1, /* input violated a documented constraint */
  SSDKIT_ERR_IO = 2,      /* file could not be read or written */
  SSDKIT_ERR_NUMERIC = 3, /* non-finite values (e.g. training diverged) */
  SSDKIT_ERR_INTERNAL = 4
} ssdkit_status;

SSDKIT_API const char* ssdkit_version(void);
SSDKIT_API const char* ssdkit_last_error(void);
SSDKIT_API void ssdkit_free_string(char* s);

/* ---- geometry ---------------------------------------------------------- */

typedef struct ssdkit_box {
  double x1, y1, x2, y2; /* normalized corner form */
} ssdkit_box;

SSDKIT_API double ssdkit_iou(const ssdkit_box* a, const ssdkit_box* b);

/* ---- network graphs ---------------------------------------------------- */

typedef struct ssdkit_graph ssdkit_graph;

typedef struct ssdkit_complexity {
  uint64_t macs;
  uint64_t params;
  double gmac;
  double mparams;
} ssdkit_complexity;

SSDKIT_API ssdkit_status ssdkit_graph_load(const char* path, ssdkit_graph** out);
SSDKIT_API ssdkit_status ssdkit_graph_from_json(const char* json, ssdkit_graph** out);
SSDKIT_API ssdkit_status ssdkit_graph_save(const ssdkit_graph* g, const char* path);
SSDKIT_API ssdkit_status ssdkit_graph_to_json(const ssdkit_graph* g, char** out_json);
SSDKIT_API ssdkit_status ssdkit_graph_set_input(ssdkit_graph* g, int width, int height);
SSDKIT_API void ssdkit_graph_free(ssdkit_graph* g);

/* totals is required; table (per-layer text report) may be NULL. */
SSDKIT_API ssdkit_status ssdkit_graph_analyze(const ssdkit_graph* g, ssdkit_complexity* totals, char** table);

/* ---- weight stores ----------------------------------------------------- */

typedef struct ssdkit_weights ssdkit_weights;

SSDKIT_API ssdkit_status ssdkit_weights_load(const char* path, ssdkit_weights** out);
SSDKIT_API ssdkit_status ssdkit_weights_save(const ssdkit_weights* w, const char* path);
SSDKIT_API size_t ssdkit_weights_tensor_count(const ssdkit_weights* w);
SSDKIT_API void ssdkit_weights_free(ssdkit_weights* w);

/* ---- structured pruning ------------------------------------------------ */

typedef struct ssdkit_prune_options {
  double ratio;  /* [0, 1) */
  uint64_t seed;
  const char* const* exempt; /* extra layer names never pruned; may be NULL */
  size_t exempt_count;
} ssdkit_prune_options;

/* weights, out_weights, report may be NULL. out_weights is only set when
 * weights is given. */
SSDKIT_API ssdkit_status ssdkit_prune(const ssdkit_graph* g, const ssdkit_weights* weights,
                                      const ssdkit_prune_options* options, ssdkit_graph** out_graph,
                                      ssdkit_weights** out_weights, ssdkit_complexity* before,
                                      ssdkit_complexity* after, char** report);

/* ---- prior boxes ------------------------------------------------------- */

/* Branch configuration JSON for a named preset ("ssd300" or "toy"). */
SSDKIT_API ssdkit_status ssdkit_priors_preset(const char* name, char** config_json);

/* Generates priors from a branch configuration. Branch indices in split are
 * each replaced by their two halves (indices refer to the original config).
 * rescale_w/rescale_h <= 0 leave the input size unchanged. */
SSDKIT_API ssdkit_status ssdkit_priors_generate(const char* config_json, const int* split, size_t split_count,
                                                int rescale_w, int rescale_h, char** priors_json,
                                                size_t* prior_count);

typedef struct ssdkit_priors ssdkit_priors;

SSDKIT_API ssdkit_status ssdkit_priors_parse(const char* priors_json, ssdkit_priors** out);
SSDKIT_API size_t ssdkit_priors_count(const ssdkit_priors* p);
SSDKIT_API void ssdkit_priors_free(ssdkit_priors* p);

/* ---- detection post-processing ----------------------------------------- */

typedef struct ssdkit_postprocess_params {
  double conf_floor;    /* default 0.2 */
  double nms_threshold; /* default 0.45 */
  int top_k;            /* default 200 */
} ssdkit_postprocess_params;

SSDKIT_API void ssdkit_postprocess_defaults(ssdkit_postprocess_params* p);

/* One raw-prediction JSONL record in, one detections JSONL record out. */
SSDKIT_API ssdkit_status ssdkit_postprocess_line(const ssdkit_priors* priors, const char* raw_line,
                                                 const ssdkit_postprocess_params* params, char** dets_line);

/* ---- re-detection tracker ---------------------------------------------- */

typedef struct ssdkit_detection {
  ssdkit_box box;
  int label;
  double score;
  int retained;
} ssdkit_detection;

typedef struct ssdkit_tracker_config {
  double candidate_floor;   /* default 0.2 */
  double display_threshold; /* default 0.5 */
  double match_iou_min;     /* default 0.3 */
} ssdkit_tracker_config;

typedef struct ssdkit_tracker ssdkit_tracker;

SSDKIT_API void ssdkit_tracker_config_defaults(ssdkit_tracker_config* c);
SSDKIT_API ssdkit_status ssdkit_tracker_create(const ssdkit_tracker_config* c, ssdkit_tracker** out);
SSDKIT_API void ssdkit_tracker_reset(ssdkit_tracker* t);
SSDKIT_API void ssdkit_tracker_free(ssdkit_tracker* t);

/* out must have room for n entries; *n_out receives the emitted count. */
SSDKIT_API ssdkit_status ssdkit_tracker_step(ssdkit_tracker* t, const ssdkit_detection* in, size_t n,
                                             ssdkit_detection* out, size_t* n_out);
SSDKIT_API ssdkit_status ssdkit_tracker_step_line(ssdkit_tracker* t, const char* dets_line, char** out_line);

typedef struct ssdkit_bench_result {
  size_t frames;
  size_t objects;
  size_t emitted;
  double mean_ms;
  double max_ms;
  double total_ms;
} ssdkit_bench_result;

/* Times tracker steps over synthetic frames with `objects` detections each. */
SSDKIT_API ssdkit_status ssdkit_bench_track(size_t frames, size_t objects, uint64_t seed, ssdkit_bench_result* out);

/* ---- evaluation -------------------------------------------------------- */

/* AP@0.5 for detections JSONL vs ground-truth JSONL (matched by line). The
 * result is a JSON object {"ap": [...per class...], "mean": x}. */
SSDKIT_API ssdkit_status ssdkit_evaluate_jsonl(const char* dets_jsonl, const char* gt_jsonl, int num_classes,
                                               char** result_json);

/* ---- toy detector training --------------------------------------------- */

typedef struct ssdkit_train_options {
  const char* stage; /* "pretrain" | "finetune" | "fp-suppress" | "post-prune" */
  uint64_t seed;
  int epochs;           /* < 0: stage default */
  int batch_size;       /* <= 0: stage default */
  double learning_rate; /* <= 0: stage default */
  const char* init_weights; /* may be NULL */
  const char* graph;        /* graph JSON path; may be NULL */
  int split_first_branch;
  size_t train_scenes; /* 0: default */
  size_t val_scenes;   /* 0: default */
} ssdkit_train_options;

SSDKIT_API void ssdkit_train_defaults(ssdkit_train_options* o);

/* Writes weights to out_weights and (if not NULL) the graph to out_graph.
 * metrics_jsonl and summary_json may be NULL. */
SSDKIT_API ssdkit_status ssdkit_train_toy(const ssdkit_train_options* o, const char* out_weights,
                                          const char* out_graph, char** metrics_jsonl, char** summary_json);

typedef struct ssdkit_toy_eval_options {
  const char* weights; /* required */
  const char* graph;   /* may be NULL: the toy graph at the stage-2 resolution */
  uint64_t seed;
  size_t scenes;
} ssdkit_toy_eval_options;

/* Evaluates a toy detector on synthetic scenes. result_json as for
 * ssdkit_evaluate_jsonl. raw_jsonl / gt_jsonl (may be NULL) receive the raw
 * head outputs and ground truth, one record per scene. */
SSDKIT_API ssdkit_status ssdkit_evaluate_toy(const ssdkit_toy_eval_options* o, char** result_json,
                                             char** raw_jsonl, char** gt_jsonl);

#ifdef __cplusplus
}
#endif

#endif /* SSDKIT_SSDKIT_H */
