#ifndef SOCIALOPT_H
#define SOCIALOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SocialoptStatus {
  SOCIALOPT_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8, wrong array length or out-of-range value.
   */
  SOCIALOPT_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Malformed or inconsistent configuration, including an uncertified step size.
   */
  SOCIALOPT_STATUS_CONFIG = 2,
  SOCIALOPT_STATUS_NOT_STRONGLY_MONOTONE = 3,
  /**
   * Disconnected or non-doubly-stochastic communication graph.
   */
  SOCIALOPT_STATUS_GRAPH = 4,
  SOCIALOPT_STATUS_DIVERGENCE = 5,
  SOCIALOPT_STATUS_NO_CERTIFICATE = 6,
  SOCIALOPT_STATUS_MAX_ITERATIONS = 7,
  SOCIALOPT_STATUS_ORACLE_MISMATCH = 8,
  SOCIALOPT_STATUS_IO = 9,
  /**
   * A Rust panic was caught at the boundary.
   */
  SOCIALOPT_STATUS_PANIC = 10,
} SocialoptStatus;

/**
 * Opaque game handle.
 */
typedef struct SocialoptGame SocialoptGame;

/**
 * Opaque communication-graph handle.
 */
typedef struct SocialoptGraph SocialoptGraph;

/**
 * Opaque regulator-run handle.
 */
typedef struct SocialoptTrace SocialoptTrace;

/**
 * Regularity constants of a game.
 */
typedef struct SocialoptConstants {
  double mu;
  double l;
  double l_prime;
  double l_theta;
  double cost_lipschitz_x;
  double cost_lipschitz_theta;
  double strategy_bound;
  double lipschitz_f;
} SocialoptConstants;

/**
 * Diagnostics of [`socialopt_ne_seek`].
 */
typedef struct SocialoptNeInfo {
  double residual;
  double consensus_gap;
  /**
   * Certified bound on the squared distance to the equilibrium; infinite without contraction.
   */
  double epsilon_bound;
  double q;
  size_t iterations;
} SocialoptNeInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *socialopt_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into the library on this thread.
 */
const char *socialopt_last_error_message(void);

/**
 * Two-player closed-form example game.
 */
enum SocialoptStatus socialopt_game_example1(struct SocialoptGame **out);

/**
 * Electric-vehicle charging game with default coefficients.
 */
enum SocialoptStatus socialopt_game_ev_charging(size_t n_players,
                                                size_t periods,
                                                struct SocialoptGame **out);

/**
 * Game from the JSON `game` object of an experiment configuration.
 */
enum SocialoptStatus socialopt_game_from_json(const char *json, struct SocialoptGame **out);

void socialopt_game_free(struct SocialoptGame *game);

/**
 * Number of players; 0 for NULL.
 */
size_t socialopt_game_n_players(const struct SocialoptGame *game);

/**
 * Joint strategy dimension; 0 for NULL.
 */
size_t socialopt_game_total_dim(const struct SocialoptGame *game);

/**
 * Decision dimension; 0 for NULL.
 */
size_t socialopt_game_theta_dim(const struct SocialoptGame *game);

/**
 * Exact constants, with cost Lipschitz constants taken over the decision
 * set enlarged by `theta_probe_radius`.
 */
enum SocialoptStatus socialopt_game_constants(const struct SocialoptGame *game,
                                              double theta_probe_radius,
                                              struct SocialoptConstants *out);

/**
 * Sum of all players' costs.
 */
enum SocialoptStatus socialopt_social_cost(const struct SocialoptGame *game,
                                           const double *x,
                                           size_t x_len,
                                           const double *theta,
                                           size_t theta_len,
                                           double *out);

/**
 * Complete graph with uniform weights `1/n`.
 */
enum SocialoptStatus socialopt_graph_complete(size_t n_nodes, struct SocialoptGraph **out);

/**
 * Random connected graph with Metropolis weights.
 */
enum SocialoptStatus socialopt_graph_metropolis(size_t n_nodes,
                                                double edge_probability,
                                                uint64_t seed,
                                                struct SocialoptGraph **out);

/**
 * Graph from a row-major `n_nodes x n_nodes` doubly stochastic weight matrix.
 */
enum SocialoptStatus socialopt_graph_from_matrix(size_t n_nodes,
                                                 const double *weights,
                                                 struct SocialoptGraph **out);

void socialopt_graph_free(struct SocialoptGraph *graph);

/**
 * Number of nodes; 0 for NULL.
 */
size_t socialopt_graph_n_nodes(const struct SocialoptGraph *graph);

/**
 * Second-largest singular value of the weight matrix.
 */
enum SocialoptStatus socialopt_graph_sigma_bar(const struct SocialoptGraph *graph, double *out);

/**
 * Supremum of certified consensus step sizes.
 */
enum SocialoptStatus socialopt_gamma_bound(const struct SocialoptConstants *constants,
                                           double sigma_bar,
                                           double *out);

/**
 * Contraction factor of one consensus round at step `gamma`.
 */
enum SocialoptStatus socialopt_q_factor(double gamma,
                                        const struct SocialoptConstants *constants,
                                        size_t n_players,
                                        double sigma_bar,
                                        double *out);

/**
 * Full-information equilibrium by projected gradient iterations.
 */
enum SocialoptStatus socialopt_centralized_ne(const struct SocialoptGame *game,
                                              const double *theta,
                                              size_t theta_len,
                                              double tol,
                                              size_t max_iter,
                                              double *x_out,
                                              size_t x_len);

/**
 * `t_max` rounds of distributed equilibrium seeking from a zero start.
 * `info` may be NULL.
 */
enum SocialoptStatus socialopt_ne_seek(const struct SocialoptGame *game,
                                       const struct SocialoptGraph *graph,
                                       const double *theta,
                                       size_t theta_len,
                                       double gamma,
                                       size_t t_max,
                                       double *x_out,
                                       size_t x_len,
                                       struct SocialoptNeInfo *info);

/**
 * Regulator run described by a JSON experiment configuration with a
 * `regulator` section. No files are written.
 */
enum SocialoptStatus socialopt_run(const char *config_json, struct SocialoptTrace **out);

void socialopt_trace_free(struct SocialoptTrace *trace);

/**
 * Number of recorded iterations; 0 for NULL.
 */
size_t socialopt_trace_len(const struct SocialoptTrace *trace);

/**
 * Decision dimension of the run; 0 for NULL.
 */
size_t socialopt_trace_theta_dim(const struct SocialoptTrace *trace);

/**
 * Decision after the last update.
 */
enum SocialoptStatus socialopt_trace_final_theta(const struct SocialoptTrace *trace,
                                                 double *theta_out,
                                                 size_t theta_len);

/**
 * Write the trace as CSV to `path`.
 */
enum SocialoptStatus socialopt_trace_write_csv(const struct SocialoptTrace *trace,
                                               const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOCIALOPT_H */
