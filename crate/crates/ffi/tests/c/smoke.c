#include <math.h>
#include <stdio.h>
#include <string.h>

#include "socialopt.h"

#define CHECK(cond)                                                          \
  do {                                                                       \
    if (!(cond)) {                                                           \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,         \
              socialopt_last_error_message());                               \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(void) {
  SocialoptGame *game = NULL;
  SocialoptGraph *graph = NULL;
  SocialoptConstants c;
  SocialoptNeInfo info;
  double theta = 0.3, bound = 0.0, x[2] = {0.0, 0.0};

  CHECK(socialopt_game_example1(&game) == SOCIALOPT_STATUS_OK);
  CHECK(socialopt_graph_complete(2, &graph) == SOCIALOPT_STATUS_OK);
  CHECK(socialopt_game_constants(game, 0.0, &c) == SOCIALOPT_STATUS_OK);
  CHECK(c.mu == 2.0 && c.l == 2.0);
  CHECK(socialopt_gamma_bound(&c, 0.0, &bound) == SOCIALOPT_STATUS_OK);
  CHECK(socialopt_ne_seek(game, graph, &theta, 1, 0.5 * bound, 200, x, 2, &info) == SOCIALOPT_STATUS_OK);
  CHECK(fabs(x[0] - 2.0 / 3.0) < 1e-9 && fabs(x[1] - 2.0 / 3.0) < 1e-9);
  CHECK(socialopt_ne_seek(game, graph, &theta, 1, 0.5, 10, x, 3, NULL) == SOCIALOPT_STATUS_INVALID_ARGUMENT);
  CHECK(strlen(socialopt_last_error_message()) > 0);

  socialopt_graph_free(graph);
  socialopt_game_free(game);
  printf("ok %s\n", socialopt_version());
  return 0;
}
