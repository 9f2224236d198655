#include <stdio.h>
#include <stdlib.h>

#include "carrybar.h"

int main(void) {
    CbEnv *env = NULL;
    if (cb_env_new(CB_SCENARIO_EMPTY, false, 3, NULL, &env) != CB_STATUS_OK) {
        fprintf(stderr, "new: %s\n", cb_last_error());
        return 1;
    }
    size_t n = 0;
    cb_env_observation_len(env, &n);
    double *obs = malloc(n * sizeof(double));
    if (cb_env_reset(env, obs, n) != CB_STATUS_OK) {
        return 2;
    }
    double action[6] = {0.5, 0.0, 0.0, 0.5, 0.0, 0.0};
    double reward = 0.0;
    CbTermination term = CB_TERMINATION_RUNNING;
    int steps = 0;
    while (term == CB_TERMINATION_RUNNING && steps < 100) {
        if (cb_env_step(env, action, obs, n, &reward, &term) != CB_STATUS_OK) {
            return 3;
        }
        steps++;
    }
    double pose[3];
    cb_env_object_pose(env, pose);
    if (cb_env_step(env, action, obs, n - 1, &reward, &term) != CB_STATUS_BUFFER_SIZE) {
        return 4;
    }
    printf("%zu %d %.6f\n", n, steps, pose[0]);
    free(obs);
    cb_env_free(env);
    return 0;
}
