#include <math.h>
#include <stdio.h>
#include <string.h>

#include "hybagg.h"

#define CLIENTS 3
#define DIM 4

int main(void) {
    HybaggParams *params = NULL;
    if (hybagg_params_select(DIM, 16, 40, 11, 1.0, &params) != HYBAGG_STATUS_OK) {
        return 1;
    }
    HybaggCohort *cohort = NULL;
    if (hybagg_cohort_setup(params, CLIENTS, 42, &cohort) != HYBAGG_STATUS_OK) {
        return 2;
    }
    double x[CLIENTS][DIM] = {{0.5, -0.25, 0.125, 1.0}, {0.25, 0.25, -0.5, -1.0}, {0.0, 0.5, 0.0, 0.75}};
    HybaggBytes uploads[CLIENTS];
    for (uint32_t i = 0; i < CLIENTS; i++) {
        if (hybagg_client_round(cohort, i, x[i], DIM, 0, &uploads[i]) != HYBAGG_STATUS_OK) {
            return 3;
        }
        if (uploads[i].len != hybagg_params_upload_size(params)) {
            return 4;
        }
    }
    double sum[DIM];
    if (hybagg_server_aggregate(cohort, uploads, CLIENTS, sum, DIM) != HYBAGG_STATUS_OK) {
        return 5;
    }
    for (int j = 0; j < DIM; j++) {
        double truth = x[0][j] + x[1][j] + x[2][j];
        if (fabs(sum[j] - truth) > 1e-6) {
            return 6;
        }
    }
    if (hybagg_server_aggregate(cohort, uploads, CLIENTS - 1, sum, DIM) != HYBAGG_STATUS_PROTOCOL) {
        return 7;
    }
    char msg[128];
    if (hybagg_last_error(msg, sizeof msg) == 0 || strstr(msg, "client 2") == NULL) {
        return 8;
    }
    for (int i = 0; i < CLIENTS; i++) {
        hybagg_bytes_free(uploads[i]);
    }
    hybagg_cohort_free(cohort);
    hybagg_params_free(params);
    printf("sum = %.6f %.6f %.6f %.6f\n", sum[0], sum[1], sum[2], sum[3]);
    return 0;
}
