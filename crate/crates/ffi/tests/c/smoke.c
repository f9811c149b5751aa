#include <math.h>
#include <stdio.h>
#include "cmc_foliate.h"

int main(void) {
    CmcMetric *metric = NULL;
    if (cmc_metric_new(2, 1.0, 1.0, &metric) != CMC_STATUS_OK) return 10;

    CmcLeaf *leaf = NULL;
    if (cmc_solve_leaf(metric, 0.05, 8, &leaf) != CMC_STATUS_OK) return 11;
    CmcLeafSummary s;
    if (cmc_leaf_summary(leaf, &s) != CMC_STATUS_OK) return 12;
    if (!(s.residual_sup <= 1e-10)) return 13;
    cmc_leaf_free(leaf);

    CmcMetric *flat = NULL;
    cmc_metric_new(2, 0.0, 1.0, &flat);
    if (cmc_solve_leaf(flat, 0.05, 8, &leaf) != CMC_STATUS_DEGENERATE_MASS) return 14;
    printf("error: %s\n", cmc_last_error_message());
    cmc_metric_free(flat);

    double r = 0.0;
    if (cmc_r_from_mean_curvature(0.18, 2, 1.0, 0.15, &r) != CMC_STATUS_OK) return 15;
    if (fabs(r - 0.1) > 1e-12) return 16;

    printf("target_h %.6f iterations %zu\n", s.target_h, s.iterations);
    cmc_metric_free(metric);
    return 0;
}
