#include "ddcrp.h"
#include <stdio.h>

int main(void) {
    DdcrpFit *fit = NULL;
    if (ddcrp_fit_preset("poisson-overlapping", 300, 100, &fit) != DDCRP_STATUS_OK) {
        fprintf(stderr, "fit failed: %s\n", ddcrp_last_error());
        return 1;
    }
    size_t mode = 0;
    double p = 0.0;
    if (ddcrp_fit_k_mode(fit, &mode) != DDCRP_STATUS_OK ||
        ddcrp_fit_k_probability(fit, mode, &p) != DDCRP_STATUS_OK) {
        fprintf(stderr, "query failed: %s\n", ddcrp_last_error());
        ddcrp_fit_free(fit);
        return 1;
    }
    if (ddcrp_fit_num_chains(NULL, &mode) != DDCRP_STATUS_NULL_POINTER) {
        ddcrp_fit_free(fit);
        return 1;
    }
    printf("k_mode=%zu p=%.3f\n", mode, p);
    ddcrp_fit_free(fit);
    return 0;
}
