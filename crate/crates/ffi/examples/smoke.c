/* Minimal C client: prints Table 1's canonical radii and runs one read. */
#include <stdio.h>
#include "sdm_lab.h"

int main(void) {
    size_t d_star = 0;
    double p_star = 0.0;
    if (sdm_optimal_d(SDM_CRITERION_SNR, 1000, 10000, 1e6, 0.99, &d_star, &p_star) != SDM_STATUS_OK) {
        return 1;
    }
    printf("snr d*=%zu p*=%.3g\n", d_star, p_star);

    double bits[2 * 8] = {1, 0, 1, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1};
    SdmPatterns *patterns = NULL;
    SdmEngine *engine = NULL;
    if (sdm_patterns_new_binary(bits, 2, 8, &patterns) != SDM_STATUS_OK) return 2;
    if (sdm_engine_new(SDM_ENGINE_KIND_BINARY_SDM, 2, 0.0, patterns, 1, &engine) != SDM_STATUS_OK) return 3;
    double query[8] = {1, 0, 1, 0, 1, 0, 0, 0};
    double out[8];
    int none = 0;
    if (sdm_engine_update(engine, query, 8, out, 8, &none) != SDM_STATUS_OK) return 4;
    for (int i = 0; i < 8; i++) printf("%d", (int)out[i]);
    printf("\n");

    SdmStatus s = sdm_engine_new(SDM_ENGINE_KIND_BINARY_NEURON_SDM, 2, 0.0, patterns, 1, &engine);
    char msg[256];
    sdm_last_error_message(msg, sizeof msg);
    printf("status=%d %s\n", (int)s, msg);
    sdm_engine_free(engine);
    sdm_patterns_free(patterns);
    return 0;
}
