#include <math.h>
#include <stdio.h>
#include <string.h>

#include "ecg_linkage.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            const char *e = elk_last_error();                         \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,   \
                    #cond, e ? e : "no error");                       \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke CHECKPOINT\n");
        return 2;
    }

    double logits[3] = {5.0, 1.0, 1.0};
    size_t label = 9;
    double tau = 0.0;
    CHECK(elk_stage1_match(logits, 3, &label, &tau) == ELK_STATUS_OK);
    CHECK(label == 0 && fabs(tau - 0.9643) < 1e-3);

    double conf[5] = {1.0, 0.4, 0.8, 0.2, 0.6};
    double phi = 0.0;
    CHECK(elk_calibrate_percentile(conf, 5, 20.0, &phi) == ELK_STATUS_OK);
    CHECK(phi == 0.2);
    CHECK(elk_calibrate_percentile(conf, 0, 20.0, &phi) == ELK_STATUS_CALIBRATION);
    CHECK(elk_last_error() != NULL);
    CHECK(elk_stage2_is_unknown(0.03, 0.05) == 1);
    CHECK(elk_stage2_is_unknown(0.05, 0.05) == 0);

    ElkModel *model = NULL;
    CHECK(elk_model_load(argv[1], &model) == ELK_STATUS_OK);
    size_t classes = 0, len = 0;
    CHECK(elk_model_num_classes(model, &classes) == ELK_STATUS_OK);
    CHECK(elk_model_window_len(model, &len) == ELK_STATUS_OK);
    CHECK(classes == 3 && len == 8);
    double window[8] = {0.0, 0.1, 0.9, 1.0, 0.4, 0.3, 0.2, 0.1};
    double out[3];
    CHECK(elk_model_logits(model, window, 8, out, 3) == ELK_STATUS_OK);
    CHECK(elk_model_logits(model, window, 7, out, 3) == ELK_STATUS_INPUT);
    CHECK(elk_model_logits(model, window, 8, out, 2) == ELK_STATUS_BUFFER_TOO_SMALL);
    elk_model_free(model);

    CHECK(elk_model_load("/nonexistent/model.ckpt", &model) != ELK_STATUS_OK);
    CHECK(model == NULL);
    printf("ok %s\n", elk_version());
    return 0;
}
