/* Minimal C client: synthetic data, short training run, prediction. */
#include <stdio.h>
#include <stdlib.h>

#include "handa.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        HandaStatus s_ = (call);                                           \
        if (s_ != HANDA_STATUS_OK) {                                       \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,              \
                    handa_last_error());                                   \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    HandaDataset *source = NULL, *target = NULL;
    HandaExperiment *exp = NULL;
    HandaConfig *cfg = NULL;
    HandaModel *model = NULL;
    double acc = 0.0;

    CHECK(handa_dataset_synthetic(3, 10, 8, 30, 7, &source, &target));
    CHECK(handa_experiment_new(source, target, 5, 7, true, &exp));
    CHECK(handa_config_from_toml(
        "max_outer_iters = 30\nb_s = 32\nb_l = 8\nb_u = 16\n"
        "[arch]\nfeature_hidden_layers = 1\nfeature_width = 16\n"
        "feature_dim = 8\nkernel_width = 8\nkernel_dim = 4\n",
        &cfg));
    CHECK(handa_train_experiment(exp, cfg, &model));
    CHECK(handa_model_evaluate(model, exp, &acc));

    size_t n = handa_dataset_len(target);
    size_t *labels = malloc(n * sizeof *labels);
    CHECK(handa_model_predict_target(model, target, labels, n));

    /* Wrong buffer length must be rejected. */
    if (handa_model_predict_target(model, target, labels, n + 1) !=
        HANDA_STATUS_INVALID_ARGUMENT) {
        return 2;
    }
    printf("version=%s iterations=%zu accuracy=%.4f first_label=%zu\n",
           handa_version(), handa_model_iterations(model), acc, labels[0]);

    free(labels);
    handa_model_free(model);
    handa_config_free(cfg);
    handa_experiment_free(exp);
    handa_dataset_free(source);
    handa_dataset_free(target);
    return 0;
}
