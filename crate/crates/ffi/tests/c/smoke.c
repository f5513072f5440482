#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "boltzinv.h"

#define CHECK(call)                                                     \
    do {                                                                \
        BiStatus s_ = (call);                                           \
        if (s_ != BI_STATUS_OK) {                                       \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, bi_last_error()); \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(void) {
    BiLattice *lat = NULL;
    BiQuadrature *q = NULL;
    BiScalarField *f = NULL, *back = NULL;
    BiRayData *g = NULL;

    /* bad lattice: margin below t_final */
    if (bi_lattice_new(1.0, 5, 4.0, 8, 0.5, &lat) != BI_STATUS_INVALID_ARGUMENT || lat != NULL) {
        fprintf(stderr, "expected INVALID_ARGUMENT\n");
        return 1;
    }
    if (bi_last_error()[0] == '\0') {
        fprintf(stderr, "missing error message\n");
        return 1;
    }

    CHECK(bi_lattice_new(1.0, 5, 4.0, 8, 1.0, &lat));
    CHECK(bi_quadrature_new(4, &q));
    size_t ns = bi_lattice_n_space(lat), nt = bi_lattice_n_t(lat);
    double *v = calloc(ns * nt, sizeof(double));
    /* a point mass at the centre, every time sample */
    for (size_t k = 0; k < nt; k++) v[k * ns + (4 * 8 + 4) * 8 + 4] = 1.0;
    CHECK(bi_scalar_field_new(lat, v, ns * nt, &f));
    CHECK(bi_lray(f, q, &g));
    size_t ng = bi_ray_data_len(g);
    double *gv = malloc(ng * sizeof(double));
    CHECK(bi_ray_data_copy(g, gv, ng));
    double total = 0.0;
    for (size_t i = 0; i < ng; i++) total += gv[i];
    CHECK(bi_lray_adjoint(g, &back));
    if (bi_scalar_field_len(back) != ns * nt || !(total > 0.0) || !isfinite(total)) {
        fprintf(stderr, "unexpected transform output\n");
        return 1;
    }
    if (bi_ray_data_copy(g, gv, ng - 1) != BI_STATUS_SHAPE_MISMATCH) {
        fprintf(stderr, "expected SHAPE_MISMATCH\n");
        return 1;
    }
    printf("boltzinv %s ok\n", bi_version());

    free(v);
    free(gv);
    bi_scalar_field_free(back);
    bi_ray_data_free(g);
    bi_scalar_field_free(f);
    bi_quadrature_free(q);
    bi_lattice_free(lat);
    bi_lattice_free(NULL);
    return 0;
}
