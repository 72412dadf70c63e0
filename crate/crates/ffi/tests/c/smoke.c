#include <math.h>
#include <stdio.h>
#include "oversketch.h"

int main(void) {
    double a_data[6] = {1, 2, 3, 4, 5, 6};
    double b_data[6] = {1, 0, 0, 1, 1, 1};
    OsMatrix *a = NULL, *b = NULL, *c = NULL;
    if (os_matrix_new(2, 3, a_data, &a) != OS_STATUS_OK) return 1;
    if (os_matrix_new(3, 2, b_data, &b) != OS_STATUS_OK) return 1;

    OsMultiplyOptions opts = {OS_SCHEME_BLOCKED, 1, 0, 0, 3};
    OsRunStats stats;
    if (os_multiply(a, b, &opts, &c, &stats) != OS_STATUS_OK) return 2;
    double out[4];
    if (os_matrix_copy_data(c, out, 4) != OS_STATUS_OK) return 3;
    double want[4] = {4, 5, 10, 11};
    for (int i = 0; i < 4; i++)
        if (fabs(out[i] - want[i]) > 1e-12) return 4;
    if (stats.workers == 0) return 5;

    OsMatrix *bad = NULL;
    if (os_multiply(a, a, &opts, &bad, NULL) != OS_STATUS_INVALID_ARGUMENT) return 6;
    if (os_last_error_message() == NULL) return 7;

    os_matrix_free(a);
    os_matrix_free(b);
    os_matrix_free(c);
    printf("ok %s\n", os_version());
    return 0;
}
