/* Elementwise gate math for the compiled LSTM kernels.
 *
 * Kept in plain C so that, built with -ffast-math against glibc, the loops
 * become calls into the vector math library. On x86-64 gcc the functions
 * are cloned per instruction set and the best one is picked at load time.
 */
#ifndef UNKADF_GATES_H
#define UNKADF_GATES_H

#include <math.h>

#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__linux__)
#define UKADF_CLONES __attribute__((target_clones("avx512f", "avx2", "default")))
#else
#define UKADF_CLONES
#endif

/* One row of the forward step. z holds the 4m pre-activations on entry and
 * the activated gates i, f, o, theta on exit; c_prev may be NULL (zero). */
UKADF_CLONES
static void ukadf_cell_forward(double *restrict z, const double *restrict c_prev,
                               double *restrict c, double *restrict h, int m)
{
    int k;
    for (k = 0; k < 3 * m; k++)
        z[k] = 0.5 * tanh(0.5 * z[k]) + 0.5;
    for (k = 3 * m; k < 4 * m; k++)
        z[k] = tanh(z[k]);
    if (c_prev)
        for (k = 0; k < m; k++)
            c[k] = z[m + k] * c_prev[k] + z[k] * z[3 * m + k];
    else
        for (k = 0; k < m; k++)
            c[k] = z[k] * z[3 * m + k];
    for (k = 0; k < m; k++)
        h[k] = z[2 * m + k] * tanh(c[k]);
}

UKADF_CLONES
static void ukadf_tanh(const double *restrict x, double *restrict out, int n)
{
    int k;
    for (k = 0; k < n; k++)
        out[k] = tanh(x[k]);
}

#endif
