"""Independent reference computations used by the tests.

Mode fields are written out from their closed forms and integrated with
Gauss-Legendre quadrature, sharing nothing with the package's grid machinery.
"""

import numpy as np


def gauss_grid(n=48):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * np.pi * (x + 1.0)
    w = 0.5 * np.pi * w
    X, Y = np.meshgrid(x, x, indexing="ij")
    return X, Y, np.outer(w, w)


def mode_velocity(k, l, X, Y, normalizer=1.0):
    """``normalizer * (d_y psi, -d_x psi)`` for ``psi = sin(kx) sin(ly)``."""
    return normalizer * np.stack(
        [l * np.sin(k * X) * np.cos(l * Y), -k * np.cos(k * X) * np.sin(l * Y)]
    )


def mode_gradient(k, l, X, Y, normalizer=1.0):
    """``g[i, j] = d_j u_i`` of :func:`mode_velocity`."""
    a = normalizer
    g = np.empty((2, 2) + X.shape)
    g[0, 0] = a * k * l * np.cos(k * X) * np.cos(l * Y)
    g[0, 1] = -a * l * l * np.sin(k * X) * np.sin(l * Y)
    g[1, 0] = a * k * k * np.sin(k * X) * np.sin(l * Y)
    g[1, 1] = -a * k * l * np.cos(k * X) * np.cos(l * Y)
    return g


def v_normalizer(k, l, alpha1):
    mu = k * k + l * l
    return 1.0 / np.sqrt((1.0 + alpha1 * mu) * mu * np.pi**2 / 4.0)


def field_from_coeffs(c, basis, X, Y, derivative="value"):
    """Sum of closed-form mode fields with the package's ordering and coefficients."""
    out = 0.0
    for ci, f in zip(c, basis):
        fn = mode_velocity if derivative == "value" else mode_gradient
        out = out + ci * fn(f.mode.k, f.mode.l, X, Y, f.v_normalizer)
    return out


def naive_tensor_ops(A):
    """Per-entry loops over a (2, 2, N, N) tensor."""
    n1, n2 = A.shape[2:]
    A_sq = np.zeros_like(A)
    abs_sq = np.zeros((n1, n2))
    for p in range(n1):
        for q in range(n2):
            M = A[:, :, p, q]
            A_sq[:, :, p, q] = M @ M
            abs_sq[p, q] = sum(M[i, j] ** 2 for i in range(2) for j in range(2))
    return A_sq, abs_sq, abs_sq * A
