"""Dipole interaction kernel ``3 r r^T / |r|^5 - I / |r|^3``, shared by coils and sensors."""

import numpy as np


def dipole_kernels(r) -> np.ndarray:
    """Kernel matrices for each row of ``r`` (N, 3); returns (N, 3, 3).

    Rows with ``|r| = 0`` give non-finite output; callers check beforehand.
    The products ``r_i * r_j`` are formed before scaling so every matrix is
    exactly symmetric.
    """
    r = np.asarray(r, dtype=float).reshape(-1, 3)
    r2 = r[:, 0] * r[:, 0] + r[:, 1] * r[:, 1] + r[:, 2] * r[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv3 = 1.0 / (r2 * np.sqrt(r2))
        inv5 = inv3 / r2
    K = np.empty((r.shape[0], 3, 3))
    for i in range(3):
        for j in range(i, 3):
            v = 3.0 * (r[:, i] * r[:, j]) * inv5
            if i == j:
                v = v - inv3
            K[:, i, j] = v
            K[:, j, i] = v
    return K


def kernel_matvec(K, m) -> np.ndarray:
    """Apply stacked kernels ``K`` (N, 3, 3) to ``m`` of shape (3,), (N, 3) or (C, N, 3)."""
    m = np.asarray(m, dtype=float)
    m0, m1, m2 = m[..., 0], m[..., 1], m[..., 2]
    return np.stack([K[:, i, 0] * m0 + K[:, i, 1] * m1 + K[:, i, 2] * m2 for i in range(3)], axis=-1)
