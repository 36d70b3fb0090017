"""Simplex geometry: tangent bases and Euclidean projections."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _basis(k):
    # Gram-Schmidt on e_1 - e_2, ..., e_1 - e_k, in that order.
    eye = np.eye(k)
    out = np.zeros((k, k - 1))
    for j in range(k - 1):
        q = eye[0] - eye[j + 1]
        for m in range(j):
            q = q - (out[:, m] @ q) * out[:, m]
        out[:, j] = q / np.linalg.norm(q)
    out.setflags(write=False)
    return out


def simplex_basis(k):
    """Orthonormal basis of the tangent space of the (k-1)-simplex.

    Returns a ``k x (k-1)`` matrix ``N`` with ``1^T N = 0`` and
    ``N^T N = I``. The construction is deterministic, so the same ``k``
    always yields a bit-identical (read-only) array.
    """
    k = int(k)
    if k < 2:
        raise ValueError(f"simplex basis needs k >= 2, got {k}")
    return _basis(k)


def project_simplex(v, eps=0.0):
    """Euclidean projection of ``v`` onto ``{x : x >= eps, sum(x) = 1}``.

    Uses the sort-and-threshold rule after shifting by ``eps``; ``eps = 0``
    gives the ordinary probability simplex.
    """
    v = np.asarray(v, dtype=float)
    k = v.shape[-1]
    if eps < 0 or eps * k > 1 + 1e-15:
        raise ValueError(f"eps={eps} infeasible for k={k} (need 0 <= eps*k <= 1)")
    mass = 1.0 - eps * k
    if mass <= 0.0:
        return np.full(v.shape, 1.0 / k)
    w = v - eps
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - mass
    ind = np.arange(1, k + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(w - theta, 0.0) + eps
