"""Collapsed-coordinate Gauss rules on the reference triangle and tetrahedron.

Reference triangle: (0,0), (1,0), (0,1), area 1/2.
Reference tetrahedron: (0,0,0), (1,0,0), (0,1,0), (0,0,1), volume 1/6.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.special import roots_jacobi


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points in barycentric coordinates and positive weights on a reference simplex."""

    points: NDArray[np.float64]
    weights: NDArray[np.float64]
    degree: int

    @property
    def cartesian(self) -> NDArray[np.float64]:
        return self.points[:, 1:]


def _jacobi_01(q: int, alpha: int):
    """q-point Gauss rule on [0, 1] for the weight (1 - t)^alpha."""
    x, w = roots_jacobi(q, alpha, 0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> QuadratureRule:
    """Rule on the reference tet exact for polynomials of total degree ``degree``."""
    q = max(1, (degree + 2) // 2)
    u, wu = _jacobi_01(q, 2)
    v, wv = _jacobi_01(q, 1)
    t, wt = _jacobi_01(q, 0)
    U, V, T = np.meshgrid(u, v, t, indexing="ij")
    W = np.einsum("i,j,k->ijk", wu, wv, wt)
    x = U
    y = (1 - U) * V
    z = (1 - U) * (1 - V) * T
    xyz = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    bary = np.column_stack([1 - xyz.sum(axis=1), xyz])
    return QuadratureRule(bary, W.ravel(), 2 * q - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the reference triangle exact for polynomials of total degree ``degree``."""
    q = max(1, (degree + 2) // 2)
    u, wu = _jacobi_01(q, 1)
    t, wt = _jacobi_01(q, 0)
    U, T = np.meshgrid(u, t, indexing="ij")
    W = np.outer(wu, wt)
    xy = np.column_stack([U.ravel(), ((1 - U) * T).ravel()])
    bary = np.column_stack([1 - xy.sum(axis=1), xy])
    return QuadratureRule(bary, W.ravel(), 2 * q - 1)
