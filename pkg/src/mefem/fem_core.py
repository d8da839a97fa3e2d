"""Lagrange elements of degree 1 and 2 on affine tetrahedra.

Local scalar numbering follows the vertices, then (for degree 2) the edges in
the order (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).  Local vector numbering is
component-major: index ``c * n + a`` is component ``c`` of scalar node ``a``.

The batched ``*_matrices`` functions take an (E, 4, 3) array of element
coordinates and return one matrix per element; the ``element_*`` functions
are their single-element counterparts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from mefem.errors import SingularElementError
from mefem.quadrature import QuadratureRule, tet_rule, triangle_rule

DEGENERACY_TOL = 1e-14
SUPPORTED_DEGREES = (1, 2)


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Lagrange basis of a given degree on the reference simplex of dimension ``dim``."""

    dim: int
    degree: int

    def __post_init__(self):
        if self.degree not in SUPPORTED_DEGREES:
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(itertools.combinations(range(self.dim + 1), 2))

    @property
    def num_nodes(self) -> int:
        nv = self.dim + 1
        return nv if self.degree == 1 else nv + len(self.edges)

    @property
    def nodes(self) -> NDArray[np.float64]:
        """Lagrange nodes in barycentric coordinates, (n, dim + 1)."""
        eye = np.eye(self.dim + 1)
        if self.degree == 1:
            return eye
        mids = [(eye[i] + eye[j]) / 2 for i, j in self.edges]
        return np.vstack([eye, mids])

    def values(self, bary: NDArray) -> NDArray[np.float64]:
        """Shape function values at (P, dim+1) barycentric points, (P, n)."""
        lam = np.atleast_2d(bary)
        if self.degree == 1:
            return lam.copy()
        vert = lam * (2 * lam - 1)
        edge = np.column_stack([4 * lam[:, i] * lam[:, j] for i, j in self.edges])
        return np.hstack([vert, edge])

    def gradients(self, bary: NDArray) -> NDArray[np.float64]:
        """Gradients w.r.t. reference Cartesian coordinates, (P, n, dim)."""
        lam = np.atleast_2d(bary)
        dlam = np.vstack([-np.ones(self.dim), np.eye(self.dim)])  # (dim+1, dim)
        if self.degree == 1:
            return np.broadcast_to(dlam, (len(lam), self.dim + 1, self.dim)).copy()
        vert = (4 * lam - 1)[:, :, None] * dlam[None, :, :]
        edge = np.stack(
            [4 * (lam[:, i, None] * dlam[j] + lam[:, j, None] * dlam[i]) for i, j in self.edges],
            axis=1,
        )
        return np.concatenate([vert, edge], axis=1)


@lru_cache(maxsize=None)
def tet_element(degree: int) -> ReferenceElement:
    return ReferenceElement(3, degree)


@lru_cache(maxsize=None)
def triangle_element(degree: int) -> ReferenceElement:
    return ReferenceElement(2, degree)


def _as_batch(coords, nverts: int) -> tuple[NDArray[np.float64], bool]:
    x = np.asarray(coords, dtype=np.float64)
    single = x.ndim == 2
    x = x.reshape(-1, nverts, 3)
    return x, single


def tet_geometry(coords: NDArray) -> tuple[NDArray, NDArray]:
    """Jacobian determinants (E,) and inverse Jacobians (E, 3, 3) of affine tets.

    Raises:
        SingularElementError: if any tet has |det J| < 1e-14 * h^3.
    """
    x, _ = _as_batch(coords, 4)
    jac = np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))  # columns are edge vectors
    det = np.linalg.det(jac)
    edges = x[:, :, None, :] - x[:, None, :, :]
    scale = np.sqrt(np.max(np.sum(edges**2, axis=-1), axis=(1, 2)))
    bad = np.flatnonzero(~(np.abs(det) >= DEGENERACY_TOL * scale**3))
    if len(bad):
        raise SingularElementError(f"degenerate tetrahedron (det J = {det[bad[0]]:.3e})", int(bad[0]))
    return det, np.linalg.inv(jac)


def physical_gradients(ref_grads: NDArray, inv_jac: NDArray) -> NDArray:
    """Map (P, n, 3) reference gradients to (E, P, n, 3) physical gradients."""
    return np.einsum("pnk,ekj->epnj", ref_grads, inv_jac)


def strain_operator(grads: NDArray) -> NDArray:
    """Voigt engineering strain of the vector shape functions.

    Args:
        grads: (..., n, 3) scalar shape-function gradients.

    Returns:
        (..., 6, 3n) matrix mapping component-major coefficients to
        ``[e11, e22, e33, g23, g13, g12]``.
    """
    n = grads.shape[-2]
    g = np.moveaxis(grads, -1, -2)  # (..., 3, n)
    b = np.zeros(grads.shape[:-2] + (6, 3 * n))
    c0, c1, c2 = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    b[..., 0, c0] = g[..., 0, :]
    b[..., 1, c1] = g[..., 1, :]
    b[..., 2, c2] = g[..., 2, :]
    b[..., 3, c1] = g[..., 2, :]
    b[..., 3, c2] = g[..., 1, :]
    b[..., 4, c0] = g[..., 2, :]
    b[..., 4, c2] = g[..., 0, :]
    b[..., 5, c0] = g[..., 1, :]
    b[..., 5, c1] = g[..., 0, :]
    return b


def _volume_setup(coords, degree: int, quad_degree: int | None):
    ref = tet_element(degree)
    rule = tet_rule(2 * degree if quad_degree is None else quad_degree)
    det, inv = tet_geometry(coords)
    grads = physical_gradients(ref.gradients(rule.points), inv)
    wdet = rule.weights[None, :] * np.abs(det)[:, None]  # (E, P)
    return ref, rule, grads, wdet


def _symmetrize(m: NDArray) -> NDArray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def elastic_matrices(coords, degree: int, stiffness, quad_degree: int | None = None) -> NDArray:
    """Batched elastic element matrices, (E, 3n, 3n)."""
    _, _, grads, wdet = _volume_setup(coords, degree, quad_degree)
    b = strain_operator(grads)
    m = np.einsum("ep,epsi,st,eptj->eij", wdet, b, np.asarray(stiffness), b, optimize=True)
    return _symmetrize(m)


def magnetic_matrices(coords, degree: int, permeability, quad_degree: int | None = None) -> NDArray:
    """Batched magnetic element matrices, (E, n, n)."""
    _, _, grads, wdet = _volume_setup(coords, degree, quad_degree)
    m = np.einsum("ep,epik,kl,epjl->eij", wdet, grads, np.asarray(permeability), grads, optimize=True)
    return _symmetrize(m)


def coupling_matrices(coords, degree: int, coupling, quad_degree: int | None = None,
                      form: str = "strain") -> NDArray:
    """Batched coupling element matrices, (E, 3n, n).

    Entry (I, j) is one half of the integral of the Voigt strain of vector
    shape I against ``coupling @ grad N_j``.  ``form="gradient"`` evaluates the
    same integral as ``grad N_j . (coupling.T @ strain_I)``; the two agree up
    to rounding.
    """
    _, _, grads, wdet = _volume_setup(coords, degree, quad_degree)
    b = strain_operator(grads)
    e = np.asarray(coupling)
    if form == "strain":
        return 0.5 * np.einsum("ep,epsi,sk,epjk->eij", wdet, b, e, grads, optimize=True)
    if form == "gradient":
        ct = np.einsum("ep,epjk,sk,epsi->eji", wdet, grads, e, b, optimize=True)
        return 0.5 * np.swapaxes(ct, -1, -2)
    raise ValueError(f"unknown coupling form {form!r}")


def mass_matrices(coords, degree: int, quad_degree: int | None = None) -> NDArray:
    """Batched scalar L2 Gram matrices, (E, n, n)."""
    ref = tet_element(degree)
    rule = tet_rule(2 * degree if quad_degree is None else quad_degree)
    det, _ = tet_geometry(coords)
    phi = ref.values(rule.points)
    m = np.einsum("e,p,pi,pj->eij", np.abs(det), rule.weights, phi, phi)
    return _symmetrize(m)


def laplace_matrices(coords, degree: int, quad_degree: int | None = None) -> NDArray:
    """Batched scalar H1-seminorm Gram matrices, (E, n, n)."""
    return magnetic_matrices(coords, degree, np.eye(3), quad_degree)


def strain_gram_matrices(coords, degree: int, quad_degree: int | None = None) -> NDArray:
    """Batched Gram of the Voigt strain dot product, (E, 3n, 3n)."""
    return elastic_matrices(coords, degree, np.eye(6), quad_degree)


def element_elastic(tet, degree: int, stiffness) -> NDArray:
    return elastic_matrices(np.asarray(tet)[None], degree, stiffness)[0]


def element_magnetic(tet, degree: int, permeability) -> NDArray:
    return magnetic_matrices(np.asarray(tet)[None], degree, permeability)[0]


def element_coupling(tet, degree: int, coupling, form: str = "strain") -> NDArray:
    return coupling_matrices(np.asarray(tet)[None], degree, coupling, form=form)[0]


def _evaluate(field, x: NDArray, *args, shape: tuple[int, ...]) -> NDArray:
    """Evaluate a callable or broadcast a constant to (P,) + shape."""
    if field is None:
        return np.zeros((len(x),) + shape)
    if callable(field):
        vals = np.asarray(field(x, *args), dtype=np.float64)
    else:
        vals = np.asarray(field, dtype=np.float64)
    return np.broadcast_to(vals, (len(x),) + shape)


def facet_geometry(coords: NDArray) -> tuple[NDArray, NDArray]:
    """Areas (E,) and unit normals (E, 3) of triangles, normal = (b-a) x (c-a)."""
    x, _ = _as_batch(coords, 3)
    cross = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    norm = np.linalg.norm(cross, axis=1)
    edges = x[:, :, None, :] - x[:, None, :, :]
    scale2 = np.max(np.sum(edges**2, axis=-1), axis=(1, 2))
    bad = np.flatnonzero(~(norm >= DEGENERACY_TOL * scale2))
    if len(bad):
        raise SingularElementError("zero-area facet", int(bad[0]))
    return 0.5 * norm, cross / norm[:, None]


def neumann_load_vectors(coords, degree: int, traction=None, flux=None,
                         quad_degree: int | None = None) -> tuple[NDArray, NDArray]:
    """Batched facet loads for (E, 3, 3) triangles.

    ``traction(x, n) -> (P, 3)`` and ``flux(x, n) -> (P,)`` receive physical
    points and the outward unit normal at each point.  Constants are accepted,
    as are per-facet constants of shape (E, 3) for traction and (E,) for flux.

    Returns:
        (E, 3 n_f) component-major traction loads and (E, n_f) flux loads.
    """
    x, _ = _as_batch(coords, 3)
    ref = triangle_element(degree)
    rule = triangle_rule(2 * degree if quad_degree is None else quad_degree)
    area, normal = facet_geometry(x)
    phi = ref.values(rule.points)  # (P, n)
    n_f = phi.shape[1]
    l_out = np.zeros((len(x), 3 * n_f))
    m_out = np.zeros((len(x), n_f))
    per_facet_tau = traction is not None and not callable(traction) and np.ndim(traction) == 2
    per_facet_flux = flux is not None and not callable(flux) and np.ndim(flux) == 1
    for i in range(len(x)):
        pts = rule.points @ x[i]
        nrm = np.broadcast_to(normal[i], pts.shape)
        w = 2.0 * area[i] * rule.weights
        tau = _evaluate(traction[i] if per_facet_tau else traction, pts, nrm, shape=(3,))
        flx = _evaluate(flux[i] if per_facet_flux else flux, pts, nrm, shape=())
        l_out[i] = np.einsum("p,pa,pc->ca", w, phi, tau).ravel()
        m_out[i] = np.einsum("p,pa,p->a", w, phi, flx)
    return l_out, m_out


def element_neumann_loads(facet, degree: int, traction=None, flux=None) -> tuple[NDArray, NDArray]:
    l_e, m_e = neumann_load_vectors(np.asarray(facet)[None], degree, traction, flux)
    return l_e[0], m_e[0]


def source_load_vectors(coords, degree: int, body_force=None, source=None,
                        quad_degree: int | None = None) -> tuple[NDArray, NDArray]:
    """Batched volume loads; ``body_force(x) -> (P, 3)``, ``source(x) -> (P,)``."""
    x, _ = _as_batch(coords, 4)
    ref = tet_element(degree)
    rule = tet_rule(2 * degree if quad_degree is None else quad_degree)
    det, _ = tet_geometry(x)
    phi = ref.values(rule.points)
    pts = np.einsum("pk,ekd->epd", rule.points, x).reshape(-1, 3)
    f = _evaluate(body_force, pts, shape=(3,)).reshape(len(x), -1, 3)
    g = _evaluate(source, pts, shape=()).reshape(len(x), -1)
    w = rule.weights[None, :] * np.abs(det)[:, None]
    l_out = np.einsum("ep,pa,epc->eca", w, phi, f).reshape(len(x), -1)
    m_out = np.einsum("ep,pa,ep->ea", w, phi, g)
    return l_out, m_out


def element_source_loads(tet, degree: int, body_force=None, source=None) -> tuple[NDArray, NDArray]:
    l_e, m_e = source_load_vectors(np.asarray(tet)[None], degree, body_force, source)
    return l_e[0], m_e[0]
