"""Global DOF maps, sparse block assembly and Gram matrices.

Vector DOFs are numbered component-major: global vector index ``c * m_s + i``
is component ``c`` of scalar DOF ``i``.  Scalar DOFs are the mesh nodes in
mesh order followed, for degree 2, by the edge midpoints in lexicographic
order of their (sorted) endpoint pairs.

Dirichlet conditions are homogeneous and imposed by symmetric elimination:
every block stored on a :class:`BlockSystem` or :class:`GramMatrices` lives on
the free DOFs only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from mefem import fem_core
from mefem.material import MaterialLaw
from mefem.mesh import BoundaryClass, Mesh, require_valid

TET_EDGES = tuple(itertools.combinations(range(4), 2))
TRI_EDGES = tuple(itertools.combinations(range(3), 2))


@dataclass(frozen=True, eq=False)
class FunctionSpacePair:
    """Equal-degree Lagrange spaces for displacement (3 components) and potential."""

    mesh: Mesh
    degree: int
    edges: NDArray[np.int64]
    cell_dofs: NDArray[np.int64]
    facet_dofs: NDArray[np.int64]
    dof_coords: NDArray[np.float64]
    elastic_constrained: NDArray[np.bool_]
    magnetic_constrained: NDArray[np.bool_]

    @property
    def num_scalar(self) -> int:
        return len(self.dof_coords)

    @property
    def num_vector(self) -> int:
        return 3 * self.num_scalar

    @property
    def vector_constrained(self) -> NDArray[np.bool_]:
        return np.tile(self.elastic_constrained, 3)

    @property
    def free_vector(self) -> NDArray[np.int64]:
        return np.flatnonzero(~self.vector_constrained)

    @property
    def free_scalar(self) -> NDArray[np.int64]:
        return np.flatnonzero(~self.magnetic_constrained)

    def cell_vector_dofs(self) -> NDArray[np.int64]:
        """(T, 3n) component-major global vector DOFs per tet."""
        m = self.num_scalar
        return np.hstack([self.cell_dofs + c * m for c in range(3)])

    def facet_vector_dofs(self) -> NDArray[np.int64]:
        m = self.num_scalar
        return np.hstack([self.facet_dofs + c * m for c in range(3)])

    def expand_vector(self, u_free: NDArray) -> NDArray[np.float64]:
        """Free displacement DOFs -> (m_s, 3) nodal array with zeros on Dirichlet DOFs."""
        full = np.zeros(self.num_vector)
        full[self.free_vector] = u_free
        return full.reshape(3, -1).T.copy()

    def expand_scalar(self, psi_free: NDArray) -> NDArray[np.float64]:
        full = np.zeros(self.num_scalar)
        full[self.free_scalar] = psi_free
        return full

    def restrict_vector(self, u_nodal: NDArray) -> NDArray[np.float64]:
        return np.asarray(u_nodal).T.ravel()[self.free_vector]

    def restrict_scalar(self, psi: NDArray) -> NDArray[np.float64]:
        return np.asarray(psi)[self.free_scalar]

    def interpolate_vector(self, fn) -> NDArray[np.float64]:
        """Free DOF coefficients of the Lagrange interpolant of ``fn(x) -> (P, 3)``."""
        return self.restrict_vector(fn(self.dof_coords))

    def interpolate_scalar(self, fn) -> NDArray[np.float64]:
        return self.restrict_scalar(fn(self.dof_coords))


def build_spaces(mesh: Mesh, degree: int, require_dirichlet: bool = True) -> FunctionSpacePair:
    """DOF maps and Dirichlet masks for the degree-``degree`` space pair.

    ``require_dirichlet=False`` admits meshes without a Dirichlet portion so
    that rank-deficient configurations can be analysed; such spaces do not
    give a solvable system.
    """
    if degree not in fem_core.SUPPORTED_DEGREES:
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    require_valid(mesh, require_dirichlet=require_dirichlet)
    nn = mesh.num_nodes
    tets, facets = mesh.tets, mesh.facets

    if degree == 1:
        edges = np.zeros((0, 2), dtype=np.int64)
        cell_dofs = tets.copy()
        facet_dofs = facets.copy()
        coords = mesh.nodes.copy()
    else:
        local = np.array(TET_EDGES)
        pairs = np.sort(tets[:, local].reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        cell_dofs = np.hstack([tets, nn + inverse.reshape(len(tets), 6)])
        lookup = {tuple(e): i for i, e in enumerate(edges.tolist())}
        fpairs = np.sort(facets[:, np.array(TRI_EDGES)], axis=2)
        fedge = np.array([[lookup[tuple(p)] for p in row] for row in fpairs.tolist()],
                         dtype=np.int64).reshape(-1, 3)
        facet_dofs = np.hstack([facets, nn + fedge])
        coords = np.vstack([mesh.nodes, mesh.nodes[edges].mean(axis=1)])

    m_s = len(coords)
    el = np.zeros(m_s, dtype=bool)
    mag = np.zeros(m_s, dtype=bool)
    el[facet_dofs[mesh.elastic_class == BoundaryClass.DIRICHLET].ravel()] = True
    mag[facet_dofs[mesh.magnetic_class == BoundaryClass.DIRICHLET].ravel()] = True
    return FunctionSpacePair(mesh, degree, edges, cell_dofs, facet_dofs, coords, el, mag)


@dataclass(frozen=True)
class NeumannData:
    """Surface data; callables receive ``(x, n)`` with outward unit normals.

    ``traction`` is applied on elastic-Neumann facets, ``flux`` on
    magnetic-Neumann facets.  Besides callables and constants, an (F, 3)
    traction or (F,) flux array gives one constant per mesh facet.  The
    optional per-facet boolean masks restrict either one to part of the
    boundary.
    """

    traction: object = None
    flux: object = None
    traction_mask: NDArray[np.bool_] | None = None
    flux_mask: NDArray[np.bool_] | None = None


@dataclass(frozen=True)
class SourceData:
    """Volume data; callables receive physical points ``x`` of shape (P, 3)."""

    body_force: object = None
    source: object = None


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Discrete coupled system on free DOFs.

    The full matrix is ``[[A, C], [C.T, -t^2 B]]`` acting on ``(u, psi)`` with
    right-hand side ``(l, m)``.
    """

    spaces: FunctionSpacePair
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    l: NDArray[np.float64]
    m: NDArray[np.float64]
    t: float = 1.0

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_psi(self) -> int:
        return self.B.shape[0]

    def penalty_block(self) -> sp.csr_matrix:
        return (self.t * self.t) * self.B if self.t != 1.0 else self.B

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.C], [self.C.T, -self.penalty_block()]], format="csr")

    def rhs(self) -> NDArray[np.float64]:
        return np.concatenate([self.l, self.m])

    def split(self, x: NDArray) -> tuple[NDArray, NDArray]:
        return x[: self.n_u], x[self.n_u:]


@dataclass(frozen=True, eq=False)
class GramMatrices:
    """Norm Gram matrices on free DOFs (or all DOFs when assembled unconstrained).

    ``X_*`` are full H1 Grams, ``S_*`` H1 seminorm Grams, ``L_*`` L2 Grams
    and ``E_V`` the Gram of the Voigt strain dot product.
    """

    X_V: sp.csr_matrix
    X_M: sp.csr_matrix
    S_V: sp.csr_matrix
    S_M: sp.csr_matrix
    E_V: sp.csr_matrix
    L_V: sp.csr_matrix
    L_M: sp.csr_matrix


def _scatter(local: NDArray, rows: NDArray, cols: NDArray, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    mat = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _sym(mat: sp.csr_matrix) -> sp.csr_matrix:
    out = ((mat + mat.T) * 0.5).tocsr()
    out.sort_indices()
    return out


def _restrict(mat: sp.spmatrix, rows: NDArray, cols: NDArray) -> sp.csr_matrix:
    out = mat.tocsr()[rows][:, cols].tocsr()
    out.sort_indices()
    return out


def _accumulate(local: NDArray, dofs: NDArray, size: int) -> NDArray[np.float64]:
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=size).astype(np.float64)


def _element_coords(spaces: FunctionSpacePair) -> NDArray:
    return spaces.mesh.nodes[spaces.mesh.tets]


def _per_facet(data, sel, ndim):
    if data is not None and not callable(data) and np.ndim(data) == ndim:
        return np.asarray(data)[sel]
    return data


def assemble_loads(spaces: FunctionSpacePair, neumann: NeumannData | None = None,
                   sources: SourceData | None = None,
                   quad_degree: int | None = None) -> tuple[NDArray, NDArray]:
    """Full-length (all DOFs) load vectors ``(l, m)``."""
    mesh, k = spaces.mesh, spaces.degree
    l = np.zeros(spaces.num_vector)
    m = np.zeros(spaces.num_scalar)
    if neumann is not None:
        tri = mesh.nodes[mesh.facets]
        if neumann.traction is not None:
            sel = mesh.elastic_class == BoundaryClass.NEUMANN
            if neumann.traction_mask is not None:
                sel &= neumann.traction_mask
            if np.any(sel):
                le, _ = fem_core.neumann_load_vectors(tri[sel], k, traction=_per_facet(neumann.traction, sel, 2),
                                                      quad_degree=quad_degree)
                l += _accumulate(le, spaces.facet_vector_dofs()[sel], spaces.num_vector)
        if neumann.flux is not None:
            sel = mesh.magnetic_class == BoundaryClass.NEUMANN
            if neumann.flux_mask is not None:
                sel &= neumann.flux_mask
            if np.any(sel):
                _, me = fem_core.neumann_load_vectors(tri[sel], k, flux=_per_facet(neumann.flux, sel, 1),
                                                      quad_degree=quad_degree)
                m += _accumulate(me, spaces.facet_dofs[sel], spaces.num_scalar)
    if sources is not None and (sources.body_force is not None or sources.source is not None):
        le, me = fem_core.source_load_vectors(_element_coords(spaces), k, sources.body_force,
                                              sources.source, quad_degree=quad_degree)
        l += _accumulate(le, spaces.cell_vector_dofs(), spaces.num_vector)
        m += _accumulate(me, spaces.cell_dofs, spaces.num_scalar)
    return l, m


def assemble_full_blocks(spaces: FunctionSpacePair, law: MaterialLaw):
    """Unconstrained ``(A, B, C)`` on all DOFs."""
    x = _element_coords(spaces)
    k = spaces.degree
    nv, ns = spaces.num_vector, spaces.num_scalar
    vd, sd = spaces.cell_vector_dofs(), spaces.cell_dofs
    a_e = fem_core.elastic_matrices(x, k, law.stiffness)
    b_e = fem_core.magnetic_matrices(x, k, law.permeability)
    c_e = fem_core.coupling_matrices(x, k, law.coupling)
    A = _sym(_scatter(a_e, vd, vd, (nv, nv)))
    B = _sym(_scatter(b_e, sd, sd, (ns, ns)))
    C = _scatter(c_e, vd, sd, (nv, ns))
    return A, B, C


def assemble_system(spaces: FunctionSpacePair, law: MaterialLaw,
                    neumann: NeumannData | None = None, sources: SourceData | None = None,
                    t: float = 1.0, quad_degree: int | None = None) -> BlockSystem:
    """Assemble the coupled system and eliminate homogeneous Dirichlet DOFs.

    Args:
        spaces: DOF maps from :func:`build_spaces`.
        law: material tensors.
        neumann: traction and normal flux on the Neumann facets.
        sources: volume body force and magnetic source (verification only).
        t: scale of the magnetic block in the second row, which reads
            ``C.T u - t^2 B psi = m``.
        quad_degree: quadrature degree for the loads (default ``2 k``).
    """
    A, B, C = assemble_full_blocks(spaces, law)
    l, m = assemble_loads(spaces, neumann, sources, quad_degree)
    fv, fs = spaces.free_vector, spaces.free_scalar
    return BlockSystem(
        spaces,
        _restrict(A, fv, fv),
        _restrict(B, fs, fs),
        _restrict(C, fv, fs),
        l[fv],
        m[fs],
        float(t),
    )


def assemble_grams(spaces: FunctionSpacePair, constrained: bool = True) -> GramMatrices:
    """Norm Gram matrices, restricted to free DOFs unless ``constrained=False``."""
    x = _element_coords(spaces)
    k = spaces.degree
    ns, nv = spaces.num_scalar, spaces.num_vector
    sd, vd = spaces.cell_dofs, spaces.cell_vector_dofs()
    L = _sym(_scatter(fem_core.mass_matrices(x, k), sd, sd, (ns, ns)))
    S = _sym(_scatter(fem_core.laplace_matrices(x, k), sd, sd, (ns, ns)))
    E = _sym(_scatter(fem_core.strain_gram_matrices(x, k), vd, vd, (nv, nv)))
    eye3 = sp.identity(3, format="csr")
    L_V = sp.kron(eye3, L, format="csr")
    S_V = sp.kron(eye3, S, format="csr")
    if constrained:
        fv, fs = spaces.free_vector, spaces.free_scalar
    else:
        fv, fs = np.arange(nv), np.arange(ns)
    L_M, S_M = _restrict(L, fs, fs), _restrict(S, fs, fs)
    L_V, S_V = _restrict(L_V, fv, fv), _restrict(S_V, fv, fv)
    return GramMatrices(
        X_V=_sym(L_V + S_V),
        X_M=_sym(L_M + S_M),
        S_V=S_V,
        S_M=S_M,
        E_V=_restrict(E, fv, fv),
        L_V=L_V,
        L_M=L_M,
    )


def residual(system: BlockSystem, u: NDArray, psi: NDArray) -> tuple[float, float]:
    """Euclidean norms of the two block-row residuals."""
    u = np.asarray(u, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if u.shape != (system.n_u,) or psi.shape != (system.n_psi,):
        raise ValueError(
            f"expected u of length {system.n_u} and psi of length {system.n_psi}, "
            f"got {u.shape} and {psi.shape}"
        )
    r_u = system.A @ u + system.C @ psi - system.l
    r_psi = system.C.T @ u - system.penalty_block() @ psi - system.m
    return float(np.linalg.norm(r_u)), float(np.linalg.norm(r_psi))
