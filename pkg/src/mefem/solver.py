"""Direct, Schur-complement and preconditioned MINRES solvers for the block system."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from mefem.assembly import BlockSystem, residual
from mefem.errors import NoConvergenceError, SingularSystemError

logger = logging.getLogger(__name__)

METHODS = ("direct", "schur", "minres")


@dataclass(frozen=True, eq=False)
class SaddleSolution:
    """Free-DOF displacement and potential with residual diagnostics."""

    u: NDArray[np.float64]
    psi: NDArray[np.float64]
    iterations: int
    residual_u: float
    residual_psi: float
    method: str
    preconditioned_residual: float | None = None

    def relative_residual(self, system: BlockSystem) -> float:
        scale = np.linalg.norm(system.l) + np.linalg.norm(system.m)
        r = np.hypot(self.residual_u, self.residual_psi)
        return float(r / scale) if scale > 0 else float(r)


def _finish(system: BlockSystem, u, psi, iterations: int, method: str, pres=None) -> SaddleSolution:
    r_u, r_psi = residual(system, u, psi)
    return SaddleSolution(u, psi, iterations, r_u, r_psi, method, pres)


def _splu(matrix, what: str):
    try:
        lu = spla.splu(matrix.tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(f"{what} factorization failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    if diag.size and (diag.min() <= 1e-13 * diag.max() or not np.all(np.isfinite(diag))):
        raise SingularSystemError(f"{what} is numerically singular (pivot ratio {diag.min() / diag.max():.2e})")
    return lu


def _cholesky(matrix, what: str):
    dense = matrix.toarray() if hasattr(matrix, "toarray") else np.asarray(matrix)
    try:
        return sla.cho_factor(dense, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"{what} is not positive definite: {exc}") from exc


def solve_direct(system: BlockSystem) -> SaddleSolution:
    """Sparse LU solve of the full symmetric indefinite matrix."""
    if system.n_u + system.n_psi == 0:
        return _finish(system, np.zeros(0), np.zeros(0), 0, "direct")
    lu = _splu(system.matrix(), "saddle-point matrix")
    x = lu.solve(system.rhs())
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("direct solve produced non-finite values")
    u, psi = system.split(x)
    return _finish(system, u.copy(), psi.copy(), 0, "direct")


def schur_complement(system: BlockSystem):
    """Dense ``A + C B^-1 C^T`` and the Cholesky factor of ``t^2 B``."""
    b_fac = _cholesky(system.penalty_block(), "magnetic block B")
    binv_ct = sla.cho_solve(b_fac, system.C.T.toarray())
    schur = system.A.toarray() + system.C @ binv_ct
    return 0.5 * (schur + schur.T), b_fac


def solve_schur(system: BlockSystem) -> SaddleSolution:
    """Eliminate the potential and solve the SPD primal system for u.

    From the second row, ``psi = (t^2 B)^-1 (C^T u - m)``; substituting gives
    ``(A + C (t^2 B)^-1 C^T) u = l + C (t^2 B)^-1 m``.
    """
    schur, b_fac = schur_complement(system)
    s_fac = _cholesky(schur, "Schur complement")
    rhs = system.l + system.C @ sla.cho_solve(b_fac, system.m)
    u = sla.cho_solve(s_fac, rhs)
    psi = sla.cho_solve(b_fac, system.C.T @ u - system.m)
    return _finish(system, u, psi, 0, "schur")


def block_preconditioner(system: BlockSystem) -> spla.LinearOperator:
    """Exact inverse of ``diag(A, t^2 B)`` as a linear operator."""
    a_lu = _splu(system.A, "elastic block A")
    b_lu = _splu(system.penalty_block(), "magnetic block B")
    n_u, n = system.n_u, system.n_u + system.n_psi

    def apply(r):
        r = np.asarray(r).ravel()
        return np.concatenate([a_lu.solve(r[:n_u]), b_lu.solve(r[n_u:])])

    return spla.LinearOperator((n, n), matvec=apply, dtype=np.float64)


def solve_iterative(system: BlockSystem, tol: float = 1e-10, max_iterations: int = 1000,
                    x0: NDArray | None = None) -> SaddleSolution:
    """Block-diagonally preconditioned MINRES on the full indefinite matrix.

    Args:
        tol: relative tolerance on the preconditioned residual norm.
        max_iterations: iteration cap.
        x0: optional initial guess stacking ``(u, psi)``.

    Raises:
        NoConvergenceError: the cap is reached before ``tol``.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    K = system.matrix()
    P = block_preconditioner(system)
    b = system.rhs()
    count = [0]

    def callback(_xk):
        count[0] += 1

    x, info = spla.minres(K, b, x0=x0, M=P, rtol=tol, maxiter=max_iterations, callback=callback)
    r = b - K @ x
    pres = float(np.sqrt(max(r @ P.matvec(r), 0.0)))
    if info != 0:
        raise NoConvergenceError("MINRES did not converge", pres, count[0])
    u, psi = system.split(x)
    logger.debug("minres converged in %d iterations, preconditioned residual %.3e", count[0], pres)
    return _finish(system, u.copy(), psi.copy(), count[0], "minres", pres)


def solve(system: BlockSystem, method: str = "direct", tol: float = 1e-10,
          max_iterations: int = 1000) -> SaddleSolution:
    if method == "direct":
        return solve_direct(system)
    if method == "schur":
        return solve_schur(system)
    if method in ("minres", "iterative"):
        return solve_iterative(system, tol, max_iterations)
    raise ValueError(f"unknown solver {method!r}; choose from {METHODS}")
