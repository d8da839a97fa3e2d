"""Numerical estimates of coercivity, Korn and inf-sup constants.

Every constant is the smallest eigenvalue of a dense generalized symmetric
eigenproblem on the free DOFs, so desk-scale meshes only.  All norms are the
standard squared-sum H1 norms assembled by :func:`mefem.assembly.assemble_grams`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from mefem.assembly import assemble_grams, assemble_system, build_spaces
from mefem.errors import AssumptionViolationError, SizeLimitError
from mefem.material import (MaterialLaw, b_coercivity_constant, check_minimal_positivity)
from mefem.mesh import bounding_cube_side, generate_unit_cube_mesh

logger = logging.getLogger(__name__)

MAX_DENSE_DOFS = 5000
# Eigenvalues below this fraction of the largest are numerically zero.
RANK_RTOL = 1e-12
DEFAULT_SPREAD_TOL = 0.20


def _dense(x) -> NDArray[np.float64]:
    return x.toarray() if hasattr(x, "toarray") else np.asarray(x, dtype=np.float64)


def _check_size(n: int, what: str, max_dofs: int):
    if n > max_dofs:
        raise SizeLimitError(
            f"{what} has {n} free DOFs, above the dense limit of {max_dofs}; use a coarser mesh"
        )


def _min_generalized_eigenvalue(K, X) -> float:
    """Smallest eigenvalue of K q = lam X q, X SPD, with numerically-zero values set to 0."""
    K, X = _dense(K), _dense(X)
    if K.shape[0] == 0:
        return math.inf
    lam = sla.eigh(0.5 * (K + K.T), 0.5 * (X + X.T), eigvals_only=True)
    top = max(abs(lam[-1]), abs(lam[0]))
    lo = lam[0]
    if abs(lo) <= RANK_RTOL * top or top == 0.0:
        return 0.0
    return float(lo)


def estimate_inf_sup(C, X_V, X_M, max_dofs: int = MAX_DENSE_DOFS) -> float:
    """Discrete inf-sup constant of the coupling block.

    Returns ``sqrt(lam_min)`` of ``(C^T X_V^-1 C) q = lam X_M q``, which is
    ``min_psi max_v (v^T C psi) / (|v|_X_V |psi|_X_M)``.
    """
    C = _dense(C)
    _check_size(C.shape[1], "potential space", max_dofs)
    _check_size(C.shape[0], "displacement space", 3 * max_dofs)
    if not np.any(C):
        return 0.0
    fac = sla.cho_factor(_dense(X_V), lower=True)
    S = C.T @ sla.cho_solve(fac, C)
    lam = _min_generalized_eigenvalue(S, X_M)
    return float(math.sqrt(max(lam, 0.0)))


def estimate_coercivity(K, X, max_dofs: int = 3 * MAX_DENSE_DOFS) -> float:
    """Smallest generalized eigenvalue of ``K q = lam X q`` (alpha_h or gamma_h)."""
    _check_size(K.shape[0], "space", max_dofs)
    return _min_generalized_eigenvalue(K, X)


def estimate_korn_constant(S_V, E_V, X_V, max_dofs: int = 3 * MAX_DENSE_DOFS) -> float:
    """Smallest generalized eigenvalue of ``(S_V + E_V) q = lam X_V q``.

    Raises:
        AssumptionViolationError: if the strain Gram has rigid modes, i.e.
            the displacement is not clamped anywhere.
    """
    _check_size(S_V.shape[0], "displacement space", max_dofs)
    strain_min = _min_generalized_eigenvalue(E_V, X_V)
    if strain_min <= 0.0:
        raise AssumptionViolationError("strain Gram is singular: the elastic Dirichlet set is empty")
    return _min_generalized_eigenvalue(_dense(S_V) + _dense(E_V), X_V)


def theoretical_beta(M: float, C_prime: float, s: float) -> float:
    """Closed-form continuous inf-sup bound sqrt(3) M C' / (4 sqrt(s^2 + 1))."""
    for name, val in (("M", M), ("C_prime", C_prime), ("s", s)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    return math.sqrt(3.0) * M * C_prime / (4.0 * math.sqrt(s * s + 1.0))


PROVENANCE = {
    "M": "minimum of the six coupling half-sums",
    "s": "side of the smallest axis-aligned cube containing the mesh",
    "C_prime": "lam_min of (S_V + E_V) q = lam X_V q (squared seminorm reading)",
    "alpha_h": "lam_min of A q = lam X_V q",
    "gamma_h": "lam_min of B q = lam X_M q",
    "gamma_formula": "min(mu_ii) / (s^2 + 1); diagonal permeability only",
    "beta_h": "sqrt of lam_min of (C^T X_V^-1 C) q = lam X_M q",
    "beta_theory": "sqrt(3) M C_prime / (4 sqrt(s^2 + 1)); diagnostic, not a bound on beta_h",
    "norm": "squared-sum H1 norm ||v||^2 = ||v||_0^2 + |v|_1^2",
}


@dataclass(frozen=True)
class AnalysisReport:
    h: float
    M: float
    s: float
    C_prime: float
    alpha_h: float
    gamma_h: float
    gamma_formula: float | None
    beta_h: float
    beta_theory: float | None
    provenance: dict = field(default_factory=lambda: dict(PROVENANCE))

    def as_dict(self) -> dict:
        return {
            "h": self.h, "M": self.M, "s": self.s, "C_prime": self.C_prime,
            "alpha_h": self.alpha_h, "gamma_h": self.gamma_h,
            "gamma_formula": self.gamma_formula, "beta_h": self.beta_h,
            "beta_theory": self.beta_theory,
        }


def analyze(system, grams, law: MaterialLaw, h: float = math.nan) -> AnalysisReport:
    """All constants for one assembled configuration."""
    mesh = system.spaces.mesh
    s = bounding_cube_side(mesh)
    mp = check_minimal_positivity(law.coupling)
    c_prime = estimate_korn_constant(grams.S_V, grams.E_V, grams.X_V)
    alpha = estimate_coercivity(system.A, grams.X_V)
    gamma = estimate_coercivity(system.B, grams.X_M)
    mu = law.permeability
    gamma_formula = b_coercivity_constant(mu, s) if np.count_nonzero(mu - np.diag(np.diag(mu))) == 0 else None
    beta = estimate_inf_sup(system.C, grams.X_V, grams.X_M)
    beta_theory = theoretical_beta(mp.M, c_prime, s) if mp.satisfied else None
    return AnalysisReport(h, mp.M, s, c_prime, alpha, gamma, gamma_formula, beta, beta_theory)


@dataclass(frozen=True)
class InfSupStudy:
    rows: tuple[AnalysisReport, ...]
    spread: float
    spread_tol: float
    coupling_absent: bool

    @property
    def beta_values(self) -> list[float]:
        return [r.beta_h for r in self.rows]

    @property
    def passed(self) -> bool:
        return (not self.coupling_absent and min(self.beta_values) > 0
                and self.spread <= self.spread_tol)


def relative_spread(values) -> float:
    """(max - min) / max; infinite when every value is zero."""
    values = np.asarray(values, dtype=np.float64)
    top = values.max()
    if top <= 0:
        return math.inf
    return float((top - values.min()) / top)


def infsup_refinement_study(levels, degree: int, law: MaterialLaw,
                            elastic_dirichlet="x0", magnetic_dirichlet="x0",
                            spread_tol: float = DEFAULT_SPREAD_TOL) -> InfSupStudy:
    """Estimate beta_h on unit-cube meshes with ``n`` cells per axis for each level."""
    rows = []
    for n in levels:
        mesh = generate_unit_cube_mesh(n, elastic_dirichlet, magnetic_dirichlet)
        spaces = build_spaces(mesh, degree)
        system = assemble_system(spaces, law)
        grams = assemble_grams(spaces)
        report = analyze(system, grams, law, h=1.0 / n)
        logger.info("n=%d k=%d beta_h=%.6g", n, degree, report.beta_h)
        rows.append(report)
    absent = not np.any(law.coupling)
    return InfSupStudy(tuple(rows), relative_spread([r.beta_h for r in rows]), spread_tol, absent)
