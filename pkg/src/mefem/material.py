"""Linear piezomagnetic material law in Voigt form and its algebraic diagnostics.

Voigt ordering is ``[11, 22, 33, 23, 13, 12]`` with engineering shear strains
(``gamma_ij = 2 eps_ij`` for ``i != j``).  Stress and flux density follow::

    sigma = stiffness @ strain + coupling @ grad(psi)
    B     = coupling.T @ strain - permeability @ grad(psi)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mefem.errors import UnsupportedMaterialError
from mefem.validation import Check, ValidationReport

# 1-based (row, column) entries of the 6x3 coupling matrix that enter each
# half-sum, in the order k = 1..6.
MINIMAL_POSITIVITY_ENTRIES = (
    ((1, 1), (5, 1), (6, 1)),
    ((2, 2), (4, 2), (6, 2)),
    ((3, 3), (4, 3), (5, 3)),
    ((1, 2), (2, 1), (4, 1), (5, 2), (6, 1), (6, 2)),
    ((1, 3), (3, 1), (4, 1), (5, 1), (5, 3), (6, 3)),
    ((2, 3), (3, 2), (4, 2), (4, 3), (5, 2), (6, 3)),
)

SYMMETRY_RTOL = 1e-12


def isotropic_stiffness(lam: float, mu: float) -> NDArray[np.float64]:
    """6x6 Voigt stiffness of an isotropic solid from its Lame pair."""
    c = np.zeros((6, 6))
    c[:3, :3] = lam
    c[np.arange(3), np.arange(3)] = lam + 2.0 * mu
    c[np.arange(3, 6), np.arange(3, 6)] = mu
    return c


@dataclass(frozen=True, eq=False)
class MaterialLaw:
    """Voigt-form constitutive tensors.

    Attributes:
        stiffness: 6x6 elastic stiffness at constant field (Pa).
        coupling: 6x3 magneto-elastic coupling (T).
        permeability: 3x3 permeability at constant strain (H/m).
    """

    stiffness: NDArray[np.float64]
    coupling: NDArray[np.float64]
    permeability: NDArray[np.float64]

    def __post_init__(self):
        shapes = {"stiffness": (6, 6), "coupling": (6, 3), "permeability": (3, 3)}
        for name, shape in shapes.items():
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.size != shape[0] * shape[1]:
                raise ValueError(f"{name} needs {shape[0]}x{shape[1]} entries, got {arr.size}")
            arr = arr.reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def unit(cls, coupling: ArrayLike | None = None) -> MaterialLaw:
        """Isotropic stiffness with lambda = mu = 1, identity permeability.

        ``coupling`` defaults to the all-ones 6x3 matrix.
        """
        e = np.ones((6, 3)) if coupling is None else coupling
        return cls(isotropic_stiffness(1.0, 1.0), e, np.eye(3))

    def with_coupling(self, coupling: ArrayLike) -> MaterialLaw:
        return MaterialLaw(self.stiffness, coupling, self.permeability)

    def with_permeability(self, permeability: ArrayLike) -> MaterialLaw:
        return MaterialLaw(self.stiffness, self.coupling, permeability)

    def stress(self, strain: NDArray, grad_psi: NDArray) -> NDArray:
        """Voigt stress for (..., 6) engineering strains and (..., 3) potential gradients."""
        return strain @ self.stiffness.T + grad_psi @ self.coupling.T

    def flux_density(self, strain: NDArray, grad_psi: NDArray) -> NDArray:
        return strain @ self.coupling - grad_psi @ self.permeability.T


@dataclass(frozen=True)
class MinimalPositivityReport:
    a_hat: tuple[float, ...]
    M: float
    satisfied: bool


def check_minimal_positivity(coupling: ArrayLike) -> MinimalPositivityReport:
    """Evaluate the six half-sums of the coupling matrix and their minimum.

    Works on any numeric entries; ``fractions.Fraction`` input is evaluated in
    exact arithmetic.
    """
    e = np.asarray(coupling)
    if e.shape != (6, 3):
        raise ValueError(f"coupling must be 6x3, got shape {e.shape}")
    if e.dtype != object and not np.all(np.isfinite(e)):
        raise ValueError("coupling has non-finite entries")
    a_hat = tuple(
        sum((e[i - 1, j - 1] for i, j in entries), start=0 * e[0, 0]) / 2
        for entries in MINIMAL_POSITIVITY_ENTRIES
    )
    if e.dtype != object:
        a_hat = tuple(float(a) for a in a_hat)
    m = min(a_hat)
    return MinimalPositivityReport(a_hat, m, bool(m > 0))


def _diagonal_entries(permeability: ArrayLike) -> NDArray[np.float64]:
    mu = np.asarray(permeability, dtype=np.float64)
    if mu.shape != (3, 3):
        raise ValueError(f"permeability must be 3x3, got shape {mu.shape}")
    if np.any(mu[~np.eye(3, dtype=bool)] != 0):
        raise UnsupportedMaterialError(
            "closed-form constants need a diagonal permeability; "
            "use the Rayleigh-quotient estimators in mefem.analysis instead"
        )
    d = np.diag(mu).copy()
    if np.any(d <= 0):
        raise ValueError("permeability diagonal must be positive")
    return d


def b_continuity_constant(permeability: ArrayLike) -> float:
    """Continuity bound (4 / sqrt 2) * max(mu_ii) of the magnetic form."""
    return float(4.0 / np.sqrt(2.0) * _diagonal_entries(permeability).max())


def b_coercivity_constant(permeability: ArrayLike, s: float) -> float:
    """Coercivity bound min(mu_ii) / (s^2 + 1), s the bounding cube side."""
    if not s > 0:
        raise ValueError(f"cube side must be positive, got {s}")
    d = _diagonal_entries(permeability)
    return float(d.min() / (s * s + 1.0))


def _symmetric(x: NDArray) -> bool:
    scale = np.max(np.abs(x))
    return bool(np.max(np.abs(x - x.T)) <= SYMMETRY_RTOL * scale)


def _cholesky_ok(x: NDArray) -> bool:
    try:
        np.linalg.cholesky(0.5 * (x + x.T))
    except np.linalg.LinAlgError:
        return False
    return True


def validate_material(law: MaterialLaw) -> ValidationReport:
    checks = []
    finite = all(np.all(np.isfinite(x)) for x in (law.stiffness, law.coupling, law.permeability))
    checks.append(Check("finite entries", finite))
    for name, x in (("stiffness", law.stiffness), ("permeability", law.permeability)):
        sym = finite and _symmetric(x)
        checks.append(Check(f"{name} symmetric", sym))
        spd = finite and _cholesky_ok(x)
        detail = "" if spd else (
            f"smallest eigenvalue {np.linalg.eigvalsh(0.5 * (x + x.T)).min():.3e}" if finite else "non-finite"
        )
        checks.append(Check(f"{name} positive definite", spd, detail))
    if finite:
        mp = check_minimal_positivity(law.coupling)
        checks.append(Check(
            "coupling minimal positivity",
            mp.satisfied,
            f"M = {mp.M:.17g}" if mp.satisfied else f"minimal positivity violated, M = {mp.M:.17g}",
        ))
    else:
        checks.append(Check("coupling minimal positivity", False, "non-finite"))
    return ValidationReport(tuple(checks))
