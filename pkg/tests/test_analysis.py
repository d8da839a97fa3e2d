import math

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import BALANCED_COUPLING
from mefem.analysis import (analyze, estimate_coercivity, estimate_inf_sup, estimate_korn_constant,
                            infsup_refinement_study, relative_spread, theoretical_beta)
from mefem.assembly import assemble_grams, assemble_system, build_spaces
from mefem.errors import AssumptionViolationError, SizeLimitError
from mefem.material import MaterialLaw, b_coercivity_constant, check_minimal_positivity
from mefem.mesh import BoundaryClass, generate_unit_cube_mesh


def _setup(n, k, law, el="x0", mag="x0"):
    spaces = build_spaces(generate_unit_cube_mesh(n, el, mag), k)
    return assemble_system(spaces, law), assemble_grams(spaces)


def whitened_inf_sup(C, X_V, X_M):
    """Smallest singular value of L_V^-1 C L_M^-T with X = L L^T."""
    lv = sla.cholesky(X_V.toarray(), lower=True)
    lm = sla.cholesky(X_M.toarray(), lower=True)
    w = sla.solve_triangular(lv, C.toarray(), lower=True)
    w = sla.solve_triangular(lm, w.T, lower=True).T
    return sla.svdvals(w).min()


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("coupling", ["ones", "balanced", "random"])
def test_inf_sup_matches_whitened_oracle(n, coupling, rng):
    e = {"ones": np.ones((6, 3)), "balanced": BALANCED_COUPLING,
         "random": rng.uniform(0.2, 1.0, (6, 3))}[coupling]
    system, grams = _setup(n, 1, MaterialLaw.unit(e))
    beta = estimate_inf_sup(system.C, grams.X_V, grams.X_M)
    assert beta == pytest.approx(whitened_inf_sup(system.C, grams.X_V, grams.X_M), abs=1e-8)


def test_zero_coupling_gives_zero():
    system, grams = _setup(1, 1, MaterialLaw.unit(np.zeros((6, 3))))
    assert estimate_inf_sup(system.C, grams.X_V, grams.X_M) == 0.0


def test_inf_sup_scales_with_coupling(balanced_law):
    system, grams = _setup(2, 1, balanced_law)
    base = estimate_inf_sup(system.C, grams.X_V, grams.X_M)
    for c in (0.1, 3.0):
        scaled = estimate_inf_sup(c * system.C, grams.X_V, grams.X_M)
        assert scaled == pytest.approx(c * base, rel=1e-10)


def test_inf_sup_under_gram_rescaling(balanced_law):
    """Both norms grow by sqrt(a), so beta_h shrinks by a; opposite scalings cancel."""
    system, grams = _setup(2, 1, balanced_law)
    base = estimate_inf_sup(system.C, grams.X_V, grams.X_M)
    assert estimate_inf_sup(system.C, 7.0 * grams.X_V, 7.0 * grams.X_M) == pytest.approx(base / 7.0, rel=1e-10)
    assert estimate_inf_sup(system.C, 7.0 * grams.X_V, grams.X_M / 7.0) == pytest.approx(base, rel=1e-10)


def test_all_ones_coupling_is_degenerate(unit_law):
    """c(v, psi) only sees derivatives along (1, 1, 1), so beta_h vanishes."""
    for n in (1, 2, 3):
        system, grams = _setup(n, 1, unit_law)
        assert estimate_inf_sup(system.C, grams.X_V, grams.X_M) == 0.0
        # Not a thresholding artifact: C itself has a null vector.
        sv = sla.svdvals(system.C.toarray())
        assert sv.min() <= 1e-13 * sv.max()


def test_size_limit(balanced_law):
    system, grams = _setup(2, 1, balanced_law)
    with pytest.raises(SizeLimitError):
        estimate_inf_sup(system.C, grams.X_V, grams.X_M, max_dofs=10)


@pytest.mark.parametrize("n, k", [(n, k) for n in (1, 2, 3) for k in (1, 2)])
def test_magnetic_coercivity_above_formula(n, k):
    mu = np.diag([1.0, 2.0, 0.5])
    system, grams = _setup(n, k, MaterialLaw.unit().with_permeability(mu))
    gamma_h = estimate_coercivity(system.B, grams.X_M)
    assert gamma_h >= b_coercivity_constant(mu, 1.0) - 1e-9


def test_elastic_coercivity_positive_with_clamping(unit_law):
    system, grams = _setup(2, 1, unit_law)
    assert estimate_coercivity(system.A, grams.X_V) > 0.1


def test_korn_failure_without_clamping(unit_law):
    mesh = generate_unit_cube_mesh(2)
    free = mesh.with_classes(elastic_class=np.full(len(mesh.facets), BoundaryClass.NEUMANN))
    spaces = build_spaces(free, 1, require_dirichlet=False)
    system, grams = assemble_system(spaces, unit_law), assemble_grams(spaces)
    assert estimate_coercivity(system.A, grams.X_V) < 1e-8
    with pytest.raises(AssumptionViolationError):
        estimate_korn_constant(grams.S_V, grams.E_V, grams.X_V)


def test_korn_constant_is_a_domain_constant():
    values = []
    for n in (1, 2, 3):
        grams = assemble_grams(build_spaces(generate_unit_cube_mesh(n), 1))
        values.append(estimate_korn_constant(grams.S_V, grams.E_V, grams.X_V))
    assert min(values) > 0
    assert relative_spread(values) <= 0.15, values
    assert all(a >= b for a, b in zip(values, values[1:]))  # nested spaces


def test_theoretical_beta():
    assert theoretical_beta(1.0, 1.0, 1.0) == pytest.approx(math.sqrt(3) / (4 * math.sqrt(2)))
    assert theoretical_beta(1.0, 1.0, 1.0) == pytest.approx(0.30619, abs=5e-6)
    values = [theoretical_beta(1.5, 0.9, s) for s in (1, 2, 4, 8, 16)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        theoretical_beta(0.0, 1.0, 1.0)


def test_relative_spread():
    assert relative_spread([1.0, 0.8, 0.9]) == pytest.approx(0.2)
    assert relative_spread([0.0, 0.0]) == math.inf


def test_analyze_report(unit_law):
    system, grams = _setup(2, 1, unit_law)
    report = analyze(system, grams, unit_law, h=0.5)
    assert report.M == 1.5 and report.s == 1.0
    assert report.gamma_formula == pytest.approx(0.5)
    assert report.gamma_h >= report.gamma_formula
    assert report.beta_theory == pytest.approx(theoretical_beta(1.5, report.C_prime, 1.0))
    assert set(report.as_dict()) == {"h", "M", "s", "C_prime", "alpha_h", "gamma_h", "gamma_formula",
                                     "beta_h", "beta_theory"}
    assert "beta_h" in report.provenance


def test_analyze_without_minimal_positivity():
    law = MaterialLaw.unit(np.vstack([np.eye(3), np.zeros((3, 3))]))
    system, grams = _setup(1, 1, law)
    report = analyze(system, grams, law)
    assert report.beta_theory is None
    assert not check_minimal_positivity(law.coupling).satisfied


def test_refinement_study_balanced_coupling(balanced_law):
    study = infsup_refinement_study([1, 2, 3], 1, balanced_law)
    assert study.passed, study.beta_values
    assert study.spread <= 0.2 and min(study.beta_values) > 0


def test_refinement_study_flags_absent_coupling():
    study = infsup_refinement_study([1], 1, MaterialLaw.unit(np.zeros((6, 3))))
    assert study.coupling_absent and not study.passed
