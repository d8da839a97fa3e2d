import math

import numpy as np
import pytest

from conftest import BALANCED_COUPLING
from mefem.assembly import NeumannData, assemble_system, build_spaces
from mefem.material import MaterialLaw, isotropic_stiffness
from mefem.mesh import generate_unit_cube_mesh
from mefem.solver import SaddleSolution, solve
from mefem.verification import (CASES, CSV_HEADER, QuadraticField, SineField, compute_energies,
                                energy_terms, make_manufactured_case, manufactured_case_from_fields,
                                observed_rate, run_convergence_study)

VOIGT_PAIRS = {(0, 0): 0, (1, 1): 1, (2, 2): 2, (1, 2): 3, (2, 1): 3, (0, 2): 4, (2, 0): 4, (0, 1): 5, (1, 0): 5}


def anisotropic_law():
    c = isotropic_stiffness(1.2, 0.7)
    c[0, 1] = c[1, 0] = 0.9
    c[3, 3] = 0.5
    mu = np.diag([1.0, 1.5, 0.8])
    return MaterialLaw(c, BALANCED_COUPLING + 0.1, mu)


def fd_divergence(fn, x, h=1e-3):
    """Fourth-order central-difference divergence of a tensor-valued field.

    ``fn(points) -> (P, ..., 3)`` with the last axis differentiated.
    """
    total = 0.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        d = (-fn(x + 2 * e) + 8 * fn(x + e) - 8 * fn(x - e) + fn(x - 2 * e)) / (12 * h)
        total = total + d[..., k]
    return total


@pytest.mark.parametrize("choice", CASES)
def test_sources_match_finite_differences(choice, rng):
    case = make_manufactured_case(choice, anisotropic_law())
    x = rng.uniform(0.1, 0.9, (20, 3))

    def stress_tensor(p):
        s = case.stress(p)
        return np.stack([np.stack([s[:, VOIGT_PAIRS[i, j]] for j in range(3)], axis=1)
                         for i in range(3)], axis=1)

    f_fd = -fd_divergence(stress_tensor, x)
    g_fd = -fd_divergence(case.flux, x)
    np.testing.assert_allclose(case.body_force(x), f_fd, atol=1e-6)
    np.testing.assert_allclose(case.source(x), g_fd, atol=1e-6)


@pytest.mark.parametrize("choice", CASES)
def test_fields_vanish_on_dirichlet_face(choice, rng):
    case = make_manufactured_case(choice, MaterialLaw.unit())
    x = rng.uniform(0, 1, (30, 3))
    x[:, 0] = 0.0
    np.testing.assert_allclose(case.u(x), 0.0, atol=1e-15)
    np.testing.assert_allclose(case.psi(x), 0.0, atol=1e-15)


@pytest.mark.parametrize("field", [SineField(0.3, 1.1, -0.4, 0.7, 0.2),
                                   QuadraticField([0.1, -0.2, 0.3], [[1, 2, 0], [2, -1, 0.5], [0, 0.5, 3]], 0.4)])
def test_field_derivatives(field, rng):
    x = rng.uniform(0, 1, (10, 3))
    h = 1e-5
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        np.testing.assert_allclose((field.value(x + e) - field.value(x - e)) / (2 * h), field.grad(x)[:, k],
                                   atol=1e-8)
        np.testing.assert_allclose((field.grad(x + e) - field.grad(x - e)) / (2 * h), field.hess(x)[:, :, k],
                                   atol=1e-8)


def test_linear_fields_need_no_sources(rng):
    lin = [QuadraticField(rng.standard_normal(3), np.zeros((3, 3))) for _ in range(4)]
    case = manufactured_case_from_fields("linear", anisotropic_law(), lin[:3], lin[3])
    x = rng.uniform(0, 1, (10, 3))
    assert not case.body_force(x).any()
    assert not case.source(x).any()


def test_traction_is_stress_times_normal(rng):
    case = make_manufactured_case("trigonometric", anisotropic_law())
    x = rng.uniform(0, 1, (5, 3))
    n = rng.standard_normal((5, 3))
    s = case.stress(x)
    for p in range(5):
        tensor = np.array([[s[p, VOIGT_PAIRS[i, j]] for j in range(3)] for i in range(3)])
        np.testing.assert_allclose(case.traction(x, n)[p], tensor @ n[p], rtol=1e-14)
    np.testing.assert_allclose(case.normal_flux(x, n), np.sum(case.flux(x) * n, axis=1), rtol=1e-14)


def test_unknown_case():
    with pytest.raises(ValueError):
        make_manufactured_case("cubic", MaterialLaw.unit())
    with pytest.raises(ValueError):
        manufactured_case_from_fields("x", MaterialLaw.unit(), [SineField(1, 1, 1, 1)] * 2, SineField(1, 1, 1, 1))


@pytest.mark.parametrize("method", ["direct", "minres"])
def test_quadratic_case_reproduced_exactly(method, unit_law):
    case = make_manufactured_case("polynomial-quadratic", unit_law)
    table = run_convergence_study(case, 2, [1, 2, 3], method, tol=1e-13)
    assert table.exact_reproduction
    assert table.meets_thresholds()
    for row in table.rows:
        assert row.errors.h1_u < 1e-9 and row.errors.h1_psi < 1e-9


def test_quadratic_case_not_exact_for_p1(unit_law):
    table = run_convergence_study(make_manufactured_case("polynomial-quadratic", unit_law), 1, [1, 2])
    assert not table.exact_reproduction


def test_trigonometric_errors_decrease(unit_law):
    table = run_convergence_study(make_manufactured_case("trigonometric", unit_law), 1, [2, 4, 8])
    for a, b in zip(table.rows, table.rows[1:]):
        assert b.errors.h1_u < a.errors.h1_u
        assert b.errors.h1_psi < a.errors.h1_psi


def test_rates_and_csv():
    assert observed_rate(4.0, 1.0, 0.5, 0.25) == pytest.approx(2.0)
    assert observed_rate(0.0, 0.0, 0.5, 0.25) == math.inf
    case = make_manufactured_case("trigonometric", MaterialLaw.unit())
    table = run_convergence_study(case, 1, [1, 2])
    lines = table.to_csv().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    assert lines[1].endswith(",,,,")
    assert all(math.isfinite(float(v)) for v in lines[2].split(","))
    with pytest.raises(ValueError):
        run_convergence_study(case, 1, [2, 1])


# -- energies ---------------------------------------------------------------

def _solved(law, n=2, k=1, neumann=None):
    spaces = build_spaces(generate_unit_cube_mesh(n), k)
    system = assemble_system(spaces, law, neumann=neumann)
    return spaces, system, solve(system)


def test_zero_solution_has_zero_energy(unit_law):
    spaces, _, sol = _solved(unit_law)
    assert compute_energies(sol, spaces, unit_law) == (0.0, 0.0)


def test_decoupled_magnetic_load_leaves_no_elastic_energy():
    law = MaterialLaw.unit(np.zeros((6, 3)))
    spaces, system, sol = _solved(law, neumann=NeumannData(flux=0.3))
    assert not sol.u.any()
    terms = energy_terms(sol, spaces, law, NeumannData(flux=0.3))
    assert terms.el_volume == 0.0
    assert terms.mag_volume == pytest.approx(0.5 * sol.psi @ (system.B @ sol.psi), rel=1e-10)
    assert terms.mag_surface == pytest.approx(sol.psi @ system.m, rel=1e-10)


@pytest.mark.parametrize("k", [1, 2])
def test_decoupled_elastic_volume_energy(k):
    law = MaterialLaw.unit(np.zeros((6, 3)))
    data = NeumannData(traction=lambda x, n: np.column_stack([x[:, 2], 0 * x[:, 0], -x[:, 1]]))
    spaces, system, sol = _solved(law, k=k, neumann=data)
    terms = energy_terms(sol, spaces, law, data)
    assert terms.el_volume == pytest.approx(0.5 * sol.u @ (system.A @ sol.u), rel=1e-10)
    assert terms.el_surface == pytest.approx(sol.u @ system.l, rel=1e-10)
    # Equilibrium: volume energy is half the work of the loads.
    assert terms.W_el == pytest.approx(-terms.el_volume, rel=1e-10)


@pytest.mark.parametrize("k", [1, 2])
def test_coupled_volume_energy_consistency(k, rng):
    law = anisotropic_law()
    spaces = build_spaces(generate_unit_cube_mesh(2), k)
    system = assemble_system(spaces, law)
    u, psi = rng.standard_normal(system.n_u), rng.standard_normal(system.n_psi)
    sol = SaddleSolution(u, psi, 0, 0.0, 0.0, "given")
    terms = energy_terms(sol, spaces, law)
    expected = 0.5 * u @ (system.A @ u) + u @ (system.C @ psi)
    assert terms.el_volume == pytest.approx(expected, rel=1e-10)
    # 1/2 int H . B with H = -grad psi: 1/2 psi^T B psi - u^T C psi.
    assert terms.mag_volume == pytest.approx(0.5 * psi @ (system.B @ psi) - u @ (system.C @ psi), rel=1e-10)


def test_energy_dimension_mismatch(unit_law):
    spaces, _, sol = _solved(unit_law)
    bad = SaddleSolution(sol.u[:-1], sol.psi, 0, 0.0, 0.0, "given")
    with pytest.raises(ValueError):
        compute_energies(bad, spaces, unit_law)
