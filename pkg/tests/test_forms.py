import math

import numpy as np
import pytest

from bforc.femspace import CoefficientField, ElementChoice, build_pressure_space, build_spaces
from bforc.forms import (
    MaterialLaws,
    assemble_divergence,
    assemble_forchheimer,
    assemble_heat_diffusion,
    assemble_loads,
    assemble_mass,
    assemble_pressure_mean,
    assemble_skew_convection,
    assemble_skew_transport,
    assemble_stiffness,
    assemble_viscous_mass,
    forchheimer_weight,
    nonlinear_rule,
)
from bforc.mesh import Mesh, structured_unit_square
from bforc.mms import TEST_CASES
from bforc.quadrature import collapsed_gauss_rule

TH, MINI = ElementChoice.TAYLOR_HOOD, ElementChoice.MINI
LAWS = TEST_CASES[1].laws


def spaces_for(choice, n=4):
    return build_spaces(structured_unit_square(n), choice)


def smooth_field(space, seed):
    """Interpolant of a smooth random field that never vanishes."""
    a, b, c, d = np.random.default_rng(seed).uniform(1, 3, size=4)
    if space.vector_multiplicity == 2:
        return CoefficientField(space, space.interpolate(
            lambda x, y: (1 + 0.3 * np.sin(a * x + b * y), 0.3 * np.cos(c * x - d * y))))
    return CoefficientField(space, space.interpolate(lambda x, y: 0.3 * np.sin(a * x + b * y)))


def random_field(space, seed):
    return CoefficientField(space, np.random.default_rng(seed).normal(size=space.n_dofs))


def test_reference_p1_stiffness():
    mesh = Mesh.from_cells([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    K = assemble_stiffness(build_pressure_space(mesh)).toarray()
    np.testing.assert_allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-15)


def test_reference_p1_mass():
    mesh = Mesh.from_cells([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    M = assemble_mass(build_pressure_space(mesh)).toarray()
    np.testing.assert_allclose(M, (np.ones((3, 3)) + np.eye(3)) / 24, atol=1e-15)


@pytest.mark.parametrize("choice", [TH, MINI])
def test_mass_and_stiffness_properties(choice):
    sp_ = spaces_for(choice)
    for space in (sp_.velocity, sp_.temperature):
        M, K = assemble_mass(space), assemble_stiffness(space)
        ones = np.ones(space.n_dofs)
        # total area times the number of components
        assert ones @ M @ ones == pytest.approx(space.vector_multiplicity, rel=1e-13)
        assert np.max(np.abs(K @ ones)) < 1e-12
        assert abs(M - M.T).max() <= 1e-15 * abs(M).max()
        assert abs(K - K.T).max() <= 1e-15 * abs(K).max()


@pytest.mark.parametrize("choice", [TH, MINI])
def test_skew_forms_vanish_on_diagonal(choice):
    sp_ = spaces_for(choice)
    w = random_field(sp_.velocity, 0)
    N = assemble_skew_convection(w, sp_.velocity)
    C = assemble_skew_transport(w, sp_.temperature)
    assert abs(N + N.T).max() <= 1e-13
    assert abs(C + C.T).max() <= 1e-13
    v = np.random.default_rng(1).normal(size=sp_.velocity.n_dofs)
    assert abs(v @ (N @ v)) <= 1e-12 * (v @ v)


@pytest.mark.parametrize("choice", [TH, MINI])
def test_zero_coefficient_gives_zero_matrix(choice):
    sp_ = spaces_for(choice)
    zero = CoefficientField.zero(sp_.velocity)
    for M in (assemble_skew_convection(zero, sp_.velocity),
              assemble_skew_transport(zero, sp_.temperature),
              assemble_forchheimer(zero, sp_.velocity, 3.0)):
        assert M.nnz == 0 or abs(M).max() == 0


@pytest.mark.parametrize("choice", [TH, MINI])
def test_forchheimer_unit_field_is_mass(choice):
    V = spaces_for(choice).velocity
    w = CoefficientField(V, V.interpolate(lambda x, y: (np.ones_like(x), np.zeros_like(x))))
    for s in (3.0, 3.5, 4.0):
        F = assemble_forchheimer(w, V, s)
        assert abs(F - assemble_mass(V)).max() < 1e-14


@pytest.mark.parametrize("choice", [TH, MINI])
def test_forchheimer_psd(choice):
    V = spaces_for(choice, 3).velocity
    F = assemble_forchheimer(random_field(V, 4), V, 3.5).toarray()
    assert np.allclose(F, F.T, atol=1e-15)
    assert np.linalg.eigvalsh(F).min() > -1e-13


def test_forchheimer_weight_values():
    w = np.array([[3.0, 4.0], [0.0, 0.0], [1e-200, 0.0]])
    np.testing.assert_allclose(forchheimer_weight(w, 3.0), [5.0, 0.0, 1e-200])
    np.testing.assert_allclose(forchheimer_weight(w, 4.0)[:2], [25.0, 0.0])


@pytest.mark.parametrize("choice", [TH, MINI])
def test_divergence_examples(choice):
    sp_ = spaces_for(choice)
    V, Q = sp_.velocity, sp_.pressure
    B = assemble_divergence(V, Q)
    assert B.shape == (Q.n_dofs, V.n_dofs)
    m = assemble_pressure_mean(Q)
    assert m.sum() == pytest.approx(1.0, rel=1e-14)
    # div (x, 0) = 1, so B v = -int phi_q
    v = V.interpolate(lambda x, y: (x, np.zeros_like(x)))
    np.testing.assert_allclose(B @ v, -m, atol=1e-15)
    rot = V.interpolate(lambda x, y: (y, -x))
    assert np.max(np.abs(B @ rot)) < 1e-15


def test_viscous_mass_structure():
    sp_ = spaces_for(TH, 3)
    V = sp_.velocity
    T = smooth_field(sp_.temperature, 5)
    A = assemble_viscous_mass(T, V, LAWS)
    assert abs(A - A.T).max() < 1e-15
    zero = CoefficientField.zero(sp_.temperature)
    np.testing.assert_allclose(
        assemble_viscous_mass(zero, V, LAWS).toarray(),
        (assemble_stiffness(V) + assemble_mass(V)).toarray(), atol=1e-14)


def test_heat_diffusion_constant_kappa():
    sp_ = spaces_for(TH, 3)
    Y = sp_.temperature
    zero = CoefficientField.zero(Y)
    K = assemble_heat_diffusion(zero, Y, LAWS)  # kappa(0) = 2
    np.testing.assert_allclose(K.toarray(), 2 * assemble_stiffness(Y).toarray(), atol=1e-14)


@pytest.mark.parametrize("choice", [TH, MINI])
def test_heat_diffusion_coercivity_bound(choice):
    sp_ = spaces_for(choice, 3)
    Y = sp_.temperature
    K = assemble_heat_diffusion(random_field(Y, 6), Y, LAWS)
    L = assemble_stiffness(Y)
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.normal(size=Y.n_dofs)
        assert x @ (K @ x) >= LAWS.kappa_min * (x @ (L @ x)) - 1e-12


@pytest.mark.parametrize("choice", [TH, MINI])
def test_loads_examples(choice):
    sp_ = spaces_for(choice)
    V, Y = sp_.velocity, sp_.temperature
    f, g = assemble_loads(lambda x, y: (np.stack([np.ones_like(x), np.zeros_like(x)], -1), np.ones_like(x)), V, Y)
    assert f[:V.n_scalar].sum() == pytest.approx(1.0, rel=1e-13)
    assert np.all(f[V.n_scalar:] == 0)
    assert g.sum() == pytest.approx(1.0, rel=1e-13)


def test_loads_reject_non_finite():
    sp_ = spaces_for(TH, 2)
    with pytest.raises(FloatingPointError):
        assemble_loads(lambda x, y: (np.full(x.shape + (2,), np.nan), x), sp_.velocity, sp_.temperature)


@pytest.mark.parametrize("choice", [TH, MINI])
def test_assembly_bit_identical(choice):
    sp_ = spaces_for(choice)
    w = random_field(sp_.velocity, 8)
    for build in (lambda: assemble_forchheimer(w, sp_.velocity, 3.3),
                  lambda: assemble_skew_convection(w, sp_.velocity),
                  lambda: assemble_skew_transport(w, sp_.temperature)):
        a, b = build(), build()
        assert a.data.tobytes() == b.data.tobytes()
        assert a.indices.tobytes() == b.indices.tobytes()
        assert a.indptr.tobytes() == b.indptr.tobytes()


@pytest.mark.parametrize("choice", [TH, MINI])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_nonlinear_quadrature_sufficient(choice, seed):
    """Doubling the quadrature degree changes the Forchheimer matrix by < 1e-10 relative."""
    V = spaces_for(choice, 8).velocity
    w = smooth_field(V, seed)
    fine = collapsed_gauss_rule(2 * nonlinear_rule(V).exactness_degree)
    for s in (3.0, 3.5, 4.0):
        F = assemble_forchheimer(w, V, s)
        F_fine = assemble_forchheimer(w, V, s, rule=fine)
        assert abs(F - F_fine).max() <= 1e-10 * abs(F_fine).max()


def test_material_laws_validation():
    with pytest.raises(ValueError):
        MaterialLaws(nu=np.exp, dnu=np.exp, nu_min=1, nu_max=2, kappa=np.exp, dkappa=np.exp,
                     kappa_min=1, kappa_max=2, s=2.5)
    with pytest.raises(ValueError):
        MaterialLaws(nu=np.exp, dnu=np.exp, nu_min=0, nu_max=2, kappa=np.exp, dkappa=np.exp,
                     kappa_min=1, kappa_max=2, s=3)
    for tc in TEST_CASES.values():
        tc.laws.check_bounds()
    bad = MaterialLaws(nu=lambda t: 1 + t, dnu=np.ones_like, nu_min=0.5, nu_max=1.5,
                       kappa=lambda t: 2 + np.sin(t), dkappa=np.cos, kappa_min=1, kappa_max=3, s=3)
    with pytest.raises(ValueError):
        bad.check_bounds()
    assert math.isinf(bad.nu_lipschitz)
