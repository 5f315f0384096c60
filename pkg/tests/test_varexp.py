import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from pxlap.errors import (DegenerateInput, ExponentOutOfRange, MeshMismatch, NonFinite,
                          NonZeroTrace)
from pxlap.fem import FeFunction, interval_mesh, unit_square_mesh
from pxlap.varexp import (ExponentField, check_exponent_regularity, check_holder,
                          check_norm_modular, conjugate, estimate_embedding_constant,
                          function_space_suite, l1_norm, luxemburg_from_samples,
                          luxemburg_norm, modular,
                          random_exponent, random_function, regularity_under_refinement,
                          sobolev_norm)

M64 = interval_mesh(64)


def const(mesh, c):
    return FeFunction(np.full(mesh.num_vertices, float(c)), mesh)


def test_modular_examples():
    p2 = ExponentField.constant(M64, 2.0)
    assert modular(const(M64, 1.0), p2) == pytest.approx(1.0, abs=1e-14)
    x = FeFunction.interpolate(M64, lambda x: x)
    assert modular(x, p2) == pytest.approx(1 / 3, rel=1e-12)   # Gauss rule exact for x^2
    assert modular(FeFunction.zeros(M64), p2) == 0.0


def test_luxemburg_examples():
    p2 = ExponentField.constant(M64, 2.0)
    assert luxemburg_norm(const(M64, 2.0), p2) == pytest.approx(2.0, rel=1e-12)
    x = FeFunction.interpolate(M64, lambda x: x)
    assert luxemburg_norm(x, p2) == pytest.approx(1 / np.sqrt(3), rel=1e-12)
    assert luxemburg_norm(FeFunction.zeros(M64), p2) == 0.0


def test_luxemburg_variable_exponent_against_closed_form_root():
    # u = 1, p = 2 + x: ∫ λ^-(2+x) dx = (λ^-2 - λ^-3) / ln λ, which is 1 at λ = 1
    m = interval_mesh(256)
    p = ExponentField.from_expression(m, "2 + x")
    assert luxemburg_norm(const(m, 1.0), p) == pytest.approx(1.0, rel=1e-12)
    # u = x: root of ∫ (x/λ)^(2+x) dx = 1 by adaptive quadrature
    rho = lambda lam: quad(lambda x: (x / lam) ** (2 + x), 0, 1, epsabs=1e-14, epsrel=1e-14)[0] - 1
    ref = brentq(rho, 0.1, 1.0, xtol=1e-15)
    u = FeFunction.interpolate(m, lambda x: x)
    assert luxemburg_norm(u, p) == pytest.approx(ref, rel=1e-9)


def test_luxemburg_against_independent_quadrature_root():
    m = interval_mesh(128)
    p = ExponentField.from_expression(m, "1.5 + sin(3*x)^2")
    u = FeFunction.interpolate(m, lambda x: np.exp(x) * np.cos(2 * x))
    xq, wq = m.qpoints[..., 0].ravel(), m.qweights.ravel()
    uq = u.at_quadrature().ravel()
    rho = lambda lam: np.sum(wq * np.abs(uq / lam) ** p.values.ravel()) - 1.0
    assert luxemburg_norm(u, p) == pytest.approx(brentq(rho, 1e-3, 1e3, xtol=1e-15), rel=1e-11)


def test_luxemburg_overflow_is_reported():
    with pytest.raises(NonFinite):
        luxemburg_from_samples(np.array([1.0, np.inf]), np.array([0.5, 0.5]), 2.0)


def test_sobolev_norm():
    m = interval_mesh(512)
    p2 = ExponentField.constant(m, 2.0)
    u = FeFunction.interpolate(m, lambda x: x * (1 - x))
    assert sobolev_norm(u, p2) == pytest.approx(1 / np.sqrt(3), rel=1e-5)
    assert sobolev_norm(2.5 * u, p2) == pytest.approx(2.5 * sobolev_norm(u, p2), rel=1e-12)
    assert sobolev_norm(FeFunction.zeros(m), p2) == 0.0
    with pytest.raises(NonZeroTrace):
        sobolev_norm(const(m, 1.0), p2)


def test_conjugate():
    assert np.all(conjugate(ExponentField.constant(M64, 2.0)).values == 2.0)
    assert np.allclose(conjugate(ExponentField.constant(M64, 3.0)).values, 1.5)
    p = ExponentField.from_callable(M64, lambda x: 2 + x)
    pc = conjugate(p)
    assert np.allclose(1 / p.values + 1 / pc.values, 1.0)
    with pytest.raises(ExponentOutOfRange):
        conjugate(ExponentField.constant(M64, 1.0))


def test_exponent_validation():
    with pytest.raises(ExponentOutOfRange):
        ExponentField.constant(M64, 0.5)
    with pytest.raises(ExponentOutOfRange):
        ExponentField.constant(M64, np.inf)
    with pytest.raises(MeshMismatch):
        modular(FeFunction.zeros(interval_mesh(8)), ExponentField.constant(M64, 2.0))


@pytest.mark.parametrize("c, nrm, rho", [(0.5, 0.5, 0.25), (3.0, 3.0, 9.0), (1.0, 1.0, 1.0)])
def test_norm_modular_examples(c, nrm, rho):
    rep = check_norm_modular(const(M64, c), ExponentField.constant(M64, 2.0))
    assert rep.passed
    assert rep.norm == pytest.approx(nrm, rel=1e-12) and rep.modular == pytest.approx(rho, rel=1e-12)


def test_norm_modular_unit_function_any_exponent():
    rep = check_norm_modular(const(M64, 1.0), ExponentField.from_expression(M64, "2 + 3*x"))
    assert rep.passed and rep.norm == pytest.approx(1.0, rel=1e-12)


def test_holder_examples():
    p2 = ExponentField.constant(M64, 2.0)
    assert check_holder(const(M64, 1.0), const(M64, 1.0), p2).passed
    f = FeFunction.interpolate(M64, lambda x: x)
    g = FeFunction.interpolate(M64, lambda x: 1 - x)
    rep = check_holder(f, g, p2)
    assert rep.l1_product == pytest.approx(1 / 6, rel=1e-12)
    assert rep.bound == pytest.approx(2 / 3, rel=1e-12)


def test_holder_random_pairs_with_sine_exponent():
    p = ExponentField.from_expression(M64, "2 + sin(3*x)^2")
    rng = np.random.default_rng(3)
    for _ in range(200):
        assert check_holder(random_function(M64, rng), random_function(M64, rng), p).passed


def test_regularity_examples():
    p2 = ExponentField.constant(M64, 2.0)
    assert check_exponent_regularity(p2, "log_holder").constant == 0.0
    assert check_exponent_regularity(p2, "holder").constant == 0.0
    rep = check_exponent_regularity(ExponentField.from_expression(M64, "2 + x"), "holder", 1.0)
    assert rep.constant == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ValueError):
        check_exponent_regularity(p2, "holder", gamma=1.5)


def test_step_exponent_flagged_under_refinement():
    step = lambda m: ExponentField.from_callable(m, lambda x: 2.0 + (x > 0.5))
    smooth = lambda m: ExponentField.from_callable(m, lambda x: 2.0 + x)
    meshes = [interval_mesh(n) for n in (16, 32, 64)]
    assert regularity_under_refinement(step, meshes, "holder").growing
    assert not regularity_under_refinement(smooth, meshes, "holder").growing


def test_embedding_constant_poincare():
    m = interval_mesh(256)
    p2 = ExponentField.constant(m, 2.0)
    sine = FeFunction.interpolate(m, lambda x: np.sin(np.pi * x))
    sine.nodal[m.boundary_nodes] = 0.0
    K = estimate_embedding_constant(p2, p2, functions=[sine])
    assert K == pytest.approx(1 / np.pi, rel=1e-4)
    assert estimate_embedding_constant(p2, p2, functions=[2 * sine]) == pytest.approx(K, rel=1e-12)
    rand = estimate_embedding_constant(p2, p2, trials=50, rng=4)
    assert rand <= 1 / np.pi + 1e-6
    with pytest.raises(DegenerateInput):
        estimate_embedding_constant(p2, p2, functions=[FeFunction.zeros(m)])
    with pytest.raises(ExponentOutOfRange):
        estimate_embedding_constant(ExponentField.constant(m, 3.0), p2, trials=1)


def test_l1_norm():
    assert l1_norm(FeFunction.interpolate(M64, lambda x: x - 0.5)) == pytest.approx(0.25, rel=1e-3)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.booleans())
def test_unit_sphere_and_homogeneity(seed, square):
    mesh = unit_square_mesh(6) if square else interval_mesh(16)
    rng = np.random.default_rng(seed)
    p, u = random_exponent(mesh, rng), random_function(mesh, rng)
    n = luxemburg_norm(u, p)
    assert abs(modular(u / n, p) - 1.0) <= 1e-10
    alpha = rng.uniform(-5, 5)
    assert luxemburg_norm(alpha * u, p) == pytest.approx(abs(alpha) * n, rel=1e-10)


def test_suite_reports_every_property():
    names = [r.name for r in function_space_suite([interval_mesh(8)], draws=5, seed=1)]
    assert names == ["norm_axioms", "unit_sphere", "norm_modular", "holder"]
