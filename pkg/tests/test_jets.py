"""Jet calculus: semi-derivatives, families, residuals, stochastic terms."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from cfslab import jets as jt
from cfslab import measures as ms
from cfslab.errors import NonConvergent, ValidationError


def unit(v):
    return np.asarray(v, dtype=float) / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# semi-derivatives


def test_polynomial_derivative_on_line():
    space = ms.line_space()

    def f(z):
        return 3.0 * float(z[0]) ** 2 + 2.0 * float(z[0])

    d = jt.semi_derivative(space, f, np.array([1.0]), 1.0)
    assert abs(d - 8.0) < 1e-9


def test_richardson_matches_analytic_gradient_on_sphere():
    space = ms.sphere_space(math.sqrt(2.0))
    p = np.array([0.3, -1.2, 0.8])
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = unit(rng.standard_normal(3))
        v = rng.standard_normal(3)
        v = unit(v - np.dot(v, x) * x)

        def f(z):
            return float(np.dot(p, z)) ** 2

        analytic = 2.0 * np.dot(p, x) * np.dot(p, v)
        d = jt.semi_derivative(space, f, x, v)
        assert abs(d - analytic) < 1e-7 * max(1.0, abs(analytic))


def test_minus_side_through_reversed_direction():
    space = ms.line_space()

    def f(z):
        return math.sin(float(z[0]))

    x = np.array([0.4])
    minus = jt.semi_derivative(space, f, x, 1.0, side=-1)
    mirrored = -jt.semi_derivative(space, f, x, -1.0, side=+1)
    assert minus == mirrored


def test_kink_report():
    space = ms.line_space()
    rep = jt.semi_derivative_report(space, lambda z: abs(float(z[0])),
                                    np.array([0.0]), 1.0)
    assert abs(rep.plus - 1.0) < 1e-9
    assert abs(rep.minus + 1.0) < 1e-9
    assert not rep.differentiable
    assert abs(rep.symmetric) < 1e-9


def test_jump_reported_as_infinity():
    space = ms.line_space()

    def f(z):
        return 3.0 if float(z[0]) >= 0.5 else 0.0

    rep = jt.semi_derivative_report(space, f, np.array([0.5]), 1.0)
    assert rep.plus == 0.0
    assert rep.minus == math.inf
    assert not rep.differentiable
    assert math.isnan(rep.symmetric)


def test_unbounded_slope_raises():
    space = ms.line_space()
    with pytest.raises(NonConvergent):
        jt.semi_derivative(space, lambda z: math.sqrt(abs(float(z[0]))),
                           np.array([0.0]), 1.0)


def test_scalar_derivatives():
    assert abs(jt.scalar_semi_derivative(lambda t: math.exp(2 * t)) - 2.0) \
        < 1e-9
    assert abs(jt.scalar_semi_derivative(lambda t: math.exp(2 * t), side=-1)
               - 2.0) < 1e-9
    assert abs(jt.scalar_second_semi_derivative(lambda t: math.exp(2 * t))
               - 4.0) < 1e-6
    assert abs(jt.quotient_limit(lambda h: math.sin(3 * h)) - 3.0) < 1e-9


# ---------------------------------------------------------------------------
# jets and commutators


def test_nabla_jet_on_line():
    space = ms.line_space()
    jet = jt.Jet(scalar=lambda z: 2.0, vector=lambda z: 1.0)

    def f(z):
        return float(z[0]) ** 2

    val = jt.nabla_jet(space, f, np.array([1.5]), jet)
    assert abs(val - (2.0 * 2.25 + 3.0)) < 1e-8
    sym = jt.nabla_jet(space, f, np.array([1.5]), jet, side=0)
    assert abs(sym - val) < 1e-8


def test_rotation_field_commutator_closed_form():
    space = ms.sphere_space(math.sqrt(2.0))
    ja = jt.rotation_jet([1.0, 0.0, 0.0])
    jb = jt.rotation_jet([0.0, 1.0, 0.0])
    comm = jt.jet_commutator(space, ja, jb)
    rng = np.random.default_rng(5)
    for _ in range(5):
        z = unit(rng.standard_normal(3))
        # bracket of two axial fields is the axial field of the reversed
        # cross product of the axes
        expected = np.cross(-np.cross([1.0, 0, 0], [0, 1.0, 0]), z)
        got = np.asarray(comm.vector(z))
        assert np.max(np.abs(got - expected)) < 1e-5
        assert abs(comm.scalar(z)) < 1e-8


def test_commutator_law_on_smooth_function():
    space = ms.sphere_space(math.sqrt(2.0))
    ja = jt.rotation_jet([0.2, 0.0, 1.0])
    jb = jt.rotation_jet([0.0, 1.0, 0.3])
    comm = jt.jet_commutator(space, ja, jb)
    p = np.array([0.7, 0.4, -1.1])

    def f(z):
        return float(np.dot(p, z)) ** 2 + float(z[2])

    def d_along(field, g, z):
        return jt.semi_derivative_report(space, g, z, field(z),
                                         base_h=1e-2, tol_abs=1e-5).symmetric

    x = unit([0.3, -0.5, 0.9])
    lhs = d_along(comm.vector, f, x)
    rhs = d_along(ja.vector, lambda z: d_along(jb.vector, f, z), x) \
        - d_along(jb.vector, lambda z: d_along(ja.vector, f, z), x)
    assert abs(lhs - rhs) < 1e-5 * max(1.0, abs(lhs))


def test_jet_json_round_trip():
    jet = jt.rotation_jet([0.0, 0.0, 1.0], weight_rate=lambda z: float(z[0]))
    pts = ms.octahedron_points()
    data = jt.jet_to_json(jet, pts)
    back = jt.jet_from_json(data)
    for p in pts:
        assert abs(back.scalar(p) - jet.scalar(p)) < 1e-12
        assert_allclose(back.vector(p), jet.vector(p), atol=1e-12)
    with pytest.raises(ValidationError):
        back.scalar(np.array([0.5, 0.5, 0.5]))
    with pytest.raises(ValidationError):
        jt.jet_from_json({"points": [[0.0]], "scalar": [1.0]})


# ---------------------------------------------------------------------------
# variation families


def test_flow_family_approximates_exact_rotation():
    # the iterated retraction is first order per step, so the global
    # error scales with tau squared over the step count
    space = ms.sphere_space(math.sqrt(2.0))
    axis = unit([0.3, 1.0, -0.2])
    family = jt.family_from_jet(space, jt.rotation_jet(axis))
    exact = jt.rotation_family(axis)
    z = unit([1.0, 0.2, 0.1])
    for tau in (0.05, 0.1, -0.1):
        a = np.asarray(family.transport(tau, z))
        b = np.asarray(exact.transport(tau, z))
        assert np.max(np.abs(a - b)) < 0.2 * tau * tau

    def first_order(tau):
        return np.asarray(family.transport(tau, z))[1]

    # the parameter derivative at zero is exact for the composed flow
    d = jt.scalar_semi_derivative(first_order)
    assert abs(d - np.cross(axis, z)[1]) < 1e-7


def test_family_reversal():
    axis = [0.0, 0.0, 1.0]
    fam = jt.rotation_family(axis, weight_rate=lambda z: 0.5)
    rev = fam.reversed()
    z = unit([1.0, 1.0, 0.3])
    assert_allclose(np.asarray(rev.transport(0.2, z)),
                    np.asarray(fam.transport(-0.2, z)), atol=1e-15)
    assert abs(rev.weight(0.2, z) - math.exp(-0.1)) < 1e-12


def test_family_weight_rate():
    fam = jt.rotation_family([1.0, 0, 0], weight_rate=lambda z: float(z[1]))
    z = unit([0.2, 0.9, 0.1])
    assert abs(jt.family_weight_rate(fam, z) - z[1]) < 1e-8
    assert abs(fam.f_ddot0(z) - z[1] ** 2) < 1e-12


def test_second_weight_derivative_fallback():
    fam = jt.VariationFamily(weight=lambda t, z: math.exp(0.7 * t),
                             transport=lambda t, z: z)
    assert fam.f_ddot0 is None
    val = jt.scalar_second_semi_derivative(lambda t: fam.weight(t, None))
    assert abs(val - 0.49) < 1e-6


# ---------------------------------------------------------------------------
# linearized residual on the circle fixture


def circle_setup():
    space = ms.circle_space(offset=1.5)
    mu = ms.circle_measure(8)
    nu = 2.0 * 1.5
    return space, mu, nu


def harmonic_jet(k):
    return jt.Jet(scalar=lambda z: 0.0,
                  vector=lambda z: math.cos(k * float(z[0])),
                  name=f"harmonic({k})")


def test_harmonic_jet_solves_linearized_equations():
    # mode numbers whose shifts stay off the point count solve the
    # linearized equations exactly on the uniform measure
    space, mu, nu = circle_setup()
    jet = harmonic_jet(2)
    family = jt.family_from_jet(space, jet)
    for x in (mu.points[0], mu.points[3]):
        res = jt.linearized_residual(space, mu, family, jet, x, nu)
        assert abs(res) < 1e-5


def test_aligned_mode_breaks_linearized_equations():
    # mode 1 aliases against the uniform sum and leaves a residual of
    # one half at the first support point
    space, mu, nu = circle_setup()
    jet = harmonic_jet(1)
    family = jt.family_from_jet(space, jet)
    res = jt.linearized_residual(space, mu, family, jet, mu.points[0], nu)
    assert abs(res - 0.5) < 1e-4


# ---------------------------------------------------------------------------
# stochastic term


def test_chi_vanishes_for_isometry_families():
    space, mu = ms.fixture_measure("octahedron")
    nu = 16.0 / 3.0
    for axis in ([0.0, 0.0, 1.0], [0.3, 1.0, -0.5]):
        fam = jt.rotation_family(axis)
        x = mu.points[0]
        w = np.array([0.0, 1.0, 0.7])
        w = unit(w - np.dot(w, x) * np.asarray(x))
        chi = jt.stochastic_chi(space, mu, fam, w, x, nu)
        assert abs(chi) < 1e-6


def test_chi_expansion_for_weighted_family():
    # independent oracle: chi = c(x) * sym-derivative of ell plus the
    # sym-derivative of the rate-weighted interaction
    space, mu = ms.fixture_measure("octahedron")
    nu = 16.0 / 3.0
    p = np.array([0.3, 1.1, -0.7])

    def rate(z):
        return float(np.dot(p, np.asarray(z)))

    axis = [0.0, 0.0, 1.0]
    fam = jt.rotation_family(axis, weight_rate=rate)
    x = np.array([1.0, 0.0, 0.0])
    w = unit([0.0, 1.0, 0.5])

    chi = jt.stochastic_chi(space, mu, fam, w, x, nu)

    def psi(z):
        return sum(wj * rate(xj) * space.lagrangian_fn(z, xj)
                   for xj, wj in zip(mu.points, mu.weights))

    ell_rep = jt.semi_derivative_report(
        space, lambda z: ms.ell(space, mu, z, nu), x, w)
    psi_rep = jt.semi_derivative_report(space, psi, x, w)
    oracle = rate(x) * ell_rep.symmetric + psi_rep.symmetric

    assert abs(chi) > 1e-3
    assert abs(chi - oracle) < 1e-3 * max(1.0, abs(oracle))


# ---------------------------------------------------------------------------
# region sums


def test_symmetric_cusps_cancel_at_octahedron():
    space, mu = ms.fixture_measure("octahedron")
    nu = 16.0 / 3.0
    rng = np.random.default_rng(9)

    def w_field(x):
        v = rng.standard_normal(3)
        return unit(v - np.dot(v, x) * np.asarray(x))

    total = jt.symmetric_derivative_region(space, mu, range(6), w_field, nu)
    assert abs(total) < 1e-8


def test_region_sum_hand_value_on_line():
    space = ms.line_space()
    mu = ms.make_measure([np.array([-1.0]), np.array([1.0])], [1.0, 1.0],
                         space=space)
    # interaction is 2 z^2 + 2, so nu = 4 and ell(z) = 2 z^2
    total = jt.symmetric_derivative_region(
        space, mu, [0, 1], lambda x: float(x[0]), nu=4.0)
    assert abs(total - 8.0) < 1e-7


# ---------------------------------------------------------------------------
# second order


def test_second_order_closed_form_on_line():
    space = ms.line_space()
    mu = ms.make_measure([np.array([0.0])], [2.0], space=space)
    nu = 0.0
    # analytic dilation family fixes the origin and scales exponentially
    fam = jt.VariationFamily(
        weight=lambda t, z: 1.0,
        transport=lambda t, z: np.array([math.exp(t) * float(z[0])]),
        f_ddot0=lambda z: 0.0, name="dilation")
    x = np.array([0.7])
    test_jet = jt.Jet(scalar=lambda z: 0.5, vector=lambda z: 1.0)
    rep = jt.second_order_residual(space, mu, fam, test_jet, x, nu)
    w0 = 2.0
    lhs_exact = 0.5 * 4.0 * w0 * 0.7 ** 2 + 8.0 * w0 * 0.7
    assert abs(rep.lhs - lhs_exact) < 1e-3 * lhs_exact
    assert abs(rep.chi1 - 4.0 * w0 * 0.7) < 1e-3 * (4.0 * w0 * 0.7)
    assert abs(rep.chi2 - 8.0 * w0 * 0.7) < 1e-3 * (8.0 * w0 * 0.7)


def test_second_order_translation_family_is_silent():
    # translations leave every pair separation fixed, so all three
    # numbers vanish
    space = ms.line_space()
    mu = ms.make_measure([np.array([0.0])], [2.0], space=space)
    fam = jt.VariationFamily(
        weight=lambda t, z: 1.0,
        transport=lambda t, z: np.array([float(z[0]) + t]),
        f_ddot0=lambda z: 0.0, name="translation")
    test_jet = jt.Jet(scalar=lambda z: 1.0, vector=lambda z: 1.0)
    rep = jt.second_order_residual(space, mu, fam, test_jet,
                                   np.array([0.4]), nu=0.0)
    assert abs(rep.lhs) < 1e-6
    assert abs(rep.chi1) < 1e-6
    assert abs(rep.chi2) < 1e-6


# ---------------------------------------------------------------------------
# properties


@seed(3)
@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=-2.0, max_value=2.0),
       st.floats(min_value=-2.0, max_value=2.0),
       st.floats(min_value=-1.5, max_value=1.5))
def test_smooth_functions_report_differentiable(a_coef, b_coef, x0):
    space = ms.line_space()

    def f(z):
        t = float(z[0])
        return a_coef * t * t + b_coef * t

    rep = jt.semi_derivative_report(space, f, np.array([x0]), 1.0)
    analytic = 2.0 * a_coef * x0 + b_coef
    assert rep.differentiable
    assert abs(rep.plus - analytic) < 1e-6 * (1.0 + abs(analytic))
    assert abs(rep.symmetric - analytic) < 1e-6 * (1.0 + abs(analytic))


@seed(3)
@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_weak_minimality_at_octahedron(entropy):
    # at the minimizer every one-sided jet derivative of ell is
    # nonnegative on the support
    rng = np.random.default_rng(entropy)
    space, mu = ms.fixture_measure("octahedron")
    nu = 16.0 / 3.0
    i = int(rng.integers(6))
    x = mu.points[i]
    v = rng.standard_normal(3)
    v = v - np.dot(v, x) * np.asarray(x)
    norm = np.linalg.norm(v)
    if norm < 1e-9:
        return
    jet = jt.Jet(scalar=lambda z: float(rng.standard_normal()),
                 vector=lambda z, vv=v / norm: vv)
    val = jt.nabla_jet(space, lambda z: ms.ell(space, mu, z, nu), x, jet)
    assert val >= -1e-6
