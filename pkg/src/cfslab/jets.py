"""One-sided derivative calculus for jets along weighted measures.

Everything here works with semi-derivatives: the Lagrangians are only
locally semi-convex, so left and right derivatives exist but need not
agree.  Directional quotients are extrapolated with a Richardson table,
with an explicit escape hatch for jump discontinuities, where the
one-sided derivative is reported as infinite instead of failing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import NonConvergent, ValidationError
from .measures import ConfigurationSpace, DiscreteMeasure, ell


# ---------------------------------------------------------------------------
# Richardson extrapolation with jump detection


def _extrapolate(quotients: Sequence[float]) -> tuple[float, float]:
    """Triangular table for step-halved first-order quotients.

    Returns the best entry and the gap to the previous diagonal entry,
    which serves as the convergence estimate.
    """
    rows = [list(quotients)]
    while len(rows[-1]) > 1:
        m = len(rows)
        fac = 2.0 ** m
        prev = rows[-1]
        rows.append([(fac * prev[k + 1] - prev[k]) / (fac - 1.0)
                     for k in range(len(prev) - 1)])
    best = rows[-1][0]
    prev_best = rows[-2][-1] if len(rows) > 1 else best
    return best, abs(best - prev_best)


def _neg(tangent: Any) -> Any:
    return -tangent


def semi_derivative(space: ConfigurationSpace, fn: Callable[[Any], float],
                    x: Any, direction: Any, side: int = +1,
                    base_h: float = 1e-3, levels: int = 7,
                    tol_rel: float = 1e-3, tol_abs: float = 1e-8) -> float:
    """One-sided directional derivative of ``fn`` at ``x``.

    The minus side is defined through the plus side of the reversed
    direction, so the identity between them holds exactly.  A jump in
    ``fn`` along the ray is detected from non-contracting increments and
    reported as a signed infinity.
    """
    if side not in (+1, -1):
        raise ValidationError("side must be +1 or -1")
    if side == -1:
        return -semi_derivative(space, fn, x, _neg(direction), +1,
                                base_h=base_h, levels=levels,
                                tol_rel=tol_rel, tol_abs=tol_abs)
    f0 = fn(x)
    hs = [base_h * 0.5 ** k for k in range(levels)]
    deltas = [fn(space.move(x, direction, h)) - f0 for h in hs]

    scale = 1.0 + abs(f0)
    if abs(deltas[-1]) > 1e-9 * scale and \
            abs(deltas[-1]) > 0.9 * abs(deltas[-2]):
        # increments stopped contracting: fn jumps along this ray
        return math.copysign(math.inf, deltas[-1])

    quotients = [d / h for d, h in zip(deltas, hs)]
    best, gap = _extrapolate(quotients)
    if gap > tol_rel * abs(best) + tol_abs:
        raise NonConvergent(
            f"directional quotient did not settle (gap {gap:.3e})")
    return best


@dataclass(frozen=True)
class SemiDerivReport:
    """Both one-sided derivatives at a point, with a verdict."""

    plus: float
    minus: float
    symmetric: float
    differentiable: bool
    h_used: float


def semi_derivative_report(space: ConfigurationSpace,
                           fn: Callable[[Any], float], x: Any, direction: Any,
                           base_h: float = 1e-3, levels: int = 7,
                           tol_rel: float = 1e-3, tol_abs: float = 1e-8,
                           tol_match: float = 1e-6) -> SemiDerivReport:
    plus = semi_derivative(space, fn, x, direction, +1, base_h, levels,
                           tol_rel, tol_abs)
    minus = semi_derivative(space, fn, x, direction, -1, base_h, levels,
                            tol_rel, tol_abs)
    finite = math.isfinite(plus) and math.isfinite(minus)
    if finite:
        symmetric = 0.5 * (plus + minus)
        differentiable = abs(plus - minus) <= \
            tol_match * (abs(plus) + abs(minus)) + 1e-8
    else:
        symmetric = math.nan
        differentiable = False
    return SemiDerivReport(plus=plus, minus=minus, symmetric=symmetric,
                           differentiable=differentiable,
                           h_used=base_h * 0.5 ** (levels - 1))


def scalar_semi_derivative(g: Callable[[float], float], side: int = +1,
                           base_h: float = 1e-3, levels: int = 7,
                           tol_rel: float = 1e-3,
                           tol_abs: float = 1e-8) -> float:
    """One-sided derivative at zero of a scalar function of one variable."""
    if side == -1:
        return -scalar_semi_derivative(lambda t: g(-t), +1, base_h, levels,
                                       tol_rel, tol_abs)
    g0 = g(0.0)
    hs = [base_h * 0.5 ** k for k in range(levels)]
    quotients = [(g(h) - g0) / h for h in hs]
    best, gap = _extrapolate(quotients)
    if gap > tol_rel * abs(best) + tol_abs:
        raise NonConvergent(
            f"parameter quotient did not settle (gap {gap:.3e})")
    return best


def scalar_second_semi_derivative(g: Callable[[float], float],
                                  base_h: float = 0.05, levels: int = 7,
                                  tol_rel: float = 1e-3,
                                  tol_abs: float = 1e-6) -> float:
    """One-sided second derivative at zero from forward second differences."""
    g0 = g(0.0)
    hs = [base_h * 0.5 ** k for k in range(levels)]
    # forward second difference has an error series in plain powers of h,
    # so the same halving table applies
    quotients = [(g(2.0 * h) - 2.0 * g(h) + g0) / (h * h) for h in hs]
    best, gap = _extrapolate(quotients)
    if gap > tol_rel * abs(best) + tol_abs:
        raise NonConvergent(
            f"second-order quotient did not settle (gap {gap:.3e})")
    return best


def quotient_limit(g: Callable[[float], float], base_h: float = 1e-2,
                   levels: int = 7, tol_rel: float = 1e-3,
                   tol_abs: float = 1e-6) -> float:
    """Limit of g(h)/h for a function with g(0) = 0 known exactly."""
    hs = [base_h * 0.5 ** k for k in range(levels)]
    quotients = [g(h) / h for h in hs]
    best, gap = _extrapolate(quotients)
    if gap > tol_rel * abs(best) + tol_abs:
        raise NonConvergent(f"quotient limit did not settle (gap {gap:.3e})")
    return best


# ---------------------------------------------------------------------------
# jets


@dataclass(frozen=True)
class Jet:
    """Scalar field paired with a tangent field."""

    scalar: Callable[[Any], float]
    vector: Callable[[Any], Any]
    name: str = ""


def nabla_jet(space: ConfigurationSpace, fn: Callable[[Any], float], x: Any,
              jet: Jet, side: int = +1, **kw) -> float:
    """Jet derivative a(x) fn(x) + D fn along the jet's tangent.

    ``side`` selects the plus or minus semi-derivative; zero requests the
    symmetric combination.
    """
    value = jet.scalar(x) * fn(x)
    if side == 0:
        rep = semi_derivative_report(space, fn, x, jet.vector(x), **kw)
        return value + rep.symmetric
    return value + semi_derivative(space, fn, x, jet.vector(x), side, **kw)


def jet_commutator(space: ConfigurationSpace, jet_a: Jet, jet_b: Jet,
                   h: float = 1e-4) -> Jet:
    """Commutator jet: crossed scalar derivatives and the field bracket.

    Both parts use central differences; the scalar and vector fields of
    the inputs are assumed smooth along each other's directions.
    """

    def central_scalar(f: Callable[[Any], float], z: Any, d: Any) -> float:
        return (f(space.move(z, d, h)) - f(space.move(z, d, -h))) / (2.0 * h)

    def central_vector(f: Callable[[Any], Any], z: Any, d: Any) -> Any:
        return (np.asarray(f(space.move(z, d, h)), dtype=float)
                - np.asarray(f(space.move(z, d, -h)), dtype=float)) / (2.0 * h)

    def scalar(z: Any) -> float:
        return central_scalar(jet_b.scalar, z, jet_a.vector(z)) \
            - central_scalar(jet_a.scalar, z, jet_b.vector(z))

    def vector(z: Any) -> Any:
        return central_vector(jet_b.vector, z, jet_a.vector(z)) \
            - central_vector(jet_a.vector, z, jet_b.vector(z))

    return Jet(scalar=scalar, vector=vector,
               name=f"[{jet_a.name},{jet_b.name}]")


def jet_to_json(jet: Jet, points: Sequence[Any]) -> dict:
    pts, scal, vecs = [], [], []
    for p in points:
        arr = np.asarray(getattr(p, "as_array", lambda: p)(), dtype=float)
        pts.append([float(v) for v in arr])
        scal.append(float(jet.scalar(p)))
        v = np.atleast_1d(np.asarray(jet.vector(p), dtype=float))
        vecs.append([float(c) for c in v])
    return {"points": pts, "scalar": scal, "vectors": vecs}


def jet_from_json(data: dict, tol: float = 1e-8) -> Jet:
    try:
        pts = [np.asarray(p, dtype=float) for p in data["points"]]
        scal = [float(v) for v in data["scalar"]]
        vecs = [np.asarray(v, dtype=float) for v in data["vectors"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed jet record: {exc}") from exc
    if not len(pts) == len(scal) == len(vecs):
        raise ValidationError("jet record fields disagree in length")

    def find(z: Any) -> int:
        arr = np.asarray(getattr(z, "as_array", lambda: z)(), dtype=float)
        for i, p in enumerate(pts):
            if p.shape == arr.shape and np.max(np.abs(p - arr)) <= tol:
                return i
        raise ValidationError("jet sampled only on its stored points")

    return Jet(scalar=lambda z: scal[find(z)],
               vector=lambda z: vecs[find(z)], name="sampled")


# ---------------------------------------------------------------------------
# variation families


@dataclass(frozen=True)
class VariationFamily:
    """Weight and transport pair, trivial at parameter zero.

    ``weight(tau, z)`` multiplies the measure density, ``transport(tau, z)``
    moves points; both reduce to the identity at tau = 0.  ``f_ddot0``
    optionally supplies the second parameter derivative of the weight,
    needed by second-order residuals.
    """

    weight: Callable[[float, Any], float]
    transport: Callable[[float, Any], Any]
    f_ddot0: Optional[Callable[[Any], float]] = None
    name: str = ""

    def reversed(self) -> "VariationFamily":
        w, t = self.weight, self.transport
        return VariationFamily(
            weight=lambda tau, z: w(-tau, z),
            transport=lambda tau, z: t(-tau, z),
            f_ddot0=self.f_ddot0,
            name=f"reversed({self.name})")


def family_from_jet(space: ConfigurationSpace, jet: Jet,
                    flow_steps: int = 8) -> VariationFamily:
    """Exponentiate a jet: exponential weight and an iterated retraction flow."""

    def transport(tau: float, z: Any) -> Any:
        cur = z
        for _ in range(flow_steps):
            cur = space.move(cur, jet.vector(cur), tau / flow_steps)
        return cur

    return VariationFamily(
        weight=lambda tau, z: math.exp(tau * jet.scalar(z)),
        transport=transport,
        f_ddot0=lambda z: jet.scalar(z) ** 2,
        name=f"flow({jet.name})")


def family_weight_rate(family: VariationFamily, z: Any) -> float:
    """First parameter derivative of the family weight at zero."""
    gp = scalar_semi_derivative(lambda t: family.weight(t, z), +1)
    gm = scalar_semi_derivative(lambda t: family.weight(t, z), -1)
    return 0.5 * (gp + gm)


def rotation_family(axis: Sequence[float],
                    weight_rate: Optional[Callable[[Any], float]] = None
                    ) -> VariationFamily:
    """Exact rotations of the two-sphere about ``axis``.

    With no weight rate this is an isometry family; a rate function turns
    it into a weighted family with exponential density factor.
    """
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)

    def transport(tau: float, z: Any) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        c, s = math.cos(tau), math.sin(tau)
        return c * z + s * np.cross(a, z) + (1.0 - c) * np.dot(a, z) * a

    if weight_rate is None:
        return VariationFamily(weight=lambda tau, z: 1.0,
                               transport=transport,
                               f_ddot0=lambda z: 0.0,
                               name="rotation")
    return VariationFamily(
        weight=lambda tau, z: math.exp(tau * weight_rate(z)),
        transport=transport,
        f_ddot0=lambda z: weight_rate(z) ** 2,
        name="weighted-rotation")


def rotation_jet(axis: Sequence[float],
                 weight_rate: Optional[Callable[[Any], float]] = None) -> Jet:
    """Generator of ``rotation_family``: the axial vector field."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    scalar = (lambda z: 0.0) if weight_rate is None else weight_rate
    return Jet(scalar=scalar, vector=lambda z: np.cross(a, np.asarray(z)),
               name="rotation")


# ---------------------------------------------------------------------------
# first-order residuals


def _pair_skip(space: ConfigurationSpace, z: Any, y: Any) -> bool:
    return space.pair_negligible is not None and space.pair_negligible(z, y)


def inner_linearized_value(space: ConfigurationSpace,
                           measure: DiscreteMeasure,
                           family: VariationFamily, z: Any, nu: float,
                           kappa: float = 0.0) -> float:
    """Parameter derivative of the varied interaction at a fixed point.

    Both arguments of each pair Lagrangian are transported and both weight
    factors vary; the multiplier term is weighted by the family's own
    scalar rate.  Sides are combined symmetrically, which matters exactly
    when the transported pair crosses a kink.
    """
    total = 0.0
    for xj, wj in zip(measure.points, measure.weights):
        if _pair_skip(space, z, xj):
            continue

        def h(t: float) -> float:
            return family.weight(t, z) * family.weight(t, xj) * \
                space.lagrangian_kappa(family.transport(t, z),
                                       family.transport(t, xj), kappa)

        dp = scalar_semi_derivative(h, +1)
        dm = scalar_semi_derivative(h, -1)
        total += wj * 0.5 * (dp + dm)
    return total - family_weight_rate(family, z) * 0.5 * nu


def linearized_residual(space: ConfigurationSpace, measure: DiscreteMeasure,
                        family: VariationFamily, test_jet: Jet, x: Any,
                        nu: float, kappa: float = 0.0,
                        base_h: float = 1e-2) -> float:
    """Residual of the linearized field equations, paired with a test jet.

    The outer derivative consumes extrapolated inner values, so its step
    and absolute floor are wider than for a plain directional quotient.
    """

    def inner(z: Any) -> float:
        return inner_linearized_value(space, measure, family, z, nu, kappa)

    rep = semi_derivative_report(space, inner, x, test_jet.vector(x),
                                 base_h=base_h, tol_abs=1e-6)
    return test_jet.scalar(x) * inner(x) + rep.symmetric


# ---------------------------------------------------------------------------
# stochastic term


def _varied_ell(space: ConfigurationSpace, measure: DiscreteMeasure,
                family: VariationFamily, t: float, z: Any, nu: float,
                kappa: float) -> float:
    """ell of the family-deformed measure, with the multiplier held fixed."""
    total = 0.0
    for xj, wj in zip(measure.points, measure.weights):
        if _pair_skip(space, z, xj):
            continue
        total += wj * family.weight(t, xj) * \
            space.lagrangian_kappa(z, family.transport(t, xj), kappa)
    return total - 0.5 * nu


def stochastic_chi(space: ConfigurationSpace, measure: DiscreteMeasure,
                   family: VariationFamily, w_direction: Any, x: Any,
                   nu: float, kappa: float = 0.0, s_base: float = 1e-2,
                   tau_base: float = 1e-2) -> float:
    """Mixed one-sided derivative detecting non-smooth first-order noise.

    The spatial difference sits outermost: the parameter derivative of the
    antisymmetrized, transported ell is divided by the displacement and
    extrapolated to zero.  The value vanishes identically for isometry
    families and picks up kink contributions otherwise.
    """

    def big_g(s: float) -> float:
        zp = space.move(x, w_direction, s)
        zm = space.move(x, w_direction, -s)

        def g(t: float) -> float:
            return family.weight(t, x) * (
                _varied_ell(space, measure, family, t,
                            family.transport(t, zp), nu, kappa)
                - _varied_ell(space, measure, family, t,
                              family.transport(t, zm), nu, kappa))

        return scalar_semi_derivative(g, +1, base_h=tau_base)

    return 0.5 * quotient_limit(big_g, base_h=s_base)


def symmetric_derivative_region(space: ConfigurationSpace,
                                measure: DiscreteMeasure,
                                region: Sequence[int],
                                w_field: Callable[[Any], Any], nu: float,
                                kappa: float = 0.0,
                                base_h: float = 1e-3) -> float:
    """Weighted sum of symmetric ell derivatives over part of the support."""
    total = 0.0
    for i in region:
        x = measure.points[i]
        rep = semi_derivative_report(
            space, lambda z: ell(space, measure, z, nu, kappa), x,
            w_field(x), base_h=base_h)
        total += measure.weights[i] * rep.symmetric
    return total


# ---------------------------------------------------------------------------
# second-order residuals


@dataclass(frozen=True)
class SecondOrderReport:
    lhs: float
    chi1: float
    chi2: float


def second_order_residual(space: ConfigurationSpace,
                          measure: DiscreteMeasure,
                          family: VariationFamily, test_jet: Jet, x: Any,
                          nu: float, kappa: float = 0.0,
                          tau_base: float = 0.05,
                          s_base: float = 1e-2) -> SecondOrderReport:
    """Second parameter derivative of the varied equations, with noise terms.

    The left-hand side pairs the second-order inner value with the test
    jet, subtracting the multiplier weighted by the second weight
    derivative.  The two noise terms are the first- and second-order
    mixed displacement derivatives.
    """
    fdd = family.f_ddot0
    if fdd is None:
        def fdd(z: Any) -> float:
            return scalar_second_semi_derivative(
                lambda t: family.weight(t, z), base_h=tau_base)

    def inner_second(z: Any) -> float:
        total = 0.0
        for xj, wj in zip(measure.points, measure.weights):
            if _pair_skip(space, z, xj):
                continue

            def h(t: float) -> float:
                return family.weight(t, z) * family.weight(t, xj) * \
                    space.lagrangian_kappa(family.transport(t, z),
                                           family.transport(t, xj), kappa)

            total += wj * scalar_second_semi_derivative(h, base_h=tau_base)
        return total

    c = test_jet.scalar(x)
    w = test_jet.vector(x)
    g2_rep = semi_derivative_report(space, inner_second, x, w, tol_abs=1e-4)
    fdd_rep = semi_derivative_report(space, fdd, x, w, tol_abs=1e-6)
    lhs = c * inner_second(x) + g2_rep.symmetric \
        - (c * fdd(x) + fdd_rep.symmetric) * 0.5 * nu

    chi1 = stochastic_chi(space, measure, family, w, x, nu, kappa,
                          s_base=s_base)

    def big_h(s: float) -> float:
        zp = space.move(x, w, s)
        zm = space.move(x, w, -s)

        def g(t: float) -> float:
            return family.weight(t, x) * (
                _varied_ell(space, measure, family, t,
                            family.transport(t, zp), nu, kappa)
                - _varied_ell(space, measure, family, t,
                              family.transport(t, zm), nu, kappa))

        return scalar_second_semi_derivative(g, base_h=tau_base)

    chi2 = 0.5 * quotient_limit(big_h, base_h=s_base)
    return SecondOrderReport(lhs=lhs, chi1=chi1, chi2=chi2)
