"""Variational calculus for weighted point measures on configuration spaces.

A configuration space bundles the callables the variational layer needs:
a pair Lagrangian, a retraction for moving points, a probe generator for
checking minimality off the support, and a distance.  Measures are finite
weighted point sets.  The central quantities are the double-sum action,
the integrated Lagrangian ell with its Lagrange-multiplier shift, and the
Euler-Lagrange residual report.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import (EmptyMeasure, NotUnitVector, ScheduleInvalid,
                     UnknownFixture, UnsupportedMode, ValidationError)


# ---------------------------------------------------------------------------
# configuration spaces


@dataclass(frozen=True)
class ConfigurationSpace:
    """Callable bundle describing where points live and how they interact.

    ``lagrangian_fn(x, y)`` is the symmetric, nonnegative pair Lagrangian.
    ``move(x, tangent, step)`` retracts ``x + step * tangent`` back onto the
    space.  ``probes(count)`` returns a deterministic off-support sample used
    for minimality checks.  ``bounded_fn`` supplies the quadratic weight term
    needed for a nonzero kappa; spaces without it reject kappa != 0.
    ``pair_negligible(x, y)`` may declare far pairs exactly zero so nested
    derivative loops can skip them.
    """

    name: str
    lagrangian_fn: Callable[[Any, Any], float]
    move: Callable[[Any, Any, float], Any]
    probes: Callable[[int], Sequence[Any]]
    distance: Callable[[Any, Any], float]
    random_tangent: Callable[[np.random.Generator, Any], Any]
    bounded_fn: Optional[Callable[[Any, Any], float]] = None
    pair_negligible: Optional[Callable[[Any, Any], bool]] = None
    random_point: Optional[Callable[[np.random.Generator], Any]] = None
    tangent_frame: Optional[Callable[[Any], list]] = None

    def lagrangian_kappa(self, x: Any, y: Any, kappa: float) -> float:
        if kappa == 0.0:
            return self.lagrangian_fn(x, y)
        if self.bounded_fn is None:
            raise UnsupportedMode(
                f"space {self.name!r} has no bounded term; kappa must be 0")
        return self.lagrangian_fn(x, y) + kappa * self.bounded_fn(x, y)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite weighted point set.  Weights are strictly positive."""

    points: tuple
    weights: np.ndarray
    space_tag: str = "custom"

    def __len__(self) -> int:
        return len(self.points)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


def make_measure(points: Sequence[Any], weights: Sequence[float],
                 space: Optional[ConfigurationSpace] = None,
                 space_tag: str = "custom",
                 merge_tol: float = 1e-8) -> DiscreteMeasure:
    """Build a measure, merging points closer than ``merge_tol``."""
    pts = list(points)
    w = np.asarray(weights, dtype=float)
    if len(pts) != w.size:
        raise ValidationError("points and weights must have equal length")
    if w.size == 0:
        raise EmptyMeasure("a measure needs at least one point")
    if np.any(w <= 0):
        raise ValidationError("weights must be strictly positive")
    if merge_tol <= 0.0:
        return DiscreteMeasure(tuple(pts), w.copy(), space_tag)

    if space is not None:
        dist = space.distance
    else:
        dist = lambda a, b: float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    kept: list = []
    kept_w: list = []
    for p, wi in zip(pts, w):
        for k, q in enumerate(kept):
            if dist(p, q) <= merge_tol:
                kept_w[k] += wi
                break
        else:
            kept.append(p)
            kept_w.append(float(wi))
    return DiscreteMeasure(tuple(kept), np.asarray(kept_w), space_tag)


# ---------------------------------------------------------------------------
# action, ell and the Euler-Lagrange residual


def action(space: ConfigurationSpace, measure: DiscreteMeasure,
           kappa: float = 0.0) -> float:
    """Double-sum action including the diagonal pairs."""
    m = len(measure)
    w = measure.weights
    total = 0.0
    for i in range(m):
        total += w[i] * w[i] * space.lagrangian_kappa(
            measure.points[i], measure.points[i], kappa)
        for j in range(i + 1, m):
            # symmetric off-diagonal pairs counted once, doubled
            total += 2.0 * w[i] * w[j] * space.lagrangian_kappa(
                measure.points[i], measure.points[j], kappa)
    return total


def interaction(space: ConfigurationSpace, measure: DiscreteMeasure,
                z: Any, kappa: float = 0.0) -> float:
    """Weighted Lagrangian sum of ``z`` against the whole support."""
    total = 0.0
    for p, wj in zip(measure.points, measure.weights):
        total += wj * space.lagrangian_kappa(z, p, kappa)
    return total


def ell(space: ConfigurationSpace, measure: DiscreteMeasure, z: Any,
        nu: float, kappa: float = 0.0) -> float:
    """Shifted integrated Lagrangian; vanishes on minimizing supports."""
    return interaction(space, measure, z, kappa) - 0.5 * nu


@dataclass(frozen=True)
class ElReport:
    """Outcome of the Euler-Lagrange residual check."""

    nu: float
    max_abs_support: float
    inf_probe: float
    n_probes: int
    tol: float
    passed: bool


def el_residual(space: ConfigurationSpace, measure: DiscreteMeasure,
                kappa: float = 0.0, probe_count: int = 10_000,
                tol: float = 1e-9) -> ElReport:
    """Check both halves of the minimality condition.

    The multiplier is fixed from the data: twice the smallest interaction
    seen over probes and support.  Support points must then sit at ell == 0
    up to ``tol`` and no probe may dip below -tol.
    """
    if len(measure) == 0:
        raise EmptyMeasure("cannot test an empty measure")
    probes = list(space.probes(probe_count))
    support_vals = [interaction(space, measure, p, kappa)
                    for p in measure.points]
    probe_vals = [interaction(space, measure, z, kappa) for z in probes]
    lowest = min(support_vals + probe_vals) if probe_vals else min(support_vals)
    nu = 2.0 * float(lowest)
    max_abs_support = max(abs(float(v) - 0.5 * nu) for v in support_vals)
    inf_probe = (min(float(v) - 0.5 * nu for v in probe_vals)
                 if probe_vals else math.inf)
    passed = bool(max_abs_support <= tol and inf_probe >= -tol)
    return ElReport(nu=nu, max_abs_support=max_abs_support,
                    inf_probe=inf_probe, n_probes=len(probes), tol=tol,
                    passed=passed)


def lrho_min_constrained_eigenvalue(space: ConfigurationSpace,
                                    measure: DiscreteMeasure,
                                    kappa: float = 0.0) -> float:
    """Smallest eigenvalue of the weighted pair kernel on the trace-free cone.

    The kernel K_ij = sqrt(w_i w_j) L(x_i, x_j) is restricted to vectors
    orthogonal to sqrt(w), the direction of uniform weight rescaling.
    """
    m = len(measure)
    if m < 2:
        raise EmptyMeasure("constrained spectrum needs at least two points")
    w = measure.weights
    k = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            val = space.lagrangian_kappa(measure.points[i], measure.points[j],
                                         kappa)
            k[i, j] = k[j, i] = val
    sw = np.sqrt(w)
    k = k * np.outer(sw, sw)
    u = sw / np.linalg.norm(sw)
    # orthonormal basis of the complement of u via a full QR factorization
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(m)]), mode="reduced")
    basis = q[:, 1:m]
    restricted = basis.T @ k @ basis
    return float(np.linalg.eigvalsh(restricted)[0])


# ---------------------------------------------------------------------------
# sphere model


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def sphere_lagrangian(x: Sequence[float], y: Sequence[float],
                      tau: float) -> float:
    """Closed-form pair Lagrangian for the two-sphere family.

    With c the cosine of the enclosed angle, the signed value is
    2 tau^2 (1 + c) (2 - tau^2 (1 - c)); the Lagrangian is its positive
    part.  Inputs must be unit vectors.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for v in (x, y):
        if abs(np.dot(v, v) - 1.0) > 1e-10:
            raise NotUnitVector("sphere points must be unit vectors")
    c = float(np.dot(x, y))
    signed = 2.0 * tau * tau * (1.0 + c) * (2.0 - tau * tau * (1.0 - c))
    return signed if signed > 0.0 else 0.0


def fibonacci_probes(count: int) -> list[np.ndarray]:
    """Deterministic near-uniform sample of the unit two-sphere."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    pts = []
    for i in range(count):
        z = 1.0 - 2.0 * (i + 0.5) / count
        r = math.sqrt(max(0.0, 1.0 - z * z))
        a = golden * i
        pts.append(np.array([r * math.cos(a), r * math.sin(a), z]))
    return pts


def sphere_space(tau: float = math.sqrt(2.0)) -> ConfigurationSpace:
    """Two-sphere with the closed-form Lagrangian at strength ``tau``."""
    if tau <= 0:
        raise ValidationError("tau must be positive")

    def lag(x, y):
        return sphere_lagrangian(x, y, tau)

    def move(x, tangent, step):
        return _unit(np.asarray(x, dtype=float)
                     + step * np.asarray(tangent, dtype=float))

    def distance(x, y):
        c = float(np.clip(np.dot(x, y), -1.0, 1.0))
        return math.acos(c)

    def random_tangent(rng, x):
        v = rng.standard_normal(3)
        v -= np.dot(v, x) * np.asarray(x)
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            return random_tangent(rng, x)
        return v / norm

    return ConfigurationSpace(
        name=f"sphere(tau={tau:g})",
        lagrangian_fn=lag,
        move=move,
        probes=fibonacci_probes,
        distance=distance,
        random_tangent=random_tangent,
        random_point=lambda rng: _unit(rng.standard_normal(3)),
        tangent_frame=lambda x: _tangent_frame(x),
    )


# ---------------------------------------------------------------------------
# smooth test fixtures: a circle with a strictly positive smooth kernel,
# and a line with a quadratic kernel


def _wrap_angle(a: float) -> float:
    return a - 2.0 * math.pi * math.floor(a / (2.0 * math.pi))


def circle_space(offset: float = 1.0, probe_count_default: int = 512
                 ) -> ConfigurationSpace:
    """Circle with kernel offset + cos(separation); smooth everywhere.

    Points are one-element arrays holding the angle.  Uniform measures are
    exactly critical because the cosine sums telescope to zero.
    """
    if offset < 1.0:
        raise ValidationError("offset below 1 makes the kernel negative")

    def lag(x, y):
        return offset + math.cos(float(x[0]) - float(y[0]))

    def move(x, tangent, step):
        return np.array([_wrap_angle(float(x[0]) + step * float(tangent))])

    def probes(count):
        return [np.array([2.0 * math.pi * (i + 0.37) / count])
                for i in range(count)]

    def distance(x, y):
        d = abs(_wrap_angle(float(x[0]) - float(y[0])))
        return min(d, 2.0 * math.pi - d)

    def random_tangent(rng, x):
        return 1.0 if rng.uniform() < 0.5 else -1.0

    return ConfigurationSpace(
        name=f"circle(offset={offset:g})",
        lagrangian_fn=lag,
        move=move,
        probes=lambda count=probe_count_default: probes(count),
        distance=distance,
        random_tangent=random_tangent,
        random_point=lambda rng: np.array([rng.uniform(0.0, 2.0 * math.pi)]),
        tangent_frame=lambda x: [1.0],
    )


def circle_measure(n: int) -> DiscreteMeasure:
    """Uniform n-point measure on the circle, total weight one."""
    if n < 2:
        raise EmptyMeasure("circle fixture needs at least two points")
    pts = [np.array([2.0 * math.pi * i / n]) for i in range(n)]
    return make_measure(pts, [1.0 / n] * n, space_tag=f"circle({n})")


def line_space() -> ConfigurationSpace:
    """Real line with the quadratic kernel; closed-form Taylor data."""

    def lag(x, y):
        d = float(x[0]) - float(y[0])
        return d * d

    def move(x, tangent, step):
        return np.array([float(x[0]) + step * float(tangent)])

    def probes(count):
        return [np.array([-2.0 + 4.0 * (i + 0.5) / count])
                for i in range(count)]

    def distance(x, y):
        return abs(float(x[0]) - float(y[0]))

    def random_tangent(rng, x):
        return 1.0 if rng.uniform() < 0.5 else -1.0

    return ConfigurationSpace(
        name="line",
        lagrangian_fn=lag,
        move=move,
        probes=probes,
        distance=distance,
        random_tangent=random_tangent,
        random_point=lambda rng: np.array([rng.standard_normal()]),
        tangent_frame=lambda x: [1.0],
    )


# ---------------------------------------------------------------------------
# minimization


@dataclass(frozen=True)
class AnnealConfig:
    """Schedule for the stochastic search plus deterministic polish."""

    steps: int = 4000
    t0: float = 2.0
    cooling: float = 0.9985
    proposal_sigma: float = 0.4
    polish_start: float = 0.1
    polish_floor: float = 1e-9

    def validate(self) -> None:
        if self.steps < 1:
            raise ScheduleInvalid("steps must be at least 1")
        if self.t0 <= 0:
            raise ScheduleInvalid("initial temperature must be positive")
        if not 0.0 < self.cooling <= 1.0:
            raise ScheduleInvalid("cooling factor must lie in (0, 1]")
        if self.proposal_sigma <= 0:
            raise ScheduleInvalid("proposal sigma must be positive")
        if not 0.0 < self.polish_floor <= self.polish_start:
            raise ScheduleInvalid("polish step range is inverted")


@dataclass(frozen=True)
class MinimizeResult:
    measure: DiscreteMeasure
    action: float
    trajectory: np.ndarray
    seed: int
    accepted: int


def _action_delta(space: ConfigurationSpace, points: list, w: np.ndarray,
                  i: int, candidate: Any, kappa: float) -> float:
    """Action change when point i moves, using only row i of the pair sum."""
    old = points[i]
    delta = w[i] * w[i] * (space.lagrangian_kappa(candidate, candidate, kappa)
                           - space.lagrangian_kappa(old, old, kappa))
    for j, q in enumerate(points):
        if j == i:
            continue
        delta += 2.0 * w[i] * w[j] * (
            space.lagrangian_kappa(candidate, q, kappa)
            - space.lagrangian_kappa(old, q, kappa))
    return delta


def _tangent_frame(x: np.ndarray) -> list[np.ndarray]:
    """Two orthonormal tangent vectors at a sphere point."""
    x = np.asarray(x, dtype=float)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(x[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    t1 = _unit(np.cross(x, helper))
    t2 = np.cross(x, t1)
    return [t1, t2]


def _polish(space: ConfigurationSpace, points: list, w: np.ndarray,
            kappa: float, start: float, floor: float,
            frame: Callable[[Any], list]) -> tuple[list, float]:
    """Coordinate descent with step halving down to the floor.

    Handles corner minima where one-sided slopes stay bounded away from
    zero: once no single-point move improves, the step is halved.
    """
    current = action(space, make_measure(points, w, space_tag="tmp",
                                         merge_tol=0.0), kappa)
    h = start
    while h >= floor:
        improved = True
        while improved:
            improved = False
            for i in range(len(points)):
                for t in frame(points[i]):
                    for sgn in (1.0, -1.0):
                        candidate = space.move(points[i], t, sgn * h)
                        delta = _action_delta(space, points, w, i, candidate,
                                              kappa)
                        if delta < -1e-15 * max(abs(current), 1.0):
                            points[i] = candidate
                            current += delta
                            improved = True
        h *= 0.5
    return points, current


def minimize_counting_measure(space: ConfigurationSpace, n_points: int,
                              config: Optional[AnnealConfig] = None,
                              seed: int = 0, kappa: float = 0.0,
                              initial: Optional[Sequence[Any]] = None
                              ) -> MinimizeResult:
    """Search for a minimizing uniform counting measure.

    Metropolis annealing with single-point tangent proposals, geometric
    cooling, and a deterministic polish afterwards.  The result is a
    function of the seed alone.
    """
    if config is None:
        config = AnnealConfig()
    config.validate()
    if n_points < 1:
        raise EmptyMeasure("need at least one point")
    if space.tangent_frame is None or space.random_point is None:
        raise UnsupportedMode(
            f"space {space.name!r} does not support stochastic minimization")
    rng = np.random.default_rng(seed)
    w = np.full(n_points, 1.0 / n_points)

    if initial is not None:
        points = [np.asarray(p, dtype=float).copy() for p in initial]
        if len(points) != n_points:
            raise ValidationError("initial data has the wrong point count")
    else:
        points = [space.random_point(rng) for _ in range(n_points)]

    def total(ps):
        return action(space, make_measure(ps, w, space_tag="tmp",
                                          merge_tol=0.0), kappa)

    current = total(points)
    best = current
    best_points = [p.copy() for p in points]
    trajectory = [best]
    accepted = 0

    temp = config.t0
    for _ in range(config.steps):
        i = int(rng.integers(n_points))
        tangent = space.random_tangent(rng, points[i])
        step = config.proposal_sigma * math.sqrt(temp / config.t0) \
            * rng.standard_normal()
        candidate = space.move(points[i], tangent, step)
        delta = _action_delta(space, points, w, i, candidate, kappa)
        if delta <= 0.0 or rng.uniform() < math.exp(-delta / temp):
            points[i] = candidate
            current += delta
            accepted += 1
            if current < best:
                best = current
                best_points = [p.copy() for p in points]
        trajectory.append(best)
        temp *= config.cooling

    best_points, best = _polish(space, best_points, w, kappa,
                                config.polish_start, config.polish_floor,
                                space.tangent_frame)
    # recompute from scratch; the incremental deltas accumulate roundoff
    best = total(best_points)
    trajectory.append(best)
    measure = make_measure(best_points, w, space_tag=space.name,
                           merge_tol=0.0)
    return MinimizeResult(measure=measure, action=best,
                          trajectory=np.asarray(trajectory), seed=seed,
                          accepted=accepted)


# ---------------------------------------------------------------------------
# bundled fixtures


_SPHERE_RANDOM = re.compile(r"^sphere-random\((\d+)\)$")
_LATTICE = re.compile(r"^lattice\((\d+)\s*[x×]\s*(\d+)\)$")


def octahedron_points() -> list[np.ndarray]:
    pts = []
    for k in range(3):
        for sgn in (1.0, -1.0):
            v = np.zeros(3)
            v[k] = sgn
            pts.append(v)
    return pts


def fixture_measure(name: str, seed: int = 0
                    ) -> tuple[ConfigurationSpace, DiscreteMeasure]:
    """Named example systems: octahedron, random sphere points, lattice box."""
    if name == "octahedron":
        space = sphere_space(math.sqrt(2.0))
        pts = octahedron_points()
        return space, make_measure(pts, [1.0 / 6.0] * 6, space=space,
                                   space_tag=name)

    m = _SPHERE_RANDOM.match(name)
    if m:
        n = int(m.group(1))
        if n < 1:
            raise UnknownFixture(f"fixture {name!r} needs a positive count")
        space = sphere_space(math.sqrt(2.0))
        rng = np.random.default_rng(seed)
        pts = [_unit(rng.standard_normal(3)) for _ in range(n)]
        return space, make_measure(pts, [1.0 / n] * n, space=space,
                                   space_tag=name)

    m = _LATTICE.match(name)
    if m:
        from . import lattice as lat
        half_t, half_s = int(m.group(1)) // 2, int(m.group(2)) // 2
        params = lat.LatticeParams()
        space = lat.lattice_space(params)
        pts = [lat.LatticePoint(float(t), float(s), 0.0)
               for t in range(-half_t, int(m.group(1)) - half_t)
               for s in range(-half_s, int(m.group(2)) - half_s)]
        return space, make_measure(pts, [1.0] * len(pts), space=space,
                                   space_tag=name, merge_tol=0.0)

    raise UnknownFixture(f"unknown fixture {name!r}")


# ---------------------------------------------------------------------------
# serialization


def measure_to_json(measure: DiscreteMeasure) -> dict:
    pts = []
    for p in measure.points:
        arr = np.asarray(getattr(p, "as_array", lambda: p)(), dtype=float)
        pts.append([float(v) for v in arr])
    return {"space": measure.space_tag, "points": pts,
            "weights": [float(v) for v in measure.weights]}


def measure_from_json(data: dict) -> DiscreteMeasure:
    try:
        tag = data["space"]
        pts = [np.asarray(p, dtype=float) for p in data["points"]]
        weights = data["weights"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed measure record: {exc}") from exc
    return make_measure(pts, weights, space_tag=tag)
