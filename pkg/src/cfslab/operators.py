"""Linear-algebra kernel for finite causal fermion systems.

A space-time point is a dense complex Hermitian matrix with at most n positive
and at most n negative eigenvalues (spin dimension n).  The causal Lagrangian
of a pair (x, y) is built from the nontrivial spectrum of the operator product
x y, and the same spectrum decides the causal relation of the pair.  The module
also provides local correlation operators built from wave-function values, the
kernel/closed-chain construction on spin spaces, and unitary variations.

All operations are pure functions of their inputs; nothing here holds global
state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, NotHermitian, SignatureViolation


@dataclass(frozen=True)
class NumericsConfig:
    """Shared floating-point thresholds.

    tol_herm scales the Hermiticity check, tol_rank the rank/signature cut,
    tol_class the causal classification.  The decision rules are exact in
    exact arithmetic; these make them explicit in floating point.
    """

    tol_herm: float = 1e-12
    tol_rank: float = 1e-10
    tol_class: float = 1e-8


DEFAULT_NUMERICS = NumericsConfig()


@dataclass(frozen=True)
class CfsPoint:
    """A validated point of the operator configuration space.

    The stored matrix is the Hermitian part of the input (deviation was
    checked to be below tolerance at admission).  cached_eigs holds the real
    spectrum in ascending order.
    """

    matrix: np.ndarray
    spin_dim: int
    cached_eigs: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ProductSpectrum:
    """The 2n nontrivial eigenvalues of a product x y, zero-padded.

    eigs is sorted by descending modulus, ties broken by ascending argument,
    so serialized spectra are reproducible.  weight_abs is the spectral weight
    sum |lambda_i|, weight_sq the weight of the squared product sum
    |lambda_i|^2.
    """

    eigs: np.ndarray
    weight_abs: float
    weight_sq: float


class CausalKind(enum.Enum):
    SPACELIKE = "spacelike"
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"


@dataclass(frozen=True)
class CausalClass:
    kind: CausalKind
    tol_used: float


class LagrangianValue(NamedTuple):
    lagrangian: float
    lagrangian_kappa: float
    bounded_term: float


def _as_complex_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def make_point(matrix, n: int, numerics: NumericsConfig = DEFAULT_NUMERICS,
               expected_trace: float | None = None) -> CfsPoint:
    """Validate a matrix as a configuration-space point of spin dimension n.

    Raises NotHermitian if the matrix differs from its conjugate transpose by
    more than tol_herm times its norm, SignatureViolation if more than n
    positive or more than n negative eigenvalues exceed the rank threshold.
    An expected trace, when given, is validated at the Hermiticity tolerance;
    the constraint value is model-dependent so there is no default.
    """
    m = _as_complex_matrix(matrix)
    if n < 1:
        raise SignatureViolation(f"spin dimension must be positive, got {n}")
    scale = np.linalg.norm(m)
    herm_tol = numerics.tol_herm * scale
    if np.linalg.norm(m - m.conj().T) > herm_tol:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    h = (m + m.conj().T) / 2.0
    eigs = np.linalg.eigvalsh(h)
    rank_tol = numerics.tol_rank * scale
    n_pos = int(np.sum(eigs > rank_tol))
    n_neg = int(np.sum(eigs < -rank_tol))
    if n_pos > n or n_neg > n:
        raise SignatureViolation(
            f"signature ({n_pos},{n_neg}) exceeds the bound ({n},{n})")
    if expected_trace is not None:
        tr = float(np.real(np.trace(h)))
        if abs(tr - expected_trace) > max(herm_tol, numerics.tol_herm):
            raise SignatureViolation(
                f"trace {tr!r} violates the supplied constraint {expected_trace!r}")
    return CfsPoint(matrix=h, spin_dim=n, cached_eigs=eigs)


def _check_compatible(x: CfsPoint, y: CfsPoint) -> None:
    if x.dim != y.dim or x.spin_dim != y.spin_dim:
        raise DimensionMismatch(
            f"points of dimension {x.dim} (n={x.spin_dim}) and "
            f"{y.dim} (n={y.spin_dim}) cannot be paired")


def _sorted_by_modulus(lam: np.ndarray) -> np.ndarray:
    # descending modulus, then ascending argument: deterministic reports
    order = np.lexsort((np.angle(lam), -np.abs(lam)))
    return lam[order]


def product_spectrum(x: CfsPoint, y: CfsPoint,
                     numerics: NumericsConfig = DEFAULT_NUMERICS) -> ProductSpectrum:
    """Nontrivial eigenvalues of x y, zero-padded to exactly 2n entries.

    Eigenvalues below tol_rank times the largest modulus are discarded as
    trivial; should more than 2n survive (threshold-level noise only, the
    signature bound was validated at admission) the 2n largest are kept.
    """
    _check_compatible(x, y)
    two_n = 2 * x.spin_dim
    lam = np.linalg.eigvals(x.matrix @ y.matrix)
    top = np.max(np.abs(lam)) if lam.size else 0.0
    if top > 0.0:
        lam = lam[np.abs(lam) >= numerics.tol_rank * top]
    else:
        lam = lam[:0]
    lam = _sorted_by_modulus(lam)[:two_n]
    eigs = np.zeros(two_n, dtype=complex)
    eigs[:lam.size] = lam
    return ProductSpectrum(
        eigs=eigs,
        weight_abs=float(np.sum(np.abs(eigs))),
        weight_sq=float(np.sum(np.abs(eigs) ** 2)),
    )


def lagrangian(x: CfsPoint, y: CfsPoint, kappa: float = 0.0,
               numerics: NumericsConfig = DEFAULT_NUMERICS) -> LagrangianValue:
    """Causal Lagrangian of the pair plus its kappa-augmented value.

    L = sum |lambda_i|^2 minus (1/2n) (sum |lambda_i|)^2, which equals the
    pairwise square sum (1/4n) sum_{i,j} (|lambda_i| - |lambda_j|)^2 over the
    zero-padded spectrum and is therefore nonnegative; tiny negative values
    (below 1e-10 of the bounded term) are floating-point round-off and are
    clamped to zero.  bounded_term is (sum |lambda_i|)^2 and
    L_kappa = L + kappa * bounded_term.
    """
    if kappa < 0:
        raise DimensionMismatch(f"kappa must be nonnegative, got {kappa}")
    ps = product_spectrum(x, y, numerics)
    bounded = ps.weight_abs ** 2
    lag = ps.weight_sq - bounded / (2 * x.spin_dim)
    if lag < 0.0:
        if -lag > 1e-10 * bounded + 1e-300:
            raise FloatingPointError(
                f"Lagrangian {lag!r} negative beyond the round-off guard")
        lag = 0.0
    return LagrangianValue(lag, lag + kappa * bounded, bounded)


def causal_class(x: CfsPoint, y: CfsPoint, tol: float | None = None,
                 numerics: NumericsConfig = DEFAULT_NUMERICS) -> CausalClass:
    """Causal relation of the pair decided from the product spectrum.

    Spacelike when all nonzero moduli agree within tol (relative to the
    largest), else timelike when every eigenvalue is real at the same relative
    tolerance, else lightlike.  A fully degenerate product (x y = 0) counts as
    spacelike, consistent with its vanishing Lagrangian.
    """
    if tol is None:
        tol = numerics.tol_class
    if tol <= 0:
        raise DimensionMismatch(f"classification tolerance must be positive, got {tol}")
    ps = product_spectrum(x, y, numerics)
    mods = np.abs(ps.eigs)
    top = float(np.max(mods))
    if top == 0.0:
        return CausalClass(CausalKind.SPACELIKE, tol)
    nonzero = mods[mods > 0.0]
    if top - float(np.min(nonzero)) <= tol * top:
        return CausalClass(CausalKind.SPACELIKE, tol)
    if np.all(np.abs(ps.eigs.imag) <= tol * top):
        return CausalClass(CausalKind.TIMELIKE, tol)
    return CausalClass(CausalKind.LIGHTLIKE, tol)


def local_correlation(waves: Sequence, n: int, spin_metric,
                      numerics: NumericsConfig = DEFAULT_NUMERICS) -> CfsPoint:
    """Local correlation operator from wave-function values at one point.

    waves holds the values psi_1(x) .. psi_f(x) of an orthonormal wave basis,
    one spinor per row; spin_metric is the Hermitian form defining the
    indefinite pointwise product.  The operator has entries
    F^i_j = -(conj(psi_i) . metric . psi_j) and is Hermitian by construction;
    its signature bound (n, n) is enforced at admission.
    """
    w = np.asarray(waves, dtype=complex)
    if w.ndim == 1:
        w = w[None, :]
    s = _as_complex_matrix(spin_metric)
    if s.shape[0] != w.shape[1]:
        raise DimensionMismatch(
            f"spinor length {w.shape[1]} does not match metric dimension {s.shape[0]}")
    if np.linalg.norm(s - s.conj().T) > numerics.tol_herm * max(np.linalg.norm(s), 1.0):
        raise NotHermitian("spin metric is not Hermitian")
    f_mat = -(w.conj() @ s @ w.T)
    return make_point(f_mat, n, numerics)


@dataclass(frozen=True)
class KernelChain:
    """Kernel matrices in orthonormal spin-space bases plus the closed chain.

    p_xy maps spin space at y to spin space at x, p_yx the reverse, and
    a_xy = p_xy p_yx acts on the spin space at x.  rank_deficient flags
    dim S_x < 2n (informational; the spectra comparison still holds on the
    reduced space).
    """

    p_xy: np.ndarray
    p_yx: np.ndarray
    a_xy: np.ndarray
    rank_deficient: bool


def _spin_basis(p: CfsPoint, numerics: NumericsConfig) -> np.ndarray:
    vals, vecs = np.linalg.eigh(p.matrix)
    keep = np.abs(vals) > numerics.tol_rank * max(np.linalg.norm(p.matrix), 1e-300)
    return vecs[:, keep]


def kernel_and_chain(x: CfsPoint, y: CfsPoint,
                     numerics: NumericsConfig = DEFAULT_NUMERICS) -> KernelChain:
    """Kernel of the pair and its closed chain on the spin space at x.

    The spin space at a point is the image of its operator; the kernel is the
    projection of y to the spin space at x, restricted to the spin space at y.
    The nontrivial spectrum of a_xy reproduces product_spectrum(x, y); tests
    hold the two routes to 1e-9 relative agreement.
    """
    _check_compatible(x, y)
    bx = _spin_basis(x, numerics)
    by = _spin_basis(y, numerics)
    p_xy = bx.conj().T @ y.matrix @ by
    p_yx = by.conj().T @ x.matrix @ bx
    return KernelChain(
        p_xy=p_xy,
        p_yx=p_yx,
        a_xy=p_xy @ p_yx,
        rank_deficient=bx.shape[1] < 2 * x.spin_dim,
    )


def unitary_variation(a, tau: float, x: CfsPoint,
                      numerics: NumericsConfig = DEFAULT_NUMERICS) -> CfsPoint:
    """Conjugate x by exp(i tau a) for a Hermitian generator a.

    The result stays in the configuration space with identical spectrum and
    trace.  The exponential is evaluated through the eigendecomposition of
    the generator, which keeps it exactly unitary up to round-off.
    """
    g = _as_complex_matrix(a)
    if g.shape[0] != x.dim:
        raise DimensionMismatch(
            f"generator dimension {g.shape[0]} does not match point dimension {x.dim}")
    if np.linalg.norm(g - g.conj().T) > numerics.tol_herm * max(np.linalg.norm(g), 1.0):
        raise NotHermitian("variation generator is not Hermitian")
    vals, vecs = np.linalg.eigh((g + g.conj().T) / 2.0)
    u = (vecs * np.exp(1j * tau * vals)) @ vecs.conj().T
    return make_point(u @ x.matrix @ u.conj().T, x.spin_dim, numerics)


# -- serialization ------------------------------------------------------------

def point_to_json(p: CfsPoint) -> dict:
    return {
        "n": p.spin_dim,
        "matrix": [[[float(v.real), float(v.imag)] for v in row] for row in p.matrix],
    }


def point_from_json(data: dict,
                    numerics: NumericsConfig = DEFAULT_NUMERICS) -> CfsPoint:
    try:
        n = int(data["n"])
        raw = data["matrix"]
        m = np.array([[complex(re, im) for re, im in row] for row in raw])
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionMismatch(f"malformed point encoding: {exc}") from exc
    return make_point(m, n, numerics)


def spectrum_to_json(ps: ProductSpectrum) -> dict:
    return {
        "eigs": [[float(v.real), float(v.imag)] for v in ps.eigs],
        "weight_abs": ps.weight_abs,
        "weight_sq": ps.weight_sq,
    }
