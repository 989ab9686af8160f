"""Cocycle generators, scaled orbit products and uniform exponent estimates.

Long products are carried as (unit-norm matrix, log scale) pairs and
renormalized after every multiplication: |A^n| can overflow doubles near
n ~ 700 even for mild cocycles.  The sequential chain itself runs in the
compiled kernel when available.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cocyclekit import linalg
from cocyclekit._kernels import chain_scaled_partials
from cocyclekit.errors import DegenerateGeneratorError, InvalidInputError

#: Generators with |det| below this are rejected at evaluation.
DET_FLOOR = 1e-12


def rotation(theta):
    """2x2 rotation by theta."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class TrigPoly:
    """Finite trigonometric sum c0 + sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x).

    Evaluated on one coordinate of the embedded base point ("coord").
    """

    const: float = 0.0
    cos: tuple = ()
    sin: tuple = ()
    coord: int = 0

    def __call__(self, coords):
        coords = np.asarray(coords, dtype=np.float64)
        x = coords[..., self.coord]
        out = np.full_like(x, self.const)
        for k, a in enumerate(self.cos, start=1):
            out += a * np.cos(2.0 * np.pi * k * x)
        for k, b in enumerate(self.sin, start=1):
            out += b * np.sin(2.0 * np.pi * k * x)
        return out


class CocycleSpec:
    """Base class: a generator family omega -> A(omega) with fiber dimension d."""

    dim = None

    def _eval_coords(self, coords):
        raise NotImplementedError

    def orbit_matrices(self, dyn, point, n0, n1):
        """Stack A(F^j omega) for j in [n0, n1), invertibility enforced."""
        if n1 <= n0:
            return np.empty((0, self.dim, self.dim))
        stack = self._eval_coords(dyn.embed_orbit(point, n0, n1))
        dets = np.linalg.det(stack)
        if not np.all(np.isfinite(stack)):
            raise DegenerateGeneratorError("generator produced non-finite entries")
        if np.any(np.abs(dets) < DET_FLOOR):
            j = int(np.argmin(np.abs(dets)))
            raise DegenerateGeneratorError(
                f"generator at orbit offset {n0 + j} has |det| = {abs(dets[j]):.3e} < {DET_FLOOR}"
            )
        return stack

    def matrix(self, dyn, point):
        return self.orbit_matrices(dyn, point, 0, 1)[0]


@dataclass(frozen=True)
class Constant(CocycleSpec):
    mat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mat", np.asarray(self.mat, dtype=np.float64))

    @property
    def dim(self):
        return self.mat.shape[0]

    def _eval_coords(self, coords):
        return np.broadcast_to(self.mat, (coords.shape[0],) + self.mat.shape).copy()


@dataclass(frozen=True)
class PerOrbitPoint(CocycleSpec):
    """One matrix per point of a periodic orbit; only valid over PeriodicOrbit."""

    mats: tuple

    def __post_init__(self):
        object.__setattr__(self, "mats", tuple(np.asarray(m, dtype=np.float64) for m in self.mats))

    @property
    def dim(self):
        return self.mats[0].shape[0]

    def orbit_matrices(self, dyn, point, n0, n1):
        if getattr(dyn, "kind", None) != "periodic" or dyn.period != len(self.mats):
            raise InvalidInputError("PerOrbitPoint requires a PeriodicOrbit of matching period")
        idx = (int(point) + np.arange(n0, n1)) % dyn.period
        stack = np.stack([self.mats[i] for i in idx]) if len(idx) else np.empty((0, self.dim, self.dim))
        if stack.size and np.any(np.abs(np.linalg.det(stack)) < DET_FLOOR):
            raise DegenerateGeneratorError("per-orbit generator near singular")
        return stack


@dataclass(frozen=True)
class Schrodinger(CocycleSpec):
    """Transfer matrices [[E - v, -1], [1, 0]] with v = 2 kappa cos(2 pi x)."""

    energy: float
    coupling: float = 0.0
    dim = 2

    def _eval_coords(self, coords):
        x = coords[..., 0]
        v = 2.0 * self.coupling * np.cos(2.0 * np.pi * x)
        n = x.shape[0]
        out = np.zeros((n, 2, 2))
        out[:, 0, 0] = self.energy - v
        out[:, 0, 1] = -1.0
        out[:, 1, 0] = 1.0
        return out


@dataclass(frozen=True)
class ScalarTimesRotation(CocycleSpec):
    """exp(log_scale(x)) times rotation by angle(x); always invertible."""

    log_scale: TrigPoly = field(default_factory=TrigPoly)
    angle: TrigPoly = field(default_factory=TrigPoly)
    dim = 2

    def _eval_coords(self, coords):
        s = np.exp(self.log_scale(coords))
        th = self.angle(coords)
        c, sn = np.cos(th), np.sin(th)
        out = np.empty((coords.shape[0], 2, 2))
        out[:, 0, 0] = s * c
        out[:, 0, 1] = -s * sn
        out[:, 1, 0] = s * sn
        out[:, 1, 1] = s * c
        return out


@dataclass(frozen=True)
class BlockDiagonal(CocycleSpec):
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dim(self):
        return sum(b.dim for b in self.blocks)

    def orbit_matrices(self, dyn, point, n0, n1):
        n = n1 - n0
        out = np.zeros((max(n, 0), self.dim, self.dim))
        lo = 0
        for b in self.blocks:
            hi = lo + b.dim
            out[:, lo:hi, lo:hi] = b.orbit_matrices(dyn, point, n0, n1)
            lo = hi
        return out


@dataclass(frozen=True)
class Scaled(CocycleSpec):
    """exp(log_scale(x)) times an inner cocycle."""

    log_scale: TrigPoly
    inner: CocycleSpec

    @property
    def dim(self):
        return self.inner.dim

    def orbit_matrices(self, dyn, point, n0, n1):
        stack = self.inner.orbit_matrices(dyn, point, n0, n1)
        s = np.exp(self.log_scale(dyn.embed_orbit(point, n0, n1)))
        return s[:, None, None] * stack


@dataclass(frozen=True)
class Conjugated(CocycleSpec):
    """M A(omega) M^{-1} for a fixed invertible M (skewed test cocycles)."""

    mat: np.ndarray
    inner: CocycleSpec

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=np.float64)
        object.__setattr__(self, "mat", m)
        object.__setattr__(self, "_inv", linalg.invert(m, DET_FLOOR))

    @property
    def dim(self):
        return self.inner.dim

    def orbit_matrices(self, dyn, point, n0, n1):
        stack = self.inner.orbit_matrices(dyn, point, n0, n1)
        return self.mat @ stack @ self._inv


def evaluate(spec, dyn, point):
    """A(omega), guaranteed invertible."""
    return spec.matrix(dyn, point)


@dataclass(frozen=True)
class ScaledProduct:
    """A product A^n(omega) stored as exp(log_scale) * matrix, |matrix| = 1."""

    matrix: np.ndarray
    log_scale: float

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), 0.0)

    @property
    def log_norm(self):
        return self.log_scale

    @property
    def log_mininorm(self):
        return self.log_scale + math.log(linalg.mininorm(self.matrix))

    def dense(self):
        """exp(log_scale) * matrix; may overflow for long products."""
        return math.exp(self.log_scale) * self.matrix


def _unit_opnorm(partials, logs):
    """Rescale unit-Frobenius partials to unit operator norm."""
    ops = np.linalg.svd(partials, compute_uv=False)[:, 0]
    return partials / ops[:, None, None], logs + np.log(ops)


def scaled_partials(spec, dyn, point, ks, forward=True):
    """Scaled products A^{+-k}(omega) at the (sorted) positive indices ks.

    Forward: A^k(omega).  Backward: A^{-k}(omega), built from inverted
    generators along the backward orbit.  Matrices come back with unit
    operator norm, so the log is exactly log |A^{+-k}|.
    """
    ks = np.asarray(ks, dtype=np.int64)
    kmax = int(ks[-1])
    if forward:
        mats = spec.orbit_matrices(dyn, point, 0, kmax)
    else:
        gens = spec.orbit_matrices(dyn, point, -kmax, 0)
        mats = np.linalg.inv(gens[::-1])
    partials, logs = chain_scaled_partials(mats, want=ks)
    return _unit_opnorm(partials, logs)


def product(spec, dyn, point, n):
    """A^n(omega) in scaled form; n = 0 gives the identity at log scale 0."""
    if n == 0:
        return ScaledProduct.identity(spec.dim)
    partials, logs = scaled_partials(spec, dyn, point, [abs(n)], forward=n > 0)
    return ScaledProduct(partials[0], float(logs[0]))


def doubling_schedule(horizon):
    """1, 2, 4, ... capped at horizon, horizon appended."""
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    ks = []
    k = 1
    while k < horizon:
        ks.append(k)
        k *= 2
    ks.append(horizon)
    return np.array(ks, dtype=np.int64)


@dataclass(frozen=True)
class PeriodicExact:
    """Exact per-orbit exponents from the eigenvalues of A^p(omega)."""

    lambda_plus: float
    lambda_minus: float
    log_moduli: tuple
    period: int


@dataclass(frozen=True)
class ExponentReport:
    lambda_plus_upper: float  # best Fekete bound min_k a_k / k
    lambda_plus_est: float
    lambda_minus_lower: float  # best supra-additive bound max_k b_k / k
    lambda_minus_est: float
    horizon: int
    sample_count: int
    seed: int
    ks: np.ndarray
    a_k: np.ndarray  # max over samples of log |A^k|
    b_k: np.ndarray  # min over samples of log m(A^k)
    exact: Optional[PeriodicExact] = None

    def __post_init__(self):
        if self.lambda_minus_est > self.lambda_plus_est + 1e-12:
            raise InvalidInputError("exponent estimates out of order")


def periodic_exact_exponents(spec, dyn, point=0):
    """lambda(+-) of the orbit measure: (1/p) log moduli of eig(A^p)."""
    p = dyn.period
    prod = product(spec, dyn, point, p)
    eigs = np.linalg.eigvals(prod.matrix)
    log_moduli = np.sort(np.log(np.abs(eigs)) + prod.log_scale)[::-1]
    return PeriodicExact(
        lambda_plus=float(log_moduli[0] / p),
        lambda_minus=float(log_moduli[-1] / p),
        log_moduli=tuple(float(x) for x in log_moduli),
        period=p,
    )


def estimate_exponents(spec, dyn, horizon, samples, seed, schedule=None):
    """Finite-horizon lambda(+-) data with Fekete one-sided bounds.

    a_k = max over sampled points of log |A^k| is subadditive up to sampling
    error, so min_k a_k / k upper-bounds lambda_plus; the mininorm mirror
    lower-bounds lambda_minus.  Over a PeriodicOrbit the estimates are
    replaced by the exact per-orbit eigenvalue data.
    """
    if horizon < 2:
        raise InvalidInputError("horizon must be >= 2")
    if samples < 1:
        raise InvalidInputError("samples must be >= 1")
    ks = doubling_schedule(horizon) if schedule is None else np.asarray(schedule, dtype=np.int64)
    points = dyn.sample_points(samples, seed)
    log_norms = np.empty((len(points), len(ks)))
    log_minis = np.empty((len(points), len(ks)))
    for i, pt in enumerate(points):
        partials, logs = scaled_partials(spec, dyn, pt, ks)
        smin = np.linalg.svd(partials, compute_uv=False)[:, -1]
        log_norms[i] = logs
        log_minis[i] = logs + np.log(smin)
    a_k = log_norms.max(axis=0)
    b_k = log_minis.min(axis=0)
    fekete_upper = float((a_k / ks).min())
    fekete_lower = float((b_k / ks).max())
    lam_plus = float(a_k[-1] / ks[-1])
    lam_minus = float(b_k[-1] / ks[-1])
    exact = None
    if getattr(dyn, "kind", None) == "periodic":
        exact = periodic_exact_exponents(spec, dyn)
        lam_plus, lam_minus = exact.lambda_plus, exact.lambda_minus
    return ExponentReport(
        lambda_plus_upper=fekete_upper,
        lambda_plus_est=lam_plus,
        lambda_minus_lower=fekete_lower,
        lambda_minus_est=lam_minus,
        horizon=int(ks[-1]),
        sample_count=len(points),
        seed=seed,
        ks=ks,
        a_k=a_k,
        b_k=b_k,
        exact=exact,
    )


@dataclass(frozen=True)
class BoundednessDiagnostic:
    """Extremes of |A^k| and m(A^k) over samples and both time directions."""

    sup_norm: float
    inf_mininorm: float
    log_sup_norm: float
    log_inf_mininorm: float


def product_bounded_diagnostic(spec, dyn, horizon, samples, seed):
    """max |A^k| and min m(A^k) for |k| <= horizon over sampled points.

    The caller interprets boundedness; linear values may overflow to inf for
    strongly unbounded cocycles, so the logs are reported as well.
    """
    ks = np.arange(1, horizon + 1, dtype=np.int64)
    log_sup, log_inf = 0.0, 0.0  # k = 0 contributes the identity
    for pt in dyn.sample_points(samples, seed):
        for forward in (True, False):
            partials, logs = scaled_partials(spec, dyn, pt, ks, forward=forward)
            smin = np.linalg.svd(partials, compute_uv=False)[:, -1]
            log_sup = max(log_sup, float(logs.max()))
            log_inf = min(log_inf, float((logs + np.log(smin)).min()))
    with np.errstate(over="ignore"):
        return BoundednessDiagnostic(
            sup_norm=float(np.exp(log_sup)),
            inf_mininorm=float(np.exp(log_inf)),
            log_sup_norm=log_sup,
            log_inf_mininorm=log_inf,
        )
