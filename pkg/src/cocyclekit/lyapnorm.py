"""Truncated Lyapunov inner products as Gram-matrix fields.

R(omega) = sum over |n| <= N of exp(-2 eps |n|) (A^n)^T A^n, built from
scaled chain partials so no intermediate can overflow.  The truncation is
either fixed or adaptive (stop once the latest term is below tau times the
partial sum's smallest eigenvalue); the last included term's norm is recorded
as a tail proxy.  The proxy is heuristic, never silently trusted: it is
carried into every downstream slack computation and surfaced in reports.
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from cocyclekit import linalg
from cocyclekit._kernels import chain_scaled_partials
from cocyclekit.errors import InvalidInputError, SeriesDivergenceError

#: Steps processed per kernel call in adaptive mode.
ADAPTIVE_BLOCK = 32
#: Consecutive non-decreasing term norms that trigger the divergence error.
DIVERGENCE_WINDOW = 50
#: Hard cap on adaptive terms (protects epsilon barely above the exponent).
MAX_ADAPTIVE_TERMS = 50_000


@dataclass(frozen=True)
class Fixed:
    n: int


@dataclass(frozen=True)
class Adaptive:
    tau: float = 1e-8


@dataclass(frozen=True)
class NormConfig:
    """epsilon and truncation policy for the Lyapunov inner product."""

    epsilon: float
    truncation: Union[Fixed, Adaptive] = Adaptive()
    guard: float = linalg.POSITIVITY_RTOL

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise InvalidInputError("epsilon must be > 0")
        if isinstance(self.truncation, Fixed) and self.truncation.n < 1:
            raise InvalidInputError("fixed truncation needs N >= 1")
        if isinstance(self.truncation, Adaptive) and not 0.0 < self.truncation.tau < 1.0:
            raise InvalidInputError("adaptive tau must lie in (0, 1)")


@dataclass(frozen=True)
class MetricSample:
    """Positive Gram matrix of the Lyapunov inner product at one base point."""

    point: object
    gram: np.ndarray
    truncation_used: int
    tail_bound: float
    min_eig: float = None

    def __post_init__(self):
        gram = linalg.symmetrize(self.gram)
        w = np.linalg.eigvalsh(gram)
        if w[0] <= linalg.POSITIVITY_RTOL * w[-1]:
            raise InvalidInputError(f"gram matrix not positive definite (min eig {w[0]:.3e})")
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "min_eig", float(w[0]))

    def norm(self, v):
        """Lyapunov norm of v at this point."""
        v = np.asarray(v, dtype=np.float64)
        return math.sqrt(float(v @ self.gram @ v))

    def geometric_tail(self, epsilon):
        """Geometric extrapolation of the discarded tail from the last term."""
        r = math.exp(-2.0 * epsilon)
        return self.tail_bound * r / (1.0 - r)


class _ChainState:
    """Continuation state of one renormalized product chain."""

    def __init__(self, d):
        self.mat = np.eye(d)
        self.log = 0.0

    def extend(self, gens, want):
        partials, logs = chain_scaled_partials(gens, want=want, init=self.mat, init_log=self.log)
        self.mat = partials[-1].copy()
        self.log = float(logs[-1])
        return partials, logs


def _series(spec, dyn, cfg, point):
    """Accumulate the two-sided weighted Gram series at one point."""
    d = spec.dim
    eps = cfg.epsilon
    adaptive = isinstance(cfg.truncation, Adaptive)
    tau = cfg.truncation.tau if adaptive else None
    n_max = MAX_ADAPTIVE_TERMS if adaptive else cfg.truncation.n

    gram = np.eye(d)  # the n = 0 term
    fwd, bwd = _ChainState(d), _ChainState(d)
    n_done = 0
    prev_norm = math.inf
    nondecreasing = 0

    while n_done < n_max:
        nb = min(ADAPTIVE_BLOCK, n_max - n_done)
        want = np.arange(1, nb + 1, dtype=np.int64)
        fwd_gens = spec.orbit_matrices(dyn, point, n_done, n_done + nb)
        bwd_gens = np.linalg.inv(spec.orbit_matrices(dyn, point, -(n_done + nb), -n_done)[::-1])
        fp, fl = fwd.extend(fwd_gens, want)
        bp, bl = bwd.extend(bwd_gens, want)

        nvals = np.arange(n_done + 1, n_done + nb + 1, dtype=np.float64)
        args = np.stack([2.0 * (fl - eps * nvals), 2.0 * (bl - eps * nvals)])
        if np.any(args > 700.0):
            raise SeriesDivergenceError(
                "Lyapunov series term overflow: growth exceeds epsilon "
                f"(epsilon = {eps}); increase epsilon"
            )
        wf, wb = np.exp(args)
        terms = wf[:, None, None] * np.einsum("nji,njk->nik", fp, fp)
        terms += wb[:, None, None] * np.einsum("nji,njk->nik", bp, bp)
        svf = np.linalg.svd(fp, compute_uv=False)[:, 0]
        svb = np.linalg.svd(bp, compute_uv=False)[:, 0]
        term_norms = np.maximum(wf * svf**2, wb * svb**2)

        cums = gram[None, :, :] + np.cumsum(terms, axis=0)
        min_eigs = np.linalg.eigvalsh(cums)[:, 0]

        for i in range(nb):
            if term_norms[i] >= prev_norm:
                nondecreasing += 1
                if nondecreasing >= DIVERGENCE_WINDOW:
                    raise SeriesDivergenceError(
                        f"term norms non-decreasing over {DIVERGENCE_WINDOW} consecutive "
                        f"terms at |n| = {n_done + i + 1}; epsilon = {eps} is too small "
                        "for this cocycle's growth"
                    )
            else:
                nondecreasing = 0
            prev_norm = term_norms[i]
            if adaptive and term_norms[i] <= tau * min_eigs[i]:
                return cums[i], n_done + i + 1, float(term_norms[i])

        gram = cums[-1]
        n_done += nb

    if adaptive:
        raise SeriesDivergenceError(
            f"no convergence within {MAX_ADAPTIVE_TERMS} terms; increase epsilon"
        )
    return gram, n_done, float(term_norms[-1])


def gram_r(spec, dyn, cfg, point):
    """Gram matrix R(omega) of the Lyapunov inner product at omega."""
    gram, n_used, tail = _series(spec, dyn, cfg, point)
    sample = MetricSample(point=point, gram=gram, truncation_used=n_used, tail_bound=tail)
    if sample.min_eig < 1.0 - 1e-12:
        raise InvalidInputError(
            f"R(omega) lost its n = 0 floor: min eig {sample.min_eig} < 1"
        )
    return sample


def gram_q(spec, dyn, cfg, point):
    """Pushforward Gram matrix Q(omega) = A(omega)^T R(F omega) A(omega)."""
    a = spec.matrix(dyn, point)
    r_next = gram_r(spec, dyn, cfg, dyn.iterate(point, 1))
    q = a.T @ r_next.gram @ a
    tail = float(np.linalg.norm(a, 2) ** 2 * r_next.tail_bound)
    return MetricSample(
        point=point,
        gram=0.5 * (q + q.T),
        truncation_used=r_next.truncation_used,
        tail_bound=tail,
    )


@dataclass(frozen=True)
class AlmostInvariance:
    """Result of the sandwich exp(-2 eps) R < Q < exp(2 eps) R."""

    holds: bool
    lower_margin: float  # min eig of Q - exp(-2 eps) R
    upper_margin: float  # min eig of exp(2 eps) R - Q


def check_almost_invariance(r, q, epsilon):
    """Loewner sandwich check with strictness margins."""
    if r.gram.shape != q.gram.shape:
        raise InvalidInputError("R and Q dimensions differ")
    lower = linalg.loewner_less(math.exp(-2.0 * epsilon) * r.gram, q.gram)
    upper = linalg.loewner_less(q.gram, math.exp(2.0 * epsilon) * r.gram)
    return AlmostInvariance(
        holds=bool(lower.holds and upper.holds),
        lower_margin=lower.margin,
        upper_margin=upper.margin,
    )


def kappa(epsilon, n):
    """Closed form of the isometric-cocycle gram factor 1 + 2 sum e^(-2 eps j)."""
    q = math.exp(-2.0 * epsilon)
    return 1.0 + 2.0 * q * (1.0 - q**n) / (1.0 - q)


def common_fixed_truncation(spec, dyn, cfg, probe_point):
    """Strict-mode helper: freeze the adaptive truncation at one probe point."""
    if isinstance(cfg.truncation, Fixed):
        return cfg
    probe = gram_r(spec, dyn, cfg, probe_point)
    return NormConfig(epsilon=cfg.epsilon, truncation=Fixed(probe.truncation_used), guard=cfg.guard)
