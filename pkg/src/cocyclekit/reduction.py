"""Metric-preserving perturbation and isometric conjugates.

Per sampled point: solve P^T Q P = R for the unique positive P by
P = Q^{-1/2} (Q^{1/2} R Q^{1/2})^{1/2} Q^{-1/2}, perturb A to A P (which
preserves the Lyapunov inner product), and form the conjugates
B = R(F omega)^{1/2} A R(omega)^{-1/2} (near-isometric) and
U = R(F omega)^{1/2} (A P) R(omega)^{-1/2} (isometric up to residuals).
Spectral containments carry a slack derived from the recorded Gram tail
bounds; only the positive solution of the invariance equation is ever
computed (the equation has infinitely many non-positive ones).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from cocyclekit import linalg, lyapnorm, util
from cocyclekit.cocycle import estimate_exponents
from cocyclekit.errors import (
    DefectExceededError,
    HypothesisWarning,
    ResidualExceededError,
)

DEFAULT_RESIDUAL_TOL = 1e-10
DEFAULT_DEFECT_TOL = 1e-8
#: Random directions per point used for metric-preservation spot checks.
CHECK_VECTORS = 8


def solve_positive(q, r, guard=linalg.POSITIVITY_RTOL):
    """Unique positive P with P^T Q P = R, for positive definite Q, R."""
    q_half = linalg.psd_power(q, 0.5, guard=guard)
    q_inv_half = linalg.psd_power(q, -0.5, guard=guard)
    core = linalg.psd_sqrt(q_half @ r @ q_half, guard=guard)
    p = q_inv_half @ core @ q_inv_half
    return 0.5 * (p + p.T)


def invariance_residual(p, q, r):
    """|P^T Q P - R| / |R| in operator norm."""
    return float(np.linalg.norm(p.T @ q @ p - r, 2) / np.linalg.norm(r, 2))


@dataclass(frozen=True)
class PointReduction:
    """Everything Theorem 1 produces at a single base point."""

    point: object
    a: np.ndarray
    r: lyapnorm.MetricSample       # R(omega)
    r_next: lyapnorm.MetricSample  # R(F omega)
    q: lyapnorm.MetricSample       # A^T R(F omega) A
    p: np.ndarray
    a_tilde: np.ndarray
    residual: float
    slack: float                   # relative spectral slack from gram tails
    p_eigs: np.ndarray


@dataclass(frozen=True)
class ReductionResult:
    epsilon: float
    seed: int
    points: tuple
    perturbation_size: float       # max |A - A_tilde|
    p_spectrum_range: tuple        # (min, max) eigenvalue over all P
    invariance_residual: float     # max relative residual
    preservation_defect: float     # max | |||A~ v||| / |||v||| - 1 |
    slack: float                   # max per-point slack
    max_norm_a: float

    def perturbation_bound(self):
        """Proof bound (e^eps - 1) sup |A|, plus the tail slack."""
        base = (math.exp(self.epsilon) - 1.0) * self.max_norm_a
        return base + self.slack * math.exp(self.epsilon) * self.max_norm_a

    def p_containment(self):
        """Target interval for eigenvalues of P with multiplicative slack."""
        return (
            math.exp(-self.epsilon) * (1.0 - self.slack),
            math.exp(self.epsilon) * (1.0 + self.slack),
        )


def _hypothesis_check(spec, dyn, cfg, seed):
    report = estimate_exponents(spec, dyn, horizon=128, samples=4, seed=seed)
    worst = max(abs(report.lambda_plus_est), abs(report.lambda_minus_est))
    if worst >= cfg.epsilon:
        warnings.warn(
            f"estimated exponents reach {worst:.3g} >= epsilon = {cfg.epsilon}; "
            "the Lyapunov series may diverge (subexponential-growth hypothesis "
            "is the caller's responsibility)",
            HypothesisWarning,
            stacklevel=3,
        )


def reduce_cocycle(spec, dyn, cfg, samples, seed, residual_tol=DEFAULT_RESIDUAL_TOL,
                   check_hypothesis=True, strict=False):
    """Metric-preserving perturbation A -> A P at sampled points.

    Verifies the per-point invariance residual against residual_tol and
    aggregates perturbation size, P spectrum and preservation defect.
    """
    if check_hypothesis:
        _hypothesis_check(spec, dyn, cfg, seed)
    points = dyn.sample_points(samples, seed)
    if strict:
        cfg = lyapnorm.common_fixed_truncation(spec, dyn, cfg, points[0])
    d = spec.dim

    def reduce_point(item):
        idx, pt = item
        a = spec.matrix(dyn, pt)
        r = lyapnorm.gram_r(spec, dyn, cfg, pt)
        r_next = lyapnorm.gram_r(spec, dyn, cfg, dyn.iterate(pt, 1))
        q_mat = a.T @ r_next.gram @ a
        q = lyapnorm.MetricSample(
            point=pt,
            gram=0.5 * (q_mat + q_mat.T),
            truncation_used=r_next.truncation_used,
            tail_bound=float(np.linalg.norm(a, 2) ** 2 * r_next.tail_bound),
        )
        p = solve_positive(q.gram, r.gram, guard=cfg.guard)
        residual = invariance_residual(p, q.gram, r.gram)
        a_tilde = a @ p
        tails = r.geometric_tail(cfg.epsilon) + q.geometric_tail(cfg.epsilon)
        slack = tails / min(r.min_eig, q.min_eig)
        defect = 0.0
        for v in util.point_rng(seed, 0xC0C, idx).normal(size=(CHECK_VECTORS, d)):
            ratio = r_next.norm(a_tilde @ v) / r.norm(v)
            defect = max(defect, abs(ratio - 1.0))
        return defect, PointReduction(
            point=pt, a=a, r=r, r_next=r_next, q=q, p=p, a_tilde=a_tilde,
            residual=residual, slack=slack, p_eigs=np.linalg.eigvalsh(p),
        )

    results = util.parallel_map(reduce_point, enumerate(points))
    preservation = max(defect for defect, _ in results)
    reductions = [pr for _, pr in results]
    worst = max(reductions, key=lambda pr: pr.residual)
    if worst.residual > residual_tol:
        raise ResidualExceededError(
            f"invariance residual {worst.residual:.3e} > {residual_tol:.1e} "
            f"at point {worst.point}",
            worst_point=worst.point,
            residual=worst.residual,
        )
    return ReductionResult(
        epsilon=cfg.epsilon,
        seed=seed,
        points=tuple(reductions),
        perturbation_size=max(float(np.linalg.norm(pr.a - pr.a_tilde, 2)) for pr in reductions),
        p_spectrum_range=(
            min(float(pr.p_eigs[0]) for pr in reductions),
            max(float(pr.p_eigs[-1]) for pr in reductions),
        ),
        invariance_residual=worst.residual,
        preservation_defect=preservation,
        slack=max(pr.slack for pr in reductions),
        max_norm_a=max(float(np.linalg.norm(pr.a, 2)) for pr in reductions),
    )


@dataclass(frozen=True)
class NearIsometryResult:
    """Conjugates B = R(F omega)^{1/2} A R(omega)^{-1/2} and their singular range."""

    epsilon: float
    points: tuple
    b_mats: tuple
    sv_range: tuple  # (min, max) singular value over all points
    slack: float

    def sv_containment(self):
        """Target interval (e^-eps - s, e^eps + s), additive tail slack."""
        s = self.slack * math.exp(self.epsilon)
        return (math.exp(-self.epsilon) - s, math.exp(self.epsilon) + s)


def conjugate_near_isometry(spec, dyn, cfg, samples, seed, check_hypothesis=True):
    """Theorem-2(1) conjugates; all singular values should be e^{+-eps}-close to 1."""
    if check_hypothesis:
        _hypothesis_check(spec, dyn, cfg, seed)
    points = dyn.sample_points(samples, seed)
    b_mats, svs, slack = [], [], 0.0
    for pt in points:
        a = spec.matrix(dyn, pt)
        r = lyapnorm.gram_r(spec, dyn, cfg, pt)
        r_next = lyapnorm.gram_r(spec, dyn, cfg, dyn.iterate(pt, 1))
        b = linalg.psd_sqrt(r_next.gram, cfg.guard) @ a @ linalg.psd_power(r.gram, -0.5, cfg.guard)
        b_mats.append(b)
        svs.append(np.linalg.svd(b, compute_uv=False))
        tails = r.geometric_tail(cfg.epsilon) + r_next.geometric_tail(cfg.epsilon)
        slack = max(slack, tails / min(r.min_eig, r_next.min_eig))
    svs = np.concatenate(svs)
    return NearIsometryResult(
        epsilon=cfg.epsilon,
        points=tuple(points),
        b_mats=tuple(b_mats),
        sv_range=(float(svs.min()), float(svs.max())),
        slack=slack,
    )


@dataclass(frozen=True)
class IsometryResult:
    """Exactly-isometric conjugates U of the perturbed cocycle."""

    points: tuple
    u_mats: tuple
    defects: tuple
    max_defect: float
    det_mods: tuple  # |det U| per point


def isometric_conjugate(result, cfg, defect_tol=DEFAULT_DEFECT_TOL):
    """U = R(F omega)^{1/2} A_tilde R(omega)^{-1/2} from a ReductionResult.

    U^T U = R^{-1/2} (P^T Q P) R^{-1/2} collapses to the identity when the
    invariance equation holds, so the orthogonality defect is gated at
    defect_tol plus the recorded truncation slack.
    """
    u_mats, defects, det_mods = [], [], []
    for pr in result.points:
        u = (
            linalg.psd_sqrt(pr.r_next.gram, cfg.guard)
            @ pr.a_tilde
            @ linalg.psd_power(pr.r.gram, -0.5, cfg.guard)
        )
        u_mats.append(u)
        defects.append(linalg.orthogonality_defect(u))
        det_mods.append(abs(float(np.linalg.det(u))))
    max_defect = max(defects)
    worst = result.points[int(np.argmax(defects))]
    if max_defect > defect_tol + result.slack:
        raise DefectExceededError(
            f"orthogonality defect {max_defect:.3e} > {defect_tol:.1e} + slack "
            f"{result.slack:.1e} at point {worst.point}",
            worst_point=worst.point,
            defect=max_defect,
        )
    return IsometryResult(
        points=tuple(pr.point for pr in result.points),
        u_mats=tuple(u_mats),
        defects=tuple(float(x) for x in defects),
        max_defect=float(max_defect),
        det_mods=tuple(det_mods),
    )
