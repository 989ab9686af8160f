"""Finest dominated splittings and block-conformal perturbations.

Domination is detected by the growth rate of singular-value gaps of long
products (a slope fit with a floor, the standard numerical surrogate for the
asymptotic definition).  Bundles are estimated from singular directions of
window products, the cocycle is restricted to each bundle along orthonormal
frames, a per-bundle Lyapunov metric adapted to the splitting is built, and
each restricted cocycle is conformalized with a constant factor (uniquely
ergodic base) or with the determinant-derived function (minimal base).
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cocyclekit import linalg
from cocyclekit._kernels import chain_scaled_partials
from cocyclekit.cocycle import CocycleSpec, Scaled, TrigPoly, scaled_partials
from cocyclekit.conformal import conformalize_constant, conformalize_function
from cocyclekit.errors import (
    AdaptedMetricError,
    DegenerateGeneratorError,
    IncreaseHorizonError,
    InvalidInputError,
)
from cocyclekit.lyapnorm import NormConfig, gram_r

#: Fitted log-gap growth (nats/step) above which an index counts as dominated.
SLOPE_THRESHOLD = 0.02
#: Max principal angle tolerated between A(omega) V_i(omega) and V_i(F omega).
ANGLE_TOL = 1e-6
#: Bundle-estimation horizon targets a predicted singular ratio of this size.
TARGET_RATIO = 1e6
#: Guard against log(0) when slow singular values underflow at long horizons.
_LOG_FLOOR = 1e-300


def default_horizons(limit=128):
    """Doubling horizon schedule 1, 2, 4, ..., capped at limit."""
    ks = []
    k = 1
    while k <= limit:
        ks.append(k)
        k *= 2
    return np.array(ks, dtype=np.int64)


@dataclass(frozen=True)
class GapProfile:
    """Singular-gap growth data sigma_i / sigma_{i+1} over a horizon schedule."""

    horizons: np.ndarray
    log_min_ratios: np.ndarray  # (d - 1, len(horizons)); min over samples
    slopes: np.ndarray          # fitted nats/step per index
    intercepts: np.ndarray
    threshold: float

    @property
    def dominated(self):
        return self.slopes > self.threshold

    def cuts(self):
        """1-based dominated indices; the cut positions of the partition."""
        return tuple(int(i) + 1 for i in np.nonzero(self.dominated)[0])

    def predicted_horizon(self):
        """Smallest n at which every dominated gap should reach TARGET_RATIO."""
        cuts = np.nonzero(self.dominated)[0]
        if cuts.size == 0:
            return int(self.horizons[-1])
        need = (math.log(TARGET_RATIO) - self.intercepts[cuts]) / self.slopes[cuts]
        return int(max(8, math.ceil(float(need.max()))))


def gap_profile(spec, dyn, horizons, samples, seed, threshold=SLOPE_THRESHOLD):
    """Minimum singular-value gap ratios of A^n over sampled points.

    The ratios are scale-invariant, so the renormalized chain partials can be
    used directly; slopes are least-squares fits over the largest half of the
    schedule to discard transients.
    """
    horizons = np.asarray(horizons, dtype=np.int64)
    if horizons.size < 2 or np.any(np.diff(horizons) <= 0):
        raise InvalidInputError("horizons must be increasing with at least 2 entries")
    d = spec.dim
    points = dyn.sample_points(samples, seed)
    log_ratios = np.full((len(points), d - 1, horizons.size), np.inf)
    for ip, pt in enumerate(points):
        partials, _ = scaled_partials(spec, dyn, pt, horizons)
        svals = np.linalg.svd(partials, compute_uv=False)
        logs = np.log(np.maximum(svals, _LOG_FLOOR))
        log_ratios[ip] = (logs[:, :-1] - logs[:, 1:]).T
    log_min = log_ratios.min(axis=0)
    half = horizons[horizons.size // 2 :].astype(np.float64)
    fits = [np.polyfit(half, row[horizons.size // 2 :], 1) for row in log_min]
    slopes = np.array([f[0] for f in fits]) if fits else np.empty(0)
    intercepts = np.array([f[1] for f in fits]) if fits else np.empty(0)
    return GapProfile(
        horizons=horizons,
        log_min_ratios=log_min,
        slopes=slopes,
        intercepts=intercepts,
        threshold=threshold,
    )


def _dims_from_cuts(d, cuts):
    bounds = (0,) + tuple(cuts) + (d,)
    if any(b <= a for a, b in zip(bounds, bounds[1:])):
        raise InvalidInputError(f"invalid cut positions {cuts} for dimension {d}")
    return tuple(b - a for a, b in zip(bounds, bounds[1:]))


def _point_key(point):
    if isinstance(point, np.ndarray):
        return point.tobytes()
    return point


class BundleFrameField:
    """Per-point orthonormal frames of the estimated invariant bundles.

    The fast bundle of rank r at omega is spanned by the top-r left singular
    vectors of A^N(F^{-N} omega); the slow bundle of corank r by the bottom
    right singular vectors of A^N(omega); middle bundles are intersections of
    the two, taken along principal directions.  Frames are canonicalized so
    reports are deterministic.  Results are cached by point.
    """

    def __init__(self, spec, dyn, cuts, horizon):
        self.spec = spec
        self.dyn = dyn
        self.cuts = tuple(cuts)
        self.horizon = int(horizon)
        self.dims = _dims_from_cuts(spec.dim, self.cuts)
        self._cache = {}

    def frames(self, point):
        key = _point_key(point)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._compute(point)
            if len(self._cache) > 65536:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def _compute(self, point):
        d = self.spec.dim
        if not self.cuts:
            return (np.eye(d),)
        fwd, _ = scaled_partials(self.spec, self.dyn, point, [self.horizon])
        past_gens = self.spec.orbit_matrices(self.dyn, point, -self.horizon, 0)
        past, _ = chain_scaled_partials(past_gens)
        u_fast = np.linalg.svd(past[0])[0]
        v_slow = np.linalg.svd(fwd[0])[2].T
        frames = []
        r_prev = 0
        for di in self.dims:
            r_i = r_prev + di
            fast = u_fast[:, :r_i]
            if r_prev == 0:
                core = fast
            else:
                slow = v_slow[:, r_prev:]
                w = np.linalg.svd(fast.T @ slow)[0]
                core = fast @ w[:, :di]
            frames.append(linalg.canonicalize_frame(linalg.orthonormalize(core)))
            r_prev = r_i
        return tuple(frames)


@dataclass(frozen=True)
class BundleEstimate:
    points: tuple
    frames: tuple             # per point: tuple of (d, d_i) orthonormal frames
    defects: np.ndarray       # (n_points, k) invariance principal angles
    max_defect: float
    min_transversality: Optional[float]  # smallest angle between distinct bundles


def _estimate_with_field(field, points, angle_tol):
    spec, dyn = field.spec, field.dyn
    k = len(field.dims)
    all_frames, defects = [], np.empty((len(points), k))
    transversality = math.inf if k > 1 else None
    for ip, pt in enumerate(points):
        frames = field.frames(pt)
        frames_next = field.frames(dyn.iterate(pt, 1))
        a = spec.matrix(dyn, pt)
        for i, (f, fn) in enumerate(zip(frames, frames_next)):
            image = linalg.orthonormalize(a @ f)
            defects[ip, i] = linalg.subspace_angle(image, fn)
        for i in range(k):
            for j in range(i + 1, k):
                transversality = min(
                    transversality, linalg.min_principal_angle(frames[i], frames[j])
                )
        all_frames.append(frames)
    max_defect = float(defects.max())
    if max_defect > angle_tol:
        ip, i = np.unravel_index(np.argmax(defects), defects.shape)
        raise IncreaseHorizonError(
            f"bundle {i + 1} invariance defect {max_defect:.3e} > {angle_tol:.1e} at "
            f"point {points[ip]}; the singular gap at horizon {field.horizon} is "
            "insufficient - increase the bundle-estimation horizon"
        )
    return BundleEstimate(
        points=tuple(points),
        frames=tuple(all_frames),
        defects=defects,
        max_defect=max_defect,
        min_transversality=transversality,
    )


def estimate_bundles(spec, dyn, cuts, horizon, samples, seed, angle_tol=ANGLE_TOL):
    """Frames of the invariant bundles for the given cut positions.

    Raises IncreaseHorizonError when the invariance defect exceeds angle_tol
    (the ground-truth gate; the horizon heuristic is only a default).
    """
    field = BundleFrameField(spec, dyn, cuts, horizon)
    points = dyn.sample_points(samples, seed)
    return _estimate_with_field(field, points, angle_tol)


@dataclass(frozen=True)
class RestrictedCocycle(CocycleSpec):
    """The cocycle compressed to one estimated bundle: F_i(F w)^T A(w) F_i(w)."""

    field: BundleFrameField
    bundle: int

    @property
    def dim(self):
        return self.field.dims[self.bundle]

    def orbit_matrices(self, dyn, point, n0, n1):
        n = n1 - n0
        out = np.empty((max(n, 0), self.dim, self.dim))
        if n <= 0:
            return out
        f_cur = self.field.frames(dyn.iterate(point, n0))[self.bundle]
        for idx, j in enumerate(range(n0, n1)):
            pt = dyn.iterate(point, j)
            f_next = self.field.frames(dyn.iterate(point, j + 1))[self.bundle]
            out[idx] = f_next.T @ self.field.spec.matrix(dyn, pt) @ f_cur
            f_cur = f_next
        if np.any(np.abs(np.linalg.det(out)) < 1e-12):
            raise DegenerateGeneratorError("restricted block near singular")
        return out


def restrict(spec, dyn, cuts, horizon, point, field=None):
    """Per-bundle matrices A_i(omega) plus projection residuals.

    The residual |A F_i - proj(A F_i)| / |A F_i| equals the sine of the
    invariance defect and is recorded alongside the blocks.
    """
    if field is None:
        field = BundleFrameField(spec, dyn, cuts, horizon)
    frames = field.frames(point)
    frames_next = field.frames(dyn.iterate(point, 1))
    a = spec.matrix(dyn, point)
    blocks, residuals = [], []
    for f, fn in zip(frames, frames_next):
        image = a @ f
        proj = fn @ (fn.T @ image)
        residuals.append(
            float(np.linalg.norm(image - proj, 2) / np.linalg.norm(image, 2))
        )
        blocks.append(fn.T @ image)
    return tuple(blocks), tuple(residuals)


@dataclass(frozen=True)
class AdaptedMetric:
    """Per-bundle Gram fields in which domination holds in a single step."""

    epsilons: tuple            # epsilon used per bundle
    grams: tuple               # per point: tuple over bundles of (G_i(w), G_i(Fw))
    margins: tuple             # per cut: min over points of m(A_i) / |A_{i+1}|
    tries: int


def _adapted_norms(g_cur, g_next, block, guard):
    m = linalg.psd_sqrt(g_next.gram, guard) @ block @ linalg.psd_power(g_cur.gram, -0.5, guard)
    s = np.linalg.svd(m, compute_uv=False)
    return float(s[-1]), float(s[0])


def _mean_det_rate(restricted, dyn, point, steps=256):
    """Birkhoff estimate of the bundle's mean rate (1/d_i) int log |det A_i|.

    Exact over one period on periodic bases.
    """
    if getattr(dyn, "kind", None) == "periodic":
        steps = dyn.period
    gens = restricted.orbit_matrices(dyn, point, 0, steps)
    _, logdets = np.linalg.slogdet(gens)
    return float(logdets.sum() / (steps * restricted.dim))


def adapted_metric(field, points, blocks_per_point, slopes, cfg, max_tries=4):
    """Build per-bundle Lyapunov metrics until one-step domination holds.

    Each bundle gets the Lyapunov metric of its restriction, neutralized by
    the constant mean rate so the series converges; the exponentially
    weighted sum then absorbs pointwise rate fluctuations as a coboundary,
    which is what makes one-step domination hold.  epsilon_i starts at c/4
    for the smallest adjacent fitted cut rate c, halving all epsilons until
    min over points of m(A_i)/|A_{i+1}| exceeds 1 on every cut (the theory
    guarantees existence; failure after max_tries surfaces the diagnostics
    rather than guessing further).
    """
    dims = field.dims
    k = len(dims)
    cut_rates = [float(slopes[c - 1]) for c in field.cuts]
    base_eps = []
    for i in range(k):
        adjacent = [r for r in (cut_rates[i - 1] if i > 0 else None,
                                cut_rates[i] if i < k - 1 else None) if r is not None]
        base_eps.append(min(adjacent) / 4.0)
    mean_rates = [
        _mean_det_rate(RestrictedCocycle(field, i), field.dyn, points[0])
        for i in range(k)
    ]
    attempts = []
    for t in range(max_tries):
        eps = tuple(e * 0.5**t for e in base_eps)
        gram_fields = []
        for i in range(k):
            spec_i = Scaled(TrigPoly(const=-mean_rates[i]), RestrictedCocycle(field, i))
            cfg_i = NormConfig(epsilon=eps[i], truncation=cfg.truncation, guard=cfg.guard)
            gram_fields.append(
                [
                    (
                        gram_r(spec_i, field.dyn, cfg_i, pt),
                        gram_r(spec_i, field.dyn, cfg_i, field.dyn.iterate(pt, 1)),
                    )
                    for pt in points
                ]
            )
        margins = []
        for c in range(k - 1):
            ratios = []
            for ip in range(len(points)):
                g_cur_i, g_next_i = gram_fields[c][ip]
                g_cur_j, g_next_j = gram_fields[c + 1][ip]
                mini, _ = _adapted_norms(g_cur_i, g_next_i, blocks_per_point[ip][c], cfg.guard)
                _, nrm = _adapted_norms(g_cur_j, g_next_j, blocks_per_point[ip][c + 1], cfg.guard)
                ratios.append(mini / nrm)
            margins.append(min(ratios))
        attempts.append({"epsilons": eps, "margins": tuple(margins)})
        if all(m > 1.0 for m in margins):
            grams = tuple(
                tuple(gram_fields[i][ip] for i in range(k)) for ip in range(len(points))
            )
            return AdaptedMetric(epsilons=eps, grams=grams, margins=tuple(margins), tries=t + 1)
    raise AdaptedMetricError(
        f"no adapted metric on the tested epsilon grid (last margins "
        f"{attempts[-1]['margins']}); tune the horizon or epsilon grid",
        diagnostics={"attempts": attempts},
    )


@dataclass(frozen=True)
class SplittingReport:
    """Everything the block-conformal pipelines produce and verify."""

    mode: str
    partition: tuple
    points: tuple
    frames: tuple
    invariance_defect: float
    min_transversality: Optional[float]
    blocks: tuple                     # per point: tuple of restricted generators
    lambdas: np.ndarray               # (k,) constants or (k, n_points) functions
    lambdas_adapted: Optional[np.ndarray]
    adapted_epsilons: Optional[tuple]
    adapted_margins: Optional[tuple]
    conformality_defects: tuple       # per bundle
    det_consistency: float            # max |sum_i log|det A_i| - log|det A||
    ordering_ok: bool
    gap: GapProfile
    assembled_grams: tuple            # block-orthogonal metric per point
    assembled_atilde: tuple           # perturbed generator per point
    conformal_results: tuple


def _assemble(frames, frames_next, block_grams, block_atildes):
    """Full-space metric and perturbed generator from per-bundle pieces.

    With the full frame Phi = [F_1 ... F_k]: the metric Phi^{-T} diag(G_i)
    Phi^{-1} makes the bundles orthogonal and restricts to G_i on each; the
    automorphism Phi(F w) diag(A~_i) Phi(w)^{-1} restricts to exactly A~_i.
    """
    phi = np.hstack(frames)
    phi_next = np.hstack(frames_next)
    d = phi.shape[0]
    gram_block = np.zeros((d, d))
    atilde_block = np.zeros((d, d))
    lo = 0
    for g, at in zip(block_grams, block_atildes):
        hi = lo + at.shape[0]
        gram_block[lo:hi, lo:hi] = g
        atilde_block[lo:hi, lo:hi] = at
        lo = hi
    phi_inv = np.linalg.inv(phi)
    gram = phi_inv.T @ gram_block @ phi_inv
    atilde = phi_next @ atilde_block @ phi_inv
    return 0.5 * (gram + gram.T), atilde


def conformal_splitting_pipeline(spec, dyn, cfg, mode, samples, seed, *,
                                 horizons=None, slope_threshold=SLOPE_THRESHOLD,
                                 angle_tol=ANGLE_TOL, bundle_horizon=None,
                                 conf_horizon=64, strict=False):
    """Detect, split, adapt and conformalize; Theorem-4/5 style reports.

    mode "uniquely_ergodic" conformalizes each restricted cocycle with a
    constant factor; mode "minimal" with the determinant function.  With no
    dominated index the pipeline degenerates to whole-space conformalization
    (k = 1).
    """
    if mode not in ("uniquely_ergodic", "minimal"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    if mode == "uniquely_ergodic" and not dyn.uniquely_ergodic:
        raise InvalidInputError("uniquely_ergodic mode needs a uniquely ergodic base")
    if mode == "minimal" and not dyn.minimal:
        raise InvalidInputError("minimal mode needs a minimal base")

    d = spec.dim
    if horizons is None:
        horizons = default_horizons()
    gp = gap_profile(spec, dyn, horizons, samples, seed, threshold=slope_threshold)
    cuts = gp.cuts()
    points = dyn.sample_points(samples, seed)

    if not cuts:
        return _degenerate_pipeline(spec, dyn, cfg, mode, samples, seed, points, gp,
                                    conf_horizon, strict)

    horizon = bundle_horizon if bundle_horizon is not None else gp.predicted_horizon()
    field = BundleFrameField(spec, dyn, cuts, horizon)
    estimate = _estimate_with_field(field, points, angle_tol)
    k = len(field.dims)

    blocks_per_point = []
    for pt in points:
        blocks, _ = restrict(spec, dyn, cuts, horizon, pt, field=field)
        blocks_per_point.append(blocks)

    adapted = adapted_metric(field, points, blocks_per_point, gp.slopes, cfg)

    conf_results = []
    for i in range(k):
        restricted = RestrictedCocycle(field, i)
        if mode == "uniquely_ergodic":
            conf_results.append(
                conformalize_constant(restricted, dyn, cfg, samples, seed,
                                      horizon=conf_horizon, strict=strict)
            )
        else:
            conf_results.append(
                conformalize_function(restricted, dyn, cfg, samples, seed,
                                      horizon=conf_horizon, strict=strict)
            )

    # Plain and adapted-metric determinant rates of the restricted blocks.
    lam_plain = np.empty((k, len(points)))
    lam_adapted = np.empty((k, len(points)))
    for ip in range(len(points)):
        for i in range(k):
            di = field.dims[i]
            _, logdet = np.linalg.slogdet(blocks_per_point[ip][i])
            lam_plain[i, ip] = logdet / di
            g_cur, g_next = adapted.grams[ip][i]
            _, ld_cur = np.linalg.slogdet(g_cur.gram)
            _, ld_next = np.linalg.slogdet(g_next.gram)
            lam_adapted[i, ip] = (logdet + 0.5 * (ld_next - ld_cur)) / di

    if mode == "uniquely_ergodic":
        lambdas = np.array([float(c.lam) for c in conf_results])
        ordering_ok = bool(np.all(np.diff(lambdas) < 0.0))
    else:
        lambdas = lam_plain
        ordering_ok = bool(np.all(np.diff(lam_adapted, axis=0) < 0.0))

    det_defect = 0.0
    for ip, pt in enumerate(points):
        _, logdet_full = np.linalg.slogdet(spec.matrix(dyn, pt))
        det_defect = max(
            det_defect,
            abs(float(np.dot(field.dims, lam_plain[:, ip]) - logdet_full)),
        )

    assembled_grams, assembled_atilde = [], []
    for ip, pt in enumerate(points):
        frames = estimate.frames[ip]
        frames_next = field.frames(dyn.iterate(pt, 1))
        block_grams = [adapted.grams[ip][i][0].gram for i in range(k)]
        block_atildes = [conf_results[i].a_tilde[ip] for i in range(k)]
        gram, atilde = _assemble(frames, frames_next, block_grams, block_atildes)
        assembled_grams.append(gram)
        assembled_atilde.append(atilde)

    return SplittingReport(
        mode=mode,
        partition=field.dims,
        points=tuple(points),
        frames=estimate.frames,
        invariance_defect=estimate.max_defect,
        min_transversality=estimate.min_transversality,
        blocks=tuple(blocks_per_point),
        lambdas=lambdas,
        lambdas_adapted=lam_adapted,
        adapted_epsilons=adapted.epsilons,
        adapted_margins=adapted.margins,
        conformality_defects=tuple(c.conformality_defect for c in conf_results),
        det_consistency=det_defect,
        ordering_ok=ordering_ok,
        gap=gp,
        assembled_grams=tuple(assembled_grams),
        assembled_atilde=tuple(assembled_atilde),
        conformal_results=tuple(conf_results),
    )


def _degenerate_pipeline(spec, dyn, cfg, mode, samples, seed, points, gp,
                         conf_horizon, strict):
    """k = 1: no dominated index, conformalize the whole bundle."""
    d = spec.dim
    if mode == "uniquely_ergodic":
        conf = conformalize_constant(spec, dyn, cfg, samples, seed,
                                     horizon=conf_horizon, strict=strict)
        lambdas = np.array([float(conf.lam)])
    else:
        conf = conformalize_function(spec, dyn, cfg, samples, seed,
                                     horizon=conf_horizon, strict=strict)
        lambdas = np.asarray(conf.lam)[None, :]
    det_defect = 0.0
    blocks = []
    for ip, pt in enumerate(points):
        a = spec.matrix(dyn, pt)
        blocks.append((a,))
        _, logdet = np.linalg.slogdet(a)
        lam = lambdas[0] if lambdas.ndim == 1 else lambdas[0, ip]
        det_defect = max(det_defect, abs(d * float(lam) - float(logdet)))
    eye = (np.eye(d),)
    return SplittingReport(
        mode=mode,
        partition=(d,),
        points=tuple(points),
        frames=tuple(eye for _ in points),
        invariance_defect=0.0,
        min_transversality=None,
        blocks=tuple(blocks),
        lambdas=lambdas,
        lambdas_adapted=None,
        adapted_epsilons=None,
        adapted_margins=None,
        conformality_defects=(conf.conformality_defect,),
        det_consistency=det_defect,
        ordering_ok=True,
        gap=gp,
        assembled_grams=tuple(pr.r.gram for pr in conf.inner.points),
        assembled_atilde=conf.a_tilde,
        conformal_results=(conf,),
    )
