"""Invertible base dynamics: torus translations, periodic orbits, full shifts.

Each dynamics value is immutable and exposes the same small surface:
``iterate``, ``sample_points``, ``embed`` (coordinates in [0,1)^k used by
generator functions) and the ``uniquely_ergodic`` / ``minimal`` flags the
conformal pipelines dispatch on.  "For all omega" claims downstream are
certified on sampled points plus the orbit points visited, and reports record
that finite relaxation.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from cocyclekit.errors import InvalidInputError, WindowExhaustedError

#: Golden-mean translation, the default irrational for experiments.
GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ShiftPoint:
    """Two-sided symbol sequence with eventually-periodic or finite tails.

    ``center`` occupies absolute indices [0, len(center)); ``left`` repeats
    to -infinity and ``right`` to +infinity when nonempty.  Empty tails mean
    the window is finite and reads outside it raise WindowExhaustedError.
    ``cursor`` is the current origin; the shift moves it.
    """

    center: tuple
    left: tuple = ()
    right: tuple = ()
    cursor: int = 0

    def symbol(self, offset=0):
        i = self.cursor + offset
        if 0 <= i < len(self.center):
            return self.center[i]
        if i < 0:
            if not self.left:
                raise WindowExhaustedError(f"index {i} before a finite window")
            return self.left[i % len(self.left)]
        if not self.right:
            raise WindowExhaustedError(f"index {i} beyond a finite window")
        return self.right[(i - len(self.center)) % len(self.right)]


class TorusTranslation:
    """omega -> omega + alpha (mod 1) on the m-torus, in double precision."""

    kind = "torus"

    def __init__(self, alpha, irrational=True):
        self.alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
        if not np.all(np.isfinite(self.alpha)):
            raise InvalidInputError("translation vector must be finite")
        self.irrational = bool(irrational)
        self.uniquely_ergodic = self.irrational
        self.minimal = self.irrational

    @property
    def dim(self):
        return self.alpha.shape[0]

    def iterate(self, point, n=1):
        # One fused update keeps the drift at O(n * ulp) instead of O(n) roundings.
        return np.mod(np.asarray(point, dtype=np.float64) + n * self.alpha, 1.0)

    def orbit(self, point, n0, n1):
        steps = np.arange(n0, n1, dtype=np.float64)[:, None]
        return np.mod(np.asarray(point, dtype=np.float64)[None, :] + steps * self.alpha[None, :], 1.0)

    def embed(self, point):
        return np.asarray(point, dtype=np.float64)

    def embed_orbit(self, point, n0, n1):
        return self.orbit(point, n0, n1)

    def sample_points(self, count, seed):
        rng = np.random.default_rng(seed)
        return [rng.random(self.dim) for _ in range(count)]


class PeriodicOrbit:
    """A single periodic orbit of period p; points are residues mod p."""

    kind = "periodic"
    uniquely_ergodic = True
    minimal = True

    def __init__(self, period):
        if period < 1:
            raise InvalidInputError("period must be >= 1")
        self.period = int(period)

    def iterate(self, point, n=1):
        return (int(point) + n) % self.period

    def embed(self, point):
        return np.array([int(point) / self.period])

    def embed_orbit(self, point, n0, n1):
        idx = (int(point) + np.arange(n0, n1)) % self.period
        return (idx / self.period)[:, None]

    def sample_points(self, count, seed):
        # The orbit is the whole space: return it, count notwithstanding.
        return list(range(self.period))


class FullShift:
    """Two-sided full shift on a finite alphabet.

    Carries an optional designated eventually-periodic point; sampled points
    are seeded random finite windows of the configured radius.
    """

    kind = "shift"
    uniquely_ergodic = False
    minimal = False

    def __init__(self, alphabet, radius=32, designated=None):
        if alphabet < 2:
            raise InvalidInputError("alphabet size must be >= 2")
        self.alphabet = int(alphabet)
        self.radius = int(radius)
        self.designated = designated
        # Enough digits that the truncated base-a expansion fills a double.
        self._digits = int(math.ceil(54.0 / math.log2(self.alphabet)))

    def iterate(self, point, n=1):
        moved = ShiftPoint(point.center, point.left, point.right, point.cursor + n)
        moved.symbol(0)  # fail fast if the window is exhausted
        return moved

    def embed(self, point):
        x = 0.0
        scale = 1.0
        for j in range(self._digits):
            scale /= self.alphabet
            try:
                s = point.symbol(j)
            except WindowExhaustedError:
                break
            x += s * scale
        return np.array([x])

    def embed_orbit(self, point, n0, n1):
        return np.stack([self.embed(self.iterate(point, j)) for j in range(n0, n1)])

    def sample_points(self, count, seed):
        rng = np.random.default_rng(seed)
        points = []
        if self.designated is not None:
            points.append(self.designated)
        while len(points) < count:
            word = tuple(int(s) for s in rng.integers(0, self.alphabet, 2 * self.radius + 1))
            points.append(ShiftPoint(center=word, cursor=self.radius))
        return points[:count]


def iterate(dyn, point, n):
    """F^n(point); negative n walks the inverse."""
    return dyn.iterate(point, n)


def sample_points(dyn, count, seed):
    """Deterministic finite stand-in for 'for all omega'."""
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    return dyn.sample_points(count, seed)


def birkhoff_average(dyn, f, point, n):
    """(1/n) sum of f along the forward orbit of length n.

    Over a full period of a PeriodicOrbit this is exactly the integral
    against the orbit measure.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    total = 0.0
    for j in range(n):
        total += f(dyn.iterate(point, j))
    return total / n
