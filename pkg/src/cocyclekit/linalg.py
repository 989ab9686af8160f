"""Dense symmetric/positive-definite matrix analysis.

Everything operates on plain float ndarrays.  Symmetric inputs are
symmetrized on entry (rejecting asymmetry beyond round-off) and positive
routines go through one eigendecomposition, which also supplies the spectra
needed by callers.  Dimensions stay small (d <= ~16), so eigendecomposition
beats iterative square-root schemes.
"""

from typing import NamedTuple

import numpy as np

from cocyclekit.errors import InvalidInputError, NearSingularError

# Below min_eig / max_eig = POSITIVITY_RTOL a matrix is treated as singular.
POSITIVITY_RTOL = 1e-12
# Allowed relative asymmetry absorbed by symmetrization.
SYMMETRY_RTOL = 1e-10


def _as_square(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix has non-finite entries")
    return m


def operator_norm(m):
    """Largest singular value (sup of |Mv| over unit v)."""
    m = _as_square(m)
    return float(np.linalg.norm(m, 2))


def mininorm(m):
    """Smallest singular value (inf of |Mv| over unit v).

    Equals 1/operator_norm(inv(M)) for invertible M.
    """
    m = _as_square(m)
    return float(np.linalg.svd(m, compute_uv=False)[-1])


def symmetrize(m):
    """(M + M^T)/2, rejecting asymmetry above SYMMETRY_RTOL * |M|."""
    m = _as_square(m)
    asym = np.linalg.norm(m - m.T, 2)
    scale = np.linalg.norm(m, 2)
    if asym > SYMMETRY_RTOL * max(scale, 1e-300):
        raise InvalidInputError(
            f"asymmetry {asym:.3e} exceeds {SYMMETRY_RTOL:.0e} * |M| = {SYMMETRY_RTOL * scale:.3e}"
        )
    return 0.5 * (m + m.T)


def positive_eigh(m, guard=POSITIVITY_RTOL):
    """Eigendecomposition of a symmetric matrix, checked positive definite.

    Returns (eigenvalues ascending, eigenvectors).  Raises NearSingularError
    carrying the offending eigenvalue when min_eig <= guard * max_eig.
    """
    m = symmetrize(m)
    w, v = np.linalg.eigh(m)
    if w[-1] <= 0 or w[0] <= guard * w[-1]:
        raise NearSingularError(
            f"matrix not safely positive definite: min eigenvalue {w[0]:.6e}, "
            f"max {w[-1]:.6e}, guard {guard:.1e}",
            eigenvalue=float(w[0]),
        )
    return w, v


def psd_power(p, exponent, guard=POSITIVITY_RTOL):
    """P^exponent for positive definite P via symmetric eigendecomposition."""
    w, v = positive_eigh(p, guard=guard)
    return (v * w**exponent) @ v.T


def psd_sqrt(p, guard=POSITIVITY_RTOL):
    """Unique positive square root of a positive definite matrix."""
    return psd_power(p, 0.5, guard=guard)


class LoewnerResult(NamedTuple):
    """Truth value of B < C plus the strictness margin min_eig(C - B)."""

    holds: bool
    margin: float

    def __bool__(self):
        return self.holds


def loewner_less(b, c):
    """Whether C - B is positive definite, with the margin reported."""
    b = symmetrize(b)
    c = symmetrize(c)
    if b.shape != c.shape:
        raise InvalidInputError(f"dimension mismatch: {b.shape} vs {c.shape}")
    margin = float(np.linalg.eigvalsh(c - b)[0])
    return LoewnerResult(margin > 0.0, margin)


def orthogonality_defect(m):
    """|M^T M - I| in operator norm; zero iff M is orthogonal."""
    m = _as_square(m)
    d = m.shape[0]
    return float(np.linalg.norm(m.T @ m - np.eye(d), 2))


def invert(m, det_floor=1e-12):
    """Inverse of a generator matrix, guarding against degeneracy."""
    m = _as_square(m)
    sign, logabsdet = np.linalg.slogdet(m)
    if sign == 0 or logabsdet < np.log(det_floor):
        raise NearSingularError(
            f"matrix near singular: |det| = {sign * np.exp(logabsdet):.3e}",
            eigenvalue=float(sign * np.exp(logabsdet)),
        )
    return np.linalg.inv(m)


def orthonormalize(frame):
    """Orthonormal basis of the column span (QR with d x r frame)."""
    q, _ = np.linalg.qr(np.asarray(frame, dtype=np.float64))
    return q


def canonicalize_frame(frame, tol=1e-12):
    """Flip column signs so the first entry above tol in each column is positive."""
    frame = np.array(frame, dtype=np.float64, copy=True)
    for j in range(frame.shape[1]):
        col = frame[:, j]
        nz = np.nonzero(np.abs(col) > tol)[0]
        if nz.size and col[nz[0]] < 0:
            frame[:, j] = -col
    return frame


def subspace_angle(f, g):
    """Largest principal angle between the spans of orthonormal frames f, g.

    Uses the sine-based formula sigma_max((I - g g^T) f), accurate for the
    small angles the invariance gates care about.  Frames must have equal rank.
    """
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise InvalidInputError(f"frame shape mismatch: {f.shape} vs {g.shape}")
    resid = f - g @ (g.T @ f)
    s = np.linalg.svd(resid, compute_uv=False)
    return float(np.arcsin(min(1.0, float(s[0]))))


def min_principal_angle(f, g):
    """Smallest principal angle between two (possibly different-rank) spans."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    cosines = np.linalg.svd(f.T @ g, compute_uv=False)
    return float(np.arccos(np.clip(cosines[0], -1.0, 1.0)))
