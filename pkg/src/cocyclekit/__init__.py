"""cocyclekit: numerical reduction of matrix cocycles over explicit base dynamics.

Given a cocycle of invertible matrices driven by a torus translation, a
periodic orbit or a full shift, the library estimates uniform growth rates,
builds the exponentially weighted Lyapunov inner product as a Gram-matrix
field, solves the metric-invariance equation by positive square roots, and
produces metric-preserving, near-isometric, conformal and block-conformal
perturbations of the cocycle, each with testable residuals and spectral
containments.  A config-driven CLI (``cocyclekit``) exposes every pipeline
and emits reproducible JSON/CSV reports.
"""

from cocyclekit._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
