import math

import numpy as np
import pytest

from cocyclekit import cocycle as cc
from cocyclekit import dynamics as dy
from cocyclekit import lyapnorm as ln

SHEAR = np.array([[1.0, 1.0], [0.0, 1.0]])


@pytest.fixture
def golden():
    return dy.TorusTranslation([dy.GOLDEN_MEAN])


@pytest.fixture
def fixed_point():
    return dy.PeriodicOrbit(1)


@pytest.fixture
def shear_spec():
    return cc.Constant(SHEAR)


@pytest.fixture
def rotation_spec():
    return cc.ScalarTimesRotation(angle=cc.TrigPoly(const=0.7))


def norm_cfg(epsilon, fixed=None, tau=1e-8):
    trunc = ln.Fixed(fixed) if fixed is not None else ln.Adaptive(tau)
    return ln.NormConfig(epsilon=epsilon, truncation=trunc)


def random_spd(rng, d, lo=0.1, hi=10.0):
    """SPD matrix with eigenvalues drawn from [lo, hi]."""
    q = np.linalg.qr(rng.normal(size=(d, d)))[0]
    w = rng.uniform(lo, hi, size=d)
    return (q * w) @ q.T


def shear_power(n):
    """Closed form [[1, n], [0, 1]]; the independent oracle for shear products."""
    return np.array([[1.0, float(n)], [0.0, 1.0]])
