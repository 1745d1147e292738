"""Parameter sets of the two Holling-Tanner case studies."""

from __future__ import annotations

import math

import numpy as np

from .hopf import holling_tanner_positive_equilibrium
from .kinetics import make_holling_tanner
from .ode import Section

# stable cycle around an unstable focus
EXAMPLE1 = dict(a=1.0, h=0.5, K=5.0, m=1.0, r=1.0, s=0.1)
EXAMPLE1_SEED = (1.0, 1.0)
EXAMPLE1_EQUILIBRIUM = (-3 + math.sqrt(14), 2 * (-3 + math.sqrt(14)))
EXAMPLE1_IDENTICAL = np.eye(2)
EXAMPLE1_CROSS = np.array([[1.0, 10.0], [1.0, 1.0]])

# small cycle born at a weak focus of order two (K = m = r = 1)
EXAMPLE2 = dict(a=0.336238, h=0.222132, K=1.0, m=1.0, r=1.0, s=0.1)
EXAMPLE2_S_CYCLE = 0.09999
EXAMPLE2_PLUS = np.array([[1.0, 1.0], [100.0, 5.0]])
EXAMPLE2_MINUS = np.array([[1.0, 1.0], [-100.0, 5.0]])
EXAMPLE2_DELTA = 0.01
# known Lyapunov coefficients: Re(C1) = 0 and Re(C2) < 0; only the sign of C2 is known
EXAMPLE2_ORDER = 2


def example1():
    return make_holling_tanner(**EXAMPLE1)


def example2(s: float = EXAMPLE2["s"]):
    return make_holling_tanner(**{**EXAMPLE2, "s": s})


def example2_cycle_seed(s: float = EXAMPLE2_S_CYCLE):
    """Seed and section for the small Example-2 cycle: ``v = v*`` crossed upward."""
    u, v = holling_tanner_positive_equilibrium(EXAMPLE2["a"], EXAMPLE2["h"], s)
    return np.array([u + 0.02, v]), Section(1, v, 1)
