"""Small closed-form systems used by the verification suites and tests."""
from __future__ import annotations

import numpy as np

from .dynamics import System


class ScalarLinear(System):
    """dx/dt = a x + b u on a 1-D state."""

    n = 1
    m = 1

    def __init__(self, a: float = -1.0, b: float = 0.0):
        self.a = a
        self.b = b

    def f(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return self.a * x + self.b * u

    def jacobians(self, x, u):
        return np.array([[self.a]]), np.array([[self.b]])


class ZeroField(System):
    """dx/dt = 0 in any dimension; mass never moves."""

    def __init__(self, n: int = 1, m: int = 1):
        self.n = n
        self.m = m

    def f(self, x, u):
        return np.zeros_like(np.asarray(x, dtype=float))

    def jacobians(self, x, u):
        return np.zeros((self.n, self.n)), np.zeros((self.n, self.m))


class Integrator(System):
    """dx/dt = u with matching state and control dimensions."""

    def __init__(self, n: int = 1):
        self.n = n
        self.m = n

    def f(self, x, u):
        return np.asarray(u, dtype=float) + 0.0 * np.asarray(x, dtype=float)

    def jacobians(self, x, u):
        return np.zeros((self.n, self.n)), np.eye(self.n)
