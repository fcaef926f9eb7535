"""Deterministic belief motion between demand arrivals.

With ``A = Q^T - diag(lambda)`` the unnormalized vector ``m(t) = exp(tA) pi``
carries both the state marginal and the probability of no arrival, so
``survival = sum(m)`` and the conditional belief is ``m / sum(m)``.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

BELIEF_TOL = 1e-10


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)) or not np.isfinite(t):
        raise ValueError("non-finite input to mat_exp")
    return expm(A * t)


def generator(spec) -> np.ndarray:
    return spec.Q.T - np.diag(spec.lam)


def normalize(pi) -> np.ndarray:
    pi = np.clip(np.asarray(pi, dtype=float), 0.0, None)
    s = pi.sum()
    if not s > 0 or not np.isfinite(s):
        raise FloatingPointError("cannot normalize belief: zero or non-finite mass")
    return pi / s


def propagate_m(spec, pi, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"negative time {t}")
    return mat_exp(generator(spec), t) @ np.asarray(pi, dtype=float)


def survival(spec, pi, t: float) -> float:
    """Probability of no demand arrival within ``t``."""
    return float(propagate_m(spec, pi, t).sum())


def flow_x(spec, pi, t: float) -> np.ndarray:
    mv = propagate_m(spec, pi, t)
    s = mv.sum()
    if not s > 0:
        raise FloatingPointError(f"survival underflow at t={t}")
    return normalize(mv / s)


def flow_rhs(spec, x) -> np.ndarray:
    """Right side of the belief ODE between arrivals."""
    x = np.asarray(x, dtype=float)
    return spec.Q.T @ x - spec.lam * x + x * (spec.lam @ x)


class Propagator:
    """Cached powers of the one-step matrix ``exp(A dt)``.

    ``E`` is entrywise nonnegative and its column sums are at most one.
    """

    def __init__(self, spec, dt: float):
        self.spec = spec
        self.dt = float(dt)
        self.A = generator(spec)
        self.E = mat_exp(self.A, self.dt)
        self._powers = [np.eye(spec.m), self.E]

    def power(self, k: int) -> np.ndarray:
        while len(self._powers) <= k:
            self._powers.append(self.E @ self._powers[-1])
        return self._powers[k]

    def m_path(self, pi, n: int) -> np.ndarray:
        """m(k dt, pi) for k = 0..n, shape (n+1, m); pi may be batched (..., m)."""
        pi = np.asarray(pi, dtype=float)
        out = np.empty((n + 1,) + pi.shape)
        out[0] = pi
        for k in range(1, n + 1):
            out[k] = out[k - 1] @ self.E.T
        return out
