"""Decision rules extracted from a solved value surface, plus simple heuristics.

A policy is any callable ``policy(T_rem, pi, a) -> amount`` returning the
signed order quantity (0 means wait).  Policies may also provide a
vectorized ``batch(T_rem, Pi, a)`` taking arrays over paths.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .solver import ValueSurface


@dataclass(frozen=True)
class Recommendation:
    action: str  # "wait" or "order"
    level: int  # order-up-to level (current inventory when waiting)
    amount: int

    def to_dict(self) -> dict:
        return {"action": self.action, "order_up_to": self.level, "amount": self.amount}


class DecisionRule:
    """Order when the interpolated value meets the intervention value.

    Parameters
    ----------
    surface : ValueSurface
    eps_act : float, optional
        Tolerance of the act test ``U >= MU - eps_act``.  Defaults to twice
        the surface's fixed-point residual, floored at 1e-9.
    """

    def __init__(self, surface: ValueSurface, eps_act: float | None = None):
        self.surface = surface
        self.eps_act = max(2.0 * surface.residual, 1e-9) if eps_act is None else float(eps_act)

    def _check(self, a):
        a = np.asarray(a)
        if np.any(a < 0) or np.any(a > self.surface.Pbar):
            raise ValueError(f"inventory {a} outside [0, {self.surface.Pbar}]")

    def batch_levels(self, T_rem, Pi, a) -> np.ndarray:
        """Order-up-to levels for arrays of queries (``a`` where waiting)."""
        S = self.surface
        Pi = np.atleast_2d(np.asarray(Pi, float))
        a = np.broadcast_to(np.asarray(a, np.int64), Pi.shape[:1])
        self._check(a)
        T_rem = np.broadcast_to(np.asarray(T_rem, float), a.shape)
        if np.any(T_rem < -1e-9) or np.any(T_rem > S.T + 1e-9):
            raise ValueError(f"remaining horizon outside [0, {S.T}]")
        n = np.clip(np.rint(T_rem / S.dt), 0, S.n_T).astype(np.int64)
        verts, w = S.grid.locate(Pi)
        nn, aa = n[:, None], a[:, None]
        u = (S.U[nn, verts, aa] * w).sum(axis=1)
        mu = (S.MU[nn, verts, aa] * w).sum(axis=1)
        acting = S.act[nn, verts, aa] & (w > 1e-12)
        dv = np.where(acting, S.d[nn, verts, aa], np.iinfo(np.int64).max)
        level = dv.min(axis=1)
        go = (u >= mu - self.eps_act) & acting.any(axis=1)
        return np.where(go, level, a)

    def batch(self, T_rem, Pi, a) -> np.ndarray:
        a = np.asarray(a, np.int64)
        return self.batch_levels(T_rem, Pi, a) - a

    def recommend(self, T_rem: float, pi, a: int) -> Recommendation:
        level = int(self.batch_levels(T_rem, np.asarray(pi, float)[None], [a])[0])
        if level == a:
            return Recommendation("wait", int(a), 0)
        return Recommendation("order", level, level - int(a))

    def __call__(self, T_rem, pi, a) -> int:
        return self.recommend(T_rem, pi, a).amount


def export_regions(rule: DecisionRule, a_fixed: int, path, every: int = 1) -> None:
    """Dense dump of ``T_rem, pi_1..pi_m, act, d`` at inventory ``a_fixed``."""
    S = rule.surface
    rule._check(a_fixed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T_rem"] + [f"pi_{i + 1}" for i in range(S.m)] + ["act", "d"])
        for n in range(0, S.n_T + 1, every):
            t = round(n * S.dt, 12)
            for g, node in enumerate(S.grid.nodes):
                w.writerow([t, *(f"{p:.10g}" for p in node),
                            int(S.act[n, g, a_fixed]), int(S.d[n, g, a_fixed])])


# -- heuristics ----------------------------------------------------------

class NeverOrder:
    def __call__(self, T_rem, pi, a):
        return 0

    def batch(self, T_rem, Pi, a):
        return np.zeros(np.shape(a), np.int64)


@dataclass(frozen=True)
class ReorderPoint:
    """(s, S) rule: when inventory is at most ``s``, order up to ``S``.

    No order is placed at the horizon itself, where stock has no use.
    """

    s: int
    S: int

    def __call__(self, T_rem, pi, a):
        return self.S - a if a <= self.s and T_rem > 0 else 0

    def batch(self, T_rem, Pi, a):
        a = np.asarray(a, np.int64)
        return np.where((a <= self.s) & (np.asarray(T_rem) > 0), self.S - a, 0)


def basestock(level: int) -> ReorderPoint:
    """Keep inventory at ``level`` by topping up after every shortfall."""
    return ReorderPoint(level - 1, level)
