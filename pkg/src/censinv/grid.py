"""Uniform lattice on the probability simplex with barycentric interpolation.

Nodes are the beliefs whose coordinates are multiples of ``1/k``.  A belief
is located through its cumulative coordinates ``z_j = k (pi_1 + ... + pi_j)``,
j < m, which live in the ordered region ``0 <= z_1 <= ... <= z_{m-1} <= k``.
The Kuhn triangulation of the unit cubes restricted to that region is a
triangulation of the simplex, so every query has ``m`` vertices with
nonnegative weights.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


class BeliefGrid:
    def __init__(self, m: int, k: int):
        if m < 1 or k < 1:
            raise ValueError("need m >= 1 and k >= 1")
        self.m = int(m)
        self.k = int(k)
        d = self.m - 1
        zs = [z for z in itertools.combinations_with_replacement(range(k + 1), d)]
        self._z = np.array(zs, dtype=np.int64).reshape(len(zs), d)
        # lookup from cumulative coordinates to node index
        self._lookup = np.full((k + 1,) * d, -1, dtype=np.int64) if d else None
        if d:
            self._lookup[tuple(self._z.T)] = np.arange(len(zs))
        bounds = np.concatenate(
            [np.zeros((len(zs), 1), np.int64), self._z,
             np.full((len(zs), 1), k, np.int64)], axis=1)
        self.nodes = np.diff(bounds, axis=1) / k

    def __len__(self) -> int:
        return self.nodes.shape[0]

    @staticmethod
    def size(m: int, k: int) -> int:
        return math.comb(k + m - 1, m - 1)

    def index_of(self, counts) -> int:
        """Node index of the belief ``counts / k`` (integer counts)."""
        z = np.cumsum(np.asarray(counts, dtype=np.int64))[:-1]
        return int(self._lookup[tuple(z)]) if self.m > 1 else 0

    def locate(self, pi):
        """Vertices and barycentric weights for beliefs ``pi`` of shape (..., m).

        Returns ``(verts, weights)``, both of shape (..., m).
        """
        pi = np.asarray(pi, dtype=float)
        shape = pi.shape[:-1]
        m, k = self.m, self.k
        if m == 1:
            return np.zeros(shape + (1,), np.int64), np.ones(shape + (1,))
        pi = np.clip(pi, 0.0, None)
        pi = pi / pi.sum(axis=-1, keepdims=True)
        z = np.clip(k * np.cumsum(pi[..., :-1], axis=-1), 0.0, k)
        # keep the cumulative coordinates ordered despite rounding
        z = np.maximum.accumulate(z, axis=-1)
        base = np.minimum(np.floor(z), k - 1).astype(np.int64)
        frac = z - base
        d = m - 1
        # descending fractions; ties broken toward the higher coordinate
        order = np.argsort(-(frac + 1e-15 * np.arange(d)), axis=-1, kind="stable")
        fs = np.take_along_axis(frac, order, axis=-1)
        weights = np.empty(shape + (m,))
        weights[..., 0] = 1.0 - fs[..., 0]
        if d > 1:
            weights[..., 1:d] = fs[..., :-1] - fs[..., 1:]
        weights[..., d] = fs[..., -1]
        verts = np.empty(shape + (m,), np.int64)
        cur = base.copy()
        verts[..., 0] = self._lookup[tuple(np.moveaxis(cur, -1, 0))]
        for j in range(d):
            np.put_along_axis(
                cur, order[..., j:j + 1],
                np.take_along_axis(cur, order[..., j:j + 1], axis=-1) + 1, axis=-1)
            verts[..., j + 1] = self._lookup[tuple(np.moveaxis(cur, -1, 0))]
        return verts, weights

    def interpolate(self, values, pi):
        """Interpolate nodal ``values`` (shape (G, ...)) at beliefs ``pi``."""
        verts, w = self.locate(pi)
        values = np.asarray(values)
        out = values[verts]
        w = w.reshape(w.shape + (1,) * (values.ndim - 1))
        return (out * w).sum(axis=verts.ndim - 1)
