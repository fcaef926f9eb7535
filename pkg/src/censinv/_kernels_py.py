"""Pure numpy implementation of the slice kernel.

Mirrors ``_kernels.pyx`` exactly; selected automatically when the compiled
extension is unavailable.
"""
import numpy as np


def _interp(Vs, verts, wts, b):
    # Vs: (n, G, A) slices indexed by step j-1; verts/wts: (G, n, ..., m)
    G, n = verts.shape[:2]
    jj = np.arange(n).reshape((1, n) + (1,) * (verts.ndim - 2))
    vals = Vs[jj, verts, b]
    return (vals * wts).sum(axis=-1)


def continuation(V, n, s, disc, base, fv, fw, wf, sv, sw, wso, xv, xw,
                 censored, h, zeta, sellback, dt, intervene, out_C, out_j):
    """Continuation values at slice ``n`` excluding the u=0 quadrature node.

    For every node g and inventory a this minimizes, over intervention
    steps j = 1..n plus the never-intervene branch,
    ``I'_j + s_j disc_j MV(n - j, x_j, a)`` where ``I'_j`` is the composite
    trapezoid integral of the running cost without its u=0 half-weight term.
    Writes results into ``out_C`` (G, A) and the minimizing step into
    ``out_j`` (``n + 1`` marks the never-intervene branch).
    """
    G, _, A = base.shape
    R = wf.shape[2]
    steps = np.arange(1, n + 1)
    Vs = V[n - steps]  # slice used at step j is n - j
    hj = disc[steps][None, :, None] * base[:, 1:n + 1, :]
    for y in range(1, R + 1):
        for a in range(A):
            if censored and y > a:
                continue
            post = max(a - y, 0)
            val = _interp(Vs, fv[:, 1:n + 1, y - 1], fw[:, 1:n + 1, y - 1], post)
            hj[:, :, a] += disc[steps] * wf[:, 1:n + 1, y - 1] * val
    if censored:
        for a in range(min(A, R)):
            val = _interp(Vs, sv[:, 1:n + 1, a], sw[:, 1:n + 1, a], 0)
            hj[:, :, a] += disc[steps] * wso[:, 1:n + 1, a] * val
    cum = np.cumsum(dt * hj, axis=1)
    I = cum - 0.5 * dt * hj  # (G, n, A)
    weight = s[:, 1:n + 1] * disc[steps]  # (G, n)
    vx = np.stack([_interp(Vs, xv[:, 1:n + 1], xw[:, 1:n + 1], b) for b in range(A)], axis=-1)
    end = I[:, -1, :] + weight[:, -1, None] * vx[:, -1, :]
    # vx[:, -1] reads slice n - n = 0, the terminal slice
    best = np.full((G, A), np.inf)
    arg = np.full((G, A), n + 1, dtype=np.int64)
    if intervene:
        bs = np.arange(A)
        for a in range(A):
            cost = vx + h * (bs - a) + zeta
            if not sellback:
                cost[..., :a] = np.inf
            cand = I[:, :, a] + weight * cost.min(axis=-1)
            jmin = cand.argmin(axis=1)
            best[:, a] = cand[np.arange(G), jmin]
            arg[:, a] = jmin + 1
    better = end < best
    best = np.where(better, end, best)
    arg = np.where(better, n + 1, arg)
    out_C[...] = best
    out_j[...] = arg
