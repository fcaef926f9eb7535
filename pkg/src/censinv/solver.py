"""Value surface of the impulse-control problem by forward dynamic programming.

The remaining horizon is discretized as ``T_rem = n dt`` for n = 0..N and the
belief simplex by a :class:`~censinv.grid.BeliefGrid`.  Slice ``n`` is the
minimum over a first intervention time on the grid of the running cost up
to that time plus the survival-weighted intervention value, where the running
cost integrates storage and, at each possible arrival, the expected stock-out
penalty and the continuation value at the post-arrival belief and inventory.

The composite trapezoid rule puts half weight on the u=0 node, which reads
the slice being built.  The kernel returns the continuation without that
term; the slice is then closed by a short fixed-point iteration whose
contraction factor is about ``dt * lam_bar / 2``.

An order may be placed at any time up to and including the horizon, so the
slice ``n = 0`` is the terminal value after an optional last intervention.
Without sell-back that intervention never pays and the slice is just the
salvage value.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .filter import FilterState, jump_update
from .grid import BeliefGrid
from .markov import Propagator
from .model import Censoring, ModelSpec, feasible_marks, mark_likelihoods

DEFAULT_STEPS = 300
DEFAULT_RES = {1: 1, 2: 200, 3: 60}
MEMORY_LIMIT = 3.0e9
ACT_TOL = 1e-10


class ResourceError(RuntimeError):
    """The requested lattice does not fit the memory budget."""


def default_resolution(m: int) -> int:
    return DEFAULT_RES.get(m, 20)


# -- intervention --------------------------------------------------------

def _order_costs(U, spec, include_self=True):
    """Cost of ordering from every a to every b: shape (..., A_from, A_to)."""
    A = U.shape[-1]
    a = np.arange(A)
    cost = U[..., None, :] + spec.h * (a[None, :] - a[:, None]) + spec.zeta
    bad = np.zeros((A, A), bool)
    if not spec.allow_sellback:
        bad |= a[None, :] < a[:, None]
    if not include_self:
        bad |= np.eye(A, dtype=bool)
    return np.where(bad, np.inf, cost)


def intervention_values(U, spec, include_self=True):
    """Vectorized intervention operator over the last axis of ``U``.

    Returns ``(value, order_up_to)``, the latter being the smallest
    minimizing level.  With ``include_self=False`` the no-op b=a is excluded
    (the corner a=P-bar without sell-back then has value +inf).
    """
    cost = _order_costs(np.asarray(U, float), spec, include_self)
    return cost.min(axis=-1), cost.argmin(axis=-1)


def intervention_M(U_slice, spec: ModelSpec, a: int):
    """``min_b U(b) + h (b - a) + zeta`` over admissible b, with the smallest minimizer."""
    U_slice = np.asarray(U_slice, float)
    lo = 0 if spec.allow_sellback else a
    b = np.arange(lo, spec.Pbar + 1)
    cost = U_slice[b] + spec.h * (b - a) + spec.zeta
    j = int(np.argmin(cost))
    return float(cost[j]), int(b[j])


# -- lattice precomputation ----------------------------------------------

def _info_censored(spec, stockout_update):
    if stockout_update not in ("aggregated", "revealed"):
        raise ValueError(f"unknown stockout_update {stockout_update!r}")
    return spec.censored and stockout_update == "aggregated"


def lattice_bytes(m: int, k: int, N: int, R: int, A: int) -> int:
    G = BeliefGrid.size(m, k)
    per = 16 * m * (R + A + 1) + 8 * (R + 2 * A + 2)
    return int(G * (N + 1) * per + 6 * (N + 1) * G * A * 8)


@dataclass
class Lattice:
    """Node-wise flow quantities shared by every slice of a solve."""

    grid: BeliefGrid
    N: int
    dt: float
    censored: bool
    s: np.ndarray
    disc: np.ndarray
    base: np.ndarray
    fv: np.ndarray
    fw: np.ndarray
    wf: np.ndarray
    sv: np.ndarray
    sw: np.ndarray
    wso: np.ndarray
    xv: np.ndarray
    xw: np.ndarray

    def kernel_args(self):
        return (self.s, self.disc, self.base, self.fv, self.fw, self.wf,
                self.sv, self.sw, self.wso, self.xv, self.xw)


def _posterior(X, lik):
    """Beliefs proportional to ``X * lik`` (X: (..., m), lik: (r, m)) -> (..., r, m)."""
    post = X[..., None, :] * lik
    tot = post.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(tot > 0, post / tot, X[..., None, :])
    return post


def build_lattice(spec: ModelSpec, k: int, N: int, stockout_update="aggregated",
                  memory_limit: float = MEMORY_LIMIT, chunk: int = 256) -> Lattice:
    m, R, A = spec.m, spec.R, spec.Pbar + 1
    need = lattice_bytes(m, k, N, R, A)
    if need > memory_limit:
        raise ResourceError(
            f"lattice m={m}, k={k}, N={N} needs about {need / 1e9:.2f} GB "
            f"(limit {memory_limit / 1e9:.2f} GB); lower --belief-res or raise --dt")
    grid = BeliefGrid(m, k)
    G = len(grid)
    dt = spec.T / N
    prop = Propagator(spec, dt)
    M = np.ascontiguousarray(prop.m_path(grid.nodes, N).transpose(1, 0, 2))  # (G, N+1, m)
    s = M.sum(axis=-1)
    X = M / s[..., None]
    lam = spec.lam
    levels = np.arange(A)
    tail = np.stack([spec.tail(a) for a in levels], axis=1)  # (m, A)
    pen = np.stack([spec.expected_penalty(a) for a in levels], axis=1)  # (m, A)
    lf = lam[:, None] * spec.f  # (m, R)
    lt = lam[:, None] * tail  # (m, A)
    wf = M @ lf
    wso = M @ lt
    base = s[..., None] * spec.c[None, None, :] + M @ (lam[:, None] * pen)
    censored = _info_censored(spec, stockout_update)
    if not censored:
        wso[...] = 0.0
    fv = np.empty((G, N + 1, R, m), np.int64)
    fw = np.empty((G, N + 1, R, m))
    sv = np.empty((G, N + 1, A, m), np.int64)
    sw = np.empty((G, N + 1, A, m))
    xv, xw = grid.locate(X)
    for g0 in range(0, G, chunk):
        sl = slice(g0, g0 + chunk)
        fv[sl], fw[sl] = grid.locate(_posterior(X[sl], lf.T))
        sv[sl], sw[sl] = grid.locate(_posterior(X[sl], lt.T))
    disc = np.exp(-spec.rho * dt * np.arange(N + 1))
    return Lattice(grid, N, dt, censored, s, disc, np.ascontiguousarray(base),
                   fv, fw, np.ascontiguousarray(wf), sv, sw,
                   np.ascontiguousarray(wso), np.ascontiguousarray(xv),
                   np.ascontiguousarray(xw))


def _u0_term(lat: Lattice, spec, Un):
    """Integrand at u=0 (current slice ``Un``, shape (G, A))."""
    R, A = lat.wf.shape[2], Un.shape[1]
    Vf = (Un[lat.fv[:, 0]] * lat.fw[:, 0, :, :, None]).sum(axis=2)  # (G, R, A)
    y = np.arange(1, R + 1)[:, None]
    a = np.arange(A)[None, :]
    post = np.maximum(a - y, 0)
    mask = np.ones((R, A)) if not lat.censored else (y <= a).astype(float)
    yy = np.broadcast_to(y - 1, (R, A))
    h0 = lat.base[:, 0, :] + np.einsum("gy,ya,gya->ga", lat.wf[:, 0], mask, Vf[:, yy, post])
    if lat.censored:
        Vs = (Un[lat.sv[:, 0], 0] * lat.sw[:, 0]).sum(axis=-1)  # (G, A)
        h0 = h0 + lat.wso[:, 0] * Vs
    return h0


# -- value surface -------------------------------------------------------

@dataclass
class ValueSurface:
    """Solved lattice: arrays are indexed [n, node, a] with ``T_rem = n dt``."""

    m: int
    R: int
    Pbar: int
    k: int
    dt: float
    U: np.ndarray
    MU: np.ndarray
    U0: np.ndarray
    act: np.ndarray
    d: np.ndarray
    residual: float = 0.0
    C: np.ndarray | None = field(default=None, repr=False)
    iterations: int = 0

    @property
    def n_T(self) -> int:
        return self.U.shape[0] - 1

    @property
    def T(self) -> float:
        return self.n_T * self.dt

    @cached_property
    def grid(self) -> BeliefGrid:
        return BeliefGrid(self.m, self.k)

    def slice_index(self, T_rem: float) -> int:
        if not -1e-9 <= T_rem <= self.T + 1e-9:
            raise ValueError(f"T_rem={T_rem} outside [0, {self.T}]")
        return int(np.clip(np.rint(T_rem / self.dt), 0, self.n_T))

    def interp(self, arr, n: int, pi):
        """Interpolate ``arr[n]`` at beliefs ``pi`` (..., m) -> (..., A)."""
        return self.grid.interpolate(arr[n], pi)

    def value(self, T_rem: float, pi, a: int) -> float:
        return float(self.interp(self.U, self.slice_index(T_rem), pi)[a])

    def node_index(self, pi) -> int:
        counts = np.rint(np.asarray(pi, float) * self.k).astype(int)
        if abs(counts.sum() - self.k) or np.abs(counts / self.k - pi).max() > 1e-9:
            raise ValueError(f"{pi} is not a lattice node at k={self.k}")
        return self.grid.index_of(counts)


def solve_forward(spec: ModelSpec, k: int | None = None, N: int | None = None, *,
                  stockout_update: str = "aggregated", tol: float = 1e-13,
                  max_iter: int = 200, backend: str | None = None,
                  lattice: Lattice | None = None, keep_C: bool = False,
                  memory_limit: float = MEMORY_LIMIT) -> ValueSurface:
    """Solve for U, the intervention values MU, the no-action values U0 and the policy.

    ``act`` marks cells where ordering now is strictly better than the best
    continuation, and ``d`` is then the smallest optimal order-up-to level
    (``d = a`` otherwise).
    """
    k = default_resolution(spec.m) if k is None else int(k)
    N = DEFAULT_STEPS if N is None else int(N)
    lat = lattice or build_lattice(spec, k, N, stockout_update, memory_limit)
    kern = {None: kernels.continuation, "numpy": kernels.continuation_py,
            "cython": kernels.continuation_c}[backend]
    if kern is None:
        raise RuntimeError("compiled kernel not available")
    G, A, dt = len(lat.grid), spec.Pbar + 1, lat.dt
    if 0.5 * dt * spec.lam_bar >= 1.0:
        raise ValueError(f"time step {dt:g} too coarse for arrival rate {spec.lam_bar:g}; "
                         f"need dt < {2.0 / spec.lam_bar:g}")
    levels = np.arange(A)
    term = np.broadcast_to(-spec.salvage_fraction * spec.h * levels, (G, A))
    U = np.empty((N + 1, G, A))
    U0 = np.empty((N + 1, G, A))
    MU = np.empty((N + 1, G, A))
    C = np.empty((N + 1, G, A))
    act = np.zeros((N + 1, G, A), bool)
    d = np.broadcast_to(levels, (N + 1, G, A)).copy()
    U0[0] = C[0] = term
    # an order may still be placed at the horizon itself (only a sell-back can pay)
    mex, bex = intervention_values(C[0], spec, include_self=False)
    U[0] = np.minimum(C[0], mex)
    act[0] = mex < C[0] - ACT_TOL * (1.0 + np.abs(C[0]))
    d[0] = np.where(act[0], bex, levels)
    MU[0] = intervention_values(U[0], spec)[0]
    Cp = np.empty((G, A))
    jarg = np.empty((G, A), np.int64)
    args = lat.kernel_args()
    residual, iters = 0.0, 0
    for n in range(1, N + 1):
        # no-action values
        kern(U0, n, *args, lat.censored, spec.h, spec.zeta, spec.allow_sellback,
             dt, False, Cp, jarg)
        U0[n], it0 = _close_slice(lat, spec, Cp, U0[n - 1], False, tol, max_iter)
        kern(U, n, *args, lat.censored, spec.h, spec.zeta, spec.allow_sellback,
             dt, True, Cp, jarg)
        U[n], it = _close_slice(lat, spec, Cp, U[n - 1], True, tol, max_iter)
        iters = max(iters, it, it0)
        C[n] = Cp + 0.5 * dt * _u0_term(lat, spec, U[n])
        MU[n] = intervention_values(U[n], spec)[0]
        mex, bex = intervention_values(C[n], spec, include_self=False)
        act[n] = mex < C[n] - ACT_TOL * (1.0 + np.abs(C[n]))
        d[n] = np.where(act[n], bex, levels)
        residual = max(residual, float(np.abs(np.minimum(C[n], MU[n]) - U[n]).max()))
    return ValueSurface(spec.m, spec.R, spec.Pbar, lat.grid.k, dt, U, MU, U0, act, d,
                        residual, C if keep_C else None, iters)


def _close_slice(lat, spec, Cp, guess, intervene, tol, max_iter):
    Un = guess.copy()
    half = 0.5 * lat.dt
    for it in range(1, max_iter + 1):
        Cn = Cp + half * _u0_term(lat, spec, Un)
        new = np.minimum(Cn, intervention_values(Cn, spec, False)[0]) if intervene else Cn
        delta = np.abs(new - Un).max()
        Un = new
        if delta <= tol * (1.0 + np.abs(Un).max()):
            return Un, it
    raise RuntimeError(f"slice iteration did not converge (last change {delta:.3e})")


# -- fixed-point checks --------------------------------------------------

def apply_L(spec: ModelSpec, W: np.ndarray, lat: Lattice, backend=None) -> np.ndarray:
    """One application of the discretized first-jump operator to a full surface."""
    kern = kernels.continuation if backend is None else {
        "numpy": kernels.continuation_py, "cython": kernels.continuation_c}[backend]
    W = np.ascontiguousarray(W, dtype=float)
    out = np.empty_like(W)
    term = np.broadcast_to(-spec.salvage_fraction * spec.h * np.arange(spec.Pbar + 1),
                           W.shape[1:])
    out[0] = np.minimum(term, intervention_values(W[0], spec)[0])
    G, A = W.shape[1:]
    Cp = np.empty((G, A))
    jarg = np.empty((G, A), np.int64)
    args = lat.kernel_args()
    for n in range(1, W.shape[0]):
        kern(W, n, *args, lat.censored, spec.h, spec.zeta, spec.allow_sellback,
             lat.dt, True, Cp, jarg)
        Cn = Cp + 0.5 * lat.dt * _u0_term(lat, spec, W[n])
        out[n] = np.minimum(Cn, intervention_values(W[n], spec)[0])
    return out


def fixed_point_residual(surface: ValueSurface, spec: ModelSpec,
                         lattice: Lattice | None = None, U=None) -> float:
    """``max |L(U) - U|`` over the lattice, recomputed from scratch."""
    lat = lattice or build_lattice(spec, surface.k, surface.n_T)
    U = surface.U if U is None else U
    return float(np.abs(apply_L(spec, U, lat) - U).max())


def w_iteration(spec: ModelSpec, surface: ValueSurface, lattice: Lattice | None = None,
                max_iter: int = 100, tol: float = 1e-10):
    """Iterate ``W <- L(W)`` from ``W = U0``; returns the list of sup-norm
    distances to the forward solution and the monotonicity defect.

    The defect is the largest increase ``max(W_{j+1} - W_j)`` seen, which is
    nonpositive up to rounding for a monotone sequence.
    """
    lat = lattice or build_lattice(spec, surface.k, surface.n_T)
    W = surface.U0.copy()
    gaps, defect = [float(np.abs(W - surface.U).max())], -np.inf
    for _ in range(max_iter):
        nxt = apply_L(spec, W, lat)
        defect = max(defect, float((nxt - W).max()))
        W = nxt
        gaps.append(float(np.abs(W - surface.U).max()))
        if gaps[-1] <= tol:
            break
    return W, gaps, defect


# -- pointwise reference operators ---------------------------------------

def jump_operator_S(V, spec: ModelSpec, pi, a: int, per_state: bool = False,
                    stockout_update: str = "aggregated"):
    """Expected value just after a demand arrival at belief ``pi`` and inventory ``a``.

    ``V(belief, b)`` gives the continuation value at the post-arrival belief
    and inventory.  For state i the result is
    ``sum_z g_i(z) V(post_z, a - z1) + E_i[K((Y - a)+)]`` where the post
    belief is the Bayes update of ``pi`` for mark z.  Returns the vector over
    states if ``per_state`` else its mixture under ``pi``.
    """
    pi = np.asarray(pi, float)
    info = spec if _info_censored(spec, stockout_update) or not spec.censored \
        else spec.replace(censoring=Censoring.UNCENSORED)
    S = info.expected_penalty(a).copy()
    state = FilterState(0.0, pi, int(a))
    for z in feasible_marks(info, a):
        g = mark_likelihoods(info, z, a)
        if not np.any(g * pi > 0):
            continue
        post = jump_update(info, state, z)
        S += g * V(post.belief, post.inventory)
    return S if per_state else float(pi @ S)


def first_jump_L(V, spec: ModelSpec, n: int, dt: float, pi, a: int,
                 stockout_update: str = "aggregated") -> float:
    """Discretized first-jump operator at one point, without the lattice tables.

    ``V(j, belief)`` returns the vector over inventory of slice j (values at
    off-node beliefs by interpolation).  Minimizes over intervention at
    ``t = j dt`` (j = 0..n) and over never intervening.
    """
    if n == 0:
        term = -spec.salvage_fraction * spec.h * a
        return min(term, intervention_M(V(0, pi), spec, a)[0])
    prop = Propagator(spec, dt)
    mv = prop.m_path(np.asarray(pi, float), n)
    s = mv.sum(axis=1)
    disc = np.exp(-spec.rho * dt * np.arange(n + 1))
    hs = np.empty(n + 1)
    for j in range(n + 1):
        x = mv[j] / s[j]
        Sj = jump_operator_S(lambda b_pi, b, j=j: V(n - j, b_pi)[b], spec, x, a,
                             per_state=True, stockout_update=stockout_update)
        hs[j] = disc[j] * (s[j] * spec.c[a] + mv[j] @ (spec.lam * Sj))
    best = intervention_M(V(n, pi), spec, a)[0]
    run = 0.0
    for j in range(1, n + 1):
        run += 0.5 * dt * (hs[j - 1] + hs[j])
        x = mv[j] / s[j]
        w = s[j] * disc[j]
        Vx = V(n - j, x)
        best = min(best, run + w * intervention_M(Vx, spec, a)[0])
        if j == n:
            best = min(best, run + w * Vx[a])
    return float(best)


def surface_accessor(surface: ValueSurface, U=None):
    U = surface.U if U is None else U
    return lambda j, pi: surface.grid.interpolate(U[j], pi)


# -- persistence ---------------------------------------------------------

MAGIC = b"CINVSURF"
_HEADER = struct.Struct("<8sIqqqqdqd")
_VERSION = 1


def save_surface(surface: ValueSurface, path) -> None:
    """Header (m, R, Pbar, k, dt, n_T, residual) then U, MU, U0, act, d as
    row-major little-endian float64 arrays of shape (n_T+1, nodes, Pbar+1)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, _VERSION, surface.m, surface.R, surface.Pbar,
                              surface.k, surface.dt, surface.n_T, surface.residual))
        for arr in (surface.U, surface.MU, surface.U0, surface.act, surface.d):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_surface(path) -> ValueSurface:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, ver, m, R, Pbar, k, dt, n_T, res = _HEADER.unpack(head)
        if magic != MAGIC or ver != _VERSION:
            raise ValueError(f"{path}: not a surface file")
        shape = (n_T + 1, BeliefGrid.size(m, k), Pbar + 1)
        size = int(np.prod(shape))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 5 * size:
        raise ValueError(f"{path}: expected {5 * size} values, found {data.size}")
    U, MU, U0, act, d = (data[i * size:(i + 1) * size].reshape(shape).astype(float)
                         for i in range(5))
    return ValueSurface(m, R, Pbar, k, dt, U, MU, U0, act.astype(bool),
                        d.astype(np.int64), res)


def export_csv(surface: ValueSurface, path, every: int = 1) -> None:
    """Write ``T_rem, pi_1..pi_m, a, U, MU, act, d`` for every ``every``-th slice."""
    nodes = surface.grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T_rem"] + [f"pi_{i + 1}" for i in range(surface.m)]
                   + ["a", "U", "MU", "act", "d"])
        for n in range(0, surface.n_T + 1, every):
            t = round(n * surface.dt, 12)
            for g, node in enumerate(nodes):
                for a in range(surface.Pbar + 1):
                    w.writerow([t, *(f"{p:.10g}" for p in node), a,
                                repr(float(surface.U[n, g, a])),
                                repr(float(surface.MU[n, g, a])),
                                int(surface.act[n, g, a]), int(surface.d[n, g, a])])
