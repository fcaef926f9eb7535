"""Sampling of the hidden chain and demand stream, and Monte Carlo policy costs.

Every path draws from its own generator, spawned from one
:class:`numpy.random.SeedSequence`, so a path's randomness depends only on
the master seed and its index.  Policies are polled on a uniform grid of
step ``dt`` (the solver's step by default) including the horizon itself, and
right after every arrival.

Under censoring the controller never sees the excess of a stock-out, so the
shortage is charged at its conditional expectation given the observations,
``sum_i Pi_i(sigma) E_i[K((Y - p)+) | Y > p]`` with the post-arrival belief.
This has the same expectation as the realized penalty.  Without censoring
the realized penalty is charged.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import expm

from .filter import Demand, FilterState, Supply, apply_supply, flow_to, jump_update
from .markov import generator, normalize
from .model import ModelError, ModelSpec, censor
from .solver import DEFAULT_STEPS


@dataclass
class SamplePath:
    segments: list  # (state, start, end), partitioning [0, T]
    times: np.ndarray  # arrival times
    sizes: np.ndarray  # demand sizes in 1..R
    states: np.ndarray  # hidden state at each arrival
    seed: object = None


@dataclass
class CostBreakdown:
    storage: float = 0.0
    ordering: float = 0.0
    stockout: float = 0.0
    salvage: float = 0.0

    @property
    def total(self) -> float:
        return self.storage + self.ordering + self.stockout + self.salvage

    def to_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def path_seeds(seed, n_paths: int):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n_paths)


def _draw(rng, cdf) -> int:
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)


def sample_path(spec: ModelSpec, pi0, seed, T: float | None = None) -> SamplePath:
    rng = _rng(seed)
    T = spec.T if T is None else T
    Q, lam = spec.Q, spec.lam
    jump = np.clip(Q, 0.0, None)
    np.fill_diagonal(jump, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        jump_cdf = np.cumsum(jump / jump.sum(axis=1, keepdims=True), axis=1)
    size_cdf = np.cumsum(spec.f, axis=1)
    state = _draw(rng, np.cumsum(normalize(pi0)))
    t = 0.0
    segments, times, sizes, states = [], [], [], []
    while t < T:
        rate = -Q[state, state]
        end = min(T, t + rng.exponential(1.0 / rate)) if rate > 0 else T
        s = t + rng.exponential(1.0 / lam[state])
        while s < end:
            times.append(s)
            sizes.append(_draw(rng, size_cdf[state]) + 1)
            states.append(state)
            s += rng.exponential(1.0 / lam[state])
        segments.append((state, t, end))
        if end < T:
            state = _draw(rng, jump_cdf[state])
        t = end
    return SamplePath(segments, np.array(times), np.array(sizes, np.int64),
                      np.array(states, np.int64), seed)


def _disc_integral(rho, t0, t1):
    """Integral of exp(-rho u) over [t0, t1] (arrays allowed)."""
    if rho == 0:
        return t1 - t0
    return (np.exp(-rho * t0) - np.exp(-rho * t1)) / rho


def _stockout_tables(spec):
    A = spec.Pbar + 1
    pen = np.stack([spec.expected_penalty(a) for a in range(A)], axis=1)  # (m, A)
    tail = np.stack([spec.tail(a) for a in range(A)], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(tail > 0, pen / tail, 0.0)
    return cond  # E_i[K((Y-a)+) | Y > a]


def run_policy(spec: ModelSpec, path: SamplePath, policy, pi0, a0: int,
               dt: float | None = None):
    """Execute ``policy`` on one sample path; returns ``(log, costs)``."""
    T = spec.T
    dt = T / DEFAULT_STEPS if dt is None else dt
    n_polls = int(round(T / dt))
    cond = _stockout_tables(spec)
    state = FilterState(0.0, normalize(pi0), int(a0))
    costs = CostBreakdown()
    log = []
    rho = spec.rho

    def advance(st, t):
        costs.storage += spec.c[st.inventory] * _disc_integral(rho, st.t, t)
        return flow_to(spec, st, t)

    def poll(st):
        amt = int(policy(T - st.t, st.belief, st.inventory))
        if amt == 0:
            return st
        try:
            st = apply_supply(spec, st, amt)
        except ModelError as exc:
            raise ModelError(f"policy ordered {amt} at t={st.t:.4f}: {exc}") from None
        costs.ordering += np.exp(-rho * st.t) * (spec.h * amt + spec.zeta)
        log.append(Supply(st.t, amt))
        return st

    events = [(min(k * dt, T), 0, None) for k in range(n_polls + 1)]
    events += [(float(s), 1, (int(y))) for s, y in zip(path.times, path.sizes)]
    events.sort(key=lambda e: (e[0], e[1]))
    for t, kind, y in events:
        state = advance(state, t)
        if kind == 1:
            p = state.inventory
            mark = censor(y, p, spec.censoring)
            state = jump_update(spec, state, mark)
            log.append(Demand(t, mark))
            if y > p:
                if spec.censored:
                    pen = float(state.belief @ cond[:, p])
                else:
                    pen = float(spec.K[y - p])
                costs.stockout += np.exp(-rho * t) * pen
        state = poll(state)
    state = advance(state, T)
    costs.salvage = -spec.salvage_fraction * spec.h * state.inventory * np.exp(-rho * T)
    return log, costs


# -- batched evaluation --------------------------------------------------

@dataclass
class MCResult:
    mean: float
    stderr: float
    breakdown: dict
    totals: np.ndarray
    parts: np.ndarray  # (n_paths, 4): storage, ordering, stockout, salvage
    orders_between_arrivals: int = 0

    def summary(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n_paths": int(self.totals.size),
                "breakdown": self.breakdown,
                "orders_between_arrivals": self.orders_between_arrivals}


def _batch_policy(policy):
    if hasattr(policy, "batch"):
        return policy.batch

    def fallback(T_rem, Pi, a):
        T_rem = np.broadcast_to(T_rem, np.shape(a))
        return np.array([policy(t, p, x) for t, p, x in zip(T_rem, Pi, a)], np.int64)
    return fallback


def simulate_batch(spec: ModelSpec, paths, policy, pi0, a0: int, dt: float | None = None):
    """Lockstep evaluation of ``policy`` on a list of sample paths.

    Returns per-path cost parts (n, 4) and the number of orders placed at
    grid times after t=0, i.e. triggered by belief drift and the passage of
    time rather than by an arrival.
    """
    T, rho = spec.T, spec.rho
    dt = T / DEFAULT_STEPS if dt is None else dt
    n_polls = int(round(T / dt))
    B, m = len(paths), spec.m
    decide = _batch_policy(policy)
    cond = _stockout_tables(spec)
    Amat = generator(spec)
    E = expm(Amat * dt)
    L = max([len(p.times) for p in paths] + [1])
    times = np.full((B, L + 1), np.inf)
    sizes = np.zeros((B, L + 1), np.int64)
    for b, p in enumerate(paths):
        times[b, :len(p.times)] = p.times
        sizes[b, :len(p.sizes)] = p.sizes
    Pi = np.broadcast_to(normalize(pi0), (B, m)).copy()
    P = np.full(B, int(a0), np.int64)
    tcur = np.zeros(B)
    nxt = np.zeros(B, np.int64)
    parts = np.zeros((B, 4))
    lf = spec.lam[:, None] * spec.f  # (m, R)
    lt = spec.lam[:, None] * np.stack([spec.tail(a) for a in range(spec.Pbar + 1)], 1)
    between = 0

    def advance(idx, t):
        dur = t - tcur[idx]
        parts[idx, 0] += spec.c[P[idx]] * _disc_integral(rho, tcur[idx], t)
        same = np.isclose(dur, dt, rtol=0, atol=1e-12)
        mv = np.empty((idx.size, m))
        if same.any():
            mv[same] = Pi[idx[same]] @ E.T
        other = ~same
        if other.any():
            Es = expm(Amat[None] * dur[other][:, None, None])
            mv[other] = np.einsum("bij,bj->bi", Es, Pi[idx[other]])
        Pi[idx] = mv / mv.sum(axis=1, keepdims=True)
        tcur[idx] = t

    def order(idx, t):
        amt = np.asarray(decide(T - t, Pi[idx], P[idx]), np.int64)
        new = P[idx] + amt
        if np.any(new < 0) or np.any(new > spec.Pbar) or (
                not spec.allow_sellback and np.any(amt < 0)):
            raise ModelError("policy produced an infeasible order")
        hit = amt != 0
        tt = np.broadcast_to(t, idx.shape)[hit]
        parts[idx[hit], 1] += np.exp(-rho * tt) * (spec.h * amt[hit] + spec.zeta)
        P[idx] = new
        return int(hit.sum())

    everyone = np.arange(B)
    for k in range(n_polls):
        t = k * dt
        if k:
            advance(everyone, np.full(B, t))
        placed = order(everyone, t)
        if k:
            between += placed
        t_end = (k + 1) * dt if k + 1 < n_polls else T
        while True:
            cand = times[everyone, nxt]
            idx = np.nonzero(cand < t_end)[0]
            if idx.size == 0:
                break
            s = cand[idx]
            advance(idx, s)
            y = sizes[idx, nxt[idx]]
            p = P[idx]
            short = y > p
            if spec.censored:
                lik = np.where(short[:, None], lt[:, p].T, lf[:, y - 1].T)
            else:
                lik = lf[:, y - 1].T
            w = Pi[idx] * lik
            Pi[idx] = w / w.sum(axis=1, keepdims=True)
            if spec.censored:
                pen = np.where(short, (Pi[idx] * cond[:, p].T).sum(axis=1), 0.0)
            else:
                pen = spec.K[np.maximum(y - p, 0)]
            parts[idx, 2] += np.exp(-rho * s) * pen
            P[idx] = np.maximum(p - y, 0)
            nxt[idx] += 1
            order(idx, s)
    advance(everyone, np.full(B, T))
    between += order(everyone, T)
    parts[:, 3] = -spec.salvage_fraction * spec.h * P * np.exp(-rho * T)
    return parts, between


def mc_evaluate(spec: ModelSpec, policy, pi0, a0: int, n_paths: int, seed: int,
                dt: float | None = None, batch_size: int = 20000) -> MCResult:
    """Sample mean and standard error of the policy cost over ``n_paths`` paths."""
    if n_paths < 2:
        raise ValueError("need at least two paths")
    seeds = path_seeds(seed, n_paths)
    chunks, between = [], 0
    for lo in range(0, n_paths, batch_size):
        paths = [sample_path(spec, pi0, s) for s in seeds[lo:lo + batch_size]]
        parts, nb = simulate_batch(spec, paths, policy, pi0, a0, dt)
        chunks.append(parts)
        between += nb
    parts = np.concatenate(chunks)
    totals = parts.sum(axis=1)
    names = ("storage", "ordering", "stockout", "salvage")
    return MCResult(float(totals.mean()), float(totals.std(ddof=1) / np.sqrt(n_paths)),
                    {k: float(v) for k, v in zip(names, parts.mean(axis=0))},
                    totals, parts, between)


def write_paths_csv(result: MCResult, seed: int, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "path", "total", "storage", "ordering", "stockout", "salvage"])
        for i, (tot, row) in enumerate(zip(result.totals, result.parts)):
            w.writerow([seed, i, repr(float(tot)), *(repr(float(v)) for v in row)])


def write_summary(result: MCResult, path, **extra) -> None:
    with open(path, "w") as fh:
        json.dump({**result.summary(), **extra}, fh, indent=2)


# -- statistical checks --------------------------------------------------

def arrival_counts(spec: ModelSpec, pi0, n_paths: int, seed: int, T: float | None = None):
    return np.array([len(sample_path(spec, pi0, s, T).times)
                     for s in path_seeds(seed, n_paths)])


def tail_bound_check(spec: ModelSpec, pi0, n: int, T: float, n_paths: int, seed: int = 0):
    """Empirical ``P{sigma_n < T}`` against the bound ``lam_bar T / (n - 1)``.

    Returns ``(frequency, bound, stderr, ok)`` where ``ok`` means the
    frequency does not exceed the bound by more than three standard errors.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    counts = arrival_counts(spec, pi0, n_paths, seed, T)
    freq = float(np.mean(counts >= n))
    bound = spec.lam_bar * T / (n - 1)
    se = float(np.sqrt(max(freq * (1 - freq), 1e-300) / n_paths))
    return freq, bound, se, bool(freq <= bound + 3 * se)
