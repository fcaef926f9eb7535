"""Exact filter for the hidden demand regime, with inventory bookkeeping.

Between arrivals the belief follows the deterministic flow of
:mod:`censinv.markov`; at an arrival it is reweighted by
``lambda_i * g_i(mark)``.  Supply orders move inventory but carry no
information about the regime.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Union

import numpy as np
from scipy.linalg import expm

from .markov import BELIEF_TOL, flow_x, normalize, propagate_m
from .model import Mark, ModelError, mark_likelihoods


@dataclass(frozen=True)
class FilterState:
    t: float
    belief: np.ndarray
    inventory: int


@dataclass(frozen=True)
class Demand:
    t: float
    mark: Mark


@dataclass(frozen=True)
class Supply:
    t: float
    amount: int


Event = Union[Demand, Supply]


class InfeasibleMark(ModelError):
    """A mark with zero likelihood under every regime."""


def flow(spec, state: FilterState, dt: float) -> FilterState:
    if dt < 0:
        raise ValueError(f"negative duration {dt}")
    if dt == 0:
        return state
    return replace(state, t=state.t + dt, belief=flow_x(spec, state.belief, dt))


def flow_to(spec, state: FilterState, t: float) -> FilterState:
    """Flow up to the absolute time ``t``, landing on it exactly."""
    if t == state.t:
        return state
    return replace(flow(spec, state, t - state.t), t=t)


def jump_update(spec, state: FilterState, mark: Mark) -> FilterState:
    p = state.inventory
    if mark.filled > p:
        raise InfeasibleMark(f"filled {mark.filled} exceeds inventory {p}")
    w = spec.lam * mark_likelihoods(spec, mark, p) * state.belief
    total = w.sum()
    if not total > 0:
        raise InfeasibleMark(f"mark {mark} impossible at inventory {p}")
    return replace(state, belief=normalize(w / total), inventory=p - mark.filled)


def apply_supply(spec, state: FilterState, amount: int) -> FilterState:
    amount = int(amount)
    new = state.inventory + amount
    if amount < 0 and not spec.allow_sellback:
        raise ModelError("negative supply without sell-back")
    if not 0 <= new <= spec.Pbar:
        raise ModelError(f"supply {amount} takes inventory to {new}, outside [0, {spec.Pbar}]")
    if amount == 0:
        return state
    return replace(state, inventory=new)


def _ordered(log: Iterable[Event]) -> list[Event]:
    log = list(log)
    times = [e.t for e in log]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("event log times must be nondecreasing")
    return log


def replay(spec, pi0, a0: int, log: Iterable[Event], horizon: float | None = None):
    """Run the filter over a log; returns states before and after every event.

    The first entry is the initial state; if ``horizon`` is given, a final
    flow to that time is appended.
    """
    state = FilterState(0.0, normalize(pi0), int(a0))
    states = [state]
    for ev in _ordered(log):
        state = flow_to(spec, state, ev.t)
        states.append(state)
        if isinstance(ev, Demand):
            state = jump_update(spec, state, ev.mark)
        else:
            state = apply_supply(spec, state, ev.amount)
        states.append(state)
    if horizon is not None:
        if horizon < state.t:
            raise ValueError("horizon precedes the last event")
        states.append(flow_to(spec, state, horizon))
    return states


def replay_unnormalized(spec, pi0, a0: int, log: Iterable[Event],
                        horizon: float | None = None):
    """Same trajectory as :func:`replay`, carried as likelihood weights.

    Weights are propagated by the linear m-flow and multiplied componentwise
    by ``lambda_i g_i`` at arrivals; they are never renormalized, so this
    path is only suitable for short logs.
    """
    L = np.asarray(pi0, dtype=float).copy()
    t, p = 0.0, int(a0)
    out = [(t, L.copy(), p)]
    for ev in _ordered(log):
        L = propagate_m(spec, L, ev.t - t)
        t = ev.t
        out.append((t, L.copy(), p))
        if isinstance(ev, Demand):
            L = L * spec.lam * mark_likelihoods(spec, ev.mark, p)
            if not L.sum() > 0:
                raise InfeasibleMark(f"mark {ev.mark} impossible at inventory {p}")
            p -= ev.mark.filled
        else:
            p += int(ev.amount)
        out.append((t, L.copy(), p))
    if horizon is not None:
        out.append((horizon, propagate_m(spec, L, horizon - t), p))
    return out


def hmm_oracle(spec, pi0, a0: int, log: Iterable[Event], delta: float,
               horizon: float | None = None):
    """Discrete-time HMM filter on a ``delta`` grid.

    Each step applies the chain transition ``exp(Q delta)`` and then either
    the no-arrival likelihood ``exp(-lambda_i delta)`` or, for a step holding
    arrivals, ``lambda_i delta g_i`` per arrival.  Returns the beliefs
    sampled at every event time (after the event) as ``(t, belief, P)``.
    First-order accurate in ``delta``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    log = _ordered(log)
    end = horizon if horizon is not None else (log[-1].t if log else 0.0)
    P = expm(spec.Q * delta)
    stay = np.exp(-spec.lam * delta)
    pi, p = normalize(pi0), int(a0)
    out = [(0.0, pi.copy(), p)]
    i = 0

    def consume(upto):
        nonlocal pi, p, i
        arrived = False
        while i < len(log) and log[i].t <= upto:
            ev = log[i]
            i += 1
            if isinstance(ev, Demand):
                lik = mark_likelihoods(spec, ev.mark, p)
                if not (lik * pi).sum() > 0:
                    raise InfeasibleMark(f"mark {ev.mark} impossible at inventory {p}")
                pi = normalize(pi * spec.lam * delta * lik)
                p -= ev.mark.filled
                arrived = True
            else:
                p += int(ev.amount)
            out.append((ev.t, pi.copy(), p))
        return arrived

    consume(0.0)
    n_steps = int(np.ceil(end / delta - 1e-9))
    # runs of event-free steps apply the same one-step map, so batch them
    quiet = P * stay[None, :]
    s = 0
    while s < n_steps:
        if i < len(log):
            ev_step = max(int(np.ceil(log[i].t / delta - 1e-9)), s + 1)
        else:
            ev_step = n_steps + 1
        run = min(ev_step, n_steps + 1) - s - 1
        if run > 0:
            pi = normalize(pi @ np.linalg.matrix_power(quiet, run))
            s += run
        if s >= n_steps:
            break
        s += 1
        pi = pi @ P
        if not consume(s * delta + 1e-12):
            pi = normalize(pi * stay)
    if horizon is not None:
        out.append((horizon, pi.copy(), p))
    return out


# -- JSON lines ---------------------------------------------------------

def event_to_json(ev: Event) -> dict:
    if isinstance(ev, Supply):
        return {"t": ev.t, "kind": "supply", "xi": int(ev.amount)}
    m = ev.mark
    d = {"t": ev.t, "kind": "demand", "z1": m.filled,
         "z2": "stockout" if m.stockout else "full"}
    if not m.stockout:
        d["y"] = m.size
    return d


def event_from_json(d: dict) -> Event:
    if d["kind"] == "supply":
        return Supply(float(d["t"]), int(d["xi"]))
    if d["kind"] != "demand":
        raise ValueError(f"unknown event kind {d['kind']!r}")
    if d["z2"] == "stockout":
        return Demand(float(d["t"]), Mark.stock_out(int(d["z1"])))
    return Demand(float(d["t"]), Mark(int(d["z1"]), int(d.get("y", d["z1"]))))


def read_log(path) -> list[Event]:
    with open(path) as fh:
        return [event_from_json(json.loads(line)) for line in fh if line.strip()]


def write_log(log: Iterable[Event], path) -> None:
    with open(path, "w") as fh:
        for ev in log:
            fh.write(json.dumps(event_to_json(ev)) + "\n")


def beliefs_close(a, b, tol: float = BELIEF_TOL) -> bool:
    return bool(np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol)
