"""Problem instances, censoring of demand, and mark likelihoods.

A :class:`ModelSpec` is immutable once built.  Inventory levels and demand
sizes are integers, so cost tables are indexed directly by level.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats


class Censoring(str, enum.Enum):
    CENSORED = "Censored"
    UNCENSORED = "Uncensored"


class ModelError(ValueError):
    """Raised for an invalid instance or an out-of-range query."""


@dataclass(frozen=True)
class Mark:
    """Observed datum at a demand arrival.

    ``filled`` is the amount shipped out.  ``size`` is the revealed demand
    size, or ``None`` for a censored stock-out.
    """

    filled: int
    size: int | None

    @property
    def stockout(self) -> bool:
        return self.size is None

    @classmethod
    def full(cls, y: int) -> "Mark":
        return cls(int(y), int(y))

    @classmethod
    def stock_out(cls, filled: int) -> "Mark":
        return cls(int(filled), None)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    Q: np.ndarray
    lam: np.ndarray
    f: np.ndarray
    Pbar: int
    c: np.ndarray
    K: np.ndarray
    h: float = 0.0
    zeta: float = 0.0
    rho: float = 0.0
    T: float = 1.0
    censoring: Censoring = Censoring.CENSORED
    salvage_fraction: float = 0.0
    allow_sellback: bool = False
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for attr in ("Q", "lam", "f", "c", "K"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "censoring", Censoring(self.censoring))
        object.__setattr__(self, "Pbar", int(self.Pbar))

    @property
    def m(self) -> int:
        return self.lam.shape[0]

    @property
    def R(self) -> int:
        return self.f.shape[1]

    @property
    def censored(self) -> bool:
        return self.censoring is Censoring.CENSORED

    @property
    def lam_bar(self) -> float:
        return float(self.lam.max())

    def replace(self, **changes) -> "ModelSpec":
        kw = {k: getattr(self, k) for k in _FIELDS}
        kw["name"] = self.name
        kw.update(changes)
        return ModelSpec(**kw)

    def tail(self, a: int) -> np.ndarray:
        """Per-state probability that demand exceeds ``a``."""
        return self.f[:, a:].sum(axis=1) if a < self.R else np.zeros(self.m)

    def expected_penalty(self, a: int) -> np.ndarray:
        """Per-state E_i[K((Y - a)+)]."""
        y = np.arange(1, self.R + 1)
        short = np.clip(y - a, 0, None)
        return self.f @ self.K[short]

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "Q": self.Q.tolist(),
            "lambda": self.lam.tolist(),
            "f": self.f.tolist(),
            "R": self.R,
            "Pbar": self.Pbar,
            "c": self.c.tolist(),
            "K": self.K.tolist(),
            "h": self.h,
            "zeta": self.zeta,
            "rho": self.rho,
            "T": self.T,
            "censoring": self.censoring.value,
            "salvage_fraction": self.salvage_fraction,
            "allow_sellback": self.allow_sellback,
        }

    @classmethod
    def from_dict(cls, d: dict, name: str = "") -> "ModelSpec":
        spec = cls(
            Q=d["Q"],
            lam=d["lambda"],
            f=d["f"],
            Pbar=d["Pbar"],
            c=d["c"],
            K=d["K"],
            h=d.get("h", 0.0),
            zeta=d.get("zeta", 0.0),
            rho=d.get("rho", 0.0),
            T=d["T"],
            censoring=d.get("censoring", "Censored"),
            salvage_fraction=d.get("salvage_fraction", 0.0),
            allow_sellback=d.get("allow_sellback", False),
            name=name,
        )
        if "m" in d and int(d["m"]) != spec.m:
            raise ModelError(f"m={d['m']} but lambda has {spec.m} entries")
        if "R" in d and int(d["R"]) != spec.R:
            raise ModelError(f"R={d['R']} but f has {spec.R} columns")
        return spec


_FIELDS = ("Q", "lam", "f", "Pbar", "c", "K", "h", "zeta", "rho", "T",
           "censoring", "salvage_fraction", "allow_sellback")


def load_model(path) -> ModelSpec:
    path = Path(path)
    with open(path) as fh:
        return ModelSpec.from_dict(json.load(fh), name=path.stem)


def save_model(spec: ModelSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)


def validate(spec: ModelSpec) -> list[str]:
    """Return every violated invariant, prefixed by its field path.

    An empty list means the instance is well formed.
    """
    out = []
    m = spec.lam.shape[0] if spec.lam.ndim == 1 else -1
    if m < 1:
        return ["lambda: must be a non-empty vector"]
    Q, f = spec.Q, spec.f
    if Q.shape != (m, m):
        out.append(f"Q: shape {Q.shape} != ({m}, {m})")
    else:
        for i, row in enumerate(Q):
            if abs(row.sum()) > 1e-12:
                out.append(f"Q[{i}]: row {i} sums to {row.sum():g}")
            off = np.delete(row, i)
            if (off < 0).any():
                out.append(f"Q[{i}]: negative off-diagonal rate")
    if not np.all(np.isfinite(spec.lam)) or (spec.lam <= 0).any():
        out.append("lambda: all intensities must be finite and > 0")
    if f.ndim != 2 or f.shape[0] != m or f.shape[1] < 1:
        out.append(f"f: shape {f.shape} must be ({m}, R) with R >= 1")
    else:
        if (f < 0).any():
            out.append("f: negative probability")
        for i, row in enumerate(f):
            if abs(row.sum() - 1.0) > 1e-12:
                out.append(f"f[{i}]: row {i} sums to {row.sum():.15g}")
    if spec.Pbar < 1:
        out.append("Pbar: must be a positive integer")
    if spec.c.shape != (spec.Pbar + 1,):
        out.append(f"c: length {spec.c.shape} != Pbar+1 = {spec.Pbar + 1}")
    else:
        if spec.c[0] < 0:
            out.append("c[0]: c(0) < 0")
        if (np.diff(spec.c) < 0).any():
            out.append("c: not nondecreasing")
    R = f.shape[1] if f.ndim == 2 else 0
    if spec.K.shape != (R + 1,):
        out.append(f"K: length {spec.K.shape} != R+1 = {R + 1}")
    else:
        if spec.K[0] != 0:
            out.append("K[0]: K(0) != 0")
        if (np.diff(spec.K) < 0).any():
            out.append("K: not nondecreasing")
    if spec.h < 0:
        out.append("h: negative unit order cost")
    if spec.zeta < 0:
        out.append("zeta: negative fixed order cost")
    if spec.rho < 0:
        out.append("rho: negative discount rate")
    if not spec.T > 0:
        out.append("T: horizon must be > 0")
    if not 0.0 <= spec.salvage_fraction <= 1.0:
        out.append("salvage_fraction: outside [0, 1]")
    return out


def check(spec: ModelSpec) -> ModelSpec:
    problems = validate(spec)
    if problems:
        raise ModelError("; ".join(problems))
    return spec


def censor(y: int, p: int, mode: Censoring | str, R: int | None = None,
           Pbar: int | None = None) -> Mark:
    """Mark observed when demand ``y`` meets inventory ``p``."""
    if y < 1 or (R is not None and y > R):
        raise ModelError(f"demand size {y} out of range")
    if p < 0 or (Pbar is not None and p > Pbar):
        raise ModelError(f"inventory {p} out of range")
    if y <= p:
        return Mark.full(y)
    if Censoring(mode) is Censoring.CENSORED:
        return Mark.stock_out(p)
    return Mark(int(p), int(y))


def mark_likelihood(spec: ModelSpec, i: int, z: Mark, p: int) -> float:
    """Conditional probability of mark ``z`` at inventory ``p`` in state ``i``.

    States are 0-based.  Impossible marks have likelihood 0.
    """
    if not 0 <= i < spec.m:
        raise ModelError(f"state {i} out of range")
    if not 0 <= p <= spec.Pbar:
        raise ModelError(f"inventory {p} out of range")
    return float(mark_likelihoods(spec, z, p)[i])


def mark_likelihoods(spec: ModelSpec, z: Mark, p: int) -> np.ndarray:
    """Vector over states of :func:`mark_likelihood`."""
    zero = np.zeros(spec.m)
    if z.stockout:
        if not spec.censored or z.filled != p:
            return zero
        return spec.tail(p)
    y = z.size
    if not 1 <= y <= spec.R:
        return zero
    if y <= p:
        return spec.f[:, y - 1].copy() if z.filled == y else zero
    # excess demand is only revealed without censoring
    if spec.censored or z.filled != p:
        return zero
    return spec.f[:, y - 1].copy()


def feasible_marks(spec: ModelSpec, p: int) -> list[Mark]:
    """All marks that can occur at inventory ``p``."""
    if not spec.censored:
        return [censor(y, p, spec.censoring) for y in range(1, spec.R + 1)]
    marks = [Mark.full(y) for y in range(1, min(p, spec.R) + 1)]
    if p < spec.R:
        marks.append(Mark.stock_out(p))
    return marks


def truncated_negbin(r: float, p: float, R: int) -> np.ndarray:
    """NegBin(r, p) pmf conditioned on {1..R}, as a length-R array."""
    k = np.arange(1, R + 1)
    w = stats.nbinom.pmf(k, r, p)
    return w / w.sum()
