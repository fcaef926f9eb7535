"""Regenerate the bundled model files in src/censinv/data."""
from pathlib import Path

import numpy as np

from censinv.model import ModelSpec, check, save_model, truncated_negbin

DATA = Path(__file__).resolve().parents[1] / "src" / "censinv" / "data"


def two_state():
    base = ModelSpec(
        Q=[[-1.0, 1.0], [1.0, -1.0]], lam=[2.0, 1.0],
        f=[[0.5, 0.4, 0.1], [0.1, 0.3, 0.6]], Pbar=3,
        c=2.0 * np.arange(4), K=np.round(3.2 * np.arange(4), 10), h=1.25, zeta=1.0,
        rho=0.0, T=3.0, censoring="Censored")
    return {
        "censored": base,
        "uncensored": base.replace(censoring="Uncensored"),
        "K2a": base.replace(K=2.0 * np.arange(4)),
        "c0": base.replace(c=np.zeros(4)),
        "zeta0": base.replace(zeta=0.0),
        "salvage50": base.replace(salvage_fraction=0.5),
        "sellback": base.replace(allow_sellback=True),
    }


def three_state(Pbar=20, R=18):
    f = np.stack([truncated_negbin(r, 0.99, R) for r in (100, 900, 1600)])
    base = ModelSpec(
        Q=[[-0.8, 0.4, 0.4], [0.4, -0.8, 0.4], [0.4, 0.4, -0.8]],
        lam=[1.0, 1.0, 1.0], f=f, Pbar=Pbar,
        c=np.arange(Pbar + 1, dtype=float), K=2.0 * np.arange(R + 1),
        h=0.0, zeta=0.0, rho=0.0, T=5.0, censoring="Censored")
    return {
        "K2a": base,
        "K4a": base.replace(K=4.0 * np.arange(R + 1)),
        "us": base.replace(Q=[[-0.2, 0.1, 0.1], [0.0, -0.2, 0.2], [0.0, 0.0, 0.0]]),
        "ds": base.replace(Q=[[0.0, 0.0, 0.0], [0.2, -0.2, 0.0], [0.1, 0.1, -0.2]]),
    }


def main():
    DATA.mkdir(exist_ok=True)
    for prefix, specs in (("two_state", two_state()), ("three_state", three_state())):
        for key, spec in specs.items():
            save_model(check(spec), DATA / f"{prefix}_{key}.json")


if __name__ == "__main__":
    main()
