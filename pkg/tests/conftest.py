import re

import numpy as np
import pytest

from censinv import solver
from censinv.cli import bundled_model
from censinv.model import ModelSpec


@pytest.fixture(scope="session")
def two_state():
    return bundled_model("two_state_censored")


@pytest.fixture(scope="session")
def small_surface(two_state):
    """Coarse but complete solve of the censored two-state instance."""
    return solver.solve_forward(two_state, 20, 30, keep_C=True)


@pytest.fixture
def single_state():
    return ModelSpec(Q=[[0.0]], lam=[2.0], f=[[0.1, 0.3, 0.6]], Pbar=3,
                     c=[0, 1, 2, 3], K=[0, 3.2, 6.4, 9.6], T=1.0)


def random_spec(rng, m=2, R=3, Pbar=3, censoring="Censored", **kw):
    Q = rng.uniform(0.1, 2.0, (m, m))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    f = rng.dirichlet(np.ones(R), size=m)
    base = dict(Q=Q, lam=rng.uniform(0.5, 3.0, m), f=f, Pbar=Pbar,
                c=np.cumsum(rng.uniform(0, 1, Pbar + 1)),
                K=np.concatenate([[0.0], np.cumsum(rng.uniform(0, 2, R))]),
                h=0.5, zeta=0.5, T=1.0, censoring=censoring)
    base.update(kw)
    return ModelSpec(**base)


# one summary line per acceptance criterion
def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d)", rep.nodeid)
            if m and rep.when == "call" or (m and key == "error"):
                ok = key == "passed"
                outcomes[int(m.group(1))] = outcomes.get(int(m.group(1)), True) and ok
    if outcomes:
        terminalreporter.section("acceptance criteria")
        for n in sorted(outcomes):
            terminalreporter.write_line(f"criterion {n}: {'PASS' if outcomes[n] else 'FAIL'}")
