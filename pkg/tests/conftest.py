import functools

import numpy as np
import pytest

from randjacobi.model import ModelEnsemble, PeriodicBlock
from randjacobi.normal_form import calibrated_normal_form
from randjacobi.spectral import select_edge

B0 = PeriodicBlock.constant("B0", 1.0, 0.0)
BV = PeriodicBlock.constant("BV", 1.0, 0.5)


def reference(p=0.8):
    return ModelEnsemble((B0, BV), (p, 1 - p))


@pytest.fixture(scope="session")
def ref_ensemble():
    return reference(0.8)


@pytest.fixture(scope="session")
def ref_form(ref_ensemble):
    return calibrated_normal_form(select_edge(ref_ensemble, "B0:lower"), ref_ensemble)


@pytest.fixture(scope="session")
def dimer_ensemble():
    D = PeriodicBlock("D", (1.0, 1.0), (0.5, -0.5))
    E = PeriodicBlock("E", (1.0, 0.8), (0.3, -0.3))
    return ModelEnsemble((D, E), (0.7, 0.3))


def random_block(rng, L, label="R"):
    t = tuple(float(x) for x in rng.uniform(0.5, 1.5, L))
    v = tuple(float(x) for x in rng.uniform(-1.0, 1.0, L))
    return PeriodicBlock(label, t, v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@functools.lru_cache(maxsize=None)
def random_edge_forms(count, seed=2024, max_tries=500):
    """Randomized ensembles of 2-3 blocks with a qualifying edge and its calibrated form."""
    from randjacobi.normal_form import NoValidRadius
    from randjacobi.spectral import find_shared_edges

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(max_tries):
        L = int(rng.integers(1, 4))
        n = int(rng.integers(2, 4))
        p = rng.dirichlet(np.ones(n))
        ens = ModelEnsemble(tuple(random_block(rng, L, f"R{i}") for i in range(n)), tuple(p / p.sum()))
        good = [c.edge for c in find_shared_edges(ens) if c.ok]
        if not good:
            continue
        try:
            out.append((ens, calibrated_normal_form(good[0], ens)))
        except NoValidRadius:
            continue
        if len(out) == count:
            return out
    raise RuntimeError("not enough random edges")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
