import math

import numpy as np
import pytest

from mmwpt.circuit import (
    DRIVER,
    LOAD,
    MM_CELL,
    RECEIVER,
    TRANSMITTER,
    CouplingSet,
    LoadSpec,
    ResonatorNode,
    ResonatorParams,
    SourceSpec,
    SystemModel,
)

F0_LC = (4e-6, 40e-12)


def tuned(r: float, l: float, f0: float) -> ResonatorParams:
    w0 = 2 * math.pi * f0
    return ResonatorParams(r, l, 1.0 / (w0 * w0 * l))


def critical_pair(r_s=50.0, r_l=50.0, r1=0.0, r2=0.0, v_s=1.0):
    """Lossless-ish two-resonator link with omega*M = sqrt(R_s R_L) at resonance.

    Returns ``(model, omega)``.
    """
    l, c = F0_LC
    w0 = 1.0 / math.sqrt(l * c)
    m = math.sqrt((r_s + r1) * (r_l + r2)) / w0
    nodes = (ResonatorNode(DRIVER, ResonatorParams(r1, l, c)),
             ResonatorNode(LOAD, ResonatorParams(r2, l, c)))
    model = SystemModel(nodes, CouplingSet.from_pairs(2, {(0, 1): m}),
                        SourceSpec(v_s, r_s), LoadSpec(r_l))
    return model, w0


def random_model(rng: np.random.Generator, n_cells: int | None = None, lossless: bool = False,
                 kmax: float = 1.0) -> SystemModel:
    """Chain driver, tx, cells, rx, load with random valid parameters and couplings."""
    if n_cells is None:
        n_cells = int(rng.integers(0, 10))
    roles = [DRIVER, TRANSMITTER] + [MM_CELL] * n_cells + [RECEIVER, LOAD]
    nodes = []
    for i, role in enumerate(roles):
        r = 0.0 if lossless else float(rng.uniform(0, 5))
        l = float(10 ** rng.uniform(-7, -3))
        c = float(10 ** rng.uniform(-13, -9))
        index = i - 1 if role == MM_CELL else None
        nodes.append(ResonatorNode(role, ResonatorParams(r, l, c), index=index))
    n = len(nodes)
    L = np.array([node.params.inductance for node in nodes])
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.6:
                m[i, j] = m[j, i] = rng.uniform(-kmax, kmax) * math.sqrt(L[i] * L[j])
    src = SourceSpec(float(rng.uniform(0.1, 10)), float(rng.uniform(1, 100)))
    return SystemModel(tuple(nodes), CouplingSet(m), src, LoadSpec(float(rng.uniform(1, 100))))


def symmetric_slab(rng, n=9):
    """Random model with ``n`` identical, identically coupled cells."""
    f0 = float(rng.uniform(5e6, 20e6))
    cell = tuned(float(rng.uniform(0, 1)), float(rng.uniform(0.5e-6, 3e-6)), f0 * rng.uniform(0.9, 1.1))
    coil = tuned(float(rng.uniform(0, 1)), float(rng.uniform(1e-6, 8e-6)), f0)
    outer = tuned(float(rng.uniform(0, 1)), float(rng.uniform(1e-6, 1e-3)), f0)
    nodes = ((ResonatorNode(DRIVER, outer), ResonatorNode(TRANSMITTER, coil))
             + tuple(ResonatorNode(MM_CELL, cell, i + 1) for i in range(n))
             + (ResonatorNode(RECEIVER, coil), ResonatorNode(LOAD, outer)))
    size = len(nodes)
    L = np.array([x.params.inductance for x in nodes])
    m = np.zeros((size, size))

    def put(i, j, k):
        m[i, j] = m[j, i] = k * math.sqrt(L[i] * L[j])

    tx, rx = 1, size - 2
    cells = range(2, 2 + n)
    put(0, tx, rng.uniform(0.01, 0.3))
    put(rx, size - 1, rng.uniform(0.01, 0.3))
    put(tx, rx, rng.uniform(-0.02, 0.02))
    k_tc, k_cr = rng.uniform(0, 0.3 / math.sqrt(n)), rng.uniform(0, 0.3 / math.sqrt(n))
    k_cc = rng.uniform(0, 0.05)
    for c in cells:
        put(tx, c, k_tc)
        put(c, rx, k_cr)
        for c2 in cells:
            if c2 > c:
                put(c, c2, k_cc)
    return SystemModel(nodes, CouplingSet(m), SourceSpec(1.0, float(rng.uniform(1, 100))),
                       LoadSpec(float(rng.uniform(1, 100)))), f0


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_criteria: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, [title, True])
    entry[1] = entry[1] and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
