"""Compensation-capacitor tuning, slab-position search and matching audit."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .circuit import MMUnitCellParams, SystemModel, solve_currents
from .errors import InfeasibleTargetError, SingularSystemError, WPTError
from .metrics import input_impedance, port_metrics, reflection, resonant_frequency
from .sweep import FrequencyGrid, frequency_sweep, refine_peak

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2

#: |S11| below this counts as matched.
MATCH_THRESHOLD = 0.1


@dataclass(frozen=True)
class TuneResult:
    tuned_value: float
    achieved_objective: float
    iterations: int
    converged: bool
    cell: MMUnitCellParams | None = None
    unimodal: bool = True
    probes: tuple = ()


def tune_compensation_capacitor(cell: MMUnitCellParams, f_target: float) -> TuneResult:
    """Set ``c_compensation`` so the cell resonates at ``f_target``.

    Closed form: ``C_total = 1 / ((2 pi f)^2 L)``. Raises InfeasibleTargetError
    when the stray capacitance alone already exceeds that total.
    """
    if not f_target > 0:
        raise InfeasibleTargetError(f"target frequency must be > 0, got {f_target!r}")
    w = 2 * math.pi * f_target
    c_total = 1.0 / (w * w * cell.inductance)
    c_com = c_total - cell.c_stray
    if c_com < 0:
        # Allow rounding noise at the boundary f_target == f(L, c_stray).
        if c_com > -1e-12 * c_total:
            c_com = 0.0
        else:
            f_max = resonant_frequency(cell.inductance, cell.c_stray)
            raise InfeasibleTargetError(
                f"target {f_target!r} Hz exceeds {f_max!r} Hz reachable with c_stray alone")
    tuned = replace(cell, c_compensation=c_com)
    return TuneResult(
        tuned_value=c_com,
        achieved_objective=resonant_frequency(tuned.inductance, tuned.capacitance),
        iterations=0,
        converged=True,
        cell=tuned,
    )


def _peak_objective(template, grid: FrequencyGrid, workers: int):
    builder = template.at_position if hasattr(template, "at_position") else template

    def objective(position: float) -> float:
        try:
            result = frequency_sweep(builder(position), grid, workers)
            value = result.peak()[1]
        except SingularSystemError as exc:
            raise SingularSystemError(f"at slab position {position!r} m: {exc}", exc.omega) from exc
        if not math.isfinite(value):
            raise WPTError(f"non-finite objective at slab position {position!r} m")
        return value

    return objective


def golden_section_max(f, a: float, b: float, tol: float, max_iter: int | None = None):
    """Maximise a unimodal ``f`` on ``[a, b]`` to interval width ``tol``.

    Returns ``(probes, iterations, width)`` where ``probes`` maps every evaluated
    point to its value. On equal interior values the upper point is dropped,
    so a flat objective contracts toward ``a``.
    """
    probes = {}

    def ev(x):
        if x not in probes:
            probes[x] = f(x)
        return probes[x]

    h = b - a
    if h <= tol:
        return probes, 0, h
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    if max_iter is not None:
        n = min(n, max_iter)
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    yc, yd = ev(c), ev(d)
    it = 0
    for it in range(1, n + 1):
        if yc >= yd:
            b, d, yd = d, c, yc
            h = INV_PHI * h
            c = a + INV_PHI2 * h
            yc = ev(c)
        else:
            a, c, yc = c, d, yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = ev(d)
        if b - a <= tol:
            break
    return probes, it, b - a


def optimize_slab_position(template, bounds: tuple[float, float], grid: FrequencyGrid,
                           tol: float | None = None, workers: int = 1,
                           scan_points: int = 9) -> TuneResult:
    """Slab position in ``bounds`` that maximises the peak |S21|.

    A ``scan_points`` bracket scan runs first. If the scanned profile is
    unimodal, golden-section search refines inside the bracket around the
    best scan point; otherwise the result is flagged ``unimodal=False`` and
    the search is still confined to that bracket. The returned position is
    the best probe seen (lowest position on ties). ``tol`` defaults to 1e-4
    of the gap width ``bounds[1] - bounds[0]``.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if hi < lo:
        lo, hi = hi, lo
    objective = _peak_objective(template, grid, workers)
    if hi == lo:
        value = objective(lo)
        return TuneResult(lo, value, 0, True, probes=((lo, value),))
    if tol is None:
        tol = 1e-4 * (hi - lo)

    xs = np.linspace(lo, hi, scan_points)
    ys = np.array([objective(float(x)) for x in xs])
    probes = dict(zip(map(float, xs), ys))
    best = int(np.argmax(ys))
    diffs = np.diff(ys)
    # Unimodal: non-decreasing up to the best point, non-increasing after it.
    unimodal = bool(np.all(diffs[:best] >= -1e-12) and np.all(diffs[best:] <= 1e-12))

    a = float(xs[max(best - 1, 0)])
    b = float(xs[min(best + 1, scan_points - 1)])
    gs_probes, iterations, width = golden_section_max(objective, a, b, tol)
    probes.update(gs_probes)

    ordered = sorted(probes.items())
    values = np.array([v for _, v in ordered])
    k = int(np.argmax(values))
    pos, val = ordered[k]
    return TuneResult(pos, float(val), iterations, converged=width <= tol,
                      unimodal=unimodal, probes=tuple(ordered))


@dataclass(frozen=True)
class MatchReport:
    omega: float
    z_in: complex
    s11: complex
    s21: complex
    matched: bool

    @property
    def s11_mag(self) -> float:
        return abs(self.s11)

    @property
    def power_balance(self) -> float:
        """``|S11|^2 + |S21|^2``; at most 1 for a passive network."""
        return abs(self.s11) ** 2 + abs(self.s21) ** 2


def match_check(model: SystemModel, omega: float) -> MatchReport:
    """Input impedance and reflection at the source port.

    ``matched`` is ``|S11| < MATCH_THRESHOLD``. S21 is only reported when the
    model has a load coil.
    """
    x = solve_currents(model, omega)
    z_in = complex(input_impedance(model, x))
    s11 = complex(reflection(z_in, model.source.r_source))
    s21 = complex("nan")
    if model.has_role("load") and model.source.r_source > 0 and model.load.r_load > 0:
        s21 = complex(port_metrics(model, x)[1])
    return MatchReport(float(omega), z_in, s11, s21, abs(s11) < MATCH_THRESHOLD)


def peak_of(model: SystemModel, grid: FrequencyGrid) -> tuple[float, float]:
    r = frequency_sweep(model, grid)
    return refine_peak(r.frequencies, np.abs(r.s21[0]))
