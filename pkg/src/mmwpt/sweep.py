"""Frequency, distance, slab-position and topology sweeps.

Sweep points are independent and may be evaluated on several threads; the
results are always reassembled in input order, so the worker count never
changes the output.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .circuit import (
    DRIVER,
    LOAD,
    RECEIVER,
    TRANSMITTER,
    CouplingSet,
    LoadSpec,
    ResonatorNode,
    ResonatorParams,
    SourceSpec,
    SystemModel,
    remove_cells,
)
from .coupling import coupling_from_k
from .errors import EmptyResultError, ModelValidationError, TuningError
from .metrics import FrequencyResponse, resonant_frequency, responses

CSV_HEADER = ("swept_value", "frequency_hz", "s21_re", "s21_im", "s21_mag", "s11_mag", "pte_percent")


@dataclass(frozen=True)
class FrequencyGrid:
    f_min: float
    f_max: float
    points: int
    spacing: str = "linear"

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ModelValidationError(f"need 0 < f_min < f_max, got {self.f_min!r}, {self.f_max!r}")
        if int(self.points) != self.points or self.points < 2:
            raise ModelValidationError(f"grid needs at least 2 points, got {self.points!r}")
        if self.spacing not in ("linear", "logarithmic"):
            raise ModelValidationError(f"spacing must be 'linear' or 'logarithmic', got {self.spacing!r}")

    def frequencies(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(self.f_min, self.f_max, int(self.points))
        return np.geomspace(self.f_min, self.f_max, int(self.points))


def model_fingerprint(model: SystemModel) -> str:
    """SHA-256 of an exact text rendering of the model."""
    h = hashlib.sha256()
    for node in model.resonators:
        p = node.params
        h.update(f"{node.label}|{p.resistance.hex()}|{p.inductance.hex()}|{p.capacitance.hex()};".encode())
    h.update(np.ascontiguousarray(model.couplings.m).tobytes())
    h.update(f"{float(model.source.v_source).hex()}|{float(model.source.r_source).hex()}|"
             f"{float(model.load.r_load).hex()}".encode())
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the stamp for reproducible output files.
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        t = _dt.datetime.now(tz=_dt.timezone.utc)
    return t.replace(microsecond=0).isoformat()


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "NaN"
    return f"{x:.17g}"


def _jnum(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Responses on a frequency grid for each value of a swept variable.

    Array attributes have shape ``(len(values), len(frequencies))``. Points
    where the solve failed are NaN (gaps), never filled in.
    """

    swept_variable: str
    values: tuple
    frequencies: np.ndarray
    s21: np.ndarray
    s11: np.ndarray
    pte: np.ndarray
    gain: np.ndarray
    currents: tuple
    labels: tuple = ()
    metadata: Mapping = field(default_factory=dict)

    @property
    def s21_mag(self) -> np.ndarray:
        return np.abs(self.s21)

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.s21)

    def rows(self):
        """FrequencyResponse objects ordered by (swept value, frequency)."""
        for i in range(len(self.values)):
            for j, f in enumerate(self.frequencies):
                x = self.currents[i][j]
                yield FrequencyResponse(
                    frequency=float(f), currents=x,
                    v_load=complex(self.gain[i, j] * self.metadata.get("v_source", 1.0)),
                    gain=complex(self.gain[i, j]), s21=complex(self.s21[i, j]),
                    pte=float(self.pte[i, j]), s11=complex(self.s11[i, j]),
                )

    def peak(self, row: int = 0) -> tuple[float, float]:
        return refine_peak(self.frequencies, np.abs(self.s21[row]))

    def peaks(self) -> list[tuple[float, float]]:
        return [self.peak(i) for i in range(len(self.values))]

    def best_value(self):
        """Swept value with the largest peak |S21| (first one on ties)."""
        mags = [p[1] for p in self.peaks()]
        return self.values[int(np.nanargmax(mags))]

    def to_csv(self, fh=None) -> str | None:
        """Write CSV to ``fh`` or return it as a string."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_HEADER)
        mag = np.abs(self.s21)
        s11m = np.abs(self.s11)
        for i, value in enumerate(self.values):
            for j, f in enumerate(self.frequencies):
                s = self.s21[i, j]
                w.writerow([_fmt(value), _fmt(f), _fmt(s.real), _fmt(s.imag),
                            _fmt(mag[i, j]), _fmt(s11m[i, j]), _fmt(self.pte[i, j])])
        return out.getvalue() if fh is None else None

    def to_json(self) -> str:
        doc = {
            "swept_variable": self.swept_variable,
            "values": [v if isinstance(v, str) else _jnum(v) for v in self.values],
            "labels": list(self.labels),
            "frequencies_hz": [_jnum(f) for f in self.frequencies],
            "rows": [
                {
                    "swept_value": v if isinstance(v, str) else _jnum(v),
                    "s21_re": [_jnum(z.real) for z in self.s21[i]],
                    "s21_im": [_jnum(z.imag) for z in self.s21[i]],
                    "s11_re": [_jnum(z.real) for z in self.s11[i]],
                    "s11_im": [_jnum(z.imag) for z in self.s11[i]],
                    "pte_percent": [_jnum(p) for p in self.pte[i]],
                    "peak": dict(zip(("frequency_hz", "s21_mag"), map(_jnum, self.peak(i)))),
                }
                for i, v in enumerate(self.values)
            ],
            "metadata": dict(self.metadata),
        }
        return json.dumps(doc, indent=1, sort_keys=True)


def refine_peak(frequencies, values) -> tuple[float, float]:
    """Grid maximum of ``values`` with 3-point parabolic refinement.

    NaN entries are skipped. Ties go to the lowest frequency. A maximum on
    the grid edge (or next to a gap) is returned unrefined.
    """
    f = np.asarray(frequencies, dtype=float)
    y = np.asarray(values, dtype=float)
    if y.size == 0 or not np.any(np.isfinite(y)):
        raise EmptyResultError("no finite points to search for a peak")
    i = int(np.nanargmax(y))
    if i == 0 or i == y.size - 1 or not (np.isfinite(y[i - 1]) and np.isfinite(y[i + 1])):
        return float(f[i]), float(y[i])
    x0, x1, x2 = f[i - 1], f[i], f[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    # Newton form p(x) = y0 + s01 (x - x0) + a (x - x0)(x - x1) handles uneven spacing.
    s01 = (y1 - y0) / (x1 - x0)
    a = ((y2 - y1) / (x2 - x1) - s01) / (x2 - x0)
    if not a < 0:
        return float(x1), float(y1)
    xv = 0.5 * (x0 + x1) - s01 / (2 * a)
    if not x0 <= xv <= x2:
        return float(x1), float(y1)
    yv = y0 + s01 * (xv - x0) + a * (xv - x0) * (xv - x1)
    return float(xv), float(max(yv, y1))


def peak_find(result: SweepResult, row: int = 0) -> tuple[float, float]:
    """Frequency and value of the largest |S21| in one row of ``result``."""
    if len(result.values) == 0 or result.frequencies.size == 0:
        raise EmptyResultError("empty sweep result")
    return result.peak(row)


def _pool_map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _sweep_model(model: SystemModel, freqs: np.ndarray, workers: int):
    chunks = np.array_split(freqs, max(1, min(workers, freqs.size)))
    parts = _pool_map(lambda c: responses(model, c), chunks, workers)
    x = np.concatenate([p[0] for p in parts])
    gain, s, s11, p = (np.concatenate([part[k] for part in parts]) for k in (2, 3, 4, 5))
    return x, gain, s, s11, p


def _assemble(swept_variable, values, models, freqs, per_model, labels=(), extra=None):
    x = [pm[0] for pm in per_model]
    gain = np.array([pm[1] for pm in per_model])
    s = np.array([pm[2] for pm in per_model])
    s11 = np.array([pm[3] for pm in per_model])
    p = np.array([pm[4] for pm in per_model])
    if not np.any(np.isfinite(s)):
        raise EmptyResultError("every sweep point was singular")
    hashes = [model_fingerprint(m) for m in models]
    meta = {
        "model_hash": hashes[0] if len(hashes) == 1 else
        hashlib.sha256("".join(hashes).encode()).hexdigest(),
        "timestamp": _timestamp(),
        "tool_version": __version__,
        "v_source": models[0].source.v_source,
        "gaps": int(np.count_nonzero(~np.isfinite(s))),
    }
    if extra:
        meta.update(extra)
    return SweepResult(swept_variable, tuple(values), freqs, s, s11, p, gain, tuple(x),
                       tuple(labels), meta)


def frequency_sweep(model: SystemModel, grid: FrequencyGrid, workers: int = 1) -> SweepResult:
    """One response per grid frequency; singular points become NaN gaps."""
    freqs = grid.frequencies()
    return _assemble("model", (0,), [model], freqs, [_sweep_model(model, freqs, workers)])


def _multi_sweep(name, values, builder, grid, workers, labels=(), extra=None):
    values = list(values)
    if not values:
        raise ModelValidationError(f"{name} sweep needs at least one value")
    freqs = grid.frequencies()
    models = _pool_map(builder, values, workers)
    per_model = _pool_map(lambda m: _sweep_model(m, freqs, 1), models, workers)
    return _assemble(name, values, models, freqs, per_model, labels, extra)


def distance_sweep(template: Callable[[float], SystemModel], distances: Sequence[float],
                   grid: FrequencyGrid, workers: int = 1) -> SweepResult:
    """Rebuild the model at each transfer distance and sweep frequency."""
    return _multi_sweep("transfer_distance_m", distances, template, grid, workers)


def slab_position_sweep(template, positions: Sequence[float], grid: FrequencyGrid,
                        workers: int = 1) -> SweepResult:
    """Sweep the slab across the tx-rx gap.

    ``template`` is a ChainTemplate or any callable taking a slab position;
    positions outside the gap raise GeometryError from the coupling builder.
    """
    builder = template.at_position if hasattr(template, "at_position") else template
    return _multi_sweep("slab_position_m", positions, builder, grid, workers)


@dataclass(frozen=True)
class MMComparison:
    with_mm: SweepResult
    without_mm: SweepResult
    distances: tuple
    peak_pte_with: np.ndarray
    peak_pte_without: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.peak_pte_with / self.peak_pte_without

    @property
    def normalized_distance(self) -> np.ndarray:
        d = np.asarray(self.distances, dtype=float)
        return d / np.nanmax(d) if np.all(np.isfinite(d)) else d

    def summary_rows(self):
        for d, nd, pw, po, r in zip(self.distances, self.normalized_distance,
                                    self.peak_pte_with, self.peak_pte_without, self.ratio):
            yield d, nd, pw, po, r


def compare_with_without_mm(source, grid: FrequencyGrid, distances: Sequence[float] | None = None,
                            workers: int = 1) -> MMComparison:
    """Sweep the network with its metamaterial cells and with them deleted.

    ``source`` is a SystemModel, or (with ``distances``) a template mapping a
    transfer distance to a model. Peak PTE comes from the refined |S21| peak.
    """
    if distances is None:
        if not isinstance(source, SystemModel):
            raise ModelValidationError("pass distances when comparing from a template")
        builder = lambda _: source  # noqa: E731
        values = [float("nan")]
    else:
        builder = source
        values = list(distances)
        if not values:
            raise ModelValidationError("distance list is empty")
    models = _pool_map(builder, values, workers)
    for m in models:
        if not m.cell_indices:
            raise ModelValidationError("model has no mm_cell nodes; nothing to compare")
    name = "transfer_distance_m"
    with_mm = _multi_sweep(name, range(len(values)), lambda i: models[i], grid, workers)
    without = _multi_sweep(name, range(len(values)), lambda i: remove_cells(models[i]), grid, workers)
    # Replace the index placeholders with the real swept values.
    with_mm = _relabel(with_mm, values)
    without = _relabel(without, values)
    pw = np.array([100 * p[1] ** 2 for p in with_mm.peaks()])
    po = np.array([100 * p[1] ** 2 for p in without.peaks()])
    return MMComparison(with_mm, without, tuple(values), pw, po)


def _relabel(result: SweepResult, values) -> SweepResult:
    return replace(result, values=tuple(values))


# --- topologies --------------------------------------------------------------

REFERENCE_TX = ResonatorParams(0.05, 4e-6, 40e-12)
REFERENCE_COIL = ResonatorParams(0.05, 0.7e-3, 4e-6 * 40e-12 / 0.7e-3)
#: End-to-end (tx-rx) coupling shared by the default topology specs.
DEFAULT_LINK_K = 0.05


@dataclass(frozen=True)
class TopologySpec:
    """A named resonator arrangement plus parameter overrides.

    Kinds and their override keys (SI units):

    * ``two_coil``: source on the transmitter, load on the receiver.
      ``r_tx, l_tx, r_rx, l_rx, k``.
    * ``four_coil``: driver, tx, rx and load coils. Adds ``r_dr, l_dr, r_l,
      l_l, k_drtx, k_rxl``; the driver/load couplings default to the value
      that critically loads the tx-rx link at ``f0``.
    * ``clc``: a series-C / shunt-L / series-C ladder between the source and
      the transmitter of a two-coil link. Adds ``l_shunt``, by default the
      value that matches the source at ``f0``.

    Every loop is tuned to ``f0`` (override key ``f0``).
    """

    kind: str
    overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _TOPOLOGY_KEYS:
            raise ModelValidationError(f"unknown topology {self.kind!r}; expected one of {sorted(_TOPOLOGY_KEYS)}")
        unknown = set(self.overrides) - _TOPOLOGY_KEYS[self.kind]
        if unknown:
            raise ModelValidationError(f"{self.kind} does not accept overrides {sorted(unknown)}")


_BASE_KEYS = {"f0", "r_tx", "l_tx", "r_rx", "l_rx", "k", "r_source", "r_load", "v_source"}
_TOPOLOGY_KEYS = {
    "two_coil": _BASE_KEYS,
    "four_coil": _BASE_KEYS | {"r_dr", "l_dr", "r_l", "l_l", "k_drtx", "k_rxl"},
    "clc": _BASE_KEYS | {"l_shunt"},
}


def _tuned(r, l, f0):
    w0 = 2 * math.pi * f0
    return ResonatorParams(r, l, 1.0 / (w0 * w0 * l))


def resolve_topology(spec: TopologySpec, f0: float | None = None) -> SystemModel:
    """Build the SystemModel for ``spec`` with every loop tuned to ``f0``."""
    o = dict(spec.overrides)
    f0 = o.pop("f0", f0)
    if f0 is None:
        f0 = resonant_frequency(REFERENCE_TX.inductance, REFERENCE_TX.capacitance)
    if not f0 > 0:
        raise TuningError(f"tuning frequency must be > 0, got {f0!r}")
    w0 = 2 * math.pi * f0
    src = SourceSpec(o.get("v_source", 1.0), o.get("r_source", 50.0))
    load = LoadSpec(o.get("r_load", 50.0))
    tx = _tuned(o.get("r_tx", REFERENCE_TX.resistance), o.get("l_tx", REFERENCE_TX.inductance), f0)
    rx = _tuned(o.get("r_rx", REFERENCE_TX.resistance), o.get("l_rx", REFERENCE_TX.inductance), f0)
    k = o.get("k", DEFAULT_LINK_K)
    m_link = coupling_from_k(k, tx.inductance, rx.inductance)

    if spec.kind == "two_coil":
        nodes = (ResonatorNode(DRIVER, tx), ResonatorNode(LOAD, rx))
        return SystemModel(nodes, CouplingSet.from_pairs(2, {(0, 1): m_link}), src, load)

    if spec.kind == "four_coil":
        dr = _tuned(o.get("r_dr", REFERENCE_COIL.resistance), o.get("l_dr", REFERENCE_COIL.inductance), f0)
        ld = _tuned(o.get("r_l", REFERENCE_COIL.resistance), o.get("l_l", REFERENCE_COIL.inductance), f0)
        if "k_drtx" in o:
            k_in = o["k_drtx"]
        else:
            # Reflected resistance that, with the coil loss, equals the link reactance.
            r_refl = w0 * abs(m_link) - tx.resistance
            if r_refl <= 0:
                raise TuningError("link too weak to be critically loaded by the driver coil")
            k_in = math.sqrt(r_refl * (src.r_source + dr.resistance)) / (w0 * math.sqrt(dr.inductance * tx.inductance))
        if "k_rxl" in o:
            k_out = o["k_rxl"]
        else:
            r_refl = w0 * abs(m_link) - rx.resistance
            if r_refl <= 0:
                raise TuningError("link too weak to be critically loaded by the load coil")
            k_out = math.sqrt(r_refl * (load.r_load + ld.resistance)) / (w0 * math.sqrt(ld.inductance * rx.inductance))
        nodes = (ResonatorNode(DRIVER, dr), ResonatorNode(TRANSMITTER, tx),
                 ResonatorNode(RECEIVER, rx), ResonatorNode(LOAD, ld))
        pairs = {
            (0, 1): coupling_from_k(k_in, dr.inductance, tx.inductance),
            (1, 2): m_link,
            (2, 3): coupling_from_k(k_out, rx.inductance, ld.inductance),
        }
        return SystemModel(nodes, CouplingSet.from_pairs(4, pairs), src, load)

    # clc: loop 1 = source, C1, shunt L; loop 2 = shunt L, C2, tx coil.
    # The shared shunt inductor couples the loops as M = -L_shunt.
    if "l_shunt" in o:
        l_sh = o["l_shunt"]
    else:
        z_tx = tx.resistance + (w0 * m_link) ** 2 / (rx.resistance + load.r_load)
        l_sh = math.sqrt(src.r_source * z_tx) / w0
    if not l_sh > 0:
        raise TuningError(f"shunt inductance must be > 0, got {l_sh!r}")
    ladder = _tuned(0.0, l_sh, f0)
    tx_loop = _tuned(tx.resistance, tx.inductance + l_sh, f0)
    nodes = (ResonatorNode(DRIVER, ladder), ResonatorNode(TRANSMITTER, tx_loop), ResonatorNode(LOAD, rx))
    pairs = {(0, 1): -l_sh, (1, 2): m_link}
    return SystemModel(nodes, CouplingSet.from_pairs(3, pairs), src, load)


def topology_compare(specs: Sequence[TopologySpec], grid: FrequencyGrid, f0: float | None = None,
                     workers: int = 1) -> SweepResult:
    """PTE curves of several topologies, all tuned to a common ``f0``."""
    specs = list(specs)
    labels = [s.kind for s in specs]
    return _multi_sweep("topology", range(len(specs)), lambda i: resolve_topology(specs[i], f0),
                        grid, workers, labels=labels)


def bandwidth_3db(result: SweepResult, row: int = 0) -> float:
    """Width of the contiguous band around the peak where |S21| >= peak/sqrt(2).

    Edges are linearly interpolated between grid points; a band touching the
    grid edge is clipped there.
    """
    f = result.frequencies
    y = np.abs(result.s21[row])
    i = int(np.nanargmax(y))
    level = y[i] / math.sqrt(2)

    def edge(step):
        j = i
        while 0 <= j + step < y.size and np.isfinite(y[j + step]) and y[j + step] >= level:
            j += step
        k = j + step
        if not 0 <= k < y.size or not np.isfinite(y[k]):
            return f[j]
        t = (y[j] - level) / (y[j] - y[k])
        return f[j] + t * (f[k] - f[j])

    return float(edge(1) - edge(-1))
