"""Mutual inductances from geometry, coupling coefficients or tabulated data.

Coils are modelled as coaxial circular filaments (a multi-turn coil is its
turn count times a single filament at one radius). Positions are measured
along the shared axis with the transmitter at 0 and the receiver at the
transfer distance; the slab sits in between and the driver/load coils sit
just outside.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate

from .circuit import (
    DRIVER,
    LOAD,
    MM_CELL,
    ADJACENT_NEGLECT,
    RECEIVER,
    ROLES,
    TRANSMITTER,
    CouplingSet,
    LoadSpec,
    ResonatorNode,
    SourceSpec,
    SystemModel,
    apply_neglect_rule,
    check_coupling_bounds,
)
from .errors import (
    CouplingBoundError,
    ExtrapolationError,
    GeometryError,
    ModelValidationError,
    SingularGeometryError,
)

MU0 = 4e-7 * math.pi

QUAD_RTOL = 1e-8
# QAGS spends 21 integrand evaluations per subinterval.
QUAD_MAX_EVALS = 1_000_000
_QUAD_LIMIT = QUAD_MAX_EVALS // 21


@dataclass(frozen=True)
class LoopGeometry:
    radius: float
    turns: int = 1
    axial_position: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"loop radius must be > 0, got {self.radius!r}")
        if int(self.turns) != self.turns or self.turns < 1:
            raise GeometryError(f"turn count must be a positive integer, got {self.turns!r}")

    def at(self, axial_position: float) -> "LoopGeometry":
        return LoopGeometry(self.radius, self.turns, axial_position)


def _neumann_integrand(phi, a, b, dz):
    # cos(phi)/sqrt(A - B cos phi) with the constant 1/sqrt(A) removed (it
    # integrates to zero against cos phi). What is left is positive, so the
    # far-field case has no cancellation.
    A = a * a + b * b + dz * dz
    B = 2 * a * b
    c = math.cos(phi)
    s = math.sqrt(A - B * c)
    sa = math.sqrt(A)
    return B * c * c / (s * sa * (s + sa))


def coaxial_loop_mutual(a: LoopGeometry, b: LoopGeometry, rtol: float = QUAD_RTOL) -> float:
    """Mutual inductance of two coaxial multi-turn loops (Neumann integral).

    ``M = N_a N_b mu0 r_a r_b / 2 * int_0^{2pi} cos(phi) / |r(phi)| dphi``,
    integrated adaptively to relative tolerance ``rtol``.
    """
    dz = abs(b.axial_position - a.axial_position)
    if dz == 0 and a.radius == b.radius:
        raise SingularGeometryError("coincident filaments: equal radii at the same axial position")
    # Integrand is even about phi = pi; integrate [0, pi] and double.
    value, _ = integrate.quad(
        _neumann_integrand, 0.0, math.pi, args=(a.radius, b.radius, dz),
        epsabs=0.0, epsrel=rtol, limit=_QUAD_LIMIT,
    )
    return a.turns * b.turns * MU0 * a.radius * b.radius * value


def dipole_mutual(a: LoopGeometry, b: LoopGeometry) -> float:
    """Far-field approximation ``mu0 pi r_a^2 r_b^2 N_a N_b / (2 d^3)``."""
    d = abs(b.axial_position - a.axial_position)
    if d == 0:
        raise SingularGeometryError("dipole formula needs a nonzero separation")
    return MU0 * math.pi * a.radius**2 * b.radius**2 * a.turns * b.turns / (2 * d**3)


def coupling_from_k(k: float, l_a: float, l_b: float) -> float:
    if abs(k) > 1:
        raise CouplingBoundError(f"coupling coefficient |k| = {abs(k)!r} exceeds 1")
    if not (l_a > 0 and l_b > 0):
        raise ModelValidationError("inductances must be > 0")
    return k * math.sqrt(l_a * l_b)


@dataclass(frozen=True, eq=False)
class CouplingTable:
    """Mutual inductance of one resonator pair against separation."""

    separation: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        s = np.array(self.separation, dtype=float)
        m = np.array(self.m, dtype=float)
        if s.ndim != 1 or s.shape != m.shape:
            raise ModelValidationError("coupling table columns must be 1-D and of equal length")
        if s.size < 2:
            raise ModelValidationError("coupling table needs at least 2 rows")
        if not np.all(np.diff(s) > 0):
            raise ModelValidationError("coupling table separations must be strictly increasing")
        s.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "separation", s)
        object.__setattr__(self, "m", m)

    def __eq__(self, other):
        if not isinstance(other, CouplingTable):
            return NotImplemented
        return np.array_equal(self.separation, other.separation) and np.array_equal(self.m, other.m)


def interpolate_coupling(table: CouplingTable, separation: float) -> float:
    lo, hi = table.separation[0], table.separation[-1]
    if not lo <= separation <= hi:
        raise ExtrapolationError(f"separation {separation!r} m outside table range [{lo!r}, {hi!r}] m")
    return float(np.interp(separation, table.separation, table.m))


TABLE_HEADER = ("separation_m", "m_henries")


def read_coupling_table(path) -> CouplingTable:
    """Load a two-column CSV with header ``separation_m,m_henries``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != TABLE_HEADER:
        raise ModelValidationError(f"{path}: header must be {','.join(TABLE_HEADER)}")
    seps, ms = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ModelValidationError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            seps.append(float(row[0]))
            ms.append(float(row[1]))
        except ValueError as exc:
            raise ModelValidationError(f"{path}:{lineno}: {exc}") from None
    return CouplingTable(np.array(seps), np.array(ms))


def write_coupling_table(table: CouplingTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for s, m in zip(table.separation, table.m):
            w.writerow([f"{s:.17g}", f"{m:.17g}"])


def _pair_key(a: str, b: str) -> frozenset:
    for r in (a, b):
        if r not in ROLES:
            raise ModelValidationError(f"unknown role {r!r}")
    return frozenset((a, b)) if a != b else frozenset((a,))


@dataclass(frozen=True)
class CoilLayout:
    """Everything needed to rebuild couplings for a given slab/coil spacing.

    ``loops`` maps a role to its loop geometry (axial position is ignored and
    recomputed). For a pair of roles, the first source that applies wins:
    ``k_pairs`` (fixed coefficient), ``m_pairs`` (fixed mutual inductance),
    ``tables`` (interpolated on separation), then the Neumann integral if both
    roles have loops. Otherwise the pair is uncoupled. Cells couple to each
    other through the uniform coefficient ``cell_k``.
    """

    loops: Mapping[str, LoopGeometry] = field(default_factory=dict)
    k_pairs: Mapping[frozenset, float] = field(default_factory=dict)
    m_pairs: Mapping[frozenset, float] = field(default_factory=dict)
    tables: Mapping[frozenset, CouplingTable] = field(default_factory=dict)
    driver_gap: float = 0.01
    load_gap: float = 0.01
    cell_k: float = 0.0
    neglect: frozenset = ADJACENT_NEGLECT

    def positions(self, slab_position: float, transfer_distance: float) -> dict[str, float]:
        return {
            DRIVER: -self.driver_gap,
            TRANSMITTER: 0.0,
            MM_CELL: slab_position,
            RECEIVER: transfer_distance,
            LOAD: transfer_distance + self.load_gap,
        }


def _lookup(mapping, a, b):
    return mapping.get(_pair_key(a, b))


def build_paper_couplings(resonators: Sequence[ResonatorNode], layout: CoilLayout,
                          slab_position: float | None, transfer_distance: float,
                          neglect: bool = True) -> CouplingSet:
    """Couplings of a driver/tx/slab/rx/load chain at the given spacing.

    ``slab_position`` is measured from the transmitter. The weak-coupling
    rule in ``layout.neglect`` is applied unless ``neglect`` is False; the
    transmitter-receiver pair is only dropped when a slab sits between them.
    """
    roles = [node.role for node in resonators]
    has_cells = MM_CELL in roles
    if not transfer_distance > 0:
        raise GeometryError(f"transfer distance must be > 0, got {transfer_distance!r}")
    if layout.driver_gap <= 0 or layout.load_gap <= 0:
        raise GeometryError("driver and load gaps must be > 0")
    if has_cells:
        if slab_position is None:
            slab_position = transfer_distance / 2
        if not 0 < slab_position < transfer_distance:
            raise GeometryError(
                f"slab position {slab_position!r} m must lie strictly inside (0, {transfer_distance!r}) m")
    pos = layout.positions(slab_position if slab_position is not None else 0.0, transfer_distance)

    n = len(resonators)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            ri, rj = roles[i], roles[j]
            li, lj = resonators[i].params.inductance, resonators[j].params.inductance
            if ri == MM_CELL and rj == MM_CELL:
                value = coupling_from_k(layout.cell_k, li, lj)
            elif (k := _lookup(layout.k_pairs, ri, rj)) is not None:
                value = coupling_from_k(k, li, lj)
            elif (mv := _lookup(layout.m_pairs, ri, rj)) is not None:
                value = float(mv)
            elif (tab := _lookup(layout.tables, ri, rj)) is not None:
                value = interpolate_coupling(tab, abs(pos[rj] - pos[ri]))
            elif ri in layout.loops and rj in layout.loops:
                value = coaxial_loop_mutual(layout.loops[ri].at(pos[ri]), layout.loops[rj].at(pos[rj]))
            else:
                value = 0.0
            m[i, j] = m[j, i] = value

    couplings = CouplingSet(m)
    if neglect:
        policy = set(layout.neglect)
        if not has_cells:
            policy.discard(frozenset((TRANSMITTER, RECEIVER)))
        couplings = apply_neglect_rule(couplings, resonators, policy)
    check_coupling_bounds(couplings, [node.params.inductance for node in resonators],
                          [node.label for node in resonators])
    return couplings


@dataclass(frozen=True)
class ChainTemplate:
    """A driver/tx/slab/rx/load chain whose couplings follow the geometry.

    Calling the template with a transfer distance (or :meth:`at_position`
    with a slab position) rebuilds the couplings and returns a SystemModel.
    When ``slab_position`` is ``None`` the slab sits midway; otherwise its
    fractional position in the gap is kept when the distance changes.
    """

    resonators: tuple
    layout: CoilLayout
    transfer_distance: float
    slab_position: float | None = None
    source: SourceSpec | None = None
    load: LoadSpec | None = None

    def model(self, transfer_distance: float | None = None,
              slab_position: float | None = None):
        d = self.transfer_distance if transfer_distance is None else transfer_distance
        s = slab_position
        if s is None and self.slab_position is not None:
            s = self.slab_position * d / self.transfer_distance
        couplings = build_paper_couplings(self.resonators, self.layout, s, d)
        return SystemModel(self.resonators, couplings,
                           self.source or SourceSpec(), self.load or LoadSpec())

    def __call__(self, transfer_distance: float):
        return self.model(transfer_distance=transfer_distance)

    def at_position(self, slab_position: float):
        return self.model(slab_position=slab_position)
