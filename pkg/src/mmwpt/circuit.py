"""Lumped resonator network and the KVL impedance-matrix solve.

Every resonator (driver coil, transmitter, metamaterial cell, receiver, load
coil) is a series RLC loop. Loops interact only through mutual inductances,
which enter the loop equations as ``+j*omega*M``. For an angular frequency
``omega`` the network is the complex symmetric system ``Z @ I = v`` with

* ``Z[i, i] = R_i + j(omega L_i - 1/(omega C_i))`` (+ R_s on the driver row,
  + R_L on the load row),
* ``Z[i, j] = j omega M_ij``,
* ``v`` zero except for the source amplitude on the driver row.

All values are SI (ohm, henry, farad, rad/s).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CouplingBoundError,
    DomainError,
    ModelValidationError,
    ReductionNotApplicableError,
    SingularSystemError,
)

DRIVER = "driver"
TRANSMITTER = "transmitter"
MM_CELL = "mm_cell"
RECEIVER = "receiver"
LOAD = "load"
ROLES = (DRIVER, TRANSMITTER, MM_CELL, RECEIVER, LOAD)

#: Condition number above which a KVL matrix is treated as singular.
COND_LIMIT = 1e14
#: Accepted relative residual ||Z x - v|| / ||v||.
RESIDUAL_LIMIT = 1e-10
# Bound check slack for |M| <= sqrt(L_i L_j); absorbs rounding in k*sqrt(LL).
_BOUND_RTOL = 1e-12


@dataclass(frozen=True)
class ResonatorParams:
    """Series R, L, C of one loop."""

    resistance: float
    inductance: float
    capacitance: float

    def __post_init__(self):
        if not self.resistance >= 0:
            raise ModelValidationError(f"resistance must be >= 0, got {self.resistance!r}")
        if not self.inductance > 0:
            raise ModelValidationError(f"inductance must be > 0, got {self.inductance!r}")
        if not self.capacitance > 0:
            raise ModelValidationError(f"capacitance must be > 0, got {self.capacitance!r}")


@dataclass(frozen=True)
class MMUnitCellParams:
    """Metamaterial unit cell before lumping.

    The loop resistance is ohmic plus dielectric loss and the loop capacitance
    is stray plus compensation capacitance.
    """

    r_ohmic: float
    r_dielectric: float
    c_stray: float
    c_compensation: float
    inductance: float

    def __post_init__(self):
        for name in ("r_ohmic", "r_dielectric", "c_stray", "c_compensation"):
            if not getattr(self, name) >= 0:
                raise ModelValidationError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if not self.resistance > 0:
            raise ModelValidationError("total cell resistance must be > 0")
        if not self.capacitance > 0:
            raise ModelValidationError("total cell capacitance must be > 0")
        if not self.inductance > 0:
            raise ModelValidationError(f"inductance must be > 0, got {self.inductance!r}")

    @property
    def resistance(self) -> float:
        return self.r_ohmic + self.r_dielectric

    @property
    def capacitance(self) -> float:
        return self.c_stray + self.c_compensation

    def to_resonator(self) -> ResonatorParams:
        return ResonatorParams(self.resistance, self.inductance, self.capacitance)


@dataclass(frozen=True)
class ResonatorNode:
    """A resonator together with its place in the network.

    ``index`` numbers metamaterial cells (1-based) and is ``None`` for coils.
    """

    role: str
    params: ResonatorParams
    index: int | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ModelValidationError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if self.role == MM_CELL:
            if self.index is None or self.index < 1:
                raise ModelValidationError("mm_cell nodes need a positive index")
        elif self.index is not None:
            raise ModelValidationError(f"{self.role} node must not carry an index")

    @property
    def label(self) -> str:
        return f"{MM_CELL}:{self.index}" if self.role == MM_CELL else self.role


@dataclass(frozen=True, eq=False)
class CouplingSet:
    """Symmetric, zero-diagonal matrix of mutual inductances (henries)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelValidationError(f"coupling matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ModelValidationError("coupling matrix has non-finite entries")
        if np.any(np.diag(m) != 0):
            raise ModelValidationError("coupling matrix diagonal must be zero")
        if not np.array_equal(m, m.T):
            raise ModelValidationError("coupling matrix must be symmetric")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def zeros(cls, n: int) -> "CouplingSet":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "CouplingSet":
        """Build from ``{(i, j): M}``; each pair is mirrored."""
        m = np.zeros((n, n))
        for (i, j), value in dict(pairs).items():
            if i == j:
                raise ModelValidationError(f"self-coupling ({i}, {i}) is not allowed")
            m[i, j] = m[j, i] = value
        return cls(m)

    @property
    def size(self) -> int:
        return self.m.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CouplingSet):
            return NotImplemented
        return np.array_equal(self.m, other.m)

    def __hash__(self):
        return hash(self.m.tobytes())


@dataclass(frozen=True)
class SourceSpec:
    v_source: float = 1.0
    r_source: float = 50.0

    def __post_init__(self):
        if not np.isfinite(self.v_source):
            raise ModelValidationError("v_source must be finite")
        if not self.r_source >= 0:
            raise ModelValidationError(f"r_source must be >= 0, got {self.r_source!r}")


@dataclass(frozen=True)
class LoadSpec:
    r_load: float = 50.0

    def __post_init__(self):
        if not self.r_load >= 0:
            raise ModelValidationError(f"r_load must be >= 0, got {self.r_load!r}")


@dataclass(frozen=True)
class SystemModel:
    """Ordered resonators, their couplings, the source and the load.

    The source drives the single ``driver`` node; ``r_load`` is added to the
    ``load`` node, if there is one.
    """

    resonators: tuple[ResonatorNode, ...]
    couplings: CouplingSet
    source: SourceSpec = field(default_factory=SourceSpec)
    load: LoadSpec = field(default_factory=LoadSpec)

    def __post_init__(self):
        object.__setattr__(self, "resonators", tuple(self.resonators))
        _validate(self)

    @property
    def size(self) -> int:
        return len(self.resonators)

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(node.role for node in self.resonators)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(node.label for node in self.resonators)

    def index_of(self, role: str) -> int:
        for i, node in enumerate(self.resonators):
            if node.role == role:
                return i
        raise ModelValidationError(f"model has no {role} resonator")

    def has_role(self, role: str) -> bool:
        return role in self.roles

    @property
    def driver_index(self) -> int:
        return self.index_of(DRIVER)

    @property
    def load_index(self) -> int:
        return self.index_of(LOAD)

    @property
    def cell_indices(self) -> list[int]:
        return [i for i, node in enumerate(self.resonators) if node.role == MM_CELL]

    @property
    def inductances(self) -> np.ndarray:
        return np.array([node.params.inductance for node in self.resonators])

    def with_couplings(self, couplings: CouplingSet) -> "SystemModel":
        return replace(self, couplings=couplings)

    def with_source(self, **changes) -> "SystemModel":
        return replace(self, source=replace(self.source, **changes))

    def subset(self, keep: Sequence[int]) -> "SystemModel":
        """Model restricted to the resonators at positions ``keep``."""
        keep = list(keep)
        m = self.couplings.m[np.ix_(keep, keep)]
        return replace(
            self,
            resonators=tuple(self.resonators[i] for i in keep),
            couplings=CouplingSet(m),
        )


def _validate(model: SystemModel) -> None:
    n = model.size
    if n == 0:
        raise ModelValidationError("model has no resonators")
    if model.couplings.size != n:
        raise ModelValidationError(
            f"coupling matrix is {model.couplings.size}x{model.couplings.size} "
            f"but the model has {n} resonators"
        )
    roles = model.roles
    if roles.count(DRIVER) != 1:
        raise ModelValidationError(f"model needs exactly one driver, found {roles.count(DRIVER)}")
    for role in (TRANSMITTER, RECEIVER, LOAD):
        if roles.count(role) > 1:
            raise ModelValidationError(f"model has {roles.count(role)} {role} nodes; at most one allowed")
    cell_ids = [node.index for node in model.resonators if node.role == MM_CELL]
    if len(set(cell_ids)) != len(cell_ids):
        raise ModelValidationError(f"mm_cell indices must be distinct, got {cell_ids}")
    check_coupling_bounds(model.couplings, model.inductances, model.labels)


def check_coupling_bounds(couplings: CouplingSet, inductances, labels=None) -> None:
    """Raise CouplingBoundError if any |M_ij| > sqrt(L_i L_j)."""
    L = np.asarray(inductances, dtype=float)
    limit = np.sqrt(np.outer(L, L)) * (1 + _BOUND_RTOL)
    bad = np.argwhere(np.abs(couplings.m) > limit)
    if bad.size:
        i, j = bad[0]
        k = couplings.m[i, j] / np.sqrt(L[i] * L[j])
        names = (labels[i], labels[j]) if labels is not None else (i, j)
        raise CouplingBoundError(f"coupling {names[0]}-{names[1]} has |k| = {abs(k):.6g} > 1")


def _check_omega(omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise DomainError(f"omega must be finite and > 0, got {omega!r}")
    return w


def self_impedance(params: ResonatorParams, omega):
    """Series RLC impedance ``R + j(omega L - 1/(omega C))``."""
    w = _check_omega(omega)
    z = params.resistance + 1j * (w * params.inductance - 1.0 / (w * params.capacitance))
    return complex(z) if np.ndim(z) == 0 else z


def _kvl_stack(model: SystemModel, omegas: np.ndarray) -> np.ndarray:
    # omegas: 1-D, already checked.
    R = np.array([node.params.resistance for node in model.resonators])
    L = model.inductances
    C = np.array([node.params.capacitance for node in model.resonators])
    R = R.copy()
    R[model.driver_index] += model.source.r_source
    if model.has_role(LOAD):
        R[model.load_index] += model.load.r_load

    w = omegas[:, None, None]
    Z = 1j * w * model.couplings.m[None, :, :]
    diag = R[None, :] + 1j * (omegas[:, None] * L[None, :] - 1.0 / (omegas[:, None] * C[None, :]))
    idx = np.arange(model.size)
    Z[:, idx, idx] = diag
    return Z


def excitation(model: SystemModel) -> np.ndarray:
    v = np.zeros(model.size, dtype=complex)
    v[model.driver_index] = model.source.v_source
    return v


def build_kvl_matrix(model: SystemModel, omega: float) -> tuple[np.ndarray, np.ndarray]:
    """Loop-impedance matrix and excitation vector at one angular frequency."""
    w = _check_omega(omega)
    if w.ndim != 0:
        raise DomainError("build_kvl_matrix takes a scalar omega; use solve_many for sweeps")
    return _kvl_stack(model, w.reshape(1))[0], excitation(model)


def _assembly_scale(model: SystemModel, omegas: np.ndarray) -> np.ndarray:
    """Largest impedance term entering each matrix, before cancellation."""
    R = np.array([node.params.resistance for node in model.resonators])
    C = np.array([node.params.capacitance for node in model.resonators])
    terms = np.concatenate([
        np.broadcast_to(R.max() + model.source.r_source + model.load.r_load, omegas.shape)[:, None],
        omegas[:, None] * model.inductances[None, :],
        1.0 / (omegas[:, None] * C[None, :]),
        omegas[:, None] * np.abs(model.couplings.m).max(initial=0.0),
    ], axis=1)
    return terms.max(axis=1)


def _solve_stack(Z: np.ndarray, v: np.ndarray, scale: np.ndarray | None = None):
    """Solve a stack of systems; return currents and a per-system ok mask.

    The condition estimate is ``max(sigma_max, scale) / sigma_min``. With
    ``scale`` the largest term that went into the matrix, a reactance that
    cancels down to rounding noise counts as singular even when the matrix
    is uniformly tiny. Systems above COND_LIMIT, or whose residual stays
    above RESIDUAL_LIMIT after one refinement step, are flagged and their
    currents set to NaN.
    """
    nf, n, _ = Z.shape
    x = np.full((nf, n), np.nan + 0j)
    sv = np.linalg.svd(Z, compute_uv=False)
    top = sv[:, 0] if scale is None else np.maximum(sv[:, 0], scale)
    with np.errstate(all="ignore"):
        cond = top / sv[:, -1]
    ok = np.isfinite(cond) & (cond <= COND_LIMIT)
    if not np.any(ok):
        return x, ok
    Zs = Z[ok]
    b = np.broadcast_to(v, (Zs.shape[0], n))[..., None]
    # LAPACK gesv: LU with partial pivoting, one system per matrix.
    xs = np.linalg.solve(Zs, b)
    vnorm = np.linalg.norm(v)
    r = b - Zs @ xs
    res = np.linalg.norm(r[..., 0], axis=1) / vnorm
    redo = res > RESIDUAL_LIMIT
    if np.any(redo):
        xs[redo] += np.linalg.solve(Zs[redo], r[redo])
        r2 = b[redo] - Zs[redo] @ xs[redo]
        res[redo] = np.linalg.norm(r2[..., 0], axis=1) / vnorm
    good = res <= RESIDUAL_LIMIT
    sub = np.flatnonzero(ok)
    ok[sub[~good]] = False
    x[sub[good]] = xs[good, :, 0]
    return x, ok


def solve_many(model: SystemModel, omegas) -> tuple[np.ndarray, np.ndarray]:
    """Currents for every angular frequency in ``omegas``.

    Returns ``(currents, ok)`` with ``currents`` of shape ``(len(omegas), n)``.
    Singular points are not raised; they come back as NaN rows with
    ``ok[k] == False``.
    """
    w = np.atleast_1d(_check_omega(omegas))
    if model.source.v_source == 0:
        raise DomainError("v_source must be nonzero to excite the network")
    Z = _kvl_stack(model, w)
    return _solve_stack(Z, excitation(model), _assembly_scale(model, w))


def solve_currents(model: SystemModel, omega: float) -> np.ndarray:
    """Loop currents (amperes) at one angular frequency.

    Raises SingularSystemError if the KVL matrix is numerically singular.
    """
    w = _check_omega(omega)
    if w.ndim != 0:
        raise DomainError("solve_currents takes a scalar omega; use solve_many for sweeps")
    x, ok = solve_many(model, w.reshape(1))
    if not ok[0]:
        raise SingularSystemError(f"KVL matrix is singular at omega = {float(w)!r} rad/s", omega=float(w))
    return x[0]


def apply_neglect_rule(couplings: CouplingSet, resonators: Sequence[ResonatorNode],
                       policy: Iterable[tuple[str, str]]) -> CouplingSet:
    """Zero every coupling whose endpoints match a role pair in ``policy``.

    Pairs are unordered. ``mm_cell`` matches every cell; ``(mm_cell, mm_cell)``
    zeroes cell-to-cell terms.
    """
    pairs = {frozenset(p) for p in policy}
    for p in pairs:
        unknown = set(p) - set(ROLES)
        if unknown:
            raise ModelValidationError(f"neglect policy names unknown roles {sorted(unknown)}")
    m = np.array(couplings.m)
    roles = [node.role for node in resonators]
    if len(roles) != m.shape[0]:
        raise ModelValidationError("resonator list does not match coupling matrix size")
    for i in range(len(roles)):
        for j in range(i + 1, len(roles)):
            if frozenset((roles[i], roles[j])) in pairs:
                m[i, j] = m[j, i] = 0.0
    return CouplingSet(m)


#: Weak couplings dropped by default: the non-adjacent pairs of the
#: driver/tx/slab/rx/load chain.
ADJACENT_NEGLECT = frozenset({
    frozenset((DRIVER, MM_CELL)),
    frozenset((TRANSMITTER, RECEIVER)),
    frozenset((MM_CELL, LOAD)),
    frozenset((DRIVER, LOAD)),
    frozenset((DRIVER, RECEIVER)),
    frozenset((TRANSMITTER, LOAD)),
})


def remove_cells(model: SystemModel) -> SystemModel:
    """The same network with every mm_cell row and column deleted."""
    keep = [i for i, node in enumerate(model.resonators) if node.role != MM_CELL]
    return model.subset(keep)


def reduce_slab(model: SystemModel) -> SystemModel:
    """Lump identical, identically coupled cells into one effective resonator.

    With ``n`` identical cells carrying the same current ``I``, write
    ``I_eff = sqrt(n) I``. Every coil row then sees ``j w sqrt(n) M_c I_eff``,
    and ``sqrt(n)`` times a cell row becomes
    ``(Z_c + j w (n-1) M_cc) I_eff + sum_k j w sqrt(n) M_ck I_k = 0``. So the
    effective cell keeps R and C, gets ``L + (n-1) M_cc``, and its couplings
    to the coils are scaled by ``sqrt(n)``. The reduced matrix stays symmetric.
    """
    cells = model.cell_indices
    if not cells:
        return model
    first = model.resonators[cells[0]]
    others = [i for i in range(model.size) if i not in cells]
    m = model.couplings.m
    for i in cells[1:]:
        if model.resonators[i].params != first.params:
            raise ReductionNotApplicableError(
                f"{model.resonators[i].label} params differ from {first.label}")
        if not np.array_equal(m[i, others], m[cells[0], others]):
            raise ReductionNotApplicableError(
                f"{model.resonators[i].label} couples to the coils differently from {first.label}")
    n = len(cells)
    m_cc = 0.0
    if n > 1:
        block = m[np.ix_(cells, cells)]
        offdiag = block[~np.eye(n, dtype=bool)]
        if not np.all(offdiag == offdiag[0]):
            raise ReductionNotApplicableError("cell-to-cell couplings are not uniform")
        m_cc = float(offdiag[0])

    p = first.params
    l_eff = p.inductance + (n - 1) * m_cc
    if not l_eff > 0:
        raise ReductionNotApplicableError("effective cell inductance is not positive")
    eff = ResonatorNode(MM_CELL, ResonatorParams(p.resistance, l_eff, p.capacitance), index=1)

    # Effective node sits where the first cell was.
    order = sorted(others + [cells[0]])
    nodes = tuple(eff if i == cells[0] else model.resonators[i] for i in order)
    k = len(order)
    mr = np.zeros((k, k))
    scale = np.sqrt(n)
    for a, i in enumerate(order):
        for b, j in enumerate(order):
            if a == b:
                continue
            if i == cells[0] or j == cells[0]:
                mr[a, b] = scale * m[i, j]
            else:
                mr[a, b] = m[i, j]
    return replace(model, resonators=nodes, couplings=CouplingSet(mr))


def expand_reduced_currents(model: SystemModel, reduced_currents) -> np.ndarray:
    """Map currents of ``reduce_slab(model)`` back onto the full model's nodes."""
    cells = model.cell_indices
    if not cells:
        return np.asarray(reduced_currents)
    x = np.asarray(reduced_currents)
    n = len(cells)
    others = [i for i in range(model.size) if i not in cells]
    order = sorted(others + [cells[0]])
    full = np.empty(model.size, dtype=complex)
    for pos, i in enumerate(order):
        if i == cells[0]:
            full[cells] = x[pos] / np.sqrt(n)
        else:
            full[i] = x[pos]
    return full
