"""JSON configuration documents: parsing, validation, presets, serialization.

Physical values are strings with an explicit unit suffix (``"4 uH"``,
``"40 pF"``, ``"100 mm"``). Every diagnostic starts with the path of the
offending field, e.g. ``couplings.pairs[1].k: |k| = 1.5 exceeds 1``.
See ``docs/config.md`` for the full schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

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
    MMUnitCellParams,
    ResonatorNode,
    ResonatorParams,
    SourceSpec,
    SystemModel,
)
from .coupling import ChainTemplate, CoilLayout, LoopGeometry, read_coupling_table
from .errors import ConfigError, CouplingBoundError, ModelValidationError, WPTError
from .metrics import resonant_frequency
from .sweep import FrequencyGrid, TopologySpec, resolve_topology
from .tuner import tune_compensation_capacitor
from .units import format_quantity, parse_list, parse_quantity

PRESETS = ("paper-table1", "paper-table1-tuned", "two-coil-demo", "clc-demo")
COUPLING_MODES = ("analytic", "coefficients", "table", "matrix")
_COIL_ORDER = (DRIVER, TRANSMITTER, RECEIVER, LOAD)


@dataclass(frozen=True)
class SweepDefaults:
    grid: FrequencyGrid | None = None
    distances: tuple = ()
    positions: tuple = ()


@dataclass(frozen=True)
class TunerSettings:
    target: float | None = None
    bounds: tuple | None = None


@dataclass(frozen=True)
class ParsedConfig:
    """Result of :func:`parse_config`.

    ``template`` is set when the couplings follow a coil layout, so distance
    and slab-position sweeps can rebuild them; ``model`` is the network at the
    configured layout.
    """

    name: str
    model: SystemModel
    template: ChainTemplate | None = None
    sweep: SweepDefaults = field(default_factory=SweepDefaults)
    tuner: TunerSettings = field(default_factory=TunerSettings)
    cell: MMUnitCellParams | None = None
    document: dict = field(default_factory=dict, repr=False)


def _obj(doc, path, required=(), optional=()):
    if not isinstance(doc, dict):
        raise ConfigError(path, f"expected an object, got {type(doc).__name__}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ConfigError(f"{path}.{missing[0]}" if path else missing[0], "missing required field")
    allowed = set(required) | set(optional)
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")
    return doc


def _q(doc, key, dim, path, default=None):
    if key not in doc:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    return parse_quantity(doc[key], dim, f"{path}.{key}")


def _params(doc, path) -> ResonatorParams:
    _obj(doc, path, ("resistance", "inductance", "capacitance"))
    try:
        return ResonatorParams(
            _q(doc, "resistance", "resistance", path),
            _q(doc, "inductance", "inductance", path),
            _q(doc, "capacitance", "capacitance", path),
        )
    except ModelValidationError as exc:
        raise ConfigError(path, str(exc)) from None


_CELL_FIELDS = ("r_ohmic", "r_dielectric", "c_stray", "c_compensation", "inductance")


def _cell(doc, path, coils) -> MMUnitCellParams:
    _obj(doc, path, ("inductance", "r_ohmic"),
         ("r_dielectric", "c_stray", "c_compensation", "tune_to", "count"))
    if ("c_compensation" in doc) == ("tune_to" in doc):
        raise ConfigError(path, "give exactly one of c_compensation or tune_to")
    try:
        cell = MMUnitCellParams(
            r_ohmic=_q(doc, "r_ohmic", "resistance", path),
            r_dielectric=_q(doc, "r_dielectric", "resistance", path, 0.0),
            c_stray=_q(doc, "c_stray", "capacitance", path, 0.0),
            c_compensation=_q(doc, "c_compensation", "capacitance", path, 1.0),
            inductance=_q(doc, "inductance", "inductance", path),
        )
        if "tune_to" in doc:
            target = doc["tune_to"]
            if target in coils:
                p = coils[target]
                f = resonant_frequency(p.inductance, p.capacitance)
            else:
                f = parse_quantity(target, "frequency", f"{path}.tune_to")
            cell = tune_compensation_capacitor(cell, f).cell
    except WPTError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None
    return cell


def _resonators(doc, path):
    _obj(doc, path, (DRIVER,), (TRANSMITTER, RECEIVER, LOAD, "mm_cells"))
    coils = {role: _params(doc[role], f"{path}.{role}") for role in _COIL_ORDER if role in doc}
    cells: list[ResonatorParams] = []
    cell_proto = None
    if "mm_cells" in doc:
        c = doc["mm_cells"]
        cpath = f"{path}.mm_cells"
        if isinstance(c, list):
            for i, item in enumerate(c):
                ipath = f"{cpath}[{i}]"
                if isinstance(item, dict) and "capacitance" in item:
                    cells.append(_params(item, ipath))
                else:
                    cells.append(_cell(item, ipath, coils).to_resonator())
        else:
            cell_proto = _cell(c, cpath, coils)
            count = c.get("count", 9)
            if isinstance(count, bool) or not isinstance(count, int) or count < 0:
                raise ConfigError(f"{cpath}.count", f"expected a non-negative integer, got {count!r}")
            cells = [cell_proto.to_resonator()] * count
    if cells and (TRANSMITTER not in coils or RECEIVER not in coils):
        raise ConfigError(path, "mm_cells need both a transmitter and a receiver")
    nodes = [ResonatorNode(DRIVER, coils[DRIVER])]
    if TRANSMITTER in coils:
        nodes.append(ResonatorNode(TRANSMITTER, coils[TRANSMITTER]))
    nodes += [ResonatorNode(MM_CELL, p, index=i + 1) for i, p in enumerate(cells)]
    for role in (RECEIVER, LOAD):
        if role in coils:
            nodes.append(ResonatorNode(role, coils[role]))
    return tuple(nodes), cell_proto


def _role_pair(between, path):
    if not (isinstance(between, list) and len(between) == 2 and all(isinstance(r, str) for r in between)):
        raise ConfigError(path, "expected a list of two role names")
    for r in between:
        if r not in ROLES:
            raise ConfigError(path, f"unknown role {r!r}; expected one of {list(ROLES)}")
    return frozenset(between)


def _neglect(value, path):
    if value == "adjacent":
        return ADJACENT_NEGLECT
    if value == "none":
        return frozenset()
    if not isinstance(value, list):
        raise ConfigError(path, "expected 'adjacent', 'none' or a list of role pairs")
    return frozenset(_role_pair(p, f"{path}[{i}]") for i, p in enumerate(value))


def _layout(cdoc, path, base_dir):
    mode = cdoc["mode"]
    loops = {}
    for role, ldoc in cdoc.get("loops", {}).items():
        lpath = f"{path}.loops.{role}"
        if role not in ROLES:
            raise ConfigError(lpath, f"unknown role {role!r}")
        _obj(ldoc, lpath, ("radius",), ("turns",))
        turns = ldoc.get("turns", 1)
        if isinstance(turns, bool) or not isinstance(turns, int) or turns < 1:
            raise ConfigError(f"{lpath}.turns", f"expected a positive integer, got {turns!r}")
        try:
            loops[role] = LoopGeometry(parse_quantity(ldoc["radius"], "length", f"{lpath}.radius"), turns)
        except WPTError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(lpath, str(exc)) from None
    k_pairs, m_pairs, tables = {}, {}, {}
    for i, pdoc in enumerate(cdoc.get("pairs", [])):
        ppath = f"{path}.pairs[{i}]"
        _obj(pdoc, ppath, ("between",), ("k", "m", "table"))
        key = _role_pair(pdoc["between"], f"{ppath}.between")
        given = [k for k in ("k", "m", "table") if k in pdoc]
        if len(given) != 1:
            raise ConfigError(ppath, "give exactly one of k, m or table")
        name = "-".join(pdoc["between"])
        if "k" in pdoc:
            k = pdoc["k"]
            if isinstance(k, bool) or not isinstance(k, (int, float)):
                raise ConfigError(f"{ppath}.k", f"expected a number, got {k!r}")
            if abs(k) > 1:
                raise ConfigError(f"{ppath}.k", f"|k| = {abs(k)!r} exceeds 1 for {name}")
            k_pairs[key] = float(k)
        elif "m" in pdoc:
            m_pairs[key] = parse_quantity(pdoc["m"], "inductance", f"{ppath}.m")
        else:
            tpath = Path(pdoc["table"])
            if not tpath.is_absolute() and base_dir is not None:
                tpath = base_dir / tpath
            try:
                tables[key] = read_coupling_table(tpath)
            except OSError as exc:
                raise ConfigError(f"{ppath}.table", f"cannot read {tpath}: {exc.strerror}") from None
            except ModelValidationError as exc:
                raise ConfigError(f"{ppath}.table", str(exc)) from None
    if mode == "analytic" and not loops:
        raise ConfigError(f"{path}.loops", "analytic mode needs loop geometry")
    if mode == "coefficients" and (loops or tables):
        raise ConfigError(path, "coefficients mode takes only k or m pairs")
    if mode == "table" and not tables:
        raise ConfigError(f"{path}.pairs", "table mode needs at least one table pair")
    cell_k = cdoc.get("cell_k", 0.0)
    if isinstance(cell_k, bool) or not isinstance(cell_k, (int, float)) or abs(cell_k) > 1:
        raise ConfigError(f"{path}.cell_k", f"expected a number with |k| <= 1, got {cell_k!r}")
    return loops, k_pairs, m_pairs, tables, float(cell_k), _neglect(cdoc.get("neglect", "adjacent"), f"{path}.neglect")


def _matrix_couplings(cdoc, path, nodes):
    labels = [n.label for n in nodes]
    m = {}
    for i, pdoc in enumerate(cdoc.get("pairs", [])):
        ppath = f"{path}.pairs[{i}]"
        _obj(pdoc, ppath, ("between", "m"))
        a, b = pdoc["between"] if isinstance(pdoc["between"], list) and len(pdoc["between"]) == 2 else (None, None)
        if a not in labels or b not in labels or a == b:
            raise ConfigError(f"{ppath}.between", f"expected two distinct node labels from {labels}")
        m[(labels.index(a), labels.index(b))] = parse_quantity(pdoc["m"], "inductance", f"{ppath}.m")
    return CouplingSet.from_pairs(len(nodes), m)


def _grid(doc, path):
    _obj(doc, path, (), ("f_min", "f_max", "points", "spacing", "distances", "positions"))
    grid = None
    if "f_min" in doc or "f_max" in doc:
        pts = doc.get("points", 801)
        if isinstance(pts, bool) or not isinstance(pts, int):
            raise ConfigError(f"{path}.points", f"expected an integer, got {pts!r}")
        try:
            grid = FrequencyGrid(_q(doc, "f_min", "frequency", path), _q(doc, "f_max", "frequency", path),
                                 pts, doc.get("spacing", "linear"))
        except ModelValidationError as exc:
            raise ConfigError(path, str(exc)) from None
    distances = tuple(parse_list(doc.get("distances", []), "length", f"{path}.distances"))
    positions = tuple(parse_list(doc.get("positions", []), "length", f"{path}.positions"))
    return SweepDefaults(grid, distances, positions)


def _tuner(doc, path):
    _obj(doc, path, (), ("target", "bounds"))
    target = _q(doc, "target", "frequency", path) if "target" in doc else None
    bounds = None
    if "bounds" in doc:
        b = parse_list(doc["bounds"], "length", f"{path}.bounds")
        if len(b) != 2:
            raise ConfigError(f"{path}.bounds", "expected two lengths")
        bounds = tuple(b)
    return TunerSettings(target, bounds)


def _topology(doc, path):
    _obj(doc, path, ("kind",), ("f0", "k", "k_drtx", "k_rxl", "l_shunt", "l_tx", "l_rx", "l_dr", "l_l",
                                "r_tx", "r_rx", "r_dr", "r_l"))
    dims = {"f0": "frequency", "l_shunt": "inductance", "l_tx": "inductance", "l_rx": "inductance",
            "l_dr": "inductance", "l_l": "inductance", "r_tx": "resistance", "r_rx": "resistance",
            "r_dr": "resistance", "r_l": "resistance"}
    overrides = {}
    for key, value in doc.items():
        if key == "kind":
            continue
        if key in dims:
            overrides[key] = parse_quantity(value, dims[key], f"{path}.{key}")
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path}.{key}", f"expected a number, got {value!r}")
            if abs(value) > 1:
                raise ConfigError(f"{path}.{key}", f"|k| = {abs(value)!r} exceeds 1")
            overrides[key] = float(value)
    try:
        return TopologySpec(doc["kind"], overrides)
    except ModelValidationError as exc:
        raise ConfigError(path, str(exc)) from None


def load_document(source) -> tuple[dict, Path | None]:
    """Read a config from a preset name, a path or an already-parsed dict."""
    if isinstance(source, dict):
        return source, None
    name = str(source)
    if name in PRESETS:
        text = resources.files("mmwpt.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
        return _loads(text, name), None
    path = Path(name)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read config {name!r}: {exc.strerror}") from None
    return _loads(text, name), path.parent


def _loads(text, name):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{name}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def parse_config(source) -> ParsedConfig:
    """Parse a preset name, config path or dict into a validated model."""
    doc, base_dir = load_document(source)
    _obj(doc, "", (), ("name", "description", "source", "load", "resonators", "couplings",
                       "layout", "sweep", "tuner", "topology"))
    name = doc.get("name", str(source) if not isinstance(source, dict) else "config")
    src = doc.get("source", {})
    _obj(src, "source", (), ("voltage", "resistance"))
    ld = doc.get("load", {})
    _obj(ld, "load", (), ("resistance",))
    try:
        source_spec = SourceSpec(_q(src, "voltage", "voltage", "source", 1.0),
                                 _q(src, "resistance", "resistance", "source", 50.0))
        load_spec = LoadSpec(_q(ld, "resistance", "resistance", "load", 50.0))
    except ModelValidationError as exc:
        raise ConfigError("source", str(exc)) from None
    sweep = _grid(doc.get("sweep", {}), "sweep")
    tuner = _tuner(doc.get("tuner", {}), "tuner")

    if "topology" in doc:
        if "resonators" in doc or "couplings" in doc:
            raise ConfigError("topology", "topology replaces resonators and couplings; give one or the other")
        spec = _topology(doc["topology"], "topology")
        spec = TopologySpec(spec.kind, {**spec.overrides, "r_source": source_spec.r_source,
                                        "r_load": load_spec.r_load, "v_source": source_spec.v_source})
        try:
            model = resolve_topology(spec)
        except WPTError as exc:
            raise ConfigError("topology", str(exc)) from None
        return ParsedConfig(name, model, None, sweep, tuner, None, doc)

    if "resonators" not in doc:
        raise ConfigError("resonators", "missing required field")
    nodes, cell = _resonators(doc["resonators"], "resonators")
    cdoc = doc.get("couplings", {"mode": "matrix", "pairs": []})
    _obj(cdoc, "couplings", ("mode",), ("loops", "pairs", "cell_k", "neglect"))
    if cdoc["mode"] not in COUPLING_MODES:
        raise ConfigError("couplings.mode", f"expected one of {list(COUPLING_MODES)}, got {cdoc['mode']!r}")

    if cdoc["mode"] == "matrix":
        if "layout" in doc:
            raise ConfigError("layout", "matrix couplings do not use a layout")
        couplings = _matrix_couplings(cdoc, "couplings", nodes)
        try:
            model = SystemModel(nodes, couplings, source_spec, load_spec)
        except CouplingBoundError as exc:
            raise ConfigError("couplings", str(exc)) from None
        except ModelValidationError as exc:
            raise ConfigError("resonators", str(exc)) from None
        return ParsedConfig(name, model, None, sweep, tuner, cell, doc)

    loops, k_pairs, m_pairs, tables, cell_k, neglect = _layout(cdoc, "couplings", base_dir)
    lay = doc.get("layout", {})
    _obj(lay, "layout", (), ("transfer_distance", "slab_position", "driver_gap", "load_gap"))
    layout = CoilLayout(loops, k_pairs, m_pairs, tables,
                        driver_gap=_q(lay, "driver_gap", "length", "layout", 0.01),
                        load_gap=_q(lay, "load_gap", "length", "layout", 0.01),
                        cell_k=cell_k, neglect=neglect)
    template = ChainTemplate(
        nodes, layout,
        transfer_distance=_q(lay, "transfer_distance", "length", "layout", 0.4),
        slab_position=_q(lay, "slab_position", "length", "layout") if "slab_position" in lay else None,
        source=source_spec, load=load_spec,
    )
    try:
        model = template.model()
    except CouplingBoundError as exc:
        raise ConfigError("couplings", str(exc)) from None
    except WPTError as exc:
        raise ConfigError("layout", str(exc)) from None
    return ParsedConfig(name, model, template, sweep, tuner, cell, doc)


def model_to_document(model: SystemModel, name: str = "model") -> dict[str, Any]:
    """Explicit config (``matrix`` couplings) that parses back to ``model``."""
    def rlc(p: ResonatorParams):
        return {"resistance": format_quantity(p.resistance, "resistance"),
                "inductance": format_quantity(p.inductance, "inductance"),
                "capacitance": format_quantity(p.capacitance, "capacitance")}

    res: dict[str, Any] = {}
    cells = []
    for node in model.resonators:
        if node.role == MM_CELL:
            cells.append(rlc(node.params))
        else:
            res[node.role] = rlc(node.params)
    if cells:
        res["mm_cells"] = cells
    labels = model.labels
    # Cells are renumbered 1..n in order on parse; mirror that here.
    renum = {}
    count = 0
    for node in model.resonators:
        if node.role == MM_CELL:
            count += 1
            renum[node.label] = f"{MM_CELL}:{count}"
    pairs = []
    m = model.couplings.m
    for i in range(model.size):
        for j in range(i + 1, model.size):
            if m[i, j] != 0:
                pairs.append({"between": [renum.get(labels[i], labels[i]), renum.get(labels[j], labels[j])],
                              "m": format_quantity(m[i, j], "inductance")})
    return {
        "name": name,
        "source": {"voltage": format_quantity(model.source.v_source, "voltage"),
                   "resistance": format_quantity(model.source.r_source, "resistance")},
        "load": {"resistance": format_quantity(model.load.r_load, "resistance")},
        "resonators": res,
        "couplings": {"mode": "matrix", "pairs": pairs},
    }


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def canonical_order_ok(model: SystemModel) -> bool:
    """True when nodes follow driver, tx, cells, rx, load (the parse order)."""
    rank = {DRIVER: 0, TRANSMITTER: 1, MM_CELL: 2, RECEIVER: 3, LOAD: 4}
    ranks = [rank[r] for r in model.roles]
    return ranks == sorted(ranks)
