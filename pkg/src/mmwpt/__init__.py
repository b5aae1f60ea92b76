"""Equivalent-circuit simulator for metamaterial-enhanced four-coil WPT links."""

__version__ = "0.1.0"

from .circuit import (  # noqa: E402
    DRIVER,
    LOAD,
    MM_CELL,
    ADJACENT_NEGLECT,
    RECEIVER,
    TRANSMITTER,
    CouplingSet,
    LoadSpec,
    MMUnitCellParams,
    ResonatorNode,
    ResonatorParams,
    SourceSpec,
    SystemModel,
    apply_neglect_rule,
    build_kvl_matrix,
    reduce_slab,
    remove_cells,
    self_impedance,
    solve_currents,
    solve_many,
)
from .coupling import (  # noqa: E402
    ChainTemplate,
    CoilLayout,
    CouplingTable,
    LoopGeometry,
    build_paper_couplings,
    coaxial_loop_mutual,
    coupling_from_k,
    interpolate_coupling,
)
from .metrics import (  # noqa: E402
    FrequencyResponse,
    closed_form_gain,
    frequency_response,
    input_reflection,
    pte,
    resonant_frequency,
    s21,
    voltage_gain,
)
from .sweep import (  # noqa: E402
    FrequencyGrid,
    SweepResult,
    TopologySpec,
    compare_with_without_mm,
    distance_sweep,
    frequency_sweep,
    peak_find,
    resolve_topology,
    slab_position_sweep,
    topology_compare,
)
