"""Tune the cell capacitor to 13.56 MHz, then search for the best slab position."""

from mmwpt.config import parse_config
from mmwpt.sweep import FrequencyGrid
from mmwpt.tuner import optimize_slab_position, tune_compensation_capacitor

cfg = parse_config("paper-table1")
cap = tune_compensation_capacitor(cfg.cell, 13.56e6)
print(f"C_total for 13.56 MHz: {cap.cell.capacitance * 1e12:.3f} pF")

tpl = parse_config("paper-table1-tuned").template
d = tpl.transfer_distance
res = optimize_slab_position(tpl, (0.05 * d, 0.95 * d), FrequencyGrid(12e6, 13.5e6, 1501))
print(f"best slab position {res.tuned_value * 1e3:.2f} mm of {d * 1e3:.0f} mm, "
      f"peak |S21| {res.achieved_objective:.4f}, {res.iterations} iterations, unimodal={res.unimodal}")
