"""Solve the reference 13-resonator link at its |S21| peak and print branch currents."""

import math

from mmwpt.config import parse_config
from mmwpt.metrics import frequency_response
from mmwpt.sweep import FrequencyGrid, frequency_sweep, peak_find

model = parse_config("paper-table1-tuned").model
f_peak, _ = peak_find(frequency_sweep(model, FrequencyGrid(12e6, 13.5e6, 3001)))
resp = frequency_response(model, f_peak)
print(f"peak {f_peak / 1e6:.4f} MHz  |S21| = {abs(resp.s21):.4f}  PTE = {resp.pte:.2f} %")
for label, i in zip(model.labels, resp.currents):
    print(f"  {label:>12s}  |I| = {abs(i):.3e} A  phase = {math.degrees(math.atan2(i.imag, i.real)):7.2f} deg")
