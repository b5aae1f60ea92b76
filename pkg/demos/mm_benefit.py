"""Peak PTE with and without the metamaterial slab over transfer distance."""

from mmwpt.config import parse_config
from mmwpt.sweep import compare_with_without_mm

cfg = parse_config("paper-table1-tuned")
cmp = compare_with_without_mm(cfg.template, cfg.sweep.grid, [0.1, 0.15, 0.2, 0.25, 0.3])
print("distance_m  with_mm_%  without_mm_%  ratio")
for d, w, wo, r in zip(cmp.distances, cmp.peak_pte_with, cmp.peak_pte_without, cmp.ratio):
    print(f"{d:10.3f}  {w:9.3f}  {wo:12.3f}  {r:5.2f}")
