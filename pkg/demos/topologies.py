"""Peak PTE and 3 dB bandwidth of the two-coil, four-coil and CLC links."""

from mmwpt.sweep import FrequencyGrid, TopologySpec, bandwidth_3db, topology_compare

result = topology_compare([TopologySpec(k) for k in ("two_coil", "four_coil", "clc")],
                          FrequencyGrid(10e6, 17e6, 7001), f0=13.56e6)
for i, label in enumerate(result.labels):
    f, mag = result.peak(i)
    print(f"{label:>10s}  peak {f / 1e6:7.3f} MHz  PTE {100 * mag**2:6.2f} %  BW {bandwidth_3db(result, i) / 1e3:9.1f} kHz")
