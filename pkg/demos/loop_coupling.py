"""Compare the exact coaxial-loop mutual inductance with the dipole approximation."""

from mmwpt.coupling import LoopGeometry, coaxial_loop_mutual, dipole_mutual

a = 0.05
loop = LoopGeometry(a)
print(" d/a      M exact (H)     M dipole (H)    ratio")
for ratio in (1, 2, 5, 10, 15, 20, 50):
    other = loop.at(ratio * a)
    m, md = coaxial_loop_mutual(loop, other), dipole_mutual(loop, other)
    print(f"{ratio:4d}  {m:14.6e}  {md:14.6e}  {m / md:.4f}")
