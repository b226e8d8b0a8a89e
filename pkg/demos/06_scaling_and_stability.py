"""Scaling covariance and linear response.

The equations are invariant under (a, u)(t, x) -> (a, l u)(l^2 t, l x).
A run on a box shrunk by l = 2 reproduces the reference run node for node.
Perturbing the data by delta moves the solution by an amount proportional
to delta.
"""
from besovns import SolverConfig, TorusGrid, scaling_check, stability_experiment
from besovns.navier_stokes import scalar_field, solenoidal_field

grid = TorusGrid((64, 64))
a0 = scalar_field(grid, seed=1, amplitude=0.1)
u0 = solenoidal_field(grid, seed=0, amplitude=0.5)
cfg = SolverConfig(mu=0.1, dt=0.02, T=0.2)

out = scaling_check(grid, a0, u0, cfg, l=2)
print("scaling: max difference", out["max_diff"])

out = stability_experiment(grid, a0, u0, scalar_field(grid, seed=5, amplitude=1.0),
                           solenoidal_field(grid, seed=6), deltas=(1e-2, 1e-3, 1e-4), config=cfg)
for d, du in zip((1e-2, 1e-3, 1e-4), out["terminal_du"]):
    print(f"delta={d:g}  |du(T)|_2={du:.4e}  ratio {du / d:.4f}")
print("log-log slope", out["slope"])
