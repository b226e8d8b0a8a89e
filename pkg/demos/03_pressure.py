"""Pressure for a variable density.

The equation div((1 + a) grad Pi) = div F is solved by a fixed-point
iteration around the constant-coefficient Poisson problem. The residual
falls by roughly |a|_inf per sweep. Past a contraction factor of one the
solver stops and says so.
"""
import numpy as np

from besovns import CoefficientField, NonConvergenceError, TorusGrid, solve_pressure

grid = TorusGrid((64, 64))
x, y = grid.mesh()
rng = np.random.default_rng(5)
F = np.stack([np.sin(2 * y) + 0.3 * np.cos(x), np.cos(3 * x + y)])
bump = np.cos(x) * np.sin(2 * y) + 0.5 * np.sin(x + y)
bump /= np.abs(bump).max()

for amp in (0.01, 0.05, 0.1, 0.4):
    sol = solve_pressure(CoefficientField(grid, amp * bump), F, tol=1e-12)
    print(f"|a|_inf={amp:<5} iterations {sol.iterations:3d}  contraction {sol.contraction:.3f}"
          f"  residual {sol.residual:.1e}")

try:
    solve_pressure(CoefficientField(grid, 0.95 * bump + 2.0 * (bump > 0.5)), F)
except NonConvergenceError as exc:
    print("large coefficient:", exc)
