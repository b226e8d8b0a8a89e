"""Dyadic blocks of a rough field.

A random field with prescribed regularity is split into Littlewood-Paley
blocks. The block norms decay at the designed rate, the blocks sum back to
the field, and Besov norms at a few indices are printed.
"""
import numpy as np

from besovns import DyadicDecomposition
from besovns.harness import SampleSpec, design_norm, generate_sample

spec = SampleSpec(s=0.75, p=2.0, r=2.0, envelope="decay", seed=11, sizes=(128, 128))
u = generate_sample(spec)
dec = DyadicDecomposition(spec.grid, u)

print("level   ||Delta_l u||_2   2^(0.75 l) * norm")
for l, n in zip(dec.levels, dec.norms(2)):
    print(f"{l:5d}   {n:15.6e}   {2.0 ** (0.75 * l) * n:15.6e}")

print("reconstruction error", np.abs(dec.reconstruct() - u).max())
print("measured B^0.75_2,2 ", dec.besov(0.75, 2, 2), " designed", design_norm(spec))
for s, p, r in [(0.0, 2, 2), (0.5, 4, 2), (0.25, np.inf, np.inf)]:
    print(f"B^{s}_{p},{r}", dec.besov(s, p, r))
