"""Empirical constants for the product and commutator laws.

Each law is sampled on 64^2 and 128^2 with the same seeds. A law passes when
its largest ratio stays below the ceiling and the constant does not grow
from the coarse to the fine grid.
"""
from besovns import run_suite

res = run_suite(["product-2.2", "product-2.5", "product-corollary", "commutator", "log-interpolation"],
                M=20, resolutions=(64, 128))
for law, v in res.verdicts.items():
    print(f"{law:20s} {'PASS' if v['passed'] else 'FAIL'}  C_emp={v['c_emp']:.4f}  stability={v['stability']:.3f}")
print(f"{res.elapsed:.1f} s")
