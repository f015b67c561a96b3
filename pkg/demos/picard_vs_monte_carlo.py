"""Solve the two-level chain with a Hoelder drift and check it against Monte Carlo.

    python3 demos/picard_vs_monte_carlo.py
"""
import numpy as np

from kolmo.montecarlo import feynman_kac
from kolmo.verify import desk_solution

problem, field = desk_solution(eps=0.5)
print(f"Picard: {field.iteration} iterations, first contraction factor {field.contraction:.3g}")

for x in ([0.0, 0.0], [0.8, -0.5], [-1.2, 1.0]):
    x = np.array(x)
    u = float(field.at(0.0, x[None])[0])
    mc = feynman_kac(problem, 0.0, x, n_paths=40_000, n_steps=100, seed=1)
    z = (u - mc.value) / mc.std_error
    print(f"x = {x}: solver {u:.5f}, Monte Carlo {mc.value:.5f} ± {mc.std_error:.5f} (z = {z:+.2f})")
