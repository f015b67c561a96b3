"""Stable densities on an FFT grid: self-similarity and the smoothing rate.

    python3 demos/stable_densities.py
"""
import numpy as np

from kolmo.ou import ChainMatrix, OUDensity
from kolmo.stable import GridSpec, LevyModel, SphericalMeasure, smoothing_moment, stable_density_grid

alpha = 1.5
ou = OUDensity(ChainMatrix.scalar_chain(2), LevyModel(alpha, SphericalMeasure.canonical(1)))
model = ou.proj_model

# p(t, y) = t^{-D/alpha} p(1, t^{-1/alpha} y); the t-scaled lattice shares nodes with the unit one
unit = stable_density_grid(model, 1.0, GridSpec.cube(2, 256, 10.24))
for t in (0.25, 0.5):
    dens = stable_density_grid(model, t, GridSpec.cube(2, 256, 10.24 * t ** (1 / alpha)))
    err = np.max(np.abs(dens.values * t ** (2 / alpha) - unit.values)) / unit.values.max()
    print(f"t = {t}: self-similarity error {err:.2e}, mass defect {dens.mass_defect:.1e}")

# int |y|^gamma |D^l p(t)| dy should behave like t^{(gamma - l)/alpha}
times = np.array([0.25, 0.5, 1.0])
for gamma, order in ((0.2, 0), (0.8, 1)):
    vals = []
    for t in times:
        dens = stable_density_grid(model, t, GridSpec.cube(2, 256, 10.24 * t ** (1 / alpha)),
                                   derivative=(order, 0))
        vals.append(smoothing_moment(dens, gamma, order, alpha))
    slope = np.polyfit(np.log(times), np.log(vals), 1)[0]
    print(f"gamma = {gamma}, l = {order}: slope {slope:.4f}, predicted {(gamma - order) / alpha:.4f}")
