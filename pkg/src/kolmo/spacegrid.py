"""Periodic computational box used by the semigroup and the solver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from .errors import InputError


@dataclass(frozen=True)
class SpaceGrid:
    """Regular box ``[lows, lows + N h)`` treated as a torus.

    Attributes
    ----------
    lows : tuple of float
    widths : tuple of float
        Period along each axis.
    points : tuple of int
    """

    lows: tuple
    widths: tuple
    points: tuple

    def __post_init__(self):
        lows = tuple(float(x) for x in self.lows)
        widths = tuple(float(x) for x in self.widths)
        pts = tuple(int(x) for x in self.points)
        if not (len(lows) == len(widths) == len(pts)) or min(pts) < 8 or min(widths) <= 0:
            raise InputError("invalid space grid")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "points", pts)

    @classmethod
    def box(cls, half_widths, points):
        """Box centred at the origin with the given half widths."""
        hw = np.atleast_1d(np.asarray(half_widths, dtype=float))
        pts = np.broadcast_to(np.atleast_1d(points), hw.shape)
        return cls(tuple(-hw), tuple(2 * hw), tuple(int(p) for p in pts))

    @property
    def dims(self) -> int:
        return len(self.points)

    @property
    def spacing(self) -> np.ndarray:
        return np.array(self.widths) / np.array(self.points)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self):
        return [lo + np.arange(n) * h for lo, n, h in zip(self.lows, self.points, self.spacing)]

    def mesh(self) -> np.ndarray:
        """Coordinates of shape (*points, dims)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def flat(self) -> np.ndarray:
        return self.mesh().reshape(-1, self.dims)

    def frequency_mesh(self) -> np.ndarray:
        fr = [2.0 * np.pi * np.fft.fftfreq(n, h) for n, h in zip(self.points, self.spacing)]
        return np.stack(np.meshgrid(*fr, indexing="ij"), axis=-1)

    def refined(self, factor: int = 2) -> "SpaceGrid":
        return SpaceGrid(self.lows, self.widths, tuple(n * factor for n in self.points))

    def interior(self, margin: float) -> np.ndarray:
        """Mask of nodes farther than ``margin`` (fraction of width) from the box faces."""
        m = np.ones(self.points, dtype=bool)
        for k, ax in enumerate(self.axes()):
            lo = self.lows[k] + margin * self.widths[k]
            hi = self.lows[k] + (1.0 - margin) * self.widths[k]
            shape = [1] * self.dims
            shape[k] = -1
            m &= ((ax >= lo) & (ax <= hi)).reshape(shape)
        return m

    # -- operators -----------------------------------------------------------

    def apply_multiplier(self, values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
        """Periodic convolution written as a Fourier multiplier (FFT order)."""
        return np.fft.ifftn(np.fft.fftn(values) * multiplier).real

    def spline(self, values: np.ndarray) -> np.ndarray:
        """Cubic spline coefficients for :meth:`interpolate`."""
        return spline_filter(values, order=3, mode="grid-wrap")

    def interpolate(self, values: np.ndarray, pts, coef=None) -> np.ndarray:
        """Periodic cubic spline interpolation at arbitrary points."""
        pts = np.asarray(pts, dtype=float)
        coef = self.spline(values) if coef is None else coef
        idx = (pts - np.array(self.lows)) / self.spacing
        out = map_coordinates(coef, idx.reshape(-1, self.dims).T, order=3,
                              mode="grid-wrap", prefilter=False)
        return out.reshape(pts.shape[:-1])

    def gradient_fd4(self, values: np.ndarray, axis: int, lead: int = 0) -> np.ndarray:
        """Fourth-order central difference along space ``axis`` (periodic).

        ``lead`` counts leading non-space axes of ``values`` (e.g. time).
        """
        h = self.spacing[axis]
        axis = axis + lead
        r = lambda k: np.roll(values, -k, axis=axis)  # noqa: E731
        return (8.0 * (r(1) - r(-1)) - (r(2) - r(-2))) / (12.0 * h)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_volume)
