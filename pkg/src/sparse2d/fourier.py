"""Fourier baseline: direct 2D DTFT, peak picking and FWHM widths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from .model import Component, ComponentSet, SampledSignal

DEFAULT_AXIS_POINTS = 1024


@dataclass(frozen=True, eq=False)
class SpectrumGrid:
    omega1_axis: np.ndarray
    omega2_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        a1 = np.array(self.omega1_axis, dtype=float).ravel()
        a2 = np.array(self.omega2_axis, dtype=float).ravel()
        for name, a in (("omega1_axis", a1), ("omega2_axis", a2)):
            if len(a) == 0:
                raise ValueError(f"{name} is empty")
            if np.any(np.diff(a) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (len(a1), len(a2)):
            raise ValueError(f"values shape {values.shape} does not match axes "
                             f"{(len(a1), len(a2))}")
        for name, a in (("omega1_axis", a1), ("omega2_axis", a2), ("values", values)):
            object.__setattr__(self, name, a)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def index_of(self, peak: tuple[float, float]) -> tuple[int, int]:
        """Nearest axis cell to ``peak``."""
        return (int(np.argmin(np.abs(self.omega1_axis - peak[0]))),
                int(np.argmin(np.abs(self.omega2_axis - peak[1]))))


def default_axis(n: int = DEFAULT_AXIS_POINTS, dt: float = 1.0) -> np.ndarray:
    """``n`` equispaced frequencies over ``[0, 2 pi / dt)``."""
    return 2 * np.pi * np.arange(n) / (n * dt)


def dtft2(signal: SampledSignal, omega1_axis=None, omega2_axis=None) -> SpectrumGrid:
    """Direct transform ``sum_s x(s) exp(-i w1 t1 - i w2 t2)`` over available samples.

    Samples sharing a time coordinate are combined first, so the cost is
    that of two small matrix products rather than a full triple sum.
    """
    if len(signal) == 0:
        raise ValueError("empty signal")
    dt1, dt2 = signal.scheme.dt
    a1 = default_axis(dt=dt1) if omega1_axis is None else np.asarray(omega1_axis, dtype=float)
    a2 = default_axis(dt=dt2) if omega2_axis is None else np.asarray(omega2_axis, dtype=float)
    if a1.size == 0 or a2.size == 0:
        raise ValueError("frequency axes must be non-empty")
    u1, r1 = np.unique(signal.scheme.t1, return_inverse=True)
    u2, r2 = np.unique(signal.scheme.t2, return_inverse=True)
    R = np.zeros((len(u1), len(u2)), dtype=complex)
    R[r1, r2] = signal.values
    F1 = np.exp(-1j * np.outer(a1, u1))
    F2 = np.exp(-1j * np.outer(u2, a2))
    return SpectrumGrid(a1, a2, F1 @ R @ F2)


def local_maxima(mag: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Boolean mask of 2D local maxima over the 8-neighbourhood.

    A cell qualifies when it is >= every neighbour, strictly greater than at
    least one, and strictly greater than the neighbours preceding it in
    row-major order. The last rule keeps one cell per flat-topped peak (the
    lowest index) and the strictness rule rejects flat floors. Only cells
    inside the array count as neighbours. Differences up to ``rtol`` times
    the largest value count as ties, so roundoff ripple on a flat spectrum
    yields no maxima.
    """
    mag = np.asarray(mag, dtype=float)
    tol = rtol * float(np.max(np.abs(mag), initial=0.0))
    n1, n2 = mag.shape
    ring = np.ones((3, 3), dtype=bool)
    ring[1, 1] = False
    nb_max = maximum_filter(mag, footprint=ring, mode="constant", cval=-np.inf)
    i1, i2 = np.nonzero(mag >= nb_max - tol)
    centre = mag[i1, i2]
    gt_any = np.zeros(len(i1), dtype=bool)
    gt_prev = np.ones(len(i1), dtype=bool)
    for d1 in (-1, 0, 1):
        for d2 in (-1, 0, 1):
            if d1 == 0 and d2 == 0:
                continue
            j1, j2 = i1 + d1, i2 + d2
            ok = (j1 >= 0) & (j1 < n1) & (j2 >= 0) & (j2 < n2)
            above = centre > mag[np.clip(j1, 0, n1 - 1), np.clip(j2, 0, n2 - 1)] + tol
            gt_any |= ok & above
            if d1 < 0 or (d1 == 0 and d2 < 0):
                gt_prev &= ~ok | above
    out = np.zeros(mag.shape, dtype=bool)
    keep = gt_any & gt_prev
    out[i1[keep], i2[keep]] = True
    return out


def top_local_maxima(mag: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Indices of the ``k`` largest local maxima, ties to the lower index."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    i1, i2 = np.nonzero(local_maxima(mag))
    if len(i1) < k:
        raise ValueError(f"found {len(i1)} local maxima, {k} requested "
                         f"({k - len(i1)} missing)")
    # lexsort: last key is primary
    order = np.lexsort((i2, i1, -mag[i1, i2]))[:k]
    return [(int(i1[j]), int(i2[j])) for j in order]


def pick_peaks(spectrum: SpectrumGrid, k: int) -> list[tuple[float, float]]:
    """The ``k`` largest local maxima of ``|value|``, in descending magnitude."""
    idx = top_local_maxima(np.abs(spectrum.values), k)
    return [(float(spectrum.omega1_axis[a]), float(spectrum.omega2_axis[b])) for a, b in idx]


@dataclass(frozen=True)
class Widths:
    """Per-axis full widths. Iterates as ``(width1, width2)``."""

    width1: float
    width2: float
    clamped: tuple[bool, bool] = (False, False)

    def __iter__(self):
        return iter((self.width1, self.width2))

    @property
    def betas(self) -> tuple[float, float]:
        return (self.width1 / 2, self.width2 / 2)


def half_max_width(axis: np.ndarray, profile: np.ndarray, center: int) -> tuple[float, bool]:
    """Full width at half of ``profile[center]`` via linear interpolation.

    Walks outwards from ``center`` until the profile drops below half its
    value. A side that never drops is clamped to the axis end and flagged.
    """
    axis = np.asarray(axis, dtype=float)
    profile = np.asarray(profile, dtype=float)
    half = profile[center] / 2
    clamped = False

    def crossing(step):
        nonlocal clamped
        j = center
        while 0 <= j + step < len(profile):
            nxt = j + step
            if profile[nxt] < half:
                frac = (profile[j] - half) / (profile[j] - profile[nxt])
                return axis[j] + frac * (axis[nxt] - axis[j])
            j = nxt
        clamped = True
        return axis[j]

    right = crossing(1)
    left = crossing(-1)
    return float(right - left), clamped


def fwhm(spectrum: SpectrumGrid, peak: tuple[float, float]) -> Widths:
    """Full widths at half the power maximum on axis slices through ``peak``.

    ``peak`` is snapped to the nearest cell, which must be a local maximum of
    the power along both slices.
    """
    a, b = spectrum.index_of(peak)
    p = spectrum.power
    s1, s2 = p[:, b], p[a, :]
    for s, j in ((s1, a), (s2, b)):
        left = s[j - 1] if j > 0 else -np.inf
        right = s[j + 1] if j + 1 < len(s) else -np.inf
        if s[j] < left or s[j] < right:
            raise ValueError(f"({peak[0]:.6g}, {peak[1]:.6g}) is not a local maximum")
    w1, c1 = half_max_width(spectrum.omega1_axis, s1, a)
    w2, c2 = half_max_width(spectrum.omega2_axis, s2, b)
    return Widths(w1, w2, (c1, c2))


def estimate(signal: SampledSignal, k: int, n_axis: int = DEFAULT_AXIS_POINTS) -> ComponentSet:
    """Fourier-method estimate: DTFT peaks and half power widths."""
    dt1, dt2 = signal.scheme.dt
    spec = dtft2(signal, default_axis(n_axis, dt1), default_axis(n_axis, dt2))
    comps = []
    for w1, w2 in pick_peaks(spec, k):
        b1, b2 = fwhm(spec, (w1, w2)).betas
        a, b = spec.index_of((w1, w2))
        comps.append(Component(w1, w2, b1, b2, spec.values[a, b] / len(signal)))
    return ComponentSet(tuple(comps))
