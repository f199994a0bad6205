"""Two-dimensional damped complex exponential signals.

A signal is a sum of K separable modes

    x(t1, t2) = sum_k g_k exp[(i w1_k - b1_k) t1] exp[(i w2_k - b2_k) t2]

observed on a (possibly sparse) subset of a uniform 2D time grid. Times are
in sample units by default (dt = 1), so frequencies are in rad/sample and
dampings in 1/sample.
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

# Ranges used by the Monte-Carlo scenes.
DEFAULT_FREQ_RANGE = (0.1, 0.97)
DEFAULT_DAMP_RANGE = (0.019, 0.035)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class SamplingPoint(NamedTuple):
    i1: int
    i2: int
    t1: float
    t2: float


@dataclass(frozen=True, eq=False)
class SamplingScheme:
    """Sample positions on an ``n1 x n2`` uniform grid with spacings ``dt``.

    Indices and times are held as parallel arrays; ``points`` gives the
    record view.
    """

    i1: np.ndarray
    i2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    grid_shape: tuple[int, int]
    dt: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        i1 = np.asarray(self.i1, dtype=np.int64).ravel()
        i2 = np.asarray(self.i2, dtype=np.int64).ravel()
        t1 = np.asarray(self.t1, dtype=float).ravel()
        t2 = np.asarray(self.t2, dtype=float).ravel()
        if not (len(i1) == len(i2) == len(t1) == len(t2)):
            raise ValueError("index and time arrays must have equal length")
        n1, n2 = (int(n) for n in self.grid_shape)
        if len(i1) and (i1.min() < 0 or i2.min() < 0 or i1.max() >= n1 or i2.max() >= n2):
            raise ValueError(f"sampling point outside grid of shape {(n1, n2)}")
        flat = i1 * n2 + i2
        if len(np.unique(flat)) != len(flat):
            raise ValueError("duplicate sampling points")
        for name, arr in (("i1", i1), ("i2", i2), ("t1", t1), ("t2", t2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "grid_shape", (n1, n2))
        object.__setattr__(self, "dt", (float(self.dt[0]), float(self.dt[1])))

    def __len__(self) -> int:
        return len(self.i1)

    @property
    def points(self) -> list[SamplingPoint]:
        return [SamplingPoint(int(a), int(b), float(c), float(d))
                for a, b, c, d in zip(self.i1, self.i2, self.t1, self.t2)]

    @property
    def flat_index(self) -> np.ndarray:
        """Row-major position of every point inside ``grid_shape``."""
        return self.i1 * self.grid_shape[1] + self.i2

    @property
    def fraction(self) -> float:
        return len(self) / (self.grid_shape[0] * self.grid_shape[1])

    def is_subset_of(self, other: SamplingScheme) -> bool:
        return bool(np.isin(self.flat_index, other.flat_index).all())


@dataclass(frozen=True)
class Component:
    """One 2D spectral band."""

    omega1: float
    omega2: float
    beta1: float = 0.0
    beta2: float = 0.0
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError(f"dampings must be >= 0, got {(self.beta1, self.beta2)}")
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    @property
    def frequencies(self) -> tuple[float, float]:
        return (self.omega1, self.omega2)

    @property
    def dampings(self) -> tuple[float, float]:
        return (self.beta1, self.beta2)


@dataclass(frozen=True)
class ComponentSet:
    components: tuple[Component, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def k(self) -> int:
        return len(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self) -> Iterator[Component]:
        return iter(self.components)

    def __getitem__(self, idx: int) -> Component:
        return self.components[idx]

    def __add__(self, other: ComponentSet) -> ComponentSet:
        return ComponentSet(self.components + tuple(other))

    def as_arrays(self) -> dict[str, np.ndarray]:
        c = self.components
        return {
            "omega1": np.array([x.omega1 for x in c], dtype=float),
            "omega2": np.array([x.omega2 for x in c], dtype=float),
            "beta1": np.array([x.beta1 for x in c], dtype=float),
            "beta2": np.array([x.beta2 for x in c], dtype=float),
            "amplitude": np.array([x.amplitude for x in c], dtype=complex),
        }

    @property
    def max_amplitude(self) -> float:
        return max((abs(c.amplitude) for c in self.components), default=0.0)


@dataclass(frozen=True, eq=False)
class SampledSignal:
    scheme: SamplingScheme
    values: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=complex).ravel()
        if len(values) != len(self.scheme):
            raise ValueError(
                f"{len(values)} values for a scheme of {len(self.scheme)} points")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def restrict(self, scheme: SamplingScheme) -> SampledSignal:
        """Values at the points of ``scheme``, which must be a subset of ours."""
        pos = {int(f): n for n, f in enumerate(self.scheme.flat_index)}
        try:
            idx = [pos[int(f)] for f in scheme.flat_index]
        except KeyError:
            raise ValueError("scheme is not a subset of the signal's points") from None
        return SampledSignal(scheme, self.values[idx], self.noise_sigma)

    def to_grid(self) -> np.ndarray:
        """Zero-filled ``grid_shape`` array holding the available samples."""
        out = np.zeros(self.scheme.grid_shape, dtype=complex)
        out[self.scheme.i1, self.scheme.i2] = self.values
        return out


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise whose per-quadrature FWHM is ``fwhm_ratio * max_amp``."""

    fwhm_ratio: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.fwhm_ratio >= 0:
            raise ValueError(f"fwhm_ratio must be >= 0, got {self.fwhm_ratio}")


def exp_modes(omega1, omega2, beta1, beta2, t1, t2) -> np.ndarray:
    """``exp[(i w1 - b1) t1] * exp[(i w2 - b2) t2]`` for one or many modes.

    Mode parameters broadcast along a trailing axis, so scalars give a vector
    over the times and length-M arrays give a ``(len(t), M)`` matrix.
    """
    t1 = np.asarray(t1, dtype=float)[:, None]
    t2 = np.asarray(t2, dtype=float)[:, None]
    w1, w2, b1, b2 = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float))
                                           for v in (omega1, omega2, beta1, beta2)))
    out = np.exp((1j * w1 - b1) * t1 + (1j * w2 - b2) * t2)
    if np.ndim(omega1) == 0 and np.ndim(omega2) == 0 and np.ndim(beta1) == 0 and np.ndim(beta2) == 0:
        return out[:, 0]
    return out


def synthesize(components: ComponentSet | Sequence[Component],
               scheme: SamplingScheme) -> SampledSignal:
    """Noiseless samples of the damped-mode model on ``scheme``."""
    comps = ComponentSet(tuple(components))
    values = np.zeros(len(scheme), dtype=complex)
    if comps.k:
        p = comps.as_arrays()
        modes = exp_modes(p["omega1"], p["omega2"], p["beta1"], p["beta2"],
                          scheme.t1, scheme.t2)
        values = modes @ p["amplitude"]
    return SampledSignal(scheme, values, 0.0)


def noise_sigma(fwhm_ratio: float, max_amp: float) -> float:
    return fwhm_ratio * max_amp * FWHM_TO_SIGMA


def add_noise(signal: SampledSignal, spec: NoiseSpec, max_amp: float) -> SampledSignal:
    """Add seeded complex Gaussian noise.

    Real and imaginary parts each get standard deviation
    ``fwhm_ratio * max_amp / (2 sqrt(2 ln 2))``.
    """
    if spec.fwhm_ratio < 0:
        raise ValueError(f"fwhm_ratio must be >= 0, got {spec.fwhm_ratio}")
    if spec.fwhm_ratio == 0:
        return SampledSignal(signal.scheme, signal.values, signal.noise_sigma)
    if not max_amp > 0:
        raise ValueError("max_amp must be > 0 when noise is requested")
    sigma = noise_sigma(spec.fwhm_ratio, max_amp)
    rng = np.random.default_rng(spec.seed)
    n = len(signal)
    noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    total = math.hypot(signal.noise_sigma, sigma)
    return SampledSignal(signal.scheme, signal.values + noise, total)


def make_uniform_grid(n1: int, n2: int, dt1: float = 1.0, dt2: float = 1.0) -> SamplingScheme:
    if n1 < 1 or n2 < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {(n1, n2)}")
    if not (dt1 > 0 and dt2 > 0):
        raise ValueError(f"spacings must be > 0, got {(dt1, dt2)}")
    i1, i2 = np.divmod(np.arange(n1 * n2), n2)
    return SamplingScheme(i1, i2, i1 * dt1, i2 * dt2, (n1, n2), (dt1, dt2))


def subsample_random(grid: SamplingScheme, count: int,
                     corner: tuple[int, int] | None = None,
                     seed: int = 0) -> SamplingScheme:
    """Draw ``count`` distinct points uniformly without replacement.

    With ``corner=(c1, c2)`` only points with ``i1 < c1`` and ``i2 < c2`` are
    eligible. The draw is a seeded permutation of the eligible points, so for
    a fixed seed a smaller count always yields a subset of a larger one.
    Points keep the parent's row-major order.
    """
    eligible = np.arange(len(grid))
    if corner is not None:
        c1, c2 = corner
        n1, n2 = grid.grid_shape
        if not (0 < c1 <= n1 and 0 < c2 <= n2):
            raise ValueError(f"corner {corner} does not fit grid {grid.grid_shape}")
        eligible = eligible[(grid.i1 < c1) & (grid.i2 < c2)]
    if count < 0 or count > len(eligible):
        raise ValueError(f"cannot draw {count} points from {len(eligible)} eligible")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.permutation(eligible)[:count])
    return SamplingScheme(grid.i1[pick], grid.i2[pick], grid.t1[pick], grid.t2[pick],
                          grid.grid_shape, grid.dt)


def _check_range(name, rng_):
    lo, hi = rng_
    if not lo < hi:
        raise ValueError(f"{name} must satisfy lo < hi, got {rng_}")


def draw_random_scene(k: int = 4,
                      freq_range: tuple[float, float] = DEFAULT_FREQ_RANGE,
                      damp_range: tuple[float, float] = DEFAULT_DAMP_RANGE,
                      seed: int | np.random.Generator = 0) -> ComponentSet:
    """k unit-amplitude components with i.i.d. uniform frequencies and dampings."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    _check_range("freq_range", freq_range)
    _check_range("damp_range", damp_range)
    if damp_range[0] < 0:
        raise ValueError("dampings must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = rng.uniform(freq_range[0], freq_range[1], size=(k, 2))
    b = rng.uniform(damp_range[0], damp_range[1], size=(k, 2))
    return ComponentSet(tuple(Component(w[j, 0], w[j, 1], b[j, 0], b[j, 1], 1.0)
                              for j in range(k)))


def with_amplitudes(components: ComponentSet, amplitudes: Sequence[complex]) -> ComponentSet:
    return ComponentSet(tuple(replace(c, amplitude=complex(a))
                              for c, a in zip(components, amplitudes)))
