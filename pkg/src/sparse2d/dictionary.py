"""Candidate parameter grids and dictionary atoms."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .model import DEFAULT_FREQ_RANGE, SamplingScheme, exp_modes


def _strictly_increasing(name, vals):
    if len(vals) == 0:
        raise ValueError(f"{name} is empty")
    if np.any(np.diff(vals) <= 0):
        raise ValueError(f"{name} must be strictly increasing")


@dataclass(frozen=True, eq=False)
class DictionaryGrid:
    """Candidate frequencies and dampings spanning the atom set."""

    omega1_vals: np.ndarray
    omega2_vals: np.ndarray
    beta1_vals: np.ndarray = field(default_factory=lambda: np.zeros(1))
    beta2_vals: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        for name in ("omega1_vals", "omega2_vals", "beta1_vals", "beta2_vals"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            _strictly_increasing(name, arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.beta1_vals[0] < 0 or self.beta2_vals[0] < 0:
            raise ValueError("candidate dampings must be >= 0")

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.omega1_vals), len(self.omega2_vals))

    @property
    def size(self) -> int:
        return len(self.omega1_vals) * len(self.omega2_vals)

    @property
    def undamped(self) -> bool:
        return (len(self.beta1_vals) == 1 and len(self.beta2_vals) == 1
                and self.beta1_vals[0] == 0 and self.beta2_vals[0] == 0)

    @property
    def spacing(self) -> tuple[float, float]:
        """Frequency step per axis (inf for a single-value axis)."""
        def step(v):
            return float(v[1] - v[0]) if len(v) > 1 else np.inf
        return (step(self.omega1_vals), step(self.omega2_vals))


def build_grid(p1: int = 256, p2: int = 256,
               freq_range: tuple[float, float] = DEFAULT_FREQ_RANGE,
               beta_vals: Sequence[float] | None = None) -> DictionaryGrid:
    """Equispaced frequency grid including both endpoints.

    ``beta_vals`` applies to both axes; by default the single value 0 gives
    the undamped dictionary.
    """
    if p1 < 2 or p2 < 2:
        raise ValueError(f"need at least 2 points per axis, got {(p1, p2)}")
    lo, hi = freq_range
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError(f"degenerate frequency range {freq_range}")
    beta = np.zeros(1) if beta_vals is None else np.asarray(beta_vals, dtype=float)
    return DictionaryGrid(np.linspace(lo, hi, p1), np.linspace(lo, hi, p2), beta, beta)


@dataclass(frozen=True, eq=False)
class Atom:
    params: tuple[float, float, float, float]
    values: np.ndarray
    scale: float


def atom(params: Sequence[float], scheme: SamplingScheme, normalize: bool = True) -> Atom:
    """Evaluate ``exp[(i w1 - b1) t1] exp[(i w2 - b2) t2]`` on ``scheme``.

    With ``normalize`` the values are divided by their Euclidean norm, which
    is kept in ``scale``; otherwise ``scale`` is 1.
    """
    w1, w2, b1, b2 = (float(p) for p in params)
    if b1 < 0 or b2 < 0:
        raise ValueError(f"dampings must be >= 0, got {(b1, b2)}")
    if len(scheme) == 0:
        raise ValueError("empty sampling scheme")
    values = exp_modes(w1, w2, b1, b2, scheme.t1, scheme.t2)
    scale = 1.0
    if normalize:
        scale = float(np.linalg.norm(values))
        values = values / scale
    values.setflags(write=False)
    return Atom((w1, w2, b1, b2), values, scale)


def atom_matrix(omega1, omega2, beta1, beta2, scheme: SamplingScheme,
                normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Columns of several atoms at once, with their norms."""
    A = exp_modes(np.atleast_1d(omega1), np.atleast_1d(omega2),
                  np.atleast_1d(beta1), np.atleast_1d(beta2), scheme.t1, scheme.t2)
    if not normalize:
        return A, np.ones(A.shape[1])
    norms = np.linalg.norm(A, axis=0)
    return A / norms, norms


class SeparableOperator:
    """Undamped dictionary ``A`` on a scheme, applied through 1D factors.

    An undamped atom factorizes as ``e1(t1) * e2(t2)``, so ``A^H r`` is
    ``E1^H R conj(E2)`` with ``R`` the residual scattered onto the distinct
    sample times. Atoms are unit-norm (each undamped column has norm
    ``sqrt(S)``). Flat atom index ``m`` maps to ``(m // P2, m % P2)``.
    """

    def __init__(self, grid: DictionaryGrid, scheme: SamplingScheme):
        if not grid.undamped:
            raise ValueError("separable operator requires an undamped grid")
        if len(scheme) == 0:
            raise ValueError("empty sampling scheme")
        self.grid = grid
        self.scheme = scheme
        self.n_samples = len(scheme)
        self._sq = np.sqrt(self.n_samples)
        u1, self._r1 = np.unique(scheme.t1, return_inverse=True)
        u2, self._r2 = np.unique(scheme.t2, return_inverse=True)
        self._shape_r = (len(u1), len(u2))
        self._E1 = np.exp(1j * np.outer(u1, grid.omega1_vals))
        self._E2 = np.exp(1j * np.outer(u2, grid.omega2_vals))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        """``A^H r`` as a ``(P1, P2)`` array."""
        R = np.zeros(self._shape_r, dtype=complex)
        R[self._r1, self._r2] = r
        return (self._E1.conj().T @ R @ self._E2.conj()) / self._sq

    def columns(self, flat: np.ndarray) -> np.ndarray:
        j1, j2 = np.divmod(np.asarray(flat, dtype=np.int64), self.grid.shape[1])
        return self._E1[self._r1][:, j1] * self._E2[self._r2][:, j2] / self._sq

    def forward(self, flat: np.ndarray, g: np.ndarray) -> np.ndarray:
        """``A g`` for coefficients ``g`` on the atoms ``flat``."""
        if len(flat) == 0:
            return np.zeros(self.n_samples, dtype=complex)
        return self.columns(flat) @ g
