"""Sparse exponential mode analysis.

Starting from the undamped LASSO peaks, each component's dampings and
frequencies are refined directly against the non-uniform samples, one
component at a time with the others subtracted, and all amplitudes are
re-fitted jointly after every pass. Every update is accepted only if the
data-fit residual decreases, so the residual norm is monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from . import lasso
from .dictionary import DictionaryGrid
from .model import Component, ComponentSet, SampledSignal

_INV_PHI = (math.sqrt(5) - 1) / 2
# smallest frequency span, relative to the starting span
_MIN_SPAN = 1e-6


@dataclass(frozen=True)
class SemaOptions:
    """Refinement settings.

    Attributes
    ----------
    lam : float
        Penalty of the initial LASSO solve.
    outer_iterations : int
        Maximum number of refinement passes over all components.
    zoom_levels : int
        Span halvings per frequency refinement.
    local_points : int
        Candidates per axis in each zoom level (odd, so the centre is kept).
    beta_bracket : tuple of float
        Search interval for each damping.
    beta_tol : float
        Absolute width at which the golden-section search stops.
    residual_tolerance : float
        A pass that lowers the residual norm by less than this fraction
        counts as stalled (see :func:`refine`).
    """

    lam: float = lasso.DEFAULT_LAMBDA
    outer_iterations: int = 200
    zoom_levels: int = 6
    local_points: int = 5
    beta_bracket: tuple[float, float] = (0.0, 0.2)
    beta_tol: float = 1e-8
    residual_tolerance: float = 1e-9

    def __post_init__(self):
        if self.local_points < 3 or self.local_points % 2 == 0:
            raise ValueError(f"local_points must be odd and >= 3, got {self.local_points}")
        lo, hi = self.beta_bracket
        if not (lo >= 0 and hi > lo):
            raise ValueError(f"invalid beta_bracket {self.beta_bracket}")
        if self.outer_iterations < 1 or self.zoom_levels < 0:
            raise ValueError("outer_iterations must be >= 1 and zoom_levels >= 0")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")

    @property
    def solver_options(self) -> lasso.SolverOptions:
        return lasso.SolverOptions(lam=self.lam)


@dataclass(frozen=True)
class SemaTrace:
    """Residual norm and parameters after each pass (entry 0 is the start)."""

    residual_norms: tuple[float, ...] = ()
    components: tuple[ComponentSet, ...] = field(default=(), repr=False)


@numba.njit(cache=True)
def _fit_kernel(y, mask, t1, t2, w1, w2, b1, b2):
    """LS amplitude of one separable mode against ``y`` and the residual energy."""
    n1, n2 = y.shape
    e1 = np.exp((1j * w1 - b1) * t1)
    e2 = np.exp((1j * w2 - b2) * t2)
    aa = 0.0
    ay = 0j
    for i in range(n1):
        for j in range(n2):
            if mask[i, j] != 0:
                a = e1[i] * e2[j]
                aa += a.real * a.real + a.imag * a.imag
                ay += np.conj(a) * y[i, j]
    g = ay / aa if aa > 0 else 0j
    res = 0.0
    for i in range(n1):
        for j in range(n2):
            if mask[i, j] != 0:
                r = y[i, j] - g * e1[i] * e2[j]
                res += r.real * r.real + r.imag * r.imag
    return g, res


@numba.njit(cache=True)
def _profile(t, u, m, yy, beta):
    """Residual energy ``yy - |sum d u|^2 / sum d^2 m`` with ``d = exp(-beta t)``."""
    ay = 0j
    aa = 0.0
    for i in range(len(t)):
        d = math.exp(-beta * t[i])
        ay += d * u[i]
        aa += d * d * m[i]
    if aa <= 0:
        return yy
    return yy - (ay.real * ay.real + ay.imag * ay.imag) / aa


@numba.njit(cache=True)
def _golden_kernel(t, u, m, yy, lo, hi, tol, inv_phi):
    """Golden-section search of :func:`_profile`; the bracket edges are candidates too."""
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = _profile(t, u, m, yy, c)
    fd = _profile(t, u, m, yy, d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = _profile(t, u, m, yy, c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = _profile(t, u, m, yy, d)
    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    for edge in (lo, hi):
        fe = _profile(t, u, m, yy, edge)
        if fe < best_f:
            best_x, best_f = edge, fe
    return best_x


class _Data:
    """Samples scattered onto the distinct time coordinates.

    Models are evaluated as outer products of 1D factors on this small
    matrix, and the mask keeps only positions that were actually sampled.
    """

    def __init__(self, signal: SampledSignal):
        if len(signal) == 0:
            raise ValueError("empty signal")
        self.t1, r1 = np.unique(signal.scheme.t1, return_inverse=True)
        self.t2, r2 = np.unique(signal.scheme.t2, return_inverse=True)
        self.mask = np.zeros((len(self.t1), len(self.t2)))
        self.mask[r1, r2] = 1.0
        self.x = np.zeros(self.mask.shape, dtype=complex)
        self.x[r1, r2] = signal.values

    def mode(self, w1, w2, b1, b2) -> np.ndarray:
        """Masked separable mode on the time matrix."""
        e1 = np.exp((1j * w1 - b1) * self.t1)
        e2 = np.exp((1j * w2 - b2) * self.t2)
        return np.outer(e1, e2) * self.mask

    def model(self, comps) -> np.ndarray:
        out = np.zeros(self.mask.shape, dtype=complex)
        for c in comps:
            out += c.amplitude * self.mode(c.omega1, c.omega2, c.beta1, c.beta2)
        return out

    def fit(self, y, w1, w2, b1, b2) -> tuple[complex, float]:
        """LS amplitude of one mode against ``y`` and the residual energy."""
        g, res = _fit_kernel(y, self.mask, self.t1, self.t2,
                             float(w1), float(w2), float(b1), float(b2))
        return complex(g), float(res)

    def fit_many(self, y, w1s, w2s, b1, b2) -> tuple[np.ndarray, np.ndarray]:
        """``fit`` over the grid ``w1s x w2s``; arrays of shape (len(w1s), len(w2s)).

        The mode energy does not depend on frequency, so all candidates share
        one normalization and the projections are a single matrix product.
        Residuals come from ``|y|^2 - |a^H y|^2 / |a|^2`` and carry rounding
        of order ``1e-16 |y|^2``.
        """
        w1s = np.asarray(w1s, dtype=float)
        w2s = np.asarray(w2s, dtype=float)
        c1 = np.exp(np.outer(-1j * w1s - b1, self.t1))
        c2 = np.exp(np.outer(-1j * w2s - b2, self.t2))
        ay = c1 @ y @ c2.T
        aa = float(np.exp(-2 * b1 * self.t1) @ self.mask @ np.exp(-2 * b2 * self.t2))
        yy = float(np.vdot(y, y).real)
        if aa <= 0:
            return np.zeros(ay.shape, dtype=complex), np.full(ay.shape, yy)
        return ay / aa, yy - np.abs(ay) ** 2 / aa

    def golden(self, y, comp_params, axis, lo, hi, tol) -> tuple[float, float]:
        """Golden-section damping on one axis; returns it with its exact residual.

        With the other axis fixed the mode factorizes, so each trial damping
        costs one exponential per distinct time on the searched axis.
        """
        w1, w2, b1, b2 = (float(v) for v in comp_params)
        if axis == 0:
            e2 = np.exp((1j * w2 - b2) * self.t2)
            t, u = self.t1, np.exp(-1j * w1 * self.t1) * (y @ e2.conj())
            m = self.mask @ np.abs(e2) ** 2
        else:
            e1 = np.exp((1j * w1 - b1) * self.t1)
            t, u = self.t2, np.exp(-1j * w2 * self.t2) * (e1.conj() @ y)
            m = np.abs(e1) ** 2 @ self.mask
        yy = float(np.vdot(y, y).real)
        x = float(_golden_kernel(t, u, m, yy, float(lo), float(hi), float(tol), _INV_PHI))
        b = [b1, b2]
        b[axis] = x
        return x, self.fit(y, w1, w2, *b)[1]

    def residual_norm(self, comps) -> float:
        return float(np.linalg.norm(self.x - self.model(comps)))

    def joint_amplitudes(self, comps: ComponentSet) -> ComponentSet:
        A = np.stack([(self.mode(c.omega1, c.omega2, c.beta1, c.beta2))[self.mask > 0]
                      for c in comps], axis=1)
        g = np.linalg.lstsq(A, self.x[self.mask > 0], rcond=None)[0]
        return ComponentSet(tuple(replace(c, amplitude=complex(a)) for c, a in zip(comps, g)))


def _refine_damping(data: _Data, comp: Component, y: np.ndarray, opts: SemaOptions) -> Component:
    lo, hi = opts.beta_bracket
    w1, w2 = comp.omega1, comp.omega2
    b = [comp.beta1, comp.beta2]
    best = data.fit(y, w1, w2, *b)[1]
    for axis in (0, 1):
        beta, val = data.golden(y, (w1, w2, b[0], b[1]), axis, lo, hi, opts.beta_tol)
        if val < best:
            b[axis], best = beta, val
    g_new, res = data.fit(y, w1, w2, *b)
    if res < _residual_energy(data, comp, y):
        return Component(w1, w2, b[0], b[1], g_new)
    return comp


def _residual_energy(data: _Data, comp: Component, y: np.ndarray) -> float:
    r = y - comp.amplitude * data.mode(comp.omega1, comp.omega2, comp.beta1, comp.beta2)
    return float(np.vdot(r, r).real)


def _refine_frequency(data: _Data, comp: Component, y: np.ndarray,
                      span: tuple[float, float], opts: SemaOptions) -> Component:
    if not (span[0] > 0 and span[1] > 0):
        raise ValueError(f"span must be positive, got {span}")
    best_val = _residual_energy(data, comp, y)
    w1, w2, b1, b2 = comp.omega1, comp.omega2, comp.beta1, comp.beta2
    g = comp.amplitude
    s1, s2 = span
    offsets = np.linspace(-1.0, 1.0, opts.local_points)
    moved = False
    for _ in range(opts.zoom_levels):
        _, vals = data.fit_many(y, w1 + s1 * offsets, w2 + s2 * offsets, b1, b2)
        p, q = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[p, q] < best_val:
            # confirm with the exact residual before accepting
            c1, c2 = w1 + s1 * offsets[p], w2 + s2 * offsets[q]
            g_c, val = data.fit(y, c1, c2, b1, b2)
            if val < best_val:
                w1, w2, g, best_val = c1, c2, g_c, val
                moved = True
        s1, s2 = s1 / 2, s2 / 2
    out = Component(w1, w2, b1, b2, g) if moved else comp
    if moved:
        # dampings follow the new frequency
        out = _refine_damping(data, out, y, opts)
    return out


def refine_damping(component: Component, signal: SampledSignal, others: ComponentSet,
                   opts: SemaOptions = SemaOptions()) -> Component:
    """Golden-section LS fit of each damping, others subtracted from the data.

    Returns the input unchanged unless the residual decreases.
    """
    data = _Data(signal)
    return _refine_damping(data, component, data.x - data.model(others), opts)


def refine_frequency(component: Component, signal: SampledSignal, others: ComponentSet,
                     span: tuple[float, float], opts: SemaOptions = SemaOptions()) -> Component:
    """Zoomed local-grid search of ``(omega1, omega2)`` around the component.

    ``local_points`` candidates per axis cover ``+-span``; the best is kept
    if it lowers the residual, the span is halved, and this repeats
    ``zoom_levels`` times. The amplitude is re-fitted for every candidate
    and the dampings once after the search if the frequency moved.
    """
    data = _Data(signal)
    return _refine_frequency(data, component, data.x - data.model(others), span, opts)


def refine(signal: SampledSignal, initial: ComponentSet, spacing: tuple[float, float],
           opts: SemaOptions = SemaOptions()) -> tuple[ComponentSet, SemaTrace]:
    """Alternating per-component refinement from ``initial``.

    The frequency search span starts at ``spacing`` and is halved after each
    pass in which no component moved by more than half of it, so a start a
    few grid steps away is still reached. A pass that no longer lowers the
    residual shrinks the span below the finest step of its zoom instead of
    ending the search; refinement stops once such a pass happens at a span
    of ``1e-6 * spacing``. The first pass fits dampings
    before frequencies (the start is undamped); later passes refine
    frequency first, then damping.
    """
    data = _Data(signal)
    comps = data.joint_amplitudes(initial)
    norms = [data.residual_norm(comps)]
    history = [comps]
    span = (float(spacing[0]), float(spacing[1]))
    min_span = (span[0] * _MIN_SPAN, span[1] * _MIN_SPAN)
    for it in range(opts.outer_iterations):
        order = sorted(range(comps.k), key=lambda j: (-abs(comps[j].amplitude), j))
        current = list(comps)
        for j in order:
            y = data.x - data.model(c for i, c in enumerate(current) if i != j)
            c = current[j]
            if it == 0:
                c = _refine_damping(data, c, y, opts)
                c = _refine_frequency(data, c, y, span, opts)
            else:
                c = _refine_frequency(data, c, y, span, opts)
                c = _refine_damping(data, c, y, opts)
            current[j] = c
        cand = data.joint_amplitudes(ComponentSet(tuple(current)))
        norm = data.residual_norm(cand)
        if norm > norms[-1]:
            # joint amplitudes are LS-optimal given the parameters, so this
            # only guards against rounding
            cand, norm = ComponentSet(tuple(current)), data.residual_norm(current)
            if norm > norms[-1]:
                break
        moves = [(abs(a.omega1 - b.omega1), abs(a.omega2 - b.omega2))
                 for a, b in zip(comps, cand)]
        prev = norms[-1]
        comps = cand
        norms.append(norm)
        history.append(comps)
        if prev - norm <= opts.residual_tolerance * prev:
            # stalled at this scale: continue below the finest zoom step
            if span[0] <= min_span[0] and span[1] <= min_span[1]:
                break
            shrink = 2.0 ** max(opts.zoom_levels, 1)
            span = (span[0] / shrink, span[1] / shrink)
        elif all(m1 <= span[0] / 2 and m2 <= span[1] / 2 for m1, m2 in moves):
            span = (span[0] / 2, span[1] / 2)
    return comps, SemaTrace(tuple(norms), tuple(history))


def initial_components(signal: SampledSignal, solution: lasso.SparseSolution,
                       k: int) -> ComponentSet:
    """Undamped start: top-k LASSO peaks with LS amplitudes."""
    selected = lasso.select_components(solution, k)
    amps = lasso.debias_amplitudes(signal, selected)
    return ComponentSet(tuple(Component(s[0], s[1], 0.0, 0.0, a)
                              for s, a in zip(selected, amps)))


def estimate(signal: SampledSignal, grid: DictionaryGrid, k: int,
             opts: SemaOptions = SemaOptions(),
             solution: lasso.SparseSolution | None = None) -> tuple[ComponentSet, SemaTrace]:
    """Frequencies, dampings and amplitudes of ``k`` modes from sparse samples."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not grid.undamped:
        raise ValueError("SEMA starts from an undamped dictionary")
    if solution is None:
        solution = lasso.solve(signal, grid, opts.solver_options)
    start = initial_components(signal, solution, k)
    return refine(signal, start, grid.spacing, opts)
