"""l1-penalized least squares over an undamped frequency dictionary.

The problem solved is

    minimize_g  ||x - A g||^2 + lam * sum_m |g_m|

over complex ``g`` with unit-norm atoms (no 1/2 on the quadratic term). With
``c = A^H (x - A g)`` the optimality conditions are ``|c_m| <= lam/2`` for
inactive atoms and ``c_m = (lam/2) g_m / |g_m|`` for active ones.

Neighbouring atoms of a fine grid are almost collinear, which makes plain
cyclic coordinate descent crawl. The solver therefore runs coordinate
descent on a small working set, polishes the support with Newton steps and
grows the working set from the strongest KKT violators of the full
dictionary until none remain. Every accepted step lowers the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import fft as sfft
from scipy.ndimage import maximum_filter

from . import fourier
from .dictionary import DictionaryGrid, SeparableOperator
from .model import (
    Component,
    ComponentSet,
    SampledSignal,
    exp_modes,
    make_uniform_grid,
    synthesize,
)

DEFAULT_LAMBDA = 0.4
DEFAULT_PAD = 1024


@dataclass(frozen=True)
class SolverOptions:
    """Solver settings.

    Attributes
    ----------
    lam : float
        Penalty weight, defined for unit-norm atoms.
    max_iterations : int
        Cap on working-set rounds.
    tolerance : float
        Relative objective change below which an inner solve is considered
        stalled.
    kkt_tolerance : float
        Target KKT violation, as a multiple of ``lam``.
    normalize : bool
        Scale the data to unit maximum modulus before solving (undone on
        output). Disable to solve the problem exactly as given.
    max_add : int
        Violating atoms admitted to the working set per round.
    """

    lam: float = DEFAULT_LAMBDA
    max_iterations: int = 500
    tolerance: float = 1e-15
    kkt_tolerance: float = 1e-7
    normalize: bool = True
    max_add: int = 10

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not self.tolerance > 0 or not self.kkt_tolerance > 0:
            raise ValueError("tolerances must be > 0")
        if self.max_iterations < 1 or self.max_add < 1:
            raise ValueError("max_iterations and max_add must be >= 1")


@dataclass(frozen=True, eq=False)
class SparseSolution:
    """Result of :func:`solve`.

    ``coefficients`` are the unit-atom weights of the (possibly normalized)
    problem; ``amplitudes`` are the same weights expressed as amplitudes of
    unnormalized atoms in the units of the input data. ``objective``,
    ``kkt_violation`` and ``history`` refer to the problem actually solved.
    """

    amplitudes: np.ndarray
    coefficients: np.ndarray
    grid: DictionaryGrid
    objective: float
    iterations: int
    kkt_violation: float
    lam: float
    data_scale: float = 1.0
    group_radius: tuple[float, float] | None = None
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.argwhere(self.coefficients != 0)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.coefficients))


@numba.njit(cache=True)
def _cd_sweeps(G, q, g, lh, nsweep):
    # q = b - G g is kept in sync with g
    n = G.shape[0]
    for _ in range(nsweep):
        for j in range(n):
            gjj = G[j, j].real
            z = g[j] + q[j] / gjj
            az = abs(z)
            thr = lh / gjj
            new = z * (1.0 - thr / az) if az > thr else 0j
            d = new - g[j]
            if d != 0:
                for m in range(n):
                    q[m] -= G[m, j] * d
                g[j] = new


def _fval(G, b, g, lh):
    """Objective minus ``||x||^2`` on a working set."""
    return float(np.real(np.vdot(g, G @ g)) - 2 * np.real(np.vdot(g, b))
                 + 2 * lh * np.abs(g).sum())


def kkt_violation(c: np.ndarray, g: np.ndarray, lam: float) -> float:
    """Largest KKT residual given correlations ``c = A^H r`` and weights ``g``."""
    c = np.ravel(c)
    g = np.ravel(g)
    lh = lam / 2
    act = g != 0
    v_in = np.max(np.maximum(0.0, np.abs(c[~act]) - lh), initial=0.0)
    ga = g[act]
    v_act = np.max(np.abs(c[act] - lh * ga / np.abs(ga)), initial=0.0)
    return float(max(v_in, v_act))


def _newton_support(G, b, g, lh, history, iters=50, gtol=1e-14):
    """Newton steps on the support of ``g`` (in place).

    Each step is either an Armijo step along the Newton direction or, if
    better, the same direction cut where one coordinate's modulus is
    smallest, with that coordinate set to zero. Steps that do not lower the
    objective are rejected.
    """
    for _ in range(iters):
        S = np.flatnonzero(g)
        if len(S) == 0:
            return
        gs, Gs, bs = g[S], G[np.ix_(S, S)], b[S]
        n = len(S)
        mod = np.abs(gs)
        u = gs / mod
        gc = Gs @ gs - bs + lh * u
        if np.abs(gc).max() < gtol:
            return
        # real 2n x 2n Hessian of the objective on the support
        H = np.empty((2 * n, 2 * n))
        H[:n, :n] = Gs.real
        H[:n, n:] = -Gs.imag
        H[n:, :n] = Gs.imag
        H[n:, n:] = Gs.real
        idx = np.arange(n)
        ur, ui = u.real, u.imag
        H[idx, idx] += lh * (1 - ur * ur) / mod
        H[idx + n, idx + n] += lh * (1 - ui * ui) / mod
        H[idx, idx + n] -= lh * ur * ui / mod
        H[idx + n, idx] -= lh * ur * ui / mod
        gr = np.concatenate([gc.real, gc.imag])
        try:
            d = -np.linalg.solve(H, gr)
        except np.linalg.LinAlgError:
            d = -np.linalg.lstsq(H, gr, rcond=None)[0]
        slope = 2 * (gr @ d)
        if not slope < 0:
            return
        dc = d[:n] + 1j * d[n:]
        f0 = _fval(Gs, bs, gs, lh)
        best_f, best_g = f0, None
        t = 1.0
        while t > 1e-10:
            cand = gs + t * dc
            fc = _fval(Gs, bs, cand, lh)
            if fc <= f0 + 1e-4 * t * slope:
                best_f, best_g = fc, cand
                break
            t *= 0.5
        with np.errstate(divide="ignore", invalid="ignore"):
            tj = -np.real(np.conj(gs) * dc) / np.abs(dc) ** 2
        for j in np.flatnonzero((tj > 0) & (tj <= 1.0)):
            cand = gs + tj[j] * dc
            cand[j] = 0
            fc = _fval(Gs, bs, cand, lh)
            if fc < best_f:
                best_f, best_g = fc, cand
        if best_g is None or not best_f < f0:
            return
        g[S] = best_g
        history.append(best_f)
        if best_f >= f0 - 1e-16 * abs(f0):
            return


def _solve_working_set(G, b, g, lh, tol, rel_tol, history, max_rounds=200):
    f_prev = _fval(G, b, g, lh)
    for _ in range(max_rounds):
        for _ in range(3):
            q = b - G @ g
            _cd_sweeps(G, q, g, lh, 1)
            history.append(_fval(G, b, g, lh))
        _newton_support(G, b, g, lh, history)
        q = b - G @ g
        if kkt_violation(q, g, 2 * lh) <= tol:
            return True
        f = history[-1]
        if abs(f_prev - f) <= rel_tol * max(abs(f), 1.0):
            return False
        f_prev = f
    return False


def _priority(cmag: np.ndarray) -> np.ndarray:
    # 2D local maxima of |c| first, then by magnitude
    is_max = cmag == maximum_filter(cmag, size=3, mode="constant")
    return (cmag + 100.0 * is_max).ravel()


def solve(signal: SampledSignal, grid: DictionaryGrid,
          opts: SolverOptions = SolverOptions()) -> SparseSolution:
    """Minimize ``||x - A g||^2 + lam ||g||_1`` over the undamped dictionary."""
    if len(signal) == 0:
        raise ValueError("empty signal")
    if not grid.undamped:
        raise ValueError("LASSO dictionary must be undamped")
    op = SeparableOperator(grid, signal.scheme)
    lam, lh = opts.lam, opts.lam / 2
    x = signal.values.astype(complex)
    peak = float(np.abs(x).max())
    scale = peak if (opts.normalize and peak > 0) else 1.0
    x = x / scale
    xx = float(np.real(np.vdot(x, x)))

    W = np.zeros(0, dtype=np.int64)
    g = np.zeros(0, dtype=complex)
    r = x.copy()
    history = [xx]
    add_thr = lh + opts.kkt_tolerance * lam
    rounds = 0
    for rounds in range(1, opts.max_iterations + 1):
        cmag = np.abs(op.adjoint(r))
        prio = _priority(cmag)
        flat = cmag.ravel().copy()
        flat[W] = 0.0
        viol = np.flatnonzero(flat > add_thr)
        if len(viol) == 0:
            break
        viol = viol[np.argsort(-prio[viol], kind="stable")[:opts.max_add]]
        W = np.concatenate([W, viol])
        g = np.concatenate([g, np.zeros(len(viol), dtype=complex)])
        A = op.columns(W)
        G = np.ascontiguousarray(A.conj().T @ A)
        b = A.conj().T @ x
        ws_hist: list[float] = []
        _solve_working_set(G, b, g, lh, 0.1 * opts.kkt_tolerance * lam,
                           opts.tolerance, ws_hist)
        history.extend(xx + f for f in ws_hist)
        r = x - A @ g
        keep = g != 0
        W, g = W[keep], g[keep]

    coef = np.zeros(grid.size, dtype=complex)
    coef[W] = g
    r = x - op.forward(W, g)
    kkt = kkt_violation(op.adjoint(r), coef, lam)
    objective = float(np.real(np.vdot(r, r)) + lam * np.abs(g).sum())
    coef = coef.reshape(grid.shape)
    amps = coef * (scale / np.sqrt(len(signal)))
    radius = group_radius(signal.scheme)
    return SparseSolution(amps, coef, grid, objective, rounds, kkt, lam, scale,
                          radius, tuple(history))


def group_radius(scheme) -> tuple[float, float]:
    """Half the Rayleigh resolution ``pi / T`` of the sampled extent, per axis.

    ``T`` is the span of sampled times plus one step, i.e. ``N dt`` for a
    full grid.
    """
    out = []
    for t, step in ((scheme.t1, scheme.dt[0]), (scheme.t2, scheme.dt[1])):
        extent = float(t.max() - t.min()) + step
        out.append(np.pi / extent)
    return (out[0], out[1])


def select_components(solution: SparseSolution, k: int,
                      radius: tuple[float, float] | None = None
                      ) -> list[tuple[float, float, complex]]:
    """One grid frequency for each of the ``k`` strongest atom groups.

    An undamped dictionary describes a damped line by a cluster of atoms
    around it, and the cluster's largest atom need not sit at the line
    centre. Groups are therefore formed greedily: the strongest remaining
    atom claims every nonzero atom within ``radius`` on both axes. A group is
    reported at its ``|g|^2``-weighted centroid, snapped to the nearest grid
    frequency, with the amplitude of its strongest atom. Output is in
    descending order of that amplitude; ties go to the lower
    ``(omega1, omega2)``.

    ``radius`` defaults to the solution's ``group_radius`` (half the
    Rayleigh resolution of the sampled window), or to one grid step.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    w1, w2 = solution.grid.omega1_vals, solution.grid.omega2_vals
    if radius is None:
        radius = solution.group_radius or solution.grid.spacing
    sup = solution.support
    amp = solution.amplitudes[sup[:, 0], sup[:, 1]]
    mag = np.abs(amp)
    order = np.lexsort((sup[:, 1], sup[:, 0], -mag))
    pos = np.column_stack([w1[sup[:, 0]], w2[sup[:, 1]]])
    free = np.ones(len(mag), dtype=bool)
    out = []
    for j in order:
        if len(out) == k:
            break
        if not free[j]:
            continue
        near = (free & (np.abs(pos[:, 0] - pos[j, 0]) <= radius[0] * (1 + 1e-12))
                & (np.abs(pos[:, 1] - pos[j, 1]) <= radius[1] * (1 + 1e-12)))
        wt = mag[near] ** 2
        c1, c2 = (pos[near] * wt[:, None]).sum(axis=0) / wt.sum()
        free &= ~near
        out.append((float(w1[np.argmin(np.abs(w1 - c1))]),
                    float(w2[np.argmin(np.abs(w2 - c2))]), complex(amp[j])))
    if len(out) < k:
        raise ValueError(f"found {len(out)} atom groups, {k} requested "
                         f"({k - len(out)} missing)")
    return out


def debias_amplitudes(signal: SampledSignal, selected) -> np.ndarray:
    """Least-squares amplitudes of undamped atoms at the given frequencies.

    ``selected`` holds ``(omega1, omega2, ...)`` tuples; extra fields are
    ignored.
    """
    freqs = np.array([(s[0], s[1]) for s in selected], dtype=float).reshape(-1, 2)
    if len(freqs) == 0:
        raise ValueError("no frequencies selected")
    A = exp_modes(freqs[:, 0], freqs[:, 1], 0.0, 0.0, signal.scheme.t1, signal.scheme.t2)
    sol, _, rank, sv = np.linalg.lstsq(A, signal.values, rcond=None)
    if rank < len(freqs) or sv[-1] <= 1e-10 * sv[0]:
        raise ValueError(f"selected atoms are rank deficient on this scheme "
                         f"(rank {rank} of {len(freqs)})")
    return sol


def reconstruct_uniform(selected, grid_shape: tuple[int, int],
                        dt: tuple[float, float] = (1.0, 1.0)) -> SampledSignal:
    """Undamped model from ``(omega1, omega2, amplitude)`` on a full grid."""
    if len(selected) == 0:
        raise ValueError("empty selection")
    comps = ComponentSet(tuple(Component(w1, w2, 0.0, 0.0, a) for w1, w2, a in selected))
    return synthesize(comps, make_uniform_grid(grid_shape[0], grid_shape[1], dt[0], dt[1]))


def padded_spectrum(signal: SampledSignal, pad: int = DEFAULT_PAD) -> fourier.SpectrumGrid:
    """Zero-padded 2D FFT of a full uniform-grid signal."""
    n1, n2 = signal.scheme.grid_shape
    if len(signal) != n1 * n2:
        raise ValueError("padded spectrum needs a full uniform grid")
    if pad < max(n1, n2):
        raise ValueError(f"pad {pad} smaller than grid {(n1, n2)}")
    X = sfft.fft2(signal.to_grid(), s=(pad, pad))
    dt1, dt2 = signal.scheme.dt
    return fourier.SpectrumGrid(fourier.default_axis(pad, dt1),
                                fourier.default_axis(pad, dt2), X)


def _climb(power: np.ndarray, a: int, b: int) -> tuple[int, int]:
    """Steepest ascent over the 8-neighbourhood to a local maximum."""
    n1, n2 = power.shape
    while True:
        lo1, hi1 = max(a - 1, 0), min(a + 2, n1)
        lo2, hi2 = max(b - 1, 0), min(b + 2, n2)
        block = power[lo1:hi1, lo2:hi2]
        j1, j2 = np.unravel_index(np.argmax(block), block.shape)
        na, nb = lo1 + int(j1), lo2 + int(j2)
        if power[na, nb] <= power[a, b]:
            return a, b
        a, b = na, nb


def estimate_damping(reconstructed: SampledSignal, peaks, pad: int = DEFAULT_PAD
                     ) -> list[tuple[float, float]]:
    """Dampings as half the power FWHM of the zero-padded spectrum.

    Each peak is snapped to its nearest FFT bin and moved uphill to a local
    maximum. Peaks of nearby components can merge; the climb may therefore
    travel, but a maximum farther than the first window null ``2 pi / (N dt)``
    on either axis is not attributed to the peak and raises ``ValueError``.
    """
    spec = padded_spectrum(reconstructed, pad)
    power = spec.power
    (n1, n2), (dt1, dt2) = reconstructed.scheme.grid_shape, reconstructed.scheme.dt
    reach = (2 * np.pi / (n1 * dt1), 2 * np.pi / (n2 * dt2))
    out = []
    for w1, w2 in peaks:
        a, b = _climb(power, *spec.index_of((w1, w2)))
        m1, m2 = spec.omega1_axis[a], spec.omega2_axis[b]
        if abs(m1 - w1) > reach[0] or abs(m2 - w2) > reach[1]:
            raise ValueError(f"no local maximum of the padded spectrum within one "
                             f"mainlobe of ({w1:.6g}, {w2:.6g})")
        out.append(fourier.fwhm(spec, (m1, m2)).betas)
    return out


def estimate(signal: SampledSignal, grid: DictionaryGrid, k: int,
             opts: SolverOptions = SolverOptions(), pad: int = DEFAULT_PAD,
             solution: SparseSolution | None = None) -> ComponentSet:
    """LASSO frequencies, LS amplitudes and FWHM dampings of ``k`` components."""
    if solution is None:
        solution = solve(signal, grid, opts)
    selected = select_components(solution, k)
    amps = debias_amplitudes(signal, selected)
    rec = reconstruct_uniform([(s[0], s[1], a) for s, a in zip(selected, amps)],
                              signal.scheme.grid_shape, signal.scheme.dt)
    betas = estimate_damping(rec, [(s[0], s[1]) for s in selected], pad)
    return ComponentSet(tuple(Component(s[0], s[1], b1, b2, a)
                              for s, a, (b1, b2) in zip(selected, amps, betas)))
