"""Monte-Carlo campaign: relative RMSE against sampling fraction per method.

Each trial draws one scene and one noise realisation from its own seed and
shares them across all fractions and methods. Sample sets are nested: the
points kept at a fraction are a prefix of one seeded permutation, so a
larger fraction always contains the smaller ones. LASSO and SEMA share the
same LASSO solve.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import fourier, lasso, metrics, sema
from .dictionary import build_grid
from .metrics import TrialOutcome
from .model import (
    DEFAULT_DAMP_RANGE,
    DEFAULT_FREQ_RANGE,
    ComponentSet,
    NoiseSpec,
    SampledSignal,
    SamplingScheme,
    add_noise,
    draw_random_scene,
    make_uniform_grid,
    subsample_random,
    synthesize,
)

METHODS = ("fourier", "lasso", "sema")


@dataclass(frozen=True)
class CampaignConfig:
    """Campaign parameters.

    The JSON form uses the same keys, except that ``lam`` is spelled
    ``lambda``.
    """

    trials: int = 200
    k: int = 4
    grid_shape: tuple[int, int] = (40, 40)
    freq_range: tuple[float, float] = DEFAULT_FREQ_RANGE
    damp_range: tuple[float, float] = DEFAULT_DAMP_RANGE
    fwhm_ratio: float = 0.01
    dictionary_size: tuple[int, int] = (256, 256)
    lam: float = lasso.DEFAULT_LAMBDA
    sampling_fractions: tuple[float, ...] = (0.05, 0.1, 0.2, 0.4)
    methods: tuple[str, ...] = METHODS
    base_seed: int = 0

    def __post_init__(self):
        for name in ("grid_shape", "freq_range", "damp_range", "dictionary_size",
                     "sampling_fractions", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "grid_shape", tuple(int(n) for n in self.grid_shape))
        object.__setattr__(self, "dictionary_size", tuple(int(n) for n in self.dictionary_size))
        object.__setattr__(self, "sampling_fractions",
                           tuple(float(f) for f in self.sampling_fractions))
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        fr = self.sampling_fractions
        if not fr or any(not 0 < f <= 1 for f in fr):
            raise ValueError(f"sampling fractions must lie in (0, 1], got {fr}")
        if list(fr) != sorted(set(fr)):
            raise ValueError("sampling fractions must be strictly ascending")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if self.fwhm_ratio < 0:
            raise ValueError(f"fwhm_ratio must be >= 0, got {self.fwhm_ratio}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, data: dict) -> CampaignConfig:
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> CampaignConfig:
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class CellResult:
    method: str
    fraction: float
    trials: int
    failures: int
    rmse_freq: float
    rmse_damp: float
    se_freq: float
    se_damp: float
    seconds: float


@dataclass(frozen=True, eq=False)
class CampaignResult:
    config: CampaignConfig
    cells: tuple[CellResult, ...]
    outcomes: tuple[TrialOutcome, ...] = field(repr=False)

    def cell(self, method: str, fraction: float) -> CellResult:
        for c in self.cells:
            if c.method == method and c.fraction == fraction:
                return c
        raise KeyError((method, fraction))


def trial_seeds(base_seed: int, trial_index: int) -> tuple[np.random.Generator, int, int]:
    """Scene generator, noise seed and sampling seed of a trial."""
    ss = np.random.SeedSequence([base_seed, trial_index])
    scene_ss, noise_ss, sample_ss = ss.spawn(3)
    return (np.random.default_rng(scene_ss),
            int(noise_ss.generate_state(1)[0]),
            int(sample_ss.generate_state(1)[0]))


def sample_count(fraction: float, grid_shape: tuple[int, int]) -> int:
    n = grid_shape[0] * grid_shape[1]
    return max(1, int(round(fraction * n)))


@lru_cache(maxsize=4)
def _grid(size: tuple[int, int], freq_range: tuple[float, float]):
    return build_grid(size[0], size[1], freq_range)


def _trial_data(config: CampaignConfig, trial_index: int):
    scene_rng, noise_seed, sample_seed = trial_seeds(config.base_seed, trial_index)
    scene = draw_random_scene(config.k, config.freq_range, config.damp_range, scene_rng)
    full = make_uniform_grid(*config.grid_shape)
    signal = add_noise(synthesize(scene, full), NoiseSpec(config.fwhm_ratio, noise_seed),
                       scene.max_amplitude)
    return scene, full, signal, sample_seed


def run_methods(config: CampaignConfig, trial_index: int, fraction: float, methods,
                scene: ComponentSet, full: SamplingScheme, signal: SampledSignal,
                sample_seed: int) -> list[TrialOutcome]:
    """Evaluate ``methods`` on ``signal`` (defined on ``full``) at one fraction.

    One LASSO solution is shared by the lasso and sema methods. Estimator
    errors are recorded as failed outcomes instead of being raised.
    """
    scheme = subsample_random(full, sample_count(fraction, config.grid_shape), seed=sample_seed)
    data = signal.restrict(scheme)
    grid = _grid(config.dictionary_size, config.freq_range)
    solve_opts = lasso.SolverOptions(lam=config.lam)
    solution, solve_time, solve_error = None, 0.0, ""
    if {"lasso", "sema"} & set(methods):
        t0 = time.perf_counter()
        try:
            solution = lasso.solve(data, grid, solve_opts)
        except (ValueError, np.linalg.LinAlgError) as exc:
            solve_error = str(exc)
        solve_time = time.perf_counter() - t0
    out = []
    for method in methods:
        meta = dict(trial=trial_index, method=method, fraction=fraction)
        t0 = time.perf_counter()
        try:
            if method == "fourier":
                est = fourier.estimate(data, config.k)
            elif solution is None:
                raise ValueError(solve_error)
            elif method == "lasso":
                est = lasso.estimate(data, grid, config.k, solve_opts, solution=solution)
            else:
                est = sema.estimate(data, grid, config.k, sema.SemaOptions(lam=config.lam),
                                    solution=solution)[0]
            elapsed = time.perf_counter() - t0 + (solve_time if method != "fourier" else 0.0)
            out.append(metrics.evaluate(scene, est, seconds=elapsed, **meta))
        except (ValueError, np.linalg.LinAlgError) as exc:
            elapsed = time.perf_counter() - t0
            out.append(metrics.failed_outcome(scene, str(exc), seconds=elapsed, **meta))
    return out


def run_trial(config: CampaignConfig, trial_index: int, fraction: float,
              method: str) -> TrialOutcome:
    """One estimator on one trial at one sampling fraction."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    scene, full, signal, sample_seed = _trial_data(config, trial_index)
    return run_methods(config, trial_index, fraction, (method,), scene, full, signal,
                        sample_seed)[0]


def run_trial_all(config: CampaignConfig, trial_index: int) -> list[TrialOutcome]:
    """Every configured (fraction, method) cell of one trial."""
    scene, full, signal, sample_seed = _trial_data(config, trial_index)
    out = []
    for fraction in config.sampling_fractions:
        out.extend(run_methods(config, trial_index, fraction, config.methods,
                                scene, full, signal, sample_seed))
    return out


def aggregate(config: CampaignConfig, outcomes) -> CampaignResult:
    """Per-cell statistics; independent of the order of ``outcomes``."""
    ordered = sorted(outcomes, key=lambda o: (o.trial, config.methods.index(o.method),
                                              o.fraction))
    cells = []
    for method in config.methods:
        for fraction in config.sampling_fractions:
            sel = [o for o in ordered if o.method == method and o.fraction == fraction]
            ok = [o for o in sel if not o.failed]
            nan = float("nan")
            cells.append(CellResult(
                method, fraction, len(ok), len(sel) - len(ok),
                metrics.rmse_frequency(ok) if ok else nan,
                metrics.rmse_damping(ok) if ok else nan,
                metrics.rmse_standard_error(ok, "frequency") if ok else nan,
                metrics.rmse_standard_error(ok, "damping") if ok else nan,
                float(sum(o.seconds for o in sel))))
    return CampaignResult(config, tuple(cells), tuple(ordered))


def _trial_task(args):
    config, trial_index = args
    return run_trial_all(config, trial_index)


def run_campaign(config: CampaignConfig, workers: int = 1) -> CampaignResult:
    """Evaluate all (method, fraction, trial) cells, optionally in parallel."""
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    tasks = [(config, t) for t in range(config.trials)]
    if workers == 1:
        results = [_trial_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(tasks) // (4 * workers))
            results = list(pool.map(_trial_task, tasks, chunksize=chunk))
    return aggregate(config, [o for trial in results for o in trial])
