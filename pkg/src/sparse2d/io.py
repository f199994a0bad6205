"""CSV readers and writers for samples, components, spectra and results.

Floats are written with 17 significant digits, so every value survives a
write/read cycle bit for bit.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fourier import SpectrumGrid
from .metrics import TrialOutcome
from .model import Component, ComponentSet, SampledSignal, SamplingScheme

SAMPLES_HEADER = ("i1", "i2", "t1", "t2", "re", "im")
COMPONENTS_HEADER = ("omega1", "omega2", "beta1", "beta2", "amp_re", "amp_im")
SPECTRUM_HEADER = ("omega1", "omega2", "re", "im")
OUTCOMES_HEADER = ("trial", "k", "true_w1", "true_w2", "est_w1", "est_w2",
                   "true_b1", "true_b2", "est_b1", "est_b2")
RESULTS_HEADER = ("method", "fraction", "trials", "failures", "rmse_freq", "rmse_damp",
                  "seconds")
MANIFEST_HEADER = ("T", "file")


class DataError(ValueError):
    """Malformed input file; the message names the file and row."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _read_rows(path, header: Sequence[str]) -> list[tuple[int, list[str]]]:
    """Rows after the header with their 1-based line numbers."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip() for c in first) != tuple(header):
            raise DataError(f"{path}: row 1: expected header {','.join(header)!r}, "
                            f"got {','.join(first or [])!r}")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {reader.line_num}: expected {len(header)} "
                                f"fields, got {len(row)}")
            rows.append((reader.line_num, row))
    return rows


def _num(path, line, name, text, kind=float):
    try:
        if kind is int:
            val = int(text)
        else:
            val = float(text)
    except ValueError:
        raise DataError(f"{path}: row {line}: field {name}={text!r} is not "
                        f"{'an integer' if kind is int else 'a number'}") from None
    if kind is float and not math.isfinite(val):
        raise DataError(f"{path}: row {line}: field {name}={text!r} is not finite")
    return val


def _write(path, header, rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _infer_dt(idx: np.ndarray, t: np.ndarray) -> float:
    nz = idx > 0
    if not nz.any():
        return 1.0
    return float(np.median(t[nz] / idx[nz]))


def read_samples(path, grid_shape: tuple[int, int] | None = None,
                 dt: tuple[float, float] | None = None) -> SampledSignal:
    """Parse a sampled-signal CSV.

    ``grid_shape`` defaults to the smallest grid holding every index and
    ``dt`` to the ratio of times to indices.
    """
    rows = _read_rows(path, SAMPLES_HEADER)
    if not rows:
        raise DataError(f"{path}: no samples")
    seen: dict[tuple[int, int], int] = {}
    i1, i2, t1, t2, vals = [], [], [], [], []
    for line, row in rows:
        a = _num(path, line, "i1", row[0], int)
        b = _num(path, line, "i2", row[1], int)
        if a < 0 or b < 0:
            raise DataError(f"{path}: row {line}: negative index ({a},{b})")
        if (a, b) in seen:
            raise DataError(f"{path}: rows {seen[(a, b)]} and {line}: duplicate "
                            f"point (i1,i2)=({a},{b})")
        seen[(a, b)] = line
        i1.append(a)
        i2.append(b)
        t1.append(_num(path, line, "t1", row[2]))
        t2.append(_num(path, line, "t2", row[3]))
        vals.append(complex(_num(path, line, "re", row[4]), _num(path, line, "im", row[5])))
    i1a, i2a = np.array(i1), np.array(i2)
    t1a, t2a = np.array(t1), np.array(t2)
    if grid_shape is None:
        grid_shape = (int(i1a.max()) + 1, int(i2a.max()) + 1)
    if dt is None:
        dt = (_infer_dt(i1a, t1a), _infer_dt(i2a, t2a))
    try:
        scheme = SamplingScheme(i1a, i2a, t1a, t2a, grid_shape, dt)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return SampledSignal(scheme, np.array(vals))


def write_samples(path, signal: SampledSignal) -> None:
    s = signal.scheme
    _write(path, SAMPLES_HEADER,
           ((str(a), str(b), fmt(c), fmt(d), fmt(v.real), fmt(v.imag))
            for a, b, c, d, v in zip(s.i1, s.i2, s.t1, s.t2, signal.values)))


def read_components(path) -> ComponentSet:
    comps = []
    for line, row in _read_rows(path, COMPONENTS_HEADER):
        w1, w2, b1, b2, re, im = (_num(path, line, n, v) for n, v in zip(COMPONENTS_HEADER, row))
        try:
            comps.append(Component(w1, w2, b1, b2, complex(re, im)))
        except ValueError as exc:
            raise DataError(f"{path}: row {line}: {exc}") from None
    return ComponentSet(tuple(comps))


def write_components(path, components: ComponentSet) -> None:
    _write(path, COMPONENTS_HEADER,
           ((fmt(c.omega1), fmt(c.omega2), fmt(c.beta1), fmt(c.beta2),
             fmt(complex(c.amplitude).real), fmt(complex(c.amplitude).imag))
            for c in components))


def read_spectrum(path) -> SpectrumGrid:
    """Parse a row-major spectrum CSV back into its axes and values."""
    rows = _read_rows(path, SPECTRUM_HEADER)
    if not rows:
        raise DataError(f"{path}: empty spectrum")
    data = np.array([[_num(path, line, n, v) for n, v in zip(SPECTRUM_HEADER, row)]
                     for line, row in rows])
    a1 = np.unique(data[:, 0])
    a2 = np.unique(data[:, 1])
    if len(data) != len(a1) * len(a2):
        raise DataError(f"{path}: {len(data)} rows do not form a "
                        f"{len(a1)}x{len(a2)} grid")
    expect1 = np.repeat(a1, len(a2))
    expect2 = np.tile(a2, len(a1))
    bad = np.flatnonzero((data[:, 0] != expect1) | (data[:, 1] != expect2))
    if len(bad):
        raise DataError(f"{path}: row {rows[bad[0]][0]}: spectrum is not row-major "
                        "over omega1 then omega2")
    values = (data[:, 2] + 1j * data[:, 3]).reshape(len(a1), len(a2))
    return SpectrumGrid(a1, a2, values)


def write_spectrum(path, spectrum: SpectrumGrid) -> None:
    a1, a2, v = spectrum.omega1_axis, spectrum.omega2_axis, spectrum.values
    _write(path, SPECTRUM_HEADER,
           ((fmt(a1[p]), fmt(a2[q]), fmt(v[p, q].real), fmt(v[p, q].imag))
            for p in range(len(a1)) for q in range(len(a2))))


def write_outcomes(path, outcomes: Iterable[TrialOutcome]) -> None:
    """One row per matched pair; failed trials are skipped."""
    rows = []
    for o in outcomes:
        if o.failed:
            continue
        for i, j in o.pairing.pairs:
            t, e = o.truth[i], o.estimate[j]
            rows.append((str(o.trial), str(o.k), fmt(t.omega1), fmt(t.omega2),
                         fmt(e.omega1), fmt(e.omega2), fmt(t.beta1), fmt(t.beta2),
                         fmt(e.beta1), fmt(e.beta2)))
    _write(path, OUTCOMES_HEADER, rows)


def write_results(path, cells) -> None:
    """Per-cell summary rows of a campaign."""
    _write(path, RESULTS_HEADER,
           ((c.method, fmt(c.fraction), str(c.trials), str(c.failures), fmt(c.rmse_freq),
             fmt(c.rmse_damp), fmt(c.seconds)) for c in cells))


def read_results(path) -> list[dict]:
    out = []
    for line, row in _read_rows(path, RESULTS_HEADER):
        out.append({"method": row[0],
                    "fraction": _num(path, line, "fraction", row[1]),
                    "trials": _num(path, line, "trials", row[2], int),
                    "failures": _num(path, line, "failures", row[3], int),
                    "rmse_freq": float(row[4]),
                    "rmse_damp": float(row[5]),
                    "seconds": _num(path, line, "seconds", row[6])})
    return out


@dataclass(frozen=True, eq=False)
class DatasetSeries:
    """2D slices indexed by population time ``T`` (fs)."""

    times: tuple[float, ...]
    slices: tuple[SampledSignal, ...]

    def __post_init__(self):
        if len(self.times) != len(self.slices):
            raise ValueError("one slice per time required")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("population times must be strictly increasing")
        shapes = {s.scheme.grid_shape for s in self.slices}
        if len(shapes) > 1:
            raise ValueError(f"slices differ in grid shape: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.slices)

    def __iter__(self):
        return iter(zip(self.times, self.slices))


MANIFEST_NAME = "manifest.csv"


def read_series(path, grid_shape: tuple[int, int] | None = None) -> DatasetSeries:
    """Load the slices listed in a ``T,file`` manifest.

    ``path`` is the manifest itself or a directory holding ``manifest.csv``.
    Relative file names resolve against the manifest's directory.
    """
    path = Path(path)
    manifest = path / MANIFEST_NAME if path.is_dir() else path
    times, slices = [], []
    for line, row in _read_rows(manifest, MANIFEST_HEADER):
        times.append(_num(manifest, line, "T", row[0]))
        f = Path(row[1].strip())
        slices.append(read_samples(f if f.is_absolute() else manifest.parent / f, grid_shape))
    if not slices:
        raise DataError(f"{manifest}: no slices listed")
    try:
        return DatasetSeries(tuple(times), tuple(slices))
    except ValueError as exc:
        raise DataError(f"{manifest}: {exc}") from None


def write_series(directory, series: DatasetSeries) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for n, (T, sig) in enumerate(series):
        name = f"slice_{n:03d}.csv"
        write_samples(directory / name, sig)
        rows.append((fmt(T), name))
    _write(directory / MANIFEST_NAME, MANIFEST_HEADER, rows)
    return directory / MANIFEST_NAME
