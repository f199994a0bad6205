"""Command-line interface.

Exit status is 0 on success, 1 on a usage error and 2 when an input file
or the data in it cannot be processed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, bench, fourier, io, lasso, sema
from .dictionary import build_grid
from .model import (
    DEFAULT_DAMP_RANGE,
    DEFAULT_FREQ_RANGE,
    NoiseSpec,
    SampledSignal,
    add_noise,
    draw_random_scene,
    make_uniform_grid,
    subsample_random,
    synthesize,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _pair(kind):
    def parse(text: str):
        parts = text.lower().split("x")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected AxB, got {text!r}")
        try:
            return tuple(kind(p) for p in parts)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected AxB, got {text!r}") from None
    return parse


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"need LO < HI, got {text!r}")
    return lo, hi


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparse2d", description="2D sparse spectral estimation of damped "
                "complex exponentials.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="noisy full-grid signal from a scene")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--components", help="component CSV defining the scene")
    src.add_argument("--random", type=_positive_int, metavar="K",
                     help="draw K unit-amplitude components at random")
    s.add_argument("--grid", type=_pair(int), default=(40, 40), metavar="N1xN2")
    s.add_argument("--freq-range", type=_range, default=DEFAULT_FREQ_RANGE, metavar="LO,HI")
    s.add_argument("--damp-range", type=_range, default=DEFAULT_DAMP_RANGE, metavar="LO,HI")
    s.add_argument("--fwhm-ratio", type=float, default=0.01,
                   help="noise FWHM relative to the largest amplitude (default 0.01)")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="sampled-signal CSV")
    s.add_argument("--scene-out", help="write the generated components here")

    s = sub.add_parser("sample", help="random subset of a sampled signal")
    s.add_argument("input", help="sampled-signal CSV")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--corner", type=_pair(int), metavar="C1xC2",
                   help="restrict to indices i1 < C1 and i2 < C2")
    s.add_argument("--grid-shape", type=_pair(int), metavar="N1xN2")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("reconstruct", help="estimate components and spectrum")
    s.add_argument("input", help="sampled-signal CSV")
    s.add_argument("--method", choices=bench.METHODS, required=True)
    s.add_argument("--k", type=_positive_int, required=True)
    s.add_argument("--lambda", dest="lam", type=float, default=lasso.DEFAULT_LAMBDA)
    s.add_argument("--freq-grid", type=_pair(int), default=(256, 256), metavar="P1xP2")
    s.add_argument("--freq-range", type=_range, default=DEFAULT_FREQ_RANGE, metavar="LO,HI")
    s.add_argument("--grid-shape", type=_pair(int), metavar="N1xN2",
                   help="full acquisition grid (default: smallest grid holding the samples)")
    s.add_argument("--spectrum-points", type=_positive_int, default=256,
                   help="axis points of the Fourier and SEMA spectra over [0, 2pi)")
    s.add_argument("--components-out")
    s.add_argument("--spectrum-out")

    s = sub.add_parser("bench", help="Monte-Carlo RMSE campaign")
    s.add_argument("--config", required=True, help="JSON campaign config")
    s.add_argument("--out", required=True, help="results CSV")
    s.add_argument("--seed", type=int, help="overrides base_seed of the config")
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--outcomes-out", help="per-pair audit CSV")

    sub.add_parser("version", help="print the version")
    return p


def _simulate(args) -> None:
    if args.fwhm_ratio < 0:
        raise UsageError(f"--fwhm-ratio must be >= 0, got {args.fwhm_ratio}")
    if args.components:
        scene = io.read_components(args.components)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0]))
        scene = draw_random_scene(args.random, args.freq_range, args.damp_range, rng)
    clean = synthesize(scene, make_uniform_grid(*args.grid))
    noisy = add_noise(clean, NoiseSpec(args.fwhm_ratio, args.seed), scene.max_amplitude)
    io.write_samples(args.out, noisy)
    if args.scene_out:
        io.write_components(args.scene_out, scene)


def _sample(args) -> None:
    sig = io.read_samples(args.input, args.grid_shape)
    sub = subsample_random(sig.scheme, args.count, args.corner, seed=args.seed)
    io.write_samples(args.out, sig.restrict(sub))


def _model_spectrum(signal: SampledSignal, comps, n: int) -> fourier.SpectrumGrid:
    """DTFT of the fitted model on the full uniform grid."""
    (n1, n2), (dt1, dt2) = signal.scheme.grid_shape, signal.scheme.dt
    full = synthesize(comps, make_uniform_grid(n1, n2, dt1, dt2))
    return fourier.dtft2(full, fourier.default_axis(n, dt1), fourier.default_axis(n, dt2))


def _reconstruct(args) -> None:
    if not args.lam > 0:
        raise UsageError(f"--lambda must be > 0, got {args.lam}")
    sig = io.read_samples(args.input, args.grid_shape)
    dt1, dt2 = sig.scheme.dt
    if args.method == "fourier":
        spec = fourier.dtft2(sig, fourier.default_axis(args.spectrum_points, dt1),
                             fourier.default_axis(args.spectrum_points, dt2))
        comps = fourier.estimate(sig, args.k)
    else:
        grid = build_grid(*args.freq_grid, freq_range=args.freq_range)
        solution = lasso.solve(sig, grid, lasso.SolverOptions(lam=args.lam))
        if args.method == "lasso":
            comps = lasso.estimate(sig, grid, args.k, lasso.SolverOptions(lam=args.lam),
                                   solution=solution)
            spec = fourier.SpectrumGrid(grid.omega1_vals, grid.omega2_vals,
                                        solution.amplitudes)
        else:
            comps, _ = sema.estimate(sig, grid, args.k, sema.SemaOptions(lam=args.lam),
                                     solution=solution)
            spec = _model_spectrum(sig, comps, args.spectrum_points)
    if args.components_out:
        io.write_components(args.components_out, comps)
    else:
        for c in comps:
            print(f"{c.omega1:.10g} {c.omega2:.10g} {c.beta1:.10g} {c.beta2:.10g} "
                  f"{complex(c.amplitude):.10g}")
    if args.spectrum_out:
        io.write_spectrum(args.spectrum_out, spec)


def _bench(args) -> None:
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise io.DataError(f"{args.config}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise io.DataError(f"{args.config}: config must be a JSON object")
    if args.seed is not None:
        data["base_seed"] = args.seed
    if "base_seed" not in data:
        raise UsageError("bench needs a seed: set base_seed in the config or pass --seed")
    try:
        config = bench.CampaignConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise io.DataError(f"{args.config}: {exc}") from None
    result = bench.run_campaign(config, workers=args.workers)
    io.write_results(args.out, result.cells)
    if args.outcomes_out:
        io.write_outcomes(args.outcomes_out, result.outcomes)
    for c in result.cells:
        print(f"{c.method:8s} {c.fraction:6.3f} rmse_freq={c.rmse_freq:.4g} "
              f"rmse_damp={c.rmse_damp:.4g} failures={c.failures}")


COMMANDS = {"simulate": _simulate, "sample": _sample, "reconstruct": _reconstruct,
            "bench": _bench}


def cli_main(argv=None) -> int:
    """Run one subcommand and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "version":
            print(__version__)
            return EXIT_OK
        COMMANDS[args.command](args)
    except SystemExit as exc:
        # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"sparse2d: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())
