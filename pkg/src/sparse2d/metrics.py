"""Matching of estimates to ground truth and relative RMSE statistics."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ComponentSet


@dataclass(frozen=True)
class Pairing:
    """Truth-to-estimate assignment.

    ``pairs`` holds ``(truth_index, estimate_index)`` sorted by truth index.
    """

    pairs: tuple[tuple[int, int], ...]
    cost: float
    unmatched_truth: tuple[int, ...] = ()
    unmatched_estimate: tuple[int, ...] = ()

    @property
    def complete(self) -> bool:
        return not self.unmatched_truth and not self.unmatched_estimate


def _freqs(cs: ComponentSet) -> np.ndarray:
    return np.array([[c.omega1, c.omega2] for c in cs], dtype=float).reshape(-1, 2)


def match_components(truth: ComponentSet, estimate: ComponentSet) -> Pairing:
    """Minimum total squared (omega1, omega2) distance assignment.

    With unequal sizes the smaller set is matched completely and the
    leftovers of the larger set are reported as unmatched.
    """
    if truth.k == 0 or estimate.k == 0:
        raise ValueError("cannot match an empty component set")
    tw, ew = _freqs(truth), _freqs(estimate)
    cost = ((tw[:, None, :] - ew[None, :, :]) ** 2).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(sorted((int(r), int(c)) for r, c in zip(rows, cols)))
    total = float(sum(cost[r, c] for r, c in pairs))
    return Pairing(pairs, total,
                   tuple(sorted(set(range(truth.k)) - {p[0] for p in pairs})),
                   tuple(sorted(set(range(estimate.k)) - {p[1] for p in pairs})))


@dataclass(frozen=True, eq=False)
class TrialOutcome:
    """Result of one estimator on one trial.

    ``freq_errors`` and ``damp_errors`` have one row per matched pair with
    the relative errors ``(true - est) / true`` for both axes. A failed
    estimator leaves ``estimate`` and ``pairing`` as ``None``.
    """

    truth: ComponentSet
    estimate: ComponentSet | None
    pairing: Pairing | None
    freq_errors: np.ndarray = field(repr=False)
    damp_errors: np.ndarray = field(repr=False)
    trial: int = 0
    method: str = ""
    fraction: float = 1.0
    seconds: float = 0.0
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.estimate is None

    @property
    def k(self) -> int:
        return self.truth.k


def _relative(true: float, est: float, what: str) -> float:
    if true == 0:
        raise ValueError(f"true {what} is 0; relative error undefined")
    return (true - est) / true


def evaluate(truth: ComponentSet, estimate: ComponentSet, **meta) -> TrialOutcome:
    """Match ``estimate`` to ``truth`` and compute the relative errors."""
    pairing = match_components(truth, estimate)
    fe, de = [], []
    for i, j in pairing.pairs:
        t, e = truth[i], estimate[j]
        fe.append((_relative(t.omega1, e.omega1, "frequency"),
                   _relative(t.omega2, e.omega2, "frequency")))
        de.append((_relative(t.beta1, e.beta1, "damping"),
                   _relative(t.beta2, e.beta2, "damping")))
    return TrialOutcome(truth, estimate, pairing, np.array(fe).reshape(-1, 2),
                        np.array(de).reshape(-1, 2), **meta)


def failed_outcome(truth: ComponentSet, error: str, **meta) -> TrialOutcome:
    empty = np.zeros((0, 2))
    return TrialOutcome(truth, None, None, empty, empty, error=error, **meta)


def _per_trial_mse(outcomes: Sequence[TrialOutcome], attr: str) -> np.ndarray:
    vals = []
    for o in outcomes:
        if o.failed:
            continue
        err = getattr(o, attr)
        # 1/(2K) per trial: two axes, K components
        vals.append(float(np.sum(err ** 2)) / (2 * o.k))
    if not vals:
        raise ValueError("no successful outcomes")
    return np.array(vals)


def _rmse(outcomes, attr) -> float:
    return math.sqrt(float(np.mean(_per_trial_mse(outcomes, attr))))


def rmse_frequency(outcomes: Sequence[TrialOutcome]) -> float:
    """``sqrt( 1/(2 K P) sum_p sum_k sum_l ((w - w_hat) / w)^2 )`` over successful trials."""
    return _rmse(outcomes, "freq_errors")


def rmse_damping(outcomes: Sequence[TrialOutcome]) -> float:
    """As :func:`rmse_frequency` with dampings."""
    return _rmse(outcomes, "damp_errors")


def rmse_standard_error(outcomes: Sequence[TrialOutcome], which: str = "frequency") -> float:
    """Delta-method standard error of the RMSE across trials.

    ``SE(RMSE) = SE(MSE) / (2 RMSE)`` with ``SE(MSE)`` the standard error of
    the per-trial mean squared relative errors.
    """
    attr = {"frequency": "freq_errors", "damping": "damp_errors"}[which]
    m = _per_trial_mse(outcomes, attr)
    if len(m) < 2:
        return math.inf
    rmse = math.sqrt(float(m.mean()))
    se_mse = float(m.std(ddof=1)) / math.sqrt(len(m))
    return se_mse / (2 * rmse) if rmse > 0 else 0.0
