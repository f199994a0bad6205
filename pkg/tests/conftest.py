import numpy as np
import pytest

from sparse2d import lasso
from sparse2d.dictionary import SeparableOperator
from sparse2d.model import Component, ComponentSet, make_uniform_grid

KKT_FACTOR = 1e-6

_solve = lasso.solve
kkt_log: list[tuple[str, float, float]] = []


def independent_kkt(signal, solution) -> float:
    """KKT violation recomputed from the returned coefficients."""
    op = SeparableOperator(solution.grid, signal.scheme)
    x = signal.values / solution.data_scale
    coef = solution.coefficients.ravel()
    flat = np.flatnonzero(coef)
    r = x - op.forward(flat, coef[flat])
    return lasso.kkt_violation(op.adjoint(r), coef, solution.lam)


@pytest.fixture(autouse=True)
def _check_every_solve(monkeypatch, request):
    """Every LASSO solve in the suite must satisfy KKT to 1e-6 * lambda."""
    worst = []

    def checked(signal, grid, opts=lasso.SolverOptions()):
        sol = _solve(signal, grid, opts)
        v = max(sol.kkt_violation, independent_kkt(signal, sol))
        worst.append(v / sol.lam)
        kkt_log.append((request.node.nodeid, v, sol.lam))
        return sol

    monkeypatch.setattr(lasso, "solve", checked)
    yield
    if worst:
        assert max(worst) <= KKT_FACTOR, f"KKT violation {max(worst):.3g} * lambda"


def on_grid_scene(grid, idx, betas=None, amps=None) -> ComponentSet:
    """Components at dictionary grid points ``idx`` (list of (j1, j2))."""
    out = []
    for n, (a, b) in enumerate(idx):
        b1, b2 = (0.0, 0.0) if betas is None else betas[n]
        g = 1.0 if amps is None else amps[n]
        out.append(Component(grid.omega1_vals[a], grid.omega2_vals[b], b1, b2, g))
    return ComponentSet(tuple(out))


def well_separated_indices(rng, k, p=256, min_sep=15, lo=5):
    """``k`` grid index pairs separated by ``min_sep`` on both axes."""
    while True:
        i1 = rng.choice(np.arange(lo, p - lo), size=k, replace=False)
        i2 = rng.choice(np.arange(lo, p - lo), size=k, replace=False)
        d1 = np.abs(i1[:, None] - i1[None, :]) + np.eye(k, dtype=int) * p
        d2 = np.abs(i2[:, None] - i2[None, :]) + np.eye(k, dtype=int) * p
        if d1.min() >= min_sep and d2.min() >= min_sep:
            return list(zip(i1.tolist(), i2.tolist()))


@pytest.fixture(scope="session")
def full40():
    return make_uniform_grid(40, 40)


# criterion number -> (passed, detail); printed after the run
acceptance_results: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(number: int, passed: bool, detail: str) -> bool:
        acceptance_results[number] = (bool(passed), detail)
        return bool(passed)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not acceptance_results and not kkt_log:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(acceptance_results):
        passed, detail = acceptance_results[n]
        tr.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
    if kkt_log:
        worst = max(v / lam for _, v, lam in kkt_log)
        verdict = "PASS" if worst <= KKT_FACTOR else "FAIL"
        tr.write_line(f"suite-wide KKT: {verdict}  {len(kkt_log)} LASSO solves, "
                      f"worst violation {worst:.3g} * lambda")
