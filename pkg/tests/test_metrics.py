import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse2d import metrics
from sparse2d.model import Component, ComponentSet


def cs(*rows):
    return ComponentSet(tuple(Component(*r) for r in rows))


def brute_force_pairing(truth, est):
    tw = [(c.omega1, c.omega2) for c in truth]
    ew = [(c.omega1, c.omega2) for c in est]
    best = None
    for perm in itertools.permutations(range(len(ew))):
        cost = sum((a[0] - ew[j][0]) ** 2 + (a[1] - ew[j][1]) ** 2 for a, j in zip(tw, perm))
        if best is None or cost < best[0]:
            best = (cost, perm)
    return best


TRUTH4 = cs((0.2, 0.3, 0.02, 0.03), (0.5, 0.8, 0.025, 0.021), (0.9, 0.1, 0.03, 0.02),
            (0.4, 0.6, 0.022, 0.033))

scene = st.lists(st.tuples(st.floats(0.1, 0.97), st.floats(0.1, 0.97), st.floats(0.019, 0.035),
                           st.floats(0.019, 0.035)), min_size=1, max_size=5)


class TestMatching:
    def test_identity(self):
        p = metrics.match_components(TRUTH4, TRUTH4)
        assert p.pairs == ((0, 0), (1, 1), (2, 2), (3, 3)) and p.cost == 0 and p.complete

    def test_permuted(self):
        perm = [2, 0, 3, 1]
        est = ComponentSet(tuple(TRUTH4[j] for j in perm))
        p = metrics.match_components(TRUTH4, est)
        assert all(perm[e] == t for t, e in p.pairs)

    def test_two_by_two_swap(self):
        truth = cs((0.2, 0.2), (0.8, 0.8))
        est = cs((0.79, 0.81), (0.21, 0.19))
        p = metrics.match_components(truth, est)
        assert p.pairs == ((0, 1), (1, 0))
        assert p.cost == pytest.approx(0.0004, abs=1e-15)
        # identity pairing costs 2 * (0.59^2 + 0.61^2)
        ident = sum((a.omega1 - b.omega1) ** 2 + (a.omega2 - b.omega2) ** 2
                    for a, b in zip(truth, est))
        assert ident == pytest.approx(1.4404, abs=1e-12)

    def test_size_mismatch(self):
        p = metrics.match_components(TRUTH4, cs((0.51, 0.79), (0.21, 0.31)))
        assert p.pairs == ((0, 1), (1, 0))
        assert p.unmatched_truth == (2, 3) and p.unmatched_estimate == ()
        assert not p.complete
        q = metrics.match_components(cs((0.5, 0.8)), TRUTH4)
        assert q.pairs == ((0, 1),) and q.unmatched_estimate == (0, 2, 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            metrics.match_components(ComponentSet(), TRUTH4)

    @settings(max_examples=60, deadline=None)
    @given(scene, st.data())
    def test_optimal_against_enumeration(self, rows, data):
        truth = cs(*rows)
        est_rows = data.draw(st.lists(st.tuples(st.floats(0.1, 0.97), st.floats(0.1, 0.97)),
                                      min_size=len(rows), max_size=len(rows)))
        est = cs(*est_rows)
        p = metrics.match_components(truth, est)
        cost, _ = brute_force_pairing(truth, est)
        assert p.cost == pytest.approx(cost, rel=1e-12, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(scene, st.floats(-1, 1), st.floats(-1, 1), st.data())
    def test_translation_invariant_cost(self, rows, d1, d2, data):
        truth = cs(*rows)
        est = cs(*data.draw(st.lists(st.tuples(st.floats(0.1, 0.97), st.floats(0.1, 0.97)),
                                     min_size=len(rows), max_size=len(rows))))
        shift = lambda s: ComponentSet(tuple(Component(c.omega1 + d1, c.omega2 + d2)
                                             for c in s))
        a = metrics.match_components(truth, est).cost
        b = metrics.match_components(shift(truth), shift(est)).cost
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


class TestRmse:
    def test_exact_is_zero(self):
        o = metrics.evaluate(TRUTH4, TRUTH4)
        assert metrics.rmse_frequency([o]) == 0 and metrics.rmse_damping([o]) == 0

    def test_single_frequency_term(self):
        c = TRUTH4[1]
        est = ComponentSet((TRUTH4[0], Component(c.omega1 * (1 - 0.01), c.omega2, c.beta1,
                                                 c.beta2), TRUTH4[2], TRUTH4[3]))
        o = metrics.evaluate(TRUTH4, est)
        assert metrics.rmse_frequency([o]) == pytest.approx(0.0035355339059327372, abs=1e-12)
        assert metrics.rmse_damping([o]) == 0

    def test_single_damping_term(self):
        c = TRUTH4[2]
        est = ComponentSet((TRUTH4[0], TRUTH4[1],
                            Component(c.omega1, c.omega2, c.beta1, c.beta2 * (1 - 0.1)),
                            TRUTH4[3]))
        o = metrics.evaluate(TRUTH4, est)
        assert metrics.rmse_damping([o]) == pytest.approx(0.035355339059327376, abs=1e-12)

    def test_relative_sign_convention(self):
        o = metrics.evaluate(cs((0.5, 0.5, 0.02, 0.02)), cs((0.4, 0.5, 0.03, 0.02)))
        np.testing.assert_allclose(o.freq_errors, [[0.2, 0.0]])
        np.testing.assert_allclose(o.damp_errors, [[-0.5, 0.0]])

    def test_doubling_trials(self):
        est = cs((0.21, 0.3, 0.02, 0.03), (0.5, 0.8, 0.025, 0.021), (0.9, 0.1, 0.03, 0.02),
                 (0.4, 0.6, 0.022, 0.033))
        o = metrics.evaluate(TRUTH4, est)
        assert metrics.rmse_frequency([o, o]) == metrics.rmse_frequency([o])

    def test_zero_true_damping(self):
        truth = cs((0.5, 0.5, 0.0, 0.02))
        with pytest.raises(ValueError, match="damping"):
            metrics.evaluate(truth, truth)

    def test_zero_true_frequency(self):
        truth = cs((0.0, 0.5, 0.01, 0.02))
        with pytest.raises(ValueError, match="frequency"):
            metrics.evaluate(truth, truth)

    def test_failures_excluded(self):
        good = metrics.evaluate(TRUTH4, TRUTH4)
        bad = metrics.failed_outcome(TRUTH4, "unresolved")
        assert bad.failed and bad.error == "unresolved"
        assert metrics.rmse_frequency([good, bad]) == 0
        with pytest.raises(ValueError):
            metrics.rmse_frequency([bad])

    def test_standard_error(self):
        rng = np.random.default_rng(0)
        outs = []
        for _ in range(50):
            est = ComponentSet(tuple(Component(c.omega1 * (1 + 0.01 * rng.standard_normal()),
                                               c.omega2, c.beta1, c.beta2) for c in TRUTH4))
            outs.append(metrics.evaluate(TRUTH4, est))
        m = np.array([np.sum(o.freq_errors ** 2) / 8 for o in outs])
        want = m.std(ddof=1) / math.sqrt(50) / (2 * math.sqrt(m.mean()))
        assert metrics.rmse_standard_error(outs) == pytest.approx(want, rel=1e-12)
        assert metrics.rmse_standard_error(outs[:1]) == math.inf

    @settings(max_examples=50, deadline=None)
    @given(scene, st.data())
    def test_relabeling_invariance(self, rows, data):
        truth = cs(*rows)
        noise = data.draw(st.lists(st.floats(-0.05, 0.05), min_size=4 * len(rows),
                                   max_size=4 * len(rows)))
        est = ComponentSet(tuple(Component(c.omega1 + noise[4 * j], c.omega2 + noise[4 * j + 1],
                                           c.beta1 + noise[4 * j + 2] / 10,
                                           c.beta2 + noise[4 * j + 3] / 10)
                                 for j, c in enumerate(truth)))
        perm = data.draw(st.permutations(range(len(rows))))
        shuffled = ComponentSet(tuple(est[j] for j in perm))
        a = metrics.evaluate(truth, est)
        b = metrics.evaluate(truth, shuffled)
        assert metrics.rmse_frequency([b]) == pytest.approx(metrics.rmse_frequency([a]),
                                                            rel=1e-12, abs=1e-15)
        assert metrics.rmse_damping([b]) == pytest.approx(metrics.rmse_damping([a]),
                                                          rel=1e-12, abs=1e-15)
        assert metrics.rmse_frequency([a]) >= 0
