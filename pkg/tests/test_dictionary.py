import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse2d.dictionary import (
    DictionaryGrid,
    SeparableOperator,
    atom,
    atom_matrix,
    build_grid,
)
from sparse2d.model import Component, make_uniform_grid, subsample_random, synthesize

params = st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 0.2), st.floats(0, 0.2))


class TestBuildGrid:
    def test_paper_size(self):
        g = build_grid(256, 256, (0.1, 0.97))
        assert g.shape == (256, 256)
        np.testing.assert_allclose(np.diff(g.omega1_vals), (0.97 - 0.1) / 255, rtol=1e-12)
        assert g.omega1_vals[0] == 0.1 and g.omega1_vals[-1] == 0.97
        assert g.spacing[0] == pytest.approx(0.003411764705882353, rel=1e-12)

    def test_default_undamped(self):
        g = build_grid()
        assert g.undamped
        assert g.beta1_vals.tolist() == [0.0] and g.beta2_vals.tolist() == [0.0]

    def test_endpoints(self):
        g = build_grid(2, 2, (0.0, 1.0))
        assert g.omega1_vals.tolist() == [0.0, 1.0]

    @pytest.mark.parametrize("rng", [(1.0, 1.0), (1.0, 0.0), (0.0, np.inf)])
    def test_degenerate_range(self, rng):
        with pytest.raises(ValueError):
            build_grid(4, 4, rng)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            build_grid(1, 4)

    def test_not_increasing(self):
        with pytest.raises(ValueError):
            DictionaryGrid([0.1, 0.1], [0.2, 0.3])

    def test_damped_grid_is_not_undamped(self):
        assert not build_grid(4, 4, beta_vals=[0.0, 0.01]).undamped


class TestAtom:
    def test_identity_atom(self):
        a = atom((0, 0, 0, 0), make_uniform_grid(3, 3), normalize=False)
        assert np.array_equal(a.values, np.ones(9, complex))
        assert a.scale == 1.0

    def test_scalar_value(self):
        scheme = make_uniform_grid(3, 1)
        a = atom((0.5, 0.0, 0.02, 0.0), scheme, normalize=False)
        assert a.values[2] == pytest.approx(0.519116749427757 + 0.8084764355565319j, abs=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(params)
    def test_unit_norm_and_scale(self, p):
        scheme = make_uniform_grid(5, 6)
        a = atom(p, scheme)
        raw = atom(p, scheme, normalize=False)
        assert np.linalg.norm(a.values) == pytest.approx(1.0, abs=1e-12)
        assert a.scale == pytest.approx(np.linalg.norm(raw.values), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(params, st.integers(1, 30), st.integers(0, 1000))
    def test_equals_synthesized_component(self, p, count, seed):
        scheme = subsample_random(make_uniform_grid(6, 5), count, seed=seed)
        a = atom(p, scheme, normalize=False)
        np.testing.assert_allclose(a.values, synthesize([Component(*p, 1.0)], scheme).values,
                                   rtol=1e-13, atol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_undamped_unit_modulus(self, w1, w2):
        a = atom((w1, w2, 0, 0), make_uniform_grid(7, 4), normalize=False)
        np.testing.assert_allclose(np.abs(a.values), 1.0, rtol=1e-13)

    def test_bin_atoms_orthogonal(self):
        n = 8
        scheme = make_uniform_grid(n, n)
        bins = 2 * np.pi * np.arange(n) / n
        A, _ = atom_matrix(np.repeat(bins, n), np.tile(bins, n), 0.0, 0.0, scheme)
        np.testing.assert_allclose(A.conj().T @ A, np.eye(n * n), atol=1e-12)

    def test_empty_scheme(self):
        empty = subsample_random(make_uniform_grid(3, 3), 0)
        with pytest.raises(ValueError):
            atom((0.1, 0.1, 0, 0), empty)

    def test_negative_damping(self):
        with pytest.raises(ValueError):
            atom((0.1, 0.1, -0.1, 0), make_uniform_grid(2, 2))


class TestSeparableOperator:
    @pytest.fixture
    def setup(self):
        grid = build_grid(12, 9, (0.1, 0.97))
        scheme = subsample_random(make_uniform_grid(10, 10), 37, seed=4)
        w1 = np.repeat(grid.omega1_vals, 9)
        w2 = np.tile(grid.omega2_vals, 12)
        A, _ = atom_matrix(w1, w2, 0.0, 0.0, scheme)
        return grid, scheme, A

    def test_adjoint_matches_dense(self, setup):
        grid, scheme, A = setup
        r = np.random.default_rng(0).standard_normal((37, 2)) @ [1, 1j]
        op = SeparableOperator(grid, scheme)
        np.testing.assert_allclose(op.adjoint(r).ravel(), A.conj().T @ r, atol=1e-12)

    def test_forward_matches_dense(self, setup):
        grid, scheme, A = setup
        op = SeparableOperator(grid, scheme)
        flat = np.array([0, 5, 40, 107])
        g = np.array([1, -2j, 0.5, 3 + 1j])
        np.testing.assert_allclose(op.forward(flat, g), A[:, flat] @ g, atol=1e-12)
        assert np.array_equal(op.forward(np.zeros(0, int), np.zeros(0)), np.zeros(37))

    def test_rejects_damped_grid(self):
        with pytest.raises(ValueError):
            SeparableOperator(build_grid(4, 4, beta_vals=[0, 0.1]), make_uniform_grid(3, 3))
