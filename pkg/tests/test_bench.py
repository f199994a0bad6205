import json
import math
import random

import numpy as np
import pytest
from conftest import on_grid_scene

from sparse2d import bench, fourier, lasso
from sparse2d.model import make_uniform_grid, synthesize


def same_outcome(a, b):
    """Equal in everything except wall time."""
    assert (a.trial, a.method, a.fraction, a.error) == (b.trial, b.method, b.fraction, b.error)
    assert a.truth == b.truth and a.estimate == b.estimate
    np.testing.assert_array_equal(a.freq_errors, b.freq_errors)
    np.testing.assert_array_equal(a.damp_errors, b.damp_errors)


def cell_values(result):
    return [(c.method, c.fraction, c.trials, c.failures, c.rmse_freq, c.rmse_damp,
             c.se_freq, c.se_damp) for c in result.cells]


SMALL = bench.CampaignConfig(trials=3, sampling_fractions=(0.4,), base_seed=11)


class TestConfig:
    def test_defaults(self):
        c = bench.CampaignConfig()
        assert (c.trials, c.k, c.grid_shape, c.lam) == (200, 4, (40, 40), 0.4)
        assert c.freq_range == (0.1, 0.97) and c.damp_range == (0.019, 0.035)
        assert c.dictionary_size == (256, 256) and c.fwhm_ratio == 0.01
        assert c.methods == ("fourier", "lasso", "sema")

    @pytest.mark.parametrize("kw", [dict(trials=0), dict(k=0), dict(sampling_fractions=()),
                                    dict(sampling_fractions=(0.2, 0.1)),
                                    dict(sampling_fractions=(0.1, 0.1)),
                                    dict(sampling_fractions=(0.0, 0.5)),
                                    dict(sampling_fractions=(0.5, 1.5)),
                                    dict(methods=("music",)), dict(methods=()), dict(lam=0.0),
                                    dict(fwhm_ratio=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            bench.CampaignConfig(**kw)

    def test_json_round_trip(self, tmp_path):
        c = bench.CampaignConfig(trials=7, lam=0.3, sampling_fractions=(0.1, 1.0),
                                 methods=("sema",), base_seed=5)
        d = c.to_dict()
        assert "lambda" in d and "lam" not in d
        p = tmp_path / "c.json"
        p.write_text(json.dumps(d))
        assert bench.CampaignConfig.from_json(p) == c

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            bench.CampaignConfig.from_dict({"trials": 2, "noise": 0.1})

    def test_non_object_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("[1, 2]")
        with pytest.raises(ValueError):
            bench.CampaignConfig.from_json(p)


class TestSeeds:
    def test_sample_count(self):
        assert bench.sample_count(0.05, (40, 40)) == 80
        assert bench.sample_count(1e-9, (40, 40)) == 1
        assert bench.sample_count(1.0, (40, 40)) == 1600

    def test_trial_seeds_reproducible(self):
        r1, n1, s1 = bench.trial_seeds(3, 4)
        r2, n2, s2 = bench.trial_seeds(3, 4)
        assert (n1, s1) == (n2, s2)
        assert r1.random() == r2.random()

    def test_sub_seeds_differ(self):
        seeds = {bench.trial_seeds(0, t)[1:] for t in range(50)}
        assert len(seeds) == 50
        scenes = [bench._trial_data(SMALL, t)[0] for t in range(3)]
        assert scenes[0] != scenes[1] and scenes[1] != scenes[2]

    def test_base_seed_changes_scene(self):
        a = bench._trial_data(SMALL, 0)[0]
        b = bench._trial_data(bench.CampaignConfig(base_seed=12), 0)[0]
        assert a != b

    def test_nested_samples(self):
        c = bench.CampaignConfig(trials=1, sampling_fractions=(0.1, 0.3), methods=("fourier",))
        scene, full, signal, seed = bench._trial_data(c, 0)
        from sparse2d.model import subsample_random
        small = subsample_random(full, bench.sample_count(0.1, c.grid_shape), seed=seed)
        big = subsample_random(full, bench.sample_count(0.3, c.grid_shape), seed=seed)
        assert set(zip(small.i1, small.i2)) <= set(zip(big.i1, big.i2))


class TestRunTrial:
    def test_deterministic(self):
        for method in bench.METHODS:
            same_outcome(bench.run_trial(SMALL, 1, 0.4, method),
                         bench.run_trial(SMALL, 1, 0.4, method))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            bench.run_trial(SMALL, 0, 0.4, "music")

    def test_shared_solve_matches_single(self):
        joint = bench.run_trial_all(SMALL, 2)
        for o in joint:
            same_outcome(o, bench.run_trial(SMALL, 2, o.fraction, o.method))

    def test_noiseless_on_grid_full_sampling(self):
        # a single line at the centre of the dictionary keeps the problem
        # symmetric about the truth for every estimator
        config = bench.CampaignConfig(trials=1, k=1, sampling_fractions=(1.0,))
        grid = bench._grid(config.dictionary_size, config.freq_range)
        full = make_uniform_grid(*config.grid_shape)
        fourier_step = 2 * np.pi / fourier.DEFAULT_AXIS_POINTS
        for seed in range(3):
            rng = np.random.default_rng(seed)
            idx = [tuple(127 + rng.integers(-3, 4, 2))]
            scene = on_grid_scene(grid, idx, betas=[tuple(rng.uniform(0.019, 0.035, 2))])
            outs = bench.run_methods(config, 0, 1.0, bench.METHODS, scene, full,
                                     synthesize(scene, full), 0)
            for o in outs:
                assert not o.failed, o.error
                half = (fourier_step if o.method == "fourier" else grid.spacing[0]) / 2
                c, t = o.estimate[0], scene[0]
                assert abs(c.omega1 - t.omega1) <= half, o.method
                assert abs(c.omega2 - t.omega2) <= half, o.method

    def test_estimator_failure_recorded(self):
        # one sample cannot resolve four peaks
        config = bench.CampaignConfig(trials=1, sampling_fractions=(1 / 1600,))
        outs = bench.run_trial_all(config, 0)
        fourier_out = [o for o in outs if o.method == "fourier"][0]
        assert fourier_out.failed and "missing" in fourier_out.error
        result = bench.aggregate(config, outs)
        for c in result.cells:
            assert c.trials + c.failures == 1

    def test_solver_error_recorded(self, monkeypatch):
        def boom(*a, **k):
            raise np.linalg.LinAlgError("singular")
        monkeypatch.setattr(lasso, "solve", boom)
        outs = {o.method: o for o in bench.run_trial_all(SMALL, 0)}
        assert outs["lasso"].failed and outs["sema"].failed
        assert outs["lasso"].error == "singular"
        assert not outs["fourier"].failed


@pytest.fixture(scope="module")
def serial():
    return bench.run_campaign(SMALL)


class TestCampaign:
    def test_counts(self, serial):
        assert len(serial.cells) == 3
        for c in serial.cells:
            assert c.trials + c.failures == SMALL.trials
            assert c.seconds > 0
        assert len(serial.outcomes) == 3 * SMALL.trials

    def test_rmse_matches_outcomes(self, serial):
        from sparse2d import metrics
        for c in serial.cells:
            sel = [o for o in serial.outcomes if o.method == c.method and not o.failed]
            if sel:
                assert c.rmse_freq == metrics.rmse_frequency(sel)

    def test_workers_independent(self, serial):
        parallel = bench.run_campaign(SMALL, workers=2)
        assert cell_values(parallel) == cell_values(serial)

    def test_order_independent_aggregation(self, serial):
        shuffled = list(serial.outcomes)
        random.Random(0).shuffle(shuffled)
        again = bench.aggregate(SMALL, shuffled)
        assert cell_values(again) == cell_values(serial)

    def test_cell_lookup(self, serial):
        assert serial.cell("sema", 0.4).method == "sema"
        with pytest.raises(KeyError):
            serial.cell("sema", 0.3)

    def test_empty_cell_is_nan(self):
        config = bench.CampaignConfig(trials=1, sampling_fractions=(1 / 1600,),
                                      methods=("fourier",))
        cell = bench.aggregate(config, bench.run_trial_all(config, 0)).cells[0]
        assert cell.trials == 0 and cell.failures == 1
        assert math.isnan(cell.rmse_freq) and math.isnan(cell.rmse_damp)

    def test_bad_workers(self):
        with pytest.raises(ValueError):
            bench.run_campaign(SMALL, workers=0)
