import math

import numpy as np
import pytest

from shearmix import kernels as kr
from shearmix import mcsim
from shearmix.velocity import PiecewiseConstantField, two_plateau

ZERO = PiecewiseConstantField([0.0], [0.0])
CONST = PiecewiseConstantField([0.0], [0.4])
TWO = two_plateau(0.0, 1.0)


def small_cfg(**kw):
    base = dict(dt=0.01, n_paths=4000, t_end=0.5, seed=707, bins=8,
                block_size=1024)
    base.update(kw)
    return mcsim.PathConfig(**base)


class TestPathConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            mcsim.PathConfig(dt=0.0, n_paths=10, t_end=1.0)
        with pytest.raises(ValueError):
            mcsim.PathConfig(dt=0.1, n_paths=0, t_end=1.0)
        with pytest.raises(ValueError):
            mcsim.PathConfig(dt=0.1, n_paths=10, t_end=1.0, y_integrator="simpson")
        with pytest.raises(ValueError):
            mcsim.PathConfig(dt=0.1, n_paths=10, t_end=1.0, geometry="sphere")


class TestSimulate:
    def test_mass_conservation(self):
        hist = mcsim.simulate((0.3, 0.7), TWO, small_cfg())
        assert int(hist.counts.sum()) == hist.n_paths
        assert hist.n_absorbed == 0

    def test_zero_field_keeps_y_exactly(self):
        cfg = small_cfg(bins=16)
        hist = mcsim.simulate((0.5, 0.3126), ZERO, cfg)
        # all mass stays in the single y-column containing y0
        col = int(0.3126 * 16)
        assert int(hist.counts[:, col].sum()) == cfg.n_paths

    def test_constant_field_translates_y_exactly(self):
        cfg = small_cfg(t_end=0.5, bins=16)
        hist = mcsim.simulate((0.5, 0.0), CONST, cfg)
        # left-endpoint rule is exact for constant V: y = 0.4 * 0.5 = 0.2
        col = int(round(0.2 * 16))
        assert int(hist.counts[:, col].sum()) == cfg.n_paths

    def test_determinism_and_worker_independence(self):
        cfg1 = small_cfg(workers=1)
        cfg2 = small_cfg(workers=3)
        h1 = mcsim.simulate((0.2, 0.2), TWO, cfg1)
        h2 = mcsim.simulate((0.2, 0.2), TWO, cfg2)
        h3 = mcsim.simulate((0.2, 0.2), TWO, cfg1)
        np.testing.assert_array_equal(h1.counts, h2.counts)
        np.testing.assert_array_equal(h1.counts, h3.counts)

    def test_different_seeds_differ(self):
        h1 = mcsim.simulate((0.2, 0.2), TWO, small_cfg(seed=1))
        h2 = mcsim.simulate((0.2, 0.2), TWO, small_cfg(seed=2))
        assert np.any(h1.counts != h2.counts)

    def test_x_marginal_matches_torus_heat_kernel(self):
        cfg = small_cfg(n_paths=100_000, dt=0.05, t_end=0.3, bins=32,
                        block_size=1 << 14)
        hist = mcsim.simulate((0.25, 0.0), ZERO, cfg)
        observed = hist.counts.sum(axis=1)
        edges = np.linspace(0, 1, 33)
        expected = np.array([kr.heat_torus_cell_mass(0.25, lo, hi, 0.3)
                             for lo, hi in zip(edges[:-1], edges[1:])])
        stat = float(np.sum((observed - cfg.n_paths * expected) ** 2
                            / (cfg.n_paths * expected)))
        from scipy.stats import chi2
        assert chi2.sf(stat, 31) > 0.001

    def test_long_time_uniformizes(self):
        # the slowest mode of this field decays at rate ~0.205, so t = 30
        # puts the residual TV (~2e-3) far below the sampling bands
        cfg = small_cfg(n_paths=64_000, dt=0.02, t_end=30.0, bins=4,
                        block_size=1 << 14)
        hist = mcsim.simulate((0.1, 0.9), TWO, cfg)
        expected = cfg.n_paths / 16.0
        sigma = math.sqrt(expected * (1 - 1 / 16.0))
        assert np.all(np.abs(hist.counts - expected) < 5 * sigma)

    def test_snapshots_share_trajectories(self):
        cfg = small_cfg(t_end=0.4)
        h1, h2 = mcsim.simulate_snapshots((0.3, 0.3), TWO, cfg, [0.2, 0.4])
        assert h1.t == pytest.approx(0.2) and h2.t == pytest.approx(0.4)
        assert int(h1.counts.sum()) == int(h2.counts.sum()) == cfg.n_paths

    def test_killed_variant_absorbs(self):
        cfg = small_cfg(t_end=0.5)
        hist = mcsim.simulate((0.5, 0.5), ZERO, cfg, kill_interval=(0.25, 0.75))
        assert hist.n_absorbed > 0
        assert int(hist.counts.sum()) + hist.n_absorbed == cfg.n_paths

    def test_csv_round_trip(self, tmp_path):
        hist = mcsim.simulate((0.2, 0.2), TWO, small_cfg(n_paths=500))
        path = tmp_path / "hist.csv"
        hist.to_csv(path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "row,col,count"
        total = sum(int(r.split(",")[2]) for r in rows[1:])
        assert total == 500
        meta = hist.metadata()
        assert meta["velocity"]["kind"] == "piecewise_constant"
        assert meta["seed"] == hist.meta["seed"]


class TestDoeblin:
    def test_uniform_sampler_alpha_near_one(self):
        # a synthetic perfectly-uniform kernel: the estimator converges to 1
        rng = np.random.default_rng(99)
        counts = np.bincount(rng.integers(0, 16, size=100_000), minlength=16)
        hist = mcsim.TransitionHistogram(4, counts.reshape(4, 4), 100_000,
                                         (0.0, 0.0), 1.0)
        assert hist.alpha_hat() >= 0.9
        assert hist.alpha_lower_confidence() <= hist.alpha_hat()

    def test_dirac_start_zero_alpha(self):
        cfg = small_cfg(dt=0.001, t_end=0.001, n_paths=2000, bins=8)
        est = mcsim.doeblin_estimate(TWO, 0.001, [(0.1, 0.1)], cfg)
        assert est.alpha_hat == 0.0
        assert not est.all_cells_hit

    def test_two_plateau_minorization(self):
        cfg = small_cfg(dt=0.005, n_paths=40_000, t_end=1.4375, bins=4,
                        block_size=1 << 14)
        est = mcsim.doeblin_estimate(TWO, 1.4375, [(0.1, 0.1), (0.6, 0.9)], cfg)
        assert est.all_cells_hit
        assert est.alpha_hat > 0.0
        assert 0.0 < est.alpha_lower_confidence <= est.alpha_hat


class TestTVDecay:
    def test_identical_starts_coupled_to_zero(self):
        cfg = small_cfg(n_paths=2000)
        out = mcsim.tv_decay(TWO, (0.3, 0.3), (0.3, 0.3), [0.25, 0.5], cfg)
        np.testing.assert_allclose(out.tv, 0.0, atol=1e-15)

    def test_decay_rate_matches_slowest_mode_gap(self):
        # the empirical TV rate approaches the k = 1 resolvent gap (~0.205)
        from shearmix.spectral import make_operator, resolvent_gap

        cfg = small_cfg(n_paths=40_000, dt=0.01, bins=4, block_size=1 << 14)
        out = mcsim.tv_decay(TWO, (0.1, 0.1), (0.6, 0.6), [1.0, 8.0], cfg)
        fitted = math.log(out.tv[0] / out.tv[-1]) / 7.0
        gap = resolvent_gap(make_operator(TWO, 1, n=64), s_points=96).r_lambda1
        assert np.all(np.diff(out.tv) < 0)
        assert fitted == pytest.approx(gap, rel=0.2)

    def test_no_mixing_in_y_without_shear(self):
        # starts differing only in y stay maximally separated under V = 0
        cfg = small_cfg(n_paths=4000, bins=8)
        out = mcsim.tv_decay(ZERO, (0.3, 0.1), (0.3, 0.6), [0.5], cfg)
        assert out.tv[0] > 0.95


class TestArcsine:
    def test_cdf_anchors(self):
        assert mcsim.ArcsineResult.cdf(0.0) == 0.0
        assert mcsim.ArcsineResult.cdf(1.0) == pytest.approx(1.0)
        assert mcsim.ArcsineResult.cdf(0.5) == pytest.approx(0.5)

    def test_ks_small_at_moderate_resolution(self):
        cfg = mcsim.PathConfig(dt=1e-3, n_paths=20_000, t_end=1.0, seed=12,
                               geometry="plane", block_size=1 << 13)
        res = mcsim.arcsine_experiment(cfg)
        assert res.ks_distance <= 0.05

    def test_requires_plane(self):
        with pytest.raises(ValueError):
            mcsim.arcsine_experiment(small_cfg())


class TestKolmogorovExperiment:
    def test_matches_kernel(self):
        cfg = mcsim.PathConfig(dt=2e-3, n_paths=200_000, t_end=1.0, seed=5,
                               geometry="plane", y_integrator="trapezoid",
                               block_size=1 << 14)
        res = mcsim.kolmogorov_experiment(cfg, bins=12)
        assert res.high_mass_cells >= 4
        assert res.max_rel_error <= 0.08
        assert res.chi2_pvalue > 0.001
        assert res.var_x == pytest.approx(res.var_x_expected, rel=0.02)
        assert res.var_y == pytest.approx(res.var_y_expected, rel=0.02)
