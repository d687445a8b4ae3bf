#!/usr/bin/env python

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from plugins.module_utils.dpmm import (
    CategoricalDPMM,
    GaussianDP1D,
    SamplerResult,
    plateau_tolerance,
    smoothed_trend_ok,
    window_means,
)


def planted_categorical(n_per_cluster=10):
    data, labels = [], []
    for k, (machine, shape) in enumerate([("lathe", "1-1"), ("mill", "2-1"), ("press", "1-2")]):
        for i in range(n_per_cluster):
            data.append((machine, shape, f"op{k}"))
            labels.append(k)
    return data, labels


class TestCategoricalDPMM:
    def test_recovers_planted_clusters(self):
        data, labels = planted_categorical()

        result = CategoricalDPMM(data, alpha=1.0, beta=0.5, seed=3).run(max_sweeps=200, burn_in=10, window=10)

        assert adjusted_rand_score(labels, result.assignments) > 0.9

    @pytest.mark.slow
    def test_recovery_across_seeds(self):
        data, labels = planted_categorical(30)

        recovered = 0
        for seed in range(20):
            result = CategoricalDPMM(data, alpha=1.0, beta=0.5, seed=seed).run(max_sweeps=200, burn_in=10, window=10)
            if result.n_clusters == 3 and adjusted_rand_score(labels, result.assignments) == 1.0:
                recovered += 1

        assert recovered >= 19

    def test_seed_is_reproducible(self):
        data, _ = planted_categorical()

        a = CategoricalDPMM(data, seed=11).run(50, 5, 5)
        b = CategoricalDPMM(data, seed=11).run(50, 5, 5)

        assert a.assignments == b.assignments
        assert a.log_likelihood == b.log_likelihood

    def test_labels_are_relabelled_by_first_occurrence(self):
        data, _ = planted_categorical(4)

        result = CategoricalDPMM(data, seed=0).run(100, 5, 5)

        assert result.assignments[0] == 0
        assert sorted(set(result.assignments)) == list(range(result.n_clusters))

    def test_identical_rows_share_a_cluster(self):
        result = CategoricalDPMM([("a", "b")] * 8, seed=1).run(100, 5, 5)

        assert result.n_clusters == 1
        assert result.clusters() == [list(range(8))]

    def test_empty_input(self):
        result = CategoricalDPMM([], seed=0).run(10, 2, 2)

        assert result == SamplerResult([], [], 0.0, 0, True)

    def test_best_likelihood_bounds_trace(self):
        data, _ = planted_categorical(5)

        result = CategoricalDPMM(data, seed=2).run(60, 5, 5)

        assert result.best_log_likelihood >= max(result.log_likelihood) - 1e-9


class TestGaussianDP1D:
    def test_separated_values(self):
        rng = np.random.default_rng(0)
        values = np.concatenate([rng.normal(mu, 1.0, 12) for mu in (10.0, 50.0, 90.0)])

        sampler = GaussianDP1D(values.tolist(), noise=1.0, alpha=1.0, seed=5)
        result = sampler.run(max_sweeps=200, burn_in=10, window=10)
        atoms = sampler.atoms(result.assignments)

        assert len(atoms) == 3
        assert [round(mean) for mean, _, _ in atoms] == pytest.approx([10, 50, 90], abs=2)
        assert [size for _, _, size in atoms] == [12, 12, 12]

    def test_constant_values(self):
        sampler = GaussianDP1D([5.0] * 6, noise=0.5, seed=0)
        result = sampler.run(50, 5, 5)

        assert sampler.atoms(result.assignments) == [(5.0, 0.0, 6)]


class TestTrendHelpers:
    def test_window_means(self):
        assert window_means([9, 1, 2, 3, 4, 5, 6], burn_in=1, window=3) == [2.0, 5.0]

    def test_plateau_tolerance(self):
        assert plateau_tolerance([0.0], 0, 5) == 0.0
        assert plateau_tolerance([1.0, 3.0], 0, 4) == pytest.approx(1.5)

    def test_rising_trace_is_ok(self):
        assert smoothed_trend_ok(list(range(40)), burn_in=0, window=10)

    def test_falling_trace_is_not_ok(self):
        assert not smoothed_trend_ok([0.0] * 10 + [-100.0] * 10, burn_in=0, window=10)

    def test_noisy_plateau_is_ok(self):
        trace = [-50.0 + (0.5 if i % 2 else -0.5) for i in range(60)]

        assert smoothed_trend_ok(trace, burn_in=10, window=10)
