"""Poisson photon noise: determinism, statistics, contract checks."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from braggcdi.forward import IntensityVolume, QGrid
from braggcdi.noise import NoiseContractError, NoiseSpec, _slice_counts, apply_poisson


def _volume(data):
    return IntensityVolume(data=data, grid=QGrid(dims=data.shape, pitch=1.0))


class TestContract:
    def test_disabled_is_identity(self, small_intensity):
        out = apply_poisson(small_intensity, NoiseSpec(enabled=False))
        assert np.array_equal(out.data, small_intensity.data)
        assert out.data is not small_intensity.data  # defensive copy

    def test_negative_input_rejected(self):
        data = np.full((4, 4, 4), -1.0)
        with pytest.raises(NoiseContractError):
            apply_poisson(_volume(data), NoiseSpec())

    def test_all_zero_input_rejected_when_enabled(self):
        with pytest.raises(NoiseContractError):
            apply_poisson(_volume(np.zeros((4, 4, 4))), NoiseSpec())

    def test_integer_counts_and_scale(self, small_intensity):
        spec = NoiseSpec(max_photons=1e6, rng_seed=3)
        out = apply_poisson(small_intensity, spec)
        assert (out.data >= 0).all()
        assert np.array_equal(out.data, np.round(out.data))
        assert out.photon_scale == pytest.approx(1e6 / small_intensity.data.max())


class TestDeterminism:
    def test_repeatable(self, small_intensity):
        spec = NoiseSpec(rng_seed=42)
        a = apply_poisson(small_intensity, spec)
        b = apply_poisson(small_intensity, spec)
        assert np.array_equal(a.data, b.data)

    def test_seed_changes_output(self, small_intensity):
        a = apply_poisson(small_intensity, NoiseSpec(rng_seed=1))
        b = apply_poisson(small_intensity, NoiseSpec(rng_seed=2))
        assert not np.array_equal(a.data, b.data)

    def test_slice_order_independent(self, small_intensity, rng):
        spec = NoiseSpec(rng_seed=7)
        reference = apply_poisson(small_intensity, spec)
        lam = small_intensity.data * (spec.max_photons / small_intensity.data.max())
        shuffled = np.empty_like(lam)
        order = rng.permutation(lam.shape[2])
        for k in order:
            shuffled[:, :, k] = _slice_counts(lam[:, :, k], spec.rng_seed, int(k))
        assert np.array_equal(shuffled, reference.data)

    def test_threaded_evaluation_bit_identical(self, small_intensity):
        spec = NoiseSpec(rng_seed=7)
        reference = apply_poisson(small_intensity, spec)
        lam = small_intensity.data * (spec.max_photons / small_intensity.data.max())
        with ThreadPoolExecutor(max_workers=4) as pool:
            slices = list(
                pool.map(
                    lambda k: _slice_counts(lam[:, :, k], spec.rng_seed, k),
                    range(lam.shape[2]),
                )
            )
        threaded = np.stack(slices, axis=2)
        assert np.array_equal(threaded, reference.data)

    def test_negative_seed_wraps(self, small_intensity):
        out = apply_poisson(small_intensity, NoiseSpec(rng_seed=-5))
        assert (out.data >= 0).all()


class TestStatistics:
    def test_constant_field_mean_within_5_sigma(self):
        lam = 1e6
        data = np.full((8, 8, 8), 3.5)  # rescaled to max_photons anyway
        out = apply_poisson(_volume(data), NoiseSpec(max_photons=lam, rng_seed=11))
        sigma_mean = np.sqrt(lam / data.size)
        assert abs(out.data.mean() - lam) < 5 * sigma_mean

    def test_huge_mean_regime(self):
        # the paper's photon budget: means near 1e11 must not overflow
        lam = 1e11
        data = np.ones((4, 4, 4))
        out = apply_poisson(_volume(data), NoiseSpec(max_photons=lam, rng_seed=13))
        sigma_mean = np.sqrt(lam / data.size)
        assert abs(out.data.mean() - lam) < 5 * sigma_mean

    def test_variance_scale(self):
        lam = 1e6
        data = np.ones((12, 12, 12))
        out = apply_poisson(_volume(data), NoiseSpec(max_photons=lam, rng_seed=17))
        # Poisson variance equals the mean; allow a generous statistical band
        assert out.data.var() == pytest.approx(lam, rel=0.2)
