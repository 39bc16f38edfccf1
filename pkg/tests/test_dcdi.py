"""Deterministic reconstruction: auxiliary function, window calibration,
exactness under the ideal-reference premise."""

import numpy as np
import pytest

from braggcdi import model
from braggcdi.dcdi import (
    ExtractionWindow,
    OversamplingError,
    ReconstructionFailedError,
    auxiliary_u,
    calibration_error,
    dcdi_reconstruct,
    locate_window,
)
from braggcdi.forward import IntensityVolume, autocorrelation, simulate_intensity_fft

#: complex-RMS error of the frozen (16-cell, 4x oversampling) calibration run;
#: regression bound is 2x this value
FROZEN_CALIBRATION_ERROR_16_4 = 1.4013e-2


def upper_half_spec(n):
    """Crystal with inclusions entirely above z = L_z/2."""
    return model.CrystalSpec(
        n_cells=(n, n, n),
        oversampling=4,
        inclusions=[
            model.Inclusion(center=(0.25 * n, 0.30 * n, 0.75 * n), radius=2.0,
                            beta=0.90),
        ],
    )


def upper_half_object(spec):
    """Object whose deformation phase is confined to the upper half."""
    n = spec.n_cells[2]
    amp = model.build_amplitude(spec)
    phase = model.build_phase_field(spec)
    centers = np.arange(n) + 0.5
    phase = phase * (centers[None, None, :] > n / 2)
    return model.embed_cell_field(spec, amp * np.exp(1j * phase))


class TestAuxiliaryU:
    def test_equals_third_mixed_difference_of_autocorrelation(self, tiny_spec):
        intensity = simulate_intensity_fft(model.build_object(tiny_spec))
        u = auxiliary_u(intensity)
        diff = autocorrelation(intensity).data
        for axis in range(3):
            diff = np.roll(diff, -1, axis=axis) - diff
        assert np.abs(u.data - diff).max() < 1e-12 * np.abs(u.data).max()

    def test_dc_voxel_is_ignored(self, small_intensity):
        u = auxiliary_u(small_intensity)
        perturbed = small_intensity.data.copy()
        c = tuple(m // 2 for m in perturbed.shape)
        perturbed[c] += 1e6
        u2 = auxiliary_u(
            IntensityVolume(data=perturbed, grid=small_intensity.grid)
        )
        assert np.array_equal(u.data, u2.data)

    def test_linearity(self, small_intensity, ideal_intensity):
        a, b = 2.0, -0.5
        combo = IntensityVolume(
            data=a * small_intensity.data + b * ideal_intensity.data,
            grid=small_intensity.grid,
        )
        lhs = auxiliary_u(combo).data
        rhs = a * auxiliary_u(small_intensity).data + b * auxiliary_u(
            ideal_intensity
        ).data
        assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(rhs).max()

    def test_frequency_weight_supported(self, small_intensity):
        u = auxiliary_u(small_intensity, weight="frequency")
        assert u.data.shape == small_intensity.data.shape

    def test_unknown_weight_rejected(self, small_intensity):
        with pytest.raises(ValueError):
            auxiliary_u(small_intensity, weight="cubic")


class TestLocateWindow:
    def test_pure_function(self):
        spec = upper_half_spec(8)
        assert locate_window(spec) == locate_window(spec)

    def test_refuses_small_oversampling(self):
        spec = model.CrystalSpec(n_cells=(8, 8, 8), oversampling=2)
        with pytest.raises(OversamplingError):
            locate_window(spec)

    def test_offset_scales_linearly_with_n(self):
        w8 = locate_window(model.CrystalSpec(n_cells=(8,) * 3, oversampling=4))
        w16 = locate_window(model.CrystalSpec(n_cells=(16,) * 3, oversampling=4))
        assert tuple(2 * o for o in w8.offset) == w16.offset
        assert w8.conjugate == w16.conjugate
        assert w16.size == (16, 16, 16)

    def test_frozen_window_16(self):
        window = locate_window(model.CrystalSpec(n_cells=(16,) * 3, oversampling=4))
        assert window == ExtractionWindow(
            offset=(16, 16, 16), size=(16, 16, 16), conjugate=True
        )

    def test_calibration_error_regression(self):
        err = calibration_error(model.CrystalSpec(n_cells=(16,) * 3, oversampling=4))
        assert err <= 2 * FROZEN_CALIBRATION_ERROR_16_4


class TestReconstruct:
    def test_ideal_crystal_reconstructs_to_one(self, ideal_spec, ideal_intensity):
        rec = dcdi_reconstruct(ideal_intensity, ideal_spec)
        box = rec.object.crop_box()
        assert np.abs(box - 1.0).max() < 1e-10

    def test_exact_under_ideal_reference_premise(self):
        spec = upper_half_spec(8)
        truth = upper_half_object(spec)
        intensity = simulate_intensity_fft(truth)
        rec = dcdi_reconstruct(intensity, spec)
        assert np.abs(rec.object.crop_box() - truth.crop_box()).max() < 1e-8

    def test_support_is_the_crystal_box(self, small_spec, small_intensity):
        rec = dcdi_reconstruct(small_intensity, small_spec)
        expected = np.zeros(small_spec.array_dims, dtype=bool)
        sl = tuple(
            slice(o, o + n)
            for o, n in zip(small_spec.box_origin, small_spec.n_cells)
        )
        expected[sl] = True
        assert np.array_equal(rec.support, expected)
        assert rec.method == "dcdi"

    def test_dc_insensitivity(self, small_spec, small_intensity):
        rec = dcdi_reconstruct(small_intensity, small_spec)
        shifted = IntensityVolume(
            data=small_intensity.data + 0.01 * small_intensity.data.max(),
            grid=small_intensity.grid,
        )
        rec2 = dcdi_reconstruct(shifted, small_spec)
        delta = np.abs(rec.object.data - rec2.object.data).max()
        assert delta < 1e-12

    def test_idempotent(self, small_spec, small_intensity):
        a = dcdi_reconstruct(small_intensity, small_spec)
        b = dcdi_reconstruct(small_intensity, small_spec)
        assert np.array_equal(a.object.data, b.object.data)

    def test_intensity_scale_invariance(self, small_spec, small_intensity):
        # the normalization constant absorbs any global intensity scale
        rec = dcdi_reconstruct(small_intensity, small_spec)
        scaled = IntensityVolume(
            data=small_intensity.data * 7.25, grid=small_intensity.grid
        )
        rec2 = dcdi_reconstruct(scaled, small_spec)
        assert np.abs(rec.object.data - rec2.object.data).max() < 1e-9

    def test_zero_intensity_fails(self, small_spec, small_intensity):
        zero = IntensityVolume(
            data=np.zeros_like(small_intensity.data), grid=small_intensity.grid
        )
        with pytest.raises(ReconstructionFailedError):
            dcdi_reconstruct(zero, small_spec)

    def test_fill_reference_switch(self, small_spec, small_intensity):
        rec = dcdi_reconstruct(small_intensity, small_spec, fill_reference=False)
        box = rec.object.crop_box()
        n = small_spec.n_cells[2]
        # without the fill the reference half keeps the raw (contaminated) copy
        assert np.abs(box[:, :, : n // 2] - 1.0).max() > 0
