"""Error-metric portfolio and truth registration.

Fourier-space residual chi2, normalized RMS difference d, normalized
absolute difference r (as printed, square root of the absolute-sum
ratio), their phase-z-derivative variants, and the integer-shift /
conjugate-twin registration needed before any real-space comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dcdi import ReconstructionResult
from .forward import ForwardConfig, IntensityVolume, simulate_intensity_fft
from .model import ComplexVolume

CSV_COLUMNS = ("method", "seed", "noise", "r_abs", "r_ph_z", "d_abs", "d_ph_z", "chi2")


class UndefinedMetricError(ValueError):
    """The metric's normalizing denominator is zero."""


@dataclass
class MetricsReport:
    chi2: float
    d_abs: float
    r_abs: float
    d_ph_z: float
    r_ph_z: float
    shift: tuple[int, int, int]
    twin: bool

    def csv_row(self, method: str, seed: str, noise: str) -> list[str]:
        return [
            method,
            seed,
            noise,
            _fmt(self.r_abs),
            _fmt(self.r_ph_z),
            _fmt(self.d_abs),
            _fmt(self.d_ph_z),
            _fmt(self.chi2),
        ]


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def chi2(measured: IntensityVolume | np.ndarray, model: IntensityVolume | np.ndarray) -> float:
    """sum (sqrt(measured) - sqrt(model))^2 / sum measured over the array."""
    m = measured.data if isinstance(measured, IntensityVolume) else np.asarray(measured)
    i = model.data if isinstance(model, IntensityVolume) else np.asarray(model)
    total = m.sum()
    if total <= 0:
        raise UndefinedMetricError("chi2 undefined: measured intensity sums to zero")
    return float(np.sum((np.sqrt(m) - np.sqrt(i)) ** 2) / total)


def rms_d(rec: np.ndarray, ideal: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Normalized RMS difference; the ideal field is centered on its masked mean."""
    g_rec, g_ideal = _masked(rec, ideal, mask)
    denom = np.sum(np.abs(g_ideal - g_ideal.mean()) ** 2)
    if denom == 0:
        raise UndefinedMetricError("rms_d undefined: ideal field constant on mask")
    return float(np.sqrt(np.sum(np.abs(g_rec - g_ideal) ** 2) / denom))


def abs_r(rec: np.ndarray, ideal: np.ndarray, mask: np.ndarray | None = None,
          sqrt: bool = True) -> float:
    """Normalized absolute difference; the printed square-root form by default."""
    g_rec, g_ideal = _masked(rec, ideal, mask)
    denom = np.sum(np.abs(g_ideal))
    if denom == 0:
        raise UndefinedMetricError("abs_r undefined: ideal field zero on mask")
    ratio = np.sum(np.abs(g_rec - g_ideal)) / denom
    return float(np.sqrt(ratio)) if sqrt else float(ratio)


def _masked(rec: np.ndarray, ideal: np.ndarray, mask: np.ndarray | None):
    rec = np.asarray(rec, dtype=float) if not np.iscomplexobj(rec) else np.asarray(rec)
    ideal = np.asarray(ideal, dtype=float) if not np.iscomplexobj(ideal) else np.asarray(ideal)
    if rec.shape != ideal.shape:
        raise ValueError("field shapes differ")
    if mask is None:
        return rec.ravel(), ideal.ravel()
    if not mask.any():
        raise UndefinedMetricError("empty metric mask")
    return rec[mask], ideal[mask]


def phase_z_derivative(phase: np.ndarray, pitch: float) -> np.ndarray:
    """d(phase)/dz: central differences in the interior, one-sided at the faces."""
    if phase.shape[2] < 2:
        raise ValueError("need at least two z layers to differentiate")
    out = np.empty_like(phase, dtype=float)
    out[:, :, 1:-1] = (phase[:, :, 2:] - phase[:, :, :-2]) / (2.0 * pitch)
    out[:, :, 0] = (phase[:, :, 1] - phase[:, :, 0]) / pitch
    out[:, :, -1] = (phase[:, :, -1] - phase[:, :, -2]) / pitch
    return out


def _twin(data: np.ndarray) -> np.ndarray:
    # conjugate-inverted copy; rolling by one keeps index 0 fixed under flip
    flipped = np.conj(data[::-1, ::-1, ::-1])
    return np.roll(flipped, 1, axis=(0, 1, 2))


def _best_shift(a_rec: np.ndarray, a_truth: np.ndarray) -> tuple[int, int, int]:
    # argmax of the circular cross-correlation of the amplitudes
    corr = np.fft.ifftn(np.fft.fftn(a_truth) * np.conj(np.fft.fftn(a_rec)))
    idx = np.unravel_index(np.argmax(corr.real), corr.shape)
    return tuple(int(i) for i in idx)


def register(
    rec: ComplexVolume | np.ndarray, truth: ComplexVolume | np.ndarray
) -> tuple[np.ndarray, tuple[int, int, int], bool]:
    """Align a reconstruction to ground truth over translation and twinning.

    Both the reconstruction and its conjugate-inverted twin are shifted to
    their amplitude cross-correlation maximum; whichever aligned candidate
    has the smaller amplitude RMS mismatch wins. The winner is then
    multiplied by the least-squares global complex constant (phase and
    measurement scale are both meaningless ambiguities).
    """
    r = rec.data if isinstance(rec, ComplexVolume) else np.asarray(rec)
    t = truth.data if isinstance(truth, ComplexVolume) else np.asarray(truth)
    if r.shape != t.shape:
        raise ValueError("reconstruction and truth dims differ")
    a_truth = np.abs(t)
    best = None
    for twin_flag, candidate in ((False, r), (True, _twin(r))):
        shift = _best_shift(np.abs(candidate), a_truth)
        aligned = np.roll(candidate, shift, axis=(0, 1, 2))
        err = np.sum((np.abs(aligned) - a_truth) ** 2)
        if best is None or err < best[0]:
            best = (err, aligned, shift, twin_flag)
    _, aligned, shift, twin_flag = best
    aligned = _match_global_constant(aligned, t)
    return aligned, shift, twin_flag


def _match_global_constant(rec: np.ndarray, truth: np.ndarray) -> np.ndarray:
    # global complex scale is a measurement-normalization ambiguity; fit it
    # by least squares so amplitude metrics see only shape errors
    den = np.vdot(rec, rec).real
    if den == 0:
        return rec
    return rec * (np.vdot(rec, truth) / den)


def evaluate(
    rec: ReconstructionResult | ComplexVolume | np.ndarray,
    truth: ComplexVolume,
    measured: IntensityVolume,
    forward_cfg: ForwardConfig | None = None,
) -> MetricsReport:
    """Full metric vector against ground truth.

    Real-space metrics are computed over the known crystal box; chi2
    compares the measurement with the forward model of the registered
    reconstruction, with a single global scale fitted (reconstruction
    normalizations do not carry the measurement's photon scale).
    """
    if isinstance(rec, ReconstructionResult):
        rec_data = rec.object.data
    elif isinstance(rec, ComplexVolume):
        rec_data = rec.data
    else:
        rec_data = np.asarray(rec)
    aligned, shift, twin_flag = register(rec_data, truth.data)

    box = truth.box_slices()
    rec_box = aligned[box]
    truth_box = truth.data[box]

    amp_rec = np.abs(rec_box)
    amp_truth = np.abs(truth_box)
    d_abs = rms_d(amp_rec, amp_truth)
    r_abs = abs_r(amp_rec, amp_truth)

    pitch = truth.pitch
    dz_rec = phase_z_derivative(np.angle(rec_box), pitch)
    dz_truth = phase_z_derivative(np.angle(truth_box), pitch)
    d_ph_z = rms_d(dz_rec, dz_truth)
    r_ph_z = abs_r(dz_rec, dz_truth)

    model_volume = ComplexVolume(data=aligned, pitch=pitch)
    model_intensity = simulate_intensity_fft(model_volume, forward_cfg)
    scaled = scale_model_to_measurement(measured.data, model_intensity.data)
    chi2_value = chi2(measured.data, scaled)

    return MetricsReport(
        chi2=chi2_value,
        d_abs=d_abs,
        r_abs=r_abs,
        d_ph_z=d_ph_z,
        r_ph_z=r_ph_z,
        shift=shift,
        twin=twin_flag,
    )


def scale_model_to_measurement(measured: np.ndarray, model: np.ndarray) -> np.ndarray:
    """Least-squares amplitude-domain scale: min over s of
    sum (sqrt(measured) - s*sqrt(model))^2."""
    num = np.sum(np.sqrt(measured * model))
    den = np.sum(model)
    if den == 0:
        return model
    s = num / den
    return (s * s) * model
