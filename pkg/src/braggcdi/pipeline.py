"""Experiment orchestration: run the paper-style matrix and emit artifacts.

Per noise case the pipeline builds the ground-truth object, simulates the
far-field intensity, optionally applies photon noise, runs the
deterministic reconstruction, seeds the iterative refinement, and scores
everything with the full metric vector. Outputs are a Tables-shaped
``summary.csv``, one convergence-trace CSV per iterative variant, and
optional raw volume dumps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import dcdi as _dcdi
from . import metrics as _metrics
from . import model as _model
from . import noise as _noise
from . import shrinkwrap as _shrinkwrap
from . import volume_io
from .config import ExperimentConfig, Variant
from .forward import IntensityVolume, simulate_intensity_fft
from .noise import NoiseSpec

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["iteration", "chi2", "d_abs", "r_abs", "d_ph_z", "r_ph_z"]


@dataclass
class VariantResult:
    variant: Variant
    report: _metrics.MetricsReport
    final_chi2: float
    trace: _dcdi.MetricTrace | None = None
    files: list[str] = field(default_factory=list)
    error: str | None = None


@dataclass
class ExperimentResult:
    results: list[VariantResult]
    failed: list[tuple[str, str]]
    summary_path: Path | None

    @property
    def ok(self) -> bool:
        return not self.failed

    def find(self, name: str) -> VariantResult | None:
        for r in self.results:
            if r.variant.name == name:
                return r
        return None


def _noise_spec_for(config: ExperimentConfig, noisy: bool) -> NoiseSpec:
    spec = config.noise
    return spec.model_copy(update={"enabled": noisy})


def _trace_row(record: dict) -> list[str]:
    row = [str(record["iteration"]), _metrics._fmt(record["chi2"])]
    for key in ("d_abs", "r_abs", "d_ph_z", "r_ph_z"):
        value = record[key]
        row.append("" if value is None else _metrics._fmt(value))
    return row


class _NoiseCase:
    """Shared per-noise-case state: object, intensity, one-step DCDI."""

    def __init__(self, config: ExperimentConfig, noisy: bool):
        self.noisy = noisy
        self.label = "poisson" if noisy else "none"
        self.truth = _model.build_object(config.crystal)
        clean = simulate_intensity_fft(self.truth, config.forward)
        self.measured: IntensityVolume = _noise.apply_poisson(
            clean, _noise_spec_for(config, noisy)
        )
        self._config = config
        self._dcdi: _dcdi.ReconstructionResult | None = None

    def dcdi_result(self) -> _dcdi.ReconstructionResult:
        if self._dcdi is None:
            self._dcdi = _dcdi.dcdi_reconstruct(self.measured, self._config.crystal)
        return self._dcdi


def _run_variant(
    case: _NoiseCase,
    variant: Variant,
    config: ExperimentConfig,
    out_dir: Path | None,
) -> VariantResult:
    if variant.method == "dcdi":
        recon = case.dcdi_result()
        report = _metrics.evaluate(recon, case.truth, case.measured, config.forward)
        result = VariantResult(
            variant=variant, report=report, final_chi2=report.chi2, trace=None
        )
    else:
        if variant.seed_kind == "dcdi":
            seed = _shrinkwrap.seed_from_dcdi(case.dcdi_result())
        else:
            seed = _shrinkwrap.seed_from_autocorrelation(case.measured)
        sink = None
        stream = None
        if out_dir is not None and config.outputs.write_traces:
            stream = volume_io.StreamingCsv(
                out_dir / f"trace_{variant.name}.csv", TRACE_COLUMNS
            )
            sink = lambda record: stream.write_row(_trace_row(record))
        try:
            recon, trace = _shrinkwrap.run_shrinkwrap(
                case.measured,
                seed,
                config.shrinkwrap,
                truth=case.truth,
                forward_cfg=config.forward,
                trace_sink=sink,
            )
        except BaseException:
            if stream is not None:
                stream.abort()
            raise
        if stream is not None:
            stream.close()
        report = _metrics.evaluate(recon, case.truth, case.measured, config.forward)
        result = VariantResult(
            variant=variant,
            report=report,
            final_chi2=trace.chi2[-1],
            trace=trace,
        )
        if stream is not None:
            result.files.append(str(stream.path))

    if out_dir is not None and config.outputs.dump_volumes:
        hdr, raw = volume_io.write_complex_volume(
            out_dir / f"volume_{variant.name}", recon.object
        )
        result.files.extend([str(hdr), str(raw)])
    return result


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path | None = None
) -> ExperimentResult:
    """Run every configured variant; failures abort only their own variant."""
    out = Path(out_dir) if out_dir is not None else Path(config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)

    cases: dict[bool, _NoiseCase] = {}
    results: list[VariantResult] = []
    failed: list[tuple[str, str]] = []
    for variant in config.variants:
        try:
            if variant.noise not in cases:
                cases[variant.noise] = _NoiseCase(config, variant.noise)
            case = cases[variant.noise]
            results.append(_run_variant(case, variant, config, out))
        except Exception as exc:  # per-variant isolation
            log.exception("variant %s failed", variant.name)
            failed.append((variant.name, f"{type(exc).__name__}: {exc}"))

    summary_path = out / "summary.csv"
    rows = []
    for r in results:
        seed = r.variant.seed_kind or "-"
        rows.append(r.report.csv_row(r.variant.method, seed, case_label(r.variant)))
    volume_io.write_csv(summary_path, list(_metrics.CSV_COLUMNS), rows)

    if config.outputs.dump_volumes:
        for noisy, case in cases.items():
            label = "noisy" if noisy else "nonoise"
            volume_io.write_intensity_volume(out / f"intensity_{label}", case.measured)
            volume_io.write_complex_volume(out / "truth", case.truth)

    return ExperimentResult(results=results, failed=failed, summary_path=summary_path)


def case_label(variant: Variant) -> str:
    return "poisson" if variant.noise else "none"


@dataclass
class SeedComparison:
    noisy: bool
    final_chi2_dcdi: float
    final_chi2_autocorr: float
    iterations_to_threshold: int | None
    total_iterations: int

    @property
    def dcdi_wins(self) -> bool:
        return self.final_chi2_dcdi < self.final_chi2_autocorr

    @property
    def iteration_ratio(self) -> float | None:
        if self.iterations_to_threshold is None:
            return None
        return self.iterations_to_threshold / self.total_iterations

    def verdict(self) -> str:
        case = "noisy" if self.noisy else "noise-free"
        if self.final_chi2_dcdi == self.final_chi2_autocorr:
            return f"{case}: tie (ratio 1.0)"
        winner = "dcdi-seed" if self.dcdi_wins else "autocorr-seed"
        ratio = self.iteration_ratio
        ratio_txt = f", dcdi-seed reached autocorr final chi2 after {ratio:.0%} of its iterations" if ratio is not None else ""
        return (
            f"{case}: {winner} finishes lower "
            f"({self.final_chi2_dcdi:.3e} vs {self.final_chi2_autocorr:.3e})"
            f"{ratio_txt}"
        )


def compare_traces(
    chi2_dcdi: list[float], chi2_autocorr: list[float], noisy: bool
) -> SeedComparison:
    """Compare two chi2 convergence traces of equal protocol."""
    if not chi2_dcdi or not chi2_autocorr:
        raise ValueError("both seed branches must be present")
    target = chi2_autocorr[-1]
    reached = None
    for i, value in enumerate(chi2_dcdi):
        if value <= target:
            reached = i + 1
            break
    return SeedComparison(
        noisy=noisy,
        final_chi2_dcdi=chi2_dcdi[-1],
        final_chi2_autocorr=chi2_autocorr[-1],
        iterations_to_threshold=reached,
        total_iterations=len(chi2_dcdi),
    )


def compare_seeds(
    config: ExperimentConfig, out_dir: str | Path | None = None
) -> list[SeedComparison]:
    """Run (or reuse) both seed branches per noise case and compare them."""
    noise_cases = sorted({v.noise for v in config.variants})
    wanted = []
    for noisy in noise_cases:
        for method in ("shrinkwrap-from-dcdi", "shrinkwrap-from-autocorr"):
            wanted.append(Variant(method=method, noise=noisy))
    run_config = config.model_copy(update={"variants": wanted})
    outcome = run_experiment(run_config, out_dir)
    if outcome.failed:
        raise RuntimeError(f"seed comparison branches failed: {outcome.failed}")

    comparisons = []
    for noisy in noise_cases:
        dcdi_branch = outcome.find(Variant(method="shrinkwrap-from-dcdi", noise=noisy).name)
        auto_branch = outcome.find(
            Variant(method="shrinkwrap-from-autocorr", noise=noisy).name
        )
        comparisons.append(
            compare_traces(dcdi_branch.trace.chi2, auto_branch.trace.chi2, noisy)
        )
    return comparisons
