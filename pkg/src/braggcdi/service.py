"""HTTP service wrapping the simulation/reconstruction pipeline.

Heavy volumes stay on disk in the request's output directory; responses
carry metric values, verdicts, and the paths of the written artifacts.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import dcdi as _dcdi
from . import metrics as _metrics
from . import model as _model
from . import noise as _noise
from . import pipeline as _pipeline
from . import volume_io
from .config import ExperimentConfig, SeedKind, Variant
from .forward import simulate_intensity_fft

app = FastAPI(
    title="braggcdi",
    description="Bragg coherent diffraction imaging simulation and "
    "reconstruction service",
)


class ExperimentRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ExperimentConfig = Field(default_factory=ExperimentConfig)
    out_dir: str | None = None

    def resolved_out(self) -> Path:
        return Path(self.out_dir or self.config.outputs.directory)


class RefineRequest(ExperimentRequest):
    seed_kind: SeedKind = "dcdi"
    noise: bool = False


class SimulateResponse(BaseModel):
    files: list[str]
    max_intensity: float
    total_intensity: float
    noisy: bool


class MetricsRow(BaseModel):
    method: str
    seed: str
    noise: str
    r_abs: float
    r_ph_z: float
    d_abs: float
    d_ph_z: float
    chi2: float


class RunResponse(BaseModel):
    summary_path: str
    rows: list[MetricsRow]
    files: list[str]
    failed: list[str]


class RefineResponse(BaseModel):
    row: MetricsRow
    final_chi2: float
    iterations: int
    files: list[str]


class CompareCase(BaseModel):
    noisy: bool
    final_chi2_dcdi: float
    final_chi2_autocorr: float
    iterations_to_threshold: int | None
    total_iterations: int
    verdict: str


class CompareResponse(BaseModel):
    cases: list[CompareCase]


def _row_from_report(report: _metrics.MetricsReport, method: str, seed: str,
                     noise: str) -> MetricsRow:
    return MetricsRow(
        method=method,
        seed=seed,
        noise=noise,
        r_abs=report.r_abs,
        r_ph_z=report.r_ph_z,
        d_abs=report.d_abs,
        d_ph_z=report.d_ph_z,
        chi2=report.chi2,
    )


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/simulate", response_model=SimulateResponse)
def simulate(request: ExperimentRequest) -> SimulateResponse:
    cfg = request.config
    out = request.resolved_out()
    out.mkdir(parents=True, exist_ok=True)
    truth = _model.build_object(cfg.crystal)
    intensity = simulate_intensity_fft(truth, cfg.forward)
    measured = _noise.apply_poisson(intensity, cfg.noise)
    label = "noisy" if cfg.noise.enabled else "nonoise"
    files = []
    files.extend(
        str(p) for p in volume_io.write_intensity_volume(out / f"intensity_{label}", measured)
    )
    files.extend(str(p) for p in volume_io.write_complex_volume(out / "truth", truth))
    return SimulateResponse(
        files=files,
        max_intensity=float(measured.data.max()),
        total_intensity=float(measured.data.sum()),
        noisy=cfg.noise.enabled,
    )


@app.post("/reconstruct", response_model=RunResponse)
def reconstruct(request: ExperimentRequest) -> RunResponse:
    """One-step deterministic reconstruction for each configured noise case."""
    cfg = request.config
    noise_cases = sorted({v.noise for v in cfg.variants})
    variants = [Variant(method="dcdi", noise=n) for n in noise_cases]
    return _run(cfg.model_copy(update={"variants": variants}), request.resolved_out())


@app.post("/refine", response_model=RefineResponse)
def refine(request: RefineRequest) -> RefineResponse:
    method = (
        "shrinkwrap-from-dcdi" if request.seed_kind == "dcdi"
        else "shrinkwrap-from-autocorr"
    )
    variant = Variant(method=method, noise=request.noise)
    cfg = request.config.model_copy(update={"variants": [variant]})
    outcome = _pipeline.run_experiment(cfg, request.resolved_out())
    if outcome.failed:
        raise HTTPException(status_code=500, detail=dict(outcome.failed))
    result = outcome.results[0]
    row = _row_from_report(
        result.report, variant.method, variant.seed_kind or "-",
        _pipeline.case_label(variant),
    )
    return RefineResponse(
        row=row,
        final_chi2=result.final_chi2,
        iterations=len(result.trace.chi2),
        files=result.files,
    )


@app.post("/run", response_model=RunResponse)
def run(request: ExperimentRequest) -> RunResponse:
    return _run(request.config, request.resolved_out())


def _run(cfg: ExperimentConfig, out: Path) -> RunResponse:
    outcome = _pipeline.run_experiment(cfg, out)
    rows = [
        _row_from_report(
            r.report,
            r.variant.method,
            r.variant.seed_kind or "-",
            _pipeline.case_label(r.variant),
        )
        for r in outcome.results
    ]
    files = [f for r in outcome.results for f in r.files]
    return RunResponse(
        summary_path=str(outcome.summary_path),
        rows=rows,
        files=files,
        failed=[f"{name}: {msg}" for name, msg in outcome.failed],
    )


@app.post("/compare", response_model=CompareResponse)
def compare(request: ExperimentRequest) -> CompareResponse:
    try:
        comparisons = _pipeline.compare_seeds(request.config, request.resolved_out())
    except RuntimeError as exc:
        raise HTTPException(status_code=500, detail=str(exc))
    return CompareResponse(
        cases=[
            CompareCase(
                noisy=c.noisy,
                final_chi2_dcdi=c.final_chi2_dcdi,
                final_chi2_autocorr=c.final_chi2_autocorr,
                iterations_to_threshold=c.iterations_to_threshold,
                total_iterations=c.total_iterations,
                verdict=c.verdict(),
            )
            for c in comparisons
        ]
    )
