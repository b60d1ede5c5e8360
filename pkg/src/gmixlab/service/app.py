"""FastAPI application: split statistics, tail fitting, gradient
self-checks, and asynchronous training jobs."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError, GmixlabError
from ..evt import weibull_fit_high, weibull_log_likelihood
from ..gradcheck import gradcheck_report
from ..pipeline import prepare_split, run_training
from .jobs import Job, JobRegistry
from .schemas import (
    EvtFitRequest,
    EvtFitResponse,
    GradcheckRequest,
    GradcheckResponse,
    HealthResponse,
    JobCreated,
    JobReport,
    JobStatus,
    SplitRequest,
    SplitStatsResponse,
    TrainRequest,
)


def create_app() -> FastAPI:
    app = FastAPI(title="gmixlab", version=__version__)
    registry = JobRegistry()
    app.state.jobs = registry

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(GmixlabError)
    async def _domain_error(request: Request, exc: GmixlabError):
        return JSONResponse(
            status_code=500, content={"detail": f"{type(exc).__name__}: {exc}"}
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/split-stats", response_model=SplitStatsResponse)
    def split_stats(req: SplitRequest) -> SplitStatsResponse:
        _, manifest, _ = prepare_split(
            req.dataset_dir,
            req.bias,
            req.cmp,
            req.threshold,
            req.qualify_count,
            req.train_count,
            req.val_count,
            req.seed,
        )
        return SplitStatsResponse(manifest=manifest)

    @app.post("/evt-fit", response_model=EvtFitResponse)
    def evt_fit(req: EvtFitRequest) -> EvtFitResponse:
        model = weibull_fit_high(req.values, req.tail)
        log_likelihood = None
        if model.valid:
            tail_values = sorted(req.values, reverse=True)[: req.tail]
            log_likelihood = weibull_log_likelihood(
                tail_values, model.mu, model.sigma, model.xi
            )
        return EvtFitResponse(
            valid=model.valid,
            mu=model.mu,
            sigma=model.sigma,
            xi=model.xi,
            tail_size=model.tail_size,
            log_likelihood=log_likelihood,
        )

    @app.post("/gradcheck", response_model=GradcheckResponse)
    def gradcheck(req: GradcheckRequest) -> GradcheckResponse:
        report = gradcheck_report(
            probes=req.probes, h=req.h, seed=req.seed, tolerance=req.tolerance
        )
        return GradcheckResponse(report=report)

    @app.post("/train", response_model=JobCreated, status_code=202)
    def submit_train(req: TrainRequest) -> JobCreated:
        job = registry.create(kind="train")
        params = req.model_dump()
        registry.start(job, lambda: run_training(**params))
        return JobCreated(job_id=job.id, status=job.status)

    def _get_job(job_id: str) -> Job:
        job = registry.view(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        return job

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job_status(job_id: str) -> JobStatus:
        job = _get_job(job_id)
        return JobStatus(
            job_id=job.id,
            status=job.status,
            error=job.error,
            error_kind=job.error_kind,
            has_report=job.report is not None,
        )

    @app.get("/jobs/{job_id}/report", response_model=JobReport)
    def job_report(job_id: str) -> JobReport:
        job = _get_job(job_id)
        if job.status not in ("done", "failed"):
            raise HTTPException(status_code=409, detail=f"job {job_id!r} not finished")
        return JobReport(
            job_id=job.id,
            status=job.status,
            error=job.error,
            error_kind=job.error_kind,
            report=job.report,
        )

    return app
