"""In-memory registry for long-running training jobs."""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

from ..errors import ConfigError, DivergenceError


@dataclass
class Job:
    id: str
    kind: str
    status: str = "queued"  # queued | running | done | failed
    error: str | None = None
    error_kind: str | None = None  # config | runtime
    report: dict | None = None
    created_at: float = field(default_factory=time.time)
    finished_at: float | None = None


class JobRegistry:
    """Thread-safe job store; one worker thread per submitted job."""

    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def create(self, kind: str) -> Job:
        job = Job(id=uuid.uuid4().hex, kind=kind)
        with self._lock:
            self._jobs[job.id] = job
        return job

    def view(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def start(self, job: Job, target) -> None:
        """Run target() on a daemon thread, capturing report or failure."""

        def runner():
            with self._lock:
                job.status = "running"
            try:
                report = target()
            except DivergenceError as exc:
                with self._lock:
                    job.status = "failed"
                    job.error = str(exc)
                    job.error_kind = "runtime"
                    job.report = exc.report
                    job.finished_at = time.time()
            except ConfigError as exc:
                with self._lock:
                    job.status = "failed"
                    job.error = str(exc)
                    job.error_kind = "config"
                    job.finished_at = time.time()
            except Exception as exc:  # noqa: BLE001 - job boundary
                with self._lock:
                    job.status = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"
                    job.error_kind = "runtime"
                    job.finished_at = time.time()
            else:
                with self._lock:
                    job.status = "done"
                    job.report = report
                    job.finished_at = time.time()

        threading.Thread(target=runner, name=f"job-{job.id}", daemon=True).start()
