"""Remote solve service: submit instances, poll status, fetch solutions.

HTTP+JSON surface:
  POST   /v1/jobs               {"instance": <document>, "options": {...}} -> {"id": ...}
  GET    /v1/jobs/{id}          job metadata (no result body)
  GET    /v1/jobs/{id}/solution SolutionDocument for Done jobs
  DELETE /v1/jobs/{id}          cancel
  GET    /v1/health             {"status": "ok"}
Errors are {"error": <name>, "detail": ...} with 400/404/409/429 statuses.

Jobs live in an in-memory table behind a bounded FIFO queue (default depth
64; overflow is rejected with 429). A restart loses the queue; persistence is
out of scope. Cancellation is cooperative: running solves stop at the next
branch-and-bound node boundary and finish as Failed("cancelled") with their
best-so-far bounds attached.
"""

from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (
    DisconnectedNetworkError,
    NotReadyError,
    QueueFullError,
    SchemaError,
    ScucError,
    SolveCancelled,
    UnknownJobError,
    ValidationError,
)
from .formats import SolutionDocument, solution_from_result
from .instance import SolverOptions, UcInstance, parse_instance

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"
CANCELLED = "cancelled"

TERMINAL = {DONE, FAILED, CANCELLED}


@dataclass
class Job:
    id: str
    instance: UcInstance
    options: SolverOptions
    status: str = QUEUED
    submitted: float = 0.0
    started: Optional[float] = None
    finished: Optional[float] = None
    result: Optional[SolutionDocument] = None
    error: Optional[str] = None
    error_detail: Optional[dict] = None
    cancel_event: threading.Event = field(default_factory=threading.Event)

    def metadata(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "submitted": self.submitted,
            "started": self.started,
            "finished": self.finished,
            "error": self.error,
            "error_detail": self.error_detail,
        }


def _default_solver(inst: UcInstance, options: SolverOptions, cancel_event) -> SolutionDocument:
    from . import compiler as comp
    from .mip import solve_mip

    t0 = time.perf_counter()
    model = comp.compile(inst)
    t1 = time.perf_counter()
    result = solve_mip(model, options, cancel_event=cancel_event)
    return solution_from_result(model, result, compile_seconds=t1 - t0)


class JobManager:
    """Thread-safe in-memory job table with a bounded worker pool."""

    def __init__(
        self,
        worker_count: int = 1,
        queue_depth: int = 64,
        solver: Optional[Callable] = None,
    ):
        self._solver = solver or _default_solver
        self._jobs: dict = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue(maxsize=queue_depth)
        self._stop = threading.Event()
        self._workers = [
            threading.Thread(target=self._worker_loop, daemon=True, name=f"scuc-worker-{i}")
            for i in range(max(1, worker_count))
        ]
        for w in self._workers:
            w.start()

    # -- operations ---------------------------------------------------------

    def submit(self, instance_doc, options_doc=None) -> str:
        """Validate, enqueue, and return the new job id without solving."""
        if isinstance(instance_doc, str):
            text = instance_doc
        else:
            text = json.dumps(instance_doc)
        inst = parse_instance(text)  # SchemaError / ValidationError propagate
        options = _parse_options(options_doc or {})
        job = Job(
            id=uuid.uuid4().hex,
            instance=inst,
            options=options,
            submitted=time.time(),
        )
        with self._lock:
            self._jobs[job.id] = job
        try:
            self._queue.put_nowait(job.id)
        except queue.Full:
            with self._lock:
                del self._jobs[job.id]
            raise QueueFullError("submission queue is full") from None
        return job.id

    def status(self, job_id: str) -> dict:
        return self._get(job_id).metadata()

    def result(self, job_id: str) -> SolutionDocument:
        job = self._get(job_id)
        with self._lock:
            if job.status == DONE:
                return job.result
            if job.status in TERMINAL:
                raise NotReadyError(f"job is terminal without a result: {job.status}")
            raise NotReadyError(f"job is {job.status}")

    def cancel(self, job_id: str) -> dict:
        job = self._get(job_id)
        with self._lock:
            if job.status == QUEUED:
                job.status = CANCELLED
                job.finished = time.time()
            elif job.status == RUNNING:
                job.cancel_event.set()
            # terminal jobs: acknowledged, unchanged
        return job.metadata()

    def job_ids(self) -> list:
        with self._lock:
            return list(self._jobs)

    def shutdown(self):
        self._stop.set()
        for _ in self._workers:
            try:
                self._queue.put_nowait(None)
            except queue.Full:
                break
        for w in self._workers:
            w.join(timeout=5)

    # -- internals ----------------------------------------------------------

    def _get(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise UnknownJobError(f"unknown job {job_id!r}")
        return job

    def _worker_loop(self):
        while not self._stop.is_set():
            try:
                job_id = self._queue.get(timeout=0.2)
            except queue.Empty:
                continue
            if job_id is None:
                break
            with self._lock:
                job = self._jobs.get(job_id)
                if job is None or job.status != QUEUED:
                    continue  # cancelled while queued
                job.status = RUNNING
                job.started = time.time()
            try:
                doc = self._solver(job.instance, job.options, job.cancel_event)
                with self._lock:
                    job.result = doc
                    job.status = DONE
                    job.finished = time.time()
            except SolveCancelled as exc:
                with self._lock:
                    job.status = FAILED
                    job.error = "cancelled"
                    job.error_detail = {
                        "objective": _jsonable(exc.objective),
                        "best_bound": _jsonable(exc.best_bound),
                    }
                    job.finished = time.time()
            except Exception as exc:
                with self._lock:
                    job.status = FAILED
                    job.error = f"{type(exc).__name__}: {exc}"
                    job.finished = time.time()


def _jsonable(v):
    if v is None:
        return None
    v = float(v)
    return v if v == v and abs(v) != float("inf") else None


def _parse_options(doc: dict) -> SolverOptions:
    if not isinstance(doc, dict):
        raise SchemaError("options must be an object")
    allowed = {"rel_gap", "time_limit", "worker_count", "seed"}
    extra = set(doc) - allowed
    if extra:
        raise SchemaError(f"unknown option keys {sorted(extra)}")
    try:
        return SolverOptions(**doc)
    except TypeError as exc:
        raise SchemaError(f"bad options: {exc}") from exc


# ---------------------------------------------------------------------------
# HTTP layer

def create_app(manager: Optional[JobManager] = None):
    """Build the FastAPI app; the manager may be injected for tests."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="scuc solve service")
    app.state.manager = manager or JobManager()

    def err(status_code, name, detail):
        return JSONResponse(
            status_code=status_code, content={"error": name, "detail": detail}
        )

    @app.exception_handler(ScucError)
    async def _scuc_error(request: Request, exc: ScucError):
        if isinstance(exc, (SchemaError, ValidationError, DisconnectedNetworkError)):
            detail = exc.violations if isinstance(exc, ValidationError) else str(exc)
            return err(400, type(exc).__name__, detail)
        if isinstance(exc, UnknownJobError):
            return err(404, "UnknownJob", str(exc))
        if isinstance(exc, NotReadyError):
            return err(409, "NotReady", str(exc))
        if isinstance(exc, QueueFullError):
            return err(429, "QueueFull", str(exc))
        return err(500, type(exc).__name__, str(exc))

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.post("/v1/jobs", status_code=202)
    async def submit(body: dict):
        if "instance" not in body:
            raise SchemaError("body must contain 'instance'")
        job_id = app.state.manager.submit(body["instance"], body.get("options"))
        return {"id": job_id}

    @app.get("/v1/jobs/{job_id}")
    async def status(job_id: str):
        return app.state.manager.status(job_id)

    @app.get("/v1/jobs/{job_id}/solution")
    async def solution(job_id: str):
        doc = app.state.manager.result(job_id)
        return json.loads(doc.to_json())

    @app.delete("/v1/jobs/{job_id}")
    async def cancel(job_id: str):
        return app.state.manager.cancel(job_id)

    return app


def serve(port: int = 8000, worker_count: int = 1, host: str = "127.0.0.1"):
    import uvicorn

    uvicorn.run(create_app(JobManager(worker_count=worker_count)), host=host, port=port)
