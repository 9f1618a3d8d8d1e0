"""HTTP labeling and monitoring API over a running experiment.

One lock serializes every state touch: label ingestion and iteration
transitions mutate, readers see consistent snapshots. Attention checks are
served like normal tasks (opaque ids, same shape) in human mode only.
"""
from __future__ import annotations

import threading
import zlib
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .evaluation import metrics_report_json
from .experiment import (
    ATTENTION_CHECKS,
    AnnotationRecord,
    ExperimentRunner,
    ExperimentState,
    question_text,
    save_state,
)

__all__ = ["create_app", "serve"]

ANSWER_VALUES = ("yes", "no", "unsure")


def _record_errors(payload: Any, classes: tuple[str, ...]) -> list[dict]:
    """Field-level validation errors for a label submission body."""
    errors: list[dict] = []
    if not isinstance(payload, list):
        return [{"index": None, "field": None, "error": "body must be a list"}]
    for i, item in enumerate(payload):
        if not isinstance(item, dict):
            errors.append({"index": i, "field": None, "error": "record must be an object"})
            continue
        extra = set(item) - {"doc_id", "annotator", "answers"}
        if extra:
            errors.append(
                {"index": i, "field": sorted(extra)[0], "error": "unknown field"}
            )
        for key in ("doc_id", "annotator"):
            if not isinstance(item.get(key), str) or not item.get(key):
                errors.append(
                    {"index": i, "field": key, "error": "must be a non-empty string"}
                )
        answers = item.get("answers")
        if not isinstance(answers, dict):
            errors.append({"index": i, "field": "answers", "error": "must be an object"})
            continue
        missing = set(classes) - set(answers)
        for cls in sorted(missing):
            errors.append(
                {"index": i, "field": f"answers.{cls}", "error": "missing answer"}
            )
        for cls, val in sorted(answers.items()):
            if cls not in classes:
                errors.append(
                    {"index": i, "field": f"answers.{cls}", "error": "unknown category"}
                )
            elif val not in ANSWER_VALUES:
                errors.append(
                    {
                        "index": i,
                        "field": f"answers.{cls}",
                        "error": "answer must be yes, no, or unsure",
                    }
                )
    return errors


def create_app(runner: ExperimentRunner, state: ExperimentState) -> FastAPI:
    """The API over one experiment; all handlers share ``runner`` and ``state``."""
    app = FastAPI(title="rare-class retrieval loop", docs_url=None, redoc_url=None)
    lock = threading.Lock()
    cfg = runner.config
    questions = {cls: question_text(cls) for cls in cfg.classes}

    def _persist() -> None:
        if runner.state_dir:
            save_state(state, runner.state_dir)

    @app.get("/api/session")
    def session() -> dict:
        with lock:
            return {
                "classes": list(cfg.classes),
                "questions": questions,
                "strategy": cfg.strategy,
                "labeler": cfg.labeler,
                "phase": state.phase,
                "iteration": state.iteration,
                "batch_size": cfg.batch_size,
                "required_annotations": runner.required_annotations(),
                "queue_size": len(state.queue),
                "undecided": len(runner.undecided_ids(state)),
            }

    @app.get("/api/tasks/next")
    def tasks_next(annotator: str = "", n: int = 50):
        if not annotator:
            return JSONResponse(
                {"detail": "annotator query parameter is required"}, status_code=400
            )
        if n < 1 or n > 500:
            return JSONResponse(
                {"detail": "n must be between 1 and 500"}, status_code=400
            )
        with lock:
            need = runner.required_annotations()
            answered: dict[str, set[str]] = {}
            for rec in state.pending_records:
                answered.setdefault(rec.doc_id, set()).add(rec.annotator)
            pending = [
                t["doc_id"]
                for t in state.queue
                if annotator not in answered.get(t["doc_id"], set())
                and len(answered.get(t["doc_id"], set())) < need
            ]
            batch = pending[:n]
            tasks = [
                {
                    "doc_id": doc_id,
                    "text": runner.corpus.get(doc_id).text,
                    "questions": questions,
                }
                for doc_id in batch
            ]
            if cfg.labeler == "human" and tasks:
                checks = [
                    c
                    for c in ATTENTION_CHECKS
                    if c.check_id in runner.attention_keys()
                    and annotator not in answered.get(c.check_id, set())
                ]
                rng = np.random.default_rng(
                    [cfg.seed, zlib.crc32(annotator.encode()), state.iteration]
                )
                for check in checks:
                    pos = int(rng.integers(0, len(tasks) + 1))
                    tasks.insert(
                        pos,
                        {
                            "doc_id": check.check_id,
                            "text": check.text,
                            "questions": questions,
                        },
                    )
            return {
                "annotator": annotator,
                "iteration": state.iteration,
                "phase": state.phase,
                "tasks": tasks,
                "remaining": max(0, len(pending) - len(batch)),
            }

    @app.post("/api/labels")
    async def post_labels(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse(
                {
                    "detail": "malformed annotation records",
                    "errors": [
                        {"index": None, "field": None, "error": "body is not valid JSON"}
                    ],
                },
                status_code=400,
            )
        errors = _record_errors(payload, cfg.classes)
        if errors:
            return JSONResponse(
                {"detail": "malformed annotation records", "errors": errors},
                status_code=400,
            )
        records = [
            AnnotationRecord(item["doc_id"], item["annotator"], dict(item["answers"]))
            for item in payload
        ]
        with lock:
            try:
                runner.submit_records(state, records)
            except KeyError as exc:
                return JSONResponse({"detail": str(exc.args[0])}, status_code=409)
            _persist()
            return {
                "accepted": len(records),
                "undecided": len(runner.undecided_ids(state)),
            }

    @app.get("/api/metrics")
    def metrics() -> Response:
        with lock:
            body = metrics_report_json(state.metrics)
        return Response(content=body, media_type="application/json")

    @app.get("/api/iterations")
    def iterations() -> dict:
        with lock:
            queried: dict[int, int] = {}
            for entry in state.batch_log:
                queried[entry["iteration"]] = queried.get(entry["iteration"], 0) + 1
            history = []
            for i in range(state.iteration):
                records = [r for r in state.metrics if r.iteration == i]
                history.append(
                    {
                        "iteration": i,
                        "queried": queried.get(i, 0),
                        "errors": [e for e in state.errors if e["iteration"] == i],
                        "metrics": [
                            {
                                "category": r.category,
                                "ap": r.ap,
                                "ap_se": r.ap_se,
                                "e_mid": r.e_mid,
                                "diversity": r.diversity,
                                "converged": r.converged,
                            }
                            for r in records
                        ],
                    }
                )
            return {
                "iteration": state.iteration,
                "phase": state.phase,
                "history": history,
            }

    @app.post("/api/iterations/advance")
    def advance():
        with lock:
            undecided = runner.undecided_ids(state)
            try:
                if state.phase == "init_labeling":
                    if cfg.labeler == "oracle":
                        runner.label_pending_with_oracle(state)
                    elif undecided:
                        return JSONResponse(
                            {
                                "detail": "undecided labels remain",
                                "undecided": len(undecided),
                            },
                            status_code=409,
                        )
                    runner.complete_init(state)
                elif state.phase == "ready":
                    runner.begin_iteration(state)
                    if cfg.labeler == "oracle":
                        runner.label_pending_with_oracle(state)
                        runner.complete_iteration(state)
                elif state.phase == "labeling":
                    if cfg.labeler == "oracle":
                        runner.label_pending_with_oracle(state)
                    elif undecided:
                        return JSONResponse(
                            {
                                "detail": "undecided labels remain",
                                "undecided": len(undecided),
                            },
                            status_code=409,
                        )
                    runner.complete_iteration(state)
            except ValueError as exc:
                return JSONResponse({"detail": str(exc)}, status_code=409)
            _persist()
            return {
                "iteration": state.iteration,
                "phase": state.phase,
                "queue_size": len(state.queue),
            }

    return app


def serve(
    runner: ExperimentRunner,
    state: ExperimentState,
    host: str = "127.0.0.1",
    port: int = 8000,
) -> None:
    """Run the API under uvicorn; a busy port raises at startup."""
    import uvicorn

    uvicorn.run(create_app(runner, state), host=host, port=port, log_level="warning")
