"""HTTP surface of the annotation service (FastAPI + pydantic models)."""

from __future__ import annotations

from fastapi import FastAPI, Header, HTTPException, Query
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .core import AnnotationService, BannedWorkerError, ServiceError, Task


class ProfileModel(BaseModel):
    target_id: str
    name: str
    description: str
    followers: int
    followees: int
    statuses: int
    profile_url: str
    image_url: str
    sample_tweets: list[str] = Field(min_length=5, max_length=5)
    tweets_padded: bool


class TaskModel(BaseModel):
    task_id: str
    run: int
    question_id: int
    question: str
    left: ProfileModel
    right: ProfileModel
    proxy: ProfileModel
    lease_expires: float


class BatchModel(BaseModel):
    worker_id: str
    tasks: list[TaskModel]


class ResponseItem(BaseModel):
    task_id: str
    choice: str
    shown_left: str | None = None


class ResponsesRequest(BaseModel):
    worker_id: str
    responses: list[ResponseItem]


class AckModel(BaseModel):
    task_id: str
    status: str
    reason: str | None = None


class RankingEntry(BaseModel):
    target: str
    theta: float
    rank: int
    percentile: float


class StatusModel(BaseModel):
    run: int
    comparisons_total: int
    queue_depth: int
    open_partitions: int
    runs_requested: int
    runs_completed: int


class RunRequest(BaseModel):
    runs: int = Field(ge=1)


class RunAck(BaseModel):
    runs_requested: int


def create_app(service: AnnotationService) -> FastAPI:
    app = FastAPI(title="influencekit annotation service")
    app.state.service = service

    def profile_model(target_id: str) -> ProfileModel:
        p = service.profiles[target_id]
        return ProfileModel(
            target_id=p.target_id,
            name=p.name,
            description=p.description,
            followers=p.followers,
            followees=p.followees,
            statuses=p.statuses,
            profile_url=p.profile_url,
            image_url=p.image_url,
            sample_tweets=list(p.sample_tweets),
            tweets_padded=p.tweets_padded,
        )

    def task_model(task: Task, expires: float) -> TaskModel:
        return TaskModel(
            task_id=task.task_id,
            run=task.run,
            question_id=task.question_id,
            question=service.state.questions[task.question_id - 1],
            left=profile_model(task.left),
            right=profile_model(task.right),
            proxy=profile_model(task.proxy),
            lease_expires=expires,
        )

    @app.get("/api/batch", response_model=BatchModel)
    def get_batch(worker_id: str = Query(min_length=1)) -> BatchModel:
        try:
            batch = service.serve_batch(worker_id)
        except BannedWorkerError:
            return JSONResponse(status_code=403, content={"reason": "banned"})  # type: ignore[return-value]
        return BatchModel(worker_id=worker_id, tasks=[task_model(t, exp) for t, exp in batch])

    @app.post("/api/responses", response_model=list[AckModel])
    def post_responses(request: ResponsesRequest) -> list[AckModel]:
        acks = []
        for item in request.responses:
            result = service.record_response(
                request.worker_id, item.task_id, item.choice, item.shown_left
            )
            acks.append(AckModel(**result))
        return acks

    @app.get("/api/ranking", response_model=list[RankingEntry])
    def get_ranking() -> list[RankingEntry]:
        model = service.ranking()
        if model is None:
            return []
        ordered = sorted(model.theta, key=lambda t: (-model.theta[t], t))
        n = len(ordered)
        return [
            RankingEntry(target=t, theta=model.theta[t], rank=i, percentile=i / n)
            for i, t in enumerate(ordered, start=1)
        ]

    @app.get("/api/status", response_model=StatusModel)
    def get_status() -> StatusModel:
        return StatusModel(**service.status())

    @app.post("/api/admin/run", response_model=RunAck)
    def post_run(request: RunRequest, x_admin_token: str = Header(default="")) -> RunAck:
        if not service.config.admin_token or x_admin_token != service.config.admin_token:
            raise HTTPException(status_code=403, detail="bad admin token")
        try:
            total = service.request_runs(request.runs)
        except ServiceError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return RunAck(runs_requested=total)

    return app
