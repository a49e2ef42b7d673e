"""HTTP front end: the engine behind a small JSON API.

The service owns the data store for its whole lifetime (taking the writer
lock), so it is the one writer while ingest requests and trace queries come
and go. Endpoints mirror the CLI verbs: POST a wire stream to /ingest, query
/trace, /clusters and /stats.
"""

from __future__ import annotations

import os
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException

from csketch.service.models import (
    ClusterModel,
    ClustersResponse,
    HealthResponse,
    IngestResponse,
    PathwayEdge,
    StatsResponse,
    SweepResponse,
    TraceEntryModel,
    TraceRequest,
    TraceResponse,
)
from csketch.store import DataStore, IngestReport, StoreError
from csketch.tracer import TraceError
from csketch.wire import format_user, parse_user

DATA_ENV = "CSKETCH_DATA"


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get(DATA_ENV, "./csketch-data"))

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        try:
            app.state.store = DataStore.open(data_dir)
        except StoreError as exc:
            raise RuntimeError(str(exc))
        try:
            yield
        finally:
            app.state.store.close()

    app = FastAPI(title="csketch", version="0.1.0", lifespan=lifespan)

    def store() -> DataStore:
        return app.state.store

    @app.get("/health", response_model=HealthResponse)
    def health():
        s = store()
        return HealthResponse(status="ok", data_dir=str(s.data_dir), now_slot=s.graph.now)

    @app.post("/ingest", response_model=IngestResponse)
    def ingest(body: bytes = Body(..., media_type="text/plain")):
        report = IngestReport()
        s = store()
        s.ingest_stream(body, "http", report)
        if s.sweep_policy == "after-ingest":
            report.edges_expired = s.graph.expire()
        s.save()
        return IngestResponse(**report.to_dict())

    @app.post("/trace", response_model=TraceResponse)
    def trace(request: TraceRequest):
        try:
            infected = [parse_user(u) for u in request.infected]
            result = store().trace(infected, request.levels)
        except (TraceError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return TraceResponse(
            infected=[format_user(u) for u in result["infected"]],
            entries=[
                TraceEntryModel(
                    user=format_user(e["user"]), level=e["level"], via=format_user(e["via"])
                )
                for e in result["entries"]
            ],
            edges=[PathwayEdge(source=format_user(a), target=format_user(b)) for a, b in result["edges"]],
            new_edges=[
                PathwayEdge(source=format_user(a), target=format_user(b))
                for a, b in result["new_edges"]
            ],
        )

    @app.get("/clusters", response_model=ClustersResponse)
    def clusters():
        return ClustersResponse(
            clusters=[
                ClusterModel(
                    root=format_user(c["root"]),
                    size=c["size"],
                    members=[format_user(u) for u in c["members"]],
                    infected=[format_user(u) for u in c["infected"]],
                    suspected=[format_user(u) for u in c["suspected"]],
                    edges=[
                        PathwayEdge(source=format_user(a), target=format_user(b))
                        for a, b in c["edges"]
                    ],
                )
                for c in store().clusters()
            ]
        )

    @app.get("/stats", response_model=StatsResponse)
    def stats():
        return StatsResponse(**store().stats())

    @app.post("/sweep", response_model=SweepResponse)
    def sweep():
        return SweepResponse(edges_expired=store().sweep())

    return app
