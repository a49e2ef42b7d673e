"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class IngestResponse(BaseModel):
    streams: int
    samples: int
    gaps: int
    contactsInstalled: int
    edgesCreated: int
    edgesExpired: int
    parseErrors: int
    diagnostics: list[str] = Field(default_factory=list)


class TraceRequest(BaseModel):
    infected: list[str] = Field(min_length=1, description="user ids, e.g. ['P2', 'P6']")
    levels: int = Field(default=3, ge=1)


class TraceEntryModel(BaseModel):
    user: str
    level: int
    via: str


class PathwayEdge(BaseModel):
    source: str
    target: str


class TraceResponse(BaseModel):
    infected: list[str]
    entries: list[TraceEntryModel]
    edges: list[PathwayEdge]
    new_edges: list[PathwayEdge]


class ClusterModel(BaseModel):
    root: str
    size: int
    members: list[str]
    infected: list[str]
    suspected: list[str]
    edges: list[PathwayEdge]


class ClustersResponse(BaseModel):
    clusters: list[ClusterModel]


class StatsResponse(BaseModel):
    population: int
    avg_degree: int
    window_slots: int
    now_slot: int
    edges: int
    pool_cells: int
    vacant_cells: int
    infected: int
    suspected: int
    epoch: int
    space_estimate_bits: float
    space_estimate_gb: float
    covid_reference_gb: float


class SweepResponse(BaseModel):
    edges_expired: int


class HealthResponse(BaseModel):
    status: str
    data_dir: str
    now_slot: int
