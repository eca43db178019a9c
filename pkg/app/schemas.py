from typing import Literal

from pydantic import BaseModel, Field


class CompletionTask(BaseModel):
    id: str = Field(min_length=1)
    repo_root: str
    target_file: str = Field(min_length=1)
    line: int = Field(ge=1)
    column: int = Field(ge=0)
    ground_truth: str = Field(min_length=1)


class TaskRecord(BaseModel):
    id: str
    prediction: str = ""
    raw_completion: str = ""
    em: Literal[0, 1] = 0
    es: float = Field(default=0.0, ge=0.0, le=100.0)
    prompt_tokens: int = Field(default=0, ge=0)
    truncated: bool = False
    segments_dropped: int = Field(default=0, ge=0)
    latency_seconds: float = Field(default=0.0, ge=0.0)
    error: str | None = None


class Aggregates(BaseModel):
    count: int = Field(ge=0)
    errors: int = Field(default=0, ge=0)
    em: float = Field(ge=0.0, le=100.0)
    es: float = Field(ge=0.0, le=100.0)
    mean_prompt_tokens: float = Field(default=0.0, ge=0.0)
    median_prompt_tokens: float = Field(default=0.0, ge=0.0)
    mean_latency_seconds: float = Field(default=0.0, ge=0.0)
    tasks_per_second: float = Field(default=0.0, ge=0.0)


class ReportMeta(BaseModel):
    strategy: str
    template_family: str
    model_max_length: int = Field(gt=0)
    backend: str
    app_version: str
    created_at: str


class EvalReport(BaseModel):
    meta: ReportMeta
    aggregates: Aggregates
    records: list[TaskRecord] = Field(default_factory=list)


class HitDiff(BaseModel):
    gained: int = Field(ge=0)
    lost: int = Field(ge=0)
    net: int
    compared: int = Field(ge=0)


class ReplayRecord(BaseModel):
    prompt_sha256: str = Field(min_length=64, max_length=64)
    completion: str


class CachedEmbedding(BaseModel):
    key: str
    provider_id: str
    model_id: str
    vector: list[float] = Field(min_length=1)


class IndexFunctionRecord(BaseModel):
    name: str
    qualified_name: str
    header: list[int] = Field(min_length=4, max_length=4)
    body: list[int] = Field(min_length=4, max_length=4)


class IndexClassRecord(BaseModel):
    name: str
    qualified_name: str
    header: list[int] = Field(min_length=4, max_length=4)
    attributes: list[list[int]] = Field(default_factory=list)
    methods: list[IndexFunctionRecord] = Field(default_factory=list)


class IndexRecord(BaseModel):
    path: str
    functions: list[IndexFunctionRecord] = Field(default_factory=list)
    classes: list[IndexClassRecord] = Field(default_factory=list)
    degraded: bool = False


class IndexSummary(BaseModel):
    root: str
    files: int = Field(ge=0)
    functions: int = Field(ge=0)
    classes: int = Field(ge=0)
    failures: int = Field(ge=0)


class PlanCurrent(BaseModel):
    path: str
    prefix_len: int = Field(ge=0)
    suffix_len: int = Field(ge=0)


class PlanOtherFile(BaseModel):
    path: str
    score: float
    render_len: int = Field(ge=0)


class PlanDump(BaseModel):
    strategy: str
    current: PlanCurrent
    dependency: list[str] = Field(default_factory=list)
    other: list[PlanOtherFile] = Field(default_factory=list)


class DependencyDump(BaseModel):
    focal: str
    levels: dict[str, list[str]]
    remainder: list[str] = Field(default_factory=list)


class LevelLengthStats(BaseModel):
    level: str
    count: int = Field(ge=0)
    median: float = Field(ge=0.0)
    mean: float = Field(ge=0.0)


class PromptLengthReport(BaseModel):
    template_family: str
    tasks: int = Field(ge=0)
    levels: list[LevelLengthStats] = Field(default_factory=list)
