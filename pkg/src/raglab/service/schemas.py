"""Request/response models for the service.

File paths in requests are resolved on the machine the service runs on;
with the default in-process client that is the caller's own filesystem.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class ProvidersModel(BaseModel):
    kind: str = "stub"
    embed_base_url: str = ""
    embed_model: str = "all-MiniLM-L6-v2"
    embed_dim: int = 384
    lm_base_url: str = ""
    lm_model: str = "stub-lm"
    api_key_env: str = "RAGLAB_API_KEY"
    timeout: float = 60.0
    max_in_flight: int = 4


class HealthResponse(BaseModel):
    status: str
    version: str


class IngestRequest(BaseModel):
    kb_path: str
    level: int = 3
    chunk_size: int = 64
    index_path: str
    seed: int = 0
    providers: ProvidersModel = Field(default_factory=ProvidersModel)


class IngestResponse(BaseModel):
    index_path: str
    documents: int
    chunks: int
    dim: int


class ExpandRequest(BaseModel):
    query: str
    n: int = 5
    max_tokens: int = 64
    seed: int = 0
    providers: ProvidersModel = Field(default_factory=ProvidersModel)


class ExpandResponse(BaseModel):
    original_query: str
    expansions: list[str]
    queries: list[str]
    raw_reply: str


class PlanModel(BaseModel):
    mode: str = "baseline"
    k_docs: int = 2
    filter_size: int = 15
    n_sentences: int = 20
    icl_n: int = 1
    contrastive: bool = False
    expand_first: bool = False


class ScoredHitModel(BaseModel):
    item_id: str
    score: float


class RetrieveRequest(BaseModel):
    query: str
    index_path: str = ""
    kb_path: str = ""
    kb_level: int = 3
    chunk_size: int = 64
    plan: PlanModel = Field(default_factory=PlanModel)
    expansion_count: int = 5
    seed: int = 0
    providers: ProvidersModel = Field(default_factory=ProvidersModel)


class RetrieveResponse(BaseModel):
    query: str
    queries_used: list[str]
    document_hits: list[ScoredHitModel]
    preliminary_hits: list[ScoredHitModel] | None
    sentence_hits: list[ScoredHitModel] | None
    context_texts: list[str]
    context_ids: list[str]


class ICLExampleModel(BaseModel):
    example_id: str
    question: str
    correct_answer: str
    incorrect_answer: str | None = None


class PromptRequest(BaseModel):
    system_prompt: str = "HelpV1"
    question: str
    context_texts: list[str] = Field(default_factory=list)
    icl_examples: list[ICLExampleModel] = Field(default_factory=list)
    contrastive: bool = False
    answer_in_english: bool = False


class PromptResponse(BaseModel):
    system: str
    body: str
    rendered: str
    variant: str


class RunRequest(BaseModel):
    config: dict


class RunResponse(BaseModel):
    result: dict


class CompareRequest(BaseModel):
    runs: list[dict]
    baseline_name: str
    seed: int = 0


class CompareResponse(BaseModel):
    table: dict


class ReportRequest(BaseModel):
    table: dict
    format: str = "markdown"


class ReportResponse(BaseModel):
    content: str
    format: str
