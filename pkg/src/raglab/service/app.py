"""Service routes. Every endpoint is stateless: indexes and knowledge bases
are loaded per request, which keeps the app safe to run with any worker
count at the cost of repeated loads. Callers that need throughput should
ingest once and point retrieval at the saved index file."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from ..expansion import expand_query
from ..harness import (
    ExperimentConfig,
    ExperimentError,
    ProviderSettings,
    ResultsTable,
    RunResult,
    build_providers,
    compare_runs,
    render_report,
    run_experiment,
)
from ..corpus import load_knowledge_base
from ..index import VectorIndex
from ..prompt import (
    render_context_prompt,
    render_icl_prompt,
    render_multilingual_suffix,
    render_system,
)
from ..providers import RemoteProviderError
from ..retrieval import ICLExample, RetrievalPlan, build_chunk_index, execute_plan
from . import schemas


def _providers(model: schemas.ProvidersModel, seed: int):
    settings = ProviderSettings(**model.model_dump())
    return build_providers(settings, seed)


def _hits(hits) -> list[schemas.ScoredHitModel] | None:
    if hits is None:
        return None
    return [schemas.ScoredHitModel(item_id=h.item_id, score=h.score)
            for h in hits]


def create_app() -> FastAPI:
    app = FastAPI(title="raglab", version=__version__)

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):  # noqa: ARG001
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(KeyError)
    async def _key_error(request, exc):  # noqa: ARG001
        return JSONResponse(status_code=400,
                            content={"detail": f"missing field: {exc}"})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/ingest", response_model=schemas.IngestResponse)
    def ingest(request: schemas.IngestRequest):
        embedder, _ = _providers(request.providers, request.seed)
        try:
            kb = load_knowledge_base(request.kb_path, request.level)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        index = build_chunk_index(kb, request.chunk_size, embedder)
        index.save(request.index_path)
        return schemas.IngestResponse(
            index_path=request.index_path, documents=len(kb.documents),
            chunks=len(index), dim=index.dim)

    @app.post("/expand", response_model=schemas.ExpandResponse)
    def expand(request: schemas.ExpandRequest):
        _, lm = _providers(request.providers, request.seed)
        result = expand_query(lm, request.query, n=request.n,
                              max_tokens=request.max_tokens)
        return schemas.ExpandResponse(
            original_query=result.original_query,
            expansions=list(result.expansions),
            queries=list(result.queries),
            raw_reply=result.raw_reply)

    @app.post("/retrieve", response_model=schemas.RetrieveResponse)
    def retrieve(request: schemas.RetrieveRequest):
        plan = RetrievalPlan(**request.plan.model_dump())
        if plan.mode == "icl":
            raise HTTPException(
                status_code=400,
                detail="icl retrieval needs an evaluation dataset; "
                       "use the run endpoint")
        embedder, lm = _providers(request.providers, request.seed)
        if request.index_path:
            try:
                index = VectorIndex.load(request.index_path)
            except FileNotFoundError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        elif request.kb_path:
            try:
                kb = load_knowledge_base(request.kb_path, request.kb_level)
            except FileNotFoundError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            index = build_chunk_index(kb, request.chunk_size, embedder)
        else:
            raise HTTPException(status_code=400,
                                detail="need index_path or kb_path")
        execution = execute_plan(
            request.query, plan, embedder=embedder, chunk_index=index, lm=lm,
            expansion_count=request.expansion_count, seed=request.seed)
        outcome = execution.outcome
        return schemas.RetrieveResponse(
            query=outcome.query,
            queries_used=list(outcome.queries_used),
            document_hits=_hits(outcome.document_hits),
            preliminary_hits=_hits(outcome.preliminary_hits),
            sentence_hits=_hits(outcome.sentence_hits),
            context_texts=list(outcome.context_texts),
            context_ids=list(outcome.context_ids))

    @app.post("/prompt", response_model=schemas.PromptResponse)
    def prompt(request: schemas.PromptRequest):
        system = render_system(request.system_prompt)
        if request.icl_examples:
            examples = [ICLExample(**e.model_dump())
                        for e in request.icl_examples]
            bundle = render_icl_prompt(system, examples, request.question,
                                       contrastive=request.contrastive)
        else:
            bundle = render_context_prompt(
                system, tuple(request.context_texts), request.question)
        if request.answer_in_english:
            bundle = render_multilingual_suffix(bundle)
        return schemas.PromptResponse(
            system=bundle.system, body=bundle.body, rendered=bundle.rendered,
            variant=bundle.variant)

    @app.post("/run", response_model=schemas.RunResponse)
    def run(request: schemas.RunRequest):
        config = ExperimentConfig.from_dict(request.config)
        try:
            result = run_experiment(config)
        except (ExperimentError, FileNotFoundError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except RemoteProviderError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return schemas.RunResponse(result=result.to_dict())

    @app.post("/compare", response_model=schemas.CompareResponse)
    def compare(request: schemas.CompareRequest):
        runs = [RunResult.from_dict(r) for r in request.runs]
        table = compare_runs(runs, request.baseline_name, seed=request.seed)
        return schemas.CompareResponse(table=table.to_dict())

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(request: schemas.ReportRequest):
        table = ResultsTable.from_dict(request.table)
        content = render_report(table, request.format)
        return schemas.ReportResponse(content=content, format=request.format)

    return app
