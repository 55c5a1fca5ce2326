"""Experiment harness: dataset loading, per-item pipeline execution with a
bounded worker pool, run comparison with paired significance, and report
emission in json, markdown, and csv.

A run is fully described by an ExperimentConfig. The config's canonical
serialization is hashed and the hash embedded in every emitted report, so
equal hashes plus stub providers imply byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .corpus import (
    apply_multilingual_mix,
    load_knowledge_base,
    load_translations,
)
from .generation import StrideConfig, generate_fixed, generate_with_stride
from .metrics import (
    ItemScores,
    MetricReport,
    best_reference_score,
    embedding_cosine_similarity,
    mauve,
    paired_bootstrap,
    rouge_l,
    rouge_n,
)
from .prompt import (
    render_context_prompt,
    render_icl_prompt,
    render_multilingual_suffix,
    render_system,
    system_prompt_names,
)
from .providers import (
    RemoteConfig,
    RemoteEmbedder,
    RemoteLM,
    StubEmbedder,
    StubLM,
)
from .retrieval import RetrievalPlan, build_chunk_index, build_icl_index, execute_plan

logger = logging.getLogger(__name__)

__all__ = [
    "EvalItem",
    "ProviderSettings",
    "ExperimentConfig",
    "ExperimentError",
    "RunResult",
    "TableRow",
    "ResultsTable",
    "load_truthfulqa",
    "load_mmlu",
    "config_hash",
    "build_providers",
    "run_experiment",
    "compare_runs",
    "render_report",
    "emit_report",
    "COMPARED_METRICS",
]

COMPARED_METRICS = ("rouge_1", "rouge_2", "rouge_l", "ecs")
SIGNIFICANCE_LEVEL = 0.05
FAILURE_BUDGET = 0.10


@dataclass(frozen=True)
class EvalItem:
    """One evaluation question with its reference answers."""

    item_id: str
    question: str
    correct_answers: tuple[str, ...]
    incorrect_answers: tuple[str, ...] = ()
    best_answer: str | None = None
    subject: str | None = None

    def __post_init__(self):
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        if not self.question.strip():
            raise ValueError(f"item {self.item_id}: empty question")
        if not self.correct_answers:
            raise ValueError(f"item {self.item_id}: needs >= 1 correct answer")

    def references(self) -> tuple[str, ...]:
        """Reference answers for scoring: best answer first, then the rest,
        deduplicated."""
        seen = []
        for text in ((self.best_answer,) if self.best_answer else ()) + self.correct_answers:
            if text not in seen:
                seen.append(text)
        return tuple(seen)


def _read_jsonl(path: str | Path):
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise ValueError(f"{path}:{line_no}: record is not an object")
            records.append((line_no, record))
    if not records:
        raise ValueError(f"{path}: empty dataset")
    return records


def _require(record: dict, key: str, kind, path, line_no: int):
    if key not in record:
        raise ValueError(f"{path}:{line_no}: missing field {key!r}")
    value = record[key]
    if not isinstance(value, kind):
        raise ValueError(
            f"{path}:{line_no}: field {key!r} must be {kind.__name__}")
    return value


def load_truthfulqa(path: str | Path) -> list[EvalItem]:
    """Load the open-ended QA snapshot: one JSON object per line with id,
    question, best_answer, correct_answers, incorrect_answers."""
    items: list[EvalItem] = []
    seen: set[str] = set()
    for line_no, record in _read_jsonl(path):
        item_id = _require(record, "id", str, path, line_no)
        if item_id in seen:
            raise ValueError(f"{path}:{line_no}: duplicate id {item_id!r}")
        seen.add(item_id)
        question = _require(record, "question", str, path, line_no)
        best = _require(record, "best_answer", str, path, line_no)
        correct = _require(record, "correct_answers", list, path, line_no)
        incorrect = _require(record, "incorrect_answers", list, path, line_no)
        for name, values in (("correct_answers", correct),
                             ("incorrect_answers", incorrect)):
            if not all(isinstance(v, str) for v in values):
                raise ValueError(
                    f"{path}:{line_no}: {name} must contain only strings")
        if not correct:
            raise ValueError(f"{path}:{line_no}: correct_answers is empty")
        items.append(EvalItem(
            item_id=item_id, question=question, best_answer=best,
            correct_answers=tuple(correct), incorrect_answers=tuple(incorrect)))
    return items


def load_mmlu(path: str | Path, per_subject_cap: int = 32) -> list[EvalItem]:
    """Load the multiple-choice snapshot, keeping the first per_subject_cap
    questions of each subject in file order. The keyed choice becomes the
    single correct answer; the remaining choices become incorrect answers."""
    if per_subject_cap < 1:
        raise ValueError("per_subject_cap must be >= 1")
    items: list[EvalItem] = []
    seen: set[str] = set()
    per_subject: dict[str, int] = {}
    for line_no, record in _read_jsonl(path):
        item_id = _require(record, "id", str, path, line_no)
        if item_id in seen:
            raise ValueError(f"{path}:{line_no}: duplicate id {item_id!r}")
        seen.add(item_id)
        subject = record.get("subject")
        if not isinstance(subject, str) or not subject:
            raise ValueError(f"{path}:{line_no}: unknown subject field")
        question = _require(record, "question", str, path, line_no)
        choices = _require(record, "choices", list, path, line_no)
        answer_index = _require(record, "answer_index", int, path, line_no)
        if isinstance(answer_index, bool):
            raise ValueError(f"{path}:{line_no}: answer_index must be int")
        if len(choices) < 2 or not all(isinstance(c, str) for c in choices):
            raise ValueError(f"{path}:{line_no}: choices must be >= 2 strings")
        if not 0 <= answer_index < len(choices):
            raise ValueError(f"{path}:{line_no}: answer_index out of range")
        if per_subject.get(subject, 0) >= per_subject_cap:
            continue
        per_subject[subject] = per_subject.get(subject, 0) + 1
        correct = choices[answer_index]
        incorrect = tuple(c for i, c in enumerate(choices) if i != answer_index)
        items.append(EvalItem(
            item_id=item_id, question=question, correct_answers=(correct,),
            incorrect_answers=incorrect, best_answer=correct, subject=subject))
    return items


@dataclass(frozen=True)
class ProviderSettings:
    """Where embeddings and completions come from. kind "stub" runs fully
    offline; "remote" talks to OpenAI-compatible endpoints, reading the API
    key from the named environment variable at call time (keys are never
    serialized)."""

    kind: str = "stub"
    embed_base_url: str = ""
    embed_model: str = "all-MiniLM-L6-v2"
    embed_dim: int = 384
    lm_base_url: str = ""
    lm_model: str = "stub-lm"
    api_key_env: str = "RAGLAB_API_KEY"
    timeout: float = 60.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in ("stub", "remote"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "remote" and not (self.embed_base_url and self.lm_base_url):
            raise ValueError("remote providers need both base URLs")


_DATASET_KINDS = ("truthfulqa", "mmlu")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment run."""

    name: str
    dataset_path: str
    dataset_kind: str = "truthfulqa"
    per_subject_cap: int = 32
    kb_path: str = ""
    kb_level: int = 3
    chunk_size: int = 64
    system_prompt: str = "HelpV1"
    rag_enabled: bool = True
    plan: RetrievalPlan = field(default_factory=RetrievalPlan)
    stride: StrideConfig = field(default_factory=StrideConfig)
    multilingual_ratio: float = 0.0
    translations_path: str = ""
    answer_in_english: bool = False
    expansion_count: int = 5
    incorrect_rule: str = "first"
    max_items: int = 0
    workers: int = 4
    seed: int = 0
    providers: ProviderSettings = field(default_factory=ProviderSettings)
    output_path: str = ""

    def __post_init__(self):
        if not self.name:
            raise ValueError("config needs a name")
        if self.dataset_kind not in _DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.dataset_kind!r}")
        if self.system_prompt not in system_prompt_names():
            raise ValueError(f"unknown system prompt {self.system_prompt!r}")
        if not 0.0 <= self.multilingual_ratio <= 1.0:
            raise ValueError("multilingual_ratio must be in [0, 1]")
        if self.multilingual_ratio > 0 and not self.translations_path:
            raise ValueError("multilingual mix needs translations_path")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.max_items < 0 or self.workers < 1:
            raise ValueError("max_items must be >= 0 and workers >= 1")
        if self.stride.stride is not None:
            # the stride loop refreshes document context mid-generation;
            # that only makes sense for plain document retrieval
            if not self.rag_enabled or self.plan.mode != "baseline":
                raise ValueError("stride runs require rag_enabled and a "
                                 "baseline retrieval plan")
        if self.rag_enabled and self.plan.mode != "icl" and not self.kb_path:
            raise ValueError(f"config {self.name!r}: retrieval needs kb_path")

    def to_dict(self) -> dict:
        plan = {f.name: getattr(self.plan, f.name) for f in fields(self.plan)}
        stride = {f.name: getattr(self.stride, f.name)
                  for f in fields(self.stride)}
        providers = {f.name: getattr(self.providers, f.name)
                     for f in fields(self.providers)}
        data = {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in ("plan", "stride", "providers")}
        data["plan"] = plan
        data["stride"] = stride
        data["providers"] = providers
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        plan = RetrievalPlan(**data.pop("plan", {}))
        stride = StrideConfig(**data.pop("stride", {}))
        providers = ProviderSettings(**data.pop("providers", {}))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(plan=plan, stride=stride, providers=providers, **data)


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical config serialization."""
    return hashlib.sha256(
        canonical_json(config.to_dict()).encode("utf-8")).hexdigest()


def build_providers(settings: ProviderSettings, seed: int = 0):
    """Instantiate (embedder, lm) from provider settings."""
    if settings.kind == "stub":
        return (StubEmbedder(dim=settings.embed_dim, seed=seed,
                             model=settings.embed_model),
                StubLM(seed=seed, model=settings.lm_model))
    api_key = os.environ.get(settings.api_key_env, "")
    embed_cfg = RemoteConfig(
        base_url=settings.embed_base_url, model=settings.embed_model,
        api_key=api_key, timeout=settings.timeout,
        max_in_flight=settings.max_in_flight)
    lm_cfg = RemoteConfig(
        base_url=settings.lm_base_url, model=settings.lm_model,
        api_key=api_key, timeout=settings.timeout,
        max_in_flight=settings.max_in_flight)
    return RemoteEmbedder(embed_cfg), RemoteLM(lm_cfg)


class ExperimentError(RuntimeError):
    """Raised when a run cannot produce a trustworthy report."""


@dataclass(frozen=True)
class RunResult:
    """A finished run: the scored report plus enough metadata to audit and
    reproduce it."""

    config: ExperimentConfig
    config_hash: str
    report: MetricReport
    failures: tuple[tuple[str, str], ...]
    item_count: int

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "report": self.report.to_dict(),
            "failures": [list(pair) for pair in self.failures],
            "item_count": self.item_count,
        }

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), indent=2, sort_keys=True,
                           ensure_ascii=False) + "\n").encode("utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        return cls(
            config=ExperimentConfig.from_dict(data["config"]),
            config_hash=data["config_hash"],
            report=MetricReport.from_dict(data["report"]),
            failures=tuple((f[0], f[1]) for f in data["failures"]),
            item_count=data["item_count"],
        )


def load_dataset(config: ExperimentConfig) -> list[EvalItem]:
    if config.dataset_kind == "truthfulqa":
        items = load_truthfulqa(config.dataset_path)
    else:
        items = load_mmlu(config.dataset_path, config.per_subject_cap)
    if config.max_items:
        items = items[:config.max_items]
    return items


def _score_answer(item: EvalItem, answer: str, embedder) -> ItemScores:
    refs = item.references()
    if not answer.strip():
        return ItemScores(item.item_id, 0.0, 0.0, 0.0, 0.0)
    return ItemScores(
        item_id=item.item_id,
        rouge_1=best_reference_score(lambda c, r: rouge_n(c, r, 1), answer, refs),
        rouge_2=best_reference_score(lambda c, r: rouge_n(c, r, 2), answer, refs),
        rouge_l=best_reference_score(rouge_l, answer, refs),
        ecs=best_reference_score(
            lambda c, r: embedding_cosine_similarity(c, r, embedder),
            answer, refs),
    )


def _answer_item(item: EvalItem, config: ExperimentConfig, embedder, lm,
                 chunk_index, icl_index):
    system = render_system(config.system_prompt)
    max_tokens = config.stride.max_tokens

    if not config.rag_enabled:
        bundle = render_context_prompt(system, (), item.question)
        if config.answer_in_english:
            bundle = render_multilingual_suffix(bundle)
        return generate_fixed(bundle, lm, max_tokens, context_ids=())

    if config.stride.stride is not None:
        def renderer(context_texts):
            bundle = render_context_prompt(system, context_texts, item.question)
            if config.answer_in_english:
                bundle = render_multilingual_suffix(bundle)
            return bundle

        return generate_with_stride(
            item.question, chunk_index, embedder, config.plan.k_docs,
            config.stride, lm, renderer)

    execution = execute_plan(
        item.question, config.plan, embedder=embedder, chunk_index=chunk_index,
        icl_index=icl_index, lm=lm, active_example_id=item.item_id,
        expansion_count=config.expansion_count,
        incorrect_rule=config.incorrect_rule, seed=config.seed)
    if config.plan.mode == "icl":
        bundle = render_icl_prompt(system, execution.icl_examples,
                                   item.question,
                                   contrastive=config.plan.contrastive)
        context_ids = tuple(ex.example_id for ex in execution.icl_examples)
    else:
        bundle = render_context_prompt(
            system, execution.outcome.context_texts, item.question)
        context_ids = execution.outcome.context_ids
    if config.answer_in_english:
        bundle = render_multilingual_suffix(bundle)
    return generate_fixed(bundle, lm, max_tokens, context_ids=context_ids)


def _build_indexes(config: ExperimentConfig, items: list[EvalItem], embedder):
    chunk_index = None
    icl_index = None
    if config.rag_enabled and config.plan.mode == "icl":
        records = [
            {
                "example_id": it.item_id,
                "question": it.question,
                "correct_answer": it.best_answer or it.correct_answers[0],
                "incorrect_answers": list(it.incorrect_answers),
            }
            for it in items
        ]
        icl_index = build_icl_index(records, embedder)
    elif config.rag_enabled:
        kb = load_knowledge_base(config.kb_path, config.kb_level)
        if config.multilingual_ratio > 0:
            translations = load_translations(config.translations_path)
            kb = apply_multilingual_mix(kb, config.multilingual_ratio,
                                        config.seed, translations)
        chunk_index = build_chunk_index(kb, config.chunk_size, embedder)
    return chunk_index, icl_index


def run_experiment(config: ExperimentConfig,
                   items: list[EvalItem] | None = None, *,
                   embedder=None, lm=None, trace_sink=None) -> RunResult:
    """Execute one experiment end to end.

    Items run on a bounded worker pool; per-item provider failures are
    recorded rather than fatal, but the run aborts when more than 10% of
    items fail. All aggregation happens after a sort by item_id, so the
    pool size never changes the report.

    trace_sink, when given, receives (item_id, GenerationTrace) for every
    finished item; it is called from worker threads and exists for audits
    and tests.
    """
    if items is None:
        items = load_dataset(config)
    if not items:
        raise ExperimentError("no items to run")
    if embedder is None or lm is None:
        built_embedder, built_lm = build_providers(config.providers, config.seed)
        embedder = embedder or built_embedder
        lm = lm or built_lm

    chunk_index, icl_index = _build_indexes(config, items, embedder)

    answers: dict[str, str] = {}
    failures: list[tuple[str, str]] = []

    def worker(item: EvalItem):
        trace = _answer_item(item, config, embedder, lm, chunk_index,
                             icl_index)
        if trace_sink is not None:
            trace_sink(item.item_id, trace)
        return trace

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(worker, item) for item in items]
        for future, item in zip(futures, items):
            try:
                answers[item.item_id] = future.result().final_text
            except Exception as exc:  # noqa: BLE001 - budgeted failures
                logger.warning("item %s failed: %s", item.item_id, exc)
                failures.append((item.item_id, str(exc)))

    if len(failures) > FAILURE_BUDGET * len(items):
        raise ExperimentError(
            f"{len(failures)}/{len(items)} items failed, over the "
            f"{FAILURE_BUDGET:.0%} budget: {failures[:5]}")

    scored_items = sorted((it for it in items if it.item_id in answers),
                          key=lambda it: it.item_id)
    rows = [_score_answer(it, answers[it.item_id].strip(), embedder)
            for it in scored_items]

    mauve_score = None
    if len(scored_items) >= 2:
        candidates = [answers[it.item_id].strip() or "empty answer"
                      for it in scored_items]
        references = [it.references()[0] for it in scored_items]
        mauve_score = mauve(candidates, references, embedder,
                            seed=config.seed)

    report = MetricReport.from_items(rows, mauve_score=mauve_score)
    return RunResult(
        config=config, config_hash=config_hash(config), report=report,
        failures=tuple(sorted(failures)), item_count=len(items))


@dataclass(frozen=True)
class TableRow:
    name: str
    config_hash: str
    report: MetricReport
    significant: dict

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config_hash": self.config_hash,
            "report": self.report.to_dict(),
            "significant": {k: bool(v)
                            for k, v in sorted(self.significant.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TableRow":
        return cls(name=data["name"], config_hash=data["config_hash"],
                   report=MetricReport.from_dict(data["report"]),
                   significant=dict(data["significant"]))


@dataclass(frozen=True)
class ResultsTable:
    """Cross-run comparison: one row per config, per-metric p-values vs the
    baseline stored on each row's report, flags for p < 0.05."""

    baseline_name: str
    rows: tuple[TableRow, ...]

    def to_dict(self) -> dict:
        return {
            "baseline_name": self.baseline_name,
            "rows": [row.to_dict() for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResultsTable":
        return cls(baseline_name=data["baseline_name"],
                   rows=tuple(TableRow.from_dict(r) for r in data["rows"]))


def compare_runs(runs, baseline_name: str, seed: int = 0) -> ResultsTable:
    """Paired bootstrap of every run against the named baseline, one test
    per metric. Requires identical item sets across runs."""
    runs = list(runs)
    by_name = {run.config.name: run for run in runs}
    if baseline_name not in by_name:
        raise ValueError(f"baseline {baseline_name!r} not among runs")
    baseline = by_name[baseline_name]
    base_ids = [row.item_id for row in
                sorted(baseline.report.per_item, key=lambda r: r.item_id)]
    rows = []
    for run in runs:
        ids = [row.item_id for row in
               sorted(run.report.per_item, key=lambda r: r.item_id)]
        if ids != base_ids:
            raise ValueError(
                f"item-set mismatch between {run.config.name!r} and baseline")
        p_values = {
            metric: paired_bootstrap(run.report.metric_vector(metric),
                                     baseline.report.metric_vector(metric),
                                     seed=seed)
            for metric in COMPARED_METRICS
        }
        significant = {m: p < SIGNIFICANCE_LEVEL for m, p in p_values.items()}
        rows.append(TableRow(
            name=run.config.name, config_hash=run.config_hash,
            report=replace(run.report, significance=p_values),
            significant=significant))
    return ResultsTable(baseline_name=baseline_name, rows=tuple(rows))


def _format_score(value, bold: bool) -> str:
    if value is None:
        return "n/a"
    text = f"{value:.6f}"
    return f"**{text}**" if bold else text


def _markdown_report(table: ResultsTable) -> str:
    lines = [
        "| Config | R1 | R2 | RL | ECS | Mauve | FActScore |",
        "| --- | --- | --- | --- | --- | --- | --- |",
    ]
    for row in table.rows:
        report = row.report
        cells = [
            row.name,
            _format_score(report.mean_rouge_1, row.significant.get("rouge_1", False)),
            _format_score(report.mean_rouge_2, row.significant.get("rouge_2", False)),
            _format_score(report.mean_rouge_l, row.significant.get("rouge_l", False)),
            _format_score(report.mean_ecs, row.significant.get("ecs", False)),
            _format_score(report.mauve_score, False),
            "unsupported",
        ]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    lines.append(f"Baseline: {table.baseline_name}")
    lines.append("")
    lines.append("Config hashes:")
    for row in table.rows:
        lines.append(f"- {row.name}: {row.config_hash}")
    return "\n".join(lines) + "\n"


def _csv_report(table: ResultsTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["config", "rouge_1", "rouge_2", "rouge_l", "ecs",
                     "mauve", "factscore", "config_hash"])
    for row in table.rows:
        report = row.report
        writer.writerow([
            row.name,
            f"{report.mean_rouge_1:.6f}",
            f"{report.mean_rouge_2:.6f}",
            f"{report.mean_rouge_l:.6f}",
            f"{report.mean_ecs:.6f}",
            "n/a" if report.mauve_score is None else f"{report.mauve_score:.6f}",
            "unsupported",
            row.config_hash,
        ])
    return buffer.getvalue()


def render_report(table: ResultsTable, fmt: str) -> str:
    """Render the comparison table as json, markdown, or csv text."""
    if fmt == "json":
        return json.dumps(table.to_dict(), indent=2, sort_keys=True,
                          ensure_ascii=False) + "\n"
    if fmt == "markdown":
        return _markdown_report(table)
    if fmt == "csv":
        return _csv_report(table)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(table: ResultsTable, fmt: str, path: str | Path) -> Path:
    """Write the comparison table to path as json, markdown, or csv."""
    text = render_report(table, fmt)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot write report to {path}: {exc}") from exc
    return path
