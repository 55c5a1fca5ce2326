"""Command line client.

Every subcommand is a thin wrapper over the HTTP service: by default the
app runs in-process (no server needed), and --server redirects the same
requests to a remote instance. Local files named by arguments are read and
written by the client; paths inside requests are resolved where the service
runs. Remote providers read API keys from the environment variable named in
the provider settings (RAGLAB_API_KEY unless overridden) on the service
side; keys never appear in configs or argv.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx


def _make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # in-process ASGI client; the service sees this machine's filesystem
    import warnings

    with warnings.catch_warnings():
        from starlette.exceptions import StarletteDeprecationWarning

        warnings.simplefilter("ignore", StarletteDeprecationWarning)
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _providers_payload(args) -> dict:
    payload = {"kind": "stub"}
    if getattr(args, "remote", False):
        payload = {
            "kind": "remote",
            "embed_base_url": args.embed_url,
            "embed_model": args.embed_model,
            "lm_base_url": args.lm_url,
            "lm_model": args.lm_model,
        }
    if getattr(args, "embed_dim", None):
        payload["embed_dim"] = args.embed_dim
    return payload


def _post(client: httpx.Client, path: str, payload: dict):
    response = client.post(path, json=payload)
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise SystemExit(f"error: {detail}")
    return response.json()


def _emit(data, out: str | None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--remote", action="store_true",
                        help="use remote providers instead of stubs")
    parser.add_argument("--embed-url", default="",
                        help="embeddings endpoint base URL")
    parser.add_argument("--embed-model", default="all-MiniLM-L6-v2")
    parser.add_argument("--embed-dim", type=int, default=384)
    parser.add_argument("--lm-url", default="", help="chat endpoint base URL")
    parser.add_argument("--lm-model", default="stub-lm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raglab",
        description="Retrieval experiment toolkit client.")
    parser.add_argument("--server", default=None,
                        help="remote service URL (default: run in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="build a vector index from a "
                                           "knowledge base file")
    ingest.add_argument("--kb", required=True)
    ingest.add_argument("--level", type=int, default=3)
    ingest.add_argument("--chunk-size", type=int, default=64)
    ingest.add_argument("--out", required=True, help="index file to write")
    ingest.add_argument("--seed", type=int, default=0)
    _add_provider_flags(ingest)

    expand = sub.add_parser("expand", help="debug query expansion")
    expand.add_argument("--query", required=True)
    expand.add_argument("-n", type=int, default=5)
    expand.add_argument("--seed", type=int, default=0)
    _add_provider_flags(expand)

    retrieve = sub.add_parser("retrieve", help="run one retrieval plan")
    retrieve.add_argument("--query", required=True)
    retrieve.add_argument("--index", default="", help="saved index file")
    retrieve.add_argument("--kb", default="", help="build index on the fly")
    retrieve.add_argument("--level", type=int, default=3)
    retrieve.add_argument("--chunk-size", type=int, default=64)
    retrieve.add_argument("--mode", default="baseline",
                          choices=["baseline", "expanded", "focus"])
    retrieve.add_argument("--k-docs", type=int, default=2)
    retrieve.add_argument("--filter-size", type=int, default=15)
    retrieve.add_argument("--n-sentences", type=int, default=20)
    retrieve.add_argument("--expand-first", action="store_true")
    retrieve.add_argument("--seed", type=int, default=0)
    _add_provider_flags(retrieve)

    prompt = sub.add_parser("prompt", help="render a prompt without running")
    prompt.add_argument("--question", required=True)
    prompt.add_argument("--system", default="HelpV1")
    prompt.add_argument("--context", action="append", default=[],
                        help="context text (repeatable)")
    prompt.add_argument("--icl-example", action="append", default=[],
                        help="JSON object with example_id, question, "
                             "correct_answer, optional incorrect_answer")
    prompt.add_argument("--contrastive", action="store_true")
    prompt.add_argument("--english", action="store_true",
                        help="append the answer-in-English instruction")

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("-o", "--out", default=None,
                     help="where to write the run result JSON "
                          "(default: config output_path or stdout)")
    run.add_argument("--stub", action="store_true",
                     help="force stub providers regardless of config")

    compare = sub.add_parser("compare", help="significance table for runs")
    compare.add_argument("runs", nargs="+", help="run result JSON files")
    compare.add_argument("--baseline", required=True)
    compare.add_argument("--seed", type=int, default=0)
    compare.add_argument("-o", "--out", default=None)

    report = sub.add_parser("report", help="render a comparison table")
    report.add_argument("--table", required=True,
                        help="comparison table JSON file")
    report.add_argument("--format", default="markdown",
                        choices=["json", "markdown", "csv"])
    report.add_argument("-o", "--out", default=None)

    return parser


def _cmd_ingest(args, client) -> int:
    data = _post(client, "/ingest", {
        "kb_path": args.kb, "level": args.level,
        "chunk_size": args.chunk_size, "index_path": args.out,
        "seed": args.seed, "providers": _providers_payload(args),
    })
    _emit(data, None)
    return 0


def _cmd_expand(args, client) -> int:
    data = _post(client, "/expand", {
        "query": args.query, "n": args.n, "seed": args.seed,
        "providers": _providers_payload(args),
    })
    _emit(data, None)
    return 0


def _cmd_retrieve(args, client) -> int:
    plan = {
        "mode": args.mode, "k_docs": args.k_docs,
        "filter_size": args.filter_size, "n_sentences": args.n_sentences,
        "expand_first": args.expand_first,
    }
    data = _post(client, "/retrieve", {
        "query": args.query, "index_path": args.index, "kb_path": args.kb,
        "kb_level": args.level, "chunk_size": args.chunk_size, "plan": plan,
        "seed": args.seed, "providers": _providers_payload(args),
    })
    _emit(data, None)
    return 0


def _cmd_prompt(args, client) -> int:
    examples = []
    for blob in args.icl_example:
        try:
            examples.append(json.loads(blob))
        except json.JSONDecodeError as exc:
            raise SystemExit(f"error: bad --icl-example JSON: {exc}")
    data = _post(client, "/prompt", {
        "system_prompt": args.system, "question": args.question,
        "context_texts": args.context, "icl_examples": examples,
        "contrastive": args.contrastive, "answer_in_english": args.english,
    })
    _emit(data, None)
    return 0


def _read_json_file(path: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SystemExit(f"error: no such file: {path}")
    except json.JSONDecodeError as exc:
        raise SystemExit(f"error: {path} is not valid JSON: {exc}")


def _cmd_run(args, client) -> int:
    config = _read_json_file(args.config)
    if args.stub:
        providers = dict(config.get("providers", {}))
        providers["kind"] = "stub"
        config["providers"] = providers
    data = _post(client, "/run", {"config": config})
    out = args.out or config.get("output_path") or None
    _emit(data["result"], out)
    return 0


def _cmd_compare(args, client) -> int:
    runs = [_read_json_file(path) for path in args.runs]
    data = _post(client, "/compare", {
        "runs": runs, "baseline_name": args.baseline, "seed": args.seed,
    })
    _emit(data["table"], args.out)
    return 0


def _cmd_report(args, client) -> int:
    table = _read_json_file(args.table)
    data = _post(client, "/report", {"table": table, "format": args.format})
    if args.out:
        Path(args.out).write_text(data["content"], encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(data["content"])
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "expand": _cmd_expand,
    "retrieve": _cmd_retrieve,
    "prompt": _cmd_prompt,
    "run": _cmd_run,
    "compare": _cmd_compare,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    client = _make_client(args.server)
    try:
        return _COMMANDS[args.command](args, client)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        raise
    finally:
        client.close()


if __name__ == "__main__":
    sys.exit(main())
