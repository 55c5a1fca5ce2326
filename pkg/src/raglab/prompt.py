"""Prompt rendering: system prompt variants, context prompts, contrastive
in-context-example prompts, and the answer-in-English instruction.

Rendering is pure and byte-stable: equal inputs give equal strings, and the
template grammar is strict enough that a rendered in-context prompt parses
back into its parts (see parse_icl_structure). The system prompt texts ship
as a versioned resource file whose entries are checksum-verified on load,
so silent edits fail loudly.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .retrieval import ICLExample

__all__ = [
    "PromptBundle",
    "ParsedICL",
    "system_prompt_names",
    "render_system",
    "multilingual_suffix_text",
    "render_context_prompt",
    "render_icl_prompt",
    "render_multilingual_suffix",
    "parse_icl_structure",
]

_CONTEXT_LABEL = "Considering this information:"
_ONE_EXAMPLE_LABEL = "Considering this example:"
_MANY_EXAMPLES_LABEL = "Considering these examples:"
_TERMINAL = (".", "!", "?")


@dataclass(frozen=True)
class PromptBundle:
    """A rendered prompt: the system text, the body after it, the full
    string, and which template family produced it."""

    system: str
    body: str
    rendered: str
    variant: str  # context, no_rag, icl1, icl2, icl1_plus, icl2_plus, multilingual_plus


class ResourceIntegrityError(RuntimeError):
    """Raised when the shipped prompt resource fails checksum verification."""


@lru_cache(maxsize=1)
def _load_resources() -> dict:
    raw = resources.files("raglab.resources").joinpath("prompts.json").read_text("utf-8")
    data = json.loads(raw)
    checksums = data["checksums"]
    entries = dict(data["system_prompts"])
    entries["multilingual_suffix"] = data["multilingual_suffix"]
    for name, text in entries.items():
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        if digest != checksums.get(name):
            raise ResourceIntegrityError(
                f"prompt resource {name!r} failed checksum verification"
            )
    return data


def system_prompt_names() -> tuple[str, ...]:
    return tuple(_load_resources()["system_prompts"])


def render_system(name: str) -> str:
    """The exact system prompt text registered under `name`."""
    prompts = _load_resources()["system_prompts"]
    if name not in prompts:
        known = ", ".join(prompts)
        raise ValueError(f"unknown system prompt {name!r}; known: {known}")
    return prompts[name]


def multilingual_suffix_text() -> str:
    """The answer-in-English instruction, as a complete sentence."""
    return _ensure_terminal(_load_resources()["multilingual_suffix"])


def _ensure_terminal(text: str) -> str:
    text = text.rstrip()
    if not text.endswith(_TERMINAL):
        return text + "."
    return text


def render_context_prompt(system: str, context_texts, question: str) -> PromptBundle:
    """The standard QA prompt: system sentence, an information section
    holding the retrieved texts joined by newlines, then the question cue.
    With no contexts the information section disappears entirely (the
    retrieval-free form)."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    system = _ensure_terminal(system)
    contexts = tuple(context_texts)
    tail = f"Question: {question}, Answer:"
    if contexts:
        joined = _ensure_terminal("\n".join(contexts))
        body = f"{_CONTEXT_LABEL} {joined} {tail}"
        variant = "context"
    else:
        body = tail
        variant = "no_rag"
    return PromptBundle(system=system, body=body,
                        rendered=f"{system} {body}", variant=variant)


def _example_blocks(examples: tuple[ICLExample, ...], contrastive: bool) -> list[str]:
    blocks: list[str] = []
    for example in examples:
        blocks.append(_ensure_terminal(
            f"Question: {example.question}, Correct Answer: {example.correct_answer}"
        ))
        if contrastive:
            if example.incorrect_answer is None:
                raise ValueError(
                    f"contrastive prompt needs an incorrect answer for "
                    f"example {example.example_id!r}"
                )
            blocks.append(_ensure_terminal(
                f"Question: {example.question}, Incorrect Answer: {example.incorrect_answer}"
            ))
    return blocks


def render_icl_prompt(system: str, examples, question: str,
                      contrastive: bool = False) -> PromptBundle:
    """The in-context-example prompt: one or two worked examples (each a
    correct block, plus an incorrect block when contrastive), then the
    active question ending in the `Correct Answer:` cue.

    Examples appear in the order given, which retrieval hands over in rank
    order. The singular label is used only for the single-block shape.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    examples = tuple(examples)
    if len(examples) not in (1, 2):
        raise ValueError(f"expected 1 or 2 examples, got {len(examples)}")
    system = _ensure_terminal(system)
    blocks = _example_blocks(examples, contrastive)
    label = _ONE_EXAMPLE_LABEL if len(blocks) == 1 else _MANY_EXAMPLES_LABEL
    body = f"{label} {' '.join(blocks)} Question: {question}, Correct Answer:"
    variant = f"icl{len(examples)}" + ("_plus" if contrastive else "")
    return PromptBundle(system=system, body=body,
                        rendered=f"{system} {body}", variant=variant)


def render_multilingual_suffix(bundle: PromptBundle) -> PromptBundle:
    """Insert the answer-in-English sentence immediately before the active
    question segment. Applying it twice changes nothing."""
    suffix = multilingual_suffix_text()
    if suffix in bundle.rendered:
        return bundle
    marker = "Question: "
    position = bundle.body.rfind(marker)
    if position < 0:
        raise ValueError("prompt has no question segment to precede")
    body = f"{bundle.body[:position]}{suffix} {bundle.body[position:]}"
    return PromptBundle(
        system=bundle.system,
        body=body,
        rendered=f"{bundle.system} {body}",
        variant="multilingual_plus",
    )


@dataclass(frozen=True)
class ParsedICL:
    """The parts recovered from a rendered in-context prompt."""

    system: str
    label: str
    blocks: tuple[tuple[str, str, str], ...]  # (question, kind, answer)
    active_question: str


_BLOCK_RE = re.compile(
    r"Question: (?P<q>.+?), (?P<kind>Correct|Incorrect) Answer: (?P<a>.+?)\.(?: |$)"
)
_ICL_BODY_RE = re.compile(
    r"^(?P<label>Considering this example:|Considering these examples:) "
    r"(?P<blocks>(?:Question: .+?, (?:Correct|Incorrect) Answer: .+?\. )+)"
    r"Question: (?P<active>.+?), Correct Answer:$",
    re.DOTALL,
)


def parse_icl_structure(rendered: str) -> ParsedICL:
    """Parse a rendered in-context prompt back into its parts.

    The grammar is strict: any deviation from the template (missing label,
    malformed block, wrong final cue) raises. Intended for round-trip
    checks, not for free-form text.
    """
    for label in (_ONE_EXAMPLE_LABEL, _MANY_EXAMPLES_LABEL):
        split_at = rendered.find(f" {label} ")
        if split_at >= 0:
            system = rendered[:split_at]
            body = rendered[split_at + 1:]
            break
    else:
        raise ValueError("no example label found")
    match = _ICL_BODY_RE.match(body)
    if not match:
        raise ValueError("body does not match the in-context prompt grammar")
    blocks = tuple(
        (m.group("q"), m.group("kind"), m.group("a"))
        for m in _BLOCK_RE.finditer(match.group("blocks"))
    )
    if not blocks:
        raise ValueError("no example blocks parsed")
    return ParsedICL(
        system=system,
        label=match.group("label"),
        blocks=blocks,
        active_question=match.group("active"),
    )
