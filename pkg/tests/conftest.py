"""Shared fixtures: a small knowledge base, a ten-item QA dataset, and
translations for it, written once per session as read-only inputs."""

import json

import pytest

KB_SENTENCES = {
    "rivers": ("The longest river crosses nine borders. Its delta hosts rare "
               "birds. Spring floods renew the farmland."),
    "mountains": ("The highest mountain resists erosion. Climbers rest at the "
                  "stone hut. Glaciers feed the valley stream."),
    "cities": ("The old city kept its walls. Trade made the harbor rich. "
               "A clock tower marks the square."),
    "forests": ("The pine forest hides a cold spring. Rangers count the owls "
                "each winter. Fire lanes cut the ridge."),
    "deserts": ("The desert blooms after rare rain. Caravans followed buried "
                "wells. Dunes swallow the old road."),
    "islands": ("The island ferry runs at dawn. Salt winds bend the few "
                "trees. Lighthouse keepers kept logs."),
}


def write_jsonl(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def qa_record(i, **overrides):
    record = {
        "id": f"q-{i:03d}",
        "question": f"What is fact number {i}?",
        "best_answer": f"Fact number {i} is about the {i} river",
        "correct_answers": [f"Fact number {i} is about the {i} river",
                            f"It concerns river {i}"],
        "incorrect_answers": [f"Fact {i} is a legend", "It is unknowable"],
    }
    record.update(overrides)
    return record


def mmlu_record(subject, i, answer_index=1):
    return {
        "id": f"m-{subject}-{i:03d}",
        "subject": subject,
        "question": f"Question {i} of {subject}?",
        "choices": [f"{subject} choice {i}.{j}" for j in range(4)],
        "answer_index": answer_index,
    }


@pytest.fixture(scope="session")
def kb_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("kb") / "kb.jsonl"
    records = [
        {"id": f"doc-{name}", "title": name.title(), "text": text,
         "language": "en", "level": 3}
        for name, text in KB_SENTENCES.items()
    ]
    write_jsonl(path, records)
    return path


@pytest.fixture(scope="session")
def dataset_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "qa.jsonl"
    write_jsonl(path, [qa_record(i) for i in range(10)])
    return path


@pytest.fixture(scope="session")
def translations_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("tr") / "translations.jsonl"
    records = []
    for name in KB_SENTENCES:
        for lang in ("fr", "de"):
            records.append({
                "id": f"doc-{name}", "title": f"{name.title()} ({lang})",
                "text": f"Texte {lang} sur {name}. Deuxieme phrase {lang}.",
                "language": lang, "level": 3,
            })
    write_jsonl(path, records)
    return path


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICT_LINES
    except ImportError:
        return
    if not VERDICT_LINES:
        return
    terminalreporter.section("release criteria")
    for line in sorted(VERDICT_LINES):
        terminalreporter.write_line(line)
