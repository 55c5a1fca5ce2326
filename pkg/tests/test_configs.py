"""The committed config matrix and toy data must stay loadable: every file
parses through the real constructors, and the row names cover the full
experiment grid."""

import json
from pathlib import Path

from raglab.corpus import load_knowledge_base, load_translations
from raglab.harness import ExperimentConfig, load_mmlu, load_truthfulqa

REPO_ROOT = Path(__file__).resolve().parents[1]

ROW_NAMES = {
    "Baseline", "Instruct45B",
    "HelpV2", "HelpV3", "AdversV1", "AdversV2",
    "2DocS", "2DocM", "2DocL", "2DocXL",
    "1K_2Doc", "10K_2Doc", "1K_5Doc", "10K_5Doc",
    "Stride5", "Stride2", "Stride1",
    "ExpendS", "ExpendM", "ExpendL",
    "ICL1Doc", "ICL2Doc", "ICL1Doc+", "ICL2Doc+",
    "MultiLingo", "MultiLingo+",
    "2Doc1S", "20Doc20S", "40Doc40S", "80Doc80S", "120Doc120S",
    "w/o_RAG",
}


def load_all(directory):
    configs = {}
    for path in sorted(directory.glob("*.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        configs[path.name] = ExperimentConfig.from_dict(payload)
    return configs


class TestConfigMatrix:
    def test_acceptance_axes(self):
        configs = load_all(REPO_ROOT / "configs" / "acceptance")
        assert {c.name for c in configs.values()} == {
            "Baseline", "HelpV2", "2DocXL", "1K_5Doc", "Stride2",
            "ExpendL", "ICL1Doc+", "MultiLingo+", "2Doc1S",
        }
        for config in configs.values():
            assert config.providers.kind == "stub"
            assert config.dataset_path.startswith("data/toy/")

    def test_full_matrix_per_dataset(self):
        for dataset in ("truthfulqa", "mmlu"):
            configs = load_all(REPO_ROOT / "configs" / "table2" / dataset)
            names = {c.name for c in configs.values()}
            assert names == ROW_NAMES, (
                f"{dataset}: missing {ROW_NAMES - names}, "
                f"extra {names - ROW_NAMES}")
            kinds = {c.dataset_kind for c in configs.values()}
            assert kinds == {dataset}

    def test_matrix_parameters_spot_checks(self):
        directory = REPO_ROOT / "configs" / "table2" / "truthfulqa"

        def one(stem):
            return ExperimentConfig.from_dict(json.loads(
                (directory / f"{stem}.json").read_text(encoding="utf-8")))

        assert one("2docs").chunk_size == 48
        assert one("2docxl").chunk_size == 192
        assert one("10k-5doc").kb_level == 4
        assert one("10k-5doc").plan.k_docs == 5
        assert one("stride1").stride.stride == 1
        assert one("expendm").plan.filter_size == 15
        icl2 = one("icl2doc-plus")
        assert icl2.plan.icl_n == 2 and icl2.plan.contrastive
        focus = one("120doc120s")
        assert focus.plan.k_docs == 120 and focus.plan.n_sentences == 120
        multi = one("multilingo-plus")
        assert multi.multilingual_ratio == 0.5 and multi.answer_in_english
        worag = one("w-o-rag")
        assert not worag.rag_enabled
        assert one("instruct45b").providers.kind == "remote"


class TestToyData:
    def test_kb_loads(self):
        kb = load_knowledge_base(REPO_ROOT / "data" / "toy" / "kb.jsonl", 3)
        assert len(kb.documents) == 12

    def test_questions_load(self):
        items = load_truthfulqa(
            REPO_ROOT / "data" / "toy" / "questions.jsonl")
        assert len(items) == 10
        for item in items:
            assert item.incorrect_answers, item.item_id

    def test_exam_loads(self):
        items = load_mmlu(REPO_ROOT / "data" / "toy" / "exam.jsonl",
                          per_subject_cap=32)
        assert len(items) == 10
        assert {i.subject for i in items} == {
            "marine_biology", "earth_science"}

    def test_translations_cover_every_doc(self):
        kb = load_knowledge_base(REPO_ROOT / "data" / "toy" / "kb.jsonl", 3)
        translations = load_translations(
            REPO_ROOT / "data" / "toy" / "translations.jsonl")
        for doc in kb.documents:
            assert doc.id in translations, doc.id
            languages = {lang.value for lang in translations[doc.id]}
            assert languages == {"fr", "de"}
