"""Small-scale checks of the synthetic snapshot writers; the full-size
corpora are only generated inside the acceptance suite."""

import hashlib
import json

import pytest

import synthdata
from raglab.corpus import kb_stats, load_knowledge_base


def file_hash(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestArticlesSnapshot:
    def test_counts_and_endpoints(self, tmp_path):
        path = synthdata.write_articles_snapshot(
            tmp_path / "kb.jsonl", level=3, count=40, sentence_low=10,
            sentence_high=30, forced_min=1, forced_max=50, words_low=5,
            words_high=9, seed=1)
        kb = load_knowledge_base(path, level=3)
        stats = kb_stats(kb)
        assert stats.article_count == 40
        assert stats.sentences_per_article_min == 1
        assert stats.sentences_per_article_max == 50
        # uniform [10, 30] midpoint is 20; forced endpoints shift it a bit
        assert 12 <= stats.avg_sentences_per_article <= 28

    def test_word_average_tracks_configuration(self, tmp_path):
        path = synthdata.write_articles_snapshot(
            tmp_path / "kb.jsonl", level=3, count=30, sentence_low=20,
            sentence_high=20, forced_min=20, forced_max=20, words_low=7,
            words_high=7, seed=2)
        stats = kb_stats(load_knowledge_base(path, level=3))
        # every article: exactly 20 sentences of exactly 7 words
        assert stats.avg_sentences_per_article == 20
        assert stats.avg_words_per_article == 140

    def test_deterministic_bytes(self, tmp_path):
        a = synthdata.write_articles_snapshot(
            tmp_path / "a.jsonl", level=4, count=20, sentence_low=5,
            sentence_high=15, forced_min=1, forced_max=40, words_low=3,
            words_high=5, seed=9)
        b = synthdata.write_articles_snapshot(
            tmp_path / "b.jsonl", level=4, count=20, sentence_low=5,
            sentence_high=15, forced_min=1, forced_max=40, words_low=3,
            words_high=5, seed=9)
        assert file_hash(a) == file_hash(b)

    def test_seed_changes_content(self, tmp_path):
        kwargs = dict(level=3, count=10, sentence_low=5, sentence_high=10,
                      forced_min=1, forced_max=20, words_low=4, words_high=8)
        a = synthdata.write_articles_snapshot(tmp_path / "a.jsonl", seed=1,
                                              **kwargs)
        b = synthdata.write_articles_snapshot(tmp_path / "b.jsonl", seed=2,
                                              **kwargs)
        assert file_hash(a) != file_hash(b)

    def test_rejects_bad_ranges(self, tmp_path):
        with pytest.raises(ValueError):
            synthdata.write_articles_snapshot(
                tmp_path / "kb.jsonl", level=3, count=1, sentence_low=5,
                sentence_high=10, forced_min=1, forced_max=20, words_low=3,
                words_high=5)
        with pytest.raises(ValueError):
            synthdata.write_articles_snapshot(
                tmp_path / "kb.jsonl", level=3, count=5, sentence_low=5,
                sentence_high=10, forced_min=7, forced_max=20, words_low=3,
                words_high=5)


class TestQASnapshot:
    def test_item_count_and_schema(self, tmp_path):
        path = synthdata.write_truthfulqa_snapshot(tmp_path / "qa.jsonl",
                                                   count=60)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 60
        for line in lines:
            record = json.loads(line)
            assert set(record) == {"id", "question", "best_answer",
                                   "correct_answers", "incorrect_answers"}
            assert record["correct_answers"]

    def test_canonical_item_present(self, tmp_path):
        path = synthdata.write_truthfulqa_snapshot(tmp_path / "qa.jsonl",
                                                   count=60)
        records = [json.loads(line) for line in
                   path.read_text(encoding="utf-8").splitlines()]
        marked = [r for r in records if "watermelon seeds" in r["question"]]
        assert len(marked) == 1
        assert any("pass through your digestive system" in answer
                   for answer in marked[0]["correct_answers"])

    def test_deterministic(self, tmp_path):
        a = synthdata.write_truthfulqa_snapshot(tmp_path / "a.jsonl", count=30)
        b = synthdata.write_truthfulqa_snapshot(tmp_path / "b.jsonl", count=30)
        assert file_hash(a) == file_hash(b)


class TestExamSnapshot:
    def test_block_structure(self, tmp_path):
        path = synthdata.write_mmlu_snapshot(tmp_path / "exam.jsonl",
                                             subject_count=3, per_subject=4)
        records = [json.loads(line) for line in
                   path.read_text(encoding="utf-8").splitlines()]
        assert len(records) == 12
        assert [r["subject"] for r in records] == (
            ["subject_00"] * 4 + ["subject_01"] * 4 + ["subject_02"] * 4)
        for r in records:
            assert len(r["choices"]) == 4
            assert 0 <= r["answer_index"] < 4

    def test_full_shape(self, tmp_path):
        path = synthdata.write_mmlu_snapshot(tmp_path / "exam.jsonl")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 57 * 34
        subjects = {json.loads(line)["subject"] for line in lines}
        assert len(subjects) == 57
