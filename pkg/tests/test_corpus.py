"""Tokenizer, chunker, sentence splitter, KB loading, and multilingual mix."""

from __future__ import annotations

import json
import random

import pytest

from raglab.corpus import (
    Document,
    KnowledgeBase,
    Language,
    Level,
    apply_multilingual_mix,
    chunk_document,
    is_word_token,
    kb_stats,
    load_knowledge_base,
    load_translations,
    split_chunk_sentences,
    split_sentences,
    tokenize,
)


def make_doc(text: str, doc_id: str = "d1") -> Document:
    return Document(id=doc_id, title="T", text=text, language=Language.EN, level=Level.L3)


class TestTokenize:
    def test_simple_sentence(self):
        assert tokenize("The cat sat.") == ["The", "cat", "sat", "."]

    def test_internal_punctuation_stays_attached(self):
        assert tokenize("Pope's role, today") == ["Pope's", "role", ",", "today"]

    def test_leading_and_trailing_punctuation(self):
        assert tokenize('"Hello," she said.') == ['"', "Hello", ",", '"', "she", "said", "."]

    def test_multiple_trailing_marks_become_separate_tokens(self):
        assert tokenize("Really?!") == ["Really", "?", "!"]

    def test_all_punctuation_piece(self):
        assert tokenize("wait -- what") == ["wait", "-", "-", "what"]

    def test_whitespace_runs_collapse(self):
        assert tokenize("a  b\t c\n\nd") == ["a", "b", "c", "d"]

    def test_empty_and_blank(self):
        assert tokenize("") == []
        assert tokenize("   \n\t ") == []

    def test_case_preserved(self):
        assert tokenize("The THE the") == ["The", "THE", "the"]

    def test_hyphenated_word_is_one_token(self):
        assert tokenize("state-of-the-art results") == ["state-of-the-art", "results"]

    def test_word_token_predicate(self):
        assert is_word_token("cat")
        assert is_word_token("Pope's")
        assert not is_word_token(".")
        assert not is_word_token(",")
        # multi-char punctuation runs never appear as single tokens, but a
        # two-char token is a word by definition
        assert is_word_token("--")

    @pytest.mark.parametrize(
        "text",
        [
            "The cat sat.",
            '"Hello," she said. (Really?!)',
            "Pope's role, today; e.g. now.",
        ],
    )
    def test_token_count_is_stable_under_retokenize(self, text):
        joined = " ".join(tokenize(text))
        assert tokenize(joined) == tokenize(text)


class TestChunkDocument:
    def test_130_tokens_at_64_gives_64_64_2(self):
        # 130 single-word tokens
        doc = make_doc(" ".join(f"w{i}" for i in range(130)))
        chunks = chunk_document(doc, 64)
        assert [c.token_count for c in chunks] == [64, 64, 2]
        assert [c.ordinal for c in chunks] == [0, 1, 2]
        assert all(c.doc_id == "d1" for c in chunks)

    def test_exact_multiple_has_no_short_tail(self):
        doc = make_doc(" ".join(f"w{i}" for i in range(128)))
        assert [c.token_count for c in chunk_document(doc, 64)] == [64, 64]

    def test_document_shorter_than_chunk_size(self):
        doc = make_doc("just five little tokens here")
        chunks = chunk_document(doc, 64)
        assert len(chunks) == 1
        assert chunks[0].token_count == 5
        assert chunks[0].text == "just five little tokens here"

    def test_concatenation_preserves_token_stream(self):
        text = 'The cat sat. "Why?" asked Mr. Smith, pointedly.'
        doc = make_doc(text)
        for size in (1, 2, 3, 5, 64):
            chunks = chunk_document(doc, size)
            rejoined = " ".join(c.text for c in chunks)
            assert tokenize(rejoined) == tokenize(text), size

    def test_detokenized_chunk_text_keeps_glue(self):
        doc = make_doc('She said "yes."')
        (chunk,) = chunk_document(doc, 64)
        # leading quote glued to word, trailing glued to previous
        assert chunk.text == 'She said "yes."'

    def test_chunk_ids_are_unique_and_ordered(self):
        doc = make_doc(" ".join(f"w{i}" for i in range(10)))
        chunks = chunk_document(doc, 3)
        assert [c.chunk_id for c in chunks] == ["d1#0", "d1#1", "d1#2", "d1#3"]

    def test_invalid_chunk_size(self):
        with pytest.raises(ValueError):
            chunk_document(make_doc("a b c"), 0)

    @pytest.mark.parametrize("size", [48, 64, 128, 192])
    def test_supported_sizes_partition_token_count(self, size):
        doc = make_doc(" ".join(f"tok{i}" for i in range(500)))
        chunks = chunk_document(doc, size)
        assert sum(c.token_count for c in chunks) == 500
        assert all(c.token_count == size for c in chunks[:-1])
        assert 1 <= chunks[-1].token_count <= size


class TestSplitSentences:
    def test_three_terminators(self):
        assert split_sentences("A. B? C!") == ["A.", "B?", "C!"]

    def test_abbreviation_does_not_split(self):
        assert split_sentences("Fruit, e.g. Apples, is red.") == ["Fruit, e.g. Apples, is red."]

    def test_title_abbreviation(self):
        assert split_sentences("Dr. Smith arrived. He sat down.") == [
            "Dr. Smith arrived.",
            "He sat down.",
        ]

    def test_lowercase_continuation_does_not_split(self):
        assert split_sentences("It was v. 2 of the API. fine") == ["It was v. 2 of the API. fine"]

    def test_terminator_at_end_of_text(self):
        assert split_sentences("Only one sentence.") == ["Only one sentence."]

    def test_no_terminator_yields_whole_text(self):
        assert split_sentences("no terminator here") == ["no terminator here"]

    def test_empty_text(self):
        assert split_sentences("") == []
        assert split_sentences("   ") == []

    def test_multiple_terminators_split_once(self):
        assert split_sentences("What?! Next one.") == ["What?!", "Next one."]

    def test_idempotent_on_own_output(self):
        text = "First one. Second, e.g. this? Third! And a tail"
        first = split_sentences(text)
        for sentence in first:
            assert split_sentences(sentence) == [sentence]

    def test_decimal_number_does_not_split(self):
        assert split_sentences("Pi is 3.14 roughly. Yes.") == ["Pi is 3.14 roughly.", "Yes."]

    def test_chunk_sentence_units_carry_ordering(self):
        doc = make_doc("A b c. D e f! G h?")
        (chunk,) = chunk_document(doc, 64)
        units = split_chunk_sentences(chunk)
        assert [u.text for u in units] == ["A b c.", "D e f!", "G h?"]
        assert [u.sentence_ordinal for u in units] == [0, 1, 2]
        assert all(u.doc_id == "d1" and u.chunk_ordinal == 0 for u in units)


def write_kb(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def kb_record(i, level=3, language="en", text=None):
    return {
        "id": f"a{i}",
        "title": f"Article {i}",
        "text": text or f"Body of article {i}. It has two sentences.",
        "language": language,
        "level": level,
    }


class TestLoadKnowledgeBase:
    def test_loads_only_requested_level(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_kb(path, [kb_record(1, level=3), kb_record(2, level=4), kb_record(3, level=3)])
        kb = load_knowledge_base(path, Level.L3)
        assert kb.ids() == ["a1", "a3"]
        assert kb.level is Level.L3
        kb4 = load_knowledge_base(path, 4)
        assert kb4.ids() == ["a2"]

    def test_preserves_file_order(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        order = [5, 2, 9, 1]
        write_kb(path, [kb_record(i) for i in order])
        kb = load_knowledge_base(path, 3)
        assert kb.ids() == [f"a{i}" for i in order]

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_kb(path, [kb_record(1), kb_record(1)])
        with pytest.raises(ValueError, match="duplicate"):
            load_knowledge_base(path, 3)

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        path.write_text(json.dumps(kb_record(1)) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 2"):
            load_knowledge_base(path, 3)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        record = kb_record(1)
        del record["title"]
        write_kb(path, [record])
        with pytest.raises(ValueError, match="title"):
            load_knowledge_base(path, 3)

    def test_empty_text_rejected(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_kb(path, [kb_record(1, text="   ")])
        with pytest.raises(ValueError, match="empty text"):
            load_knowledge_base(path, 3)

    def test_unknown_language_rejected(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_kb(path, [kb_record(1, language="xx")])
        with pytest.raises(ValueError, match="language"):
            load_knowledge_base(path, 3)

    def test_no_documents_at_level_rejected(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_kb(path, [kb_record(1, level=3)])
        with pytest.raises(ValueError, match="empty knowledge base"):
            load_knowledge_base(path, 4)

    def test_content_hash_tracks_bytes(self, tmp_path):
        p1, p2 = tmp_path / "kb1.jsonl", tmp_path / "kb2.jsonl"
        write_kb(p1, [kb_record(1)])
        write_kb(p2, [kb_record(1)])
        assert load_knowledge_base(p1, 3).content_hash == load_knowledge_base(p2, 3).content_hash
        write_kb(p2, [kb_record(1), kb_record(2)])
        assert load_knowledge_base(p1, 3).content_hash != load_knowledge_base(p2, 3).content_hash


class TestKBStats:
    def test_hand_computed_stats(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        write_kb(
            path,
            [
                # 2 sentences, 6 words ("." is not a word)
                kb_record(1, text="One two three. Four five six."),
                # 1 sentence, 2 words
                kb_record(2, text="Seven eight."),
                # 3 sentences, 4 words
                kb_record(3, text="Nine. Ten! Eleven twelve?"),
            ],
        )
        stats = kb_stats(load_knowledge_base(path, 3))
        assert stats.article_count == 3
        assert stats.sentences_per_article_min == 1
        assert stats.sentences_per_article_max == 3
        assert stats.avg_sentences_per_article == pytest.approx(2.0)
        assert stats.avg_words_per_article == pytest.approx(4.0)


class TestMultilingualMix:
    def build(self, tmp_path, n=10):
        kb_path = tmp_path / "kb.jsonl"
        write_kb(kb_path, [kb_record(i) for i in range(n)])
        tr_path = tmp_path / "tr.jsonl"
        records = []
        for i in range(n):
            records.append(kb_record(i, language="fr", text=f"Corps de l'article {i}."))
            records.append(kb_record(i, language="de", text=f"Text des Artikels {i}."))
        write_kb(tr_path, records)
        return load_knowledge_base(kb_path, 3), load_translations(tr_path)

    def test_replacement_count_rounds_half_up(self, tmp_path):
        kb, translations = self.build(tmp_path, n=10)
        for ratio, expected in [(0.0, 0), (0.04, 0), (0.05, 1), (0.25, 3), (0.5, 5), (1.0, 10)]:
            mixed = apply_multilingual_mix(kb, ratio, seed=7, translations=translations)
            non_english = sum(1 for d in mixed.documents if d.language is not Language.EN)
            assert non_english == expected, ratio

    def test_deterministic_for_fixed_seed(self, tmp_path):
        kb, translations = self.build(tmp_path)
        a = apply_multilingual_mix(kb, 0.5, seed=3, translations=translations)
        b = apply_multilingual_mix(kb, 0.5, seed=3, translations=translations)
        assert a == b

    def test_different_seeds_can_differ(self, tmp_path):
        kb, translations = self.build(tmp_path, n=30)
        picks = {
            tuple(d.language.value for d in
                  apply_multilingual_mix(kb, 0.5, seed=s, translations=translations).documents)
            for s in range(5)
        }
        assert len(picks) > 1

    def test_order_and_ids_unchanged(self, tmp_path):
        kb, translations = self.build(tmp_path)
        mixed = apply_multilingual_mix(kb, 0.5, seed=11, translations=translations)
        assert mixed.ids() == kb.ids()
        assert len(mixed) == len(kb)

    def test_replaced_docs_use_translation_text(self, tmp_path):
        kb, translations = self.build(tmp_path)
        mixed = apply_multilingual_mix(kb, 1.0, seed=2, translations=translations)
        for doc in mixed.documents:
            assert doc.language in (Language.FR, Language.DE)
            assert doc.text == translations[doc.id][doc.language].text

    def test_missing_translation_rejected(self, tmp_path):
        kb, translations = self.build(tmp_path)
        translations.pop("a4")
        with pytest.raises(ValueError, match="a4"):
            apply_multilingual_mix(kb, 1.0, seed=1, translations=translations)

    def test_zero_ratio_returns_same_kb(self, tmp_path):
        kb, translations = self.build(tmp_path)
        assert apply_multilingual_mix(kb, 0.0, seed=1, translations=translations) is kb

    def test_invalid_ratio_rejected(self, tmp_path):
        kb, translations = self.build(tmp_path)
        with pytest.raises(ValueError):
            apply_multilingual_mix(kb, 1.5, seed=1, translations=translations)

    def test_english_translation_record_rejected(self, tmp_path):
        path = tmp_path / "tr.jsonl"
        write_kb(path, [kb_record(0, language="en")])
        with pytest.raises(ValueError, match="English"):
            load_translations(path)
