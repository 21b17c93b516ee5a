import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalspan.corpus import (
    CharSpans,
    char_spans_to_token_spans,
    load_corpus,
    parse_annotated,
    plain_sentence,
    render_annotated,
    save_corpus,
    sentence_from_tagged,
    tokenize,
)
from causalspan.errors import ConsistencyError, FormatError, MalformedAnnotation

from .conftest import reference_token_texts

TABLE_SENTENCES = [
    "His arrest has sparked widespread protests by students, teachers as well as opposition parties.",
    "Month-long escalating protests to mark 4th anniversary of Mullivaikkal pogrom.",
    "They also rubbished suggestions that the student protests were losing steam [...]",
]


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == ()

    def test_trailing_period(self):
        toks = tokenize("the clash.")
        assert [t.text for t in toks] == ["the", "clash", "."]
        assert [(t.start_char, t.end_char) for t in toks] == [(0, 3), (4, 9), (9, 10)]

    def test_internal_hyphen_kept(self):
        toks = tokenize("Month-long escalating protests")
        assert [t.text for t in toks] == ["Month-long", "escalating", "protests"]

    @pytest.mark.parametrize("text", TABLE_SENTENCES)
    def test_matches_reference_splitter(self, text):
        assert [t.text for t in tokenize(text)] == reference_token_texts(text)

    def test_leading_punctuation(self):
        assert [t.text for t in tokenize('("quoted")')] == [
            "(", '"', "quoted", '"', ")",
        ]

    @given(st.text(max_size=80))
    @settings(max_examples=200)
    def test_offsets_partition_text(self, text):
        toks = tokenize(text)
        for tok in toks:
            assert text[tok.start_char : tok.end_char] == tok.text
        # non-overlapping and sorted
        for a, b in zip(toks, toks[1:]):
            assert a.end_char <= b.start_char
        # every non-space character is covered by exactly one token
        covered = sorted(i for t in toks for i in range(t.start_char, t.end_char))
        expected = [i for i, ch in enumerate(text) if not ch.isspace()]
        assert covered == expected


class TestParseAnnotated:
    def test_no_signal(self):
        tagged = (
            "<ARG0>Dissatisfied with the package</ARG0>, "
            "<ARG1>workers staged an all-night sit-in</ARG1>."
        )
        clean, ranges = parse_annotated(tagged)
        assert clean == (
            "Dissatisfied with the package, workers staged an all-night sit-in."
        )
        c0, c1 = ranges.cause
        e0, e1 = ranges.effect
        assert clean[c0:c1] == "Dissatisfied with the package"
        assert clean[e0:e1] == "workers staged an all-night sit-in"
        assert (c0, c1) == (0, 29)
        assert (e0, e1) == (31, 65)
        assert ranges.signal is None

    def test_minimal_with_signal(self):
        clean, ranges = parse_annotated(
            "<ARG0>A</ARG0> <SIG0>caused</SIG0> <ARG1>B</ARG1>"
        )
        assert clean == "A caused B"
        assert ranges.cause == (0, 1)
        assert ranges.signal == (2, 8)
        assert ranges.effect == (9, 10)

    def test_unbalanced_tag(self):
        with pytest.raises(MalformedAnnotation):
            parse_annotated("<ARG0>A <ARG1>B</ARG1>")

    def test_duplicate_tag(self):
        with pytest.raises(MalformedAnnotation) as exc:
            parse_annotated("<ARG0>A</ARG0> <ARG0>B</ARG0> <ARG1>C</ARG1>")
        assert exc.value.position >= 0

    def test_close_without_open(self):
        with pytest.raises(MalformedAnnotation):
            parse_annotated("A</ARG0> <ARG1>B</ARG1>")

    def test_missing_effect(self):
        with pytest.raises(MalformedAnnotation):
            parse_annotated("<ARG0>A</ARG0> caused B")


def brute_force_cover(tokens, lo, hi):
    """Oracle: indices of all tokens whose char range intersects [lo, hi)."""
    hit = [i for i, t in enumerate(tokens) if t.end_char > lo and t.start_char < hi]
    return (hit[0], hit[-1] + 1) if hit else None


class TestCharAlignment:
    def test_exact_alignment(self):
        sent = plain_sentence("x", "the clash.")
        rel = char_spans_to_token_spans(
            sent.tokens, CharSpans(cause=(0, 3), effect=(4, 9))
        )
        assert (rel.cause.start_tok, rel.cause.end_tok) == (0, 1)
        assert (rel.effect.start_tok, rel.effect.end_tok) == (1, 2)

    def test_two_token_cover(self):
        sent = plain_sentence("x", "the clash.")
        rel = char_spans_to_token_spans(
            sent.tokens, CharSpans(cause=(0, 9), effect=(9, 10))
        )
        assert (rel.cause.start_tok, rel.cause.end_tok) == (0, 2)

    def test_widening_logged(self, caplog):
        sent = plain_sentence("x", "the clash.")
        with caplog.at_level("WARNING", logger="causalspan.corpus"):
            rel = char_spans_to_token_spans(
                sent.tokens, CharSpans(cause=(1, 3), effect=(4, 9))
            )
        assert (rel.cause.start_tok, rel.cause.end_tok) == (0, 1)
        assert any("widened" in r.message for r in caplog.records)

    def test_all_subranges_match_bruteforce(self):
        # enumerate every char range over a 3-token fixture; the minimal
        # cover must agree with the independent intersection oracle
        from causalspan.corpus import Role, minimal_token_cover

        sent = plain_sentence("x", "ab cde f")
        tokens = sent.tokens
        n = len(sent.text)
        for lo in range(n):
            for hi in range(lo + 1, n + 1):
                expected = brute_force_cover(tokens, lo, hi)
                if expected is None:
                    continue
                span = minimal_token_cover(tokens, lo, hi, Role.CAUSE)
                assert (span.start_tok, span.end_tok) == expected


class TestRenderAnnotated:
    def test_round_trip_single_relation(self):
        tagged = "<ARG0>A</ARG0> <SIG0>caused</SIG0> <ARG1>B</ARG1>"
        sent = sentence_from_tagged("s1", [tagged])
        assert render_annotated(sent, 0) == tagged

    def test_no_signal_means_no_sig_tags(self):
        tagged = "<ARG0>heavy rain</ARG0> flooded <ARG1>the town</ARG1>"
        sent = sentence_from_tagged("s1", [tagged])
        assert "SIG0" not in render_annotated(sent, 0)

    def test_village_field_cause_tags(self, clash_sentence):
        rendered = render_annotated(clash_sentence, 1)
        assert "<ARG0>the use of a village field</ARG0>" in rendered

    def test_index_out_of_range(self, clash_sentence):
        with pytest.raises(IndexError):
            render_annotated(clash_sentence, 2)

    @given(st.data())
    @settings(max_examples=100)
    def test_reparse_reproduces_token_spans(self, data):
        from .conftest import make_sentence

        words = data.draw(
            st.lists(st.sampled_from("alpha beta gamma delta".split()),
                     min_size=2, max_size=8)
        )
        n = len(words)
        cut = data.draw(st.integers(1, n - 1))
        sent = make_sentence(words, [{"cause": (0, cut), "effect": (cut, n)}])
        rendered = render_annotated(sent, 0)
        reparsed = sentence_from_tagged("r", [rendered])
        assert reparsed.relations[0] == sent.relations[0]


class TestLoadCorpus:
    def test_empty_jsonl(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("")
        result = load_corpus(p, "jsonl")
        assert len(result.corpus) == 0
        assert result.rejected == []

    def test_two_relations_one_sentence(self, tmp_path):
        rec = {
            "id": "a",
            "causal": True,
            "relations": [
                "<ARG0>X</ARG0> <SIG0>so</SIG0> <ARG1>Y happened</ARG1>",
                "<ARG1>X</ARG1> so <ARG0>Y happened</ARG0>",
            ],
        }
        p = tmp_path / "c.jsonl"
        p.write_text(json.dumps(rec) + "\n")
        result = load_corpus(p, "jsonl")
        assert len(result.corpus) == 1
        assert len(result.corpus.sentences[0].relations) == 2

    def test_disagreeing_clean_text_rejected(self, tmp_path):
        rec = {
            "id": "a",
            "causal": True,
            "relations": [
                "<ARG0>X</ARG0> made <ARG1>Y</ARG1>",
                "<ARG0>X</ARG0> did <ARG1>Y</ARG1>",
            ],
        }
        p = tmp_path / "c.jsonl"
        p.write_text(json.dumps(rec) + "\n")
        result = load_corpus(p, "jsonl")
        assert len(result.corpus) == 0
        assert len(result.rejected) == 1
        assert "clean text" in result.rejected[0].message

    def test_malformed_annotation_rejected_others_kept(self, tmp_path):
        lines = [
            {"id": "ok", "causal": True,
             "relations": ["<ARG0>A</ARG0> <ARG1>B</ARG1>"]},
            {"id": "bad", "causal": True, "relations": ["<ARG0>A <ARG1>B</ARG1>"]},
            {"id": "plain", "causal": False, "text": "nothing here", "relations": []},
        ]
        p = tmp_path / "c.jsonl"
        p.write_text("\n".join(json.dumps(r) for r in lines) + "\n")
        result = load_corpus(p, "jsonl")
        assert [s.id for s in result.corpus] == ["ok", "plain"]
        assert len(result.rejected) == 1
        assert result.rejected[0].sentence_id == "bad"

    def test_causal_flag_must_match_relations(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text(json.dumps({"id": "a", "causal": True, "text": "x",
                                 "relations": []}) + "\n")
        result = load_corpus(p, "jsonl")
        assert len(result.corpus) == 0
        assert "causal flag" in result.rejected[0].message

    def test_rows_sharing_id_are_merged(self, tmp_path):
        lines = [
            {"id": "a", "causal": True,
             "relations": ["<ARG0>X</ARG0> so <ARG1>Y here</ARG1>"]},
            {"id": "a", "causal": True,
             "relations": ["<ARG1>X</ARG1> so <ARG0>Y here</ARG0>"]},
        ]
        p = tmp_path / "c.jsonl"
        p.write_text("\n".join(json.dumps(r) for r in lines) + "\n")
        result = load_corpus(p, "jsonl")
        assert len(result.corpus) == 1
        assert len(result.corpus.sentences[0].relations) == 2

    def test_csv_round_trip(self, tmp_path):
        rec = {
            "id": "a",
            "causal": True,
            "relations": ["<ARG0>rain</ARG0> <SIG0>caused</SIG0> <ARG1>floods</ARG1>"],
        }
        p = tmp_path / "c.jsonl"
        p.write_text(json.dumps(rec) + "\n")
        corpus = load_corpus(p, "jsonl").corpus
        csv_path = tmp_path / "c.csv"
        save_corpus(corpus, csv_path, "csv")
        reloaded = load_corpus(csv_path, "csv").corpus
        assert reloaded.sentences == corpus.sentences

    def test_csv_bad_header(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("id,causal\n1,true\n")
        with pytest.raises(FormatError):
            load_corpus(p, "csv")

    def test_csv_empty_file_is_empty_corpus(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("")
        assert len(load_corpus(p, "csv").corpus) == 0

    def test_jsonl_round_trip(self, tmp_path, clash_sentence):
        from causalspan.corpus import Corpus

        corpus = Corpus((clash_sentence,))
        p = tmp_path / "out.jsonl"
        save_corpus(corpus, p, "jsonl")
        reloaded = load_corpus(p, "jsonl").corpus
        assert reloaded.sentences[0].relations == clash_sentence.relations
        assert reloaded.sentences[0].text == clash_sentence.text
