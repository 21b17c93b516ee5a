import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalspan.corpus import CausalRelation, Corpus, Role, Span
from causalspan.errors import OverlapError, TooManyRelations
from causalspan.labeling import (
    ALL_O,
    LAYER_TAGS,
    LabelVocabulary,
    build_vocabulary,
    canonical_order,
    decode_stacked,
    encode_relation,
    is_valid_layer,
    repair_layer,
    stack_layers,
    truncate_relations,
)

from .conftest import make_sentence

# independent grammar oracle: a valid layer is a space-joined sequence of
# units, each either O or one complete span of a single role
_UNIT = "|".join(
    ["O"] + [f"B-{r}(?: I-{r})* L-{r}|U-{r}" for r in ("ARG0", "ARG1", "SIG0")]
)
_GRAMMAR = re.compile(rf"(?:{_UNIT})(?: (?:{_UNIT}))*")


def grammar_ok(tags):
    if not tags:
        return True
    return _GRAMMAR.fullmatch(" ".join(tags)) is not None


def test_layer_tag_inventory():
    assert len(LAYER_TAGS) == 13
    assert len(set(LAYER_TAGS)) == 13
    assert "O" in LAYER_TAGS


class TestEncodeRelation:
    def test_four_token_effect_span_bilou(self):
        # the effect span "Beijing launched a campaign" covers four tokens
        sent = make_sentence(["so", "Beijing", "launched", "a", "campaign"])
        rel = CausalRelation(
            cause=Span(0, 1, Role.CAUSE), effect=Span(1, 5, Role.EFFECT)
        )
        assert encode_relation(sent, rel) == [
            "U-ARG0", "B-ARG1", "I-ARG1", "I-ARG1", "L-ARG1",
        ]

    def test_single_token_cause_is_unit(self):
        sent = make_sentence(["rain", "brought", "floods"])
        rel = CausalRelation(
            cause=Span(0, 1, Role.CAUSE), effect=Span(2, 3, Role.EFFECT)
        )
        tags = encode_relation(sent, rel)
        assert tags == ["U-ARG0", "O", "U-ARG1"]

    def test_overlap_rejected(self):
        sent = make_sentence(["a", "b", "c"])
        rel = CausalRelation(
            cause=Span(0, 2, Role.CAUSE), effect=Span(1, 3, Role.EFFECT)
        )
        with pytest.raises(OverlapError):
            encode_relation(sent, rel)


class TestStackLayers:
    def test_clash_token_stacked_tag(self, clash_sentence):
        ordered = canonical_order(clash_sentence.relations)
        stacked = stack_layers(clash_sentence, ordered)
        idx = clash_sentence.token_texts().index("clash")
        assert stacked[idx] == "L-ARG0|L-ARG1|O"

    def test_single_relation_pads_with_o(self):
        sent = make_sentence(
            ["rain", "brought", "floods"], [{"cause": (0, 1), "effect": (2, 3)}]
        )
        stacked = stack_layers(sent, sent.relations)
        assert all(tag.endswith("|O|O") for tag in stacked)

    def test_zero_relations_all_o(self):
        sent = make_sentence(["nothing", "here"])
        assert stack_layers(sent, ()) == [ALL_O, ALL_O]

    def test_too_many_relations(self):
        sent = make_sentence(["a", "b"])
        rel = CausalRelation(
            cause=Span(0, 1, Role.CAUSE), effect=Span(1, 2, Role.EFFECT)
        )
        with pytest.raises(TooManyRelations):
            stack_layers(sent, (rel,) * 4)


class TestDecodeStacked:
    def test_round_trip_two_relations(self, clash_sentence):
        ordered = canonical_order(clash_sentence.relations)
        stacked = stack_layers(clash_sentence, ordered)
        assert decode_stacked(stacked) == ordered

    def test_clash_span_shared_with_opposite_roles(self, clash_sentence):
        ordered = canonical_order(clash_sentence.relations)
        decoded = decode_stacked(stack_layers(clash_sentence, ordered))
        assert (decoded[0].cause.start_tok, decoded[0].cause.end_tok) == (2, 4)
        assert (decoded[1].effect.start_tok, decoded[1].effect.end_tok) == (2, 4)

    def test_signal_only_layer_yields_no_relation(self):
        tags = ["U-SIG0|O|O", "O|O|O"]
        assert decode_stacked(tags) == []

    def test_empty_sequence(self):
        assert decode_stacked([]) == []


class TestRepairLayer:
    def test_orphan_inside_becomes_unit(self):
        assert repair_layer(["I-ARG0"]) == ["U-ARG0"]

    def test_unclosed_begin_closed(self):
        assert repair_layer(["B-ARG0", "I-ARG0"]) == ["B-ARG0", "L-ARG0"]

    def test_valid_sequence_unchanged(self):
        seq = ["B-ARG0", "L-ARG0", "O", "U-SIG0", "B-ARG1", "I-ARG1", "L-ARG1"]
        assert repair_layer(seq) == seq

    def test_role_change_closes_span(self):
        assert repair_layer(["B-ARG0", "I-ARG1"]) == ["U-ARG0", "U-ARG1"]

    @given(st.lists(st.sampled_from(LAYER_TAGS), max_size=12))
    @settings(max_examples=500)
    def test_repair_valid_and_idempotent(self, tags):
        repaired = repair_layer(tags)
        assert is_valid_layer(repaired)
        assert grammar_ok(repaired)
        assert repair_layer(repaired) == repaired

    @given(st.lists(st.sampled_from(LAYER_TAGS), max_size=12))
    @settings(max_examples=300)
    def test_validity_checker_matches_regex_oracle(self, tags):
        assert is_valid_layer(tags) == grammar_ok(tags)


class TestVocabulary:
    def test_empty_corpus(self):
        vocab = build_vocabulary([Corpus(())])
        assert vocab.labels == (ALL_O,)

    def test_observed_set_exactly(self):
        sent = make_sentence(["be", "it"], [{"cause": (0, 1), "effect": (1, 2)}])
        vocab = build_vocabulary([Corpus((sent,))])
        assert set(vocab.labels) == {ALL_O, "U-ARG0|O|O", "U-ARG1|O|O"}
        assert vocab.labels == tuple(sorted(vocab.labels))
        assert all(vocab.index[lab] == i for i, lab in enumerate(vocab.labels))

    def test_order_invariant_under_permutation(self, clash_sentence):
        other = make_sentence(
            ["rain", "brought", "floods"], [{"cause": (0, 1), "effect": (2, 3)}],
            sid="other",
        )
        v1 = build_vocabulary([Corpus((clash_sentence, other))])
        v2 = build_vocabulary([Corpus((other, clash_sentence))])
        assert v1.labels == v2.labels


class TestTruncateRelations:
    def _relation(self, c, e, s=None):
        return CausalRelation(
            cause=Span(*c, Role.CAUSE),
            effect=Span(*e, Role.EFFECT),
            signal=Span(*s, Role.SIGNAL) if s else None,
        )

    def test_four_relations_keep_first_three(self):
        words = [f"w{i}" for i in range(10)]
        rels = [
            {"cause": (6, 7), "effect": (8, 9)},
            {"cause": (0, 1), "effect": (2, 3)},
            {"cause": (4, 5), "effect": (5, 6)},
            {"cause": (7, 8), "effect": (9, 10)},
        ]
        sent = make_sentence(words, rels)
        out = truncate_relations(sent)
        assert len(out.relations) == 3
        assert [r.cause.start_tok for r in out.relations] == [0, 4, 6]

    def test_two_relations_unchanged(self):
        sent = make_sentence(
            ["a", "b", "c", "d"],
            [{"cause": (0, 1), "effect": (1, 2)},
             {"cause": (2, 3), "effect": (3, 4)}],
        )
        out = truncate_relations(sent)
        assert set(out.relations) == set(sent.relations)

    def test_tie_broken_by_effect_then_signal(self):
        words = [f"w{i}" for i in range(8)]
        r1 = self._relation((0, 1), (4, 5), (6, 7))
        r2 = self._relation((0, 1), (2, 3))
        r3 = self._relation((0, 1), (4, 5), (5, 6))
        sent = make_sentence(
            words, [{"cause": (0, 1), "effect": (1, 2)}]
        )
        ordered = canonical_order([r1, r2, r3])
        assert ordered == [r2, r3, r1]

    def test_absent_signal_sorts_after_present(self):
        r_nosig = self._relation((0, 1), (2, 3))
        r_sig = self._relation((0, 1), (2, 3), (4, 5))
        assert canonical_order([r_nosig, r_sig]) == [r_sig, r_nosig]


@st.composite
def sentence_with_relations(draw):
    n = draw(st.integers(4, 14))
    words = [f"t{i}" for i in range(n)]
    n_rel = draw(st.integers(0, 3))
    relations = []
    for _ in range(n_rel):
        # partition a few disjoint slots for this relation's spans
        bounds = sorted(draw(st.lists(st.integers(0, n - 1), min_size=4, max_size=4)))
        c = (bounds[0], bounds[1] + 1)
        e = (bounds[2], bounds[3] + 1)
        if c[1] > e[0]:  # overlap within the relation: shrink or skip
            continue
        spec = {"cause": c, "effect": e}
        if draw(st.booleans()) and c[1] < e[0]:
            spec["signal"] = (c[1], c[1] + 1)
        relations.append(spec)
    return make_sentence(words, relations)


class TestRoundTripProperty:
    @given(sentence_with_relations())
    @settings(max_examples=300)
    def test_decode_inverts_stack(self, sent):
        ordered = canonical_order(truncate_relations(sent).relations)
        stacked = stack_layers(sent, ordered)
        assert decode_stacked(stacked) == list(ordered)
