from __future__ import annotations

import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from group3d.errors import UnknownCategoryError
from group3d.vocabulary import (
    CompatibilityGroups,
    SceneVocabulary,
    aggregate_vocabulary,
    canonicalize,
    format_group_spec,
    group_of,
    parse_group_spec,
    parse_vocab_response,
)


@pytest.mark.parametrize("raw,expected", [
    ("Trash_can", "trash can"),
    ("chair", "chair"),
    ("  Washing  Machine ", "washing machine"),
    ("TV__stand\t", "tv stand"),
    ("  _ ", ""),
])
def test_canonicalize(raw, expected):
    assert canonicalize(raw) == expected


@given(st.text())
def test_canonicalize_idempotent_and_well_formed(raw):
    c = canonicalize(raw)
    assert canonicalize(c) == c
    assert c == c.strip() and "_" not in c and c == c.lower()
    assert "  " not in c


def test_parse_vocab_clean():
    assert parse_vocab_response("chair, table, sofa, lamp, door") == ["chair", "table", "sofa", "lamp", "door"]


def test_parse_vocab_dedupes_after_canonicalizing():
    assert parse_vocab_response("Chair, chair, TABLE") == ["chair", "table"]


def test_parse_vocab_truncates_to_k():
    assert parse_vocab_response("a, b, c, d, e, f", k=5) == ["a", "b", "c", "d", "e"]


def test_parse_vocab_empty_line():
    assert parse_vocab_response(" , ,") == []


def test_aggregate_union_first_appearance():
    v = aggregate_vocabulary([["chair", "table"], ["table", "sofa"]])
    assert v.categories == ("chair", "table", "sofa")


def test_aggregate_empty():
    assert len(aggregate_vocabulary([[], []])) == 0


def test_aggregate_repeated_views():
    labels = ["a", "b", "c", "d", "e"]
    assert len(aggregate_vocabulary([labels] * 128)) == 5


@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=5), max_size=8), st.randoms())
def test_aggregate_membership_order_insensitive(views, rnd):
    shuffled = list(views)
    rnd.shuffle(shuffled)
    assert set(aggregate_vocabulary(views)) == set(aggregate_vocabulary(shuffled))


def test_vocabulary_rejects_duplicates():
    with pytest.raises(ValueError):
        SceneVocabulary(("a", "a"))


def test_vocabulary_index_unknown():
    with pytest.raises(UnknownCategoryError):
        SceneVocabulary(("a",)).index("b")


# -- grouping -----------------------------------------------------------------------

VOCAB = SceneVocabulary(("chair", "sofa", "couch", "recliner", "bed", "table", "sink"))


def test_seating_group():
    g = parse_group_spec("seating: [chair, sofa, couch, recliner]", VOCAB)
    assert g.groups == (("seating", ("chair", "sofa", "couch", "recliner")),)
    assert len({group_of(c, g) for c in ("chair", "sofa", "couch", "recliner")}) == 1


def test_first_group_wins():
    g = parse_group_spec("g1: [chair, sofa]\ng2: [sofa, bed]", VOCAB)
    assert g.groups == (("g1", ("chair", "sofa")),)
    assert group_of("bed", g) != group_of("sofa", g)


def test_empty_text_gives_singletons():
    v = SceneVocabulary(("a", "b"))
    g = parse_group_spec("", v)
    assert g.groups == ()
    assert group_of("a", g) != group_of("b", g)


def test_members_outside_vocab_dropped_and_canonicalized():
    g = parse_group_spec("x: [Chair, Armchair, SOFA]", VOCAB)
    assert g.groups == (("x", ("chair", "sofa")),)


def test_unparseable_lines_skipped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        g = parse_group_spec("Here are the groups:\n# comment\nseat: [chair, sofa]\n", VOCAB)
    assert g.groups == (("seat", ("chair", "sofa")),)
    assert any("not 'name: [a, b, ...]'" in r.message for r in caplog.records)


def test_wholly_unparseable_text():
    g = parse_group_spec("no groups here\nat all", VOCAB)
    assert g.groups == ()
    assert len(set(g.mapping.values())) == len(VOCAB)


def test_group_of_examples():
    g = parse_group_spec("seat: [chair, sofa]", VOCAB)
    assert group_of("chair", g) == group_of("sofa", g)
    assert group_of("sink", g) not in {group_of(c, g) for c in VOCAB if c != "sink"}
    assert group_of("chair", g) != group_of("table", g)


def test_group_of_unknown_category():
    with pytest.raises(UnknownCategoryError):
        group_of("lamp", CompatibilityGroups.singletons(VOCAB))


def test_universal_and_singletons():
    u = CompatibilityGroups.universal(VOCAB)
    s = CompatibilityGroups.singletons(VOCAB)
    assert len(set(u.mapping.values())) == 1
    assert len(set(s.mapping.values())) == len(VOCAB)


def test_format_round_trip():
    g = parse_group_spec("a: [chair, sofa]\nb: [bed, table]", VOCAB)
    assert parse_group_spec(format_group_spec(g), VOCAB).groups == g.groups


group_line = st.tuples(
    st.text("abcxyz", min_size=1, max_size=4),
    st.lists(st.sampled_from(list(VOCAB) + ["lamp", "Chair", "door"]), max_size=6),
)


@given(st.lists(group_line, max_size=6))
def test_group_spec_is_a_partition(lines):
    text = "\n".join(f"{name}: [{', '.join(members)}]" for name, members in lines)
    g = parse_group_spec(text, VOCAB)
    assert set(g.mapping) == set(VOCAB)
    seen = set()
    for _, members in g.groups:
        assert len(members) >= 2
        assert all(m in VOCAB for m in members)
        assert not seen & set(members)
        seen |= set(members)
        assert len({g.mapping[m] for m in members}) == 1
    explicit_ids = {g.mapping[m] for m in seen}
    singles = [g.mapping[c] for c in VOCAB if c not in seen]
    assert len(set(singles)) == len(singles)
    assert not explicit_ids & set(singles)
