"""Scene vocabulary and semantic compatibility groups.

Category strings are canonicalized (lowercase, underscores and runs of
whitespace folded to single spaces). The per-view category lines are unioned
into a scene vocabulary, and a grouping response of ``name: [a, b, ...]``
lines is turned into a partition of that vocabulary.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import UnknownCategoryError

logger = logging.getLogger(__name__)

DEFAULT_K = 5

_SPACE_RE = re.compile(r"[\s_]+")
_GROUP_LINE_RE = re.compile(r"^\s*(?P<name>[^:\[\]]+?)\s*:\s*\[(?P<members>[^\[\]]*)\]\s*$")


def canonicalize(raw: str) -> str:
    """Canonical category form. An empty return value means "drop this token".

    >>> canonicalize("Trash_can")
    'trash can'
    """
    return _SPACE_RE.sub(" ", raw.lower()).strip()


def parse_vocab_response(text: str, k: int = DEFAULT_K) -> list[str]:
    """Parse one comma-separated category line, keeping at most ``k`` entries."""
    out: list[str] = []
    for token in text.split(","):
        cat = canonicalize(token)
        if cat and cat not in out:
            out.append(cat)
    return out[:k]


@dataclass(frozen=True)
class SceneVocabulary:
    """Ordered, duplicate-free category set (first appearance wins)."""

    categories: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        index = {c: i for i, c in enumerate(self.categories)}
        if len(index) != len(self.categories):
            raise ValueError("vocabulary contains duplicates")
        object.__setattr__(self, "_index", index)

    def __contains__(self, cat) -> bool:
        return cat in self._index

    def __iter__(self):
        return iter(self.categories)

    def __len__(self) -> int:
        return len(self.categories)

    def index(self, cat: str) -> int:
        try:
            return self._index[cat]
        except KeyError:
            raise UnknownCategoryError(f"category {cat!r} is not in the scene vocabulary") from None


def aggregate_vocabulary(per_view: Iterable[Sequence[str]]) -> SceneVocabulary:
    seen: dict[str, None] = {}
    for cats in per_view:
        for c in cats:
            seen.setdefault(c, None)
    return SceneVocabulary(tuple(seen))


@dataclass(frozen=True)
class CompatibilityGroups:
    """Partition of a vocabulary into merge-eligible groups.

    ``groups`` lists the explicit (>= 2 member) groups by name; ``mapping``
    is total over the vocabulary. Unlisted categories get their own
    singleton group id.
    """

    groups: tuple[tuple[str, tuple[str, ...]], ...]
    mapping: Mapping[str, int] = field(repr=False)
    vocabulary: SceneVocabulary = field(repr=False, default_factory=SceneVocabulary)

    @classmethod
    def from_groups(cls, groups, vocab: SceneVocabulary) -> "CompatibilityGroups":
        groups = tuple((name, tuple(members)) for name, members in groups)
        mapping: dict[str, int] = {}
        for gid, (_, members) in enumerate(groups):
            for m in members:
                if m not in vocab:
                    raise UnknownCategoryError(f"group member {m!r} is not in the vocabulary")
                if m in mapping:
                    raise ValueError(f"category {m!r} appears in more than one group")
                mapping[m] = gid
            if len(members) < 2:
                raise ValueError("explicit groups need at least two members")
        next_id = len(groups)
        for c in vocab:
            if c not in mapping:
                mapping[c] = next_id
                next_id += 1
        return cls(groups, mapping, vocab)

    @classmethod
    def singletons(cls, vocab: SceneVocabulary) -> "CompatibilityGroups":
        """Each category in its own group (gating by exact category)."""
        return cls.from_groups((), vocab)

    @classmethod
    def universal(cls, vocab: SceneVocabulary) -> "CompatibilityGroups":
        """One group for everything, i.e. no semantic gating at all."""
        mapping = {c: 0 for c in vocab}
        groups = (("all", tuple(vocab)),) if len(vocab) >= 2 else ()
        return cls(groups, mapping, vocab)

    def group_names(self) -> dict[int, str]:
        return {gid: name for gid, (name, _) in enumerate(self.groups)}


def group_of(cat: str, groups: CompatibilityGroups) -> int:
    try:
        return groups.mapping[cat]
    except KeyError:
        raise UnknownCategoryError(
            f"category {cat!r} has no compatibility group; was it emitted outside the vocabulary?"
        ) from None


def parse_group_spec(text: str, vocab: SceneVocabulary) -> CompatibilityGroups:
    """Build compatibility groups from a grouping response.

    Lines that do not look like ``name: [a, b, ...]`` are skipped with a
    warning. Members outside the vocabulary are dropped, a category claimed
    by an earlier group is dropped from later ones, and groups left with
    fewer than two members are discarded.
    """
    claimed: set[str] = set()
    groups: list[tuple[str, tuple[str, ...]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _GROUP_LINE_RE.match(stripped)
        if m is None:
            logger.warning("grouping line %d is not 'name: [a, b, ...]': %r", lineno, stripped)
            continue
        members: list[str] = []
        for token in m.group("members").split(","):
            cat = canonicalize(token)
            if not cat or cat not in vocab or cat in claimed or cat in members:
                continue
            members.append(cat)
        if len(members) < 2:
            continue
        claimed.update(members)
        groups.append((m.group("name").strip(), tuple(members)))
    return CompatibilityGroups.from_groups(groups, vocab)


def format_group_spec(groups: CompatibilityGroups) -> str:
    return "".join(f"{name}: [{', '.join(members)}]\n" for name, members in groups.groups)
