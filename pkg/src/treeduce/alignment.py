"""Word alignments and their lift to constituent alignments.

For deletion-only corpora the word alignment is computed automatically: the
target must be a (not necessarily contiguous) subsequence of the source, and
each target token is matched to the leftmost feasible source token, which
realizes the minimum deletion-only edit script deterministically.

A pair of constituents is aligned when some word link lands inside both
yields and no word link crosses the boundary of exactly one of them.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .treebank import INTERNAL, Node, Tree


class AlignmentError(ValueError):
    """Raised when a sentence pair cannot be aligned."""


class WordAlignment:
    """A set of (source index, target index) links, 0-indexed."""

    __slots__ = ("pairs",)

    def __init__(self, pairs: Iterable[tuple[int, int]]):
        self.pairs = frozenset((int(s), int(t)) for s, t in pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def __len__(self):
        return len(self.pairs)

    def __eq__(self, other):
        return isinstance(other, WordAlignment) and self.pairs == other.pairs

    def __hash__(self):
        return hash(self.pairs)

    def validate(self, n_source: int, n_target: int) -> None:
        for s, t in self.pairs:
            if not (0 <= s < n_source and 0 <= t < n_target):
                raise AlignmentError(
                    "link %d-%d out of range for %d/%d tokens"
                    % (s, t, n_source, n_target))

    @classmethod
    def from_pharaoh(cls, line: str) -> "WordAlignment":
        pairs = []
        for item in line.split():
            try:
                s, t = item.split("-")
                pairs.append((int(s), int(t)))
            except ValueError:
                raise AlignmentError("bad alignment item %r" % item) from None
        return cls(pairs)

    def to_pharaoh(self) -> str:
        return " ".join("%d-%d" % (s, t) for s, t in sorted(self.pairs))


def auto_align_deletion(source_tokens: Sequence[str],
                        target_tokens: Sequence[str]) -> WordAlignment:
    """Align a deletion-only pair; leftmost match on repeated tokens.

    Raises AlignmentError when the target is not a subsequence of the source
    (case-sensitive comparison).
    """
    pairs = []
    s = 0
    for t, tok in enumerate(target_tokens):
        while s < len(source_tokens) and source_tokens[s] != tok:
            s += 1
        if s >= len(source_tokens):
            raise AlignmentError(
                "target token %r (position %d) not found in source order" % (tok, t))
        pairs.append((s, t))
        s += 1
    return WordAlignment(pairs)


class ConstituentAlignment:
    """Aligned (source node, target node) pairs over a specific tree pair."""

    __slots__ = ("pairs", "_by_source")

    def __init__(self, pairs: Iterable[tuple[Node, Node]]):
        self.pairs = set(pairs)
        self._by_source: dict[Node, list[Node]] = {}
        for vs, vt in sorted(self.pairs, key=lambda p: (p[0].index, p[1].index)):
            self._by_source.setdefault(vs, []).append(vt)

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, pair):
        return pair in self.pairs

    def targets_of(self, source_node: Node) -> list[Node]:
        """Aligned target nodes of ``source_node``, in preorder."""
        return self._by_source.get(source_node, [])

    def as_index_pairs(self) -> set[tuple[int, int]]:
        return {(vs.index, vt.index) for vs, vt in self.pairs}


def _links_within(tree: Tree, alignment: WordAlignment, side: int):
    """Map each internal node to the frozen set of links inside its span."""
    out = {}
    for node in tree.nodes:
        if node.kind != INTERNAL:
            continue
        lo, hi = node.span if node.span is not None else (1, 0)
        links = frozenset(p for p in alignment.pairs if lo <= p[side] <= hi)
        out[node] = links
    return out


def constituent_align(x: Tree, y: Tree, alignment: WordAlignment) -> ConstituentAlignment:
    """All internal node pairs whose yields align with no crossing link.

    Equivalent to requiring that the links falling inside the source node's
    span are exactly the links falling inside the target node's span, and
    that this common set is non-empty.
    """
    alignment.validate(len(x.tokens()), len(y.tokens()))
    src_links = _links_within(x, alignment, 0)
    tgt_links = _links_within(y, alignment, 1)
    by_linkset: dict[frozenset, list[Node]] = {}
    for node, links in tgt_links.items():
        if links:
            by_linkset.setdefault(links, []).append(node)
    pairs = []
    for vs, links in src_links.items():
        if not links:
            continue
        for vt in by_linkset.get(links, ()):
            pairs.append((vs, vt))
    return ConstituentAlignment(pairs)


def read_alignments(path) -> list[WordAlignment]:
    """One Pharaoh-format line per sentence pair; blank lines mean no links."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                continue
            out.append(WordAlignment.from_pharaoh(line) if line else WordAlignment([]))
    return out


def write_alignments(path, alignments: Sequence[WordAlignment]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in alignments:
            fh.write(a.to_pharaoh())
            fh.write("\n")
