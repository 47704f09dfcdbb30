"""Sparse feature vectors over rules and target ngrams.

Feature names are structured strings (template prefix plus serialized
content) interned to stable integer ids; the learned model is persisted by
name, so ids never leak into files.  Vectors are sparse maps with no
explicit zeros; real-valued features (counts, length difference, the ngram
log-probability) coexist with binary indicators.

The rule templates: provenance type; source/target root categories and
their conjunction; lexicalized and unlexicalized identity of either side
and of the whole rule plus an alpha-equals-gamma test; a constant rule
counter; target and source terminal counts; terminal-yield and
frontier-non-terminal-yield comparisons; and frontier length difference
with a target-shorter indicator.
"""

from __future__ import annotations

from typing import Optional

from .lm import NgramModel, padded_ngrams
from .treebank import FRONTIER, INTERNAL, TERMINAL, Node, Tree
from .grammar import SyncRule, match_source


class FeatureSpace:
    """Interns feature names to dense integer ids (same name, same id)."""

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        self._rule_cache: dict[tuple, FeatureVector] = {}

    def __len__(self):
        return len(self._names)

    def intern(self, name: str) -> int:
        fid = self._ids.get(name)
        if fid is None:
            fid = len(self._names)
            self._ids[name] = fid
            self._names.append(name)
        return fid

    def name(self, fid: int) -> str:
        return self._names[fid]

    def lookup(self, name: str) -> Optional[int]:
        return self._ids.get(name)


class FeatureVector:
    """Sparse feature-id -> value map supporting exact accumulation."""

    __slots__ = ("entries",)

    def __init__(self, entries: Optional[dict[int, float]] = None):
        self.entries = dict(entries) if entries else {}

    def add(self, fid: int, value: float = 1.0) -> None:
        if value == 0.0:
            return
        new = self.entries.get(fid, 0.0) + value
        if new == 0.0:
            self.entries.pop(fid, None)
        else:
            self.entries[fid] = new

    def __iadd__(self, other: "FeatureVector") -> "FeatureVector":
        for fid, v in other.entries.items():
            self.add(fid, v)
        return self

    def __add__(self, other: "FeatureVector") -> "FeatureVector":
        out = FeatureVector(self.entries)
        out += other
        return out

    def __sub__(self, other: "FeatureVector") -> "FeatureVector":
        out = FeatureVector(self.entries)
        for fid, v in other.entries.items():
            out.add(fid, -v)
        return out

    def scaled(self, factor: float) -> "FeatureVector":
        return FeatureVector({k: v * factor for k, v in self.entries.items()})

    def dot(self, weights: dict[int, float]) -> float:
        return sum(v * weights.get(k, 0.0) for k, v in self.entries.items())

    def norm2(self) -> float:
        return sum(v * v for v in self.entries.values())

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, FeatureVector) and self.entries == other.entries

    def items(self):
        return self.entries.items()

    def named(self, space: FeatureSpace) -> dict[str, float]:
        return {space.name(k): v for k, v in sorted(self.entries.items())}

    def __repr__(self):
        return "FeatureVector(%d entries)" % len(self.entries)


# -- rule templates -----------------------------------------------------------

LM_FEATURE = "lm_logprob"
WC_SOURCE = "wc_source"


def _nt_fringe(tree: Tree) -> list[str]:
    """Frontier non-terminal sequence: variables, or preterminals of tokens."""
    out: list[str] = []

    def walk(node: Node, parent: Optional[Node]):
        if node.kind == FRONTIER:
            out.append(node.label)
        elif node.kind == TERMINAL:
            out.append(parent.label if parent is not None else node.label)
        else:
            for c in node.children:
                walk(c, node)

    walk(tree.root, None)
    return out


def _terminal_yield(tree: Tree) -> list[str]:
    return tree.tokens()


def _plain(node: Node) -> str:
    """Bracketed form with frontier labels bare (no co-indices)."""
    if node.kind != INTERNAL:
        return node.label
    return "[%s %s]" % (node.label, " ".join(_plain(c) for c in node.children))


def _unlex(node: Node) -> Optional[str]:
    """Bracketed form with terminals stripped; childless nodes become bare."""
    if node.kind == TERMINAL:
        return None
    if node.kind == FRONTIER:
        return node.label
    kids = [s for s in (_unlex(c) for c in node.children) if s is not None]
    if not kids:
        return node.label
    return "[%s %s]" % (node.label, " ".join(kids))


def consumed_terminals(rule: SyncRule, anchor: Node) -> int:
    """Source terminals this application consumes: the lexical part of the
    source side plus everything under its epsilon-deleted frontiers.

    Summed over a complete derivation this gives the source length, and
    subtracting the target terminal count gives the words the rule deletes.
    The value depends on the subtrees at the anchor, so it can only be
    computed once the rule is applied.
    """
    binding = match_source(rule, anchor)
    if binding is None:
        raise ValueError("rule does not match the given anchor")
    n = sum(1 for node in rule.alpha.nodes if node.kind == TERMINAL)
    for a, k in zip(rule.alpha_frontiers(), rule.links):
        if k is None:
            span = binding[a].span
            if span is not None:
                n += span[1] - span[0] + 1
    return n


def rule_features(rule: SyncRule, source: Tree, anchor: Node,
                  space: Optional[FeatureSpace] = None) -> FeatureVector:
    """Feature vector for one rule application anchored in ``source``.

    Everything except the consumed-source-terminal count is a pure function
    of the rule (and cached); that one count needs the anchor.
    """
    if space is None:
        raise ValueError("a FeatureSpace is required")
    fv = static_rule_features(rule, space)
    out = FeatureVector(fv.entries)
    out.add(space.intern(WC_SOURCE), float(consumed_terminals(rule, anchor)))
    return out


def static_rule_features(rule: SyncRule, space: FeatureSpace) -> FeatureVector:
    """The source-independent part of :func:`rule_features` (cached)."""
    key = (rule.key(), rule.provenance)
    hit = space._rule_cache.get(key)
    if hit is not None:
        return hit
    fv = FeatureVector()
    add = lambda name, value=1.0: fv.add(space.intern(name), value)

    add("type=%s" % rule.provenance)
    add("sroot=%s" % rule.src_root)
    add("troot=%s" % rule.tgt_root)
    add("roots=%s|%s" % (rule.src_root, rule.tgt_root))

    alpha_s = _plain(rule.alpha.root)
    gamma_s = _plain(rule.gamma.root)
    add("alpha=%s" % alpha_s)
    add("gamma=%s" % gamma_s)
    add("rule=%s" % rule.identity())
    if rule.alpha == rule.gamma:
        add("alpha_eq_gamma")

    ua = _unlex(rule.alpha.root)
    ug = _unlex(rule.gamma.root)
    add("ualpha=%s" % ua)
    add("ugamma=%s" % ug)
    add("urule=%s|%s|%s" % (ua, ug, rule.links_field()))
    if ua == ug:
        add("ualpha_eq_ugamma")

    add("rule_count")
    tgt_terms = _terminal_yield(rule.gamma)
    add("wc_target", float(len(tgt_terms)))

    src_terms = _terminal_yield(rule.alpha)
    add("yield_pair=%s|%s" % (" ".join(src_terms), " ".join(tgt_terms)))
    tgt_set = set(tgt_terms)
    for w in sorted(set(src_terms)):
        if w in tgt_set:
            add("yield_both=%s" % w)
        else:
            add("yield_src=%s" % w)

    src_nts = _nt_fringe(rule.alpha)
    tgt_nts = _nt_fringe(rule.gamma)
    add("ntyield_pair=%s|%s" % (" ".join(src_nts), " ".join(tgt_nts)))
    tgt_nt_set = set(tgt_nts)
    for l in sorted(set(src_nts)):
        if l in tgt_nt_set:
            add("nt_both=%s" % l)
        else:
            add("nt_src=%s" % l)

    add("len_diff", float(len(src_nts) - len(tgt_nts)))
    if len(tgt_nts) < len(src_nts):
        add("tgt_shorter")

    space._rule_cache[key] = fv
    return fv


def ngram_feature(model: NgramModel, ngram, space: FeatureSpace) -> FeatureVector:
    """The single real-valued ngram feature: conditional log10 probability."""
    fv = FeatureVector()
    fv.add(space.intern(LM_FEATURE), model.logprob(ngram))
    return fv


def derivation_features(derivation, source: Tree, model: NgramModel,
                        space: FeatureSpace) -> FeatureVector:
    """Sum of rule features plus the ngram feature over the padded yield."""
    fv = FeatureVector()
    for app in derivation.applications():
        fv += rule_features(app.rule, source, app.anchor, space=space)
    target = derivation.target()
    for ngram in padded_ngrams(target.tokens(), model.order):
        fv += ngram_feature(model, ngram, space)
    return fv


# -- model files --------------------------------------------------------------


def save_weights(path, weights: dict[int, float], space: FeatureSpace) -> None:
    rows = sorted((space.name(fid), w) for fid, w in weights.items() if w != 0.0)
    with open(path, "w", encoding="utf-8") as fh:
        for name, w in rows:
            fh.write("%s\t%.12g\n" % (name, w))


def load_weights(path, space: FeatureSpace) -> dict[int, float]:
    """Read name/weight pairs; unseen names are interned for later use."""
    weights: dict[int, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                name, value = line.split("\t")
                weights[space.intern(name)] = float(value)
            except ValueError:
                raise ValueError("%s:%d: bad model line %r" % (path, lineno, line)) from None
    return weights
