"""Synchronous tree-substitution rules and grammar induction.

A rule rewrites an aligned pair of non-terminals <X, Y> as a pair of
elementary trees (alpha for the source, gamma for the target) plus a
frontier alignment.  Every gamma frontier is linked to exactly one alpha
frontier; alpha frontiers may instead be epsilon-linked, which licenses
deleting the source subtree below them.  Linked frontier labels may differ,
so rules can change syntactic category.

Rules come from three places:

* extraction from constituent-aligned tree pairs, with optional
  depth-limited specialization that keeps descending past alignment
  matches to produce larger, more lexicalized variants;
* copy synthesis, which reproduces each source production verbatim and
  guarantees that any source tree can be transduced into itself;
* delete synthesis, which keeps head-ranked subsets of a production's
  children and deletes the rest.

Grammar files hold one rule per line::

    X Y ||| alpha ||| gamma ||| links ||| provenance ||| freq

where alpha/gamma use bracketed notation with frontier co-indices (``NT#1``)
and epsilon frontiers (``NT#e``), and the links field pairs alpha and gamma
frontier positions (``0-e 1-0``).  Terminal tokens containing ``#`` are not
representable in this format.
"""

from __future__ import annotations

import bisect
from collections import Counter
from typing import Iterable, Optional, Sequence

from . import heads
from .alignment import ConstituentAlignment, WordAlignment, constituent_align
from .treebank import (FRONTIER, INTERNAL, TERMINAL, Node, Tree, TreeError,
                       frontier, internal, parse_node, serialize_node,
                       terminal)

EXTRACTED = "extracted"
COPY = "copy"
DELETE = "delete"

MAX_VARIABLES = 5
MAX_NODES = 15


class GrammarError(ValueError):
    pass


class ExtractionError(GrammarError):
    """Raised when a tree pair cannot be decomposed (root pair unaligned)."""


class SyncRule:
    """One synchronous rewrite rule.

    ``links[j]`` gives, for the j-th alpha frontier (left to right), the
    index of its gamma frontier partner, or None when epsilon-linked.
    Equality and hashing are structural over (alpha, gamma, links);
    provenance is bookkeeping and does not distinguish rules.
    """

    __slots__ = ("alpha", "gamma", "links", "provenance", "_key", "_afr", "_gfr")

    def __init__(self, alpha: Tree, gamma: Tree,
                 links: Sequence[Optional[int]], provenance: str = EXTRACTED):
        self.alpha = alpha
        self.gamma = gamma
        self.links = tuple(links)
        self.provenance = provenance
        self._key = None
        self._afr = alpha.frontier_nodes()
        self._gfr = gamma.frontier_nodes()
        if len(self.links) != len(self._afr):
            raise GrammarError("links/frontier length mismatch")
        linked = [k for k in self.links if k is not None]
        if sorted(linked) != list(range(len(self._gfr))):
            raise GrammarError("gamma frontiers must be linked exactly once")
        if self.alpha.root.kind != INTERNAL:
            raise GrammarError("alpha must be a constituent")

    @property
    def src_root(self) -> str:
        return self.alpha.root.label

    @property
    def tgt_root(self) -> str:
        return self.gamma.root.label

    def alpha_frontiers(self) -> list[Node]:
        return self._afr

    def gamma_frontiers(self) -> list[Node]:
        return self._gfr

    def variables(self) -> list[tuple[Node, Node]]:
        """Linked (alpha frontier, gamma frontier) pairs, in alpha order."""
        return [(a, self._gfr[k])
                for a, k in zip(self._afr, self.links) if k is not None]

    def epsilon_frontiers(self) -> list[Node]:
        return [a for a, k in zip(self._afr, self.links) if k is None]

    def key(self):
        if self._key is None:
            self._key = (self.alpha.signature(), self.gamma.signature(), self.links)
        return self._key

    def __eq__(self, other):
        return isinstance(other, SyncRule) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    # -- wire format -------------------------------------------------------

    def _coindexed(self, which: str) -> str:
        numbers = {}
        for k in self.links:
            if k is not None:
                numbers[k] = len(numbers) + 1
        if which == "alpha":
            marks = iter(["e" if k is None else str(numbers[k]) for k in self.links])
            root = self.alpha.root
        else:
            marks = iter([str(numbers[i]) for i in range(len(self._gfr))])
            root = self.gamma.root
        return serialize_node(
            root,
            leaf_writer=lambda n: "%s#%s" % (n.label, next(marks))
            if n.kind == FRONTIER else n.label)

    def links_field(self) -> str:
        parts = ["%d-%s" % (j, "e" if k is None else str(k))
                 for j, k in enumerate(self.links)]
        return " ".join(parts) if parts else "-"

    def identity(self) -> str:
        """Canonical rule string without provenance or frequency."""
        return "%s %s ||| %s ||| %s ||| %s" % (
            self.src_root, self.tgt_root,
            self._coindexed("alpha"), self._coindexed("gamma"), self.links_field())

    def to_line(self, freq: int = 0) -> str:
        return "%s ||| %s ||| %d" % (self.identity(), self.provenance, freq)

    def __repr__(self):
        return "SyncRule(%s)" % self.identity()


def _frontier_leaf_maker(markers: list[str]):
    def make(atom: str) -> Node:
        label, sep, mark = atom.rpartition("#")
        if sep and label and (mark == "e" or mark.isdigit()):
            markers.append(mark)
            return frontier(label)
        return terminal(atom)
    return make


def parse_rule(line: str) -> tuple[SyncRule, int]:
    """Parse one grammar line into (rule, frequency)."""
    fields = [f.strip() for f in line.split("|||")]
    if len(fields) != 6:
        raise GrammarError("expected 6 |||-separated fields, got %d" % len(fields))
    head, alpha_s, gamma_s, links_s, prov, freq_s = fields
    try:
        x, y = head.split()
    except ValueError:
        raise GrammarError("bad rule head %r" % head) from None
    amarks: list[str] = []
    gmarks: list[str] = []
    alpha = Tree(parse_node(alpha_s, _frontier_leaf_maker(amarks)))
    gamma = Tree(parse_node(gamma_s, _frontier_leaf_maker(gmarks)))
    gpos: dict[str, int] = {}
    for i, m in enumerate(gmarks):
        if m == "e" or m in gpos:
            raise GrammarError("bad gamma co-index %r" % m)
        gpos[m] = i
    links: list[Optional[int]] = []
    for m in amarks:
        if m == "e":
            links.append(None)
        elif m in gpos:
            links.append(gpos[m])
        else:
            raise GrammarError("alpha co-index #%s unmatched in gamma" % m)
    if len(gpos) != sum(1 for k in links if k is not None):
        raise GrammarError("gamma co-indices unmatched in alpha")
    if prov not in (EXTRACTED, COPY, DELETE):
        raise GrammarError("unknown provenance %r" % prov)
    rule = SyncRule(alpha, gamma, links, prov)
    if rule.src_root != x or rule.tgt_root != y:
        raise GrammarError("rule head %s %s disagrees with the trees" % (x, y))
    if links_s != "-" and links_s != rule.links_field():
        raise GrammarError("links field %r disagrees with co-indices" % links_s)
    try:
        freq = int(freq_s)
    except ValueError:
        raise GrammarError("bad frequency %r" % freq_s) from None
    return rule, freq


# -- matching ---------------------------------------------------------------


def _surface_key(node: Node):
    return (node.label, tuple(c.label for c in node.children))


def match_source(rule: SyncRule, node: Node) -> Optional[dict[Node, Node]]:
    """Match alpha against the subtree at ``node``.

    Returns a binding from each alpha frontier (including epsilon-linked
    ones, which bind the source node deleted under them) to a source node,
    or None when alpha does not match.
    """
    binding: dict[Node, Node] = {}

    def walk(a: Node, s: Node) -> bool:
        if a.kind == FRONTIER:
            if s.kind == TERMINAL or s.label != a.label:
                return False
            binding[a] = s
            return True
        if a.kind == TERMINAL:
            return s.kind == TERMINAL and s.label == a.label
        if s.kind != INTERNAL or s.label != a.label:
            return False
        if len(a.children) != len(s.children):
            return False
        return all(walk(ac, sc) for ac, sc in zip(a.children, s.children))

    if walk(rule.alpha.root, node):
        return binding
    return None


class Grammar:
    """An ordered, duplicate-free rule collection with a source-shape index.

    The first rule added under a structural key wins; later duplicates only
    accumulate frequency.  ``src_root``/``tgt_root`` are the distinguished
    start symbols; when ``tgt_root`` is None decoders target the source
    tree's own root label.
    """

    def __init__(self, src_root: Optional[str] = None, tgt_root: Optional[str] = None):
        self.rules: list[SyncRule] = []
        self.freqs: dict[SyncRule, int] = {}
        self.src_root = src_root
        self.tgt_root = tgt_root
        self._index: dict[tuple, list[SyncRule]] = {}

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __contains__(self, rule):
        return rule in self.freqs

    def add(self, rule: SyncRule, freq: int = 0) -> SyncRule:
        """Insert or merge; returns the canonical stored instance."""
        if rule in self.freqs:
            for kept in self._index[_surface_key(rule.alpha.root)]:
                if kept == rule:
                    self.freqs[kept] += freq
                    return kept
        self.rules.append(rule)
        self.freqs[rule] = freq
        self._index.setdefault(_surface_key(rule.alpha.root), []).append(rule)
        return rule

    def update(self, rules: Iterable[SyncRule], freq: int = 0) -> None:
        for r in rules:
            self.add(r, freq)

    def candidates(self, node: Node) -> list[SyncRule]:
        if node.kind != INTERNAL:
            return []
        return self._index.get(_surface_key(node), [])

    def match_at(self, node: Node) -> list[tuple[SyncRule, dict[Node, Node]]]:
        out = []
        for rule in self.candidates(node):
            b = match_source(rule, node)
            if b is not None:
                out.append((rule, b))
        return out

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if self.src_root or self.tgt_root:
                fh.write("# roots: %s %s\n" % (self.src_root or "-", self.tgt_root or "-"))
            for rule in self.rules:
                fh.write(rule.to_line(self.freqs[rule]))
                fh.write("\n")

    @classmethod
    def load(cls, path) -> "Grammar":
        g = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line[1:].split()
                    if parts[:1] == ["roots:"] and len(parts) == 3:
                        g.src_root = None if parts[1] == "-" else parts[1]
                        g.tgt_root = None if parts[2] == "-" else parts[2]
                    continue
                try:
                    rule, freq = parse_rule(line)
                except (GrammarError, TreeError) as exc:
                    raise GrammarError("%s:%d: %s" % (path, lineno, exc)) from None
                g.add(rule, freq)
        return g


class RuleMatcher:
    """Grammar lookups augmented with per-sentence synthesized rules."""

    def __init__(self, grammar: Grammar, extra_rules: Iterable[SyncRule] = ()):
        self.grammar = grammar
        self.extra = Grammar()
        for r in extra_rules:
            if r not in grammar:
                self.extra.add(r)

    def match_at(self, node: Node) -> list[tuple[SyncRule, dict[Node, Node]]]:
        return self.grammar.match_at(node) + self.extra.match_at(node)


def matcher_for(grammar: Grammar, x: Tree, synthesize=("copy", "delete")) -> RuleMatcher:
    """Decode-time matcher with on-the-fly coverage rules for ``x``."""
    extra: list[SyncRule] = []
    if "copy" in synthesize:
        extra.extend(synthesize_copy_rules(x))
    if "delete" in synthesize:
        extra.extend(synthesize_delete_rules(x))
    return RuleMatcher(grammar, extra)


def filter_grammar(grammar: Grammar, max_targets_per_source: Optional[int]) -> Grammar:
    """Keep at most k extracted rules per distinct alpha, by frequency.

    Ties keep first-seen order; copy and delete rules are always retained.
    """
    out = Grammar(grammar.src_root, grammar.tgt_root)
    if max_targets_per_source is None:
        for r in grammar.rules:
            out.add(r, grammar.freqs[r])
        return out
    order = {r: i for i, r in enumerate(grammar.rules)}
    groups: dict[tuple, list[SyncRule]] = {}
    for r in grammar.rules:
        if r.provenance == EXTRACTED:
            groups.setdefault(r.alpha.signature(), []).append(r)
    keep = set()
    for members in groups.values():
        members.sort(key=lambda r: (-grammar.freqs[r], order[r]))
        keep.update(members[:max_targets_per_source])
    for r in grammar.rules:
        if r.provenance != EXTRACTED or r in keep:
            out.add(r, grammar.freqs[r])
    return out


# -- rule extraction ---------------------------------------------------------


def _truncating_copy(node: Node, cuts: dict[int, Node]) -> Node:
    if node.index in cuts:
        return frontier(node.label)
    if node.kind != INTERNAL:
        return Node(node.label, node.kind)
    return internal(node.label, [_truncating_copy(c, cuts) for c in node.children])


class _Extractor:
    """Extraction state for one constituent-aligned tree pair.

    The sweep over a rule's source side replaces deletable nodes with
    epsilon frontiers and aligned pairs with linked frontiers; descending
    past such a match instead is allowed up to ``depth`` times along any
    ancestor path, which generates the specialized rule variants.  When a
    source node aligns to several target nodes, the one with the same label
    is preferred, then the highest; this pins one canonical decomposition
    when mutually exclusive generalizations overlap.
    """

    def __init__(self, x: Tree, y: Tree, calign: ConstituentAlignment,
                 words: WordAlignment, depth: int, max_vars: int, max_nodes: int):
        self.x = x
        self.y = y
        self.calign = calign
        self.linked_src = sorted(s for s, _ in words.pairs)
        self.depth = depth
        self.max_vars = max_vars
        self.max_nodes = max_nodes
        self.tdepth: dict[Node, int] = {}
        self._depths(y.root, 0)
        self.in_region: dict[Node, set[Node]] = {}

    def _depths(self, node: Node, d: int) -> None:
        self.tdepth[node] = d
        for c in node.children:
            self._depths(c, d + 1)

    def run(self) -> list[SyncRule]:
        if (self.x.root, self.y.root) not in self.calign:
            raise ExtractionError("root pair is not constituent-aligned")
        occurrences: list[SyncRule] = []
        seen_pairs = set()
        agenda = [(self.x.root, self.y.root)]
        while agenda:
            vs, vt = agenda.pop()
            if (vs.index, vt.index) in seen_pairs:
                continue
            seen_pairs.add((vs.index, vt.index))
            for rule, child_pairs in self.pair_variants(vs, vt):
                occurrences.append(rule)
                agenda.extend(reversed(child_pairs))
        return occurrences

    def null_aligned(self, node: Node) -> bool:
        """No source word under ``node`` is aligned, so it may be deleted."""
        if node.span is None:
            return True
        lo, hi = node.span
        i = bisect.bisect_left(self.linked_src, lo)
        return not (i < len(self.linked_src) and self.linked_src[i] <= hi)

    def region(self, vt: Node) -> set[Node]:
        nodes = self.in_region.get(vt)
        if nodes is None:
            nodes = set()
            stack = [vt]
            while stack:
                n = stack.pop()
                nodes.add(n)
                stack.extend(n.children)
            self.in_region[vt] = nodes
        return nodes

    def choose_target(self, node: Node, vt: Node) -> Optional[Node]:
        region = self.region(vt)
        cands = [t for t in self.calign.targets_of(node) if t in region]
        if not cands:
            return None
        cands.sort(key=lambda t: (t.label != node.label, self.tdepth[t], t.index))
        return cands[0]

    def pair_variants(self, vs: Node, vt: Node):
        """(rule, child pairs) variants for one aligned pair.

        Depth 0 yields exactly the minimal rule; positive depths add every
        variant within the skip budget and the rule size caps.
        """

        def options(node: Node, budget: int):
            # yields (decisions, skipped) for the subtree at one source node
            if node.kind == TERMINAL:
                yield [], False
                return
            if node.kind == FRONTIER:
                yield [(node, None)], False
                return
            chosen = self.choose_target(node, vt)
            if chosen is not None:
                yield [(node, chosen)], False
                if budget > 0:
                    for d, _ in descend(node, budget - 1):
                        yield d, True
                return
            if self.null_aligned(node):
                yield [(node, None)], False
                if budget > 0:
                    for d, _ in descend(node, budget - 1):
                        yield d, True
                return
            # aligned words below but no constituent match: keep descending
            yield from descend(node, budget)

        def descend(node: Node, budget: int):
            def seq(children):
                if not children:
                    yield [], False
                    return
                for d0, s0 in options(children[0], budget):
                    for d1, s1 in seq(children[1:]):
                        yield d0 + d1, s0 or s1
            yield from seq(node.children)

        variants = []
        seen = set()
        for decisions, skipped in descend(vs, self.depth):
            built = self.build_rule(vs, vt, decisions)
            if built is None:
                continue
            rule, child_pairs = built
            if skipped and not self.within_caps(rule):
                continue
            if rule not in seen:
                seen.add(rule)
                variants.append((rule, child_pairs))
        return variants

    def build_rule(self, vs: Node, vt: Node, decisions):
        targets = [t for _, t in decisions if t is not None]
        if len(set(targets)) != len(targets):
            return None
        alpha_cuts = {node.index: node for node, _ in decisions}
        alpha = Tree(_truncating_copy(vs, alpha_cuts))
        gamma_order = sorted(targets, key=lambda t: t.index)
        gamma_pos = {t.index: i for i, t in enumerate(gamma_order)}
        gamma = Tree(_truncating_copy(vt, {t.index: t for t in targets}))
        links = [None if t is None else gamma_pos[t.index] for _, t in decisions]
        rule = SyncRule(alpha, gamma, links, EXTRACTED)
        child_pairs = [(n, t) for n, t in decisions if t is not None]
        return rule, child_pairs

    def within_caps(self, rule: SyncRule) -> bool:
        if len(rule.alpha_frontiers()) > self.max_vars:
            return False
        if len(rule.alpha.nodes) > self.max_nodes or len(rule.gamma.nodes) > self.max_nodes:
            return False
        return True


def extract_occurrences(x: Tree, y: Tree, calign: ConstituentAlignment,
                        words: WordAlignment, depth: int = 0,
                        max_vars: int = MAX_VARIABLES,
                        max_nodes: int = MAX_NODES) -> list[SyncRule]:
    """Extracted rules with one entry per emission (for frequency counting)."""
    ext = _Extractor(x, y, calign, words, depth, max_vars, max_nodes)
    return ext.run()


def _dedup(rules: Iterable[SyncRule]) -> list[SyncRule]:
    seen = set()
    out = []
    for r in rules:
        if r not in seen:
            seen.add(r)
            out.append(r)
    return out


def extract_minimal(x: Tree, y: Tree, calign: ConstituentAlignment,
                    words: WordAlignment) -> list[SyncRule]:
    """The minimal rule decomposition of one aligned tree pair."""
    return _dedup(extract_occurrences(x, y, calign, words, depth=0))


def extract_specialized(x: Tree, y: Tree, calign: ConstituentAlignment,
                        words: WordAlignment, depth: int,
                        max_vars: int = MAX_VARIABLES,
                        max_nodes: int = MAX_NODES) -> list[SyncRule]:
    """Minimal rules plus variants that skip up to ``depth`` nested matches."""
    return _dedup(extract_occurrences(x, y, calign, words, depth=depth,
                                      max_vars=max_vars, max_nodes=max_nodes))


# -- coverage-rule synthesis --------------------------------------------------


def _production_sides(node: Node) -> tuple[list[Node], list[Optional[int]]]:
    children = []
    links: list[Optional[int]] = []
    k = 0
    for c in node.children:
        if c.kind == TERMINAL:
            children.append(terminal(c.label))
        else:
            children.append(frontier(c.label))
            links.append(k)
            k += 1
    return children, links


def synthesize_copy_rules(x: Tree) -> list[SyncRule]:
    """One rule per internal node copying its production into the target."""
    out = []
    seen = set()
    for node in x.nodes:
        if node.kind != INTERNAL:
            continue
        a_children, links = _production_sides(node)
        g_children, _ = _production_sides(node)
        rule = SyncRule(Tree(internal(node.label, a_children)),
                        Tree(internal(node.label, g_children)),
                        links, COPY)
        if rule not in seen:
            seen.add(rule)
            out.append(rule)
    return out


def synthesize_delete_rules(x: Tree) -> list[SyncRule]:
    """Head-ranked child-deletion rules for every source production.

    For a production with ranked deletable children h1..hk this retains
    {h1}, {h1,h2}, ..., {h1..hk}, keeping surface order and epsilon-linking
    the rest.  When the retained set is a single child and the production
    has no terminal children, a variant eliding the parent (bare-frontier
    target) is also produced.
    """
    out = []
    seen = set()

    def emit(rule):
        if rule not in seen:
            seen.add(rule)
            out.append(rule)

    for node in x.nodes:
        if node.kind != INTERNAL:
            continue
        var_positions = [i for i, c in enumerate(node.children) if c.kind != TERMINAL]
        if not var_positions:
            continue
        labels = [node.children[i].label for i in var_positions]
        ranked = [var_positions[i] for i in heads.rank_head_positions(node.label, labels)]
        has_terminals = len(var_positions) != len(node.children)
        for m in range(1, len(ranked) + 1):
            retained = sorted(ranked[:m])
            a_children, _ = _production_sides(node)
            g_children = []
            links: list[Optional[int]] = []
            k = 0
            for i, c in enumerate(node.children):
                if c.kind == TERMINAL:
                    g_children.append(terminal(c.label))
                elif i in retained:
                    g_children.append(frontier(c.label))
                    links.append(k)
                    k += 1
                else:
                    links.append(None)
            alpha = Tree(internal(node.label, a_children))
            emit(SyncRule(alpha, Tree(internal(node.label, g_children)),
                          links, DELETE))
            if m == 1 and not has_terminals:
                bare = Tree(frontier(node.children[retained[0]].label))
                a_children, _ = _production_sides(node)
                alpha = Tree(internal(node.label, a_children))
                elinks = [0 if i == retained[0] else None for i in var_positions]
                emit(SyncRule(alpha, bare, elinks, DELETE))
    return out


# -- corpus-level induction ---------------------------------------------------


class PairReport:
    """Outcome of processing one sentence pair during induction."""

    __slots__ = ("index", "status", "message")

    def __init__(self, index: int, status: str, message: str = ""):
        self.index = index
        self.status = status
        self.message = message


def induce_grammar(pairs: Sequence[tuple[Tree, Tree]],
                   alignments: Sequence[WordAlignment],
                   depth: int = 1,
                   max_vars: int = MAX_VARIABLES,
                   max_nodes: int = MAX_NODES,
                   max_targets_per_source: Optional[int] = 50,
                   synthesize: Sequence[str] = ("copy", "delete"),
                   ) -> tuple[Grammar, list[PairReport]]:
    """Extract, synthesize and filter a grammar from an aligned corpus."""
    counts: Counter[SyncRule] = Counter()
    extracted: list[SyncRule] = []
    reports = []
    grammar = Grammar()
    for i, ((x, y), words) in enumerate(zip(pairs, alignments)):
        if grammar.src_root is None:
            grammar.src_root = x.root.label
            grammar.tgt_root = y.root.label
        try:
            calign = constituent_align(x, y, words)
            occurrences = extract_occurrences(x, y, calign, words, depth,
                                              max_vars, max_nodes)
        except (ExtractionError, ValueError) as exc:
            reports.append(PairReport(i, "skipped", str(exc)))
            continue
        for r in occurrences:
            if r not in counts:
                extracted.append(r)
            counts[r] += 1
        reports.append(PairReport(i, "ok", "%d rules" % len(occurrences)))
    for r in extracted:
        grammar.add(r, counts[r])
    for x, _ in pairs:
        if "copy" in synthesize:
            grammar.update(synthesize_copy_rules(x))
        if "delete" in synthesize:
            grammar.update(synthesize_delete_rules(x))
    return filter_grammar(grammar, max_targets_per_source), reports
