"""Chart-based transduction search, derivation replay and sampling.

Decoding walks the source tree bottom-up.  For every node and every rule
whose source side matches there, the candidate target fragments of the
rule's variables are combined; chart cells are keyed by target root
category, the boundary tokens of the partial yield (so ngram features can
be scored exactly when cells combine), and, during loss-augmented search,
the loss-argument state.  Beams cap each (source node, target category)
group, and combinations are explored best-first under a cube-pruning
heuristic that swaps the ngram log-probability for a unigram estimate,
rescoring survivors exactly.

A derivation records which rule rewrote which source node; replaying it
rebuilds both trees deterministically.  The generative sampler runs the
grammar forward to produce synthetic tree pairs.
"""

from __future__ import annotations

import heapq
from typing import Callable, Optional, Sequence

from .features import (FeatureSpace, LM_FEATURE, WC_SOURCE,
                       consumed_terminals, static_rule_features)
from .grammar import Grammar, RuleMatcher, SyncRule, match_source, matcher_for
from .lm import BOS, EOS, NgramModel
from .losses import LossSpec, LossState, Reference, make_reference
from .treebank import FRONTIER, INTERNAL, TERMINAL, Node, Tree, frontier, internal


class DecodeError(RuntimeError):
    pass


class UncoverableInputError(DecodeError):
    """No rule combination covers the source tree."""

    def __init__(self, node: Node):
        self.node = node
        super().__init__("no derivation covers source node %s (index %d)"
                         % (node.label, node.index))


class MalformedDerivationError(DecodeError):
    pass


class BeamSpec:
    """Per-(source node, target category) beam limits; None means unbounded."""

    __slots__ = ("unique", "total")

    def __init__(self, unique: Optional[int], total: Optional[int]):
        self.unique = unique
        self.total = total

    def __repr__(self):
        return "BeamSpec(unique=%r, total=%r)" % (self.unique, self.total)


DECODE_BEAM = BeamSpec(200, 500)
MODEL_SELECTION_BEAM = BeamSpec(100, 200)
EXACT_BEAM = BeamSpec(None, None)


# -- derivations --------------------------------------------------------------


class RuleApp:
    """One rule application; children follow rule.variables() order."""

    __slots__ = ("rule", "anchor", "children")

    def __init__(self, rule: SyncRule, anchor: Node, children: Sequence["RuleApp"]):
        self.rule = rule
        self.anchor = anchor
        self.children = tuple(children)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


class Derivation:
    """An ordered tiling of the source tree by rule applications."""

    def __init__(self, source: Tree, root: RuleApp, score: float = 0.0):
        self.source = source
        self.root = root
        self.score = score
        self._target: Optional[Tree] = None

    def applications(self) -> list[RuleApp]:
        return list(self.root.walk())

    def rules(self) -> list[SyncRule]:
        return [app.rule for app in self.root.walk()]

    def __len__(self):
        return len(self.applications())

    def target(self) -> Tree:
        if self._target is None:
            self._target = Tree(_build_target(self.root))
        return self._target


def _build_target(app: RuleApp) -> Node:
    by_gamma: dict[Node, RuleApp] = {}
    for (a, g), child in zip(app.rule.variables(), app.children):
        by_gamma[g] = child

    def instantiate(gnode: Node) -> Node:
        if gnode.kind == FRONTIER:
            return _build_target(by_gamma[gnode])
        if gnode.kind != INTERNAL:
            return Node(gnode.label, gnode.kind)
        return internal(gnode.label, [instantiate(c) for c in gnode.children])

    return instantiate(app.rule.gamma.root)


def apply_derivation(derivation: Derivation) -> tuple[Tree, Tree]:
    """Replay a derivation, verifying that it tiles its source tree.

    Returns the (source, target) pair.  Raises MalformedDerivationError when
    a rule fails to match at its anchor or child anchors disagree with the
    variable bindings.
    """

    def verify(app: RuleApp, node: Node):
        if app.anchor is not node:
            raise MalformedDerivationError(
                "application of %r anchored at %r, expected %r"
                % (app.rule, app.anchor, node))
        binding = match_source(app.rule, node)
        if binding is None:
            raise MalformedDerivationError(
                "rule %r does not match source node %s" % (app.rule, node))
        variables = app.rule.variables()
        if len(variables) != len(app.children):
            raise MalformedDerivationError(
                "rule %r expects %d children, got %d"
                % (app.rule, len(variables), len(app.children)))
        for (a, _g), child in zip(variables, app.children):
            verify(child, binding[a])

    verify(derivation.root, derivation.source.root)
    return derivation.source, derivation.target()


# -- chart decoding -----------------------------------------------------------


class _Entry:
    __slots__ = ("score", "heur", "left", "right", "short", "length",
                 "args", "rule", "anchor", "children", "seq")

    def __init__(self, score, heur, left, right, short, length, args,
                 rule, anchor, children, seq):
        self.score = score
        self.heur = heur
        self.left = left
        self.right = right
        self.short = short
        self.length = length
        self.args = args
        self.rule = rule
        self.anchor = anchor
        self.children = children
        self.seq = seq

    def key(self):
        ctx = (self.short, self.left, self.right)
        return (ctx, None if self.args is None else self.args.key())

    def expansion(self, slot):
        """Boundary-token view of this cell's yield, tagged with ``slot``."""
        if self.short:
            return [(t, slot) for t in self.left]
        out = [(t, slot) for t in self.left]
        out.append((None, slot))
        out.extend((t, slot) for t in self.right)
        return out


class _Decoder:
    def __init__(self, x: Tree, matcher: RuleMatcher, weights: dict[int, float],
                 model: NgramModel, space: FeatureSpace,
                 beam: BeamSpec, loss: Optional[LossState]):
        self.x = x
        self.matcher = matcher
        self.weights = weights
        self.model = model
        self.space = space
        self.beam = beam
        self.loss = loss
        self.lm_weight = weights.get(space.intern(LM_FEATURE), 0.0)
        self.wc_source_weight = weights.get(space.intern(WC_SOURCE), 0.0)
        self.order = model.order
        width = model.order - 1
        if loss is not None and loss.spec.item_kind == "ngram":
            width = max(width, loss.spec.max_ngram_order - 1)
        self.width = width
        self.seq = 0
        self.chart: dict[int, dict[str, list[_Entry]]] = {}
        self.rule_dot: dict[tuple, float] = {}
        self.consumed: dict[tuple, int] = {}

    def dot_rule(self, rule: SyncRule, anchor: Node) -> float:
        """Model score of one rule application (static part cached)."""
        key = (rule.key(), rule.provenance)
        val = self.rule_dot.get(key)
        if val is None:
            val = static_rule_features(rule, self.space).dot(self.weights)
            self.rule_dot[key] = val
        if self.wc_source_weight != 0.0:
            ckey = (key, anchor.index)
            consumed = self.consumed.get(ckey)
            if consumed is None:
                consumed = consumed_terminals(rule, anchor)
                self.consumed[ckey] = consumed
            val += self.wc_source_weight * consumed
        return val

    def run_root(self, root_category: Optional[str]):
        for node in self.x.postorder():
            if node.kind == INTERNAL:
                self.process_node(node)
        root = self.x.root
        category = root_category if root_category is not None else root.label
        groups = self.chart.get(root.index, {})
        if not groups:
            raise UncoverableInputError(self.first_uncovered())
        entries = groups.get(category)
        if not entries:
            raise UncoverableInputError(root)
        best = None
        for e in entries:
            total = e.score + self.root_attachment(e)
            key = (total, -e.length)
            if best is None or key > best[0]:
                best = (key, [e])
            elif key == best[0]:
                best[1].append(e)
        candidates = best[1]
        if len(candidates) > 1:
            # equal score and length: smallest yield wins
            def yield_of(entry):
                d = self.to_derivation(entry)
                return d.target().tokens()
            candidates.sort(key=yield_of)
        final = candidates[0]
        derivation = self.to_derivation(final)
        derivation.score = best[0][0]
        return derivation

    def first_uncovered(self) -> Node:
        for node in self.x.postorder():
            if node.kind == INTERNAL and not self.chart.get(node.index):
                return node
        return self.x.root

    def process_node(self, node: Node) -> None:
        by_category: dict[str, list] = {}
        for rule, binding in self.matcher.match_at(node):
            slots = []
            feasible = True
            for a, g in rule.variables():
                child = binding[a]
                group = self.chart.get(child.index, {}).get(g.label)
                if not group:
                    feasible = False
                    break
                slots.append(group)
            if not feasible:
                continue
            by_category.setdefault(rule.tgt_root, []).append((rule, binding, slots))
        groups: dict[str, list[_Entry]] = {}
        for category in sorted(by_category):
            entries = self.build_group(node, by_category[category])
            if entries:
                groups[category] = entries
        if groups:
            self.chart[node.index] = groups

    def build_group(self, node: Node, instances) -> list[_Entry]:
        """Best-first combination of all rule instances for one (node, Y)."""
        best: dict[tuple, _Entry] = {}
        heap = []
        visited = set()

        def push(inst_idx, ivec):
            if (inst_idx, ivec) in visited:
                return
            visited.add((inst_idx, ivec))
            rule, binding, slots = instances[inst_idx]
            estimate = self.dot_rule(rule, node) + sum(
                slots[k][ivec[k]].heur for k in range(len(slots)))
            self.seq += 1
            heapq.heappush(heap, (-estimate, self.seq, inst_idx, ivec))

        for idx in range(len(instances)):
            push(idx, (0,) * len(instances[idx][2]))

        pops = 0
        while heap:
            if self.beam.total is not None and pops >= self.beam.total:
                break
            if self.beam.unique is not None and len(best) >= self.beam.unique:
                break
            _, _, inst_idx, ivec = heapq.heappop(heap)
            pops += 1
            rule, binding, slots = instances[inst_idx]
            children = [slots[k][ivec[k]] for k in range(len(slots))]
            entry = self.combine(node, rule, children)
            key = entry.key()
            old = best.get(key)
            if old is None or entry.score > old.score:
                best[key] = entry
            for k in range(len(slots)):
                if ivec[k] + 1 < len(slots[k]):
                    push(inst_idx, ivec[:k] + (ivec[k] + 1,) + ivec[k + 1:])
        entries = sorted(best.values(), key=lambda e: (-e.heur, -e.score, e.seq))
        return entries

    def combine(self, anchor: Node, rule: SyncRule, children: list[_Entry]) -> _Entry:
        """Exactly score one rule application over chosen child entries."""
        elements: list[tuple[Optional[str], Optional[int]]] = []
        slot = 0
        length = 0
        for leaf in _gamma_fringe(rule):
            if leaf.kind == FRONTIER:
                elements.extend(children[slot].expansion(slot))
                length += children[slot].length
                slot += 1
            else:
                elements.append((leaf.label, None))
                length += 1
        rule_dot = self.dot_rule(rule, anchor)
        score = rule_dot + sum(c.score for c in children)
        heur = rule_dot + sum(c.heur for c in children)
        if self.lm_weight != 0.0:
            for window in _new_windows(elements, self.order):
                score += self.lm_weight * self.model.logprob(window)
                heur += self.lm_weight * self.model.logprob(window[-1:])
        args = None
        if self.loss is not None:
            items = list(self.loss.spec.rule_local_items(rule))
            if self.loss.spec.item_kind == "ngram":
                for k in range(1, self.loss.spec.max_ngram_order + 1):
                    items.extend(_new_windows(elements, k))
            args = self.loss.merge([c.args for c in children], items)
            partial = (self.loss.partial(args)
                       - sum(self.loss.partial(c.args) for c in children))
            score += partial
            heur += partial
        left, right, short = _context_of(elements, length, self.width)
        self.seq += 1
        return _Entry(score, heur, left, right, short, length, args,
                      rule, anchor, tuple(children), self.seq)

    def root_attachment(self, entry: _Entry) -> float:
        """Score contributions of the artificial root padding, plus the
        difference between final and partial loss for this entry."""
        total = 0.0
        expansion = entry.expansion(0)
        if self.lm_weight != 0.0:
            for window in _pad_windows(expansion, self.order):
                total += self.lm_weight * self.model.logprob(window)
        if self.loss is not None:
            items = []
            if self.loss.spec.item_kind == "ngram":
                for k in range(2, self.loss.spec.max_ngram_order + 1):
                    items.extend(_pad_windows(expansion, k))
            args = self.loss.merge([entry.args], items)
            total += (self.loss.finalize(args) - self.loss.partial(entry.args))
        return total

    def to_derivation(self, entry: _Entry) -> Derivation:
        memo: dict[int, RuleApp] = {}

        def build(e: _Entry) -> RuleApp:
            app = memo.get(id(e))
            if app is None:
                app = RuleApp(e.rule, e.anchor, [build(c) for c in e.children])
                memo[id(e)] = app
            return app

        return Derivation(self.x, build(entry))


def _gamma_fringe(rule: SyncRule) -> list[Node]:
    out = []

    def walk(n: Node):
        if n.children:
            for c in n.children:
                walk(c)
        else:
            out.append(n)

    walk(rule.gamma.root)
    return out


def _new_windows(elements, k: int) -> list[tuple[str, ...]]:
    """Length-k token windows formed at this combination step.

    A window is new unless it lies entirely within one child's
    contribution (those were scored when the child cell was built); windows
    crossing an elided middle are skipped.
    """
    out = []
    n = len(elements)
    for i in range(n - k + 1):
        window = elements[i:i + k]
        ok = True
        origin = None
        fresh = False
        for tok, org in window:
            if tok is None:
                ok = False
                break
            if org is None:
                fresh = True
            elif origin is None:
                origin = org
            elif org != origin:
                fresh = True
        if ok and (fresh or origin is None):
            out.append(tuple(t for t, _ in window))
    return out


def _pad_windows(expansion, k: int) -> list[tuple[str, ...]]:
    """Windows of the padded root yield that touch a padding symbol."""
    if k < 2:
        return [(EOS,)]
    padded = ([(BOS, "pad")] * (k - 1)) + list(expansion) + [(EOS, "pad")]
    out = []
    for i in range(len(padded) - k + 1):
        window = padded[i:i + k]
        if any(t is None for t, _ in window):
            continue
        if any(org == "pad" for _, org in window):
            out.append(tuple(t for t, _ in window))
    return out


def _context_of(elements, length: int, width: int):
    tokens_left = []
    for tok, _ in elements:
        if tok is None or len(tokens_left) >= width:
            break
        tokens_left.append(tok)
    tokens_right = []
    for tok, _ in reversed(elements):
        if tok is None or len(tokens_right) >= width:
            break
        tokens_right.append(tok)
    tokens_right.reverse()
    short = length < width
    if short:
        full = tuple(t for t, _ in elements)
        return full, full, True
    return tuple(tokens_left), tuple(tokens_right), False


def decode(x: Tree, grammar: Grammar, weights: dict[int, float],
           model: NgramModel, space: FeatureSpace,
           beam: BeamSpec = DECODE_BEAM,
           synthesize: Sequence[str] = ("copy", "delete"),
           root_category: Optional[str] = None) -> Derivation:
    """Best derivation of ``x`` under the weighted grammar and ngram model.

    Exact when the beam is unbounded; raises UncoverableInputError when no
    derivation exists.
    """
    matcher = matcher_for(grammar, x, synthesize or ())
    dec = _Decoder(x, matcher, weights, model, space, beam, None)
    return dec.run_root(root_category if root_category is not None
                        else grammar.tgt_root)


def loss_augmented_decode(x: Tree, reference, grammar: Grammar,
                          weights: dict[int, float], model: NgramModel,
                          space: FeatureSpace, spec: LossSpec,
                          beam: BeamSpec = DECODE_BEAM,
                          synthesize: Sequence[str] = ("copy", "delete"),
                          root_category: Optional[str] = None) -> Derivation:
    """Approximate argmax of loss plus model score (the search direction
    used to find most-violated constraints).

    ``reference`` is the gold target tree or a Reference already built with
    the same loss spec.  The returned derivation's ``score`` is the
    maximized objective (loss plus model score of the returned output).
    """
    ref = reference if isinstance(reference, Reference) else make_reference(spec, reference)
    state = LossState(spec, ref)
    matcher = matcher_for(grammar, x, synthesize or ())
    dec = _Decoder(x, matcher, weights, model, space, beam, state)
    return dec.run_root(root_category if root_category is not None
                        else grammar.tgt_root)


# -- generative sampling ------------------------------------------------------


class SamplingError(RuntimeError):
    pass


def sample_pair(grammar: Grammar,
                chooser: Callable[[tuple[str, str], list[SyncRule]], SyncRule],
                max_nodes: int = 10000) -> tuple[Tree, Tree]:
    """Run the grammar generatively from its root pair.

    ``chooser`` picks a rule for each frontier pair; frontier pairs are
    expanded leftmost-first (alpha frontier order).  Source subtrees below
    epsilon frontiers are filled in source-side-only when rules rooted at
    that label exist, and otherwise remain as frontier stubs.
    """
    if grammar.src_root is None or grammar.tgt_root is None:
        raise SamplingError("grammar has no start symbols")
    by_pair: dict[tuple[str, str], list[SyncRule]] = {}
    by_src: dict[str, list[SyncRule]] = {}
    for r in grammar.rules:
        by_pair.setdefault((r.src_root, r.tgt_root), []).append(r)
        by_src.setdefault(r.src_root, []).append(r)
    budget = [max_nodes]

    def spend():
        budget[0] -= 1
        if budget[0] < 0:
            raise SamplingError("sampling exceeded %d nodes" % max_nodes)

    def expand_pair(pair: tuple[str, str]) -> tuple[Node, Node]:
        spend()
        candidates = by_pair.get(pair)
        if not candidates:
            raise SamplingError("no rule for frontier pair %s/%s" % pair)
        rule = chooser(pair, candidates)
        src_subs: dict[Node, Node] = {}
        for a, k in zip(rule.alpha_frontiers(), rule.links):
            if k is None:
                src_subs[a] = expand_source(a.label)
        tgt_subs: dict[Node, Node] = {}
        for a, g in rule.variables():
            s, t = expand_pair((a.label, g.label))
            src_subs[a] = s
            tgt_subs[g] = t
        return (_instantiate(rule.alpha.root, src_subs),
                _instantiate(rule.gamma.root, tgt_subs))

    def expand_source(label: str) -> Node:
        spend()
        candidates = by_src.get(label)
        if not candidates:
            return frontier(label)
        rule = chooser((label, "*"), candidates)
        subs: dict[Node, Node] = {}
        for a in rule.alpha_frontiers():
            subs[a] = expand_source(a.label)
        return _instantiate(rule.alpha.root, subs)

    src_root, tgt_root = expand_pair((grammar.src_root, grammar.tgt_root))
    return Tree(src_root), Tree(tgt_root)


def _instantiate(node: Node, subs: dict[Node, Node]) -> Node:
    if node in subs:
        return subs[node]
    if node.kind != INTERNAL:
        return Node(node.label, node.kind)
    return internal(node.label, [_instantiate(c, subs) for c in node.children])


def random_chooser(rng):
    """Uniform rule choice under a random.Random instance."""

    def choose(pair, candidates):
        return candidates[rng.randrange(len(candidates))]

    return choose


# -- gold derivations (maximum-rule alignment) --------------------------------


def match_gamma(rule: SyncRule, node: Node) -> Optional[dict[Node, Node]]:
    """Match gamma against a target subtree; binds gamma frontiers."""
    binding: dict[Node, Node] = {}

    def walk(g: Node, t: Node) -> bool:
        if g.kind == FRONTIER:
            if t.kind == TERMINAL or t.label != g.label:
                return False
            binding[g] = t
            return True
        if g.kind == TERMINAL:
            return t.kind == TERMINAL and t.label == g.label
        if t.kind != INTERNAL or t.label != g.label:
            return False
        if len(g.children) != len(t.children):
            return False
        return all(walk(gc, tc) for gc, tc in zip(g.children, t.children))

    if walk(rule.gamma.root, node):
        return binding
    return None


def gold_derivation(x: Tree, y: Tree, grammar: Grammar) -> Optional[Derivation]:
    """The derivation of (x, y) using the maximum number of rules.

    Chart over (source node, target node) pairs; None when the grammar
    cannot transduce x into y.  Ties prefer the smaller serialized rule.
    """
    by_label: dict[str, list[Node]] = {}
    for t in y.nodes:
        if t.kind != TERMINAL:
            by_label.setdefault(t.label, []).append(t)
    # count chart and backpointers
    counts: dict[tuple[int, int], int] = {}
    tiebreak: dict[tuple[int, int], tuple] = {}
    back: dict[tuple[int, int], tuple] = {}
    for vs in x.postorder():
        if vs.kind != INTERNAL:
            continue
        for rule, binding in grammar.match_at(vs):
            for vt in by_label.get(rule.tgt_root, ()):
                gb = match_gamma(rule, vt)
                if gb is None:
                    continue
                total = 1
                child_cells = []
                ok = True
                for a, g in rule.variables():
                    cell = (binding[a].index, gb[g].index)
                    sub = counts.get(cell)
                    if sub is None:
                        ok = False
                        break
                    total += sub
                    child_cells.append(cell)
                if not ok:
                    continue
                cell = (vs.index, vt.index)
                contender = (rule.identity(), tuple(child_cells))
                if (total > counts.get(cell, -1)
                        or (total == counts.get(cell, -1)
                            and contender < tiebreak[cell])):
                    counts[cell] = total
                    tiebreak[cell] = contender
                    back[cell] = (rule, binding, gb)
    root_cell = (x.root.index, y.root.index)
    if root_cell not in counts:
        return None

    def build(cell) -> RuleApp:
        rule, binding, gb = back[cell]
        children = []
        for a, g in rule.variables():
            children.append(build((binding[a].index, gb[g].index)))
        return RuleApp(rule, x.nodes[cell[0]], children)

    d = Derivation(x, build(root_cell))
    d.score = float(counts[root_cell])
    return d
