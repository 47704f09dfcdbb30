"""Loss functions over predicted versus reference compressions.

The losses operate on unordered bags of items.  The Hamming family counts
false positives plus a penalty for short output, over one of three item
kinds: target tokens, boundary-padded ngrams up to order three, or target
CFG productions (parent plus ordered child labels, including preterminal
to terminal).  True-positive membership is unclipped, so repeating an item
that occurs once in the reference is not penalized; the edit-distance and
F-score losses instead clip per-type counts against the reference.

All losses decompose into small argument states that chart search can
carry: the Hamming variants need only (TP, FP); the clipped-count losses
need per-reference-type counts plus an overflow cell.  The canonical
encodings of these states stratify the chart during loss-augmented
decoding, and a partial (lower-bound) value is available for beam ranking
before a derivation completes.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from .lm import BOS, EOS
from .treebank import Tree

HAMMING_TOKEN = "hamming-token"
HAMMING_NGRAM = "hamming-ngram"
HAMMING_CFG = "hamming-cfg"
EDIT = "edit"
F1 = "f1"

KINDS = (HAMMING_TOKEN, HAMMING_NGRAM, HAMMING_CFG, EDIT, F1)

NGRAM_LOSS_ORDER = 3


class LossSpec:
    """A loss choice plus its scaling knobs.

    ``length_penalty_scale`` multiplies only the short-output penalty of
    the Hamming losses; ``factor`` multiplies the whole loss and is the
    training-time scaling hyper-parameter.
    """

    __slots__ = ("kind", "length_penalty_scale", "factor")

    def __init__(self, kind: str, length_penalty_scale: float = 1.0,
                 factor: float = 1.0):
        if kind not in KINDS:
            raise ValueError("unknown loss kind %r" % kind)
        if length_penalty_scale < 0:
            raise ValueError("length penalty scale must be >= 0")
        self.kind = kind
        self.length_penalty_scale = length_penalty_scale
        self.factor = factor

    @property
    def item_kind(self) -> str:
        if self.kind == HAMMING_NGRAM:
            return "ngram"
        if self.kind == HAMMING_CFG:
            return "cfg"
        return "token"

    @property
    def max_ngram_order(self) -> int:
        return NGRAM_LOSS_ORDER

    @property
    def clipped(self) -> bool:
        return self.kind in (EDIT, F1)

    def rule_local_items(self, rule) -> list:
        """Items a single rule application introduces (ngrams excluded:
        they are assembled from chart contexts by the caller)."""
        if self.item_kind == "token":
            return rule.gamma.tokens()
        if self.item_kind == "cfg":
            return rule.gamma.productions()
        return []

    def __repr__(self):
        return ("LossSpec(%s, length_penalty_scale=%g, factor=%g)"
                % (self.kind, self.length_penalty_scale, self.factor))


def scale_loss(spec: LossSpec, factor: float) -> LossSpec:
    """A copy of ``spec`` whose finalized values are multiplied by factor."""
    if factor <= 0:
        raise ValueError("loss scale factor must be positive")
    return LossSpec(spec.kind, spec.length_penalty_scale, spec.factor * factor)


def ngram_items(tokens: Sequence[str], max_order: int = NGRAM_LOSS_ORDER) -> list[tuple]:
    """Bag of boundary-padded ngrams, orders 1..max_order.

    Order k >= 2 pads with k-1 start symbols and one end symbol so boundary
    ngrams are represented; unigrams are the bare tokens.
    """
    items: list[tuple] = [(t,) for t in tokens]
    for k in range(2, max_order + 1):
        seq = [BOS] * (k - 1) + list(tokens) + [EOS]
        items.extend(tuple(seq[i:i + k]) for i in range(len(seq) - k + 1))
    return items


def items_of(spec: LossSpec, target: Tree) -> list:
    """The full item bag of a complete target tree."""
    if spec.item_kind == "token":
        return list(target.tokens())
    if spec.item_kind == "cfg":
        return target.productions()
    return ngram_items(target.tokens())


def items_of_tokens(spec: LossSpec, tokens: Sequence[str]) -> list:
    """Item bag computed from a bare token sequence (no tree required)."""
    if spec.item_kind == "cfg":
        raise ValueError("CFG items require a target tree")
    if spec.item_kind == "token":
        return list(tokens)
    return ngram_items(tokens)


class Reference:
    """Cached reference statistics for one gold compression."""

    __slots__ = ("spec", "multiset", "total", "types", "type_index")

    def __init__(self, spec: LossSpec, items: Iterable):
        self.spec = spec
        self.multiset = Counter(items)
        self.total = sum(self.multiset.values())
        self.types = sorted(self.multiset)
        self.type_index = {t: i for i, t in enumerate(self.types)}


def make_reference(spec: LossSpec, target) -> Reference:
    """Build a Reference from a target tree or token sequence."""
    if isinstance(target, Tree):
        return Reference(spec, items_of(spec, target))
    return Reference(spec, items_of_tokens(spec, target))


class HammingArgs:
    __slots__ = ("tp", "fp")

    def __init__(self, tp: int = 0, fp: int = 0):
        self.tp = tp
        self.fp = fp

    def key(self):
        return (self.tp, self.fp)

    def __repr__(self):
        return "HammingArgs(tp=%d, fp=%d)" % (self.tp, self.fp)


class CountArgs:
    """Per-reference-type predicted counts, clipped, plus an overflow cell.

    The clipped cells never exceed the reference counts; everything else
    (unseen types and clipping overflow) accumulates in ``other``, so the
    total number of predictions is always recoverable.
    """

    __slots__ = ("counts", "other")

    def __init__(self, counts: tuple[int, ...], other: int = 0):
        self.counts = counts
        self.other = other

    def key(self):
        return self.counts + (self.other,)

    @property
    def matched(self) -> int:
        return sum(self.counts)

    @property
    def predicted(self) -> int:
        return self.matched + self.other

    def __repr__(self):
        return "CountArgs(%r, other=%d)" % (self.counts, self.other)


class LossState:
    """Loss bookkeeping bound to one (spec, reference) pair."""

    __slots__ = ("spec", "ref")

    def __init__(self, spec: LossSpec, ref: Reference):
        self.spec = spec
        self.ref = ref

    def init_args(self):
        if self.spec.clipped:
            return CountArgs((0,) * len(self.ref.types), 0)
        return HammingArgs(0, 0)

    def merge(self, child_args: Sequence, items: Iterable):
        """Combine child argument states and newly introduced items."""
        if self.spec.clipped:
            raw = [0] * len(self.ref.types)
            other = 0
            for a in child_args:
                if a is None:
                    continue
                for i, c in enumerate(a.counts):
                    raw[i] += c
                other += a.other
            for item in items:
                idx = self.ref.type_index.get(item)
                if idx is None:
                    other += 1
                else:
                    raw[idx] += 1
            counts = []
            for i, c in enumerate(raw):
                q = self.ref.multiset[self.ref.types[i]]
                if c > q:
                    other += c - q
                    c = q
                counts.append(c)
            return CountArgs(tuple(counts), other)
        tp = fp = 0
        for a in child_args:
            if a is None:
                continue
            tp += a.tp
            fp += a.fp
        for item in items:
            if self.ref.multiset[item] > 0:
                tp += 1
            else:
                fp += 1
        return HammingArgs(tp, fp)

    def accumulate(self, args, items: Iterable):
        return self.merge([args], items)

    def partial(self, args) -> float:
        """Decomposable lower-bound part of the loss, for chart scores."""
        if args is None:
            return 0.0
        f = self.spec.factor
        if self.spec.kind in (HAMMING_TOKEN, HAMMING_NGRAM, HAMMING_CFG):
            return f * args.fp
        if self.spec.kind == EDIT:
            return f * (args.predicted - 2 * args.matched)
        return 0.0  # F-score is not decomposable

    def finalize(self, args) -> float:
        f = self.spec.factor
        if self.spec.kind in (HAMMING_TOKEN, HAMMING_NGRAM, HAMMING_CFG):
            shortfall = max(self.ref.total - (args.tp + args.fp), 0)
            return f * (args.fp + self.spec.length_penalty_scale * shortfall)
        if self.spec.kind == EDIT:
            return f * (args.predicted + self.ref.total - 2 * args.matched)
        # F-score loss
        matched = args.matched
        if matched == 0:
            return f * 1.0
        precision = matched / args.predicted
        recall = matched / self.ref.total
        return f * (1.0 - 2.0 * precision * recall / (precision + recall))

    def strata_key(self, args):
        return args.key()


def loss_between(spec: LossSpec, predicted_items: Iterable, ref: Reference) -> float:
    """One-shot loss of a complete prediction (batch recount)."""
    state = LossState(spec, ref)
    args = state.merge([], predicted_items)
    return state.finalize(args)


def loss_from_strings(spec: LossSpec, predicted_tokens: Sequence[str],
                      reference_tokens: Sequence[str]) -> float:
    """String-level loss; enough for token, ngram, edit and F-score kinds."""
    ref = Reference(spec, items_of_tokens(spec, reference_tokens))
    return loss_between(spec, items_of_tokens(spec, predicted_tokens), ref)


def loss_of_target(spec: LossSpec, predicted: Tree, reference: Tree) -> float:
    """Tree-level loss (required for the CFG item kind)."""
    ref = Reference(spec, items_of(spec, reference))
    return loss_between(spec, items_of(spec, predicted), ref)
