"""Shared fixtures: worked-example trees, the toy grammar, random generators."""

from __future__ import annotations

import random

import pytest

from treeduce.alignment import WordAlignment, auto_align_deletion
from treeduce.features import FeatureSpace
from treeduce.grammar import Grammar, parse_rule
from treeduce.treebank import Tree, internal, parse_bracketed, terminal

# The running example: a question compressed by deleting "exactly",
# "made it", "and" and "which ones".
SOURCE_STR = ("[S [SBAR [WHNP [RB exactly] [WP what]] [S [NP [NNS records]]"
              " [VP [VBD made] [NP [PRP it]]]]] [CC and] [SBAR [WHNP [WP which]]"
              " [S [NP [NNS ones]] [VP [VBP are] [VP [VBN involved]]]]]]")
TARGET_STR = ("[S [WHNP [WP what]] [S [NP [NNS records]]"
              " [VP [VBP are] [VP [VBN involved]]]]]")

# The hand-written 12-rule grammar that transduces the example pair.
TOY_GRAMMAR_LINES = [
    "WHNP WHNP ||| [WHNP RB#e WP#1] ||| [WHNP WP#1] ||| 0-e 1-0 ||| extracted ||| 1",
    "S NP ||| [S NP#1 VP#e] ||| NP#1 ||| 0-0 1-e ||| extracted ||| 1",
    "S VP ||| [S NP#e VP#1] ||| VP#1 ||| 0-e 1-0 ||| extracted ||| 1",
    "SBAR VP ||| [SBAR WHNP#e S#1] ||| VP#1 ||| 0-e 1-0 ||| extracted ||| 1",
    "S S ||| [S [SBAR WHNP#1 S#2] [CC and] SBAR#3] ||| [S WHNP#1 [S NP#2 VP#3]]"
    " ||| 0-0 1-1 2-2 ||| extracted ||| 1",
    "WP WP ||| [WP what] ||| [WP what] ||| - ||| extracted ||| 1",
    "NP NP ||| [NP NNS#1] ||| [NP NNS#1] ||| 0-0 ||| extracted ||| 1",
    "NNS NNS ||| [NNS records] ||| [NNS records] ||| - ||| extracted ||| 1",
    "VP VP ||| [VP VBP#1 VP#2] ||| [VP VBP#1 VP#2] ||| 0-0 1-1 ||| extracted ||| 1",
    "VBP VBP ||| [VBP are] ||| [VBP are] ||| - ||| extracted ||| 1",
    "VP VP ||| [VP VBN#1] ||| [VP VBN#1] ||| 0-0 ||| extracted ||| 1",
    "VBN VBN ||| [VBN involved] ||| [VBN involved] ||| - ||| extracted ||| 1",
]

# The minimal rule set extracted from the example pair under its word
# alignment: the toy grammar with the lexical [CC and] generalized to an
# epsilon frontier.
MINIMAL_RULE_IDENTITIES = [
    "S S ||| [S [SBAR WHNP#1 S#2] CC#e SBAR#3] ||| [S WHNP#1 [S NP#2 VP#3]]"
    " ||| 0-0 1-1 2-e 3-2",
    "WHNP WHNP ||| [WHNP RB#e WP#1] ||| [WHNP WP#1] ||| 0-e 1-0",
    "WP WP ||| [WP what] ||| [WP what] ||| -",
    "S NP ||| [S NP#1 VP#e] ||| NP#1 ||| 0-0 1-e",
    "NP NP ||| [NP NNS#1] ||| [NP NNS#1] ||| 0-0",
    "NNS NNS ||| [NNS records] ||| [NNS records] ||| -",
    "SBAR VP ||| [SBAR WHNP#e S#1] ||| VP#1 ||| 0-e 1-0",
    "S VP ||| [S NP#e VP#1] ||| VP#1 ||| 0-e 1-0",
    "VP VP ||| [VP VBP#1 VP#2] ||| [VP VBP#1 VP#2] ||| 0-0 1-1",
    "VBP VBP ||| [VBP are] ||| [VBP are] ||| -",
    "VP VP ||| [VP VBN#1] ||| [VP VBN#1] ||| 0-0",
    "VBN VBN ||| [VBN involved] ||| [VBN involved] ||| -",
]


@pytest.fixture
def source_tree() -> Tree:
    return parse_bracketed(SOURCE_STR)


@pytest.fixture
def target_tree() -> Tree:
    return parse_bracketed(TARGET_STR)


@pytest.fixture
def word_alignment(source_tree, target_tree) -> WordAlignment:
    return auto_align_deletion(source_tree.tokens(), target_tree.tokens())


@pytest.fixture
def toy_grammar() -> Grammar:
    g = Grammar(src_root="S", tgt_root="S")
    for line in TOY_GRAMMAR_LINES:
        rule, freq = parse_rule(line)
        g.add(rule, freq)
    return g


@pytest.fixture
def space() -> FeatureSpace:
    return FeatureSpace()


# -- random structure generators (test oracles build on these) ---------------


LABELS = ["S", "NP", "VP", "PP", "A", "B", "C"]
TOKENS = ["a", "b", "c", "d", "e", "f", "g", "h"]


def random_tree(rng: random.Random, max_depth: int = 4, max_width: int = 3,
                labels=LABELS, tokens=TOKENS) -> Tree:
    """A random full tree: internal nodes over terminal leaves."""

    def node(depth):
        if depth >= max_depth or (depth > 0 and rng.random() < 0.3):
            return internal(rng.choice(labels), [terminal(rng.choice(tokens))])
        width = rng.randint(1, max_width)
        kids = []
        for _ in range(width):
            if rng.random() < 0.35:
                kids.append(terminal(rng.choice(tokens)))
            else:
                kids.append(node(depth + 1))
        return internal(rng.choice(labels), kids)

    return Tree(node(0))


def compress_tree(tree: Tree, kept: set[int]) -> Tree:
    """Delete the terminals outside ``kept`` and prune emptied nodes."""

    def walk(node):
        if node.kind == "terminal":
            lo = node.span[0]
            return terminal(node.label) if lo in kept else None
        kids = [w for w in (walk(c) for c in node.children) if w is not None]
        if not kids:
            return None
        return internal(node.label, kids)

    pruned = walk(tree.root)
    if pruned is None:
        raise ValueError("cannot delete every token")
    return Tree(pruned)


def random_deletion_pair(rng: random.Random, max_depth: int = 4):
    """A (source, target, alignment) triple with target a deletion of source."""
    while True:
        x = random_tree(rng, max_depth=max_depth)
        n = len(x.tokens())
        if n < 2:
            continue
        kept = {i for i in range(n) if rng.random() < 0.6}
        if not kept or len(kept) == n:
            continue
        y = compress_tree(x, kept)
        alignment = auto_align_deletion(x.tokens(), y.tokens())
        return x, y, alignment
