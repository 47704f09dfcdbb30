"""Bracketed constituent trees: parsing, serialization and span queries.

Trees are ordered and labeled, with terminal tokens at the leaves.  Trees
used inside transduction rules (elementary trees) may additionally carry
frontier non-terminals as leaves; these mark the substitution sites.  The
bracketed notation uses square brackets,

    [S [NP [NNS records]] [VP [VBP are] [VP [VBN involved]]]]

with labels and tokens separated by whitespace.  Mixed children (a terminal
next to a bracketed sibling) are permitted.

Trees are immutable once built and safe to share between threads.
"""

from __future__ import annotations

from typing import Iterator, Optional, Sequence

INTERNAL = "internal"
TERMINAL = "terminal"
FRONTIER = "frontier"


class TreeError(ValueError):
    """Raised for malformed bracketed input or invalid tree structure."""


class Node:
    """A single tree node; ``children`` is empty for leaves.

    ``span`` is the inclusive (lo, hi) token-index interval covered by the
    node's terminal descendants, or None when it has none (frontier leaves
    and all-frontier subtrees).
    """

    __slots__ = ("label", "kind", "children", "span", "index", "_sig")

    def __init__(self, label: str, kind: str, children: Sequence["Node"] = ()):
        self.label = label
        self.kind = kind
        self.children = tuple(children)
        self.span: Optional[tuple[int, int]] = None
        self.index = -1
        self._sig = None
        if kind != INTERNAL and self.children:
            raise TreeError("leaf node %r cannot have children" % label)
        if kind == INTERNAL and not self.children:
            raise TreeError("internal node %r must have children" % label)

    def is_leaf(self) -> bool:
        return not self.children

    def signature(self):
        """Hashable structural identity (label, kind, child signatures)."""
        if self._sig is None:
            self._sig = (self.label, self.kind,
                         tuple(c.signature() for c in self.children))
        return self._sig

    def __repr__(self):
        return "Node(%s/%s@%d)" % (self.label, self.kind, self.index)


def internal(label: str, children: Sequence[Node]) -> Node:
    return Node(label, INTERNAL, children)


def terminal(token: str) -> Node:
    return Node(token, TERMINAL)


def frontier(label: str) -> Node:
    return Node(label, FRONTIER)


class Tree:
    """An immutable tree over :class:`Node` objects.

    ``nodes`` lists every node in preorder; ``node.index`` is the position in
    that list.  Terminal token positions are assigned left to right from 0
    at construction time and cached as spans on every node.
    """

    __slots__ = ("root", "nodes", "_tokens")

    def __init__(self, root: Node):
        self.root = root
        self.nodes: list[Node] = []
        self._tokens: list[str] = []
        self._index(root)

    def _index(self, node: Node) -> None:
        node.index = len(self.nodes)
        self.nodes.append(node)
        if node.kind == TERMINAL:
            pos = len(self._tokens)
            self._tokens.append(node.label)
            node.span = (pos, pos)
            return
        if node.kind == FRONTIER:
            node.span = None
            return
        lo = hi = None
        for child in node.children:
            self._index(child)
            if child.span is not None:
                if lo is None:
                    lo = child.span[0]
                hi = child.span[1]
        node.span = None if lo is None else (lo, hi)

    # -- queries ----------------------------------------------------------

    def tokens(self) -> list[str]:
        """Left-to-right terminal yield; frontier leaves are excluded."""
        return list(self._tokens)

    def __len__(self) -> int:
        return len(self.nodes)

    def span(self, node: Node) -> Optional[tuple[int, int]]:
        return node.span

    def internal_nodes(self) -> Iterator[Node]:
        return (n for n in self.nodes if n.kind == INTERNAL)

    def postorder(self) -> list[Node]:
        out = []

        def walk(n):
            for c in n.children:
                walk(c)
            out.append(n)

        walk(self.root)
        return out

    def frontier_nodes(self) -> list[Node]:
        """Frontier leaves in left-to-right order."""
        return [n for n in self.nodes if n.kind == FRONTIER]

    def productions(self) -> list[tuple[str, ...]]:
        """Parent-plus-ordered-children label tuples, one per internal node."""
        out = []
        for n in self.nodes:
            if n.kind == INTERNAL:
                out.append((n.label,) + tuple(c.label for c in n.children))
        return out

    # -- identity ---------------------------------------------------------

    def signature(self):
        return self.root.signature()

    def __eq__(self, other):
        return isinstance(other, Tree) and self.signature() == other.signature()

    def __hash__(self):
        return hash(self.signature())

    def __repr__(self):
        return "Tree(%s)" % serialize(self)


def subtree(node: Node) -> Tree:
    """A fresh Tree rooted at a copy of ``node`` (token indices restart at 0)."""
    return Tree(copy_node(node))


def copy_node(node: Node) -> Node:
    return Node(node.label, node.kind, [copy_node(c) for c in node.children])


# -- bracketed notation ----------------------------------------------------


def _tokenize(text: str) -> list[str]:
    out = []
    buf = []
    for ch in text:
        if ch in "[]":
            if buf:
                out.append("".join(buf))
                buf = []
            out.append(ch)
        elif ch.isspace():
            if buf:
                out.append("".join(buf))
                buf = []
        else:
            buf.append(ch)
    if buf:
        out.append("".join(buf))
    return out


def parse_node(text: str, leaf_maker=None) -> Node:
    """Parse one bracketed expression into a Node.

    ``leaf_maker`` maps a bare leaf atom to a Node; the default makes every
    bare atom a terminal token.  Rule serialization passes a maker that
    recognizes frontier markers.
    """
    if leaf_maker is None:
        leaf_maker = terminal
    toks = _tokenize(text)
    if not toks:
        raise TreeError("empty input")
    pos = 0

    def parse_expr():
        nonlocal pos
        if toks[pos] == "[":
            pos += 1
            if pos >= len(toks) or toks[pos] in "[]":
                raise TreeError("constituent missing label near token %d" % pos)
            label = toks[pos]
            pos += 1
            children = []
            while pos < len(toks) and toks[pos] != "]":
                children.append(parse_expr())
            if pos >= len(toks):
                raise TreeError("unbalanced brackets: missing ]")
            pos += 1
            if not children:
                raise TreeError("empty constituent %r" % label)
            return internal(label, children)
        if toks[pos] == "]":
            raise TreeError("unexpected ] at token %d" % pos)
        atom = toks[pos]
        pos += 1
        return leaf_maker(atom)

    node = parse_expr()
    if pos != len(toks):
        raise TreeError("trailing content after tree: %r" % " ".join(toks[pos:]))
    return node


def parse_bracketed(text: str) -> Tree:
    """Parse a full bracketed tree; every bare leaf is a terminal token."""
    node = parse_node(text)
    if node.kind != INTERNAL:
        raise TreeError("tree must have a bracketed root constituent")
    return Tree(node)


def serialize_node(node: Node, leaf_writer=None) -> str:
    if leaf_writer is None:
        leaf_writer = lambda n: n.label
    if node.kind != INTERNAL:
        return leaf_writer(node)
    parts = [node.label]
    parts.extend(serialize_node(c, leaf_writer) for c in node.children)
    return "[" + " ".join(parts) + "]"


def serialize(tree: Tree) -> str:
    """Canonical bracketed form; inverse of :func:`parse_bracketed`."""
    return serialize_node(tree.root)


def yield_tokens(tree: Tree) -> list[str]:
    return tree.tokens()


def yield_span(tree: Tree, node: Node) -> Optional[tuple[int, int]]:
    """Inclusive token interval under ``node``; None when it covers no tokens."""
    return node.span


# -- treebank files --------------------------------------------------------


def read_treebank(path) -> list[Tree]:
    """One tree per line; '#' comments and blank lines are skipped."""
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                trees.append(parse_bracketed(line))
            except TreeError as exc:
                raise TreeError("%s:%d: %s" % (path, lineno, exc)) from None
    return trees


def write_treebank(path, trees: Sequence[Tree]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trees:
            fh.write(serialize(t))
            fh.write("\n")
