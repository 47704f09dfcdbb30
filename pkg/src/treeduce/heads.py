"""Head-based importance ranking of a production's children.

The single-head search scans a production's children against a percolation
table: for each category in the parent's priority list, scan the children in
the entry's direction and stop at the first match; when nothing matches,
take the leftmost child.  To rank all children we run the search repeatedly,
removing the head found by each pass.

Parents missing from the table fall back to a rightmost-first ranking; this
is reported once per symbol.
"""

from __future__ import annotations

import logging
from importlib import resources
from typing import Sequence

log = logging.getLogger(__name__)

_TABLE: dict[str, tuple[str, list[str]]] | None = None
_warned: set[str] = set()


def _load_table() -> dict[str, tuple[str, list[str]]]:
    global _TABLE
    if _TABLE is None:
        table = {}
        text = resources.files("treeduce.data").joinpath("collins_heads.txt").read_text()
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            table[parts[0]] = (parts[1], parts[2:])
        _TABLE = table
    return _TABLE


def _find_head(direction: str, categories: list[str],
               labels: list[str], positions: list[int]) -> int:
    order = range(len(labels)) if direction == "left" else range(len(labels) - 1, -1, -1)
    order = list(order)
    for cat in categories:
        for i in order:
            if labels[i] == cat:
                return i
    # no category matched: least-marked child first
    return 0


def rank_head_positions(parent: str, child_labels: Sequence[str]) -> list[int]:
    """Positions of the children ordered from most to least important."""
    if not child_labels:
        raise ValueError("cannot rank an empty production")
    table = _load_table()
    entry = table.get(parent)
    if entry is None:
        if parent not in _warned:
            _warned.add(parent)
            log.warning("no head rule for %r; ranking children rightmost first", parent)
        return list(range(len(child_labels) - 1, -1, -1))
    direction, categories = entry
    labels = list(child_labels)
    positions = list(range(len(labels)))
    ranked = []
    while labels:
        i = _find_head(direction, categories, labels, positions)
        ranked.append(positions[i])
        del labels[i]
        del positions[i]
    return ranked


def rank_heads(parent: str, child_labels: Sequence[str]) -> list[str]:
    """Child labels ordered from most to least important."""
    return [child_labels[i] for i in rank_head_positions(parent, child_labels)]
