"""Backoff ngram language models in ARPA format.

Probabilities are base-10 logs throughout, matching the file format; the
value handed to the scorer is the raw log10.  Queries never fail: unknown
tokens map to the ``<unk>`` entry and missing contexts follow the backoff
chain.  Models are read-only after construction and safe to share.

A small trainer is included so the toolkit is self-contained: interpolated
absolute discounting with a fixed discount of 0.75, padding each sentence
with ``n-1`` start symbols and one end symbol, which mirrors the padding
the decoder applies at the artificial root.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Sequence

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

DISCOUNT = 0.75
LOG_BOS = -99.0  # conventional dummy for the start symbol


class LmError(ValueError):
    pass


class NgramModel:
    """Stored log10 probabilities plus backoff weights, ARPA-style."""

    def __init__(self, order: int):
        if order < 1:
            raise LmError("order must be >= 1")
        self.order = order
        # per length-1 index: ngram tuple -> (logprob, backoff or None)
        self.tables: list[dict[tuple, tuple[float, float | None]]] = [
            {} for _ in range(order)]

    def add(self, ngram: Sequence[str], logprob: float, backoff: float | None = None):
        n = len(ngram)
        if not 1 <= n <= self.order:
            raise LmError("ngram of length %d in order-%d model" % (n, self.order))
        self.tables[n - 1][tuple(ngram)] = (logprob, backoff)

    def vocabulary(self) -> list[str]:
        return sorted(w for (w,) in self.tables[0])

    def _normalize(self, token: str) -> str:
        if (token,) in self.tables[0]:
            return token
        return UNK

    def logprob(self, ngram: Sequence[str]) -> float:
        """Conditional log10 probability of the last token given the rest."""
        if not ngram:
            raise LmError("empty ngram")
        ngram = tuple(self._normalize(w) for w in ngram)
        if len(ngram) > self.order:
            ngram = ngram[len(ngram) - self.order:]
        return self._lookup(ngram)

    def _lookup(self, ngram: tuple) -> float:
        entry = self.tables[len(ngram) - 1].get(ngram)
        if entry is not None:
            return entry[0]
        if len(ngram) == 1:
            # normalized to <unk> already; a missing entry means the model
            # shipped without one, which load_arpa rejects
            return float("-inf")
        context = ngram[:-1]
        bow = 0.0
        centry = self.tables[len(context) - 1].get(context)
        if centry is not None and centry[1] is not None:
            bow = centry[1]
        return bow + self._lookup(ngram[1:])

    def sequence_logprob(self, tokens: Sequence[str]) -> float:
        """Sum of conditional logprobs over the padded token sequence."""
        total = 0.0
        for ngram in padded_ngrams(tokens, self.order):
            total += self.logprob(ngram)
        return total

    def perplexity(self, sentences: Iterable[Sequence[str]]) -> float:
        lp = 0.0
        events = 0
        for s in sentences:
            lp += self.sequence_logprob(s)
            events += len(s) + 1
        return 10.0 ** (-lp / max(events, 1))


def padded_ngrams(tokens: Sequence[str], order: int) -> list[tuple[str, ...]]:
    """All scoring windows for a sentence: n-1 start pads and one end pad."""
    seq = [BOS] * (order - 1) + list(tokens) + [EOS]
    if order == 1:
        return [(w,) for w in seq if w != BOS]
    return [tuple(seq[i:i + order]) for i in range(len(seq) - order + 1)]


# -- ARPA files --------------------------------------------------------------


def load_arpa(path) -> NgramModel:
    """Read an ARPA file; requires an <unk> unigram entry."""
    counts: dict[int, int] = {}
    model = None
    section = 0
    seen: dict[int, int] = {}
    state = "preamble"
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line == "\\data\\":
                state = "counts"
                continue
            if line == "\\end\\":
                state = "done"
                continue
            if line.startswith("\\") and line.endswith("-grams:"):
                try:
                    section = int(line[1:-7])
                except ValueError:
                    raise LmError("%s:%d: bad section header %r" % (path, lineno, line))
                if model is None:
                    if not counts:
                        raise LmError("%s:%d: section before \\data\\ counts" % (path, lineno))
                    model = NgramModel(max(counts))
                state = "ngrams"
                continue
            if state == "counts":
                if not line.startswith("ngram "):
                    raise LmError("%s:%d: expected 'ngram N=count'" % (path, lineno))
                try:
                    n, c = line[6:].split("=")
                    counts[int(n)] = int(c)
                except ValueError:
                    raise LmError("%s:%d: bad count line %r" % (path, lineno, line))
                continue
            if state == "ngrams":
                fields = line.split()
                if len(fields) < section + 1:
                    raise LmError("%s:%d: truncated %d-gram line" % (path, lineno, section))
                try:
                    lp = float(fields[0])
                except ValueError:
                    raise LmError("%s:%d: bad logprob %r" % (path, lineno, fields[0]))
                backoff = None
                if len(fields) == section + 2:
                    try:
                        backoff = float(fields[-1])
                    except ValueError:
                        raise LmError("%s:%d: bad backoff %r" % (path, lineno, fields[-1]))
                    ngram = tuple(fields[1:-1])
                elif len(fields) == section + 1:
                    ngram = tuple(fields[1:])
                else:
                    raise LmError("%s:%d: wrong field count" % (path, lineno))
                model.add(ngram, lp, backoff)
                seen[section] = seen.get(section, 0) + 1
                continue
            raise LmError("%s:%d: unexpected line %r" % (path, lineno, line))
    if model is None or state != "done":
        raise LmError("%s: missing \\data\\ or \\end\\ marker" % path)
    for n, c in counts.items():
        if c != seen.get(n, 0):
            raise LmError("%s: \\data\\ declares %d %d-grams, found %d"
                          % (path, c, n, seen.get(n, 0)))
    if (UNK,) not in model.tables[0]:
        raise LmError("%s: model lacks an %s entry" % (path, UNK))
    return model


def save_arpa(model: NgramModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for n in range(1, model.order + 1):
            fh.write("ngram %d=%d\n" % (n, len(model.tables[n - 1])))
        for n in range(1, model.order + 1):
            fh.write("\n\\%d-grams:\n" % n)
            for ngram in sorted(model.tables[n - 1]):
                lp, bow = model.tables[n - 1][ngram]
                if bow is None:
                    fh.write("%.6f\t%s\n" % (lp, " ".join(ngram)))
                else:
                    fh.write("%.6f\t%s\t%.6f\n" % (lp, " ".join(ngram), bow))
        fh.write("\n\\end\\\n")


# -- toy training -------------------------------------------------------------


def train_toy(sentences: Sequence[Sequence[str]], order: int,
              discount: float = DISCOUNT) -> NgramModel:
    """Interpolated absolute discounting over a (small) corpus.

    Every sentence is padded with ``order-1`` start symbols and one end
    symbol; the discount mass reserved at the unigram level goes to a
    uniform base over the vocabulary plus <unk>.  Backoff weights are set
    so conditional probabilities sum to one for every stored context.
    """
    if order < 1:
        raise LmError("order must be >= 1")
    sentences = [list(s) for s in sentences]
    if not sentences:
        raise LmError("empty corpus")
    counts: list[Counter] = [Counter() for _ in range(order + 1)]
    for s in sentences:
        seq = [BOS] * (order - 1) + s + [EOS]
        for i in range(order - 1, len(seq)):
            for n in range(1, order + 1):
                if i - n + 1 >= 0:
                    counts[n][tuple(seq[i - n + 1:i + 1])] += 1

    vocab = sorted({w for s in sentences for w in s} | {EOS})
    base = 1.0 / (len(vocab) + 1)  # vocabulary plus <unk>

    probs: list[dict[tuple, float]] = [{} for _ in range(order + 1)]
    n_total = sum(counts[1].values())
    n_types = len(counts[1])
    for w in vocab + [UNK]:
        c = counts[1][(w,)]
        probs[1][(w,)] = (max(c - discount, 0.0)
                          + discount * n_types * base) / n_total
    for n in range(2, order + 1):
        ctx_totals: Counter = Counter()
        ctx_types: Counter = Counter()
        for ngram, c in counts[n].items():
            ctx_totals[ngram[:-1]] += c
            ctx_types[ngram[:-1]] += 1
        for ngram, c in counts[n].items():
            ctx = ngram[:-1]
            lower = probs[n - 1].get(ngram[1:], base)
            lam = discount * ctx_types[ctx] / ctx_totals[ctx]
            probs[n][ngram] = max(c - discount, 0.0) / ctx_totals[ctx] + lam * lower

    # stored ngram sets; every context of a stored ngram must be stored too
    stored: list[set[tuple]] = [set() for _ in range(order + 1)]
    stored[1].update((w,) for w in vocab + [UNK])
    if order > 1:
        stored[1].add((BOS,))
    for n in range(2, order + 1):
        stored[n].update(counts[n])
    for n in range(order, 2, -1):
        for ngram in stored[n]:
            stored[n - 1].add(ngram[:-1])

    def prob_of(ngram: tuple) -> float:
        p = probs[len(ngram)].get(ngram)
        return 1e-99 if p is None else p  # dummy start-symbol histories

    model = NgramModel(order)
    for n in range(1, order + 1):
        for ngram in sorted(stored[n]):
            lp = LOG_BOS if ngram == (BOS,) else math.log10(prob_of(ngram))
            model.add(ngram, lp, 0.0 if n < order else None)

    # exact backoff weights per stored context
    for n in range(1, order):
        followers: dict[tuple, list[tuple]] = {}
        for ngram in stored[n + 1]:
            followers.setdefault(ngram[:-1], []).append(ngram)
        for context in sorted(stored[n]):
            conts = followers.get(context, [])
            p_seen = sum(prob_of(g) for g in conts)
            lower_seen = sum(prob_of(g[1:]) for g in conts)
            num, den = 1.0 - p_seen, 1.0 - lower_seen
            bow = math.log10(num / den) if num > 0 and den > 0 else 0.0
            lp, _ = model.tables[n - 1][context]
            model.tables[n - 1][context] = (lp, bow)
    return model


class NullModel(NgramModel):
    """Order-1 stand-in scoring zero everywhere (disables the lm feature)."""

    def __init__(self):
        super().__init__(1)

    def logprob(self, ngram):
        return 0.0
