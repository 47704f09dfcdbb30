"""Corpus-level evaluation: compression rate and string-loss metrics.

Everything here consumes token sequences only, so third-party system
outputs can be scored without derivations or trees.  The report carries
per-sentence rows plus corpus aggregates; the corpus compression rate is
total target tokens over total source tokens, not the mean of rates.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .losses import LossSpec, loss_from_strings


class EvalError(ValueError):
    pass


def compression_rate(source_tokens: Sequence[str],
                     target_tokens: Sequence[str]) -> float:
    """Percentage of source tokens retained in the target."""
    if not source_tokens:
        raise EvalError("empty source")
    return 100.0 * len(target_tokens) / len(source_tokens)


class SentenceScore:
    __slots__ = ("index", "pred_len", "ref_len", "src_len", "rate",
                 "hamming", "edit", "f1_loss")

    def __init__(self, index, pred_len, ref_len, src_len, rate,
                 hamming, edit, f1_loss):
        self.index = index
        self.pred_len = pred_len
        self.ref_len = ref_len
        self.src_len = src_len
        self.rate = rate
        self.hamming = hamming
        self.edit = edit
        self.f1_loss = f1_loss


class EvalReport:
    """Per-sentence scores plus corpus aggregates."""

    def __init__(self, sentences: list[SentenceScore], skipped: int,
                 length_penalty_scale: float):
        self.sentences = sentences
        self.skipped = skipped
        self.length_penalty_scale = length_penalty_scale

    @property
    def corpus_rate(self) -> Optional[float]:
        num = sum(s.pred_len for s in self.sentences)
        den = sum(s.src_len for s in self.sentences)
        return 100.0 * num / den if den else None

    def _mean(self, attr) -> Optional[float]:
        vals = [getattr(s, attr) for s in self.sentences]
        return sum(vals) / len(vals) if vals else None

    @property
    def mean_hamming(self):
        return self._mean("hamming")

    @property
    def mean_edit(self):
        return self._mean("edit")

    @property
    def mean_f1_loss(self):
        return self._mean("f1_loss")

    HEADER = ("index", "src_tokens", "pred_tokens", "ref_tokens",
              "rate_pct", "hamming_token", "edit", "f1_loss")

    def rows(self):
        for s in self.sentences:
            yield (s.index, s.src_len, s.pred_len, s.ref_len,
                   "%.2f" % s.rate, "%.4f" % s.hamming,
                   "%.4f" % s.edit, "%.4f" % s.f1_loss)

    def write_tsv(self, fh) -> None:
        fh.write("\t".join(self.HEADER) + "\n")
        for row in self.rows():
            fh.write("\t".join(str(v) for v in row) + "\n")
        if self.sentences:
            fh.write("\t".join(str(v) for v in (
                "corpus", sum(s.src_len for s in self.sentences),
                sum(s.pred_len for s in self.sentences),
                sum(s.ref_len for s in self.sentences),
                "%.2f" % self.corpus_rate, "%.4f" % self.mean_hamming,
                "%.4f" % self.mean_edit, "%.4f" % self.mean_f1_loss)) + "\n")

    def summary(self) -> str:
        if not self.sentences:
            return "no scored sentences (%d skipped)" % self.skipped
        lines = [
            "sentences scored: %d (skipped: %d)" % (len(self.sentences), self.skipped),
            "corpus compression rate: %.2f%%" % self.corpus_rate,
            "mean token Hamming loss: %.4f (length penalty scale %g)"
            % (self.mean_hamming, self.length_penalty_scale),
            "mean edit distance: %.4f" % self.mean_edit,
            "mean 1-F1: %.4f" % self.mean_f1_loss,
            "grammatical-relations F1 is not computed (needs an external"
            " dependency parser)",
        ]
        return "\n".join(lines)


def evaluate_corpus(predictions: Sequence[Sequence[str]],
                    references: Sequence[Sequence[str]],
                    sources: Optional[Sequence[Sequence[str]]] = None,
                    length_penalty_scale: float = 1.0) -> EvalReport:
    """Score aligned prediction/reference token sequences.

    ``sources`` supplies the denominators for compression rates; when
    absent the references are used (their rate is then relative to the
    reference length).  Pairs with an empty source are skipped and counted.
    """
    if len(predictions) != len(references):
        raise EvalError("prediction/reference length mismatch: %d vs %d"
                        % (len(predictions), len(references)))
    if sources is not None and len(sources) != len(references):
        raise EvalError("source/reference length mismatch: %d vs %d"
                        % (len(sources), len(references)))
    hamming = LossSpec("hamming-token", length_penalty_scale=length_penalty_scale)
    edit = LossSpec("edit")
    f1 = LossSpec("f1")
    scores = []
    skipped = 0
    for i, (pred, ref) in enumerate(zip(predictions, references)):
        src = list(sources[i]) if sources is not None else list(ref)
        if not src:
            skipped += 1
            continue
        scores.append(SentenceScore(
            i, len(pred), len(ref), len(src),
            compression_rate(src, pred),
            loss_from_strings(hamming, pred, ref),
            loss_from_strings(edit, pred, ref),
            loss_from_strings(f1, pred, ref)))
    return EvalReport(scores, skipped, length_penalty_scale)


def read_sentences(path) -> list[list[str]]:
    """One whitespace-tokenized sentence per line; '#' comments skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                continue
            out.append(line.split())
    return out
