"""Command-line pipeline: align, extract, train, compress, eval, sample.

Logs go to standard error; data goes to files or standard output.  Every
subcommand accepts --config with a flat key=value file; explicit flags
override config values.  Runs are deterministic given the same config and
seed (TREEDUCE_SEED supplies a fallback seed).
"""

from __future__ import annotations

import argparse
import logging
import os
import random
import sys
from typing import Optional, Sequence

from . import alignment as al
from . import evaluation, features, grammar as gr, lm as lms, losses, treebank
from .config import Config, ConfigError, load_config
from .decoder import (BeamSpec, DecodeError, SamplingError, decode,
                      random_chooser, sample_pair)
from .training import TrainConfig, cutting_plane_train, prepare_instances

log = logging.getLogger("treeduce")


class UsageError(ValueError):
    pass


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        cfg = make_config(args)
        return args.handler(args, cfg)
    except (UsageError, ConfigError) as exc:
        log.error("%s", exc)
        return 2
    except (treebank.TreeError, gr.GrammarError, al.AlignmentError,
            lms.LmError, evaluation.EvalError, DecodeError, OSError) as exc:
        log.error("%s", exc)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treeduce",
        description="Tree-to-tree transduction toolkit for sentence compression")
    parser.set_defaults(command=None)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--seed", type=int, help="random seed (else TREEDUCE_SEED)")
        p.add_argument("--jobs", type=int, help="sentence-level parallelism")

    p = sub.add_parser("align", help="word-align a deletion corpus")
    common(p)
    p.add_argument("--source", help="source treebank")
    p.add_argument("--target", help="target treebank")
    p.add_argument("--out", required=True, help="alignment output (Pharaoh format)")
    p.set_defaults(handler=cmd_align)

    p = sub.add_parser("extract", help="induce a grammar from aligned tree pairs")
    common(p)
    p.add_argument("--source", help="source treebank")
    p.add_argument("--target", help="target treebank")
    p.add_argument("--align", help="alignment file, or 'auto'")
    p.add_argument("--depth", type=int, help="specialization depth (0-2)")
    p.add_argument("--max-vars", type=int, dest="max_vars")
    p.add_argument("--max-nodes", type=int, dest="max_nodes")
    p.add_argument("--filter-k", dest="filter_k",
                   help="max targets per source elementary tree ('none' disables)")
    p.add_argument("--synthesize", help="comma list of copy,delete (or 'none')")
    p.add_argument("--out", required=True, help="grammar output file")
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("train", help="learn weights with the cutting-plane method")
    common(p)
    p.add_argument("--source", help="source treebank")
    p.add_argument("--target", help="target treebank")
    p.add_argument("--align", help="alignment file, or 'auto'")
    p.add_argument("--grammar", help="grammar file")
    p.add_argument("--lm", help="ARPA file, 'auto' (toy-train), or 'none'")
    p.add_argument("--loss", choices=losses.KINDS)
    p.add_argument("--length-penalty-scale", dest="length_penalty_scale")
    p.add_argument("--loss-scale", dest="loss_scale")
    p.add_argument("--C", dest="C")
    p.add_argument("--epsilon", dest="epsilon")
    p.add_argument("--max-passes", type=int, dest="max_passes")
    p.add_argument("--beam-unique", dest="beam_unique")
    p.add_argument("--beam-total", dest="beam_total")
    p.add_argument("--out", required=True, help="model output (name TAB weight)")
    p.add_argument("--lm-out", dest="lm_out",
                   help="export the fitted/loaded ngram model as ARPA")
    p.add_argument("--curves", help="directory for training-diagnostic figures")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("compress", help="decode a treebank into compressions")
    common(p)
    p.add_argument("--input", help="source treebank to compress")
    p.add_argument("--grammar", help="grammar file")
    p.add_argument("--model", help="weights file")
    p.add_argument("--lm", help="ARPA file, or 'none'")
    p.add_argument("--beam-unique", dest="beam_unique")
    p.add_argument("--beam-total", dest="beam_total")
    p.add_argument("--synthesize", help="comma list of copy,delete (or 'none')")
    p.add_argument("--emit-trees", action="store_true")
    p.add_argument("--emit-derivation", action="store_true")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(handler=cmd_compress)

    p = sub.add_parser("eval", help="score predictions against references")
    common(p)
    p.add_argument("--pred", required=True, help="predicted sentences, one per line")
    p.add_argument("--ref", required=True, help="reference sentences, one per line")
    p.add_argument("--src", help="source treebank for compression rates")
    p.add_argument("--length-penalty-scale", dest="length_penalty_scale")
    p.add_argument("--out", help="TSV report file (default stdout)")
    p.add_argument("--figures", help="directory for report figures")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sample", help="generate tree pairs from a grammar")
    common(p)
    p.add_argument("--grammar", help="grammar file")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--out-source", required=True)
    p.add_argument("--out-target", required=True)
    p.set_defaults(handler=cmd_sample)
    return parser


def make_config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    for key in ("source", "target", "align", "grammar", "lm", "model", "depth",
                "max_vars", "max_nodes", "filter_k", "loss",
                "length_penalty_scale", "loss_scale", "C", "epsilon",
                "max_passes", "beam_unique", "beam_total", "synthesize",
                "seed", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.set(key, value)
    return cfg


def _require(cfg: Config, *keys: str) -> None:
    for key in keys:
        if cfg.values.get(key) in (None, ""):
            raise UsageError("missing required setting %r (flag or config)" % key)
        if key in ("source", "target", "grammar", "model", "input"):
            path = cfg.values[key]
            if not os.path.exists(path):
                raise UsageError("%s file not found: %s" % (key, path))


def _read_pairs(cfg: Config):
    _require(cfg, "source", "target")
    source = treebank.read_treebank(cfg.source)
    target = treebank.read_treebank(cfg.target)
    if len(source) != len(target):
        raise UsageError("source/target treebanks differ in length: %d vs %d"
                         % (len(source), len(target)))
    return list(zip(source, target))


def _word_alignments(cfg: Config, pairs):
    """Per-pair word alignments; unalignable pairs yield None."""
    if cfg.align == "auto":
        out = []
        for i, (x, y) in enumerate(pairs):
            try:
                out.append(al.auto_align_deletion(x.tokens(), y.tokens()))
            except al.AlignmentError as exc:
                log.warning("pair %d unalignable: %s", i, exc)
                out.append(None)
        return out
    if not os.path.exists(cfg.align):
        raise UsageError("alignment file not found: %s" % cfg.align)
    aligns = al.read_alignments(cfg.align)
    if len(aligns) != len(pairs):
        raise UsageError("alignment file has %d lines for %d pairs"
                         % (len(aligns), len(pairs)))
    return aligns


def _load_lm(cfg: Config, pairs=None) -> lms.NgramModel:
    choice = cfg.lm or "none"
    if choice == "none":
        return lms.NullModel()
    if choice == "auto":
        if not pairs:
            raise UsageError("--lm auto needs training targets to fit on")
        sentences = [y.tokens() for _, y in pairs]
        return lms.train_toy(sentences, cfg.lm_order)
    if not os.path.exists(choice):
        raise UsageError("ARPA file not found: %s" % choice)
    return lms.load_arpa(choice)


def _beam(cfg: Config) -> BeamSpec:
    return BeamSpec(cfg.beam_unique, cfg.beam_total)


# -- subcommands ---------------------------------------------------------------


def cmd_align(args, cfg: Config) -> int:
    pairs = _read_pairs(cfg)
    lines = []
    skipped = 0
    for i, (x, y) in enumerate(pairs):
        try:
            lines.append(al.auto_align_deletion(x.tokens(), y.tokens()).to_pharaoh())
        except al.AlignmentError as exc:
            log.warning("pair %d unalignable: %s", i, exc)
            lines.append("")
            skipped += 1
    with open(args.out, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    log.info("aligned %d pairs (%d unalignable) -> %s",
             len(pairs) - skipped, skipped, args.out)
    return 0


def cmd_extract(args, cfg: Config) -> int:
    pairs = _read_pairs(cfg)
    words = _word_alignments(cfg, pairs)
    usable = [(p, w) for p, w in zip(pairs, words) if w is not None]
    jobs = cfg.jobs or 1
    if jobs > 1:
        gram, reports = _induce_parallel(usable, cfg, jobs)
    else:
        gram, reports = gr.induce_grammar(
            [p for p, _ in usable], [w for _, w in usable],
            depth=cfg.depth, max_vars=cfg.max_vars, max_nodes=cfg.max_nodes,
            max_targets_per_source=cfg.filter_k,
            synthesize=cfg.synthesize_kinds())
    gram.save(args.out)
    skipped = sum(1 for r in reports if r.status != "ok")
    for r in reports:
        if r.status != "ok":
            log.warning("pair %d skipped: %s", r.index, r.message)
    aliases = cfg.alias_map()
    roots = "%s/%s" % (aliases.get(gram.src_root, gram.src_root),
                       aliases.get(gram.tgt_root, gram.tgt_root))
    log.info("grammar: %d rules, roots %s, from %d pairs (%d skipped) -> %s",
             len(gram), roots, len(usable), skipped, args.out)
    return 0


def _extract_worker(job):
    """Extract one pair; returns serialized rule occurrences for merging."""
    index, (x, y), words, depth, max_vars, max_nodes = job
    from treeduce.alignment import constituent_align

    try:
        calign = constituent_align(x, y, words)
        occurrences = gr.extract_occurrences(x, y, calign, words, depth,
                                             max_vars, max_nodes)
    except (gr.ExtractionError, ValueError) as exc:
        return index, None, str(exc)
    return index, [r.to_line(1) for r in occurrences], ""


def _induce_parallel(usable, cfg: Config, jobs: int):
    """Per-pair extraction over a process pool, merged in corpus order."""
    import multiprocessing as mp

    payload = [(i, pair, words, cfg.depth, cfg.max_vars, cfg.max_nodes)
               for i, (pair, words) in enumerate(usable)]
    ctx = mp.get_context("fork")
    with ctx.Pool(jobs) as pool:
        results = pool.map(_extract_worker, payload)
    grammar = gr.Grammar()
    reports = []
    for index, lines, message in results:
        if grammar.src_root is None and usable:
            x, y = usable[index][0]
            grammar.src_root = x.root.label
            grammar.tgt_root = y.root.label
        if lines is None:
            reports.append(gr.PairReport(index, "skipped", message))
            continue
        for line in lines:
            rule, freq = gr.parse_rule(line)
            grammar.add(rule, freq)
        reports.append(gr.PairReport(index, "ok", "%d rules" % len(lines)))
    kinds = cfg.synthesize_kinds()
    for (x, _), _w in usable:
        if "copy" in kinds:
            grammar.update(gr.synthesize_copy_rules(x))
        if "delete" in kinds:
            grammar.update(gr.synthesize_delete_rules(x))
    return gr.filter_grammar(grammar, cfg.filter_k), reports


def cmd_train(args, cfg: Config) -> int:
    _require(cfg, "grammar")
    pairs = _read_pairs(cfg)
    gram = gr.Grammar.load(cfg.grammar)
    model = _load_lm(cfg, pairs)
    space = features.FeatureSpace()
    instances, dropped = prepare_instances(pairs, gram)
    if not instances:
        raise UsageError("no trainable pairs (all lack gold derivations)")
    spec = losses.LossSpec(cfg.loss, length_penalty_scale=cfg.length_penalty_scale)
    spec = losses.scale_loss(spec, cfg.loss_scale)
    tconfig = TrainConfig(C=cfg.C, loss=spec, epsilon=cfg.epsilon,
                          max_passes=cfg.max_passes, beam=_beam(cfg))
    weights, history = cutting_plane_train(instances, gram, model, space, tconfig)
    features.save_weights(args.out, weights, space)
    log.info("trained on %d instances (%d dropped); %d passes; model -> %s",
             len(instances), dropped, len(history), args.out)
    if args.lm_out:
        if isinstance(model, lms.NullModel):
            log.warning("--lm-out ignored: no ngram model in this run")
        else:
            lms.save_arpa(model, args.lm_out)
            log.info("ngram model -> %s", args.lm_out)
    if args.curves:
        from .report import render_training_curves
        for path in render_training_curves(history, args.curves):
            log.info("figure -> %s", path)
    return 0


def cmd_compress(args, cfg: Config) -> int:
    if getattr(args, "input", None):
        cfg.values["source"] = args.input
    _require(cfg, "source", "grammar")
    trees = treebank.read_treebank(cfg.source)
    gram = gr.Grammar.load(cfg.grammar)
    model = _load_lm(cfg)
    space = features.FeatureSpace()
    weights = (features.load_weights(cfg.model, space)
               if cfg.values.get("model") else {})
    beam = _beam(cfg)
    synth = cfg.synthesize_kinds()
    out_fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    failures = 0
    try:
        jobs = cfg.jobs or 1
        results = _compress_many(trees, gram, weights, model, space, beam,
                                 synth, jobs)
        for i, result in enumerate(results):
            if result is None:
                failures += 1
                log.warning("tree %d: no derivation covers the input", i)
                out_fh.write("\n")
                continue
            tokens, tree_str, trace = result
            fields = [" ".join(tokens)]
            if args.emit_trees:
                fields.append(tree_str)
            if args.emit_derivation:
                fields.append(trace)
            out_fh.write("\t".join(fields) + "\n")
    finally:
        if args.out:
            out_fh.close()
    log.info("compressed %d trees (%d failures)", len(trees), failures)
    return 0


def _compress_one(tree, gram, weights, model, space, beam, synth):
    try:
        d = decode(tree, gram, weights, model, space, beam=beam, synthesize=synth)
    except DecodeError:
        return None
    target = d.target()
    trace = " ;; ".join(r.identity() for r in d.rules())
    return target.tokens(), treebank.serialize(target), trace


_POOL_STATE: dict = {}


def _pool_init(gram, weights, model, space, beam, synth):
    _POOL_STATE.update(gram=gram, weights=weights, model=model, space=space,
                       beam=beam, synth=synth)


def _pool_work(tree):
    s = _POOL_STATE
    return _compress_one(tree, s["gram"], s["weights"], s["model"], s["space"],
                         s["beam"], s["synth"])


def _compress_many(trees, gram, weights, model, space, beam, synth, jobs):
    if jobs <= 1 or len(trees) < 2:
        return [_compress_one(t, gram, weights, model, space, beam, synth)
                for t in trees]
    import multiprocessing as mp

    ctx = mp.get_context("fork")
    with ctx.Pool(jobs, initializer=_pool_init,
                  initargs=(gram, weights, model, space, beam, synth)) as pool:
        return pool.map(_pool_work, trees)


def cmd_eval(args, cfg: Config) -> int:
    for path in (args.pred, args.ref):
        if not os.path.exists(path):
            raise UsageError("file not found: %s" % path)
    predictions = evaluation.read_sentences(args.pred)
    references = evaluation.read_sentences(args.ref)
    sources = None
    if args.src:
        if not os.path.exists(args.src):
            raise UsageError("file not found: %s" % args.src)
        sources = [t.tokens() for t in treebank.read_treebank(args.src)]
    report = evaluation.evaluate_corpus(
        predictions, references, sources,
        length_penalty_scale=cfg.length_penalty_scale)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            report.write_tsv(fh)
    else:
        report.write_tsv(sys.stdout)
    log.info("%s", report.summary())
    if args.figures:
        from .report import render_eval_figures
        for path in render_eval_figures(report, args.figures):
            log.info("figure -> %s", path)
    return 0


def cmd_sample(args, cfg: Config) -> int:
    _require(cfg, "grammar")
    gram = gr.Grammar.load(cfg.grammar)
    rng = random.Random(cfg.resolved_seed())
    chooser = random_chooser(rng)
    sources, targets = [], []
    attempts = 0
    while len(sources) < args.count:
        attempts += 1
        if attempts > args.count * 20:
            raise SamplingError("too many sampling failures (%d pairs after %d tries)"
                                % (len(sources), attempts))
        try:
            x, y = sample_pair(gram, chooser)
        except SamplingError as exc:
            log.warning("sample attempt %d failed: %s", attempts, exc)
            continue
        if x.frontier_nodes() or y.frontier_nodes():
            # unexpandable deletion sites do not survive a file round-trip
            log.warning("sample attempt %d left frontier stubs; retrying", attempts)
            continue
        sources.append(x)
        targets.append(y)
    treebank.write_treebank(args.out_source, sources)
    treebank.write_treebank(args.out_target, targets)
    log.info("sampled %d pairs -> %s / %s", args.count,
             args.out_source, args.out_target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
