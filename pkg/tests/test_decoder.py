import itertools
import random

import pytest

from treeduce.alignment import constituent_align
from treeduce.decoder import (BeamSpec, EXACT_BEAM, Derivation,
                              MalformedDerivationError, RuleApp, SamplingError,
                              UncoverableInputError, apply_derivation, decode,
                              gold_derivation, loss_augmented_decode,
                              random_chooser, sample_pair)
from treeduce.features import FeatureSpace, LM_FEATURE, derivation_features
from treeduce.grammar import Grammar, extract_minimal, matcher_for, parse_rule
from treeduce.lm import NullModel, train_toy
from treeduce.losses import LossSpec, items_of, loss_between, make_reference
from treeduce.treebank import parse_bracketed, serialize

from conftest import SOURCE_STR, TARGET_STR, random_deletion_pair, random_tree
from oracles import batch_score, enumerate_derivations


# -- derivation replay ----------------------------------------------------------


def test_gold_derivation_and_replay_golden(toy_grammar, source_tree, target_tree):
    d = gold_derivation(source_tree, target_tree, toy_grammar)
    assert d is not None
    assert len(d) == 12
    src, tgt = apply_derivation(d)
    assert serialize(src) == SOURCE_STR
    assert serialize(tgt) == TARGET_STR


def test_gold_derivation_maximizes_rule_count(toy_grammar, source_tree, target_tree):
    matcher = matcher_for(toy_grammar, source_tree, ())
    all_d = enumerate_derivations(source_tree, matcher, "S")
    matching = [d for d in all_d
                if serialize(d.target()) == TARGET_STR]
    assert matching
    best = max(len(d) for d in matching)
    d = gold_derivation(source_tree, target_tree, toy_grammar)
    assert len(d) == best


def test_gold_derivation_identity_uses_copy_rule_per_node():
    from treeduce.grammar import synthesize_copy_rules

    rng = random.Random(51)
    for _ in range(20):
        t = random_tree(rng, max_depth=3)
        g = Grammar()
        g.update(synthesize_copy_rules(t))
        d = gold_derivation(t, t, g)
        assert d is not None
        internal = sum(1 for n in t.nodes if n.kind == "internal")
        assert len(d) == internal


def test_gold_derivation_failure_is_none(source_tree, target_tree):
    assert gold_derivation(source_tree, target_tree, Grammar()) is None


def test_apply_derivation_single_copy_rule():
    rule, _ = parse_rule("X X ||| [X x] ||| [X x] ||| - ||| copy ||| 0")
    x = parse_bracketed("[X x]")
    d = Derivation(x, RuleApp(rule, x.root, []))
    src, tgt = apply_derivation(d)
    assert serialize(src) == "[X x]" and serialize(tgt) == "[X x]"


def test_apply_derivation_rejects_bad_anchor():
    rule, _ = parse_rule("X X ||| [X x] ||| [X x] ||| - ||| copy ||| 0")
    x = parse_bracketed("[Y [X x]]")
    d = Derivation(x, RuleApp(rule, x.root, []))
    with pytest.raises(MalformedDerivationError):
        apply_derivation(d)


def test_replay_consistency_with_decode(space):
    rng = random.Random(52)
    for _ in range(25):
        t = random_tree(rng, max_depth=3)
        d = decode(t, Grammar(), {}, NullModel(), space, beam=EXACT_BEAM)
        src, _ = apply_derivation(d)
        assert serialize(src) == serialize(t)


# -- plain decoding -------------------------------------------------------------


def test_identity_transduction_with_copy_rules(space):
    from treeduce.grammar import synthesize_copy_rules

    rng = random.Random(53)
    for _ in range(50):
        t = random_tree(rng)
        g = Grammar()
        g.update(synthesize_copy_rules(t))
        d = decode(t, g, {}, NullModel(), space, synthesize=())
        assert serialize(d.target()) == serialize(t)


def test_decode_golden_running_example(space, toy_grammar, source_tree, target_tree):
    weights = {space.intern("rule=%s" % r.identity()): 1.0
               for r in toy_grammar.rules}
    d = decode(source_tree, toy_grammar, weights, NullModel(), space,
               beam=EXACT_BEAM)
    assert d.target().tokens() == "what records are involved".split()
    assert serialize(d.target()) == TARGET_STR
    # confirm against exhaustive enumeration over the same rule space
    matcher = matcher_for(toy_grammar, source_tree, ("copy", "delete"))
    all_d = enumerate_derivations(source_tree, matcher, "S")
    best = max(batch_score(o, source_tree, NullModel(), weights, space)
               for o in all_d)
    assert d.score == pytest.approx(best, abs=1e-6)
    assert best == 12.0


def _random_instance(rng, space):
    """A small decoding instance: tree, grammar, weights, model."""
    x, y, a = random_deletion_pair(rng, max_depth=3)
    calign = constituent_align(x, y, a)
    if (x.root, y.root) not in calign:
        return None
    rules = extract_minimal(x, y, calign, a)
    g = Grammar(src_root=x.root.label, tgt_root=None)
    g.update(rules)
    sentences = [x.tokens(), y.tokens()]
    model = train_toy(sentences, rng.choice([2, 3]))
    weights = {}
    for r in g.rules:
        weights[space.intern("rule=%s" % r.identity())] = rng.uniform(-1, 1)
    weights[space.intern("rule_count")] = rng.uniform(-0.5, 0.5)
    weights[space.intern("wc_target")] = rng.uniform(-0.5, 0.5)
    weights[space.intern("type=copy")] = rng.uniform(-1, 0)
    weights[space.intern("type=delete")] = rng.uniform(-1, 0)
    weights[space.intern(LM_FEATURE)] = rng.uniform(0.1, 1.0)
    return x, g, weights, model


def test_decode_matches_bruteforce_on_random_instances(space):
    rng = random.Random(54)
    checked = 0
    while checked < 50:
        inst = _random_instance(rng, space)
        if inst is None:
            continue
        x, g, weights, model = inst
        matcher = matcher_for(g, x, ("copy", "delete"))
        all_d = enumerate_derivations(x, matcher, x.root.label, cap=10000)
        if all_d is None or not all_d:
            continue
        best = max(batch_score(d, x, model, weights, space) for d in all_d)
        got = decode(x, g, weights, model, space, beam=EXACT_BEAM)
        assert got.score == pytest.approx(best, abs=1e-6)
        # the returned derivation really achieves that score
        assert batch_score(got, x, model, weights, space) == \
            pytest.approx(best, abs=1e-6)
        checked += 1


def test_score_consistency_incremental_vs_batch(space):
    rng = random.Random(55)
    for _ in range(25):
        inst = _random_instance(rng, space)
        if inst is None:
            continue
        x, g, weights, model = inst
        d = decode(x, g, weights, model, space, beam=EXACT_BEAM)
        assert d.score == pytest.approx(
            batch_score(d, x, model, weights, space), abs=1e-6)


def test_lm_accumulation_equals_rescoring(space):
    rng = random.Random(56)
    done = 0
    while done < 100:
        inst = _random_instance(rng, space)
        if inst is None:
            continue
        x, g, _, model = inst
        weights = {space.intern(LM_FEATURE): 1.0}
        d = decode(x, g, weights, model, space, beam=EXACT_BEAM)
        assert d.score == pytest.approx(
            model.sequence_logprob(d.target().tokens()), abs=1e-6)
        done += 1


def test_beam_monotonicity_on_fixed_suite(space):
    rng = random.Random(57)
    instances = []
    while len(instances) < 10:
        inst = _random_instance(rng, space)
        if inst is not None:
            instances.append(inst)
    beams = [BeamSpec(1, 2), BeamSpec(2, 4), BeamSpec(8, 16),
             BeamSpec(64, 128), EXACT_BEAM]
    for x, g, weights, model in instances:
        scores = []
        for beam in beams:
            try:
                scores.append(decode(x, g, weights, model, space, beam=beam).score)
            except UncoverableInputError:
                scores.append(float("-inf"))
        for a, b in zip(scores, scores[1:]):
            assert b >= a - 1e-9


def test_uncoverable_input_names_a_node(space):
    t = parse_bracketed("[S [A a] [B b]]")
    with pytest.raises(UncoverableInputError) as err:
        decode(t, Grammar(), {}, NullModel(), space, synthesize=())
    assert err.value.node is not None


def test_unigram_model_needs_no_contexts(space):
    # order-1 model: every cell group collapses to a single context
    t = parse_bracketed("[S [A [B b] [C c]] [D d]]")
    model = train_toy([["b", "c", "d"]], 1)
    weights = {space.intern(LM_FEATURE): 1.0}
    d = decode(t, Grammar(), weights, model, space)
    assert d.score == pytest.approx(model.sequence_logprob(d.target().tokens()))


def test_beam_profile_defaults_are_pinned():
    from treeduce.decoder import DECODE_BEAM, MODEL_SELECTION_BEAM
    import inspect

    assert (DECODE_BEAM.unique, DECODE_BEAM.total) == (200, 500)
    assert (MODEL_SELECTION_BEAM.unique, MODEL_SELECTION_BEAM.total) == (100, 200)
    assert inspect.signature(decode).parameters["beam"].default is DECODE_BEAM


def test_reordering_rule_decodes_and_scores_exactly(space):
    # gamma may permute its variables; boundary ngrams must still be
    # scored once each in the permuted order
    g = Grammar(src_root="PP", tgt_root="PP")
    for line in [
        "PP PP ||| [PP IN#1 NP#2] ||| [PP NP#2 IN#1] ||| 0-1 1-0 ||| extracted ||| 1",
        "IN IN ||| [IN of] ||| [IN of] ||| - ||| extracted ||| 1",
        "NP NP ||| [NP roses] ||| [NP roses] ||| - ||| extracted ||| 1",
    ]:
        g.add(parse_rule(line)[0])
    x = parse_bracketed("[PP [IN of] [NP roses]]")
    model = train_toy([["roses", "of"], ["of", "roses"]], 2)
    weights = {space.intern(LM_FEATURE): 1.0,
               space.intern("rule=%s" % g.rules[0].identity()): 5.0}
    d = decode(x, g, weights, model, space, beam=EXACT_BEAM)
    assert d.target().tokens() == ["roses", "of"]
    expected = 5.0 + model.sequence_logprob(["roses", "of"])
    assert d.score == pytest.approx(expected, abs=1e-9)


def test_beam_unique_versus_total_limits(space):
    # two rules produce distinct cells; a unique-limit of one keeps only
    # the heuristically best, while a generous unique-limit keeps both
    g = Grammar(src_root="X", tgt_root="Y")
    for line in [
        "X Y ||| [X a] ||| [Y u] ||| - ||| extracted ||| 1",
        "X Y ||| [X a] ||| [Y v v] ||| - ||| extracted ||| 1",
    ]:
        g.add(parse_rule(line)[0])
    x = parse_bracketed("[X a]")
    model = train_toy([["u"], ["v", "v"]], 2)
    weights = {space.intern(LM_FEATURE): 1.0}
    wide = decode(x, g, weights, model, space, beam=BeamSpec(10, 10),
                  synthesize=())
    narrow_unique = decode(x, g, weights, model, space, beam=BeamSpec(1, 10),
                           synthesize=())
    narrow_total = decode(x, g, weights, model, space, beam=BeamSpec(10, 1),
                          synthesize=())
    assert wide.score >= narrow_unique.score - 1e-12
    assert wide.score >= narrow_total.score - 1e-12
    # a total-limit of one pops exactly the heuristic-best corner
    assert narrow_total.score == pytest.approx(narrow_unique.score)


# -- loss-augmented decoding -----------------------------------------------------


def test_zero_loss_equals_plain_decode(space, toy_grammar, source_tree, target_tree):
    weights = {space.intern("rule=%s" % r.identity()): 1.0
               for r in toy_grammar.rules}
    spec = LossSpec("hamming-token", factor=1e-12)
    plain = decode(source_tree, toy_grammar, weights, NullModel(), space,
                   beam=EXACT_BEAM)
    augmented = loss_augmented_decode(source_tree, target_tree, toy_grammar,
                                      weights, NullModel(), space, spec,
                                      beam=EXACT_BEAM)
    assert serialize(augmented.target()) == serialize(plain.target())


def test_loss_augmented_zero_weights_maximizes_loss(space):
    rng = random.Random(58)
    spec = LossSpec("hamming-token")
    done = 0
    while done < 50:
        pair = random_deletion_pair(rng, max_depth=3)
        x, y, a = pair
        calign = constituent_align(x, y, a)
        if (x.root, y.root) not in calign:
            continue
        g = Grammar(src_root=x.root.label)
        g.update(extract_minimal(x, y, calign, a))
        matcher = matcher_for(g, x, ("copy", "delete"))
        all_d = enumerate_derivations(x, matcher, x.root.label, cap=10000)
        if all_d is None or not all_d:
            continue
        ref = make_reference(spec, y)
        best = max(loss_between(spec, items_of(spec, d.target()), ref)
                   for d in all_d)
        got = loss_augmented_decode(x, y, g, {}, NullModel(), space, spec,
                                    beam=EXACT_BEAM)
        got_loss = loss_between(spec, items_of(spec, got.target()), ref)
        assert got.score == pytest.approx(best, abs=1e-6)
        assert got_loss == pytest.approx(best, abs=1e-6)
        done += 1


@pytest.mark.parametrize("kind", ["hamming-ngram", "hamming-cfg", "edit", "f1"])
def test_loss_augmented_exact_for_stratified_losses(space, kind):
    rng = random.Random(59)
    spec = LossSpec(kind)
    done = 0
    while done < 12:
        x, y, a = random_deletion_pair(rng, max_depth=3)
        calign = constituent_align(x, y, a)
        if (x.root, y.root) not in calign:
            continue
        g = Grammar(src_root=x.root.label)
        g.update(extract_minimal(x, y, calign, a))
        matcher = matcher_for(g, x, ("copy", "delete"))
        all_d = enumerate_derivations(x, matcher, x.root.label, cap=5000)
        if all_d is None or not all_d:
            continue
        ref = make_reference(spec, y)
        best = max(loss_between(spec, items_of(spec, d.target()), ref)
                   for d in all_d)
        got = loss_augmented_decode(x, y, g, {}, NullModel(), space, spec,
                                    beam=EXACT_BEAM)
        assert got.score == pytest.approx(best, abs=1e-6)
        done += 1


def test_violation_at_least_gold(space, toy_grammar, source_tree, target_tree):
    spec = LossSpec("hamming-token")
    rng = random.Random(60)
    weights = {space.intern("rule=%s" % r.identity()): rng.uniform(-1, 1)
               for r in toy_grammar.rules}
    gold = gold_derivation(source_tree, target_tree, toy_grammar)
    gold_psi = derivation_features(gold, source_tree, NullModel(), space)
    got = loss_augmented_decode(source_tree, target_tree, toy_grammar, weights,
                                NullModel(), space, spec, beam=EXACT_BEAM)
    got_psi = derivation_features(got, source_tree, NullModel(), space)
    ref = make_reference(spec, target_tree)
    h_got = loss_between(spec, items_of(spec, got.target()), ref) \
        + got_psi.dot(weights) - gold_psi.dot(weights)
    h_gold = 0.0 + gold_psi.dot(weights) - gold_psi.dot(weights)
    assert h_got >= h_gold - 1e-9


# -- sampling --------------------------------------------------------------------


def test_sample_pair_scripted_reproduces_target(toy_grammar):
    by_identity = {r.identity().split(" ||| ")[1]: r for r in toy_grammar.rules}
    script = [
        "[S [SBAR WHNP#1 S#2] [CC and] SBAR#3]",
        "[WHNP RB#e WP#1]",
        "[WP what]",
        "[S NP#1 VP#e]",
        "[VP VBP#1 VP#2]",
        "[VBP are]",
        "[VP VBN#1]",
        "[VBN involved]",
        "[NP NNS#1]",
        "[NNS records]",
        "[SBAR WHNP#e S#1]",
        "[WHNP RB#e WP#1]",
        "[WP what]",
        "[S NP#e VP#1]",
        "[NP NNS#1]",
        "[NNS records]",
        "[VP VBP#1 VP#2]",
        "[VBP are]",
        "[VP VBN#1]",
        "[VBN involved]",
    ]
    queue = [by_identity[s] for s in script]

    def chooser(pair, candidates):
        rule = queue.pop(0)
        assert rule in candidates, (pair, rule)
        return rule

    x, y = sample_pair(toy_grammar, chooser)
    assert serialize(y) == TARGET_STR
    assert not queue


def test_sample_pair_single_rule_grammar():
    g = Grammar(src_root="X", tgt_root="X")
    rule, _ = parse_rule("X X ||| [X x] ||| [X x] ||| - ||| extracted ||| 1")
    g.add(rule)
    x, y = sample_pair(g, lambda pair, cands: cands[0])
    assert serialize(x) == "[X x]" and serialize(y) == "[X x]"


def test_sample_pair_dead_end_reports():
    g = Grammar(src_root="X", tgt_root="Y")
    rule, _ = parse_rule("X Y ||| [X A#1] ||| [Y B#1] ||| 0-0 ||| extracted ||| 1")
    g.add(rule)
    with pytest.raises(SamplingError):
        sample_pair(g, lambda pair, cands: cands[0])


def test_sampler_closure_under_generating_grammar():
    from treeduce.grammar import induce_grammar
    from treeduce.alignment import auto_align_deletion
    from treeduce.treebank import read_treebank
    from importlib import resources

    data = resources.files("treeduce.data").joinpath("toy")
    with resources.as_file(data.joinpath("source.trees")) as p:
        sources = read_treebank(p)
    with resources.as_file(data.joinpath("target.trees")) as p:
        targets = read_treebank(p)
    pairs = list(zip(sources, targets))
    aligns = [auto_align_deletion(x.tokens(), y.tokens()) for x, y in pairs]
    g, _ = induce_grammar(pairs, aligns, depth=1)
    rng = random.Random(61)
    chooser = random_chooser(rng)
    sampled = 0
    attempts = 0
    while sampled < 200:
        attempts += 1
        assert attempts < 4000, "sampler rarely terminates"
        try:
            x, y = sample_pair(g, chooser, max_nodes=300)
        except SamplingError:
            continue
        d = gold_derivation(x, y, g)
        assert d is not None, (serialize(x), serialize(y))
        sampled += 1
