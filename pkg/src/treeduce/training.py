"""Large-margin training with cutting planes and margin rescaling.

The learner keeps, per training instance, a working set of constraints of
the form  <w, gold features - competitor features> >= loss - slack.  Each
pass runs loss-augmented decoding to find the competitor that most violates
the current weights; when the violation beats the instance's slack by more
than epsilon the constraint is added and the restricted quadratic program
is re-solved in the dual by coordinate ascent (single-coordinate steps plus
same-instance pairwise exchanges).  Training stops after a pass that adds
no constraint, or at the pass limit.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

from .decoder import (BeamSpec, DECODE_BEAM, Derivation, gold_derivation,
                      loss_augmented_decode)
from .features import FeatureSpace, FeatureVector, derivation_features
from .grammar import Grammar
from .lm import NgramModel
from .losses import (LossSpec, items_of, loss_between, make_reference,
                     scale_loss)

__all__ = ["TrainInstance", "Constraint", "TrainConfig", "PassStats",
           "prepare_instances", "cutting_plane_train", "scale_loss"]
from .treebank import Tree

log = logging.getLogger(__name__)


class TrainInstance:
    """One sentence pair with its gold derivation and cached statistics."""

    __slots__ = ("x", "y", "gold", "gold_features", "reference", "constraints")

    def __init__(self, x: Tree, y: Tree, gold: Derivation):
        self.x = x
        self.y = y
        self.gold = gold
        self.gold_features: Optional[FeatureVector] = None
        self.reference = None
        self.constraints: list["Constraint"] = []


class Constraint:
    __slots__ = ("delta_psi", "loss", "norm2", "alpha")

    def __init__(self, delta_psi: FeatureVector, loss: float):
        self.delta_psi = delta_psi
        self.loss = loss
        self.norm2 = delta_psi.norm2()
        self.alpha = 0.0


class TrainConfig:
    def __init__(self, C: float = 0.01, loss: Optional[LossSpec] = None,
                 epsilon: float = 1e-3, max_passes: int = 100,
                 beam: BeamSpec = DECODE_BEAM,
                 qp_tolerance: float = 1e-6, qp_sweeps: int = 1000):
        if C <= 0:
            raise ValueError("C must be positive")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.C = C
        self.loss = loss if loss is not None else LossSpec("hamming-token")
        self.epsilon = epsilon
        self.max_passes = max_passes
        self.beam = beam
        self.qp_tolerance = qp_tolerance
        self.qp_sweeps = qp_sweeps


class PassStats:
    __slots__ = ("number", "added", "objective", "train_loss")

    def __init__(self, number, added, objective, train_loss):
        self.number = number
        self.added = added
        self.objective = objective
        self.train_loss = train_loss

    def __repr__(self):
        return ("pass=%d added=%d objective=%.6f train_loss=%.4f"
                % (self.number, self.added, self.objective, self.train_loss))


def prepare_instances(pairs: Sequence[tuple[Tree, Tree]], grammar: Grammar
                      ) -> tuple[list[TrainInstance], int]:
    """Gold derivations for every pair; unreachable pairs are dropped."""
    instances = []
    dropped = 0
    for i, (x, y) in enumerate(pairs):
        gold = gold_derivation(x, y, grammar)
        if gold is None:
            dropped += 1
            log.warning("pair %d has no derivation under the grammar; dropped", i)
            continue
        instances.append(TrainInstance(x, y, gold))
    return instances, dropped


def cutting_plane_train(instances: Sequence[TrainInstance], grammar: Grammar,
                        model: NgramModel, space: FeatureSpace,
                        config: TrainConfig
                        ) -> tuple[dict[int, float], list[PassStats]]:
    """Learn weights; returns (weights, per-pass diagnostics)."""
    if not instances:
        raise ValueError("no training instances")
    spec = config.loss
    for inst in instances:
        inst.gold_features = derivation_features(inst.gold, inst.x, model, space)
        inst.reference = make_reference(spec, inst.gold.target())
        inst.constraints = []
    weights: dict[int, float] = {}
    history: list[PassStats] = []
    budget = config.C / len(instances)

    for pass_no in range(1, config.max_passes + 1):
        added = 0
        for inst in instances:
            competitor = loss_augmented_decode(
                inst.x, inst.reference, grammar, weights, model, space, spec,
                beam=config.beam)
            comp_features = derivation_features(competitor, inst.x, model, space)
            loss = loss_between(spec, items_of(spec, competitor.target()),
                                inst.reference)
            delta = inst.gold_features - comp_features
            violation = loss - delta.dot(weights)
            slack = _slack(inst, weights)
            if violation > slack + config.epsilon:
                inst.constraints.append(Constraint(delta, loss))
                added += 1
                weights = _solve_qp(instances, budget,
                                    config.qp_tolerance, config.qp_sweeps)
        objective = _objective(instances, weights, config.C)
        train_loss = _train_loss(instances, grammar, weights, model, space, config)
        history.append(PassStats(pass_no, added, objective, train_loss))
        log.info("%s", history[-1])
        if added == 0:
            break
    return weights, history


def _slack(inst: TrainInstance, weights: dict[int, float]) -> float:
    worst = 0.0
    for c in inst.constraints:
        worst = max(worst, c.loss - c.delta_psi.dot(weights))
    return worst


def _objective(instances, weights, C) -> float:
    norm = 0.5 * sum(v * v for v in weights.values())
    slacks = sum(_slack(inst, weights) for inst in instances)
    return norm + C / len(instances) * slacks


def _train_loss(instances, grammar, weights, model, space, config) -> float:
    """Corpus loss of plain decoding under the current weights."""
    from .decoder import DecodeError, decode

    total = 0.0
    for inst in instances:
        try:
            out = decode(inst.x, grammar, weights, model, space, beam=config.beam)
        except DecodeError:
            total += inst.reference.total
            continue
        total += loss_between(config.loss, items_of(config.loss, out.target()),
                              inst.reference)
    return total


def _solve_qp(instances, budget, tolerance, max_sweeps) -> dict[int, float]:
    """Dual coordinate ascent on the working set.

    maximize  sum_j alpha_j * loss_j - 0.5 ||sum_j alpha_j dpsi_j||^2
    subject to  alpha_j >= 0  and, per instance,  sum alpha_j <= budget.

    Single-coordinate steps handle the interior; pairwise exchanges within
    an instance handle the simplex face where the budget is tight.  Stops
    when no step improves the dual objective by more than the tolerance.
    """
    active = [inst.constraints for inst in instances if inst.constraints]
    # rebuild w from the alphas so it stays consistent with the dual iterate
    w: dict[int, float] = {}
    for group in active:
        for c in group:
            if c.alpha:
                _axpy(w, c.alpha, c.delta_psi)

    for _ in range(max_sweeps):
        gain = 0.0
        for group in active:
            used = sum(c.alpha for c in group)
            for c in group:
                if c.norm2 == 0.0:
                    continue
                grad = c.loss - c.delta_psi.dot(w)
                new_alpha = c.alpha + grad / c.norm2
                new_alpha = min(max(new_alpha, 0.0), c.alpha + (budget - used))
                step = new_alpha - c.alpha
                if step != 0.0:
                    gain = max(gain, grad * step - 0.5 * c.norm2 * step * step)
                    c.alpha = new_alpha
                    used += step
                    _axpy(w, step, c.delta_psi)
            # pairwise exchange when the budget binds
            if len(group) > 1 and budget - used < tolerance:
                for j in range(len(group)):
                    for k in range(j + 1, len(group)):
                        cj, ck = group[j], group[k]
                        diff = cj.delta_psi - ck.delta_psi
                        dn = diff.norm2()
                        if dn == 0.0:
                            continue
                        grad = (cj.loss - cj.delta_psi.dot(w)) - \
                               (ck.loss - ck.delta_psi.dot(w))
                        t = min(max(grad / dn, -cj.alpha), ck.alpha)
                        if t != 0.0:
                            gain = max(gain, grad * t - 0.5 * dn * t * t)
                            cj.alpha += t
                            ck.alpha -= t
                            _axpy(w, t, diff)
        if gain < tolerance:
            break
    return {k: v for k, v in w.items() if v != 0.0}


def _axpy(w: dict[int, float], a: float, fv: FeatureVector) -> None:
    for k, v in fv.items():
        new = w.get(k, 0.0) + a * v
        if new == 0.0:
            w.pop(k, None)
        else:
            w[k] = new
