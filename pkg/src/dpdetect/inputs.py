"""Candidate adjacent inputs and mechanism arguments."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .core import (
    AdjacentInputPair,
    Category,
    InvalidParameterError,
    Mechanism,
    MechanismArgs,
    QueryAnswerVector,
)

LENGTHS = (5, 10)
SUPPORTED_ARGS = frozenset({"threshold", "bound"})


class UnsupportedArgumentError(InvalidParameterError):
    pass


def _pattern(category: Category, l: int, delta: float) -> list:
    """(d1, d2) pairs for one category; the baseline answer is 1."""
    base = [1.0] * l
    up, down = 1.0 + delta, 1.0 - delta
    half_lo, half_hi = l // 2, l - l // 2
    if category is Category.ONE_ABOVE:
        return [(base, [up] + base[1:])]
    if category is Category.ONE_BELOW:
        return [(base, [down] + base[1:])]
    if category is Category.ONE_ABOVE_REST_BELOW:
        return [(base, [up] + [down] * (l - 1))]
    if category is Category.ONE_BELOW_REST_ABOVE:
        return [(base, [down] + [up] * (l - 1))]
    if category is Category.HALF_HALF:
        return [(base, [down] * half_hi + [up] * half_lo)]
    if category is Category.ALL_ABOVE_ALL_BELOW:
        # all-below first: ties in the selector go to the earlier tuple
        return [(base, [down] * l), (base, [up] * l)]
    if category is Category.X_SHAPE:
        return [([1.0] * half_lo + [down] * half_hi, [down] * half_lo + [1.0] * half_hi)]
    raise InvalidParameterError(f"unknown category {category}")


def generate_databases(lengths: Iterable[int] = LENGTHS, sensitivity: float = 1.0,
                       categories: Iterable[Category] = tuple(Category)) -> list:
    """Adjacent pairs for every category at every length, in table order."""
    if not sensitivity > 0:
        raise InvalidParameterError("sensitivity must be positive")
    pairs = []
    for l in sorted(set(lengths)):
        if l < 2:
            raise InvalidParameterError(f"input length must be at least 2, got {l}")
        for cat in categories:
            for d1, d2 in _pattern(cat, l, sensitivity):
                pairs.append(AdjacentInputPair(QueryAnswerVector(tuple(d1)),
                                               QueryAnswerVector(tuple(d2)), cat, sensitivity))
    return pairs


def threshold_candidates(pair: AdjacentInputPair) -> np.ndarray:
    """Every ordering of a threshold against the answers, plus answers +- sensitivity/2."""
    answers = np.unique(np.concatenate([pair.d1.as_array(), pair.d2.as_array()]))
    mids = (answers[:-1] + answers[1:]) / 2.0
    half = pair.sensitivity / 2.0
    return np.unique(np.round(np.concatenate([mids, answers - half, answers + half]), 12))


def divergence(mechanism: Mechanism, pair: AdjacentInputPair, args: MechanismArgs) -> int:
    """Number of unrolled branches whose noiseless outcome differs between d1 and d2."""
    b1 = mechanism.branch_predicates(pair.d1.as_array(), args)
    b2 = mechanism.branch_predicates(pair.d2.as_array(), args)
    return int(np.count_nonzero(b1 != b2))


def generate_arguments(mechanism: Mechanism, pair: AdjacentInputPair,
                       epsilon0: float) -> MechanismArgs:
    """Noise-minimising values for noise parameters, divergence-maximising thresholds."""
    unknown = set(mechanism.consumes) - SUPPORTED_ARGS
    if unknown:
        raise UnsupportedArgumentError(
            f"{mechanism.name}: cannot generate argument(s) {', '.join(sorted(unknown))}")
    bound = 1 if "bound" in mechanism.consumes else None
    args = MechanismArgs(epsilon0, bound=bound, sensitivity=pair.sensitivity)
    if "threshold" not in mechanism.consumes:
        return args
    best, best_div = None, -1
    for T in threshold_candidates(pair):
        trial = MechanismArgs(epsilon0, threshold=float(T), bound=bound,
                              sensitivity=pair.sensitivity)
        d = divergence(mechanism, pair, trial)
        if d > best_div:
            best, best_div = trial, d
    return best


def input_list(mechanism: Mechanism, epsilon0: float, lengths: Iterable[int] = LENGTHS,
               sensitivity: float = 1.0) -> list:
    """(pair, args) tuples suited to the mechanism's adjacency notion."""
    if mechanism.adjacency == "histogram":
        cats = [c for c in Category if c.histogram]
    else:
        cats = list(Category)
    return [(pair, generate_arguments(mechanism, pair, epsilon0))
            for pair in generate_databases(lengths, sensitivity, cats)]
