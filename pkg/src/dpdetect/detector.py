"""Counterexample detection for one test epsilon and sweeps over epsilon grids."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .core import AdjacentInputPair, InvalidParameterError, Mechanism, MechanismArgs
from .events import GRID_STEP, DEFAULT_SHORTLIST, Event, NoCandidateError, select_event
from .inputs import input_list
from .mechanisms import get_mechanism
from .stats import DEFAULT_RESAMPLES, hypothesis_test

log = logging.getLogger(__name__)

N_DETECT = 500_000
N_SELECT = 100_000


def epsilon_grid(lo: float, hi: float, step: float) -> list:
    """Inclusive arithmetic grid, rounded to kill float drift."""
    if not step > 0:
        raise InvalidParameterError("grid step must be positive")
    if hi < lo:
        raise InvalidParameterError("grid upper end is below its lower end")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(count)]


def default_grid(epsilon0: float) -> list:
    return epsilon_grid(0.05, epsilon0 + 1.5, 0.1)


@dataclass(frozen=True)
class DetectionConfig:
    mechanism: str
    epsilon0: float
    test_epsilons: tuple = ()
    n_detect: int = N_DETECT
    n_select: int = N_SELECT
    resamples: int = DEFAULT_RESAMPLES
    alpha: float = 0.05
    seed: int = 0
    workers: int = 1
    grid_step: float = GRID_STEP
    shortlist: Optional[int] = DEFAULT_SHORTLIST

    def __post_init__(self):
        if not self.epsilon0 > 0:
            raise InvalidParameterError("epsilon0 must be positive")
        if self.n_detect < 1 or self.n_select < 1:
            raise InvalidParameterError("n_detect and n_select must be at least 1")
        if self.resamples < 1:
            raise InvalidParameterError("resamples must be at least 1")
        if not 0 < self.alpha < 1:
            raise InvalidParameterError("alpha must lie in (0, 1)")
        if self.workers < 1:
            raise InvalidParameterError("workers must be at least 1")
        eps = tuple(float(e) for e in self.test_epsilons) or tuple(default_grid(self.epsilon0))
        if any(e < 0 for e in eps):
            raise InvalidParameterError("test epsilons must be non-negative")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise InvalidParameterError("test epsilon grid must be strictly increasing")
        object.__setattr__(self, "test_epsilons", eps)

    def echo(self) -> dict:
        """Everything needed to replay a run; the worker count never affects results."""
        return {
            "mechanism": self.mechanism,
            "epsilon0": self.epsilon0,
            "test_epsilons": list(self.test_epsilons),
            "n_detect": self.n_detect,
            "n_select": self.n_select,
            "resamples": self.resamples,
            "alpha": self.alpha,
            "seed": self.seed,
            "grid_step": self.grid_step,
            "shortlist": self.shortlist,
            "seeding": "stream(seed, point_index, phase, tuple|side, side|chunk)",
        }


@dataclass
class DetectionResult:
    mechanism: str
    epsilon0: float
    test_epsilon: float
    pair: Optional[AdjacentInputPair] = None
    args: Optional[MechanismArgs] = None
    event: Optional[Event] = None
    c1: int = 0
    c2: int = 0
    n: int = 0
    p_top: float = float("nan")
    p_bot: float = float("nan")
    seconds: float = 0.0
    error: Optional[str] = None
    selection_pvalue: float = float("nan")

    @property
    def min_p(self) -> float:
        return min(self.p_top, self.p_bot)

    @property
    def ok(self) -> bool:
        return self.error is None


def _resolve(mechanism: Union[str, Mechanism]) -> Mechanism:
    return get_mechanism(mechanism) if isinstance(mechanism, str) else mechanism


def detect(mechanism: Union[str, Mechanism], config: DetectionConfig, test_epsilon: float,
           point: int = 0) -> DetectionResult:
    """Select a candidate counterexample and re-test it on fresh samples.

    ``point`` labels the random streams, so distinct grid points never share
    randomness.
    """
    mech = _resolve(mechanism)
    start = time.perf_counter()
    candidates = input_list(mech, config.epsilon0)
    try:
        sel = select_event(mech, test_epsilon, candidates, config.n_select, config.seed,
                           point=point, resamples=config.resamples, workers=config.workers,
                           grid_step=config.grid_step, shortlist=config.shortlist)
    except NoCandidateError as exc:
        raise NoCandidateError(f"{exc} (currently {config.n_select})") from exc
    pv = hypothesis_test(mech, sel.args, test_epsilon, sel.pair, sel.event, config.n_detect,
                         config.seed, point=point, resamples=config.resamples,
                         workers=config.workers)
    elapsed = time.perf_counter() - start
    log.info("%s eps=%g: %s on %s -> p=(%.3g, %.3g) in %.1fs", mech.name, test_epsilon,
             sel.event, sel.pair.category.value, pv.p_top, pv.p_bot, elapsed)
    return DetectionResult(mech.name, config.epsilon0, test_epsilon, sel.pair, sel.args,
                           sel.event, pv.counts.c1, pv.counts.c2, config.n_detect,
                           pv.p_top, pv.p_bot, elapsed, None, sel.exploratory_pvalue)


def sweep(mechanism: Union[str, Mechanism], config: DetectionConfig) -> list:
    """``detect`` at every grid point; a failing point is recorded and skipped."""
    mech = _resolve(mechanism)
    results = []
    for point, eps in enumerate(config.test_epsilons):
        try:
            results.append(detect(mech, config, eps, point))
        except Exception as exc:  # recorded per point, sweep continues
            log.warning("%s eps=%g failed: %s", mech.name, eps, exc)
            results.append(DetectionResult(mech.name, config.epsilon0, eps, error=str(exc)))
    return results


def verdict(results: Sequence[DetectionResult], epsilon0: float, alpha: float) -> str:
    at = [r for r in results if r.ok and abs(r.test_epsilon - epsilon0) < 1e-9]
    if not at:
        return "no result at the claimed epsilon"
    if at[0].min_p < alpha:
        return f"violation detected at epsilon0={epsilon0:g} (min p={at[0].min_p:.3g})"
    return f"no violation detected at epsilon0={epsilon0:g} (min p={at[0].min_p:.3g})"
