"""Output events, output-type-directed search spaces and event selection."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from .core import (
    AdjacentInputPair,
    Arity,
    AtomKind,
    Cat,
    InvalidParameterError,
    Mechanism,
    MechanismArgs,
    MechanismOutput,
    OutputBatch,
    OutputKind,
    Phase,
    stream,
)
from .runner import run_batches
from .stats import DEFAULT_RESAMPLES, approx_z, pvalue

GRID_STEP = 0.2
#: cap on finite grid points per numeric family; the step is widened past it
MAX_GRID_POINTS = 1500
#: events per tuple and direction that get an exact p-value during selection
DEFAULT_SHORTLIST = 16
#: minimum combined count, as a fraction of n * e^epsilon
MIN_COUNT_FRACTION = 0.001
#: z-scores closer than this are within sampling noise of each other
Z_TIE = 3.0


class NoCandidateError(RuntimeError):
    """Every candidate event was too rare to score."""


def fmt_bound(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(round(float(x), 10) + 0.0)


def fmt_symbol(s) -> str:
    return str(s)


# ---------------------------------------------------------------------------
# Per-run statistics shared by events and families
# ---------------------------------------------------------------------------


def symbol_code(alphabet: tuple, symbol) -> int:
    """Position of ``symbol`` in ``alphabet`` or -3; True never matches 1."""
    for c, s in enumerate(alphabet):
        if s == symbol and type(s) is type(symbol):
            return c
    return -3


def _reference_codes(reference: tuple, alphabet: tuple) -> np.ndarray:
    # numeric atoms get -3, which never equals a batch code
    return np.array([symbol_code(alphabet, a.symbol) if isinstance(a, Cat) else -3
                     for a in reference], dtype=np.int64)


AGGREGATES = ("avg", "min", "max")


def hamming_distances(batch: OutputBatch, reference: tuple) -> np.ndarray:
    """Mismatches over the overlapping prefix plus the length difference."""
    ref = _reference_codes(reference, batch.alphabet)
    return batch.memo(("hamming", ref.tobytes()), lambda: _hamming(batch, ref))


def _hamming(batch: OutputBatch, ref: np.ndarray) -> np.ndarray:
    L0 = ref.size
    width = max(batch.width, L0)
    codes = np.pad(batch.codes, ((0, 0), (0, width - batch.width)), constant_values=-1)
    refp = np.pad(ref, (0, width - L0), constant_values=-3)
    pos = np.arange(width)[None, :]
    overlap = (pos < batch.lengths[:, None]) & (pos < L0)
    mism = np.count_nonzero((codes != refp[None, :]) & overlap, axis=1)
    return mism + np.abs(batch.lengths - L0)


def value_counts(batch: OutputBatch, symbol) -> np.ndarray:
    code = symbol_code(batch.alphabet, symbol)
    if code < 0:
        return np.zeros(len(batch), dtype=np.int64)
    return batch.memo(("count", code),
                      lambda: np.count_nonzero((batch.codes == code) & batch.valid(), axis=1))


def coord_values(batch: OutputBatch, i: int) -> np.ndarray:
    """Numeric value at position i, NaN when absent or categorical."""
    def compute():
        if i >= batch.width:
            return np.full(len(batch), np.nan)
        v = batch.values[:, i].copy()
        v[batch.lengths <= i] = np.nan
        return v
    return batch.memo(("coord", i), compute)


def aggregate_values(batch: OutputBatch, agg: str) -> np.ndarray:
    """avg/min/max over the numeric entries; NaN when there are none."""
    if agg not in AGGREGATES:
        raise InvalidParameterError(f"unknown aggregate {agg!r}")
    return batch.memo(("agg", agg), lambda: _aggregate(batch, agg))


def _aggregate(batch: OutputBatch, agg: str) -> np.ndarray:
    vals = np.where(batch.valid(), batch.values, np.nan)
    has = np.any(~np.isnan(vals), axis=1)
    out = np.full(len(batch), np.nan)
    if has.any():
        sub = vals[has]
        if agg == "avg":
            out[has] = np.nanmean(sub, axis=1)
        elif agg == "min":
            out[has] = np.nanmin(sub, axis=1)
        else:
            out[has] = np.nanmax(sub, axis=1)
    return out


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------


class Event:
    """A declarative output set. ``mask`` is the vectorised ``contains``."""

    def mask(self, batch: OutputBatch) -> np.ndarray:
        raise NotImplementedError

    def contains(self, output: MechanismOutput) -> bool:
        return bool(self.mask(OutputBatch.from_outputs([output], alphabet=_alphabet_of(output)))[0])

    def __str__(self):
        raise NotImplementedError


def _alphabet_of(output: MechanismOutput) -> tuple:
    seen = []
    for s in output.categorical:
        if s not in seen:
            seen.append(s)
    return tuple(seen)


@dataclass(frozen=True)
class HammingShell(Event):
    """Outputs at Hamming distance exactly k from the noiseless reference."""

    k: int
    reference: tuple = field(default=(), compare=False, repr=False)

    def mask(self, batch):
        return hamming_distances(batch, self.reference) == self.k

    def contains(self, output):
        ref = self.reference
        common = min(len(output), len(ref))
        mism = sum(1 for j in range(common)
                   if not (isinstance(output[j], Cat) and isinstance(ref[j], Cat)
                           and symbol_code((ref[j].symbol,), output[j].symbol) == 0))
        return mism + abs(len(output) - len(ref)) == self.k

    def __str__(self):
        return f"hamming={self.k}"


@dataclass(frozen=True)
class LengthIs(Event):
    k: int

    def mask(self, batch):
        return batch.lengths == self.k

    def contains(self, output):
        return len(output) == self.k

    def __str__(self):
        return f"length={self.k}"


@dataclass(frozen=True)
class CountOfValueIs(Event):
    value: Hashable
    k: int

    def mask(self, batch):
        return value_counts(batch, self.value) == self.k

    def contains(self, output):
        return sum(1 for s in output.categorical if s == self.value
                   and type(s) is type(self.value)) == self.k

    def __str__(self):
        return f"count({fmt_symbol(self.value)})={self.k}"


def _check_interval(a, b):
    if not a < b:
        raise InvalidParameterError(f"interval bounds must satisfy a < b, got ({a}, {b})")


@dataclass(frozen=True)
class CoordInInterval(Event):
    i: int
    a: float
    b: float

    def __post_init__(self):
        _check_interval(self.a, self.b)

    def mask(self, batch):
        v = coord_values(batch, self.i)
        with np.errstate(invalid="ignore"):
            return (v > self.a) & (v < self.b)

    def contains(self, output):
        if self.i >= len(output) or isinstance(output[self.i], Cat):
            return False
        return self.a < output[self.i] < self.b

    def __str__(self):
        return f"coord[{self.i}]in({fmt_bound(self.a)},{fmt_bound(self.b)})"


@dataclass(frozen=True)
class AggInInterval(Event):
    agg: str
    a: float
    b: float

    def __post_init__(self):
        if self.agg not in AGGREGATES:
            raise InvalidParameterError(f"unknown aggregate {self.agg!r}")
        _check_interval(self.a, self.b)

    def mask(self, batch):
        v = aggregate_values(batch, self.agg)
        with np.errstate(invalid="ignore"):
            return (v > self.a) & (v < self.b)

    def contains(self, output):
        nums = output.numeric
        if not nums:
            return False
        v = {"avg": sum(nums) / len(nums), "min": min(nums), "max": max(nums)}[self.agg]
        return self.a < v < self.b

    def __str__(self):
        return f"{self.agg}()in({fmt_bound(self.a)},{fmt_bound(self.b)})"


@dataclass(frozen=True)
class CoordEquals(Event):
    i: int
    k: float

    def mask(self, batch):
        return coord_values(batch, self.i) == self.k

    def contains(self, output):
        if self.i >= len(output) or isinstance(output[self.i], Cat):
            return False
        return output[self.i] == self.k

    def __str__(self):
        return f"coord[{self.i}]={fmt_bound(self.k)}"


@dataclass(frozen=True)
class Product(Event):
    """Conjunction of a categorical-part event and a numeric-part event."""

    categorical: Event
    numeric: Event

    def mask(self, batch):
        return self.categorical.mask(batch) & self.numeric.mask(batch)

    def contains(self, output):
        return self.categorical.contains(output) and self.numeric.contains(output)

    def __str__(self):
        return f"{self.categorical}&{self.numeric}"


_BOUND = r"(-?inf|-?\d+(?:\.\d+)?(?:e-?\d+)?)"
_PATTERNS = [
    (re.compile(r"hamming=(\d+)$"), lambda m, ref: HammingShell(int(m[1]), ref)),
    (re.compile(r"length=(\d+)$"), lambda m, ref: LengthIs(int(m[1]))),
    (re.compile(r"count\((.+)\)=(\d+)$"), lambda m, ref: CountOfValueIs(_symbol(m[1]), int(m[2]))),
    (re.compile(rf"coord\[(\d+)\]in\({_BOUND},{_BOUND}\)$"),
     lambda m, ref: CoordInInterval(int(m[1]), float(m[2]), float(m[3]))),
    (re.compile(rf"(avg|min|max)\(\)in\({_BOUND},{_BOUND}\)$"),
     lambda m, ref: AggInInterval(m[1], float(m[2]), float(m[3]))),
    (re.compile(rf"coord\[(\d+)\]={_BOUND}$"), lambda m, ref: CoordEquals(int(m[1]), float(m[2]))),
]


def _symbol(text: str):
    if text in ("True", "False"):
        return text == "True"
    try:
        return int(text)
    except ValueError:
        return text


def parse_event(text: str, reference: tuple = ()) -> Event:
    """Inverse of ``str(event)``. Hamming shells need the reference output."""
    if "&" in text:
        left, right = text.split("&", 1)
        return Product(parse_event(left, reference), parse_event(right, reference))
    for pat, build in _PATTERNS:
        m = pat.match(text)
        if m:
            return build(m, tuple(reference))
    raise InvalidParameterError(f"cannot parse event {text!r}")


# ---------------------------------------------------------------------------
# Output kinds
# ---------------------------------------------------------------------------


def classify_output_kind(samples) -> OutputKind:
    """Infer arity and atom kind from observed outputs (a list or batches)."""
    if isinstance(samples, OutputBatch):
        samples = [samples]
    samples = list(samples)
    if not samples:
        raise InvalidParameterError("need at least one sample to classify outputs")
    if isinstance(samples[0], OutputBatch):
        total = sum(len(b) for b in samples)
        lengths = np.concatenate([b.lengths for b in samples])
        has_cat = any(np.any((b.codes >= 0) & b.valid()) for b in samples)
        has_num = any(np.any(~np.isnan(b.values) & b.valid()) for b in samples)
    else:
        total = len(samples)
        lengths = np.array([len(o) for o in samples])
        has_cat = any(o.categorical for o in samples)
        has_num = any(o.numeric for o in samples)
    if total < 2:
        raise InvalidParameterError("need at least two samples to classify outputs")
    arity = Arity.VARIABLE if np.unique(lengths).size > 1 else Arity.FIXED
    if has_cat and has_num:
        atoms = AtomKind.MIXED
    elif has_num:
        atoms = AtomKind.NUMERIC
    else:
        atoms = AtomKind.CATEGORICAL
    return OutputKind(arity, atoms)


# ---------------------------------------------------------------------------
# Search space families
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _pairs(m: int):
    return np.triu_indices(m, k=1)


def grid_points(lo: float, hi: float, step: float = GRID_STEP,
                max_points: int = MAX_GRID_POINTS) -> np.ndarray:
    """Multiples of ``step`` covering [lo, hi]."""
    if not step > 0:
        raise InvalidParameterError("grid step must be positive")
    k0 = math.floor(round(lo / step, 9))
    k1 = math.ceil(round(hi / step, 9))
    stride = max(1, math.ceil((k1 - k0 + 1) / max_points))
    k0 = math.floor(k0 / stride) * stride
    ks = np.arange(k0, k1 + stride, stride)
    return np.round(ks * step, 10) + 0.0


class Family:
    """An ordered block of events over one per-run statistic.

    ``stat(batch)`` returns one number per run (NaN/-1 when undefined) and
    event e of the family holds exactly when the statistic hits its target.
    An optional ``gate`` event restricts runs (product events).
    """

    size: int
    gate: Optional[Event] = None

    def _gated(self, batch, values):
        if self.gate is not None:
            gate = self.gate
            values = values[batch.memo(("gate", gate), lambda: gate.mask(batch))]
        return values

    def counts(self, batch) -> np.ndarray:
        raise NotImplementedError

    def event(self, e: int) -> Event:
        raise NotImplementedError

    def events(self) -> list:
        return [self.event(e) for e in range(self.size)]

    def _wrap(self, ev):
        return Product(self.gate, ev) if self.gate is not None else ev


class DiscreteFamily(Family):
    def __init__(self, stat: Callable, targets, make: Callable, gate=None):
        self.stat = stat
        self.targets = np.asarray(targets, dtype=float)
        self.make = make
        self.gate = gate
        self.size = len(self.targets)

    def counts(self, batch):
        v = self._gated(batch, self.stat(batch).astype(float))
        v = np.sort(v[~np.isnan(v)])
        return (np.searchsorted(v, self.targets, "right")
                - np.searchsorted(v, self.targets, "left"))

    def event(self, e):
        t = self.targets[e]
        return self._wrap(self.make(int(t) if float(t).is_integer() else float(t)))


class IntervalFamily(Family):
    """Open intervals (a, b), a < b, with endpoints on a grid or infinite."""

    def __init__(self, stat: Callable, grid, make: Callable, gate=None):
        self.stat = stat
        self.edges = np.concatenate([[-np.inf], np.asarray(grid, dtype=float), [np.inf]])
        self.make = make
        self.gate = gate
        m = self.edges.size
        self.size = m * (m - 1) // 2

    def counts(self, batch):
        v = self._gated(batch, self.stat(batch))
        v = np.sort(v[~np.isnan(v)])
        below = np.searchsorted(v, self.edges, "left")     # x < edge
        at_most = np.searchsorted(v, self.edges, "right")  # x <= edge
        i, j = _pairs(self.edges.size)
        return below[j] - at_most[i]

    def event(self, e):
        i, j = _pairs(self.edges.size)
        return self._wrap(self.make(float(self.edges[i[e]]), float(self.edges[j[e]])))


def _numeric_families(length_bound, info, grid_step, max_grid, gates=(None,)):
    """Per-coordinate and aggregate families, repeated for every gate.

    ``info(key, stat)`` -> (lo, hi, integral) gives the observed range of a statistic.
    """
    specs = [(("coord", i), lambda b, i=i: coord_values(b, i), i) for i in range(length_bound)]
    specs += [(("agg", a), lambda b, a=a: aggregate_values(b, a), a) for a in AGGREGATES]
    builders = []
    for key, stat, which in specs:
        lo, hi, integral = info(key, stat)
        grid = np.array([]) if lo is None else grid_points(lo, hi, grid_step, max_grid)
        if isinstance(which, int) and integral and lo is not None:
            targets = np.arange(math.floor(lo), math.ceil(hi) + 1)
            builders.append(lambda g, s=stat, t=targets, i=which: DiscreteFamily(
                s, t, lambda k: CoordEquals(i, k), g))
        elif isinstance(which, int):
            builders.append(lambda g, s=stat, gr=grid, i=which: IntervalFamily(
                s, gr, lambda a, b: CoordInInterval(i, a, b), g))
        else:
            builders.append(lambda g, s=stat, gr=grid, w=which: IntervalFamily(
                s, gr, lambda a, b: AggInInterval(w, a, b), g))
    return [build(gate) for gate in gates for build in builders]


def _categorical_families(kind, reference, length_bound, alphabet, with_hamming=True):
    ks = np.arange(length_bound + 1)
    fams = []
    if with_hamming:
        ref = tuple(reference)
        fams.append(DiscreteFamily(lambda b: hamming_distances(b, ref), ks,
                                   lambda k: HammingShell(k, ref)))
    for sym in alphabet:
        fams.append(DiscreteFamily(lambda b, s=sym: value_counts(b, s), ks,
                                   lambda k, s=sym: CountOfValueIs(s, k)))
    return fams


def _length_family(length_bound):
    return DiscreteFamily(lambda b: b.lengths, np.arange(length_bound + 1), LengthIs)


def search_families(kind: OutputKind, reference, length_bound: int, alphabet,
                    info: Callable, grid_step: float = GRID_STEP,
                    max_grid: int = MAX_GRID_POINTS) -> list:
    if length_bound < 1:
        raise InvalidParameterError("length bound must be at least 1")
    variable = kind.arity is Arity.VARIABLE
    if kind.atoms is AtomKind.CATEGORICAL:
        fams = _categorical_families(kind, reference, length_bound, alphabet)
        if variable:
            fams.append(_length_family(length_bound))
        return fams
    if kind.atoms is AtomKind.NUMERIC:
        fams = _numeric_families(length_bound, info, grid_step, max_grid)
        if variable:
            fams.append(_length_family(length_bound))
        return fams
    # mixed: (categorical-part event) x (numeric-part event)
    gates = []
    for fam in _categorical_families(kind, reference, length_bound, alphabet,
                                     with_hamming=False):
        gates.extend(fam.events())
    if variable:
        gates.extend(_length_family(length_bound).events())
    return _numeric_families(length_bound, info, grid_step, max_grid, gates)


def build_search_space(kind: OutputKind, reference, length_bound: int, alphabet,
                       numeric_range: Optional[tuple] = None, grid_step: float = GRID_STEP,
                       integral: bool = False) -> list:
    """All candidate events for outputs of ``kind`` as a flat list.

    ``reference`` is the noiseless output on D1; ``numeric_range`` bounds the
    interval grid for every numeric statistic.
    """
    lo, hi = numeric_range if numeric_range is not None else (None, None)
    info = lambda key, stat: (lo, hi, integral)  # noqa: E731
    events = []
    for fam in search_families(kind, reference, length_bound, alphabet, info, grid_step):
        events.extend(fam.events())
    return events


def _sample_info(batches):
    def info(key, stat):
        vals = np.concatenate([stat(b) for b in batches])
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            return None, None, False
        return float(vals.min()), float(vals.max()), bool(np.all(vals == np.round(vals)))
    return info


def _observed_alphabet(batches) -> tuple:
    alphabet = batches[0].alphabet
    used = set()
    for b in batches:
        used.update(int(c) for c in np.unique(b.codes[(b.codes >= 0) & b.valid()]))
    return tuple(alphabet[c] for c in sorted(used))


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


@dataclass
class SelectionResult:
    pair: AdjacentInputPair
    args: MechanismArgs
    event: Event
    exploratory_pvalue: float
    c1: int = 0
    c2: int = 0
    n: int = 0
    tuple_index: int = 0
    kind: Optional[OutputKind] = None
    reference: tuple = ()
    scores: Optional[list] = None


def min_count(n: int, epsilon: float) -> float:
    return MIN_COUNT_FRACTION * n * math.exp(epsilon)


def _argmin(scored: list):
    """Smallest p-value; equal p-values (typically 0.0 once the tail underflows)
    whose z-scores lie within ``Z_TIE`` of the best are indistinguishable and
    go to the earliest candidate in enumeration order."""
    p_min = min(s[3] for s in scored)
    tied = [s for s in scored if s[3] == p_min]
    z_max = max(s[4] for s in tied)
    return next(s for s in tied if s[4] >= z_max - Z_TIE)


def select_event(mechanism: Mechanism, epsilon: float, input_list: Sequence, n_select: int,
                 seed: int = 0, *, point: int = 0, resamples: int = DEFAULT_RESAMPLES,
                 workers: int = 1, grid_step: float = GRID_STEP,
                 shortlist: Optional[int] = DEFAULT_SHORTLIST,
                 max_grid: int = MAX_GRID_POINTS, keep_scores: bool = False) -> SelectionResult:
    """Pick the (inputs, args, event) combination with the smallest exploratory p-value.

    Each candidate tuple is executed ``n_select`` times per side. Events too
    rare to score (combined count below 0.001 * n * e^epsilon) are skipped.
    With ``shortlist`` set, only the ``shortlist`` events per tuple and
    direction with the largest normal-approximation z-score receive an exact
    p-value; ``shortlist=None`` scores every surviving event. Equal p-values
    are compared by normal-approximation z-score; candidates within ``Z_TIE``
    of the best go to enumeration order (tuples, then families, then events).
    """
    if not input_list:
        raise InvalidParameterError("input list is empty")
    floor = min_count(n_select, epsilon)
    candidates = []
    contexts = []
    for t, (pair, args) in enumerate(input_list):
        b1 = run_batches(mechanism, pair.d1.as_array(), args, n_select, seed,
                         (point, Phase.SELECT, t, 0), workers)
        b2 = run_batches(mechanism, pair.d2.as_array(), args, n_select, seed,
                         (point, Phase.SELECT, t, 0), workers)
        reference = mechanism.execute(pair.d1, args.without_noise()).entries
        kind = classify_output_kind([b1, b2])
        length_bound = int(max(b1.lengths.max(), b2.lengths.max(), len(reference)))
        fams = search_families(kind, reference, length_bound, _observed_alphabet([b1, b2]),
                               _sample_info([b1, b2]), grid_step, max_grid)
        contexts.append((kind, reference, fams))
        pool = []
        for f, fam in enumerate(fams):
            c1 = fam.counts(b1)
            c2 = fam.counts(b2)
            ok = np.flatnonzero(c1 + c2 >= floor)
            if ok.size:
                pool.append((f, ok, c1[ok], c2[ok]))
        if not pool:
            continue
        fidx = np.concatenate([np.full(p[1].size, p[0]) for p in pool])
        eidx = np.concatenate([p[1] for p in pool])
        c1s = np.concatenate([p[2] for p in pool])
        c2s = np.concatenate([p[3] for p in pool])
        keep = np.arange(fidx.size)
        if shortlist is not None and keep.size > 2 * shortlist:
            z_top = approx_z(c1s, c2s, n_select, epsilon)
            z_bot = approx_z(c2s, c1s, n_select, epsilon)
            keep = np.union1d(np.argsort(-z_top, kind="stable")[:shortlist],
                              np.argsort(-z_bot, kind="stable")[:shortlist])
        for k in keep:
            candidates.append(((t, int(fidx[k]), int(eidx[k])), int(c1s[k]), int(c2s[k])))
    if not candidates:
        raise NoCandidateError(
            f"no event reached the minimum count {floor:.1f} out of {n_select} runs; "
            f"increase n_select")
    candidates.sort(key=lambda c: c[0])
    rng = stream(seed, point, Phase.SELECT_THIN)
    scored = []
    for key, c1, c2 in candidates:
        p = min(pvalue(c1, c2, n_select, epsilon, rng, resamples),
                pvalue(c2, c1, n_select, epsilon, rng, resamples))
        z = max(float(approx_z(c1, c2, n_select, epsilon)),
                float(approx_z(c2, c1, n_select, epsilon)))
        scored.append((key, c1, c2, p, z))
    (t, f, e), c1, c2, p, _ = _argmin(scored)
    pair, args = input_list[t]
    kind, reference, fams = contexts[t]
    return SelectionResult(pair, args, fams[f].event(e), p, c1, c2, n_select, t, kind,
                           tuple(reference), scored if keep_scores else None)
