"""Shared domain types, the mechanism interface and calibrated noise."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np


class InvalidParameterError(ValueError):
    """Raised when an operation receives an argument outside its domain."""


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QueryAnswerVector:
    """Query answers standing in for a database."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidParameterError("query answer vector must be non-empty")
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParameterError("query answers must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class Category(enum.Enum):
    ONE_ABOVE = "OneAbove"
    ONE_BELOW = "OneBelow"
    ONE_ABOVE_REST_BELOW = "OneAboveRestBelow"
    ONE_BELOW_REST_ABOVE = "OneBelowRestAbove"
    HALF_HALF = "HalfHalf"
    ALL_ABOVE_ALL_BELOW = "AllAboveAllBelow"
    X_SHAPE = "XShape"

    @property
    def histogram(self) -> bool:
        """True for categories valid under histogram adjacency."""
        return self in (Category.ONE_ABOVE, Category.ONE_BELOW)


@dataclass(frozen=True)
class AdjacentInputPair:
    d1: QueryAnswerVector
    d2: QueryAnswerVector
    category: Category
    sensitivity: float = 1.0

    def __post_init__(self):
        for name in ("d1", "d2"):
            v = getattr(self, name)
            if not isinstance(v, QueryAnswerVector):
                object.__setattr__(self, name, QueryAnswerVector(tuple(v)))
        if self.sensitivity <= 0:
            raise InvalidParameterError("sensitivity must be positive")
        if len(self.d1) != len(self.d2):
            raise InvalidParameterError("adjacent inputs must have equal length")
        diff = np.abs(self.d1.as_array() - self.d2.as_array())
        tol = 1e-12 * max(1.0, self.sensitivity)
        if np.any(diff > self.sensitivity + tol):
            raise InvalidParameterError(
                f"{self.category.value}: coordinates differ by more than {self.sensitivity}")
        if self.category.histogram and np.count_nonzero(diff) != 1:
            raise InvalidParameterError(
                f"{self.category.value}: histogram adjacency needs exactly one differing cell")


@dataclass(frozen=True)
class MechanismArgs:
    epsilon0: float
    threshold: Optional[float] = None
    bound: Optional[int] = None
    sensitivity: float = 1.0
    noiseless: bool = False

    def __post_init__(self):
        if not self.epsilon0 > 0:
            raise InvalidParameterError("epsilon0 must be positive")
        if not self.sensitivity > 0:
            raise InvalidParameterError("sensitivity must be positive")
        if self.bound is not None and self.bound < 1:
            raise InvalidParameterError("bound N must be a positive integer")

    def without_noise(self) -> "MechanismArgs":
        return replace(self, noiseless=True)

    def describe(self) -> str:
        parts = [f"epsilon0={fmt_number(self.epsilon0)}"]
        if self.threshold is not None:
            parts.append(f"threshold={fmt_number(self.threshold)}")
        if self.bound is not None:
            parts.append(f"bound={self.bound}")
        parts.append(f"sensitivity={fmt_number(self.sensitivity)}")
        return ";".join(parts)


def fmt_number(x: float) -> str:
    """Shortest stable text for a real: integers without a fraction, inf as 'inf'."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    x = round(x, 10) + 0.0
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def fmt_vector(values: Iterable[float]) -> str:
    return "[" + ";".join(fmt_number(v) for v in values) + "]"


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cat:
    """A categorical atom."""

    symbol: Hashable

    def __repr__(self):
        return f"Cat({self.symbol!r})"


@dataclass(frozen=True)
class MechanismOutput:
    """One execution result: a list of ``Cat`` atoms and floats."""

    entries: tuple
    fixed_length: Optional[int] = None

    def __post_init__(self):
        entries = tuple(e if isinstance(e, Cat) else float(e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if self.fixed_length is not None and len(entries) != self.fixed_length:
            raise InvalidParameterError(
                f"fixed-arity output must have {self.fixed_length} entries, got {len(entries)}")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def categorical(self) -> list:
        return [e.symbol for e in self.entries if isinstance(e, Cat)]

    @property
    def numeric(self) -> list:
        return [e for e in self.entries if not isinstance(e, Cat)]


class Arity(enum.Enum):
    FIXED = "fixed"
    VARIABLE = "variable"


class AtomKind(enum.Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"
    MIXED = "mixed"


@dataclass(frozen=True)
class OutputKind:
    arity: Arity
    atoms: AtomKind

    def __str__(self):
        return f"{self.arity.value}-{self.atoms.value}"


@dataclass
class OutputBatch:
    """Columnar storage for many outputs of one mechanism.

    ``codes[i, j]`` indexes ``alphabet`` when entry j of run i is categorical
    and is -1 otherwise; ``values[i, j]`` is NaN unless the entry is numeric.
    Positions at or beyond ``lengths[i]`` are padding.
    """

    codes: np.ndarray
    values: np.ndarray
    lengths: np.ndarray
    alphabet: tuple = ()
    fixed_length: Optional[int] = None
    _memo: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __len__(self):
        return self.lengths.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    @classmethod
    def categorical(cls, codes, lengths=None, alphabet=(), fixed_length=None):
        codes = np.asarray(codes, dtype=np.int64)
        if lengths is None:
            lengths = np.full(codes.shape[0], codes.shape[1], dtype=np.int64)
        return cls(codes, np.full(codes.shape, np.nan), np.asarray(lengths, dtype=np.int64),
                   tuple(alphabet), fixed_length)

    @classmethod
    def numeric(cls, values, fixed_length=None):
        values = np.asarray(values, dtype=float)
        return cls(np.full(values.shape, -1, dtype=np.int64), values,
                   np.full(values.shape[0], values.shape[1], dtype=np.int64), (), fixed_length)

    @classmethod
    def concat(cls, batches: Sequence["OutputBatch"]) -> "OutputBatch":
        if len(batches) == 1:
            return batches[0]
        width = max(b.width for b in batches)
        alphabet = batches[0].alphabet
        codes, values = [], []
        for b in batches:
            if b.alphabet != alphabet:
                raise InvalidParameterError("cannot concatenate batches with different alphabets")
            pad = width - b.width
            codes.append(np.pad(b.codes, ((0, 0), (0, pad)), constant_values=-1))
            values.append(np.pad(b.values, ((0, 0), (0, pad)), constant_values=np.nan))
        return cls(np.concatenate(codes), np.concatenate(values),
                   np.concatenate([b.lengths for b in batches]), alphabet, batches[0].fixed_length)

    @classmethod
    def from_outputs(cls, outputs: Sequence[MechanismOutput], alphabet=None) -> "OutputBatch":
        if not outputs:
            raise InvalidParameterError("no outputs")
        if alphabet is None:
            seen = []
            for o in outputs:
                for s in o.categorical:
                    if s not in seen:
                        seen.append(s)
            alphabet = tuple(sorted(seen, key=repr))
        index = {s: i for i, s in enumerate(alphabet)}
        width = max(len(o) for o in outputs)
        n = len(outputs)
        codes = np.full((n, width), -1, dtype=np.int64)
        values = np.full((n, width), np.nan)
        for i, o in enumerate(outputs):
            for j, e in enumerate(o.entries):
                if isinstance(e, Cat):
                    codes[i, j] = index[e.symbol]
                else:
                    values[i, j] = e
        lengths = np.array([len(o) for o in outputs], dtype=np.int64)
        fixed = outputs[0].fixed_length
        return cls(codes, values, lengths, tuple(alphabet), fixed)

    def memo(self, key, compute):
        """Cache a derived per-run statistic; batches are never mutated after creation."""
        if key not in self._memo:
            value = compute()
            if isinstance(value, np.ndarray):
                value.flags.writeable = False
            self._memo[key] = value
        return self._memo[key]

    def valid(self) -> np.ndarray:
        """Mask of non-padding positions."""
        return self.memo("valid", lambda: np.arange(self.width)[None, :] < self.lengths[:, None])

    def output(self, i: int) -> MechanismOutput:
        entries = []
        for j in range(int(self.lengths[i])):
            c = self.codes[i, j]
            entries.append(Cat(self.alphabet[c]) if c >= 0 else float(self.values[i, j]))
        return MechanismOutput(tuple(entries), self.fixed_length)

    def outputs(self) -> list:
        return [self.output(i) for i in range(len(self))]


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

_LOWEST = np.nextafter(0.0, 1.0)


def laplace_from_uniform(u, scale: float):
    """Inverse-CDF transform of uniform draw(s) ``u`` in (0, 1) to Laplace(0, scale)."""
    if not scale > 0:
        raise InvalidParameterError(f"Laplace scale must be positive, got {scale}")
    c = np.asarray(u, dtype=float) - 0.5
    # clamp keeps the u -> 0 edge finite
    mag = np.maximum(1.0 - 2.0 * np.abs(c), _LOWEST)
    x = -scale * np.sign(c) * np.log(mag)
    return float(x) if np.ndim(x) == 0 else x


def exponential_from_uniform(u, scale: float):
    """Inverse-CDF transform of uniform draw(s) to Exponential with mean ``scale``."""
    if not scale > 0:
        raise InvalidParameterError(f"exponential scale must be positive, got {scale}")
    x = -scale * np.log1p(-np.asarray(u, dtype=float))
    return float(x) if np.ndim(x) == 0 else x


def _uniform(rng: np.random.Generator, size):
    u = rng.random(size)
    # rng.random is on [0, 1); 0 maps to the boundary of the support
    return np.where(u == 0.0, _LOWEST, u)


def laplace_sample(scale: float, rng: np.random.Generator, size=None):
    if not scale > 0:
        raise InvalidParameterError(f"Laplace scale must be positive, got {scale}")
    return laplace_from_uniform(_uniform(rng, size), scale)


def exponential_sample(scale: float, rng: np.random.Generator, size=None):
    if not scale > 0:
        raise InvalidParameterError(f"exponential scale must be positive, got {scale}")
    return exponential_from_uniform(_uniform(rng, size), scale)


# ---------------------------------------------------------------------------
# Randomness plumbing
# ---------------------------------------------------------------------------


class Phase(enum.IntEnum):
    """Stream labels; distinct phases never share a random stream."""

    SELECT = 0
    DETECT = 1
    SELECT_THIN = 2
    DETECT_THIN = 3


def stream(seed: int, *labels: int) -> np.random.Generator:
    """Independent generator for the task addressed by ``labels`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in labels))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# Mechanism interface
# ---------------------------------------------------------------------------


class Mechanism:
    """Randomized algorithm under test.

    Subclasses implement :meth:`sample`, which runs the mechanism ``size``
    times and returns an :class:`OutputBatch`. Execution must be a pure
    function of (input, args, random stream).
    """

    name: str = "mechanism"
    kind: OutputKind = OutputKind(Arity.FIXED, AtomKind.CATEGORICAL)
    #: optional arguments the mechanism reads, a subset of {"threshold", "bound"}
    consumes: frozenset = frozenset()
    #: "histogram" (one cell changes) or "per_query" (every answer may change)
    adjacency: str = "per_query"

    def sample(self, q: np.ndarray, args: MechanismArgs, rng: np.random.Generator,
               size: int) -> OutputBatch:
        raise NotImplementedError

    def execute(self, q, args: MechanismArgs, rng: Optional[np.random.Generator] = None
                ) -> MechanismOutput:
        if rng is None:
            if not args.noiseless:
                raise InvalidParameterError("a random stream is required unless noiseless")
            rng = np.random.Generator(np.random.PCG64(0))
        if isinstance(q, QueryAnswerVector):
            q = q.as_array()
        return self.sample(np.asarray(q, dtype=float), args, rng, 1).output(0)

    def branch_predicates(self, q: np.ndarray, args: MechanismArgs) -> np.ndarray:
        """Noiseless outcome of every data-dependent branch, loops fully unrolled."""
        return np.zeros(0, dtype=bool)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"
