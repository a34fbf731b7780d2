"""Mechanisms under test: Noisy Max, Histogram and Sparse Vector variants.

All mechanisms are vectorised over runs: ``sample(q, args, rng, size)``
executes ``size`` independent runs. Outputs are emitted in query order.
"""

from __future__ import annotations

import numpy as np

from .core import (
    Arity,
    AtomKind,
    InvalidParameterError,
    Mechanism,
    OutputBatch,
    OutputKind,
    exponential_sample,
    laplace_sample,
)

FIXED_CAT = OutputKind(Arity.FIXED, AtomKind.CATEGORICAL)
FIXED_NUM = OutputKind(Arity.FIXED, AtomKind.NUMERIC)
VAR_CAT = OutputKind(Arity.VARIABLE, AtomKind.CATEGORICAL)
VAR_MIXED = OutputKind(Arity.VARIABLE, AtomKind.MIXED)

BOOLS = (False, True)


def _noise(kind, scale, rng, size, noiseless):
    if noiseless:
        return np.zeros(size)
    if kind == "laplace":
        return laplace_sample(scale, rng, size)
    return exponential_sample(scale, rng, size)


class _NoisyMax(Mechanism):
    noise = "laplace"
    report_value = False

    def sample(self, q, args, rng, size):
        q = np.asarray(q, dtype=float)
        noisy = q[None, :] + _noise(self.noise, 2.0 / args.epsilon0, rng, (size, q.size),
                                    args.noiseless)
        if self.report_value:
            return OutputBatch.numeric(noisy.max(axis=1)[:, None], fixed_length=1)
        # argmax returns the first maximal index; indices are reported 1-based
        idx = noisy.argmax(axis=1)
        return OutputBatch.categorical(idx[:, None], alphabet=tuple(range(1, q.size + 1)),
                                       fixed_length=1)


class NoisyMaxLaplace(_NoisyMax):
    name = "noisy_max_lap"
    kind = FIXED_CAT


class NoisyMaxExponential(_NoisyMax):
    name = "noisy_max_exp"
    kind = FIXED_CAT
    noise = "exponential"


class NoisyMaxLaplaceValue(_NoisyMax):
    name = "noisy_max_lap_value"
    kind = FIXED_NUM
    report_value = True


class NoisyMaxExponentialValue(_NoisyMax):
    name = "noisy_max_exp_value"
    kind = FIXED_NUM
    noise = "exponential"
    report_value = True


class Histogram(Mechanism):
    name = "histogram"
    kind = FIXED_NUM
    adjacency = "histogram"

    def scale(self, args):
        return 1.0 / args.epsilon0

    def sample(self, q, args, rng, size):
        q = np.asarray(q, dtype=float)
        noisy = q[None, :] + _noise("laplace", self.scale(args), rng, (size, q.size),
                                    args.noiseless)
        return OutputBatch.numeric(noisy, fixed_length=q.size)


class HistogramWrongScale(Histogram):
    """Uses Lap(epsilon0) instead of Lap(1/epsilon0); actually 1/epsilon0-private."""

    name = "histogram_wrong_scale"

    def scale(self, args):
        return args.epsilon0


class _SparseVector(Mechanism):
    """Shared body of the sparse vector variants.

    ``threshold_scale`` and ``query_scale`` give the Laplace scales of the
    threshold and per-query noise (``query_scale`` None means no query noise);
    ``halts`` stops after ``N`` above-threshold answers; ``numeric_above``
    reports the noisy answer instead of True.
    """

    kind = VAR_CAT
    consumes = frozenset({"threshold", "bound"})
    halts = True
    numeric_above = False

    def threshold_scale(self, args):
        return 2.0 * args.sensitivity / args.epsilon0

    def query_scale(self, args):
        return 4.0 * self._bound(args) * args.sensitivity / args.epsilon0

    def _bound(self, args):
        if "bound" not in self.consumes:
            return 1
        if args.bound is None:
            raise InvalidParameterError(f"{self.name} requires the bound N")
        return args.bound

    def _threshold(self, args):
        if args.threshold is None:
            raise InvalidParameterError(f"{self.name} requires the threshold T")
        return args.threshold

    def branch_predicates(self, q, args):
        return np.asarray(q, dtype=float) >= self._threshold(args)

    def sample(self, q, args, rng, size):
        q = np.asarray(q, dtype=float)
        T = self._threshold(args)
        N = self._bound(args)
        eta1 = _noise("laplace", self.threshold_scale(args), rng, size, args.noiseless)
        qs = self.query_scale(args)
        if qs is None:
            eta2 = np.zeros((size, q.size))
        else:
            eta2 = _noise("laplace", qs, rng, (size, q.size), args.noiseless)
        noisy = q[None, :] + eta2
        above = noisy >= (T + eta1)[:, None]
        if self.halts:
            hits = np.cumsum(above, axis=1)
            done = hits >= N
            stopped = done.any(axis=1)
            lengths = np.where(stopped, done.argmax(axis=1) + 1, q.size)
        else:
            lengths = np.full(size, q.size)
        pad = np.arange(q.size)[None, :] >= lengths[:, None]
        codes = above.astype(np.int64)
        if self.numeric_above:
            values = np.where(above & ~pad, noisy, np.nan)
            codes = np.where(above, -1, 0)
        else:
            values = np.full(codes.shape, np.nan)
        codes = np.where(pad, -1, codes)
        return OutputBatch(codes, values, lengths.astype(np.int64), BOOLS)


class SVT(_SparseVector):
    name = "svt"


class ISVT1(_SparseVector):
    """No query noise and no bound on the number of True answers."""

    name = "isvt1"
    kind = FIXED_CAT
    consumes = frozenset({"threshold"})
    halts = False

    def query_scale(self, args):
        return None


class ISVT2(_SparseVector):
    """No bound on the number of True answers."""

    name = "isvt2"
    kind = FIXED_CAT
    consumes = frozenset({"threshold"})
    halts = False

    def query_scale(self, args):
        return 2.0 * args.sensitivity / args.epsilon0


class ISVT3(_SparseVector):
    """Query noise does not scale with N; true cost (1 + 6N) / 4 * epsilon0."""

    name = "isvt3"

    def threshold_scale(self, args):
        return 4.0 * args.sensitivity / args.epsilon0

    def query_scale(self, args):
        return 4.0 * args.sensitivity / (3.0 * args.epsilon0)


class ISVT4(_SparseVector):
    """Outputs the noisy answer itself when above the threshold."""

    name = "isvt4"
    kind = VAR_MIXED
    numeric_above = True

    def query_scale(self, args):
        return 2.0 * self._bound(args) * args.sensitivity / args.epsilon0


REGISTRY = {
    cls.name: cls
    for cls in (NoisyMaxLaplace, NoisyMaxExponential, NoisyMaxLaplaceValue,
                NoisyMaxExponentialValue, Histogram, HistogramWrongScale,
                SVT, ISVT1, ISVT2, ISVT3, ISVT4)
}


def get_mechanism(name: str) -> Mechanism:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise InvalidParameterError(
            f"unknown mechanism {name!r}; choose from {', '.join(sorted(REGISTRY))}") from None
