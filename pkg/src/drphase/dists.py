"""Finite distributions on nonnegative integers, with leak accounting.

Weights live in a dense float64 array indexed by value.  Mass removed by
upper-tail truncation, by sub-1e-300 cleanup, or by cutting an unbounded
offspring law is never renormalized away: it accumulates in `leaked_mass`.
Retained means and generating-function values are therefore certified
lower bounds for the untruncated quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import logsumexp

from . import kernels

# |sum(weights) + leaked_mass - 1| must stay inside this band.
MASS_TOL = 1e-12
# Weights below this are swept into leaked_mass during convolution.
WEIGHT_FLOOR = 1e-300
# Default cut mass when an unbounded offspring law is materialized.
GEOMETRIC_TAIL = 1e-14
# Direct convolution up to this many multiply-adds, transform above.
_DIRECT_CONV_OPS = 1 << 24


@dataclass(frozen=True)
class FinitePmf:
    """Dense pmf over {0, 1, ..., support_max} plus mass tracked as leaked.

    probs[v] is the retained probability of value v; trailing zeros are
    trimmed at construction so support_max == len(probs) - 1.  The invariant
    sum(probs) + leaked_mass == 1 is enforced to MASS_TOL.
    """

    probs: np.ndarray
    leaked_mass: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError("weights must form a one-dimensional array")
        if probs.size and not np.all(np.isfinite(probs)):
            raise ValueError("weights must be finite")
        if np.any(probs < 0.0):
            raise ValueError("weights must be nonnegative")
        nz = np.flatnonzero(probs)
        probs = probs[: nz[-1] + 1] if nz.size else probs[:0]
        leak = float(self.leaked_mass)
        if not 0.0 <= leak <= 1.0 + MASS_TOL:
            raise ValueError(f"leaked_mass {leak} outside [0, 1]")
        total = float(probs.sum()) + leak
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {total!r} outside the 1 +/- {MASS_TOL} band")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "leaked_mass", leak)

    @classmethod
    def from_dict(cls, weights: Mapping[int, float], leaked_mass: float = 0.0) -> "FinitePmf":
        """Build from a value -> probability mapping; exact zeros are dropped."""
        if not weights:
            return cls(np.zeros(0), leaked_mass)
        for v in weights:
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"support value {v!r} is not a nonnegative integer")
        top = max(weights)
        probs = np.zeros(int(top) + 1)
        for v, w in weights.items():
            probs[int(v)] = w
        return cls(probs, leaked_mass)

    @classmethod
    def delta(cls, value: int) -> "FinitePmf":
        return cls.from_dict({int(value): 1.0})

    @property
    def support_max(self) -> int:
        return self.probs.size - 1

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs)

    def as_dict(self) -> dict[int, float]:
        return {int(v): float(self.probs[v]) for v in self.support}

    def mass_at(self, value: int) -> float:
        if 0 <= value < self.probs.size:
            return float(self.probs[value])
        return 0.0

    def tail_mass(self, value: int) -> float:
        """Retained P(X >= value)."""
        if value <= 0:
            return self.total_mass
        return float(self.probs[value:].sum())


def mean(p: FinitePmf) -> float:
    """Retained first moment (a lower bound when leaked_mass > 0)."""
    return float(np.dot(p.probs, np.arange(p.probs.size, dtype=np.float64)))


def pgf_eval(p: FinitePmf, s: float) -> float:
    """E s^X over the retained weights; overflows to inf for huge supports."""
    if s <= 0.0:
        raise ValueError(f"pgf argument must be positive, got {s}")
    idx = p.support
    if idx.size == 0:
        return 0.0
    return float(np.dot(p.probs[idx], np.power(float(s), idx.astype(np.float64))))


def pgf_deriv(p: FinitePmf, s: float) -> float:
    """d/ds E s^X over the retained weights."""
    if s <= 0.0:
        raise ValueError(f"pgf argument must be positive, got {s}")
    idx = p.support
    idx = idx[idx >= 1]
    if idx.size == 0:
        return 0.0
    k = idx.astype(np.float64)
    return float(np.dot(p.probs[idx] * k, np.power(float(s), k - 1.0)))


def log_pgf_eval(p: FinitePmf, s: float) -> float:
    """log E s^X, stable far beyond float64 range."""
    if s <= 0.0:
        raise ValueError(f"pgf argument must be positive, got {s}")
    idx = p.support
    if idx.size == 0:
        return -math.inf
    terms = np.log(p.probs[idx]) + idx.astype(np.float64) * math.log(s)
    return float(logsumexp(terms))


def log_pgf_deriv(p: FinitePmf, s: float) -> float:
    """log of d/ds E s^X, stable far beyond float64 range."""
    if s <= 0.0:
        raise ValueError(f"pgf argument must be positive, got {s}")
    idx = p.support
    idx = idx[idx >= 1]
    if idx.size == 0:
        return -math.inf
    k = idx.astype(np.float64)
    terms = np.log(p.probs[idx]) + np.log(k) + (k - 1.0) * math.log(s)
    return float(logsumexp(terms))


def convolve(p: FinitePmf, q: FinitePmf) -> FinitePmf:
    """Law of the sum of independents; leaks combine as 1-(1-lp)(1-lq)."""
    leak = p.leaked_mass + q.leaked_mass - p.leaked_mass * q.leaked_mass
    if p.probs.size == 0 or q.probs.size == 0:
        return FinitePmf(np.zeros(0), 1.0)
    if p.probs.size * q.probs.size <= _DIRECT_CONV_OPS:
        w = kernels.get_backend().conv_direct(p.probs, q.probs)
    else:
        w = fftconvolve(p.probs, q.probs)
        np.clip(w, 0.0, None, out=w)
    tiny = (w > 0.0) & (w < WEIGHT_FLOOR)
    if tiny.any():
        leak += float(w[tiny].sum())
        w[tiny] = 0.0
    return FinitePmf(w, leak)


def truncate(p: FinitePmf, tail_eps: float) -> FinitePmf:
    """Cut the largest upper tail whose total mass is <= tail_eps.

    Removed mass moves into leaked_mass; nothing is renormalized, so the
    survivor is a certified sub-law of the input.
    """
    if not 0.0 <= tail_eps < 1.0:
        raise ValueError(f"tail_eps must lie in [0, 1), got {tail_eps}")
    if p.probs.size == 0:
        return p
    rev_cum = np.cumsum(p.probs[::-1])
    k = int(np.searchsorted(rev_cum, tail_eps, side="right"))
    if k == 0:
        return p
    keep = p.probs.size - k
    removed = float(p.probs[keep:].sum())
    return FinitePmf(p.probs[:keep], p.leaked_mass + removed)


@dataclass(frozen=True)
class OffspringLaw:
    """Law of the number of replicas summed per step.

    kind is 'deterministic', 'finite', or 'geometric'.  weights is a dense
    pmf over counts (weights[0] == 0); for a geometric law it appears only
    once a cutoff is applied, with the cut mass recorded in truncation_leak.
    mean is exact for all three kinds (1/p for geometric, independent of any
    cutoff).  bound is the essential supremum, absent for geometric laws:
    they stay unbounded no matter the cutoff, so criteria that need a bound
    never see one.
    """

    kind: str
    mean: float
    weights: np.ndarray | None = None
    bound: int | None = None
    truncation_leak: float = 0.0
    success_prob: float | None = None

    def __post_init__(self):
        if self.kind not in ("deterministic", "finite", "geometric"):
            raise ValueError(f"unknown offspring kind {self.kind!r}")
        if (self.bound is not None) != (self.kind != "geometric"):
            raise ValueError("bound must be present exactly for non-geometric kinds")
        if self.mean <= 1.0:
            raise ValueError(f"offspring mean must exceed 1, got {self.mean}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.ndim != 1 or w.size < 2 or w[0] != 0.0 or np.any(w < 0.0):
                raise ValueError("offspring weights must be a dense pmf over counts >= 1")
            if abs(float(w.sum()) + self.truncation_leak - 1.0) > MASS_TOL:
                raise ValueError("offspring weights plus truncation_leak must sum to 1")
            w = w.copy()
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @classmethod
    def deterministic(cls, n: int) -> "OffspringLaw":
        if not isinstance(n, (int, np.integer)) or n < 2:
            raise ValueError("a constant replica count must be an integer >= 2 "
                             "(the count must exceed 1 with positive probability)")
        w = np.zeros(int(n) + 1)
        w[int(n)] = 1.0
        return cls("deterministic", float(n), w, int(n))

    @classmethod
    def finite_support(cls, pmf: Mapping[int, float]) -> "OffspringLaw":
        if not pmf:
            raise ValueError("offspring pmf must not be empty")
        for k in pmf:
            if not isinstance(k, (int, np.integer)) or k < 1:
                raise ValueError(f"offspring count {k!r} is not an integer >= 1")
        top = int(max(pmf))
        w = np.zeros(top + 1)
        for k, v in pmf.items():
            if v < 0.0:
                raise ValueError(f"offspring probability for {k} is negative")
            w[int(k)] = v
        if abs(float(w.sum()) - 1.0) > MASS_TOL:
            raise ValueError("offspring probabilities must sum to 1")
        if float(w[2:].sum()) <= 0.0:
            raise ValueError("the replica count must exceed 1 with positive probability")
        m = float(np.dot(w, np.arange(top + 1, dtype=np.float64)))
        return cls("finite", m, w, top)

    @classmethod
    def geometric(cls, p: float) -> "OffspringLaw":
        """Success-probability p law on {1, 2, ...}; P(N = k) = p (1-p)^(k-1)."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"geometric success probability must lie in (0, 1), got {p}")
        return cls("geometric", 1.0 / p, None, None, 0.0, float(p))

    def with_cutoff(self, tail: float = GEOMETRIC_TAIL) -> "OffspringLaw":
        """Materialize a geometric law's weights up to the smallest cutoff
        whose upper tail is below `tail`; the tail becomes truncation_leak."""
        if self.kind != "geometric":
            return self
        p = self.success_prob
        q = 1.0 - p
        cutoff = max(2, math.ceil(math.log(tail) / math.log(q)))
        while q ** cutoff >= tail:
            cutoff += 1
        w = np.zeros(cutoff + 1)
        w[1:] = p * np.power(q, np.arange(cutoff, dtype=np.float64))
        return OffspringLaw("geometric", self.mean, w, None, float(q ** cutoff), p)

    def materialized(self, tail: float = GEOMETRIC_TAIL) -> "OffspringLaw":
        """Self, with weights guaranteed present."""
        if self.weights is not None:
            return self
        return self.with_cutoff(tail)

    @property
    def counts(self) -> np.ndarray:
        if self.weights is None:
            raise ValueError("geometric offspring law has no truncation cutoff; "
                             "call with_cutoff() first")
        return self.weights

    def pgf(self, v: float) -> float:
        """E v^N over the retained weights (closed form when none are set)."""
        if self.weights is None:
            return self._closed_pgf(v)
        k = np.arange(self.weights.size, dtype=np.float64)
        return float(np.dot(self.weights, np.power(float(v), k)))

    def pgf_deriv(self, v: float) -> float:
        if self.weights is None:
            return self._closed_pgf_deriv(v)
        k = np.arange(self.weights.size, dtype=np.float64)
        return float(np.dot(self.weights[1:] * k[1:], np.power(float(v), k[1:] - 1.0)))

    def pgf_exact(self, v: float) -> float:
        """E v^N of the ideal law: closed form for geometric, sums otherwise."""
        if self.kind == "geometric":
            return self._closed_pgf(v)
        return self.pgf(v)

    def pgf_deriv_exact(self, v: float) -> float:
        if self.kind == "geometric":
            return self._closed_pgf_deriv(v)
        return self.pgf_deriv(v)

    def _closed_pgf(self, v: float) -> float:
        p, q = self.success_prob, 1.0 - self.success_prob
        if q * v >= 1.0:
            raise ValueError(f"geometric pgf diverges at argument {v}")
        return p * v / (1.0 - q * v)

    def _closed_pgf_deriv(self, v: float) -> float:
        p, q = self.success_prob, 1.0 - self.success_prob
        if q * v >= 1.0:
            raise ValueError(f"geometric pgf diverges at argument {v}")
        return p / (1.0 - q * v) ** 2

    def log_pgf(self, log_v: float) -> float:
        """log E v^N from log v, over the retained weights."""
        w = self.counts
        idx = np.flatnonzero(w)
        terms = np.log(w[idx]) + idx.astype(np.float64) * log_v
        return float(logsumexp(terms))

    def log_pgf_deriv(self, log_v: float) -> float:
        w = self.counts
        idx = np.flatnonzero(w)
        k = idx.astype(np.float64)
        terms = np.log(w[idx]) + np.log(k) + (k - 1.0) * log_v
        return float(logsumexp(terms))


@dataclass(frozen=True)
class ModelSpec:
    """One recursion instance: X' = (sum of N replicas of X, minus a)+."""

    a: int
    x0: FinitePmf
    offspring: OffspringLaw

    def __post_init__(self):
        if not isinstance(self.a, (int, np.integer)) or self.a < 1:
            raise ValueError(f"the tax a must be an integer >= 1, got {self.a!r}")
        object.__setattr__(self, "a", int(self.a))
        if self.x0.leaked_mass != 0.0:
            raise ValueError("the initial law must carry no leaked mass")
        if self.x0.support.size < 2:
            raise ValueError("the initial law is not a constant in this model class; "
                             "give it at least 2 support points")
