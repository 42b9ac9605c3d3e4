"""Law evolution for the clipped-sum recursion X' = (sum of N copies - a)+.

Two independent routes to the same object: step() pushes the pmf forward by
explicit convolution powers, while gf_step_eval/gf_step_deriv map the
generating function F(s) = E s^X forward in closed form.  They must agree,
and the test suite holds them to 1e-10 of each other.

Per-step free-energy bounds: with mu = E N,

    q_upper(n) = E X_n / mu^n          (non-increasing in n)
    q_lower(n) = (E X_n - a/(mu-1)) / mu^n   (non-decreasing in n)

so every trace row carries a certified bracket around the limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dists
from .dists import FinitePmf, ModelSpec
from .logreal import ONE, LogReal

DEFAULT_TAIL_EPS = 1e-14
DEFAULT_LEAK_BUDGET = 1e-9
DEFAULT_STEPS = 30
# Above this log-magnitude of mu^n the bounds are computed in log space.
_LOG_SPACE_CUTOFF = 280.0 * math.log(10.0)


@dataclass(frozen=True)
class TraceRow:
    n: int
    mean_xn: float
    q_upper: float
    q_lower: float
    support_max: int
    cumulative_leak: float


@dataclass(frozen=True)
class EvolutionTrace:
    """Per-step summary rows, optionally with the full pmfs retained."""

    model: ModelSpec
    rows: tuple[TraceRow, ...]
    pmfs: tuple[FinitePmf, ...] | None = None

    def first_certified_step(self) -> int | None:
        """Smallest n whose lower bound already certifies a positive limit."""
        for row in self.rows:
            if row.q_lower > 0.0:
                return row.n
        return None


class LeakBudgetExceeded(RuntimeError):
    """Cumulative truncation leak passed the configured budget.

    rows holds the trace completed so far, last row being the offender.
    """

    def __init__(self, message: str, rows: tuple[TraceRow, ...]):
        super().__init__(message)
        self.rows = rows


class SupportCapExceeded(RuntimeError):
    """The evolving support outgrew the caller's cap; rows as above."""

    def __init__(self, message: str, rows: tuple[TraceRow, ...]):
        super().__init__(message)
        self.rows = rows


def q_bounds(mean_xn: float, n: int, model: ModelSpec) -> tuple[float, float]:
    """Free-energy bracket from the generation-n mean."""
    mu = model.offspring.mean
    shift = model.a / (mu - 1.0)
    log_growth = n * math.log(mu)
    if log_growth <= _LOG_SPACE_CUTOFF:
        growth = mu ** n
        return mean_xn / growth, (mean_xn - shift) / growth
    upper = math.exp(math.log(mean_xn) - log_growth) if mean_xn > 0.0 else 0.0
    num = mean_xn - shift
    if num == 0.0:
        return upper, 0.0
    lower = math.copysign(math.exp(math.log(abs(num)) - log_growth), num)
    return upper, lower


def step(x: FinitePmf, model: ModelSpec,
         tail_eps: float = DEFAULT_TAIL_EPS) -> FinitePmf:
    """One generation: mixture over N of clip-shifted convolution powers."""
    if x.probs.size == 0:
        return FinitePmf(np.zeros(0), 1.0)
    law = model.offspring.materialized()
    w = law.weights
    a = model.a
    kmax = int(np.flatnonzero(w)[-1])
    out_len = max(1, kmax * (x.probs.size - 1) + 1 - a)
    acc = np.zeros(out_len)
    leak = law.truncation_leak
    pw = x
    for k in range(1, kmax + 1):
        if k > 1:
            pw = dists.convolve(pw, x)
        wk = float(w[k])
        if wk == 0.0:
            continue
        leak += wk * pw.leaked_mass
        pp = pw.probs
        acc[0] += wk * float(pp[: a + 1].sum())
        tail = pp[a + 1:]
        if tail.size:
            acc[1: 1 + tail.size] += wk * tail
    tiny = (acc > 0.0) & (acc < dists.WEIGHT_FLOOR)
    if tiny.any():
        leak += float(acc[tiny].sum())
        acc[tiny] = 0.0
    # The exact mixture conserves mass, but convolution powers amplify any
    # float drift by a factor of E N per step (squaring maps 1+d to 1+2d),
    # which would breach the conservation band within ~20 generations.
    # Re-pin the step's total by assigning the ~1e-15 residual to the
    # heaviest bin; far below every stated tolerance.
    idx = int(np.argmax(acc))
    if acc[idx] > 0.0:
        others = float(np.sum(acc[:idx], dtype=np.longdouble)
                       + np.sum(acc[idx + 1:], dtype=np.longdouble))
        pinned = (1.0 - leak) - others
        if pinned > 0.0 and abs(pinned - acc[idx]) <= 1e-9:
            acc[idx] = pinned
    out = FinitePmf(acc, leak)
    if tail_eps > 0.0:
        out = dists.truncate(out, tail_eps)
    return out


def _trace_row(x: FinitePmf, n: int, model: ModelSpec) -> TraceRow:
    m = dists.mean(x)
    upper, lower = q_bounds(m, n, model)
    return TraceRow(n, m, upper, lower, x.support_max, x.leaked_mass)


def evolve(model: ModelSpec, steps: int = DEFAULT_STEPS, *,
           tail_eps: float = DEFAULT_TAIL_EPS,
           leak_budget: float = DEFAULT_LEAK_BUDGET,
           keep_pmfs: bool = False,
           support_cap: int | None = None) -> EvolutionTrace:
    """Iterate step() from x0, collecting the bracket row per generation."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    x = model.x0
    rows = [_trace_row(x, 0, model)]
    pmfs = [x] if keep_pmfs else None
    for n in range(1, steps + 1):
        x = step(x, model, tail_eps)
        rows.append(_trace_row(x, n, model))
        if support_cap is not None and x.support_max > support_cap:
            raise SupportCapExceeded(
                f"support max {x.support_max} exceeds cap {support_cap} "
                f"at generation {n}", tuple(rows))
        if x.leaked_mass > leak_budget:
            raise LeakBudgetExceeded(
                f"cumulative leak {x.leaked_mass:.3e} exceeds budget "
                f"{leak_budget:.3e} at generation {n}", tuple(rows))
        if keep_pmfs:
            pmfs.append(x)
    return EvolutionTrace(model, tuple(rows),
                          tuple(pmfs) if keep_pmfs else None)


def _compound_head(x: FinitePmf, weights: np.ndarray, a: int) -> np.ndarray:
    """First `a` coefficients of the law of (sum of N copies of X).

    Convolution powers are carried head-truncated to length a, which is all
    the clip term of the generating-function map ever consumes.
    """
    head = np.zeros(a)
    h1 = np.zeros(a)
    take = min(a, x.probs.size)
    h1[:take] = x.probs[:take]
    hk = h1
    kmax = int(np.flatnonzero(weights)[-1])
    for k in range(1, kmax + 1):
        if k > 1:
            hk = np.convolve(hk, h1)[:a]
        wk = float(weights[k])
        if wk != 0.0:
            head += wk * hk
    return head


def gf_step_eval(x: FinitePmf, model: ModelSpec, s: float) -> float:
    """Image of F(s) under one generation, computed without step().

    F'(s) = G(F(s))/s^a + sum_{p<a} c_p (1 - s^(p-a)), where c_p are the
    head coefficients of the compound law: exactly the mass the clip at
    zero rounds up, rebooked at value 0.
    """
    return gf_step_eval_log(x, model, s).to_float()


def gf_step_deriv(x: FinitePmf, model: ModelSpec, s: float) -> float:
    """Derivative of the gf_step_eval image at s."""
    return gf_step_deriv_log(x, model, s).to_float()


def gf_step_eval_log(x: FinitePmf, model: ModelSpec, s: float) -> LogReal:
    """gf_step_eval in signed log space; exact far beyond float64 range."""
    if s <= 0.0:
        raise ValueError(f"generating-function argument must be positive, got {s}")
    law = model.offspring
    a = model.a
    log_s = math.log(s)
    log_f = dists.log_pgf_eval(x, s)
    total = LogReal.from_log(law.log_pgf(log_f) - a * log_s)
    head = _compound_head(x, law.counts, a)
    for p in range(a):
        cp = float(head[p])
        if cp > 0.0:
            clip = ONE - LogReal.from_log((p - a) * log_s)
            total = total + LogReal.from_float(cp) * clip
    return total


def gf_step_deriv_log(x: FinitePmf, model: ModelSpec, s: float) -> LogReal:
    """gf_step_deriv in signed log space."""
    if s <= 0.0:
        raise ValueError(f"generating-function argument must be positive, got {s}")
    law = model.offspring
    a = model.a
    log_s = math.log(s)
    log_f = dists.log_pgf_eval(x, s)
    log_fp = dists.log_pgf_deriv(x, s)
    total = LogReal.from_log(law.log_pgf_deriv(log_f) + log_fp - a * log_s)
    total = total - LogReal.from_log(law.log_pgf(log_f)
                                     + math.log(a) - (a + 1) * log_s)
    head = _compound_head(x, law.counts, a)
    for p in range(a):
        cp = float(head[p])
        if cp > 0.0:
            term = LogReal.from_float(cp * (a - p)) \
                * LogReal.from_log((p - a - 1) * log_s)
            total = total + term
    return total
