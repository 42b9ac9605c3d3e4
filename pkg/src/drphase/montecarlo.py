"""Stochastic cross-checks of the exact engine.

Two independent estimators live here:

* a population (mean-field) simulator: a fixed pool of P samples is pushed
  through the recursion by resampling summands uniformly from the previous
  pool.  Cost per generation is O(P * E N); the price is an O(1/P)
  correlation bias, documented and accepted, since the exact engine is the
  source of truth and the simulator is a sanity layer;
* an exact tree sampler for small depths, with no bias at all, whose cost
  grows like (E N)^depth per sample.

Every random draw is a pure function of (master seed, generation, sample
index, draw index), so runs reproduce bit for bit regardless of backend,
thread count, or scheduling.  The geometric offspring sampler draws from
the untruncated law (the cdf scan saturates only below 1e-18 mass), so no
truncation cutoff is consulted here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .dists import ModelSpec, OffspringLaw
from .evolution import q_bounds

# Exact tree sampling costs ~(E N)^depth draws per sample; refuse beyond this.
TREE_DEPTH_LIMIT = 12


@dataclass(frozen=True)
class Population:
    """Immutable pool of samples at one generation.

    The master seed plus (generation, sample index, draw index) fully
    determine every draw used to produce the pool, which is what makes
    populations reproducible across hosts and thread counts.
    """

    samples: np.ndarray
    generation: int
    master_seed: int

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.int64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def size(self) -> int:
        return int(self.samples.shape[0])

    def mean(self) -> float:
        return float(self.samples.mean())

    def std(self) -> float:
        return float(self.samples.std(ddof=1))


class QEstimate(NamedTuple):
    q_upper_hat: float
    q_lower_hat: float
    stderr: float


def _sampling_args(law: OffspringLaw) -> tuple[int, int, np.ndarray, float]:
    """Kernel-level description of an offspring law."""
    if law.kind == "deterministic":
        return kernels.KIND_DETERMINISTIC, law.bound, np.zeros(0), 0.0
    if law.kind == "finite":
        cdf = np.cumsum(law.weights[1:])
        return kernels.KIND_FINITE, 0, cdf, 0.0
    return kernels.KIND_GEOMETRIC, 0, np.zeros(0), law.success_prob


def init_population(model: ModelSpec, pop_size: int, master_seed: int
                    ) -> Population:
    """Quantile-stratified start: floor(P*w) copies of each support value,
    remainder slots drawn from the fractional residuals."""
    if pop_size < 1:
        raise ValueError(f"population size must be >= 1, got {pop_size}")
    values = model.x0.support
    weights = model.x0.probs[values]
    counts = np.floor(pop_size * weights).astype(np.int64)
    samples = np.repeat(values.astype(np.int64), counts)
    short = pop_size - int(counts.sum())
    if short > 0:
        fracs = pop_size * weights - counts
        total = float(fracs.sum())
        cdf = np.cumsum(fracs / total) if total > 0 else np.cumsum(weights)
        extra = np.empty(short, dtype=np.int64)
        for slot in range(short):
            u = kernels.uniform53(kernels.hash_path(master_seed, 0, slot))
            pick = int(np.searchsorted(cdf, u, side="right"))
            extra[slot] = values[min(pick, len(values) - 1)]
        samples = np.concatenate([samples, extra])
    return Population(samples, 0, master_seed)


def mc_step(pop: Population, model: ModelSpec) -> Population:
    """One resampling generation of the whole pool."""
    if pop.size == 0:
        raise ValueError("population is empty")
    kind, det_n, cdf, geom_p = _sampling_args(model.offspring)
    gen = pop.generation + 1
    out = kernels.get_backend().mc_step(
        pop.samples, model.a, pop.master_seed, gen, kind, det_n, cdf, geom_p)
    return Population(out, gen, pop.master_seed)


def mc_estimate_q(model: ModelSpec, pop_size: int, steps: int, seed: int
                  ) -> QEstimate:
    """Plug the generation-`steps` pool mean into the exact bound formulas."""
    if pop_size < 1000:
        raise ValueError(f"population size must be >= 1000 for estimates, "
                         f"got {pop_size}")
    pop = init_population(model, pop_size, seed)
    for _ in range(steps):
        pop = mc_step(pop, model)
    upper, lower = q_bounds(pop.mean(), steps, model)
    std = pop.std()
    if std > 0.0:
        log_se = (math.log(std) - 0.5 * math.log(pop_size)
                  - steps * math.log(model.offspring.mean))
        stderr = math.exp(max(log_se, -745.0))
    else:
        stderr = 0.0
    return QEstimate(upper, lower, stderr)


def ancestor_count(offspring: OffspringLaw, depth: int, seed: int) -> int:
    """Generation-`depth` size of one branching tree of the offspring law."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    kind, det_n, cdf, geom_p = _sampling_args(offspring)
    seeds = np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    out = kernels.get_backend().gw_sizes(seeds, depth, kind, det_n, cdf, geom_p)
    return int(out[0])


def ancestor_counts(offspring: OffspringLaw, depth: int, n_trees: int,
                    seed: int) -> np.ndarray:
    """Generation sizes of n_trees independent trees (one derived seed each)."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if n_trees < 1:
        raise ValueError(f"n_trees must be >= 1, got {n_trees}")
    with np.errstate(over="ignore"):
        base = np.uint64(kernels.splitmix64(seed & 0xFFFFFFFFFFFFFFFF))
        seeds = kernels._sm64_np(base ^ np.arange(n_trees, dtype=np.uint64))
    kind, det_n, cdf, geom_p = _sampling_args(offspring)
    return kernels.get_backend().gw_sizes(seeds, depth, kind, det_n, cdf,
                                          geom_p)


def tree_sample(model: ModelSpec, n: int, seed: int) -> int:
    """One exact draw of the generation-n value by full tree recursion.

    Unbiased but exponential in n, hence the depth limit; intended as a
    verification mode against both the pool simulator and the exact engine.
    """
    if not 0 <= n <= TREE_DEPTH_LIMIT:
        raise ValueError(f"tree sampling supports 0 <= n <= {TREE_DEPTH_LIMIT}, "
                         f"got {n}")
    values = model.x0.support
    x0_cdf = np.cumsum(model.x0.probs[values])
    kind, det_n, count_cdf, geom_p = _sampling_args(model.offspring)
    a = model.a
    counter = 0

    def next_u() -> float:
        nonlocal counter
        u = kernels.uniform53(kernels.hash_path(seed, counter))
        counter += 1
        return u

    def draw_count() -> int:
        if kind == kernels.KIND_DETERMINISTIC:
            return det_n
        u = next_u()
        if kind == kernels.KIND_FINITE:
            k = int(np.searchsorted(count_cdf, u, side="right"))
            return min(k, len(count_cdf) - 1) + 1
        k, c, m = 1, geom_p, geom_p
        while u >= c:
            m *= 1.0 - geom_p
            if m <= 1e-18:
                break
            c += m
            k += 1
        return k

    def rec(level: int) -> int:
        if level == 0:
            u = next_u()
            pick = int(np.searchsorted(x0_cdf, u, side="right"))
            return int(values[min(pick, len(values) - 1)])
        total = 0
        for _ in range(draw_count()):
            total += rec(level - 1)
        return max(total - a, 0)

    return rec(n)
