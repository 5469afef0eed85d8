"""Dependence and tail diagnostics.

The parity chain admits exact arithmetic: writing ``theta`` for the
probability that a coupled pair agrees on a fixed symbol, one coupled
update maps

    theta -> theta * (2q - 1)^2 + q (1 - q),

whose unique fixed point is 1/4 for every q in (0, 1) -- coupled chains
forget each other at geometric rate ``(2q - 1)^2``.  The probability that
two chains driven by independent flip sequences but sharing their value
at depth n agree at the root is ``1/2 + (1 - 2q)^(2n) / 2`` exactly.

For general recursions the diagnostics are empirical: a sup-CDF
independence statistic over coupled root pairs, calibrated by permutation
resampling (the atom at infinity rules out textbook critical values), and
a long-range probe that conditions the boundary at depth n on fixed
assignments and measures how far the root law moves.  Verdicts are
deliberately "consistent-with-independence", never "independent": these
are numerical evidence about tail behavior, not proofs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import partial
from typing import Sequence, Union

import numpy as np

from . import seeds
from .dist import (
    Empirical,
    ExtendedValue,
    MarginalDist,
    _as_extended,
    format_value,
    ks_distance,
)
from .errors import ArgumentError, DegenerateParameterError, DomainError
from .rde import PairSample, RdeSpec, constant_boundary, sample_root_batch

_MIN_PAIRS = 100
_DEFAULT_PERMUTATIONS = 200
_DEFAULT_STAT_KNOTS = 16

#: Stream sub-keys, disjoint from the sampler chunk indices by construction
#: (they live under their own purpose prefix).
_PERMUTATION_KEY = 101
_PROBE_KEY = 202


# ---------------------------------------------------------------------------
# Parity-chain arithmetic
# ---------------------------------------------------------------------------


def theta_step(theta: float, q: float) -> float:
    """One coupled parity update of the agreement probability."""
    theta = float(theta)
    q = float(q)
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    return theta * (2.0 * q - 1.0) ** 2 + q * (1.0 - q)


def theta_fixed(
    q: float,
    tol: float,
    start: float = 0.0,
    max_iters: int = 100_000,
) -> tuple[float, int]:
    """Iterate the parity update to its fixed point 1/4.

    The update is affine with slope ``rate = (2q - 1)^2 < 1``, so the gap
    to the fixed point after an update is exactly
    ``rate / (1 - rate) * |successive difference|``; iteration stops once
    that a-posteriori bound drops below ``tol``, guaranteeing the returned
    value is within ``tol`` of 1/4.  The returned count is the number of
    updates applied, which equals
    ``ceil(log(tol / |start - 1/4|) / log(rate))`` up to rounding.
    """
    q = float(q)
    if q in (0.0, 1.0):
        raise DegenerateParameterError(
            f"q = {q} gives rate (2q-1)^2 = 1: the coupled update does not contract"
        )
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    if tol <= 0.0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    rate = (2.0 * q - 1.0) ** 2
    theta = float(start)
    for iteration in range(1, max_iters + 1):
        updated = theta_step(theta, q)
        if abs(updated - theta) * rate < tol * (1.0 - rate):
            return updated, iteration
        theta = updated
    raise DomainError(f"no convergence within {max_iters} iterations (tol={tol})")


def mod2_pair_prob(q: float, n: int) -> float:
    """P(root values agree) for coupled parity chains sharing depth-n data.

    The two roots differ by the parity of 2n independent Bernoulli(q)
    flips, so the probability is ``1/2 + (1 - 2q)^(2n) / 2``.
    """
    if n < 0:
        raise DomainError(f"depth must be nonnegative, got {n}")
    if not 0.0 <= float(q) <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    return 0.5 + (1.0 - 2.0 * float(q)) ** (2 * n) / 2.0


# ---------------------------------------------------------------------------
# Empirical independence statistic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DependenceReport:
    """Sup-CDF independence statistic with its permutation calibration."""

    stat: float
    baseline_q99: float
    depth: int
    n: int
    verdict: str
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "stat": self.stat,
            "baseline_q99": self.baseline_q99,
            "depth": self.depth,
            "n": self.n,
            "verdict": self.verdict,
            "seed": self.seed,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True) + "\n"


def _default_knots(pooled_finite: np.ndarray, n_knots: int) -> np.ndarray:
    """Data-quantile knots: order statistics, so the statistic is invariant
    under strictly increasing relabelings of both coordinates."""
    if pooled_finite.size == 0:
        return np.empty(0)
    distinct = np.unique(pooled_finite)
    if distinct.size <= n_knots:
        return distinct
    probs = np.arange(1, n_knots + 1) / n_knots
    return np.unique(np.quantile(pooled_finite, probs, method="inverted_cdf"))


def _codes(values: np.ndarray, knots: np.ndarray) -> np.ndarray:
    # cell code = smallest knot index at or above the value; everything
    # beyond the last knot (in particular the infinity point) shares the
    # top cell
    return np.searchsorted(knots, values, side="left")


def _lattice_stat(counts: np.ndarray, n: int) -> float:
    joint = counts.cumsum(axis=0).cumsum(axis=1) / n
    fx = joint[:, -1]
    fy = joint[-1, :]
    return float(np.abs(joint - np.outer(fx, fy)).max())


def _permutation_chunk(
    chunk: seeds.Chunk,
    rng: np.random.Generator,
    cx: np.ndarray,
    cy: np.ndarray,
    n_cells: int,
) -> np.ndarray:
    n = cx.size
    stats = np.empty(chunk.size)
    for b in range(chunk.size):
        perm = rng.permutation(n)
        counts = np.bincount(cx * n_cells + cy[perm], minlength=n_cells * n_cells)
        stats[b] = _lattice_stat(counts.reshape(n_cells, n_cells), n)
    return stats


def independence_stat(
    pairs: PairSample,
    eval_knots: "np.ndarray | Sequence[float] | None" = None,
    *,
    n_permutations: int = _DEFAULT_PERMUTATIONS,
    n_knots: int = _DEFAULT_STAT_KNOTS,
    workers: int = 1,
    seed: "seeds.Seed | int | None" = None,
) -> DependenceReport:
    """Sup-distance between the joint empirical CDF and the product of its
    marginals, over a knot lattice with the infinity point as a top cell.

    The baseline is the 0.99 quantile of the same statistic under
    ``n_permutations`` random relabelings of the y column, which is the
    exact null of independent coordinates with these marginals.  The
    verdict is ``consistent-with-independence`` iff the statistic does not
    exceed the baseline.
    """
    n = len(pairs)
    if n < _MIN_PAIRS:
        raise ArgumentError(f"need at least {_MIN_PAIRS} pairs, got {n}")
    if eval_knots is None:
        pooled = np.concatenate([pairs.x[np.isfinite(pairs.x)], pairs.y[np.isfinite(pairs.y)]])
        knots = _default_knots(pooled, n_knots)
    else:
        knots = np.unique(np.asarray(eval_knots, dtype=float))
        if knots.size and np.isinf(knots[-1]):
            knots = knots[:-1]  # the infinity cell is always present
    cx = _codes(pairs.x, knots)
    cy = _codes(pairs.y, knots)
    n_cells = knots.size + 1
    counts = np.bincount(cx * n_cells + cy, minlength=n_cells * n_cells)
    stat = _lattice_stat(counts.reshape(n_cells, n_cells), n)

    stat_seed = seeds.as_seed(pairs.seed if seed is None else seed)
    perm_stats = np.concatenate(
        seeds.map_chunks(
            partial(_permutation_chunk, cx=cx, cy=cy, n_cells=n_cells),
            n_permutations,
            stat_seed,
            workers=workers,
            chunk_size=50,
            stream_key=(_PERMUTATION_KEY,),
        )
    )
    baseline = float(np.quantile(perm_stats, 0.99))
    verdict = (
        "consistent-with-independence" if stat <= baseline else "dependence-detected"
    )
    return DependenceReport(
        stat=stat,
        baseline_q99=baseline,
        depth=pairs.depth,
        n=n,
        verdict=verdict,
        seed=int(stat_seed.master),
    )


# ---------------------------------------------------------------------------
# Long-range probe
# ---------------------------------------------------------------------------


Assignment = Union[ExtendedValue, float, MarginalDist]


def _assignment_boundary(rde: RdeSpec, assignment: Assignment) -> MarginalDist:
    if isinstance(assignment, MarginalDist):
        return assignment
    value = _as_extended(assignment)
    if not rde.state.contains(value.as_float()):
        raise DomainError(
            f"assignment {value} outside the state space {rde.state.describe()}"
        )
    return constant_boundary(value)


def long_range_probe(
    rde: RdeSpec,
    assignment: Assignment,
    target: MarginalDist,
    depth: int,
    n_samples: int,
    seed: "seeds.Seed | int",
    *,
    workers: int = 1,
) -> float:
    """Distance between the root law under a pinned boundary and a target.

    The boundary at depth ``depth`` is held at ``assignment`` (a constant
    value, or a per-leaf random rule given as a distribution); the
    Kolmogorov distance between the resulting empirical root law and
    ``target`` measures how much that boundary still influences the root.
    At depth 0 with a constant assignment this is exactly the point-mass
    versus target distance.
    """
    boundary = _assignment_boundary(rde, assignment)
    roots = sample_root_batch(
        rde, boundary, depth, n_samples, seeds.as_seed(seed), workers=workers
    )
    return ks_distance(Empirical(roots), target)


@dataclass(frozen=True)
class ProbeResult:
    """One probe assignment and its measured conditional distance."""

    label: str
    distance: float


@dataclass(frozen=True)
class ProbeSweep:
    """Max over probed assignments: a lower bound for the boundary supremum.

    Only finitely many assignments are probed (constants on a lattice plus
    random per-leaf rules), so the reported maximum bounds the true
    supremum over all boundary assignments from below.
    """

    results: tuple[ProbeResult, ...]
    depth: int
    n_samples: int
    seed: int

    @property
    def max_distance(self) -> float:
        return max(result.distance for result in self.results)

    @property
    def is_lower_bound(self) -> bool:
        return True


def _lattice_assignments(rde: RdeSpec, n_lattice: int) -> list[tuple[str, Assignment]]:
    if rde.state.kind == "binary":
        return [("const=0.0", 0.0), ("const=1.0", 1.0)]
    if rde.state.kind == "extended_interval":
        values = np.linspace(rde.state.lo, 1.0, n_lattice)
        out: list[tuple[str, Assignment]] = [(f"const={float(v)!r}", float(v)) for v in values]
        out.append(("const=inf", ExtendedValue(None)))
        return out
    values = np.linspace(-1.0, 1.0, n_lattice)
    return [(f"const={float(v)!r}", float(v)) for v in values]


def probe_sweep(
    rde: RdeSpec,
    target: MarginalDist,
    depth: int,
    n_samples: int,
    seed: "seeds.Seed | int",
    *,
    n_lattice: int = 9,
    n_random_rules: int = 4,
    workers: int = 1,
) -> ProbeSweep:
    """Probe constant assignments on a lattice plus random per-leaf rules.

    Random rules are two-point mixtures with mixture weight and support
    drawn from the sweep's own stream; they exercise non-constant
    boundaries that constants cannot reach.
    """
    probe_seed = seeds.as_seed(seed)
    assignments = _lattice_assignments(rde, n_lattice)
    constants = list(assignments)
    rule_rng = probe_seed.stream(_PROBE_KEY)
    for index in range(n_random_rules):
        weight = float(rule_rng.random())
        picks = rule_rng.choice(len(constants), size=2, replace=True)
        rule = _TwoPointRule.build(
            constants[int(picks[0])][1], constants[int(picks[1])][1], weight
        )
        assignments.append((f"random-rule-{index}({rule.describe()})", rule))
    results = []
    for index, (label, assignment) in enumerate(assignments):
        distance = long_range_probe(
            rde,
            assignment,
            target,
            depth,
            n_samples,
            _probe_subseed(probe_seed, index),
            workers=workers,
        )
        results.append(ProbeResult(label, distance))
    return ProbeSweep(tuple(results), depth, n_samples, int(probe_seed.master))


def _probe_subseed(seed: seeds.Seed, index: int) -> seeds.Seed:
    # distinct master per assignment so batch chunking stays the standard
    # (master, chunk) derivation
    return seed.derive(_PROBE_KEY, index)


@dataclass(frozen=True)
class _TwoPointRule(MarginalDist):
    """Per-leaf random rule: value ``high`` with probability ``weight``."""

    low: float = 0.0
    high: float = 1.0
    weight: float = 0.5

    @staticmethod
    def build(low: Assignment, high: Assignment, weight: float) -> "_TwoPointRule":
        low_f = _as_extended(low).as_float()
        high_f = _as_extended(high).as_float()
        if low_f > high_f:
            low_f, high_f = high_f, low_f
        return _TwoPointRule(low_f, high_f, weight)

    @property
    def atom_inf(self) -> float:
        mass = 0.0
        if math.isinf(self.high):
            mass += self.weight
        if math.isinf(self.low):
            mass += 1.0 - self.weight
        return mass

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.high, 1.0, np.where(x >= self.low, 1.0 - self.weight, 0.0))

    def quantile_array(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.where(p <= 1.0 - self.weight, self.low, self.high)

    def describe(self) -> str:
        return (
            f"two_point(low={format_value(self.low)}, high={format_value(self.high)}, "
            f"w={self.weight:.3f})"
        )
