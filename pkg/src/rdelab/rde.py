"""Recursive distributional equations and depth-n tree samplers.

An ``RdeSpec`` fixes the branching arity, the innovation law, and the map
``g`` that combines one innovation with the child values.  Registered
recursions:

* ``frozen-perc`` (degree ``r``): value = min of the ``r-1`` children if
  that minimum exceeds the Uniform[0,1] innovation, else ``∞``.
* ``mod2`` (bit-flip rate ``q``): value = (innovation + child) mod 2 with a
  Bernoulli(q) innovation; arity 1, so trees degenerate to chains.
* ``quicksort``: value = U x1 + (1-U) x2 + 2U log U + 2(1-U) log(1-U) + 1
  on the real line.

Samplers realize the depth-``n`` truncated tree process: leaves at
generation ``n`` are drawn i.i.d. from a boundary law and interior nodes
are computed bottom-up with fresh innovations.  The coupled sampler runs
two recursions through shared leaves with independent innovations per
coordinate, which is exactly the pair whose joint law is the n-fold
second-kind bivariate pushforward of the diagonal coupling.

Traversal contract (part of seed reproducibility): innovations are drawn
in pre-order, i.e. a node's innovation(s) before its children, children
left to right; in the coupled traversal the first coordinate's innovation
is drawn before the second's.  Deep non-branching chains are evaluated
iteratively so depths of 10^6 need no recursion.

Batch kernels evaluate whole chunks of samples in lockstep: one traversal
of the deterministic tree shape carrying a vector of node states per
sample chunk, so per-sample working memory is O(depth * arity), never
O(arity^depth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Iterator, Sequence

import numpy as np

from . import seeds
from .dist import (
    INFINITY,
    ExtendedValue,
    MarginalDist,
    PointMass,
    _as_extended,
    format_value,
)
from .errors import ArgumentError, DomainError, ResourceBudgetError, ValidationError

#: Default per-sample node budget for depth-n trees.
DEFAULT_NODE_BUDGET = 2**30


# ---------------------------------------------------------------------------
# State spaces and innovations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateSpace:
    """Descriptor of where an RDE's values live; drives domain checks."""

    kind: str  # "extended_interval" | "binary" | "real"
    lo: float = -math.inf

    def contains(self, value: float) -> bool:
        if math.isnan(value):
            return False
        if self.kind == "extended_interval":
            return math.isinf(value) or self.lo - 1e-12 <= value <= 1.0 + 1e-12
        if self.kind == "binary":
            return value in (0.0, 1.0)
        return not math.isinf(value)

    def describe(self) -> str:
        if self.kind == "extended_interval":
            return f"[{self.lo}, 1] U {{inf}}"
        return {"binary": "{0, 1}", "real": "R"}.get(self.kind, self.kind)


class RdeSpec:
    """Shared interface of registered recursions (see subclasses)."""

    name: str
    arity: int
    state: StateSpace

    def draw_innovations(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def g_array(self, innovations: np.ndarray, children: Sequence[np.ndarray]) -> np.ndarray:
        """Vectorized g; may reuse the child buffers, which it owns."""
        raise NotImplementedError

    def describe(self) -> str:
        return self.name


def _phi_array(m: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Freeze rule applied in place: keep m where m > u, else infinity."""
    m[m <= u] = np.inf
    return m


@dataclass(frozen=True)
class FrozenPercolationRde(RdeSpec):
    """Freezing recursion on the degree-``r`` tree (arity ``r - 1``)."""

    r: int = 3

    def __post_init__(self) -> None:
        if int(self.r) != self.r or self.r < 3:
            raise DomainError(f"tree degree r must be an integer >= 3, got {self.r}")
        object.__setattr__(self, "r", int(self.r))

    @property
    def name(self) -> str:  # type: ignore[override]
        return "frozen-perc"

    @property
    def arity(self) -> int:  # type: ignore[override]
        return self.r - 1

    @property
    def state(self) -> StateSpace:  # type: ignore[override]
        return StateSpace("extended_interval", lo=1.0 / (self.r - 1.0))

    def draw_innovations(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.random(size)

    def g_array(self, innovations: np.ndarray, children: Sequence[np.ndarray]) -> np.ndarray:
        m = children[0]
        for child in children[1:]:
            m = np.minimum(m, child, out=m)
        return _phi_array(m, innovations)

    def describe(self) -> str:
        return f"frozen-perc(r={self.r})"


@dataclass(frozen=True)
class Mod2Rde(RdeSpec):
    """Parity chain: value = (innovation + child) mod 2."""

    q: float = 0.5

    name = "mod2"
    arity = 1
    state = StateSpace("binary", lo=0.0)

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise DomainError(f"flip probability q must lie in [0, 1], got {self.q}")

    def draw_innovations(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # inverse-CDF convention: innovation = 1 iff U > 1 - q
        return (rng.random(size) > 1.0 - self.q).astype(float)

    def g_array(self, innovations: np.ndarray, children: Sequence[np.ndarray]) -> np.ndarray:
        out = children[0]
        out += innovations
        np.mod(out, 2.0, out=out)
        return out

    # value maps x -> x + xi commute, so chains fold in draw order
    def chain_identity(self, size: int) -> np.ndarray:
        return np.zeros(size)

    def chain_compose(self, acc: np.ndarray, innovations: np.ndarray) -> np.ndarray:
        acc += innovations
        np.mod(acc, 2.0, out=acc)
        return acc

    def chain_apply(self, acc: np.ndarray, leaf: np.ndarray) -> np.ndarray:
        return np.mod(acc + leaf, 2.0)

    def describe(self) -> str:
        return f"mod2(q={self.q})"


def _xlogx(u: np.ndarray) -> np.ndarray:
    # u log u extended by continuity at u = 0 (the innovation hits 0 with
    # probability 2^-53 per draw, but it must not poison a whole chunk)
    out = np.zeros_like(u)
    mask = u > 0.0
    out[mask] = u[mask] * np.log(u[mask])
    return out


@dataclass(frozen=True)
class QuicksortRde(RdeSpec):
    """Divide-and-conquer cost recursion on the real line."""

    name = "quicksort"
    arity = 2
    state = StateSpace("real")

    def draw_innovations(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.random(size)

    def g_array(self, innovations: np.ndarray, children: Sequence[np.ndarray]) -> np.ndarray:
        u = innovations
        x1, x2 = children
        return (
            u * x1
            + (1.0 - u) * x2
            + 2.0 * _xlogx(u)
            + 2.0 * _xlogx(1.0 - u)
            + 1.0
        )


_RDE_FACTORIES = {
    "frozen-perc": lambda r=3, q=None: FrozenPercolationRde(r=r),
    "mod2": lambda r=None, q=0.5: Mod2Rde(q=q),
    "quicksort": lambda r=None, q=None: QuicksortRde(),
}


def rde_names() -> tuple[str, ...]:
    return tuple(sorted(_RDE_FACTORIES))


def make_rde(name: str, *, r: int = 3, q: float = 0.5) -> RdeSpec:
    """Construct a registered recursion by CLI name."""
    try:
        factory = _RDE_FACTORIES[name]
    except KeyError:
        raise ValidationError(
            f"unknown rde {name!r}; registered: {', '.join(rde_names())}"
        ) from None
    return factory(r=r, q=q)


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------


def phi(x: "ExtendedValue | float", u: float) -> ExtendedValue:
    """Freeze rule: x survives when x > u, otherwise the value is ``∞``.

    Ties x == u take the infinity branch; the event has probability zero
    under a continuous innovation but the choice is fixed here.
    """
    value = _as_extended(x)
    if value.is_inf or value.finite > u:
        return value
    return INFINITY


def g_eval(
    rde: RdeSpec,
    innovation: float,
    children: Sequence["ExtendedValue | float"],
) -> ExtendedValue:
    """Scalar g; validates the child count against the arity."""
    if len(children) != rde.arity:
        raise ArgumentError(
            f"{rde.describe()} takes {rde.arity} children, got {len(children)}"
        )
    encoded = []
    for child in children:
        value = _as_extended(child)
        if not rde.state.contains(value.as_float()):
            raise DomainError(
                f"child value {value} outside the state space {rde.state.describe()}"
            )
        encoded.append(np.asarray([value.as_float()]))
    out = rde.g_array(np.asarray([float(innovation)]), encoded)
    return ExtendedValue.from_float(float(out[0]))


# ---------------------------------------------------------------------------
# Joint boundaries for the bivariate sampler
# ---------------------------------------------------------------------------


class JointBoundary:
    """A sampler of boundary pairs for the bivariate pushforward."""

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class DiagonalBoundary(JointBoundary):
    """Both coordinates share one draw: all mass on {x = y}."""

    marginal: MarginalDist

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        w = self.marginal.sample_array(rng, size)
        return w, w.copy()

    def describe(self) -> str:
        return f"diagonal({self.marginal.describe()})"


@dataclass(frozen=True)
class ProductBoundary(JointBoundary):
    """Independent coordinates; the x draw precedes the y draw."""

    marginal: MarginalDist

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        x = self.marginal.sample_array(rng, size)
        y = self.marginal.sample_array(rng, size)
        return x, y

    def describe(self) -> str:
        return f"product({self.marginal.describe()})"


# ---------------------------------------------------------------------------
# Budget and traversal bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class TraversalStats:
    """High-water mark of live node-state vectors (innovations excluded).

    The lockstep traversal keeps at most ``depth * (arity - 1) + arity``
    node vectors alive per coordinate, which is what makes depth-20 trees
    affordable: memory stays O(depth * arity) per sample, never
    O(arity^depth).
    """

    live_vectors: int = 0
    max_live_vectors: int = 0

    def acquire(self, count: int = 1) -> None:
        self.live_vectors += count
        self.max_live_vectors = max(self.max_live_vectors, self.live_vectors)

    def release(self, count: int = 1) -> None:
        self.live_vectors -= count


def nodes_per_sample(arity: int, depth: int) -> int:
    if arity == 1:
        return depth + 1
    return (arity ** (depth + 1) - 1) // (arity - 1)


def _check_budget(rde: RdeSpec, depth: int, node_budget: int) -> None:
    if depth < 0:
        raise DomainError(f"depth must be nonnegative, got {depth}")
    nodes = nodes_per_sample(rde.arity, depth)
    if nodes > node_budget:
        raise ResourceBudgetError(
            f"depth {depth} at arity {rde.arity} needs {nodes} nodes per sample, "
            f"over the budget of {node_budget}"
        )


# ---------------------------------------------------------------------------
# Lockstep kernels
# ---------------------------------------------------------------------------


def _root_array(
    rde: RdeSpec,
    boundary: MarginalDist,
    depth: int,
    size: int,
    rng: np.random.Generator,
    stats: "TraversalStats | None" = None,
) -> np.ndarray:
    """Chunk of univariate root values (IEEE-inf encoded)."""
    if depth == 0:
        return boundary.sample_array(rng, size)
    if rde.arity == 1:
        return _chain_root(rde, boundary, depth, size, rng)

    def rec(levels: int) -> np.ndarray:
        innov = rde.draw_innovations(rng, size)
        children = []
        for _ in range(rde.arity):
            if levels > 1:
                child = rec(levels - 1)
            else:
                child = boundary.sample_array(rng, size)
                if stats is not None:
                    stats.acquire()
            children.append(child)
        out = rde.g_array(innov, children)
        if stats is not None:
            stats.release(rde.arity - 1)
        return out

    result = rec(depth)
    if stats is not None:
        stats.release()
    return result


def _chain_root(
    rde: RdeSpec,
    boundary: MarginalDist,
    depth: int,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Iterative non-branching chain; innovations stream in pre-order."""
    if hasattr(rde, "chain_compose"):
        acc = rde.chain_identity(size)
        for _ in range(depth):
            acc = rde.chain_compose(acc, rde.draw_innovations(rng, size))
        return rde.chain_apply(acc, boundary.sample_array(rng, size))
    innovations = [rde.draw_innovations(rng, size) for _ in range(depth)]
    value = boundary.sample_array(rng, size)
    for innov in reversed(innovations):
        value = rde.g_array(innov, [value])
    return value


def _pair_arrays(
    rde: RdeSpec,
    boundary: JointBoundary,
    depth: int,
    size: int,
    rng: np.random.Generator,
    stats: "TraversalStats | None" = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Chunk of coupled root pairs; independent innovations per coordinate."""
    if depth == 0:
        return boundary.draw(rng, size)
    if rde.arity == 1:
        return _chain_pairs(rde, boundary, depth, size, rng)

    def rec(levels: int) -> tuple[np.ndarray, np.ndarray]:
        innov_x = rde.draw_innovations(rng, size)
        innov_y = rde.draw_innovations(rng, size)
        kids = []
        for _ in range(rde.arity):
            if levels > 1:
                kid = rec(levels - 1)
            else:
                kid = boundary.draw(rng, size)
                if stats is not None:
                    stats.acquire(2)
            kids.append(kid)
        x = rde.g_array(innov_x, [kid[0] for kid in kids])
        y = rde.g_array(innov_y, [kid[1] for kid in kids])
        if stats is not None:
            stats.release(2 * (rde.arity - 1))
        return x, y

    result = rec(depth)
    if stats is not None:
        stats.release(2)
    return result


def _chain_pairs(
    rde: RdeSpec,
    boundary: JointBoundary,
    depth: int,
    size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(rde, "chain_compose"):
        acc_x = rde.chain_identity(size)
        acc_y = rde.chain_identity(size)
        for _ in range(depth):
            acc_x = rde.chain_compose(acc_x, rde.draw_innovations(rng, size))
            acc_y = rde.chain_compose(acc_y, rde.draw_innovations(rng, size))
        leaf_x, leaf_y = boundary.draw(rng, size)
        return rde.chain_apply(acc_x, leaf_x), rde.chain_apply(acc_y, leaf_y)
    innovations = [
        (rde.draw_innovations(rng, size), rde.draw_innovations(rng, size))
        for _ in range(depth)
    ]
    x, y = boundary.draw(rng, size)
    for innov_x, innov_y in reversed(innovations):
        x = rde.g_array(innov_x, [x])
        y = rde.g_array(innov_y, [y])
    return x, y


# ---------------------------------------------------------------------------
# Scalar samplers
# ---------------------------------------------------------------------------


def sample_rtp_root(
    rde: RdeSpec,
    boundary: MarginalDist,
    depth: int,
    rng: np.random.Generator,
    *,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> ExtendedValue:
    """Root value of one depth-``depth`` tree realization.

    Leaves at generation ``depth`` are i.i.d. boundary draws; interior
    nodes apply g bottom-up with fresh innovations.  Depth 0 returns a
    bare boundary draw.
    """
    _check_budget(rde, depth, node_budget)
    return ExtendedValue.from_float(float(_root_array(rde, boundary, depth, 1, rng)[0]))


def sample_coupled_roots(
    rde: RdeSpec,
    marginal: MarginalDist,
    depth: int,
    rng: np.random.Generator,
    *,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> tuple[ExtendedValue, ExtendedValue]:
    """One coupled root pair: shared leaves, independent innovations.

    The pair's joint law is the n-fold second-kind bivariate pushforward
    of the diagonal coupling with the given marginal.
    """
    return sample_bivariate_root(
        rde, DiagonalBoundary(marginal), depth, rng, node_budget=node_budget
    )


def sample_bivariate_root(
    rde: RdeSpec,
    joint_boundary: JointBoundary,
    depth: int,
    rng: np.random.Generator,
    *,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> tuple[ExtendedValue, ExtendedValue]:
    """One root pair from an arbitrary joint boundary law."""
    _check_budget(rde, depth, node_budget)
    x, y = _pair_arrays(rde, joint_boundary, depth, 1, rng)
    return ExtendedValue.from_float(float(x[0])), ExtendedValue.from_float(float(y[0]))


# ---------------------------------------------------------------------------
# Batch samplers (chunked, optionally parallel)
# ---------------------------------------------------------------------------


def _root_chunk(chunk: seeds.Chunk, rng: np.random.Generator, rde, boundary, depth) -> np.ndarray:
    return _root_array(rde, boundary, depth, chunk.size, rng)


def _pair_chunk(chunk: seeds.Chunk, rng: np.random.Generator, rde, boundary, depth):
    return _pair_arrays(rde, boundary, depth, chunk.size, rng)


def sample_root_batch(
    rde: RdeSpec,
    boundary: MarginalDist,
    depth: int,
    n_samples: int,
    seed: "seeds.Seed | int",
    *,
    workers: int = 1,
    chunk_size: int = seeds.DEFAULT_CHUNK_SIZE,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> np.ndarray:
    """``n_samples`` univariate roots as a float64 array (inf-encoded)."""
    if n_samples < 1:
        raise ArgumentError(f"n_samples must be positive, got {n_samples}")
    _check_budget(rde, depth, node_budget)
    parts = seeds.map_chunks(
        partial(_root_chunk, rde=rde, boundary=boundary, depth=depth),
        n_samples,
        seed,
        workers=workers,
        chunk_size=chunk_size,
    )
    return np.concatenate(parts)


@dataclass(frozen=True, eq=False)
class PairSample:
    """A batch of coupled root pairs plus its provenance metadata."""

    x: np.ndarray  # float64, numpy.inf encodes the infinity point
    y: np.ndarray
    rde_name: str
    depth: int
    boundary: str
    seed: int

    def __post_init__(self) -> None:
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ArgumentError("coordinate arrays must be equal-length vectors")
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.x.size)

    def pairs(self) -> Iterator[tuple[ExtendedValue, ExtendedValue]]:
        for xv, yv in zip(self.x, self.y):
            yield ExtendedValue.from_float(float(xv)), ExtendedValue.from_float(float(yv))

    def to_csv_text(self) -> str:
        lines = ["x,y"]
        lines.extend(
            f"{format_value(float(xv))},{format_value(float(yv))}"
            for xv, yv in zip(self.x, self.y)
        )
        return "\n".join(lines) + "\n"

    def sidecar_dict(self) -> dict:
        return {
            "rde": self.rde_name,
            "depth": self.depth,
            "seed": self.seed,
            "n_samples": len(self),
            "boundary": self.boundary,
        }


def sample_coupled_batch(
    rde: RdeSpec,
    marginal: MarginalDist,
    depth: int,
    n_samples: int,
    seed: "seeds.Seed | int",
    *,
    workers: int = 1,
    chunk_size: int = seeds.DEFAULT_CHUNK_SIZE,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> PairSample:
    """Batch version of the coupled sampler (diagonal boundary)."""
    return sample_bivariate_batch(
        rde,
        DiagonalBoundary(marginal),
        depth,
        n_samples,
        seed,
        workers=workers,
        chunk_size=chunk_size,
        node_budget=node_budget,
    )


def sample_bivariate_batch(
    rde: RdeSpec,
    joint_boundary: JointBoundary,
    depth: int,
    n_samples: int,
    seed: "seeds.Seed | int",
    *,
    workers: int = 1,
    chunk_size: int = seeds.DEFAULT_CHUNK_SIZE,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> PairSample:
    """Batch of root pairs pushed forward from an arbitrary joint boundary."""
    if n_samples < 1:
        raise ArgumentError(f"n_samples must be positive, got {n_samples}")
    _check_budget(rde, depth, node_budget)
    parts = seeds.map_chunks(
        partial(_pair_chunk, rde=rde, boundary=joint_boundary, depth=depth),
        n_samples,
        seed,
        workers=workers,
        chunk_size=chunk_size,
    )
    x = np.concatenate([part[0] for part in parts])
    y = np.concatenate([part[1] for part in parts])
    return PairSample(
        x=x,
        y=y,
        rde_name=rde.describe(),
        depth=depth,
        boundary=joint_boundary.describe(),
        seed=int(seeds.as_seed(seed).master),
    )


def constant_boundary(value: "ExtendedValue | float") -> PointMass:
    """Boundary assigning one fixed value to every leaf."""
    return PointMass(_as_extended(value).as_float())
