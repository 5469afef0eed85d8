"""One-dimensional laws on extended state spaces.

The central state space is ``[lo, 1] ∪ {∞}`` with ``lo = 1/(r-1)``: the
dimensionless time at which a directed edge's subtree cluster becomes
infinite, with ``∞`` meaning "never".  ``∞`` is a tagged maximal point,
not an IEEE special, so ordering and equality are explicit and it
serializes unambiguously as the string ``"inf"``.  Batch kernels encode it
internally as ``numpy.inf`` inside float64 arrays; that encoding never
leaks through the scalar API or the serialized formats.

Closed-form families:

* ``NuA(a)``   -- solutions of the degree-3 freezing recursion with density
  ``dx / (2 x^2)`` on ``(1/2, a)`` and atom ``1/(2a)`` at ``∞``;
  CDF ``1 - 1/(2x)`` on ``[1/2, a]``, constant above ``a``.
* ``NuR(r)``   -- the full-support solution on a degree-``r`` tree:
  CDF ``1 - ((r-1) y)^(-1/(r-2))`` on ``[1/(r-1), 1]``, atom
  ``(r-1)^(-1/(r-2))`` at ``∞``.  ``r = 3`` reduces exactly to ``NuA(1)``.
* ``Bernoulli(p)`` -- for the binary parity recursion.
* ``PointMass(v)`` -- degenerate boundary assignments.

Plus ``Empirical`` sample sets and interpolated ``GridCdf`` curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import ArgumentError, DomainError, ValidationError

INF_TOKEN = "inf"

#: Tolerance for "x below the support lower endpoint" domain checks.
_DOMAIN_TOL = 1e-12

#: Default knot count for grid CDFs.
DEFAULT_GRID_KNOTS = 1024


# ---------------------------------------------------------------------------
# Extended values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtendedValue:
    """A point of ``[lo, 1] ∪ {∞}``: a finite real or the tagged ``∞``.

    Total order with ``∞`` maximal.  ``finite is None`` encodes ``∞``.
    """

    finite: Union[float, None]

    def __post_init__(self) -> None:
        if self.finite is not None:
            value = float(self.finite)
            if math.isnan(value) or math.isinf(value):
                raise DomainError(
                    "finite part must be a finite real; use INFINITY for the point at infinity"
                )
            object.__setattr__(self, "finite", value)

    @property
    def is_inf(self) -> bool:
        return self.finite is None

    def as_float(self) -> float:
        """IEEE encoding used by the batch kernels."""
        return math.inf if self.finite is None else self.finite

    @staticmethod
    def from_float(value: float) -> "ExtendedValue":
        if math.isnan(value):
            raise DomainError("NaN is not a point of the state space")
        return INFINITY if math.isinf(value) else ExtendedValue(float(value))

    @staticmethod
    def parse(text: str) -> "ExtendedValue":
        text = text.strip()
        return INFINITY if text == INF_TOKEN else ExtendedValue(float(text))

    def _key(self) -> float:
        return math.inf if self.finite is None else self.finite

    def __lt__(self, other: "ExtendedValue") -> bool:
        return self._key() < _as_extended(other)._key()

    def __le__(self, other: "ExtendedValue") -> bool:
        return self._key() <= _as_extended(other)._key()

    def __gt__(self, other: "ExtendedValue") -> bool:
        return self._key() > _as_extended(other)._key()

    def __ge__(self, other: "ExtendedValue") -> bool:
        return self._key() >= _as_extended(other)._key()

    def __str__(self) -> str:
        return INF_TOKEN if self.finite is None else repr(self.finite)


INFINITY = ExtendedValue(None)


def _as_extended(x: "ExtendedValue | float | int") -> ExtendedValue:
    if isinstance(x, ExtendedValue):
        return x
    return ExtendedValue.from_float(float(x))


def format_value(x: "ExtendedValue | float") -> str:
    """Locale-independent text form; the infinity point prints as ``inf``."""
    if isinstance(x, ExtendedValue):
        return str(x)
    value = float(x)
    return INF_TOKEN if math.isinf(value) else repr(value)


# ---------------------------------------------------------------------------
# Distribution families
# ---------------------------------------------------------------------------


class MarginalDist:
    """Base class: a law on an extended state space.

    Subclasses implement the array-level primitives; the scalar operations
    ``cdf_eval`` / ``survival`` / ``quantile`` / ``sample`` wrap them.  All
    instances are immutable and safe to share across workers.
    """

    #: Lower endpoint of the finite support (``-inf`` for real-line laws).
    lo: float = -math.inf

    @property
    def atom_inf(self) -> float:
        """Mass at the point at infinity."""
        return 0.0

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        """P(Y <= x_i) for each entry; ``inf`` entries map to 1."""
        raise NotImplementedError

    def cdf_left_array(self, x: np.ndarray) -> np.ndarray:
        """Left limits P(Y < x_i); equals ``cdf_array`` for atomless laws."""
        return self.cdf_array(x)

    def quantile_array(self, p: np.ndarray) -> np.ndarray:
        """Leftmost generalized inverse, with ``numpy.inf`` for the atom."""
        raise NotImplementedError

    def sample_array(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF sampling: exactly ``quantile_array(U)`` draw by draw."""
        return self.quantile_array(rng.random(size))

    def describe(self) -> str:
        return type(self).__name__

    def to_json_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NuA(MarginalDist):
    """Freezing-time law on the degree-3 tree, truncated at ``a``."""

    a: float = 1.0
    lo = 0.5

    def __post_init__(self) -> None:
        if not 0.5 <= self.a <= 1.0:
            raise DomainError(f"truncation point a must lie in [1/2, 1], got {self.a}")

    @property
    def atom_inf(self) -> float:
        return 1.0 / (2.0 * self.a)

    def survival_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 1.0 / (2.0 * np.minimum(x, self.a))

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(np.isinf(x), 1.0, 1.0 - self.survival_array(np.minimum(x, 1.0)))

    def quantile_array(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        finite_mass = 1.0 - self.atom_inf
        with np.errstate(divide="ignore"):
            finite = 1.0 / (2.0 * (1.0 - p))
        return np.where(p <= finite_mass, np.minimum(np.maximum(finite, 0.5), self.a), np.inf)

    def describe(self) -> str:
        return f"nu_a(a={self.a})"

    def to_json_dict(self) -> dict:
        return {"family": "nu_a", "params": {"a": self.a}}


@dataclass(frozen=True)
class NuR(MarginalDist):
    """Full-support freezing-time law on the degree-``r`` tree."""

    r: int = 3

    def __post_init__(self) -> None:
        if int(self.r) != self.r or self.r < 3:
            raise DomainError(f"tree degree r must be an integer >= 3, got {self.r}")
        object.__setattr__(self, "r", int(self.r))

    @property
    def lo(self) -> float:  # type: ignore[override]
        return 1.0 / (self.r - 1.0)

    @property
    def atom_inf(self) -> float:
        if self.r == 3:
            return 0.5
        return float((self.r - 1.0) ** (-1.0 / (self.r - 2.0)))

    def survival_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xc = np.minimum(x, 1.0)
        if self.r == 3:
            # reciprocal path keeps r=3 bit-identical to NuA(1)
            return 1.0 / (2.0 * xc)
        return ((self.r - 1.0) * xc) ** (-1.0 / (self.r - 2.0))

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(np.isinf(x), 1.0, 1.0 - self.survival_array(x))

    def quantile_array(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        finite_mass = 1.0 - self.atom_inf
        with np.errstate(divide="ignore"):
            if self.r == 3:
                finite = 1.0 / (2.0 * (1.0 - p))
            else:
                finite = (1.0 - p) ** (-(self.r - 2.0)) / (self.r - 1.0)
        lo = self.lo
        return np.where(p <= finite_mass, np.minimum(np.maximum(finite, lo), 1.0), np.inf)

    def describe(self) -> str:
        return f"nu_r(r={self.r})"

    def to_json_dict(self) -> dict:
        return {"family": "nu_r", "params": {"r": self.r}}


@dataclass(frozen=True)
class Bernoulli(MarginalDist):
    """Law on {0, 1} with P(Y = 1) = p."""

    p: float = 0.5
    lo = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"success probability must lie in [0, 1], got {self.p}")

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x < 0.0, 0.0, np.where(x < 1.0, 1.0 - self.p, 1.0))

    def cdf_left_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, 0.0, np.where(x <= 1.0, 1.0 - self.p, 1.0))

    def quantile_array(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.where(p <= 1.0 - self.p, 0.0, 1.0)

    def describe(self) -> str:
        return f"bernoulli(p={self.p})"

    def to_json_dict(self) -> dict:
        return {"family": "bernoulli", "params": {"p": self.p}}


@dataclass(frozen=True)
class PointMass(MarginalDist):
    """All mass at one point; the point may be the infinity tag."""

    value: float = 0.0  # numpy.inf encodes the point at infinity

    def __post_init__(self) -> None:
        if math.isnan(float(self.value)):
            raise DomainError("point mass location must not be NaN")
        object.__setattr__(self, "value", float(self.value))

    @property
    def lo(self) -> float:  # type: ignore[override]
        return -math.inf if math.isinf(self.value) else self.value

    @property
    def atom_inf(self) -> float:
        return 1.0 if math.isinf(self.value) else 0.0

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.value, 1.0, 0.0)

    def cdf_left_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x > self.value, 1.0, 0.0)

    def quantile_array(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.full(p.shape, self.value)

    def describe(self) -> str:
        return f"point_mass({format_value(self.value)})"

    def to_json_dict(self) -> dict:
        value = INF_TOKEN if math.isinf(self.value) else self.value
        return {"family": "point_mass", "params": {"value": value}}


@dataclass(frozen=True, eq=False)
class Empirical(MarginalDist):
    """A finite sample set, stored sorted with the ``∞`` count split off."""

    values: np.ndarray  # sorted ascending; numpy.inf entries at the tail

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ArgumentError("empirical distribution needs a nonempty 1-d sample set")
        if np.isnan(values).any():
            raise DomainError("samples must not contain NaN")
        values = np.sort(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @staticmethod
    def from_values(values: Iterable["ExtendedValue | float"]) -> "Empirical":
        return Empirical(np.array([_as_extended(v).as_float() for v in values]))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def n_inf(self) -> int:
        return int(np.isinf(self.values).sum())

    @property
    def finite_values(self) -> np.ndarray:
        return self.values[: self.n - self.n_inf]

    @property
    def lo(self) -> float:  # type: ignore[override]
        finite = self.finite_values
        return float(finite[0]) if finite.size else -math.inf

    @property
    def atom_inf(self) -> float:
        return self.n_inf / self.n

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.searchsorted(self.values, x, side="right") / self.n

    def cdf_left_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.searchsorted(self.values, x, side="left") / self.n

    def quantile_array(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        idx = np.clip(np.ceil(p * self.n).astype(int) - 1, 0, self.n - 1)
        return self.values[idx]

    def describe(self) -> str:
        return f"empirical(n={self.n})"

    def to_json_dict(self) -> dict:
        values = [INF_TOKEN if math.isinf(v) else float(v) for v in self.values]
        return {"family": "empirical", "params": {"values": values}}


@dataclass(frozen=True, eq=False)
class GridCdf(MarginalDist):
    """Piecewise-linear CDF on a knot lattice plus an atom at ``∞``."""

    knots: np.ndarray
    cdf: np.ndarray
    atom: Union[float, None] = None  # defaults to 1 - cdf[-1]

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=float)
        cdf = np.asarray(self.cdf, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise ValidationError("grid CDF needs at least two knots")
        if cdf.shape != knots.shape:
            raise ValidationError("knots and cdf values must have equal length")
        if not np.all(np.diff(knots) > 0):
            raise ValidationError("knots must be strictly increasing")
        if np.any(cdf < -1e-12) or np.any(cdf > 1.0 + 1e-12):
            raise ValidationError("cdf values must lie in [0, 1]")
        if np.any(np.diff(cdf) < -1e-12):
            raise ValidationError("cdf values must be nondecreasing")
        cdf = np.clip(cdf, 0.0, 1.0)
        atom = 1.0 - float(cdf[-1]) if self.atom is None else float(self.atom)
        if abs(float(cdf[-1]) + atom - 1.0) > 1e-12:
            raise ValidationError(
                f"total mass must be one: cdf(top knot) + atom = {float(cdf[-1]) + atom}"
            )
        knots = np.array(knots, dtype=float)
        knots.setflags(write=False)
        cdf.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "cdf", cdf)
        object.__setattr__(self, "atom", atom)

    @property
    def lo(self) -> float:  # type: ignore[override]
        return float(self.knots[0])

    @property
    def atom_inf(self) -> float:
        return float(self.atom)

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(np.isinf(x), 1.0, np.interp(x, self.knots, self.cdf))

    def quantile_array(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        # leftmost inverse: flat CDF segments map to their left edge
        idx = np.searchsorted(self.cdf, p, side="left")
        idx = np.clip(idx, 0, self.knots.size - 1)
        left = np.maximum(idx - 1, 0)
        c0 = self.cdf[left]
        c1 = self.cdf[idx]
        span = c1 - c0
        frac = np.where(span > 0, (p - c0) / np.where(span > 0, span, 1.0), 1.0)
        interp = self.knots[left] + frac * (self.knots[idx] - self.knots[left])
        out = np.where(idx == 0, self.knots[0], interp)
        return np.where(p > self.cdf[-1], np.inf, out)

    def describe(self) -> str:
        return f"grid_cdf(k={self.knots.size})"

    def to_json_dict(self) -> dict:
        return {
            "knots": [float(v) for v in self.knots],
            "cdf": [float(v) for v in self.cdf],
            "atom_inf": float(self.atom),
        }

    @staticmethod
    def from_dist(dist: MarginalDist, lo: float, k: int = DEFAULT_GRID_KNOTS) -> "GridCdf":
        knots = np.linspace(lo, 1.0, k)
        return GridCdf(knots, dist.cdf_array(knots), dist.atom_inf)


def dist_from_json(payload: dict) -> MarginalDist:
    """Inverse of ``to_json_dict`` for every serializable family."""
    if "knots" in payload:
        return GridCdf(
            np.asarray(payload["knots"], dtype=float),
            np.asarray(payload["cdf"], dtype=float),
            float(payload["atom_inf"]),
        )
    family = payload.get("family")
    params = payload.get("params", {})
    if family == "nu_a":
        return NuA(float(params["a"]))
    if family == "nu_r":
        return NuR(int(params["r"]))
    if family == "bernoulli":
        return Bernoulli(float(params["p"]))
    if family == "point_mass":
        value = params["value"]
        return PointMass(math.inf if value == INF_TOKEN else float(value))
    if family == "empirical":
        values = [math.inf if v == INF_TOKEN else float(v) for v in params["values"]]
        return Empirical(np.asarray(values))
    raise ValidationError(f"unknown distribution family: {family!r}")


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------


def _check_domain(dist: MarginalDist, x: float) -> None:
    if x < dist.lo - _DOMAIN_TOL:
        raise DomainError(
            f"{x} lies below the support lower endpoint {dist.lo} of {dist.describe()}"
        )


def cdf_eval(dist: MarginalDist, x: "ExtendedValue | float") -> float:
    """P(Y <= x); the point at infinity evaluates to 1."""
    value = _as_extended(x)
    if value.is_inf:
        return 1.0
    _check_domain(dist, value.finite)
    return float(dist.cdf_array(np.asarray([value.finite]))[0])


def survival(dist: MarginalDist, x: "ExtendedValue | float") -> float:
    """P(Y > x) = 1 - cdf; includes the atom at infinity."""
    return 1.0 - cdf_eval(dist, x)


def quantile(dist: MarginalDist, p: float) -> ExtendedValue:
    """Leftmost generalized inverse: the smallest x with cdf(x) >= p."""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p}")
    return ExtendedValue.from_float(float(dist.quantile_array(np.asarray([p]))[0]))


def sample(dist: MarginalDist, rng: np.random.Generator) -> ExtendedValue:
    """One inverse-CDF draw: equals ``quantile(dist, U)`` for the drawn U."""
    return quantile(dist, float(rng.random()))


# ---------------------------------------------------------------------------
# Kolmogorov distance
# ---------------------------------------------------------------------------


def ks_distance(samples: "Empirical | np.ndarray | Iterable", target: MarginalDist) -> float:
    """Sup-distance between an empirical CDF and a target law.

    Finite jump points are compared two-sidedly against the target CDF and
    its left limits; the mass at ``∞`` is compared separately as
    ``|empirical inf-fraction - atom|``.  The maximum of the two parts is
    the exact Kolmogorov distance over the extended line.
    """
    if not isinstance(samples, Empirical):
        samples = (
            Empirical(np.asarray(samples, dtype=float))
            if not _contains_extended(samples)
            else Empirical.from_values(samples)
        )
    n = samples.n
    finite = samples.finite_values
    d_atom = abs(samples.atom_inf - target.atom_inf)
    if finite.size == 0:
        return d_atom
    # compare at unique jump points so tied samples contribute one jump
    points, counts = np.unique(finite, return_counts=True)
    cum = np.cumsum(counts)
    ecdf_hi = cum / n
    ecdf_lo = (cum - counts) / n
    d_finite = max(
        float(np.abs(ecdf_hi - target.cdf_array(points)).max()),
        float(np.abs(ecdf_lo - target.cdf_left_array(points)).max()),
    )
    return max(d_finite, d_atom)


def _contains_extended(values: Iterable) -> bool:
    if isinstance(values, np.ndarray):
        return False
    return any(isinstance(v, ExtendedValue) for v in values)


def dkw_band(n: int, confidence: float = 0.99) -> float:
    """Two-sided Dvoretzky-Kiefer-Wolfowitz bound at the given confidence."""
    if n < 1:
        raise ArgumentError("sample size must be positive")
    if not 0.0 < confidence < 1.0:
        raise DomainError("confidence must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))
