"""Deterministic grid fixed-point machinery for the freezing recursion.

Everything here works on uniform knot lattices over ``[lo, 1]`` with
``lo = 1/(r-1)``.  The univariate pushforward of a survival curve ``G`` is

    F'(x) = integral_0^x ( G(u)^(r-1) - G(x)^(r-1) ) du,

with ``G`` identically 1 below ``lo``; the below-``lo`` part contributes
in closed form, so the lattice only has to cover ``[lo, 1]``.  The
bivariate second-kind pushforward applies the same computation to a joint
survival ``G(x,y)`` with the squared terms generalized to exponent
``r - 1``:

    F'(x,y) = integral_0^x integral_0^y ( A(x,y) - A(x,v) - A(u,y) + A(u,v) ) dv du,
    A = G^(r-1),       G(x,y) = F(x,y) + S(x) + S(y) - 1 on the lattice,

where ``S`` is the full-support marginal survival.  Quadrature is
composite trapezoid with cumulative prefix passes, so one push is O(k^2).

The deviation field ``H = 1 - G / (S(x) S(y))`` vanishes exactly at the
product coupling; iterating the bivariate push from the diagonal coupling
and watching ``sup|H|`` decay toward zero is the numerical form of the
tail-triviality diagnostic.  ``partition_check`` evaluates the exact
closed-form cell bounds behind the contraction argument (degree 3):

    bound(i, j) = I_i * I_j + 2 I_i + 2 I_j,   I_i = 1/a_i - 1/a_{i+1},

for an equal-length partition ``1/2 = a_0 < ... < a_k = 1``; the argument
closes once every cell bound drops below 1/3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
import warnings

import numpy as np

from .dist import NuR, format_value
from .errors import DomainError, NumericalInstabilityError, ValidationError

_ROLES = ("F", "G", "H")
_RANGE_TOL = 1e-6
_DIVERGENCE_TOL = 1e-6

MIN_GRID_SIZE = 64


# ---------------------------------------------------------------------------
# Lattice plumbing
# ---------------------------------------------------------------------------


def uniform_knots(r: int, k: int) -> np.ndarray:
    """k uniformly spaced knots on [1/(r-1), 1]."""
    if k < 2:
        raise ValidationError(f"need at least two knots, got {k}")
    return np.linspace(1.0 / (r - 1.0), 1.0, k)


def _cumtrap(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Cumulative composite-trapezoid integral starting at the first knot."""
    csum = np.cumsum(values, axis=axis)
    first = np.take(values, [0], axis=axis)
    return (csum - 0.5 * (values + first)) * h


def _knot_spacing(knots: np.ndarray) -> float:
    h = np.diff(knots)
    if h.size == 0 or h[0] <= 0 or not np.allclose(h, h[0], rtol=1e-9, atol=1e-12):
        raise ValidationError("knots must be uniformly spaced and increasing")
    return float(h[0])


# ---------------------------------------------------------------------------
# Bivariate grid values
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BivariateGrid:
    """A function on the k x k lattice over [lo, 1]^2, tagged by role.

    ``values[i, j]`` is the value at ``(knots[i], knots[j])``.  Roles: a
    joint CDF ``F``, a joint survival ``G``, or the deviation field ``H``.
    Grids are immutable; operators return fresh grids.
    """

    knots: np.ndarray
    values: np.ndarray
    role: str
    r: int

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if self.role not in _ROLES:
            raise ValidationError(f"unknown grid role {self.role!r}")
        if knots.ndim != 1 or knots.size < 2:
            raise ValidationError("need at least two knots")
        if values.shape != (knots.size, knots.size):
            raise ValidationError(
                f"values must be {knots.size} x {knots.size}, got {values.shape}"
            )
        _knot_spacing(knots)
        if self.role in ("F", "G"):
            low, high = -_RANGE_TOL, 1.0 + _RANGE_TOL
        else:
            low, high = -1.0 - _RANGE_TOL, 1.0 + _RANGE_TOL
        if values.min() < low or values.max() > high:
            raise ValidationError(
                f"role-{self.role} values must lie in [{low:.0f}, {high:.0f}]"
            )
        knots = np.array(knots, dtype=float)
        values = np.array(values, dtype=float)
        knots.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "r", int(self.r))

    @property
    def k(self) -> int:
        return int(self.knots.size)

    @property
    def lo(self) -> float:
        return float(self.knots[0])

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def max_asymmetry(self) -> float:
        return float(np.abs(self.values - self.values.T).max())

    def value_at(self, x: float, y: float) -> float:
        """Bilinear interpolation inside the lattice square."""
        if not (self.lo <= x <= 1.0 and self.lo <= y <= 1.0):
            raise DomainError(f"({x}, {y}) outside the lattice square")
        h = (1.0 - self.lo) / (self.k - 1)
        fx = min((x - self.lo) / h, self.k - 1.0)
        fy = min((y - self.lo) / h, self.k - 1.0)
        i0, j0 = int(fx), int(fy)
        i1, j1 = min(i0 + 1, self.k - 1), min(j0 + 1, self.k - 1)
        tx, ty = fx - i0, fy - j0
        v = self.values
        return float(
            (1 - tx) * (1 - ty) * v[i0, j0]
            + tx * (1 - ty) * v[i1, j0]
            + (1 - tx) * ty * v[i0, j1]
            + tx * ty * v[i1, j1]
        )


def marginal(r: int) -> NuR:
    """The full-support fixed-point marginal used by the grid operators."""
    return NuR(r)


def product_grid(r: int, k: int) -> BivariateGrid:
    """CDF lattice of the product coupling of the fixed-point marginal."""
    knots = uniform_knots(r, k)
    cdf = marginal(r).cdf_array(knots)
    return BivariateGrid(knots, np.outer(cdf, cdf), "F", r)


def diagonal_grid(r: int, k: int) -> BivariateGrid:
    """CDF lattice of the diagonal coupling: all mass on {x = y}."""
    knots = uniform_knots(r, k)
    cdf = marginal(r).cdf_array(knots)
    idx = np.arange(k)
    return BivariateGrid(knots, cdf[np.minimum(idx[:, None], idx[None, :])], "F", r)


# ---------------------------------------------------------------------------
# Univariate pushforward
# ---------------------------------------------------------------------------


def t_push(survival: np.ndarray, knots: np.ndarray, r: int) -> np.ndarray:
    """One univariate pushforward: survival curve in, CDF out.

    ``survival[i] = P(Y > knots[i])`` for the input law (all mass at or
    above the first knot, so the curve is 1 below it).  The output is the
    CDF of the pushed-forward law at the same knots; its atom at infinity
    is ``1 - cdf[-1]``.
    """
    survival = np.asarray(survival, dtype=float)
    knots = np.asarray(knots, dtype=float)
    if survival.shape != knots.shape or survival.ndim != 1:
        raise ValidationError("survival and knots must be equal-length vectors")
    h = _knot_spacing(knots)
    if np.any(survival < -1e-12) or np.any(survival > 1.0 + 1e-12):
        raise ValidationError("survival values must lie in [0, 1]")
    if np.any(np.diff(survival) > 1e-12):
        raise ValidationError("survival values must be nonincreasing")
    lo = float(knots[0])
    powed = survival ** (r - 1)
    return lo + _cumtrap(powed, h) - knots * powed


def t_push_residual(survival: np.ndarray, target_cdf: np.ndarray, knots: np.ndarray, r: int) -> float:
    """Sup-norm distance between the pushed CDF and a target CDF."""
    return float(np.abs(t_push(survival, knots, r) - np.asarray(target_cdf)).max())


# ---------------------------------------------------------------------------
# Bivariate pushforward
# ---------------------------------------------------------------------------


def validate_f_grid(grid: BivariateGrid, tol: float = 1e-6) -> None:
    """Check the lattice projection of "this is a coupling of the marginal".

    A CDF restricted to the finite square cannot expose its marginals
    directly (the mass on the infinity row/column is off-lattice), so the
    checkable conditions are: zero mass at the lattice's low edge,
    monotonicity in each coordinate, and the Frechet envelope against the
    full-support marginal.  Violations report the worst knot.
    """
    if grid.role != "F":
        raise ValidationError(f"expected a role-F grid, got role {grid.role!r}")
    values = grid.values
    knots = grid.knots

    def fail(label: str, field: np.ndarray) -> None:
        worst = float(field.max())
        if worst > tol:
            i, j = np.unravel_index(int(np.argmax(field)), field.shape)
            raise ValidationError(
                f"marginal check failed: {label} = {worst:.3e} > {tol:.1e} "
                f"at worst knot ({knots[i]:.6f}, {knots[j]:.6f}), index ({i}, {j})"
            )

    edge = np.zeros_like(values)
    edge[0, :] = values[0, :]
    edge[:, 0] = np.maximum(edge[:, 0], values[:, 0])
    fail("mass at the low edge", edge)

    mono = np.zeros_like(values)
    mono[1:, :] = -np.diff(values, axis=0)
    mono[:, 1:] = np.maximum(mono[:, 1:], -np.diff(values, axis=1))
    fail("monotonicity defect", mono)

    m = marginal(grid.r)
    cdf = m.cdf_array(knots)
    fail("Frechet upper-bound excess", values - np.minimum(cdf[:, None], cdf[None, :]))

    surv = m.survival_array(knots)
    fail("negative joint survival", 1.0 - values - surv[:, None] - surv[None, :])


def tt_push(grid: BivariateGrid, tol: float = 1e-6) -> BivariateGrid:
    """One application of the second-kind bivariate pushforward.

    Input and output are joint CDF lattices of couplings of the
    full-support marginal; both marginals are preserved because each
    coordinate is the univariate pushforward of that marginal.  The
    below-``lo`` strips of the integration rectangle enter in closed form;
    the lattice part uses cumulative trapezoid prefixes.
    """
    validate_f_grid(grid, tol)
    r = grid.r
    knots = grid.knots
    h = _knot_spacing(knots)
    lo = grid.lo
    m = marginal(r)
    surv = m.survival_array(knots)
    s_pow = surv ** (r - 1)
    sig = _cumtrap(s_pow, h)

    g_vals = grid.values + surv[:, None] + surv[None, :] - 1.0
    a_vals = g_vals ** (r - 1)

    ix = _cumtrap(a_vals, h, axis=1)   # integral over v at fixed x-knot
    iy = _cumtrap(a_vals, h, axis=0)   # integral over u at fixed y-knot
    jj = _cumtrap(ix, h, axis=0)       # double integral over the lattice part

    x = knots[:, None]
    y = knots[None, :]
    pushed = (
        x * y * a_vals
        - x * (lo * s_pow[:, None] + ix)
        - y * (lo * s_pow[None, :] + iy)
        + lo * lo
        + lo * sig[:, None]
        + lo * sig[None, :]
        + jj
    )
    pushed = np.clip(pushed, 0.0, 1.0)
    return BivariateGrid(knots, pushed, "F", r)


def g_from_f(grid: BivariateGrid, x: float, y: float) -> float:
    """Joint survival P(X > x, Y > y) with the boundary extension.

    On the lattice square it is ``F + S(x) + S(y) - 1``; below the support
    lower endpoint the survival saturates: 1 when both coordinates are
    below ``lo``, the univariate marginal survival when one is.
    """
    lo = grid.lo
    m = marginal(grid.r)
    if x <= lo and y <= lo:
        return 1.0
    if x <= lo:
        return float(m.survival_array(np.asarray([y]))[0])
    if y <= lo:
        return float(m.survival_array(np.asarray([x]))[0])
    sx = float(m.survival_array(np.asarray([x]))[0])
    sy = float(m.survival_array(np.asarray([y]))[0])
    return grid.value_at(x, y) + sx + sy - 1.0


def h_from_f(grid: BivariateGrid, tol: float = 1e-6) -> BivariateGrid:
    """Deviation field H = 1 - G/G0 on the lattice; zero iff product."""
    validate_f_grid(grid, tol)
    m = marginal(grid.r)
    surv = m.survival_array(grid.knots)
    g_vals = grid.values + surv[:, None] + surv[None, :] - 1.0
    g0 = np.outer(surv, surv)
    h_vals = 1.0 - g_vals / g0
    return BivariateGrid(grid.knots, h_vals, "H", grid.r)


@lru_cache(maxsize=32)
def quadrature_floor(r: int, k: int) -> float:
    """Scale of quadrature noise: sup|H| after one push of the exact product."""
    return h_from_f(tt_push(product_grid(r, k))).sup_norm()


# ---------------------------------------------------------------------------
# Diagonal iteration diagnostic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagonalIteration:
    """Trace of sup|H_n| along the bivariate iteration, plus the verdict."""

    trace: tuple[float, ...]
    grid: BivariateGrid
    verdict: str  # "converged-to-product" | "stalled" | "iteration-budget-exhausted"
    tol: float

    @property
    def converged(self) -> bool:
        return self.verdict == "converged-to-product"

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    def trace_csv_text(self) -> str:
        lines = ["iter,sup_h"]
        lines.extend(f"{i},{format_value(s)}" for i, s in enumerate(self.trace))
        return "\n".join(lines) + "\n"


def iterate_diagonal(
    r: int,
    k: int,
    max_iters: int = 200,
    tol: float = 1e-3,
    start: str = "diagonal",
) -> DiagonalIteration:
    """Iterate the bivariate push from a start coupling, tracking sup|H_n|.

    Terminates when sup|H| drops below ``tol`` (verdict
    ``converged-to-product``), when the trace stalls at the quadrature
    floor (successive change below ``tol / 100``), or when the iteration
    budget runs out.  A sup|H| above 1 means the iterates left the region
    where the field is meaningful, which the operator cannot cause on
    valid input, so it raises.
    """
    if k < MIN_GRID_SIZE:
        raise ValidationError(f"grid size k must be >= {MIN_GRID_SIZE}, got {k}")
    if tol <= 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    if max_iters < 0:
        raise DomainError(f"iteration budget must be nonnegative, got {max_iters}")
    if start == "diagonal":
        grid = diagonal_grid(r, k)
    elif start == "product":
        grid = product_grid(r, k)
    else:
        raise ValidationError(f"start must be 'diagonal' or 'product', got {start!r}")

    trace = [h_from_f(grid).sup_norm()]
    verdict = "iteration-budget-exhausted"
    while True:
        if trace[-1] < tol:
            verdict = "converged-to-product"
            break
        if len(trace) - 1 >= max_iters:
            break
        grid = tt_push(grid)
        sup_h = h_from_f(grid).sup_norm()
        if not np.isfinite(sup_h) or sup_h > 1.0 + _DIVERGENCE_TOL:
            raise NumericalInstabilityError(
                f"sup|H| = {sup_h} after {len(trace)} iterations; iterates left [-1, 1]"
            )
        previous = trace[-1]
        trace.append(sup_h)
        if sup_h < tol:
            verdict = "converged-to-product"
            break
        if abs(sup_h - previous) < 0.01 * tol:
            verdict = "stalled"
            break
    return DiagonalIteration(tuple(trace), grid, verdict, tol)


# ---------------------------------------------------------------------------
# Contraction certificate
# ---------------------------------------------------------------------------


def _cell_integrals(k_cells: int) -> np.ndarray:
    """Exact integrals of 1/s^2 over each cell of the equal-length partition."""
    edges = np.linspace(0.5, 1.0, k_cells + 1)
    return 1.0 / edges[:-1] - 1.0 / edges[1:]


def partition_cell_bounds(k_cells: int, r: int = 3) -> np.ndarray:
    """Exact closed-form bound for every partition cell (degree 3 only)."""
    if r != 3:
        raise ValidationError(
            "the contraction certificate is specific to the degree-3 recursion"
        )
    if k_cells < 1:
        raise DomainError(f"cell count must be positive, got {k_cells}")
    cell = _cell_integrals(k_cells)
    return np.outer(cell, cell) + 2.0 * cell[:, None] + 2.0 * cell[None, :]


def partition_check(k_cells: int, r: int = 3) -> float:
    """Maximum cell bound over the equal-length partition.

    The bound ``I_i I_j + 2 I_i + 2 I_j`` is increasing in both cell
    integrals and ``I_i`` decreases along the partition, so the maximum
    sits at the corner cell touching 1/2; the evaluation is exact
    antiderivative arithmetic, no quadrature.
    """
    if r != 3:
        raise ValidationError(
            "the contraction certificate is specific to the degree-3 recursion"
        )
    if k_cells < 1:
        raise DomainError(f"cell count must be positive, got {k_cells}")
    corner = float(_cell_integrals(k_cells)[0])
    return corner * corner + 4.0 * corner


def find_min_partition(eps: float, *, allow_noncontractive: bool = False) -> int:
    """Least cell count whose maximum cell bound drops below ``eps``.

    The contraction argument needs ``0 < eps < 1/3``; other positive
    epsilons are only allowed with the explicit flag (and a warning),
    since they certify nothing.
    """
    if not 0.0 < eps < 1.0 / 3.0:
        if eps > 0.0 and allow_noncontractive:
            warnings.warn(
                f"eps = {eps} is outside (0, 1/3); the result is not a contraction certificate",
                RuntimeWarning,
                stacklevel=2,
            )
        else:
            raise DomainError(
                f"eps must lie in (0, 1/3) for the contraction certificate, got {eps}"
            )
    if partition_check(1) < eps:
        return 1
    lo_k, hi_k = 1, 2
    while partition_check(hi_k) >= eps:
        lo_k = hi_k
        hi_k *= 2
        if hi_k > 1 << 40:
            raise NumericalInstabilityError("cell-count search failed to terminate")
    while hi_k - lo_k > 1:
        mid = (lo_k + hi_k) // 2
        if partition_check(mid) < eps:
            hi_k = mid
        else:
            lo_k = mid
    return hi_k


# ---------------------------------------------------------------------------
# Portable grid files: JSON header + CSV matrix payload
# ---------------------------------------------------------------------------


def write_grid(grid: BivariateGrid, base_path: "str | Path") -> tuple[Path, Path]:
    """Write ``<base>.json`` (header) and ``<base>.csv`` (row-major payload)."""
    base = Path(base_path)
    header = {"k": grid.k, "r": grid.r, "role": grid.role}
    json_path = base.with_suffix(".json")
    csv_path = base.with_suffix(".csv")
    json_path.write_text(json.dumps(header, sort_keys=True) + "\n", encoding="utf-8")
    lines = [",".join(format_value(v) for v in row) for row in grid.values]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return json_path, csv_path


def read_grid(base_path: "str | Path") -> BivariateGrid:
    base = Path(base_path)
    header = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    rows = [
        [float(cell) for cell in line.split(",")]
        for line in base.with_suffix(".csv").read_text(encoding="utf-8").splitlines()
        if line
    ]
    values = np.asarray(rows, dtype=float)
    knots = uniform_knots(int(header["r"]), int(header["k"]))
    return BivariateGrid(knots, values, str(header["role"]), int(header["r"]))
